"""Markdown and CSV emission for experiment results.

Layouts mirror the benchmark's summary figures: stacked efficiency bars
(task outcomes, distance, time, battery), the safety pair (collisions,
proxemics quartiles), the runtime table and the sensitivity grid. All output
is deterministic: sorted keys, fixed float formats.
"""
from __future__ import annotations

import math

from .experiments import (ApproachMetrics, MetricsReport, ScalabilityResult, SweepRow,
                          TaskOutcome)
from .stats import StatTestResult

APPROACH_ORDER = ("baseline", "causal_routing", "refusal_only", "full_causal")


def _fmt(x: float, nd: int = 3) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "n/a"
    return f"{x:.{nd}f}"


def _pct(part: float, whole: float) -> str:
    return _fmt(100.0 * part / whole, 1) if whole > 0 else "0.0"


def outcomes_csv(outcomes: list[TaskOutcome]) -> str:
    header = ("task_id,slot,status,active_s,stalled_s,planned_m,travelled_m,"
              "battery_spent_pct,collisions,min_person_dist_m,expansions")
    lines = [header]
    for o in outcomes:
        md = "inf" if math.isinf(o.min_person_dist_m) else f"{o.min_person_dist_m:.9g}"
        lines.append(
            f"{o.task_id},{o.slot},{o.status},{o.active_s:.9g},{o.stalled_s:.9g},"
            f"{o.planned_m:.9g},{o.travelled_m:.9g},{o.battery_spent_pct:.9g},"
            f"{o.collisions},{md},{o.expansions}"
        )
    return "\n".join(lines) + "\n"


def metrics_csv(report: MetricsReport) -> str:
    header = ("approach,n_tasks,successes,failures_D,failures_L,refused,"
              "planned_km,extra_km,wasted_km,active_h,stalled_h,wasted_h,"
              "effective_cycles,wasted_cycles,collisions,prox_q1_m,prox_median_m,prox_q3_m")
    lines = [header]
    for name in sorted(report.per_approach, key=lambda n: APPROACH_ORDER.index(n) if n in APPROACH_ORDER else 99):
        m = report.per_approach[name]
        q1, med, q3 = m.proxemics_quartiles
        lines.append(
            f"{name},{m.n_tasks},{m.successes},{m.failures_d},{m.failures_l},{m.refused},"
            f"{m.planned_km:.9g},{m.extra_km:.9g},{m.wasted_km:.9g},"
            f"{m.active_h:.9g},{m.stalled_h:.9g},{m.wasted_h:.9g},"
            f"{m.effective_cycles:.9g},{m.wasted_cycles:.9g},{m.collisions},"
            f"{q1:.9g},{med:.9g},{q3:.9g}"
        )
    return "\n".join(lines) + "\n"


def _test_cell(entry) -> str:
    if isinstance(entry, StatTestResult):
        return f"stat={_fmt(entry.statistic)}, p={entry.p_value:.3g}"
    return str(entry)


def metrics_markdown(report: MetricsReport) -> str:
    names = [n for n in APPROACH_ORDER if n in report.per_approach]
    names += [n for n in sorted(report.per_approach) if n not in names]
    out = ["# Ablation results", "", "## Task outcomes", ""]
    out.append("| approach | tasks | success | failure D | failure L | refused | success % |")
    out.append("|---|---|---|---|---|---|---|")
    for n in names:
        m = report.per_approach[n]
        out.append(f"| {n} | {m.n_tasks} | {m.successes} | {m.failures_d} | {m.failures_l} "
                   f"| {m.refused} | {_pct(m.successes, m.n_tasks)} |")

    out += ["", "## Travelled distance (km)", ""]
    out.append("| approach | planned | extra | wasted | planned % | extra % | wasted % |")
    out.append("|---|---|---|---|---|---|---|")
    for n in names:
        m = report.per_approach[n]
        total = m.planned_km + m.extra_km + m.wasted_km
        out.append(f"| {n} | {_fmt(m.planned_km)} | {_fmt(m.extra_km)} | {_fmt(m.wasted_km)} "
                   f"| {_pct(m.planned_km, total)} | {_pct(m.extra_km, total)} | {_pct(m.wasted_km, total)} |")

    out += ["", "## Task time (h)", ""]
    out.append("| approach | active | stalled | wasted | active % | stalled % | wasted % |")
    out.append("|---|---|---|---|---|---|---|")
    for n in names:
        m = report.per_approach[n]
        total = m.active_h + m.stalled_h + m.wasted_h
        out.append(f"| {n} | {_fmt(m.active_h)} | {_fmt(m.stalled_h)} | {_fmt(m.wasted_h)} "
                   f"| {_pct(m.active_h, total)} | {_pct(m.stalled_h, total)} | {_pct(m.wasted_h, total)} |")

    out += ["", "## Battery usage (cycles)", ""]
    out.append("| approach | effective | wasted | effective % | wasted % |")
    out.append("|---|---|---|---|---|")
    for n in names:
        m = report.per_approach[n]
        total = m.effective_cycles + m.wasted_cycles
        out.append(f"| {n} | {_fmt(m.effective_cycles)} | {_fmt(m.wasted_cycles)} "
                   f"| {_pct(m.effective_cycles, total)} | {_pct(m.wasted_cycles, total)} |")

    out += ["", "## Safety", ""]
    out.append("| approach | collisions | min dist (m) | q1 (m) | median (m) | q3 (m) |")
    out.append("|---|---|---|---|---|---|")
    for n in names:
        m = report.per_approach[n]
        q1, med, q3 = m.proxemics_quartiles
        out.append(f"| {n} | {m.collisions} | {_fmt(m.min_distance_m, 2)} | {_fmt(q1, 2)} "
                   f"| {_fmt(med, 2)} | {_fmt(q3, 2)} |")

    out += ["", "## Runtime", ""]
    out.append("| approach | mean query time (s) | mean A* expansions |")
    out.append("|---|---|---|")
    for n in names:
        m = report.per_approach[n]
        out.append(f"| {n} | {_fmt(m.mean_query_time_s, 4)} | {_fmt(m.mean_expansions, 2)} |")

    if report.tests_vs_baseline:
        out += ["", "## Significance vs baseline", ""]
        keys = sorted({k for entry in report.tests_vs_baseline.values() for k in entry})
        out.append("| approach | " + " | ".join(keys) + " |")
        out.append("|---" * (len(keys) + 1) + "|")
        for n in names:
            if n not in report.tests_vs_baseline:
                continue
            cells = [_test_cell(report.tests_vs_baseline[n].get(k, "")) for k in keys]
            out.append(f"| {n} | " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def sweep_csv(rows: list[SweepRow]) -> str:
    header = ("lambda_delta,lambda_D,lambda_L,success_pct,collisions,total_h,active_pct,"
              "stalled_pct,wasted_pct,total_km,planned_pct,extra_pct,wasted_km_pct,"
              "cycles,effective_pct,wasted_batt_pct,median_m,q1_m,q3_m,min_m,excluded,default")
    lines = [header]
    for r in rows:
        ld, lD, lL = r.weights
        vals = [f"{ld:g}", f"{lD:g}", f"{lL:g}", f"{r.success_pct:.9g}", str(r.collisions),
                f"{r.total_h:.9g}", f"{r.active_pct:.9g}", f"{r.stalled_pct:.9g}", f"{r.wasted_pct:.9g}",
                f"{r.total_km:.9g}", f"{r.planned_pct:.9g}", f"{r.extra_pct:.9g}", f"{r.wasted_km_pct:.9g}",
                f"{r.cycles:.9g}", f"{r.effective_pct:.9g}", f"{r.wasted_batt_pct:.9g}",
                f"{r.median_dist_m:.9g}", f"{r.q1_dist_m:.9g}", f"{r.q3_dist_m:.9g}", f"{r.min_dist_m:.9g}",
                str(int(r.excluded)), str(int(r.is_default))]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def sweep_markdown(rows: list[SweepRow]) -> str:
    out = ["# Heuristic weight sensitivity", "",
           "Configurations with any collision or below-100% success are excluded.", ""]
    out.append("| weights | succ % | collis. | time h | act/stall/waste % | dist km | "
               "plan/extra/waste % | cycles | eff/waste % | median m | min m | kept |")
    out.append("|---|---|---|---|---|---|---|---|---|---|---|---|")
    for r in rows:
        tag = "**default**" if r.is_default else ("excluded" if r.excluded else "kept")
        out.append(
            f"| {r.weights} | {_fmt(r.success_pct, 1)} | {r.collisions} | {_fmt(r.total_h)} "
            f"| {_fmt(r.active_pct, 1)}/{_fmt(r.stalled_pct, 1)}/{_fmt(r.wasted_pct, 1)} "
            f"| {_fmt(r.total_km)} | {_fmt(r.planned_pct, 1)}/{_fmt(r.extra_pct, 1)}/{_fmt(r.wasted_km_pct, 1)} "
            f"| {_fmt(r.cycles)} | {_fmt(r.effective_pct, 1)}/{_fmt(r.wasted_batt_pct, 1)} "
            f"| {_fmt(r.median_dist_m, 2)} | {_fmt(r.min_dist_m, 2)} | {tag} |"
        )
    return "\n".join(out) + "\n"


def scalability_csv(result: ScalabilityResult) -> str:
    lines = ["size,repeats,mean_s,std_s"]
    for r in result.rows:
        std = f"{r.std_s:.9g}" if r.std_s is not None else ""
        lines.append(f"{r.size},{r.repeats},{r.mean_s:.9g},{std}")
    lines.append(f"# linear fit: slope={result.slope:.9g} intercept={result.intercept:.9g} "
                 f"r_squared={result.r_squared:.6f}")
    return "\n".join(lines) + "\n"
