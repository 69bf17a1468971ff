"""Command-line interface: simulate, learn, infer, plan, experiment,
sensitivity, scalability, report. All outputs are deterministic per seed
(wall-clock timings in the scalability table and runtime sidecars excepted).
"""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import click
import numpy as np

from . import experiments, reporting
from .graphs import StructureLearner, ground_truth_model
from .inference import CausalInferenceEngine
from .pipeline import build_dataset
from .planning import DecisionPolicy, HeuristicWeights, estimate_arcs, plan_path, decide_task
from .simulation import SimParams, TimeSeriesLog, generate_training_log
from .world import load_scenario, load_scenario_file


def _load_scenario_arg(name_or_path: str):
    path = Path(name_or_path)
    if path.exists():
        return load_scenario_file(path)
    bundled = resources.files("causalnav.scenarios").joinpath(f"{name_or_path}.yaml")
    if bundled.is_file():
        return load_scenario(bundled.read_text(encoding="utf-8"))
    raise click.ClickException(f"scenario {name_or_path!r}: no such file or bundled scenario")


def _sim_params(profile: str, workers: int | None) -> SimParams:
    n = workers if workers is not None else (20 if profile == "desk" else 50)
    return SimParams(n_workers=n)


def _parse_assignments(pairs: tuple[str, ...]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.ClickException(f"expected NAME=VALUE, got {pair!r}")
        name, value = pair.split("=", 1)
        try:
            out[name] = float(value)
        except ValueError:
            out[name] = value
    return out


@click.group()
def main():
    """Causality-aware warehouse robot planning toolkit."""


@main.command()
@click.option("--scenario", default="desk20", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--slot-duration", type=float, default=600.0, show_default=True,
              help="Simulated seconds per slot in the training run.")
@click.option("--workers", type=int, default=None, help="Worker count override.")
@click.option("--profile", type=click.Choice(["desk", "full"]), default="desk", show_default=True)
@click.option("--out", type=click.Path(), default=".", show_default=True)
def simulate(scenario, seed, slot_duration, workers, profile, out):
    """Generate a training time-series log for SCENARIO."""
    graph, schedule = _load_scenario_arg(scenario)
    params = _sim_params(profile, workers)
    log = generate_training_log(graph, schedule, params, seed, slot_duration_s=slot_duration)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{graph.name}_{seed}.csv"
    path.write_text(log.to_csv(), encoding="utf-8")
    click.echo(f"wrote {len(log)} rows to {path}")


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--scenario", default="desk20", show_default=True)
@click.option("--rate", type=float, default=None,
              help="Subsample rate in Hz; defaults to the largest alias-free decimation.")
@click.option("--max-bins", type=int, default=8, show_default=True)
@click.option("--structure", type=click.Choice(["known", "discovered"]), default="known",
              show_default=True, help="Use the known structure or run discovery.")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--out", type=click.Path(), default="model.json", show_default=True)
def learn(log_path, scenario, rate, max_bins, structure, alpha, out):
    """Pipeline + structure + MLE fit; writes a single model file."""
    graph, _ = _load_scenario_arg(scenario)
    log = TimeSeriesLog.from_csv(Path(log_path).read_text(encoding="utf-8"))
    dataset = build_dataset(log, graph, candidate_rate_hz=rate, max_bins=max_bins,
                            source=str(log_path))
    if structure == "known":
        dag = ground_truth_model()
    else:
        dag = StructureLearner(alpha=alpha).fit(dataset).graph_
        click.echo("discovered edges: " + ", ".join(e.label() for e in sorted(dag.edges)))
    engine = CausalInferenceEngine(dag=dag).fit(dataset)
    engine.save(out)
    click.echo(f"wrote model ({dataset.n_rows} rows, period {dataset.sample_period_s:g}s, "
               f"{engine.fallback_rows_} uniform-fallback rows) to {out}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--target", required=True)
@click.option("--do", "do_pairs", multiple=True, help="Intervention NAME=VALUE (repeatable).")
@click.option("--given", "given_pairs", multiple=True, help="Condition NAME=VALUE (repeatable).")
def infer(model_path, target, do_pairs, given_pairs):
    """One-off interventional/conditional query against a model file."""
    engine = CausalInferenceEngine.load(model_path)
    dist = engine.do_query(_parse_assignments(do_pairs), _parse_assignments(given_pairs), target)
    click.echo(json.dumps({"target": target, "distribution": [round(p, 9) for p in dist]}))
    try:
        expectation = engine.expected_value(dist, target)
        click.echo(f"expected {target} = {expectation:.9g}")
    except KeyError:
        pass  # categorical target: distribution only


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--scenario", default="desk20", show_default=True)
@click.option("--start", required=True)
@click.option("--goal", required=True)
@click.option("--slot", required=True)
@click.option("--battery", type=float, default=100.0, show_default=True)
@click.option("--velocity", type=float, default=0.5, show_default=True)
@click.option("--weights", default="1,10,5", show_default=True)
@click.option("--b-min", type=float, default=20.0, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output only.")
def plan(model_path, scenario, start, goal, slot, battery, velocity, weights, b_min, as_json):
    """Plan a route and print the go/no-go verdict."""
    graph, _ = _load_scenario_arg(scenario)
    engine = CausalInferenceEngine.load(model_path)
    ld, lD, lL = (float(x) for x in weights.split(","))
    estimates = estimate_arcs(graph, engine, slot, charging=0, velocity=velocity)
    path = plan_path(graph, start, goal, estimates, HeuristicWeights(ld, lD, lL))
    decision = decide_task(path, battery, DecisionPolicy(b_min_pct=b_min, query_velocity=velocity))
    payload = {
        "route": list(path.waypoints),
        "arcs": [
            {"from": a.arc[0], "to": a.arc[1], "delta_m": round(a.delta_m, 6),
             "d_hat": round(a.d_hat_arrival, 6), "battery_cost_pct": round(a.battery_cost_pct, 9)}
            for a in path.arcs
        ],
        "total_cost": round(path.total_cost, 9),
        "length_m": round(path.length_m, 6),
        "battery_cost_pct": round(path.battery_cost_pct, 9),
        "predicted_remaining_pct": round(decision.predicted_remaining_pct, 9),
        "verdict": "proceed" if decision.proceed else "abort",
    }
    click.echo(json.dumps(payload))
    if not as_json:
        click.echo(f"route: {' -> '.join(path.waypoints)}")
        for a in path.arcs:
            click.echo(f"  {a.arc[0]:>10} -> {a.arc[1]:<10} delta={a.delta_m:6.2f} m  "
                       f"D^={a.d_hat_arrival:7.4f}  battery={a.battery_cost_pct:.5f} %")
        click.echo(f"C_L = {path.battery_cost_pct:.5f} %; battery {battery:.2f} % -> "
                   f"{decision.predicted_remaining_pct:.2f} %  [{payload['verdict'].upper()}]")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--scenario", default="desk20", show_default=True)
@click.option("--seeds", default="1,2,3,4,5", show_default=True)
@click.option("--approaches", default="all", show_default=True,
              help="Comma list from: baseline, causal_routing, refusal_only, full_causal.")
@click.option("--slots", default=None, help="Comma list of slot ids (default: all).")
@click.option("--profile", type=click.Choice(["desk", "full"]), default="desk", show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(), default="results", show_default=True)
def experiment(model_path, scenario, seeds, approaches, slots, profile, workers, out):
    """Run the four-way ablation and write outcome CSVs plus metrics."""
    graph, schedule = _load_scenario_arg(scenario)
    engine = CausalInferenceEngine.load(model_path)
    params = _sim_params(profile, workers)
    seed_list = [int(s) for s in seeds.split(",")]
    names = list(experiments.APPROACHES) if approaches == "all" else approaches.split(",")
    slot_list = slots.split(",") if slots else None

    outcomes, stats = experiments.run_ablation(graph, schedule, params, engine, seed_list,
                                               approaches=names, slots=slot_list)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in names:
        (out_dir / f"outcomes_{name}.csv").write_text(reporting.outcomes_csv(outcomes[name]),
                                                      encoding="utf-8")
    report = experiments.compute_metrics(outcomes, stats)
    (out_dir / "metrics.csv").write_text(reporting.metrics_csv(report), encoding="utf-8")
    (out_dir / "report.md").write_text(reporting.metrics_markdown(report), encoding="utf-8")
    runtime = {
        name: {"mean_query_time_s": report.per_approach[name].mean_query_time_s,
               "mean_expansions": report.per_approach[name].mean_expansions}
        for name in names
    }
    (out_dir / "runtime.json").write_text(json.dumps(runtime, indent=1), encoding="utf-8")
    for name in names:
        m = report.per_approach[name]
        click.echo(f"{name:>15}: success {100 * m.success_rate:5.1f} %  "
                   f"failD {m.failures_d:3d}  failL {m.failures_l:3d}  refused {m.refused:3d}  "
                   f"collisions {m.collisions}")
    click.echo(f"wrote results to {out_dir}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--scenario", default="desk20", show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--slots", default=None, help="Two slot ids (default: first two).")
@click.option("--tasks", type=int, default=5, show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(), default="sensitivity", show_default=True)
def sensitivity(model_path, scenario, seed, slots, tasks, workers, out):
    """27-configuration heuristic-weight sweep on representative tasks."""
    graph, schedule = _load_scenario_arg(scenario)
    engine = CausalInferenceEngine.load(model_path)
    params = _sim_params("desk", workers)
    slot_list = slots.split(",") if slots else None
    rows = experiments.sensitivity_sweep(graph, schedule, params, engine, seed,
                                         slots=slot_list, tasks_per_slot=tasks)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.csv").write_text(reporting.sweep_csv(rows), encoding="utf-8")
    (out_dir / "sweep.md").write_text(reporting.sweep_markdown(rows), encoding="utf-8")
    kept = [r for r in rows if not r.excluded]
    click.echo(f"{len(rows)} configurations, {len(kept)} kept after filtering; "
               f"default (1, 10, 5) {'kept' if any(r.is_default and not r.excluded for r in rows) else 'EXCLUDED'}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--scenario", default="warehouse73", show_default=True)
@click.option("--sizes", default="10,20,30,40,50,60,70", show_default=True)
@click.option("--repeats", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default="scalability.csv", show_default=True)
def scalability(model_path, scenario, sizes, repeats, seed, out):
    """Query-time benchmark over growing subgraphs (timings are wall-clock)."""
    graph, _ = _load_scenario_arg(scenario)
    engine = CausalInferenceEngine.load(model_path)
    size_list = [int(s) for s in sizes.split(",")]
    result = experiments.scalability_bench(graph, engine, size_list, repeats, seed)
    Path(out).write_text(reporting.scalability_csv(result), encoding="utf-8")
    for r in result.rows:
        std = f" +- {r.std_s * 1e3:.3f}" if r.std_s is not None else ""
        click.echo(f"  {r.size:3d} waypoints: {r.mean_s * 1e3:.3f}{std} ms")
    click.echo(f"linear fit R^2 = {result.r_squared:.4f}; wrote {out}")


@main.command()
@click.option("--experiment-dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), default=None, help="Defaults to the experiment dir.")
def report(experiment_dir, out):
    """Re-emit Markdown + CSV summaries from stored outcome CSVs."""
    exp_dir = Path(experiment_dir)
    out_dir = Path(out) if out else exp_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    outcomes, stats = {}, {}
    for path in sorted(exp_dir.glob("outcomes_*.csv")):
        name = path.stem[len("outcomes_"):]
        rows = []
        lines = path.read_text(encoding="utf-8").strip().splitlines()
        for line in lines[1:]:
            c = line.split(",")
            rows.append(experiments.TaskOutcome(
                task_id=c[0], slot=c[1], status=c[2], active_s=float(c[3]), stalled_s=float(c[4]),
                planned_m=float(c[5]), travelled_m=float(c[6]), battery_spent_pct=float(c[7]),
                collisions=int(c[8]), min_person_dist_m=float(c[9]), expansions=int(c[10]),
            ))
        outcomes[name] = rows
        st = experiments.RunStats()
        st.proxemics_samples = [r.min_person_dist_m for r in rows if math.isfinite(r.min_person_dist_m)]
        stats[name] = st
    if not outcomes:
        raise click.ClickException(f"no outcomes_*.csv files under {exp_dir}")
    rep = experiments.compute_metrics(outcomes, stats)
    (out_dir / "metrics.csv").write_text(reporting.metrics_csv(rep), encoding="utf-8")
    (out_dir / "report.md").write_text(reporting.metrics_markdown(rep), encoding="utf-8")
    click.echo(f"wrote metrics.csv and report.md to {out_dir}")


if __name__ == "__main__":
    main()
