"""Ablation harness: four planner configurations over the slot schedule.

Every run is reproducible from (scenario, seed): worker goal streams, task
goal draws and obstacle draws all come from generators keyed by the seed and
the slot index only, so the four approaches face bit-identical crowds and
obstacle luck. Battery follows the evaluation protocol: a mid-task drop below
the threshold fails the task and resets the battery; a drop after completion
still counts as a success; refused tasks reset the battery as if the robot
had docked.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .inference import CausalInferenceEngine
from .planning import (ArcEstimates, DecisionPolicy, HeuristicWeights, PathPlan,
                       decide_task, estimate_arcs, plan_path)
from .simulation import SimParams, World, WorkerCrowd, rng_for
from .world import ScenarioSchedule, TimeSlot, WaypointGraph, coverage_route

APPROACHES = ("baseline", "causal_routing", "refusal_only", "full_causal")

STATUS_SUCCESS = "success"
STATUS_FAILURE_D = "failure_D"   # deadline exceeded (congestion)
STATUS_FAILURE_L = "failure_L"   # battery crossed the threshold mid-task
STATUS_REFUSED = "refused"


@dataclass(frozen=True)
class ApproachConfig:
    name: str
    routing: str                  # "shortest" | "causal"
    refusal: bool
    weights: HeuristicWeights = field(default_factory=HeuristicWeights)
    policy: DecisionPolicy = field(default_factory=DecisionPolicy)

    def planning_weights(self) -> HeuristicWeights:
        if self.routing == "shortest":
            return HeuristicWeights(1.0, 0.0, 0.0)
        return self.weights


def approach_registry(weights: HeuristicWeights | None = None,
                      policy: DecisionPolicy | None = None) -> dict[str, ApproachConfig]:
    w = weights or HeuristicWeights()
    p = policy or DecisionPolicy()
    return {
        "baseline": ApproachConfig("baseline", "shortest", False, w, p),
        "causal_routing": ApproachConfig("causal_routing", "causal", False, w, p),
        "refusal_only": ApproachConfig("refusal_only", "shortest", True, w, p),
        "full_causal": ApproachConfig("full_causal", "causal", True, w, p),
    }


@dataclass(frozen=True)
class TaskOutcome:
    task_id: str
    slot: str
    status: str
    active_s: float
    stalled_s: float
    planned_m: float
    travelled_m: float
    battery_spent_pct: float
    collisions: int
    min_person_dist_m: float
    expansions: int = 0

    @property
    def elapsed_s(self) -> float:
        return self.active_s + self.stalled_s

    @property
    def extra_m(self) -> float:
        return max(0.0, self.travelled_m - self.planned_m)


@dataclass
class RunStats:
    query_time_s: list[float] = field(default_factory=list)
    expansions: list[int] = field(default_factory=list)
    proxemics_samples: list[float] = field(default_factory=list)
    total_drain_pct: float = 0.0
    collisions: int = 0


def _task_goals(slot: TimeSlot, graph: WaypointGraph, seed: int, slot_idx: int) -> list[str]:
    """Pre-drawn goal stream; identical for every approach under one seed."""
    rng = rng_for(seed, 404, slot_idx)
    if slot.template.kind == "coverage":
        return [b for _, b in coverage_route(graph)][: slot.task_count]
    goals = []
    for i in range(slot.task_count):
        pool = slot.template.sources if i % 2 == 0 else slot.template.targets
        goals.append(pool[int(rng.integers(len(pool)))])
    return goals


def _obstacle_draws(slot: TimeSlot, seed: int, slot_idx: int) -> list[tuple[float, float]]:
    rng = rng_for(seed, 505, slot_idx)
    return [(float(rng.uniform()), float(rng.uniform())) for _ in range(slot.task_count)]


def run_experiment(graph: WaypointGraph, schedule: ScenarioSchedule, params: SimParams,
                   engine: CausalInferenceEngine | None, approach: ApproachConfig,
                   seed: int, slots: list[str] | None = None) -> tuple[list[TaskOutcome], RunStats]:
    """Execute the approach over the scheduled slots; returns outcomes and run stats."""
    if approach.routing == "causal" or approach.refusal:
        if engine is None:
            raise ValueError(f"approach {approach.name!r} requires a fitted model")
    outcomes: list[TaskOutcome] = []
    stats = RunStats()
    wanted = set(slots) if slots else None

    for slot_idx, slot in enumerate(schedule.slots):
        if wanted and slot.id not in wanted:
            continue
        crowd = WorkerCrowd(graph, slot, params, seed_key=(seed, slot_idx))
        world = World(graph, params, crowd, slot,
                      battery=slot.initial_battery, start_wid=graph.charging_station)
        goals = _task_goals(slot, graph, seed, slot_idx)
        draws = _obstacle_draws(slot, seed, slot_idx)

        t_query = time.perf_counter()
        if engine is not None:
            estimates = estimate_arcs(graph, engine, slot.id, charging=0,
                                      velocity=approach.policy.query_velocity)
        else:
            estimates = ArcEstimates.zero(graph, approach.policy.query_velocity)
        stats.query_time_s.append(time.perf_counter() - t_query)
        weights = approach.planning_weights()

        for task_idx, goal in enumerate(goals):
            task_id = f"{slot.id}-{task_idx:04d}"
            start = world.robot_wid
            if start == goal:
                outcomes.append(TaskOutcome(task_id, slot.id, STATUS_SUCCESS,
                                            0.0, 0.0, 0.0, 0.0, 0.0, 0, math.inf))
                continue
            plan = plan_path(graph, start, goal, estimates, weights)
            stats.expansions.append(plan.expansions)

            if approach.refusal:
                decision = decide_task(plan, world.battery, approach.policy)
                if not decision.proceed:
                    world.battery = 100.0  # as if the robot had docked and recharged
                    outcomes.append(TaskOutcome(task_id, slot.id, STATUS_REFUSED,
                                                0.0, 0.0, plan.length_m, 0.0, 0.0, 0, math.inf))
                    continue

            u_obs, u_arc = draws[task_idx]
            obstacle_arc = None
            if u_obs < params.obstacle_probability and len(plan.waypoints) > 1:
                obstacle_arc = int(u_arc * (len(plan.waypoints) - 1))
            world.set_plan(plan.waypoints, obstacle_arc)

            active = stalled = travelled = drained = 0.0
            collisions0 = world.collisions.total
            min_dist = math.inf
            status = None
            deadline_steps = int(round(params.deadline_s / params.battery.dt))
            for _ in range(deadline_steps):
                row = world.step(approach.policy.query_velocity)
                travelled += row["moved"]
                drained += max(0.0, -row["L"])
                stats.total_drain_pct += max(0.0, -row["L"])
                if row["V"] > 0:
                    active += params.battery.dt
                else:
                    stalled += params.battery.dt
                if math.isfinite(row["min_person_dist"]):
                    min_dist = min(min_dist, row["min_person_dist"])
                    stats.proxemics_samples.append(row["min_person_dist"])
                if world.battery < approach.policy.b_min_pct:
                    status = STATUS_FAILURE_L
                    break
                if world.at_goal:
                    status = STATUS_SUCCESS
                    break
            if status is None:
                status = STATUS_FAILURE_D

            if status != STATUS_SUCCESS:
                # teleport to the next task's starting position
                world.robot_pos = np.array(graph.waypoints[goal].position, dtype=float)
                world.robot_wid = goal
                world.segments = []
                world.seg_idx = 0
                world.obstacle = None
            if status == STATUS_FAILURE_L or world.battery < approach.policy.b_min_pct:
                world.battery = 100.0
            outcomes.append(TaskOutcome(
                task_id, slot.id, status, round(active, 9), round(stalled, 9),
                plan.length_m, travelled, drained,
                world.collisions.total - collisions0, min_dist, plan.expansions,
            ))
        stats.collisions += world.collisions.total
    return outcomes, stats


# --- metrics ---

@dataclass
class ApproachMetrics:
    n_tasks: int
    successes: int
    failures_d: int
    failures_l: int
    refused: int
    planned_km: float
    extra_km: float
    wasted_km: float
    active_h: float
    stalled_h: float
    wasted_h: float
    effective_cycles: float
    wasted_cycles: float
    collisions: int
    proxemics_quartiles: tuple[float, float, float]  # q1, median, q3
    min_distance_m: float
    mean_query_time_s: float
    mean_expansions: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.n_tasks if self.n_tasks else 0.0


@dataclass
class MetricsReport:
    per_approach: dict[str, ApproachMetrics]
    tests_vs_baseline: dict[str, dict[str, object]]


def summarize_outcomes(outcomes: list[TaskOutcome], stats: RunStats) -> ApproachMetrics:
    succ = [o for o in outcomes if o.status == STATUS_SUCCESS]
    failed = [o for o in outcomes if o.status in (STATUS_FAILURE_D, STATUS_FAILURE_L)]
    prox = [d for d in stats.proxemics_samples if math.isfinite(d)]
    q1, med, q3 = (np.percentile(prox, [25, 50, 75]) if prox else (math.nan,) * 3)
    return ApproachMetrics(
        n_tasks=len(outcomes),
        successes=len(succ),
        failures_d=sum(1 for o in outcomes if o.status == STATUS_FAILURE_D),
        failures_l=sum(1 for o in outcomes if o.status == STATUS_FAILURE_L),
        refused=sum(1 for o in outcomes if o.status == STATUS_REFUSED),
        planned_km=sum(o.planned_m for o in succ) / 1000.0,
        extra_km=sum(o.extra_m for o in succ) / 1000.0,
        wasted_km=sum(o.travelled_m for o in failed) / 1000.0,
        active_h=sum(o.active_s for o in succ) / 3600.0,
        stalled_h=sum(o.stalled_s for o in succ) / 3600.0,
        wasted_h=sum(o.elapsed_s for o in failed) / 3600.0,
        effective_cycles=sum(o.battery_spent_pct for o in succ) / 100.0,
        wasted_cycles=sum(o.battery_spent_pct for o in failed) / 100.0,
        collisions=sum(o.collisions for o in outcomes),
        proxemics_quartiles=(float(q1), float(med), float(q3)),
        min_distance_m=float(min(prox)) if prox else math.nan,
        mean_query_time_s=float(np.mean(stats.query_time_s)) if stats.query_time_s else 0.0,
        mean_expansions=float(np.mean(stats.expansions)) if stats.expansions else 0.0,
    )


def compute_metrics(outcomes_by_approach: dict[str, list[TaskOutcome]],
                    stats_by_approach: dict[str, RunStats]) -> MetricsReport:
    """Aggregate per approach and test every approach against the baseline."""
    from .stats import DegenerateDataError, stat_test

    per = {
        name: summarize_outcomes(outcomes_by_approach[name], stats_by_approach[name])
        for name in outcomes_by_approach
    }
    tests: dict[str, dict[str, object]] = {}
    if "baseline" in per:
        base = per["baseline"]
        base_out = outcomes_by_approach["baseline"]
        base_prox = [d for d in stats_by_approach["baseline"].proxemics_samples if math.isfinite(d)]
        for name, m in per.items():
            if name == "baseline":
                continue
            entry: dict[str, object] = {}
            try:
                entry["success_chi_square"] = stat_test(
                    "chi_square",
                    (m.successes, m.n_tasks - m.successes),
                    (base.successes, base.n_tasks - base.successes),
                )
            except DegenerateDataError as exc:
                entry["success_chi_square"] = str(exc)
            coll_a = [o.collisions for o in outcomes_by_approach[name]]
            coll_b = [o.collisions for o in base_out]
            try:
                entry["collisions_negative_binomial"] = stat_test("negative_binomial", coll_a, coll_b)
            except DegenerateDataError as exc:
                entry["collisions_negative_binomial"] = str(exc)
            prox_a = [d for d in stats_by_approach[name].proxemics_samples if math.isfinite(d)]
            if prox_a and base_prox:
                entry["proxemics_mann_whitney"] = stat_test("mann_whitney_u", prox_a, base_prox)
            times_a = [o.elapsed_s for o in outcomes_by_approach[name] if o.status == STATUS_SUCCESS]
            times_b = [o.elapsed_s for o in base_out if o.status == STATUS_SUCCESS]
            if times_a and times_b:
                entry["task_time_mann_whitney"] = stat_test("mann_whitney_u", times_a, times_b)
            tests[name] = entry
    return MetricsReport(per_approach=per, tests_vs_baseline=tests)


def run_ablation(graph: WaypointGraph, schedule: ScenarioSchedule, params: SimParams,
                 engine: CausalInferenceEngine, seeds: list[int],
                 approaches: list[str] | None = None, slots: list[str] | None = None,
                 weights: HeuristicWeights | None = None,
                 policy: DecisionPolicy | None = None,
                 ) -> tuple[dict[str, list[TaskOutcome]], dict[str, RunStats]]:
    """All (approach x seed) runs, concatenating outcomes per approach."""
    registry = approach_registry(weights, policy)
    names = approaches or list(APPROACHES)
    outcomes: dict[str, list[TaskOutcome]] = {n: [] for n in names}
    stats: dict[str, RunStats] = {n: RunStats() for n in names}
    for name in names:
        cfg = registry[name]
        model = None if (cfg.routing == "shortest" and not cfg.refusal) else engine
        for seed in seeds:
            out, st = run_experiment(graph, schedule, params, model, cfg, seed, slots=slots)
            outcomes[name].extend(out)
            stats[name].query_time_s.extend(st.query_time_s)
            stats[name].expansions.extend(st.expansions)
            stats[name].proxemics_samples.extend(st.proxemics_samples)
            stats[name].total_drain_pct += st.total_drain_pct
            stats[name].collisions += st.collisions
    return outcomes, stats


# --- sensitivity sweep (Appendix-style weight grid) ---

DEFAULT_WEIGHT_GRID = tuple(
    (ld, lD, lL)
    for ld in (0.1, 1.0, 10.0)
    for lD in (1.0, 10.0, 100.0)
    for lL in (0.5, 5.0, 50.0)
)
DEFAULT_WEIGHTS = (1.0, 10.0, 5.0)


@dataclass(frozen=True)
class SweepRow:
    weights: tuple[float, float, float]
    success_pct: float
    collisions: int
    total_h: float
    active_pct: float
    stalled_pct: float
    wasted_pct: float
    total_km: float
    planned_pct: float
    extra_pct: float
    wasted_km_pct: float
    cycles: float
    effective_pct: float
    wasted_batt_pct: float
    median_dist_m: float
    q1_dist_m: float
    q3_dist_m: float
    min_dist_m: float
    excluded: bool
    is_default: bool


def sensitivity_sweep(graph: WaypointGraph, schedule: ScenarioSchedule, params: SimParams,
                      engine: CausalInferenceEngine, seed: int,
                      grid=DEFAULT_WEIGHT_GRID, slots: list[str] | None = None,
                      tasks_per_slot: int = 5) -> list[SweepRow]:
    """Run each weight configuration on a few representative delivery tasks.

    Configurations with any collision or below-100% success are flagged as
    excluded; survivors form the ranked table and the shipped default is
    marked.
    """
    sweep_slots = slots or [s.id for s in schedule.slots[:2]]
    trimmed = ScenarioSchedule(slots=tuple(
        replace(s, task_count=min(tasks_per_slot, s.task_count))
        for s in schedule.slots if s.id in sweep_slots
    ))
    rows = []
    for ld, lD, lL in grid:
        cfg = ApproachConfig("sweep", "causal", True,
                             HeuristicWeights(ld, lD, lL), DecisionPolicy())
        outcomes, stats = run_experiment(graph, trimmed, params, engine, cfg, seed)
        m = summarize_outcomes(outcomes, stats)
        executed = [o for o in outcomes if o.status != STATUS_REFUSED]
        total_h = sum(o.elapsed_s for o in executed) / 3600.0
        total_km = sum(o.travelled_m for o in executed) / 1000.0
        cycles = m.effective_cycles + m.wasted_cycles
        pct = lambda part, whole: 100.0 * part / whole if whole > 0 else 0.0
        q1, med, q3 = m.proxemics_quartiles
        rows.append(SweepRow(
            weights=(ld, lD, lL),
            success_pct=100.0 * m.success_rate,
            collisions=m.collisions,
            total_h=total_h,
            active_pct=pct(m.active_h, total_h),
            stalled_pct=pct(m.stalled_h, total_h),
            wasted_pct=pct(m.wasted_h, total_h),
            total_km=total_km,
            planned_pct=pct(m.planned_km, total_km),
            extra_pct=pct(m.extra_km, total_km),
            wasted_km_pct=pct(m.wasted_km, total_km),
            cycles=cycles,
            effective_pct=pct(m.effective_cycles, cycles),
            wasted_batt_pct=pct(m.wasted_cycles, cycles),
            median_dist_m=med, q1_dist_m=q1, q3_dist_m=q3, min_dist_m=m.min_distance_m,
            excluded=(m.collisions > 0 or m.success_rate < 1.0),
            is_default=(ld, lD, lL) == DEFAULT_WEIGHTS,
        ))
    return rows


# --- scalability benchmark ---

@dataclass(frozen=True)
class ScalabilityRow:
    size: int
    repeats: int
    mean_s: float
    std_s: float | None


@dataclass(frozen=True)
class ScalabilityResult:
    rows: tuple[ScalabilityRow, ...]
    slope: float
    intercept: float
    r_squared: float


def _connected_subgraph(graph: WaypointGraph, size: int) -> WaypointGraph:
    """Breadth-first prefix of the waypoint set; induced arcs keep it connected."""
    root = min(graph.waypoints)
    order = [root]
    seen = {root}
    queue = [root]
    while queue and len(order) < size:
        node = queue.pop(0)
        for n in graph.neighbours(node):
            if n not in seen:
                seen.add(n)
                order.append(n)
                queue.append(n)
                if len(order) >= size:
                    break
    keep = set(order[:size])
    wps = {w: graph.waypoints[w] for w in keep}
    arcs = tuple((a, b) for a, b in graph.arcs if a in keep and b in keep)
    charging = graph.charging_station if graph.charging_station in keep else min(keep)
    return WaypointGraph(waypoints=wps, arcs=arcs, goal_stations=(), charging_station=charging,
                         name=f"{graph.name}[{size}]")


def scalability_bench(graph: WaypointGraph, engine: CausalInferenceEngine,
                      sizes: list[int], repeats: int, seed: int = 0) -> ScalabilityResult:
    """Time the full arc-estimation query on growing subgraphs.

    Each repeat re-runs the query with a randomized slot and velocity; the
    returned fit quantifies how linearly the mean time grows with size.
    """
    if sorted(sizes) != list(sizes):
        raise ValueError("sizes must be ascending")
    if sizes and sizes[-1] > len(graph.waypoints):
        raise ValueError("size exceeds the waypoint count")
    rng = rng_for(seed, 606)
    slot_ids = engine.schema_.categorical["S"]
    vmin, vmax = engine.schema_.value_range("V")
    rows = []
    for size in sizes:
        sub = _connected_subgraph(graph, size)
        times = []
        for _ in range(repeats):
            slot = slot_ids[int(rng.integers(len(slot_ids)))]
            vel = float(rng.uniform(max(vmin, 1e-6), vmax))
            t0 = time.perf_counter()
            estimate_arcs(sub, engine, slot, charging=0, velocity=vel)
            times.append(time.perf_counter() - t0)
        arr = np.array(times)
        rows.append(ScalabilityRow(size=size, repeats=repeats, mean_s=float(arr.mean()),
                                   std_s=float(arr.std(ddof=1)) if repeats > 1 else None))
    xs = np.array([r.size for r in rows], dtype=float)
    ys = np.array([r.mean_s for r in rows])
    if len(rows) >= 2:
        slope, intercept = np.polyfit(xs, ys, 1)
        pred = slope * xs + intercept
        ss_res = float(((ys - pred) ** 2).sum())
        ss_tot = float(((ys - ys.mean()) ** 2).sum())
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        slope, intercept, r2 = 0.0, float(ys[0]) if len(ys) else 0.0, 1.0
    return ScalabilityResult(rows=tuple(rows), slope=float(slope),
                             intercept=float(intercept), r_squared=r2)
