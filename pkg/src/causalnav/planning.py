"""Cost-aware A* over the waypoint graph plus the battery-threshold decision.

Arc costs combine three weighted terms: metric length, expected people
density at the arrival waypoint, and the expected battery percentage spent
traversing the arc at the query velocity. The guide function is the weighted
straight-line distance to the goal, which never exceeds the true remaining
cost (the other terms are non-negative), so the search stays optimal. Exact
ties resolve to fewer arcs, then lexicographically smaller waypoint ids.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .inference import CausalInferenceEngine
from .world import WaypointGraph


class NoPathError(ValueError):
    pass


@dataclass(frozen=True)
class HeuristicWeights:
    lambda_delta: float = 1.0
    lambda_d: float = 10.0
    lambda_l: float = 5.0

    def __post_init__(self):
        if min(self.lambda_delta, self.lambda_d, self.lambda_l) < 0:
            raise ValueError("weights must be non-negative")
        if self.lambda_delta == self.lambda_d == self.lambda_l == 0:
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class ArcEstimate:
    arc: tuple[str, str]
    delta_m: float
    d_hat_arrival: float       # persons/m^2 at the arrival waypoint
    l_hat_pct_per_s: float     # |expected battery change| per second at the query velocity
    battery_cost_pct: float    # (delta / v) * l_hat_pct_per_s

    def __post_init__(self):
        if self.delta_m <= 0:
            raise ValueError("arc length must be positive")
        if self.battery_cost_pct < 0:
            raise ValueError("battery cost must be non-negative")


@dataclass(frozen=True)
class ArcEstimates:
    """Directed-arc estimates for one (slot, charging-state, velocity) query."""

    by_arc: dict[tuple[str, str], ArcEstimate]
    d_hat: dict[str, float]
    l_hat_pct_per_s: float
    velocity: float

    @classmethod
    def zero(cls, graph: WaypointGraph, velocity: float) -> "ArcEstimates":
        """Fallback for model-free planning: all learned terms vanish."""
        by_arc = {}
        for a, b in graph.arcs:
            delta = graph.arc_length(a, b)
            for src, dst in ((a, b), (b, a)):
                by_arc[(src, dst)] = ArcEstimate((src, dst), delta, 0.0, 0.0, 0.0)
        return cls(by_arc=by_arc, d_hat={w: 0.0 for w in graph.waypoints},
                   l_hat_pct_per_s=0.0, velocity=velocity)


def estimate_arcs(graph: WaypointGraph, engine: CausalInferenceEngine, slot_id: str,
                  charging: int, velocity: float) -> ArcEstimates:
    """Query the engine once per waypoint for density and once for battery drain.

    The battery query intervenes on velocity (confounded by obstacles); the
    density query intervenes on the time-slot and conditions on the waypoint.
    """
    vmin, vmax = engine.schema_.value_range("V")
    if not vmin <= velocity <= vmax:
        raise ValueError(f"velocity {velocity} outside the trained range [{vmin}, {vmax}]")
    l_hat = engine.query_expectation({"V": velocity}, {"C": charging}, "L")
    l_rate = abs(l_hat) / engine.sample_period_s_
    d_hat = {
        w: engine.query_expectation({"S": slot_id}, {"W": w}, "D")
        for w in sorted(graph.waypoints)
    }
    by_arc = {}
    for a, b in graph.arcs:
        delta = graph.arc_length(a, b)
        for src, dst in ((a, b), (b, a)):
            by_arc[(src, dst)] = ArcEstimate(
                arc=(src, dst), delta_m=delta, d_hat_arrival=d_hat[dst],
                l_hat_pct_per_s=l_rate, battery_cost_pct=(delta / velocity) * l_rate,
            )
    return ArcEstimates(by_arc=by_arc, d_hat=d_hat, l_hat_pct_per_s=l_rate, velocity=velocity)


@dataclass(frozen=True)
class PathPlan:
    waypoints: tuple[str, ...]
    arcs: tuple[ArcEstimate, ...]
    total_cost: float
    battery_cost_pct: float      # C_L: cumulative battery cost along the path
    length_m: float
    expansions: int = 0

    def validate(self):
        if abs(self.battery_cost_pct - sum(a.battery_cost_pct for a in self.arcs)) > 1e-9:
            raise ValueError("C_L inconsistent with per-arc battery costs")


def arc_cost(est: ArcEstimate, weights: HeuristicWeights) -> float:
    return (weights.lambda_delta * est.delta_m
            + weights.lambda_d * est.d_hat_arrival
            + weights.lambda_l * est.battery_cost_pct)


def plan_path(graph: WaypointGraph, start: str, goal: str, estimates: ArcEstimates,
              weights: HeuristicWeights) -> PathPlan:
    """Minimum-total-cost route; raises NoPathError when the goal is unreachable."""
    for wid in (start, goal):
        if wid not in graph.waypoints:
            raise KeyError(f"unknown waypoint {wid!r}")
    if start == goal:
        return PathPlan((start,), (), 0.0, 0.0, 0.0, expansions=0)

    def guide(w: str) -> float:
        return weights.lambda_delta * graph.straight_line(w, goal)

    # keys compare (f, arc count, path ids); the guide is consistent, so the
    # first goal pop is optimal and exact ties resolve deterministically
    frontier = [(guide(start), 0, (start,), 0.0)]
    settled: dict[str, tuple[float, int, tuple[str, ...]]] = {}
    expansions = 0
    while frontier:
        f, narcs, path, g = heapq.heappop(frontier)
        node = path[-1]
        label = (f, narcs, path)
        if node in settled and settled[node] <= label:
            continue
        settled[node] = label
        expansions += 1
        if node == goal:
            arcs = tuple(estimates.by_arc[(a, b)] for a, b in zip(path, path[1:]))
            plan = PathPlan(
                waypoints=path, arcs=arcs, total_cost=g,
                battery_cost_pct=sum(a.battery_cost_pct for a in arcs),
                length_m=sum(a.delta_m for a in arcs),
                expansions=expansions,
            )
            plan.validate()
            return plan
        for nxt in graph.neighbours(node):
            est = estimates.by_arc[(node, nxt)]
            g2 = g + arc_cost(est, weights)
            cand = (g2 + guide(nxt), narcs + 1, path + (nxt,), g2)
            if nxt in settled and settled[nxt] <= cand[:3]:
                continue
            heapq.heappush(frontier, cand)
    raise NoPathError(f"no route from {start!r} to {goal!r}")


@dataclass(frozen=True)
class DecisionPolicy:
    b_min_pct: float = 20.0
    query_velocity: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.b_min_pct < 100.0:
            raise ValueError("b_min_pct must lie in [0, 100)")
        if self.query_velocity <= 0:
            raise ValueError("query velocity must be positive")


@dataclass(frozen=True)
class TaskDecision:
    proceed: bool
    predicted_remaining_pct: float


def decide_task(plan: PathPlan, battery_now_pct: float, policy: DecisionPolicy) -> TaskDecision:
    """One-shot go/no-go: proceed iff the predicted landing stays at or above B_min."""
    remaining = battery_now_pct - plan.battery_cost_pct
    return TaskDecision(proceed=remaining >= policy.b_min_pct, predicted_remaining_pct=remaining)
