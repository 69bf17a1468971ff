"""Warehouse world model: waypoint graph, time-slot schedules, coverage routes.

A scenario document (YAML) declares waypoints with positions and radii, the
arcs connecting them, the robot's goal/charging stations, and a list of
time-slots. Each slot carries a worker-occupancy distribution over waypoints
and a robot task template. Everything is validated on load and immutable
afterwards, so graphs and schedules can be shared freely across workers.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import yaml


class ScenarioError(ValueError):
    """Raised when a scenario document fails validation.

    Each problem is reported with the field path that caused it, e.g.
    ``slots[2].occupancy: unknown waypoint 'X'``.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario document:\n" + "\n".join(f"  - {p}" for p in problems))


class DisconnectedGraphError(ScenarioError):
    pass


def pairwise_distance(a: "Waypoint", b: "Waypoint") -> float:
    """Euclidean distance in metres between two waypoint centres."""
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class Waypoint:
    id: str
    x: float
    y: float
    radius: float
    label: str = "area"

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class TaskTemplate:
    """Robot work for one slot: alternating station pairs, or arc coverage."""

    kind: str  # "pairs" | "coverage"
    sources: tuple[str, ...] = ()
    targets: tuple[str, ...] = ()


@dataclass(frozen=True)
class TimeSlot:
    id: str
    start: str
    end: str
    occupancy: dict[str, float]  # waypoint id -> probability, insertion-ordered
    template: TaskTemplate
    task_count: int
    initial_battery: float = 100.0


@dataclass(frozen=True)
class WaypointGraph:
    waypoints: dict[str, Waypoint]
    arcs: tuple[tuple[str, str], ...]  # undirected, each stored once (a < b)
    goal_stations: tuple[str, ...]
    charging_station: str
    name: str = "unnamed"
    _lengths: dict[tuple[str, str], float] = field(default_factory=dict, repr=False)
    _adjacency: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lengths = {}
        adj: dict[str, list[str]] = {w: [] for w in self.waypoints}
        for a, b in self.arcs:
            d = pairwise_distance(self.waypoints[a], self.waypoints[b])
            lengths[(a, b)] = lengths[(b, a)] = d
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_lengths", lengths)
        object.__setattr__(self, "_adjacency", {w: tuple(sorted(n)) for w, n in adj.items()})

    def arc_length(self, a: str, b: str) -> float:
        return self._lengths[(a, b)]

    def neighbours(self, w: str) -> tuple[str, ...]:
        return self._adjacency[w]

    def has_arc(self, a: str, b: str) -> bool:
        return (a, b) in self._lengths

    def straight_line(self, a: str, b: str) -> float:
        return pairwise_distance(self.waypoints[a], self.waypoints[b])

    def is_connected(self) -> bool:
        if not self.waypoints:
            return True
        start = next(iter(self.waypoints))
        seen = {start}
        stack = [start]
        while stack:
            for n in self._adjacency[stack.pop()]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        return len(seen) == len(self.waypoints)

    def shortest_route(self, start: str, goal: str) -> tuple[str, ...]:
        """Minimum-distance waypoint sequence; ties broken by fewer arcs then ids."""
        if start == goal:
            return (start,)
        best: dict[str, tuple[float, int, tuple[str, ...]]] = {}
        frontier = [(0.0, 0, (start,))]
        while frontier:
            dist, narcs, path = heapq.heappop(frontier)
            node = path[-1]
            if node == goal:
                return path
            if node in best and best[node] <= (dist, narcs, path):
                continue
            best[node] = (dist, narcs, path)
            for n in self._adjacency[node]:
                cand = (dist + self._lengths[(node, n)], narcs + 1, path + (n,))
                if n not in best or best[n] > cand:
                    heapq.heappush(frontier, cand)
        raise KeyError(f"no route from {start!r} to {goal!r}")

    def route_length(self, route: tuple[str, ...]) -> float:
        return sum(self._lengths[(a, b)] for a, b in zip(route, route[1:]))


@dataclass(frozen=True)
class ScenarioSchedule:
    slots: tuple[TimeSlot, ...]

    def slot(self, slot_id: str) -> TimeSlot:
        for s in self.slots:
            if s.id == slot_id:
                return s
        raise KeyError(f"unknown slot {slot_id!r}")

    @property
    def slot_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.slots)


_WAYPOINT_KEYS = {"id", "x", "y", "radius", "label"}
_SLOT_KEYS = {"id", "start", "end", "occupancy", "tasks", "task_count", "initial_battery"}
_TASK_KEYS = {"kind", "sources", "targets"}
_TOP_KEYS = {"name", "waypoints", "arcs", "stations", "slots"}


def _check_keys(mapping: dict, allowed: set[str], path: str, problems: list[str]):
    for key in mapping:
        if key not in allowed:
            problems.append(f"{path}: unknown key {key!r}")


def load_scenario(text: str) -> tuple[WaypointGraph, ScenarioSchedule]:
    """Parse and validate a scenario document.

    Raises ScenarioError listing every violated constraint with its field path.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"not valid YAML: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ScenarioError(["document root must be a mapping"])

    problems: list[str] = []
    _check_keys(doc, _TOP_KEYS, "document", problems)

    waypoints: dict[str, Waypoint] = {}
    for i, entry in enumerate(doc.get("waypoints") or []):
        path = f"waypoints[{i}]"
        if not isinstance(entry, dict):
            problems.append(f"{path}: must be a mapping")
            continue
        _check_keys(entry, _WAYPOINT_KEYS, path, problems)
        try:
            wp = Waypoint(
                id=str(entry["id"]),
                x=float(entry["x"]),
                y=float(entry["y"]),
                radius=float(entry["radius"]),
                label=str(entry.get("label", "area")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"{path}: {exc!r}")
            continue
        if wp.radius <= 0:
            problems.append(f"{path}.radius: must be > 0, got {wp.radius}")
        if wp.id in waypoints:
            problems.append(f"{path}.id: duplicate waypoint id {wp.id!r}")
        waypoints[wp.id] = wp
    if not waypoints:
        problems.append("waypoints: at least one waypoint required")

    arcs: list[tuple[str, str]] = []
    seen_arcs = set()
    for i, pair in enumerate(doc.get("arcs") or []):
        path = f"arcs[{i}]"
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            problems.append(f"{path}: must be a [a, b] pair")
            continue
        a, b = str(pair[0]), str(pair[1])
        if a == b:
            problems.append(f"{path}: self-arc {a!r} not allowed")
            continue
        for wid in (a, b):
            if wid not in waypoints:
                problems.append(f"{path}: unknown waypoint {wid!r}")
        key = tuple(sorted((a, b)))
        if key in seen_arcs:
            problems.append(f"{path}: duplicate arc {key}")
            continue
        seen_arcs.add(key)
        if a in waypoints and b in waypoints:
            arcs.append(key)

    stations = doc.get("stations") or {}
    _check_keys(stations, {"goals", "charging"}, "stations", problems)
    goals = tuple(str(g) for g in stations.get("goals") or ())
    for g in goals:
        if g not in waypoints:
            problems.append(f"stations.goals: unknown waypoint {g!r}")
    charging = str(stations.get("charging", ""))
    if charging not in waypoints:
        problems.append(f"stations.charging: unknown waypoint {charging!r}")

    slots: list[TimeSlot] = []
    slot_ids = set()
    for i, entry in enumerate(doc.get("slots") or []):
        path = f"slots[{i}]"
        if not isinstance(entry, dict):
            problems.append(f"{path}: must be a mapping")
            continue
        _check_keys(entry, _SLOT_KEYS, path, problems)
        sid = str(entry.get("id", f"?{i}"))
        if sid in slot_ids:
            problems.append(f"{path}.id: duplicate slot id {sid!r}")
        slot_ids.add(sid)

        occupancy = entry.get("occupancy") or {}
        occ: dict[str, float] = {}
        for wid, p in occupancy.items():
            if str(wid) not in waypoints:
                problems.append(f"{path}.occupancy: unknown waypoint {wid!r}")
                continue
            pf = float(p)
            if pf < 0:
                problems.append(f"{path}.occupancy.{wid}: negative probability {pf}")
            occ[str(wid)] = pf
        if occ and abs(sum(occ.values()) - 1.0) > 1e-9:
            problems.append(f"{path}.occupancy: probabilities sum to {sum(occ.values())!r}, expected 1")

        tasks = entry.get("tasks") or {}
        _check_keys(tasks, _TASK_KEYS, f"{path}.tasks", problems)
        kind = str(tasks.get("kind", "pairs"))
        if kind not in ("pairs", "coverage"):
            problems.append(f"{path}.tasks.kind: must be 'pairs' or 'coverage', got {kind!r}")
        sources = tuple(str(s) for s in tasks.get("sources") or ())
        targets = tuple(str(t) for t in tasks.get("targets") or ())
        for wid in sources + targets:
            if wid not in waypoints:
                problems.append(f"{path}.tasks: unknown waypoint {wid!r}")
        if kind == "pairs" and (not sources or not targets):
            problems.append(f"{path}.tasks: kind 'pairs' requires non-empty sources and targets")

        task_count = int(entry.get("task_count", 0))
        if task_count <= 0:
            problems.append(f"{path}.task_count: must be > 0, got {task_count}")
        initial_battery = float(entry.get("initial_battery", 100.0))
        if not 0.0 < initial_battery <= 100.0:
            problems.append(f"{path}.initial_battery: must be in (0, 100], got {initial_battery}")

        slots.append(
            TimeSlot(
                id=sid,
                start=str(entry.get("start", "")),
                end=str(entry.get("end", "")),
                occupancy=occ,
                template=TaskTemplate(kind=kind, sources=sources, targets=targets),
                task_count=task_count,
                initial_battery=initial_battery,
            )
        )
    if not slots:
        problems.append("slots: at least one slot required")

    if problems:
        raise ScenarioError(problems)

    graph = WaypointGraph(
        waypoints=waypoints,
        arcs=tuple(sorted(arcs)),
        goal_stations=goals,
        charging_station=charging,
        name=str(doc.get("name", "unnamed")),
    )
    if not graph.is_connected():
        raise DisconnectedGraphError(["arcs: graph is not connected"])
    return graph, ScenarioSchedule(slots=tuple(slots))


def load_scenario_file(path) -> tuple[WaypointGraph, ScenarioSchedule]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


# --- coverage route (open-tour TSP over the graph metric) ---

def _metric_closure(graph: WaypointGraph, ids: list[str]) -> list[list[float]]:
    n = len(ids)
    dist = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d = graph.route_length(graph.shortest_route(ids[i], ids[j]))
            dist[i][j] = dist[j][i] = d
    return dist


def _held_karp_path(dist: list[list[float]]) -> list[int]:
    """Exact minimum open path over all nodes (free endpoints)."""
    n = len(dist)
    full = (1 << n) - 1
    dp: list[dict[int, tuple[float, int]]] = [dict() for _ in range(1 << n)]
    for j in range(n):
        dp[1 << j][j] = (0.0, -1)
    for mask in range(1 << n):
        for j, (cost, _) in list(dp[mask].items()):
            for k in range(n):
                if mask & (1 << k):
                    continue
                nmask = mask | (1 << k)
                cand = cost + dist[j][k]
                if k not in dp[nmask] or dp[nmask][k][0] > cand:
                    dp[nmask][k] = (cand, j)
    end = min(dp[full], key=lambda j: dp[full][j][0])
    order = [end]
    mask = full
    while dp[mask][order[-1]][1] != -1:
        prev = dp[mask][order[-1]][1]
        mask ^= 1 << order[-1]
        order.append(prev)
    return order[::-1]


def _nearest_neighbour_path(dist: list[list[float]]) -> list[int]:
    n = len(dist)
    best_order, best_len = None, math.inf
    for start in range(n):
        order = [start]
        remaining = set(range(n)) - {start}
        while remaining:
            last = order[-1]
            nxt = min(remaining, key=lambda k: (dist[last][k], k))
            order.append(nxt)
            remaining.discard(nxt)
        length = sum(dist[a][b] for a, b in zip(order, order[1:]))
        if length < best_len:
            best_order, best_len = order, length
    return best_order


def _two_opt_path(order: list[int], dist: list[list[float]]) -> list[int]:
    improved = True
    while improved:
        improved = False
        n = len(order)
        for i in range(n - 1):
            for j in range(i + 1, n):
                new = order[:i] + order[i : j + 1][::-1] + order[j + 1 :]
                old_len = sum(dist[a][b] for a, b in zip(order, order[1:]))
                new_len = sum(dist[a][b] for a, b in zip(new, new[1:]))
                if new_len + 1e-12 < old_len:
                    order = new
                    improved = True
    return order


def coverage_route(graph: WaypointGraph, exact_threshold: int = 14) -> list[tuple[str, str]]:
    """Ordered arc list visiting every waypoint once (as tour stops).

    The visiting order solves an open-tour TSP over shortest-path distances:
    exact dynamic programming up to `exact_threshold` waypoints, otherwise
    nearest-neighbour construction plus 2-opt. Consecutive stops are expanded
    into graph arcs via shortest routes, so the arc list can revisit waypoints.
    """
    if not graph.is_connected():
        raise DisconnectedGraphError(["coverage route requires a connected graph"])
    ids = sorted(graph.waypoints)
    if len(ids) == 1:
        return []
    dist = _metric_closure(graph, ids)
    if len(ids) <= exact_threshold:
        order = _held_karp_path(dist)
    else:
        order = _two_opt_path(_nearest_neighbour_path(dist), dist)
    arcs: list[tuple[str, str]] = []
    for a, b in zip(order, order[1:]):
        route = graph.shortest_route(ids[a], ids[b])
        arcs.extend(zip(route, route[1:]))
    return arcs


def brute_force_open_tour(dist: list[list[float]]) -> float:
    """Reference optimum for tests: exhaustive open-path search."""
    n = len(dist)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        if perm[0] > perm[-1]:  # each path counted once
            continue
        best = min(best, sum(dist[a][b] for a, b in zip(perm, perm[1:])))
    return best
