"""Shared test fixtures: independent oracles and synthetic data generators.

Everything here is deliberately written from first principles (enumeration,
exhaustive search, direct formulas) so the implementations under test are
checked against a second, independent route.
"""
from __future__ import annotations

import itertools

import numpy as np

from causalnav.graphs import Edge, LaggedDag
from causalnav.inference import CausalInferenceEngine, DiscreteCpd, ZeroProbabilityError
from causalnav.pipeline import DiscretizationSchema, ProcessedDataset
from causalnav.planning import ArcEstimate, ArcEstimates, arc_cost
from causalnav.world import Waypoint, WaypointGraph


# --- scenario snippets ---

TINY_SCENARIO = """
name: tiny
waypoints:
  - {id: a, x: 0.0, y: 0.0, radius: 1.0, label: shelf}
  - {id: b, x: 3.0, y: 4.0, radius: 1.0, label: charging}
arcs:
  - [a, b]
stations:
  goals: [a]
  charging: b
slots:
  - id: S1
    start: "08:00"
    end: "09:00"
    occupancy: {a: 1.0}
    tasks: {kind: pairs, sources: [a], targets: [b]}
    task_count: 1
"""


# --- random graphs and estimates for planner tests ---

def random_graph(n: int, rng: np.random.Generator) -> WaypointGraph:
    ids = [f"w{i}" for i in range(n)]
    pts = rng.uniform(0, 20, (n, 2))
    wps = {i: Waypoint(i, float(p[0]), float(p[1]), 1.0) for i, p in zip(ids, pts)}
    arcs = set()
    order = list(range(n))
    rng.shuffle(order)
    for a, b in zip(order, order[1:]):
        arcs.add(tuple(sorted((ids[a], ids[b]))))
    for _ in range(n):
        a, b = rng.integers(0, n, 2)
        if a != b:
            arcs.add(tuple(sorted((ids[a], ids[b]))))
    return WaypointGraph(wps, tuple(sorted(arcs)), (), ids[0])


def random_estimates(graph: WaypointGraph, rng: np.random.Generator,
                     velocity: float = 0.5) -> ArcEstimates:
    by_arc = {}
    d_hat = {w: float(rng.uniform(0, 2)) for w in graph.waypoints}
    l_rate = float(rng.uniform(0, 0.02))
    for a, b in graph.arcs:
        delta = graph.arc_length(a, b)
        for s, d in ((a, b), (b, a)):
            by_arc[(s, d)] = ArcEstimate((s, d), delta, d_hat[d], l_rate,
                                         (delta / velocity) * l_rate)
    return ArcEstimates(by_arc, d_hat, l_rate, velocity)


def brute_force_best_path(graph: WaypointGraph, start: str, goal: str,
                          estimates: ArcEstimates, weights) -> tuple[float, int, tuple[str, ...]]:
    """Exhaustive simple-path minimum with the planner's tie rules."""
    best = None

    def dfs(path, cost):
        nonlocal best
        node = path[-1]
        if node == goal:
            key = (cost, len(path) - 1, path)
            if best is None or key < best:
                best = key
            return
        for nxt in graph.neighbours(node):
            if nxt in path:
                continue
            dfs(path + (nxt,), cost + arc_cost(estimates.by_arc[(node, nxt)], weights))

    dfs((start,), 0.0)
    return best


def dijkstra_route(graph: WaypointGraph, start: str, goal: str) -> tuple[float, tuple[str, ...]]:
    """Reference metric shortest path with (length, arcs, ids) tie-breaking."""
    import heapq

    best = {}
    pq = [(0.0, 0, (start,))]
    while pq:
        d, k, path = heapq.heappop(pq)
        node = path[-1]
        if node in best and best[node] <= (d, k, path):
            continue
        best[node] = (d, k, path)
        if node == goal:
            return d, path
        for nx in graph.neighbours(node):
            cand = (d + graph.arc_length(node, nx), k + 1, path + (nx,))
            if nx not in best or best[nx] > cand:
                heapq.heappush(pq, cand)
    raise KeyError("unreachable")


# --- random discrete networks and the joint-enumeration oracle ---

def random_engine(rng: np.random.Generator, n_nodes: int,
                  max_card: int = 4) -> tuple[CausalInferenceEngine, list[str], dict[str, int]]:
    names = [f"X{i}" for i in range(n_nodes)]
    kinds = {n: "system" for n in names}
    cards = {n: int(rng.integers(2, max_card + 1)) for n in names}
    order = list(names)
    rng.shuffle(order)
    edges = set()
    parents: dict[str, list[str]] = {n: [] for n in names}
    for i, child in enumerate(order):
        for par in order[:i]:
            if rng.uniform() < 0.45 and len(parents[child]) < 3:
                parents[child].append(par)
                edges.add(Edge(par, child, 0))
    dag = LaggedDag(kinds=kinds, edges=frozenset(edges))
    cpds = {}
    for n in names:
        ps = tuple(sorted(parents[n]))
        shape = tuple(cards[p] for p in ps) + (cards[n],)
        table = rng.dirichlet(np.ones(cards[n]), size=int(np.prod(shape[:-1])) or 1)
        cpds[n] = DiscreteCpd(n, ps, table.reshape(shape))
    schema = DiscretizationSchema(
        categorical={n: [str(v) for v in range(cards[n])] for n in names}
    )
    return CausalInferenceEngine.from_components(dag, cpds, schema), names, cards


def joint_enumeration(engine: CausalInferenceEngine, do: dict, cond: dict, target: str) -> np.ndarray:
    """Truncated-factorization query answered by full joint enumeration."""
    nodes = sorted(engine.cpds_)
    cards = [engine.cards_[n] for n in nodes]
    dist = np.zeros(engine.cards_[target])
    for assignment in itertools.product(*(range(c) for c in cards)):
        a = dict(zip(nodes, assignment))
        if any(a[k] != v for k, v in do.items()):
            continue
        if any(a[k] != v for k, v in cond.items()):
            continue
        p = 1.0
        for n in nodes:
            if n in do:
                continue
            cpd = engine.cpds_[n]
            p *= float(cpd.table[tuple(a[q] for q in cpd.parents) + (a[n],)])
        dist[a[target]] += p
    z = dist.sum()
    if z <= 0:
        raise ZeroProbabilityError("oracle: conditioning event has probability 0")
    return dist / z


# --- synthetic structural model with the warehouse ground-truth structure ---

def synthetic_scm_dataset(n: int, seed: int, eps: float = 0.05) -> ProcessedDataset:
    """Samples from a structural model whose edges match the known graph.

    Context variables are exogenous; V responds to (C, O); L responds to
    (V, C, O); D mixes persistence (its lag) with a congestion level driven
    monotonically by (W, S). Every mechanism carries `eps` noise so no
    relationship is deterministic.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 777]))
    W = rng.integers(0, 4, n)
    S = rng.integers(0, 4, n)
    C = (rng.uniform(size=n) < 0.15).astype(int)
    O = (rng.uniform(size=n) < 0.25).astype(int)

    V = np.empty(n, dtype=int)
    u = rng.uniform(size=n)
    table_v = {(0, 0): [0.10, 0.25, 0.65], (0, 1): [0.55, 0.35, 0.10],
               (1, 0): [0.92, 0.05, 0.03], (1, 1): [0.92, 0.05, 0.03]}
    for (c, o), probs in table_v.items():
        mask = (C == c) & (O == o)
        V[mask] = np.searchsorted(np.cumsum(probs), u[mask], side="right")

    L = np.empty(n, dtype=int)
    u = rng.uniform(size=n)
    for c in (0, 1):
        for o in (0, 1):
            for v in range(3):
                mask = (C == c) & (O == o) & (V == v)
                if not mask.any():
                    continue
                if c == 1:
                    probs = np.array([0.02, 0.03, 0.05, 0.90])
                else:
                    drain = min(2, v + o)
                    probs = np.full(4, eps / 2)
                    probs[2 - drain] += 1.0 - probs.sum()
                L[mask] = np.searchsorted(np.cumsum(probs / probs.sum()), u[mask], side="right")

    base = np.clip((W + S) // 2, 0, 3)
    d_prev = rng.integers(0, 4, n)
    keep = rng.uniform(size=n) < 0.55
    fresh = np.clip(base + rng.integers(-1, 2, n), 0, 3)
    noise_mask = rng.uniform(size=n) < eps
    fresh[noise_mask] = rng.integers(0, 4, int(noise_mask.sum()))
    D = np.where(keep, d_prev, fresh)

    schema = DiscretizationSchema(
        continuous={
            "V": {"interior": [0.5, 1.5], "edges": [0, 0.5, 1.5, 2],
                  "representatives": [0.0, 1.0, 2.0], "n_bins": 3},
            "L": {"interior": [0.5, 1.5, 2.5], "edges": [0, 0.5, 1.5, 2.5, 3],
                  "representatives": [0.0, 1.0, 2.0, 3.0], "n_bins": 4},
            "D": {"interior": [0.5, 1.5, 2.5], "edges": [0, 0.5, 1.5, 2.5, 3],
                  "representatives": [0.0, 1.0, 2.0, 3.0], "n_bins": 4},
        },
        categorical={"W": ["0", "1", "2", "3"], "S": ["0", "1", "2", "3"],
                     "C": ["0", "1"], "O": ["0", "1"]},
    )
    return ProcessedDataset(
        columns={"W": W, "S": S, "C": C, "O": O, "V": V, "L": L, "D": D},
        lag1={"V": np.roll(V, 1), "L": np.roll(L, 1), "D": d_prev},
        kinds={"W": "context", "S": "context", "C": "context", "O": "context",
               "V": "system", "L": "system", "D": "system"},
        schema=schema, sample_period_s=1.0,
    )
