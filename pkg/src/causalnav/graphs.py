"""Lagged causal structures and a constrained conditional-independence search.

Edges carry a lag (0 or 1). Context nodes are exogenous: nothing points into
them, and their outgoing edges are contemporaneous. The search space is fixed
to the admissible classes (context->system at lag 0, system->system at lags 0
and 1, system self-loops at lag 1), so a discovered graph can never invert a
context relationship regardless of the data.

Skeleton tests use conditional mutual information on the discrete codes with
a stratified-permutation null, sampled as random contingency tables with the
observed margins. Each (x, y, conditioning-set) triple derives its own
permutation seed, which makes p-values a pure function of the triple and the
edge set monotone in the significance level.
"""
from __future__ import annotations

import itertools
import json
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.stats import random_table
from sklearn.base import BaseEstimator

from .pipeline import ProcessedDataset

CONTEXT = "context"
SYSTEM = "system"


@dataclass(frozen=True, order=True)
class Edge:
    src: str
    dst: str
    lag: int = 0

    def label(self) -> str:
        return f"{self.src}->{self.dst}@{self.lag}"


@dataclass
class LaggedDag:
    kinds: dict[str, str]                    # node -> "context" | "system"
    edges: frozenset[Edge]
    alpha: float | None = None
    undirected: tuple[tuple[str, str], ...] = ()  # unresolved lag-0 system pairs

    def __post_init__(self):
        self.edges = frozenset(self.edges)
        self.validate()

    def validate(self):
        for e in self.edges:
            for node in (e.src, e.dst):
                if node not in self.kinds:
                    raise ValueError(f"edge {e.label()} references unknown node {node!r}")
            if e.lag not in (0, 1):
                raise ValueError(f"edge {e.label()}: lag must be 0 or 1")
            if self.kinds[e.dst] == CONTEXT:
                raise ValueError(f"edge {e.label()} points into a context node")
            if self.kinds[e.src] == CONTEXT and e.lag != 0:
                raise ValueError(f"edge {e.label()}: context edges must be contemporaneous")
            if e.lag == 1 and self.kinds[e.src] != SYSTEM:
                raise ValueError(f"edge {e.label()}: lag-1 edges originate from system nodes")
        for a, b in self.undirected:
            if self.kinds.get(a) != SYSTEM or self.kinds.get(b) != SYSTEM:
                raise ValueError(f"undirected pair ({a}, {b}) must join system nodes")
        order = self._topological_lag0()
        if order is None:
            raise ValueError("contemporaneous subgraph contains a cycle")

    def _topological_lag0(self) -> list[str] | None:
        nodes = sorted(self.kinds)
        indeg = {n: 0 for n in nodes}
        out: dict[str, list[str]] = {n: [] for n in nodes}
        for e in self.edges:
            if e.lag == 0:
                out[e.src].append(e.dst)
                indeg[e.dst] += 1
        ready = sorted(n for n in nodes if indeg[n] == 0)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for m in sorted(out[n]):
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
            ready.sort()
        return order if len(order) == len(nodes) else None

    def parents(self, node: str) -> tuple[tuple[str, int], ...]:
        ps = sorted((e.src, e.lag) for e in self.edges if e.dst == node)
        return tuple(ps)

    def topological_order(self) -> list[str]:
        order = self._topological_lag0()
        assert order is not None
        return order

    def to_json(self) -> str:
        return json.dumps(
            {
                "nodes": [{"name": n, "kind": k} for n, k in sorted(self.kinds.items())],
                "edges": [{"src": e.src, "dst": e.dst, "lag": e.lag} for e in sorted(self.edges)],
                "alpha": self.alpha,
                "undirected": [list(p) for p in self.undirected],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "LaggedDag":
        doc = json.loads(text)
        return cls(
            kinds={n["name"]: n["kind"] for n in doc["nodes"]},
            edges=frozenset(Edge(e["src"], e["dst"], e["lag"]) for e in doc["edges"]),
            alpha=doc.get("alpha"),
            undirected=tuple(tuple(p) for p in doc.get("undirected", ())),
        )


def ground_truth_model() -> LaggedDag:
    """The known warehouse structure: battery and density subsystems."""
    kinds = {"W": CONTEXT, "S": CONTEXT, "C": CONTEXT, "O": CONTEXT,
             "V": SYSTEM, "L": SYSTEM, "D": SYSTEM}
    edges = {
        Edge("O", "L", 0), Edge("O", "V", 0),
        Edge("C", "L", 0), Edge("C", "V", 0),
        Edge("V", "L", 0),
        Edge("W", "D", 0), Edge("S", "D", 0),
        Edge("D", "D", 1),
    }
    return LaggedDag(kinds=kinds, edges=frozenset(edges))


def edge_set_f1(predicted: LaggedDag, truth: LaggedDag) -> float:
    """F1 over directed edges; unresolved undirected pairs count against precision."""
    pred = {(e.src, e.dst, e.lag) for e in predicted.edges}
    true = {(e.src, e.dst, e.lag) for e in truth.edges}
    tp = len(pred & true)
    n_pred = len(pred) + len(predicted.undirected)
    n_true = len(true)
    if tp == 0:
        return 0.0
    precision = tp / n_pred
    recall = tp / n_true
    return 2 * precision * recall / (precision + recall)


# --- conditional mutual information with a permutation null ---

def _cmi_from_counts(counts: np.ndarray) -> float:
    """CMI in nats from a (strata, x, y) contingency array."""
    n = counts.sum()
    if n == 0:
        return 0.0
    nz = counts.sum(axis=(1, 2), keepdims=True)
    nx = counts.sum(axis=2, keepdims=True)
    ny = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log((counts * nz) / (nx * ny))
        term = np.where(counts > 0, counts * ratio, 0.0)
    return float(term.sum() / n)


def conditional_mutual_information(x: np.ndarray, y: np.ndarray, z: np.ndarray | None,
                                   cx: int, cy: int, cz: int = 1) -> float:
    z_code = np.zeros(len(x), dtype=int) if z is None else z
    counts = np.bincount(z_code * (cx * cy) + x * cy + y, minlength=cz * cx * cy)
    return _cmi_from_counts(counts.reshape(cz, cx, cy).astype(float))


def cmi_permutation_test(x: np.ndarray, y: np.ndarray, z: np.ndarray | None,
                         cx: int, cy: int, cz: int, n_permutations: int,
                         rng: np.random.Generator) -> tuple[float, float]:
    """Observed CMI and permutation p-value (X shuffled within Z strata).

    The stratified permutation distribution is sampled by drawing random
    contingency tables with the observed margins in every stratum.
    """
    z_code = np.zeros(len(x), dtype=int) if z is None else z
    counts = np.bincount(z_code * (cx * cy) + x * cy + y, minlength=cz * cx * cy)
    counts = counts.reshape(cz, cx, cy).astype(float)
    observed = _cmi_from_counts(counts)

    n_total = counts.sum()
    null_terms = np.zeros(n_permutations)
    for s in range(cz):
        table = counts[s]
        n_s = table.sum()
        if n_s == 0:
            continue
        rows = table.sum(axis=1)
        cols = table.sum(axis=0)
        if np.count_nonzero(rows) < 2 or np.count_nonzero(cols) < 2:
            continue  # stratum carries no permutable association
        samples = random_table(rows, cols).rvs(n_permutations, random_state=rng)
        samples = np.asarray(samples, dtype=float).reshape(n_permutations, cx, cy)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.log(samples * n_s / (rows[None, :, None] * cols[None, None, :]))
            null_terms += np.where(samples > 0, samples * ratio, 0.0).sum(axis=(1, 2))
    null = null_terms / n_total
    p = (1.0 + float(np.count_nonzero(null >= observed - 1e-12))) / (n_permutations + 1.0)
    return observed, p


@dataclass(frozen=True)
class _Var:
    """A column reference: a variable at lag 0 or 1."""

    name: str
    lag: int = 0

    def label(self) -> str:
        return self.name if self.lag == 0 else f"{self.name}@1"


class ConstantColumnError(ValueError):
    pass


@dataclass
class SkeletonDecision:
    retained: bool
    max_p: float
    sepset: tuple[str, ...] | None


class StructureLearner(BaseEstimator):
    """Constrained lag-aware structure discovery over discrete data.

    For every admissible candidate edge, conditioning sets up to
    `max_condition` variables are enumerated from the remaining admissible
    neighbours; the edge survives only if every test rejects independence at
    `alpha`. Retained contemporaneous system-system adjacencies are oriented
    by collider detection and propagation; remaining ties fall back to the
    pipeline's provenance order (measured quantities upstream of derived
    ones), and anything still ambiguous is reported undirected.
    """

    def __init__(self, alpha: float = 0.05, max_condition: int = 2,
                 n_permutations: int = 500, random_state: int = 0):
        self.alpha = alpha
        self.max_condition = max_condition
        self.n_permutations = n_permutations
        self.random_state = random_state

    # -- data access helpers --

    def _column(self, ds: ProcessedDataset, var: _Var) -> np.ndarray:
        return ds.columns[var.name] if var.lag == 0 else ds.lag1[var.name]

    def _stratum_code(self, ds: ProcessedDataset, zs: tuple[_Var, ...]) -> tuple[np.ndarray | None, int]:
        if not zs:
            return None, 1
        code = np.zeros(ds.n_rows, dtype=int)
        card = 1
        for v in zs:
            code = code * ds.cardinality(v.name) + self._column(ds, v)
            card *= ds.cardinality(v.name)
        return code, card

    def _test(self, ds: ProcessedDataset, x: _Var, y: _Var, zs: tuple[_Var, ...]) -> float:
        # seed is a stable function of the tested triple, so p-values do not
        # depend on enumeration order and edge sets are monotone in alpha
        tag = "|".join([x.label(), y.label()] + sorted(z.label() for z in zs))
        key = (self.random_state, zlib.crc32(tag.encode("utf-8")))
        rng = np.random.default_rng(np.random.SeedSequence(list(key)))
        z_code, cz = self._stratum_code(ds, zs)
        _, p = cmi_permutation_test(
            self._column(ds, x), self._column(ds, y), z_code,
            ds.cardinality(x.name), ds.cardinality(y.name), cz,
            self.n_permutations, rng,
        )
        return p

    def _independent_given_some(self, ds, x: _Var, y: _Var, pool: list[_Var]) -> tuple[bool, tuple[str, ...] | None]:
        """True (+ separating set) if any conditioning subset accepts independence."""
        for size in range(0, self.max_condition + 1):
            for zs in itertools.combinations(pool, size):
                if self._test(ds, x, y, zs) > self.alpha:
                    return True, tuple(sorted(v.label() for v in zs))
        return False, None

    # -- main entry point --

    def fit(self, dataset: ProcessedDataset, kinds: dict[str, str] | None = None) -> "StructureLearner":
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        kinds = dict(kinds or dataset.kinds)
        for name in kinds:
            if dataset.cardinality(name) < 2:
                raise ConstantColumnError(f"variable {name!r} is constant (uninformative)")
        context = sorted(n for n, k in kinds.items() if k == CONTEXT)
        system = sorted(n for n, k in kinds.items() if k == SYSTEM)
        lagged = [_Var(s, 1) for s in system if s in dataset.lag1]

        sepsets: dict[frozenset[str], tuple[str, ...]] = {}
        adjacent: set[frozenset[str]] = set()
        directed: set[tuple[str, str, int]] = set()

        def pool_for(*exclude: _Var) -> list[_Var]:
            out = [_Var(c) for c in context] + [_Var(s) for s in system] + list(lagged)
            labels = {e.label() for e in exclude}
            return [v for v in out if v.label() not in labels]

        # context -> system candidates (lag 0)
        for ctx in context:
            for sys_ in system:
                x, y = _Var(ctx), _Var(sys_)
                indep, sep = self._independent_given_some(dataset, x, y, pool_for(x, y))
                if indep:
                    sepsets[frozenset((x.label(), y.label()))] = sep
                else:
                    directed.add((ctx, sys_, 0))
                    adjacent.add(frozenset((x.label(), y.label())))

        # system -> system lag-1 candidates (including self-dependence)
        for src in system:
            if _Var(src, 1) not in lagged:
                continue
            for dst in system:
                x, y = _Var(src, 1), _Var(dst)
                indep, sep = self._independent_given_some(dataset, x, y, pool_for(x, y))
                if indep:
                    sepsets[frozenset((x.label(), y.label()))] = sep
                else:
                    directed.add((src, dst, 1))
                    adjacent.add(frozenset((x.label(), y.label())))

        # contemporaneous system-system adjacencies (undirected for now)
        undirected_pairs: set[tuple[str, str]] = set()
        for a, b in itertools.combinations(system, 2):
            x, y = _Var(a), _Var(b)
            indep, sep = self._independent_given_some(dataset, x, y, pool_for(x, y))
            if indep:
                sepsets[frozenset((x.label(), y.label()))] = sep
            else:
                undirected_pairs.add((a, b))
                adjacent.add(frozenset((x.label(), y.label())))

        directed, undirected_pairs = self._orient(
            dataset, directed, undirected_pairs, adjacent, sepsets
        )

        self.graph_ = LaggedDag(
            kinds=kinds,
            edges=frozenset(Edge(s, d, lag) for s, d, lag in directed),
            alpha=self.alpha,
            undirected=tuple(sorted(undirected_pairs)),
        )
        self.sepsets_ = sepsets
        return self

    # -- orientation --

    def _orient(self, dataset, directed, undirected_pairs, adjacent, sepsets):
        def is_adjacent(a: str, b: str) -> bool:
            return frozenset((a, b)) in adjacent

        labels = {}
        for s, d, lag in directed:
            labels[(s, d, lag)] = (_Var(s, lag).label(), d)

        # collider rule: A -> X with A,Y non-adjacent and X outside sepset(A,Y)
        # forces Y -> X; its complement (X in the sepset) is Meek's first rule.
        changed = True
        undirected = set(undirected_pairs)
        while changed:
            changed = False
            for a, b in sorted(undirected):
                resolved = None
                for (src, dst, lag) in sorted(directed):
                    src_label = _Var(src, lag).label()
                    for x, y in ((a, b), (b, a)):
                        if dst != x or src in (a, b):
                            continue
                        if is_adjacent(src_label, y):
                            continue
                        sep = sepsets.get(frozenset((src_label, y)))
                        if sep is None:
                            continue
                        if x in sep:
                            resolved = (x, y)   # no collider at x: chain continues
                        else:
                            resolved = (y, x)   # collider at x
                        break
                    if resolved:
                        break
                if resolved:
                    undirected.discard((a, b))
                    directed.add((resolved[0], resolved[1], 0))
                    changed = True

        # provenance tie-break: measured quantities point at derived ones
        prov = dataset.provenance
        still = set()
        for a, b in sorted(undirected):
            ra = prov.get(a, "measured")
            rb = prov.get(b, "measured")
            if ra == "measured" and rb == "derived":
                directed.add((a, b, 0))
            elif rb == "measured" and ra == "derived":
                directed.add((b, a, 0))
            else:
                still.add((a, b))
        return directed, still


def discover_structure(dataset: ProcessedDataset, kinds: dict[str, str] | None = None,
                       alpha: float = 0.05, **kwargs) -> LaggedDag:
    """Functional wrapper over StructureLearner."""
    return StructureLearner(alpha=alpha, **kwargs).fit(dataset, kinds=kinds).graph_
