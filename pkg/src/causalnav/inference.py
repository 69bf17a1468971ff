"""Discrete causal inference engine: MLE-fitted CPTs and do-calculus queries.

The fitted network unrolls the lagged structure over two slices: lag-1
parents become root nodes named ``X@1`` carrying their empirical marginal, so
a query that leaves them unspecified marginalizes them out and one that pins
them conditions as usual. Interventions follow the truncated factorization:
the intervened node's own CPT is dropped and its value is clamped everywhere
it appears as a parent, then exact variable elimination answers the query.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .graphs import CONTEXT, LaggedDag
from .pipeline import DiscretizationSchema, ProcessedDataset

ROW_SUM_TOL = 1e-12
DIST_SUM_TOL = 1e-9


class ZeroProbabilityError(ValueError):
    """Conditioning event has probability zero under the fitted model."""


def lagged_name(var: str, lag: int) -> str:
    return var if lag == 0 else f"{var}@1"


@dataclass
class DiscreteCpd:
    node: str
    parents: tuple[str, ...]                 # unrolled names, e.g. ("C", "O", "D@1")
    table: np.ndarray                        # shape = parent cards + (node card,)

    def validate(self):
        rows = self.table.reshape(-1, self.table.shape[-1])
        if np.any(np.abs(rows.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError(f"CPD rows for {self.node!r} do not sum to 1")


@dataclass(frozen=True)
class QuerySpec:
    interventions: dict
    conditions: dict
    target: str

    def __post_init__(self):
        if self.target in self.interventions or self.target in self.conditions:
            raise ValueError("query target cannot also be intervened or conditioned on")
        overlap = set(self.interventions) & set(self.conditions)
        if overlap:
            raise ValueError(f"variables {sorted(overlap)} appear in both do-set and condition set")


class CausalInferenceEngine(BaseEstimator):
    """sklearn-style estimator: fit CPTs by maximum likelihood, then query.

    Parent combinations never observed in training receive a uniform row; the
    number of such fallbacks is kept in `fallback_rows_` so silent zeros can
    never leak into expectations unnoticed.
    """

    def __init__(self, dag: LaggedDag | None = None):
        self.dag = dag

    # -- fitting --

    def fit(self, dataset: ProcessedDataset, y=None) -> "CausalInferenceEngine":
        if self.dag is None:
            raise ValueError("a LaggedDag is required before fitting")
        if dataset.n_rows == 0:
            raise ValueError("empty dataset")
        self.schema_ = dataset.schema
        self.sample_period_s_ = dataset.sample_period_s
        self.cards_ = {}
        self.cpds_ = {}
        self.fallback_rows_ = 0

        def column(name: str) -> np.ndarray:
            if name.endswith("@1"):
                return dataset.lag1[name[:-2]]
            return dataset.columns[name]

        roots_needed = set()
        for node in self.dag.kinds:
            self.cards_[node] = dataset.cardinality(node)
            for src, lag in self.dag.parents(node):
                if lag == 1:
                    roots_needed.add(lagged_name(src, 1))
        for name in roots_needed:
            self.cards_[name] = dataset.cardinality(name[:-2])

        for node in sorted(self.dag.kinds):
            parent_names = tuple(lagged_name(s, lag) for s, lag in self.dag.parents(node))
            self.cpds_[node] = self._fit_cpd(node, parent_names, column)
        # the previous-step slice mirrors the current one: a lag root keeps its
        # variable's context parents (contexts persist across one step), which
        # makes unspecified lag values marginalize under the queried context
        # instead of the global average
        for name in sorted(roots_needed):
            base = name[:-2]
            ctx_parents = tuple(src for src, lag in self.dag.parents(base)
                                if lag == 0 and self.dag.kinds.get(src) == "context")
            self.cpds_[name] = self._fit_cpd(name, ctx_parents, column)
        return self

    def _fit_cpd(self, node: str, parents: tuple[str, ...], column) -> DiscreteCpd:
        child = column(node)
        card = self.cards_[node]
        parent_cards = [self.cards_[p] for p in parents]
        n_combo = int(np.prod(parent_cards)) if parents else 1
        combo = np.zeros(len(child), dtype=int)
        for p in parents:
            combo = combo * self.cards_[p] + column(p)
        counts = np.bincount(combo * card + child, minlength=n_combo * card)
        counts = counts.reshape(n_combo, card).astype(float)
        totals = counts.sum(axis=1, keepdims=True)
        unseen = totals[:, 0] == 0
        self.fallback_rows_ += int(np.count_nonzero(unseen))
        counts[unseen] = 1.0
        table = counts / counts.sum(axis=1, keepdims=True)
        cpd = DiscreteCpd(node=node, parents=parents, table=table.reshape(*parent_cards, card))
        cpd.validate()
        return cpd

    # -- queries --

    def encode(self, var: str, value) -> int:
        base = var[:-2] if var.endswith("@1") else var
        if base in self.schema_.continuous:
            return self.schema_.encode(base, value)
        if base in self.schema_.categorical:
            cats = self.schema_.categorical[base]
            if str(value) in cats:
                return cats.index(str(value))
            if isinstance(value, (int, float, np.integer, np.floating)) and float(value).is_integer():
                candidate = str(int(value))
                if candidate in cats:
                    return cats.index(candidate)
            raise KeyError(f"unknown category {value!r} for variable {base!r}")
        return int(value)  # node outside the schema: treat the value as a bin code

    def do_query(self, interventions: dict, conditions: dict, target: str) -> np.ndarray:
        """Distribution over the target's bins under the mutilated network."""
        spec = QuerySpec(dict(interventions), dict(conditions), target)
        if target not in self.cpds_:
            raise KeyError(f"unknown target {target!r}")
        do_codes = {v: self.encode(v, val) for v, val in spec.interventions.items()}
        cond_codes = {v: self.encode(v, val) for v, val in spec.conditions.items()}

        factors: list[tuple[tuple[str, ...], np.ndarray]] = []
        for node, cpd in self.cpds_.items():
            if node in do_codes:
                continue  # truncated factorization: cut the intervened node's own CPT
            factors.append((cpd.parents + (node,), cpd.table))

        fixed = {**do_codes, **cond_codes}
        reduced = []
        for vars_, table in factors:
            for v, code in fixed.items():
                if v in vars_:
                    axis = vars_.index(v)
                    table = np.take(table, code, axis=axis)
                    vars_ = vars_[:axis] + vars_[axis + 1 :]
            reduced.append((vars_, table))

        # eliminate everything but the target
        to_eliminate = sorted({v for vars_, _ in reduced for v in vars_} - {target})
        for var in to_eliminate:
            involved = [(vs, t) for vs, t in reduced if var in vs]
            rest = [(vs, t) for vs, t in reduced if var not in vs]
            prod_vars, prod = self._multiply(involved)
            axis = prod_vars.index(var)
            summed = prod.sum(axis=axis)
            rest.append((prod_vars[:axis] + prod_vars[axis + 1 :], summed))
            reduced = rest
        final_vars, final = self._multiply(reduced)
        if final_vars and final_vars != (target,):
            axes = tuple(i for i, v in enumerate(final_vars) if v != target)
            final = final.sum(axis=axes)
        z = float(final.sum())
        if z <= 0.0:
            raise ZeroProbabilityError(f"conditioning event {spec.conditions!r} has probability 0")
        return final / z

    @staticmethod
    def _multiply(factors) -> tuple[tuple[str, ...], np.ndarray]:
        all_vars = tuple(sorted({v for vs, _ in factors for v in vs}))
        result = np.ones([1] * len(all_vars)) if all_vars else np.ones(())
        for vs, table in factors:
            expand = table
            # move factor axes into the global ordering, padding missing ones
            order = [vs.index(v) for v in all_vars if v in vs]
            expand = np.transpose(expand, order) if vs else expand
            shape = [expand.shape[[v for v in all_vars if v in vs].index(v)] if v in vs else 1 for v in all_vars]
            result = result * expand.reshape(shape)
        return all_vars, result

    def expected_value(self, dist: np.ndarray, variable: str) -> float:
        """Expectation in the variable's original units via bin representatives."""
        dist = np.asarray(dist, dtype=float)
        if abs(dist.sum() - 1.0) > DIST_SUM_TOL:
            raise ValueError(f"distribution sums to {dist.sum()!r}, expected 1")
        reps = self.schema_.representatives(variable)
        if len(reps) != len(dist):
            raise ValueError(f"distribution length {len(dist)} != {len(reps)} bins of {variable!r}")
        return float(dist @ reps)

    def query_expectation(self, interventions: dict, conditions: dict, target: str) -> float:
        return self.expected_value(self.do_query(interventions, conditions, target), target)

    # -- persistence --

    def save(self, path):
        doc = {
            "dag": json.loads(self.dag.to_json()),
            "schema": {"continuous": self.schema_.continuous, "categorical": self.schema_.categorical},
            "sample_period_s": self.sample_period_s_,
            "fallback_rows": self.fallback_rows_,
            "cards": self.cards_,
            "cpds": {
                node: {"parents": list(c.parents), "shape": list(c.table.shape), "table": c.table.ravel().tolist()}
                for node, c in self.cpds_.items()
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path) -> "CausalInferenceEngine":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        eng = cls(dag=LaggedDag.from_json(json.dumps(doc["dag"])))
        eng.schema_ = DiscretizationSchema(
            continuous=doc["schema"]["continuous"], categorical=doc["schema"]["categorical"]
        )
        eng.sample_period_s_ = doc["sample_period_s"]
        eng.fallback_rows_ = doc["fallback_rows"]
        eng.cards_ = {k: int(v) for k, v in doc["cards"].items()}
        eng.cpds_ = {}
        for node, c in doc["cpds"].items():
            table = np.array(c["table"], dtype=float).reshape(c["shape"])
            cpd = DiscreteCpd(node=node, parents=tuple(c["parents"]), table=table)
            cpd.validate()
            eng.cpds_[node] = cpd
        return eng

    @classmethod
    def from_components(cls, dag: LaggedDag, cpds: dict[str, DiscreteCpd],
                        schema: DiscretizationSchema, sample_period_s: float = 1.0) -> "CausalInferenceEngine":
        """Assemble an engine directly from tables (used by tests and tools)."""
        eng = cls(dag=dag)
        eng.cpds_ = dict(cpds)
        eng.schema_ = schema
        eng.sample_period_s_ = sample_period_s
        eng.fallback_rows_ = 0
        eng.cards_ = {node: cpd.table.shape[-1] for node, cpd in cpds.items()}
        for cpd in cpds.values():
            cpd.validate()
        return eng


def fit_mle(dag: LaggedDag, dataset: ProcessedDataset) -> CausalInferenceEngine:
    """Spec-level convenience: fit the engine for a structure on a dataset."""
    return CausalInferenceEngine(dag=dag).fit(dataset)


def do_query(engine: CausalInferenceEngine, query: QuerySpec) -> np.ndarray:
    return engine.do_query(query.interventions, query.conditions, query.target)
