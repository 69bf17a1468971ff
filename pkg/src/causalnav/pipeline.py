"""Log-to-dataset pipeline: Nyquist subsampling, derived series, discretization.

The processed dataset is "long" over time and waypoints: each subsampled time
step contributes one row per waypoint, carrying the robot variables (V, L, C,
O), the slot S, the waypoint id W and that waypoint's people density D, plus
one-step-lagged copies of the system variables. This is the layout the
structure search and the CPT fit both consume.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .simulation import TimeSeriesLog, waypoint_density
from .world import WaypointGraph

SYSTEM_VARIABLES = ("V", "L", "D")
CONTEXT_VARIABLES = ("W", "S", "C", "O")
# L and D are computed by this pipeline rather than sensed; the distinction
# feeds the structure learner's orientation tie-break.
PROVENANCE = {"V": "measured", "L": "derived", "D": "derived",
              "W": "measured", "S": "measured", "C": "measured", "O": "measured"}


class SubsampleRateError(ValueError):
    def __init__(self, candidate: float, bound: float, worst: str):
        self.candidate = candidate
        self.bound = bound
        super().__init__(
            f"candidate rate {candidate:g} Hz is below the Nyquist bound "
            f"{bound:g} Hz (2 x bandwidth of {worst!r})"
        )


def spectral_bandwidth(x: np.ndarray, rate_hz: float, energy: float = 0.95) -> float:
    """Frequency below which `energy` of the mean-removed spectrum lies."""
    x = np.asarray(x, dtype=float)
    centred = x - x.mean()
    if not np.any(np.abs(centred) > 1e-12 * max(1.0, float(np.abs(x).max()))):
        return 0.0  # constant up to floating-point residue
    power = np.abs(np.fft.rfft(centred)) ** 2
    power[0] = 0.0
    total = power.sum()
    if total <= 0:
        return 0.0
    freqs = np.fft.rfftfreq(len(x), d=1.0 / rate_hz)
    cum = np.cumsum(power)
    idx = int(np.searchsorted(cum, energy * total))
    return float(freqs[min(idx, len(freqs) - 1)])


def nyquist_subsample(series: dict[str, np.ndarray], input_rate_hz: float,
                      candidate_rate_hz: float | None = None,
                      energy: float = 0.95) -> tuple[dict[str, np.ndarray], float, dict[str, float]]:
    """Decimate a set of uniformly sampled series without aliasing.

    Returns (subsampled series, achieved rate, per-series bandwidths). A
    candidate rate below twice the largest bandwidth is rejected; with no
    candidate, the largest alias-free integer decimation is chosen.
    """
    lengths = {len(v) for v in series.values()}
    if len(lengths) != 1:
        raise ValueError("all series must have equal length")
    n = lengths.pop()
    bandwidths = {name: spectral_bandwidth(v, input_rate_hz, energy) for name, v in series.items()}
    bw_max = max(bandwidths.values(), default=0.0)
    worst = max(bandwidths, key=bandwidths.get) if bandwidths else ""

    if candidate_rate_hz is not None:
        if candidate_rate_hz > input_rate_hz:
            raise ValueError("candidate rate exceeds the input rate")
        if candidate_rate_hz < 2.0 * bw_max:
            raise SubsampleRateError(candidate_rate_hz, 2.0 * bw_max, worst)
        factor = max(1, round(input_rate_hz / candidate_rate_hz))
    else:
        factor = int(input_rate_hz // (2.0 * bw_max)) if bw_max > 0 else max(1, n // 64)
        factor = max(1, min(factor, max(1, n // 64)))
    while input_rate_hz / factor < 2.0 * bw_max:
        factor -= 1
    out = {name: np.asarray(v)[::factor] for name, v in series.items()}
    return out, input_rate_hz / factor, bandwidths


def derive_series(log: TimeSeriesLog, graph: WaypointGraph) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Battery-change series (first difference of B) and per-waypoint densities."""
    if len(log) == 0:
        raise ValueError("empty log")
    b = log.column("B").astype(float)
    l_series = np.diff(b)
    counts = log.counts_matrix()
    densities = {}
    for j, wid in enumerate(log.waypoint_ids):
        radius = graph.waypoints[wid].radius
        densities[wid] = np.array([waypoint_density(int(c), radius) for c in counts[:, j]])
    return l_series, densities


def _within_bin_sse(values: np.ndarray, k: int) -> float:
    codes, _ = quantile_discretize(values, k, warn=False)
    sse = 0.0
    for b in range(codes.max() + 1):
        members = values[codes == b]
        if members.size:
            sse += float(((members - members.mean()) ** 2).sum())
    return sse


def elbow_bins(values: np.ndarray, max_bins: int) -> int:
    """Bin count at the elbow of the within-bin-variance curve.

    Computes W(k) (total within-bin squared error under quantile binning) for
    k = 1..max_bins and returns the k whose point (k, W(k)) is farthest, in
    perpendicular distance, from the chord joining (1, W(1)) and
    (max_bins, W(max_bins)).
    """
    if max_bins < 1:
        raise ValueError("max_bins must be >= 1")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty series")
    n_distinct = len(np.unique(values))
    top = min(max_bins, n_distinct)
    if top == 1:
        return 1
    ks = np.arange(1, top + 1)
    w = np.array([_within_bin_sse(values, int(k)) for k in ks])
    p1 = np.array([ks[0], w[0]])
    p2 = np.array([ks[-1], w[-1]])
    chord = p2 - p1
    norm = float(np.hypot(*chord))
    if norm == 0:
        return 1
    rel = np.stack([ks - p1[0], w - p1[1]], axis=1)
    dist = np.abs(chord[0] * rel[:, 1] - chord[1] * rel[:, 0]) / norm
    return int(ks[int(np.argmax(dist))])


def quantile_discretize(values: np.ndarray, n_bins: int, warn: bool = True) -> tuple[np.ndarray, dict]:
    """Equal-mass binning; returns integer codes and the bin description.

    Interior edges sit at the i/n_bins empirical quantiles; a value equal to
    an edge goes to the lower bin. Representatives are in-bin means.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    values = np.asarray(values, dtype=float)
    n_distinct = len(np.unique(values))
    if n_bins > n_distinct:
        if warn:
            warnings.warn(f"n_bins={n_bins} exceeds {n_distinct} distinct values; reduced", stacklevel=2)
        n_bins = n_distinct
    interior = np.quantile(values, [i / n_bins for i in range(1, n_bins)]) if n_bins > 1 else np.array([])
    interior = np.unique(interior)
    codes = np.searchsorted(interior, values, side="left").astype(int)
    n_used = len(interior) + 1
    reps = np.empty(n_used)
    for b in range(n_used):
        members = values[codes == b]
        reps[b] = members.mean() if members.size else float(interior[min(b, len(interior) - 1)])
    spec = {
        "edges": [float(values.min())] + [float(e) for e in interior] + [float(values.max())],
        "interior": [float(e) for e in interior],
        "representatives": [float(r) for r in reps],
        "n_bins": n_used,
    }
    return codes, spec


@dataclass
class DiscretizationSchema:
    """Bin edges and representatives per continuous variable, categories per context one."""

    continuous: dict[str, dict] = field(default_factory=dict)
    categorical: dict[str, list[str]] = field(default_factory=dict)

    def cardinality(self, var: str) -> int:
        if var in self.continuous:
            return self.continuous[var]["n_bins"]
        return len(self.categorical[var])

    def variables(self) -> list[str]:
        return list(self.continuous) + list(self.categorical)

    def encode(self, var: str, value) -> int:
        """Value -> bin code; out-of-range continuous values clamp to edge bins."""
        if var in self.continuous:
            interior = np.asarray(self.continuous[var]["interior"])
            return int(np.searchsorted(interior, float(value), side="left"))
        cats = self.categorical[var]
        try:
            return cats.index(str(value))
        except ValueError:
            raise KeyError(f"unknown category {value!r} for variable {var!r}") from None

    def representative(self, var: str, code: int) -> float:
        return float(self.continuous[var]["representatives"][code])

    def representatives(self, var: str) -> np.ndarray:
        if var not in self.continuous:
            raise KeyError(f"variable {var!r} has no numeric representatives")
        return np.asarray(self.continuous[var]["representatives"], dtype=float)

    def value_range(self, var: str) -> tuple[float, float]:
        edges = self.continuous[var]["edges"]
        return float(edges[0]), float(edges[-1])

    def to_json(self) -> str:
        return json.dumps({"continuous": self.continuous, "categorical": self.categorical}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DiscretizationSchema":
        doc = json.loads(text)
        return cls(continuous=doc["continuous"], categorical=doc["categorical"])


class QuantileDiscretizer(BaseEstimator, TransformerMixin):
    """Column-wise quantile discretizer with elbow-selected bin counts.

    `n_bins` may be an int (applied to every column) or "elbow" to pick each
    column's count from the within-bin-variance knee, capped at `max_bins`.
    Transform maps values to integer codes; out-of-range values clamp to the
    edge bins.
    """

    def __init__(self, n_bins="elbow", max_bins: int = 8):
        self.n_bins = n_bins
        self.max_bins = max_bins

    def fit(self, X, y=None, column_names: list[str] | None = None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        names = column_names or [f"x{j}" for j in range(X.shape[1])]
        self.schema_ = DiscretizationSchema()
        self.columns_ = list(names)
        for j, name in enumerate(names):
            col = X[:, j]
            k = self.n_bins if isinstance(self.n_bins, int) else elbow_bins(col, self.max_bins)
            _, spec = quantile_discretize(col, k)
            self.schema_.continuous[name] = spec
        return self

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out = np.empty(X.shape, dtype=int)
        for j, name in enumerate(self.columns_):
            interior = np.asarray(self.schema_.continuous[name]["interior"])
            out[:, j] = np.searchsorted(interior, X[:, j], side="left")
        return out


@dataclass
class ProcessedDataset:
    """Aligned discrete columns plus one-step lags, ready for learning."""

    columns: dict[str, np.ndarray]          # variable -> int codes, aligned rows
    lag1: dict[str, np.ndarray]             # system variable -> codes at t-1
    kinds: dict[str, str]                   # variable -> "context" | "system"
    schema: DiscretizationSchema
    sample_period_s: float
    provenance: dict[str, str] = field(default_factory=lambda: dict(PROVENANCE))
    source: str = ""

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values())))

    def cardinality(self, var: str) -> int:
        return self.schema.cardinality(var)

    def validate(self):
        n = self.n_rows
        for name, col in list(self.columns.items()) + list(self.lag1.items()):
            if len(col) != n:
                raise ValueError(f"column {name!r} has {len(col)} rows, expected {n}")
            card = self.cardinality(name)
            if col.min() < 0 or col.max() >= card:
                raise ValueError(f"column {name!r} has codes outside [0, {card})")

    def to_csv(self) -> str:
        names = list(self.columns) + [f"{v}_lag1" for v in self.lag1]
        lines = [",".join(names)]
        cols = list(self.columns.values()) + list(self.lag1.values())
        for i in range(self.n_rows):
            lines.append(",".join(str(int(c[i])) for c in cols))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, schema: DiscretizationSchema, sample_period_s: float,
                 kinds: dict[str, str] | None = None) -> "ProcessedDataset":
        lines = text.strip().splitlines()
        names = lines[0].split(",")
        data = np.array([[int(x) for x in line.split(",")] for line in lines[1:]], dtype=int)
        columns, lag1 = {}, {}
        for j, name in enumerate(names):
            if name.endswith("_lag1"):
                lag1[name[:-5]] = data[:, j]
            else:
                columns[name] = data[:, j]
        if kinds is None:
            kinds = {v: ("system" if v in SYSTEM_VARIABLES else "context") for v in columns}
        return cls(columns=columns, lag1=lag1, kinds=kinds, schema=schema,
                   sample_period_s=sample_period_s)


def build_dataset(log: TimeSeriesLog, graph: WaypointGraph,
                  candidate_rate_hz: float | None = None,
                  max_bins: int = 8, n_bins: dict[str, int] | None = None,
                  source: str = "") -> ProcessedDataset:
    """Full pipeline: subsample, derive L and D, discretize, lay out long rows.

    `n_bins` overrides the elbow choice per variable (ties near-duplicate
    quantile edges still collapse, so zero-inflated series may end up with
    fewer bins than requested).
    """
    input_rate = 1.0 / log.sample_period_s
    counts = log.counts_matrix().astype(float)
    raw = {"V": log.column("V").astype(float), "B": log.column("B").astype(float)}
    for j, wid in enumerate(log.waypoint_ids):
        raw[f"cnt_{wid}"] = counts[:, j]
    sub, rate, _ = nyquist_subsample(raw, input_rate, candidate_rate_hz)
    period = 1.0 / rate

    idx = np.arange(0, len(log), round(input_rate / rate)).astype(int)
    slot_col = log.column("S")[idx]
    c_col = log.column("C").astype(int)[idx]
    o_col = log.column("O").astype(int)[idx]

    l_series = np.diff(sub["B"])
    v_series = sub["V"][1:]
    c_col, o_col, slot_col = c_col[1:], o_col[1:], slot_col[1:]
    density = {
        wid: np.array([waypoint_density(int(c), graph.waypoints[wid].radius) for c in sub[f"cnt_{wid}"]])
        for wid in log.waypoint_ids
    }

    overrides = n_bins or {}

    def bins_for(name: str, values: np.ndarray) -> int:
        return overrides.get(name) or elbow_bins(values, max_bins)

    schema = DiscretizationSchema()
    v_codes, schema.continuous["V"] = quantile_discretize(v_series, bins_for("V", v_series), warn=False)
    l_codes, schema.continuous["L"] = quantile_discretize(l_series, bins_for("L", l_series), warn=False)
    d_pool = np.concatenate([density[w] for w in log.waypoint_ids])
    _, schema.continuous["D"] = quantile_discretize(d_pool, bins_for("D", d_pool), warn=False)
    d_interior = np.asarray(schema.continuous["D"]["interior"])

    wids = list(log.waypoint_ids)
    slot_cats = sorted(set(str(s) for s in slot_col))
    schema.categorical["W"] = wids
    schema.categorical["S"] = slot_cats
    schema.categorical["C"] = ["0", "1"]
    schema.categorical["O"] = ["0", "1"]

    d_codes = {w: np.searchsorted(d_interior, density[w], side="left").astype(int) for w in wids}
    s_codes = np.array([slot_cats.index(str(s)) for s in slot_col], dtype=int)

    # long layout: rows are (time t >= 2, waypoint w); system lags shift one step back.
    # v_codes[i] / l_codes[i] describe subsample step i+1, d_codes[w][j] step j.
    t_idx = np.arange(1, len(v_codes))
    n_t, n_w = len(t_idx), len(wids)
    columns = {
        "V": np.repeat(v_codes[t_idx], n_w),
        "L": np.repeat(l_codes[t_idx], n_w),
        "C": np.repeat(c_col[t_idx], n_w),
        "O": np.repeat(o_col[t_idx], n_w),
        "S": np.repeat(s_codes[t_idx], n_w),
        "W": np.tile(np.arange(n_w, dtype=int), n_t),
        "D": np.concatenate([[d_codes[w][t + 2] for w in wids] for t in range(n_t)]) if n_t else np.zeros(0, int),
    }
    lag1 = {
        "V": np.repeat(v_codes[t_idx - 1], n_w),
        "L": np.repeat(l_codes[t_idx - 1], n_w),
        "D": np.concatenate([[d_codes[w][t + 1] for w in wids] for t in range(n_t)]) if n_t else np.zeros(0, int),
    }
    kinds = {v: ("system" if v in SYSTEM_VARIABLES else "context") for v in columns}
    ds = ProcessedDataset(columns=columns, lag1=lag1, kinds=kinds, schema=schema,
                          sample_period_s=period, source=source)
    ds.validate()
    return ds
