"""Significance tests for the ablation comparisons.

Three test kinds cover the metric families: chi-square (Yates-corrected, 1
d.o.f.) for success/failure tables, Mann-Whitney U (exact enumeration for two
small tie-free samples, tie-corrected normal approximation otherwise) for
continuous metrics, and a negative-binomial likelihood-ratio test of equal
means (method-of-moments dispersion) for overdispersed collision counts.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as chi2_dist
from scipy.stats import norm as norm_dist

TEST_KINDS = ("chi_square", "mann_whitney_u", "negative_binomial")


class DegenerateDataError(ValueError):
    """The requested test is undefined on these inputs (e.g. zero variance)."""


@dataclass(frozen=True)
class StatTestResult:
    kind: str
    statistic: float
    p_value: float
    n_a: int
    n_b: int

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value out of range: {self.p_value}")


def chi_square_2x2(table) -> StatTestResult:
    """Yates-corrected Pearson chi-square on a 2x2 contingency table."""
    obs = np.asarray(table, dtype=float)
    if obs.shape != (2, 2) or np.any(obs < 0):
        raise ValueError("expected a non-negative 2x2 table")
    n = obs.sum()
    row = obs.sum(axis=1)
    col = obs.sum(axis=0)
    if n == 0 or np.any(row == 0) or np.any(col == 0):
        raise DegenerateDataError("chi-square undefined: empty row or column")
    expected = np.outer(row, col) / n
    diff = np.abs(obs - expected) - 0.5
    diff = np.maximum(diff, 0.0)
    stat = float((diff**2 / expected).sum())
    p = float(chi2_dist.sf(stat, df=1))
    return StatTestResult("chi_square", stat, p, int(row[0]), int(row[1]))


def _ranks_with_ties(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Midranks and the tie-correction term sum(t^3 - t)."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    tie_term = 0.0
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        t = j - i + 1
        tie_term += t**3 - t
        i = j + 1
    return ranks, tie_term


def mann_whitney_u(group_a, group_b) -> StatTestResult:
    """Two-sided Mann-Whitney U; exact for tie-free samples with both n <= 8."""
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    n1, n2 = len(a), len(b)
    combined = np.concatenate([a, b])
    ranks, tie_term = _ranks_with_ties(combined)
    r1 = float(ranks[:n1].sum())
    u1 = n1 * n2 + n1 * (n1 + 1) / 2.0 - r1
    u2 = n1 * n2 - u1
    u_obs = min(u1, u2)

    if n1 <= 8 and n2 <= 8 and tie_term == 0:
        # exact null: U is distribution-free over rank assignments
        all_ranks = np.arange(1, n1 + n2 + 1)
        count_le = 0
        total = 0
        for combo in itertools.combinations(range(n1 + n2), n1):
            ra = all_ranks[list(combo)].sum()
            ua = n1 * n2 + n1 * (n1 + 1) / 2.0 - ra
            if min(ua, n1 * n2 - ua) <= u_obs + 1e-12:
                count_le += 1
            total += 1
        p = min(1.0, count_le / total)
        return StatTestResult("mann_whitney_u", u_obs, p, n1, n2)

    n = n1 + n2
    var = n1 * n2 / 12.0 * (n + 1 - tie_term / (n * (n - 1)))
    if var <= 0:
        raise DegenerateDataError("Mann-Whitney undefined: all values tied")
    z = (u_obs - n1 * n2 / 2.0 + 0.5) / math.sqrt(var)  # continuity correction
    p = float(min(1.0, 2.0 * norm_dist.cdf(z)))
    return StatTestResult("mann_whitney_u", u_obs, p, n1, n2)


def _nb_loglik(counts: np.ndarray, mean: float, r: float) -> float:
    """Negative-binomial log-likelihood with dispersion r (var = m + m^2/r)."""
    mean = max(mean, 1e-12)
    p = r / (r + mean)
    k = counts
    return float(np.sum(
        [math.lgamma(ki + r) - math.lgamma(r) - math.lgamma(ki + 1) for ki in k]
    ) + len(k) * r * math.log(p) + k.sum() * math.log(1 - p + 1e-300))


def negative_binomial_lrt(group_a, group_b) -> StatTestResult:
    """Likelihood-ratio test of equal means under a shared MoM dispersion."""
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    pooled = np.concatenate([a, b])
    m = pooled.mean()
    s2 = pooled.var(ddof=1) if len(pooled) > 1 else 0.0
    if m <= 0:
        raise DegenerateDataError("negative-binomial test undefined: all counts zero")
    # method-of-moments dispersion; near-Poisson data gets a large finite r
    r = m * m / (s2 - m) if s2 > m else 1e6
    ll_null = _nb_loglik(pooled, m, r)
    ll_alt = _nb_loglik(a, a.mean(), r) + _nb_loglik(b, b.mean(), r)
    stat = max(0.0, 2.0 * (ll_alt - ll_null))
    p = float(chi2_dist.sf(stat, df=1))
    return StatTestResult("negative_binomial", stat, p, len(a), len(b))


def stat_test(kind: str, group_a, group_b) -> StatTestResult:
    """Dispatch by kind; chi_square expects (successes, failures) per group."""
    if kind == "chi_square":
        return chi_square_2x2([list(group_a), list(group_b)])
    if kind == "mann_whitney_u":
        return mann_whitney_u(group_a, group_b)
    if kind == "negative_binomial":
        return negative_binomial_lrt(group_a, group_b)
    raise ValueError(f"unknown test kind {kind!r}; expected one of {TEST_KINDS}")
