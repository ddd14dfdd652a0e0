"""Wilcoxon signed-rank test with an exact null distribution for small samples."""
from __future__ import annotations

from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.stats import norm, rankdata

from .. import kernels
from ..errors import AllZeroDifferences, LengthMismatch, TooFewPairs

MIN_PAIRS = 5
EXACT_MAX_N = 25


class WilcoxonResult(NamedTuple):
    statistic: float
    pvalue: float
    n: int
    exact: bool


def exact_pvalue(ranks: np.ndarray, w_plus: float) -> Fraction:
    """Two-sided p of ``w_plus`` under the sign-flip null of ``ranks``, as a fraction.

    Average ranks of ties are half-integers, so doubled ranks are integral and
    the null distribution of the doubled statistic can be counted exactly.
    """
    ranks2 = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    counts = kernels.signed_rank_null_counts(ranks2)
    w2 = int(round(2 * w_plus))
    total = 1 << len(ranks2)
    lower = int(counts[: w2 + 1].sum())
    upper = int(counts[w2:].sum())
    return min(Fraction(1), Fraction(2 * min(lower, upper), total))


def normal_pvalue(ranks: np.ndarray, w_plus: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes**3 - tie_sizes) / 48.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / np.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Paired two-sided test of ``a - b``; the statistic is the positive rank sum.

    Zero differences are discarded before ranking. With at most 25 remaining
    pairs the p-value is exact; above that a tie- and continuity-corrected
    normal approximation is used.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise LengthMismatch(f"{a.size} vs {b.size} paired samples")
    d = a - b
    if d.size and not np.any(d):
        raise AllZeroDifferences("every paired difference is zero")
    d = d[d != 0]
    if d.size < MIN_PAIRS:
        raise TooFewPairs(f"{d.size} non-zero differences; at least {MIN_PAIRS} are needed")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if d.size <= EXACT_MAX_N:
        return WilcoxonResult(w_plus, float(exact_pvalue(ranks, w_plus)), int(d.size), True)
    return WilcoxonResult(w_plus, normal_pvalue(ranks, w_plus), int(d.size), False)
