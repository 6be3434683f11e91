"""Multiple-testing adjustment and selection metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfusionCounts",
    "SenFdrCurve",
    "bh_adjust",
    "bh_reject",
    "confusion",
    "fdp_sen",
    "fpr_over_screened",
    "sen_fdr_curve",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class SenFdrCurve:
    ranks: np.ndarray
    fdr: np.ndarray
    sen: np.ndarray

    @property
    def points(self):
        return list(zip(self.fdr.tolist(), self.sen.tolist()))


def bh_adjust(pvalues):
    """Benjamini-Hochberg step-up adjusted p-values, in input order.

    >>> bh_adjust([0.01, 0.02, 0.04, 0.5]).round(4).tolist()
    [0.04, 0.04, 0.0533, 0.5]
    """
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1:
        raise ValueError("p-values must be a 1-d array")
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    scaled = np.minimum.accumulate(scaled[::-1])[::-1]
    scaled = np.maximum(scaled, p[order])  # p * m / m can round below p
    out = np.empty(m)
    out[order] = np.minimum(scaled, 1.0)
    return out


def bh_reject(pvalues, alpha):
    """Boolean rejection mask at FDR level ``alpha``."""
    return bh_adjust(pvalues) <= alpha


def confusion(discoveries, truth, p):
    disc = {int(j) for j in discoveries}
    true = {int(j) for j in truth}
    if any(not 0 <= j < p for j in disc | true):
        raise ValueError(f"indices must lie in [0, {p})")
    tp = len(disc & true)
    fp = len(disc - true)
    fn = len(true - disc)
    return ConfusionCounts(tp, fp, fn, p - tp - fp - fn)


def fdp_sen(counts):
    """False discovery proportion and sensitivity of one replicate.

    Both are 0 when their denominator is 0.
    """
    nd = counts.tp + counts.fp
    nt = counts.tp + counts.fn
    fdp = counts.fp / nd if nd > 0 else 0.0
    sen = counts.tp / nt if nt > 0 else 0.0
    return fdp, sen


def fpr_over_screened(tested, rejected):
    """Pooled false positive rate: total rejected nulls over total tested nulls.

    ``tested`` and ``rejected`` are per-replicate counts of null variables
    that passed screening and of those rejected.  Returns NaN when no null
    variable was ever tested.
    """
    tested = np.asarray(tested, dtype=float)
    rejected = np.asarray(rejected, dtype=float)
    if np.any(rejected > tested) or np.any(rejected < 0):
        raise ValueError("rejected counts must lie between 0 and tested counts")
    total = tested.sum()
    if total == 0:
        return float("nan")
    return float(rejected.sum() / total)


def sen_fdr_curve(rankings, truths, max_rank=None):
    """Average top-``k`` FDP and sensitivity across replicates at each rank ``k``.

    Parameters
    ----------
    rankings : sequence of int arrays
        Per replicate, tested variables from most to least significant.
    truths : sequence of int arrays
        Per replicate, the true support.
    max_rank : int, optional
        Defaults to the longest ranking.  A replicate with fewer tested
        variables contributes its full set at larger ranks.
    """
    if len(rankings) != len(truths):
        raise ValueError("rankings and truths must have the same length")
    if max_rank is None:
        max_rank = max((len(r) for r in rankings), default=0)
    ranks = np.arange(1, max_rank + 1)
    fdr = np.zeros(max_rank)
    sen = np.zeros(max_rank)
    for order, truth in zip(rankings, truths):
        order = np.asarray(order, dtype=np.int64)
        hit = np.isin(order, np.asarray(truth, dtype=np.int64)).astype(float)
        tp = np.cumsum(hit)
        k = np.arange(1, order.size + 1)
        rep_fdp = np.zeros(max_rank)
        rep_tp = np.zeros(max_rank)
        m = min(order.size, max_rank)
        rep_fdp[:m] = (k[:m] - tp[:m]) / k[:m]
        rep_tp[:m] = tp[:m]
        if order.size and m < max_rank:
            rep_fdp[m:] = rep_fdp[m - 1]
            rep_tp[m:] = rep_tp[m - 1]
        fdr += rep_fdp
        s = len(truth)
        sen += rep_tp / s if s > 0 else 0.0
    n = max(len(rankings), 1)
    return SenFdrCurve(ranks, fdr / n, sen / n)
