"""Screen and clean with an adaptive-ridge cleaning stage.

The data are halved.  The first half screens variables with a
cross-validated Lasso and fixes the adaptive penalty; the second half tests
every screened variable with a permutation F-test on the penalized fit and
the p-values are Benjamini-Hochberg adjusted.  OLS and plain-ridge
cleaning, the standard (parametric) t- and F-tests and univariate testing
are provided as comparators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from . import _seeding
from .dataset import Dataset
from .lasso import CvSelection, _path_gram, cv_select, default_ratio, fold_labels, lambda_grid, lambda_max
from .linalg import (
    DegeneratePivotError,
    SingularSystemError,
    gram_inverse,
    inverse_downdate,
    permuted_refits,
)
from .penalized import (
    AdaptiveWeights,
    EmptySupportError,
    adaptive_weights,
    default_mu_grid,
    penalty_diagonal,
    ridge_mu_path,
    uniform_weights,
)
from .stats import bh_adjust

__all__ = [
    "DegenerateFitError",
    "SplitData",
    "ScreenResult",
    "PermutationTest",
    "CleanResult",
    "ScreenCleanConfig",
    "ScreenCleanResult",
    "split_half",
    "screen",
    "select_mu",
    "f_statistic",
    "draw_permutations",
    "permutation_f_test",
    "clean",
    "screen_and_clean",
    "standard_f_pvalue",
    "standard_t_pvalue",
    "univariate_pvalues",
]

CLEAN_KINDS = {"AR": "adaptive_ridge", "ridge": "ridge", "OLS": "ols"}

# relative slack when comparing permuted statistics with the observed one
_TIE_RTOL = 1e-9


class DegenerateFitError(ArithmeticError):
    """A fit leaves no residual (or no residual degrees of freedom)."""


@dataclass(frozen=True)
class SplitData:
    d1: Dataset
    d2: Dataset
    assignment: np.ndarray  # 1 for the screening half, 2 for the cleaning half


@dataclass(frozen=True)
class ScreenResult:
    chosen_lambda: float
    support: np.ndarray
    weights: AdaptiveWeights | None
    beta_screen: np.ndarray
    cv: CvSelection | None = field(default=None, repr=False)

    @property
    def empty(self):
        return self.support.size == 0


@dataclass(frozen=True)
class PermutationTest:
    f_obs: float
    pvalue: float
    f_perm: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CleanResult:
    """Per screened variable: p-value, BH-adjusted value, observed F."""

    kind: str
    tested: np.ndarray
    pvalues: np.ndarray
    adjusted: np.ndarray
    f_observed: np.ndarray
    discoveries: np.ndarray
    mu: float
    b_permutations: int
    alpha: float
    applicable: bool = True

    def pvalue_map(self):
        return dict(zip(self.tested.tolist(), self.pvalues.tolist()))

    def adjusted_map(self):
        return dict(zip(self.tested.tolist(), self.adjusted.tolist()))

    def ranking(self):
        """Tested variables from most to least significant."""
        order = np.lexsort((-self.f_observed, self.pvalues))
        return self.tested[order]


def _empty_clean(kind, mu, B, alpha, tested=None, applicable=True):
    tested = np.zeros(0, dtype=np.int64) if tested is None else tested
    ones = np.ones(tested.size)
    return CleanResult(kind, tested, ones, ones.copy(), np.full(tested.size, np.nan),
                       np.zeros(0, dtype=np.int64), float(mu), int(B), float(alpha), applicable)


def split_half(data, seed=0):
    """Random split into a screening half of size ``ceil(n/2)`` and the rest."""
    n = data.n
    if n < 4:
        raise ValueError(f"need at least 4 observations to split, got {n}")
    perm = _seeding.make_rng(seed).permutation(n)
    n1 = (n + 1) // 2
    i1 = np.sort(perm[:n1])
    i2 = np.sort(perm[n1:])
    assignment = np.full(n, 2, dtype=np.int64)
    assignment[i1] = 1
    return SplitData(data.rows(i1), data.rows(i2), assignment)


def screen(d1, folds=10, n_lambdas=100, ratio=None, rule="min", seed=0, grid=None):
    """Lasso screening with the penalty chosen by K-fold CV on ``d1``.

    The selected penalty is refit on all of ``d1``; its support and
    adaptive weights are what the cleaning stage receives.  No cap is put
    on the support size.
    """
    X, y = d1.x, d1.y
    p = X.shape[1]
    if grid is None:
        lmax = lambda_max(X, y)
        if lmax == 0:
            return ScreenResult(0.0, np.zeros(0, dtype=np.int64), None, np.zeros(p))
        ratio = default_ratio(*X.shape) if ratio is None else ratio
        grid = lambda_grid(lmax, n_lambdas, ratio)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    labels = fold_labels(d1.n, folds, _seeding.make_rng(seed))
    cv = cv_select(X, y, grid, rule=rule, labels=labels)
    fits = _path_gram(X.T @ X, X.T @ y, grid[: cv.index + 1])
    fit = fits[-1]
    try:
        w = adaptive_weights(fit)
    except EmptySupportError:
        return ScreenResult(cv.chosen_lambda, np.zeros(0, dtype=np.int64), None, fit.beta, cv)
    return ScreenResult(cv.chosen_lambda, w.support, w, fit.beta, cv)


def _pick_mu(mus, err):
    err = np.where(np.isfinite(err), err, np.inf)
    best = np.flatnonzero(err == err.min())
    # ties toward stronger regularization
    return float(mus[best].max())


def select_mu(d, w, folds=10, mu_grid=None, seed=0, kind="adaptive_ridge"):
    """Choose the second-stage strength by K-fold CV with frozen weights.

    The support and weights in ``w`` are held fixed across folds: they are
    the statistics handed over by the screening stage.
    """
    mus = np.atleast_1d(np.asarray(default_mu_grid(d.n) if mu_grid is None else mu_grid, dtype=float))
    if np.any(mus < 0):
        raise ValueError("mu grid must be non-negative")
    if mus.size == 1:
        return float(mus[0])
    weights = w.weights if kind == "adaptive_ridge" else np.ones(w.support.size)
    labels = fold_labels(d.n, folds, _seeding.make_rng(seed))
    Xs = d.x[:, w.support]
    err = np.zeros(mus.size)
    for k in range(folds):
        test = labels == k
        betas = ridge_mu_path(Xs[~test], d.y[~test], weights, mus)
        resid = d.y[test][:, None] - Xs[test] @ betas.T
        err += np.mean(resid**2, axis=0)
    return _pick_mu(mus, err / folds)


def f_statistic(rss0, rss1):
    """Nested-model statistic ``(rss0 - rss1) / rss1``; may be negative."""
    if not rss1 > 0:
        raise DegenerateFitError(f"larger model has residual sum of squares {rss1!r}")
    return (rss0 - rss1) / rss1


def draw_permutations(n, B, rng):
    """``B`` independent permutations of ``range(n)``, shape (B, n)."""
    return rng.permuted(np.tile(np.arange(n), (B, 1)), axis=1)


def _rss(y, fitted):
    r = y - fitted
    return float(r @ r)


def _permuted_f(cache, down, perms):
    """Observed statistic and the permuted ones through the cached path."""
    j = down.removed_index
    X, y = cache.design, cache.response
    rss1 = _rss(y, X @ cache.beta)
    rss0 = _rss(y, down.design_minus_j @ down.beta_minus_j)
    try:
        f_obs = f_statistic(rss0, rss1)
    except DegenerateFitError as exc:
        raise DegenerateFitError(f"column {j}: {exc}") from None
    Xp = X[:, j][perms.T]                       # (n, B)
    betas = permuted_refits(down, Xp, y, cache.penalty[j])
    fitted = Xp * betas[j] + down.design_minus_j @ np.delete(betas, j, axis=0)
    rss1_b = np.sum((y[:, None] - fitted) ** 2, axis=0)
    if np.any(rss1_b <= 0):
        raise DegenerateFitError(f"column {j}: permuted fit leaves no residual")
    return f_obs, (rss0 - rss1_b) / rss1_b


def _perm_pvalue(f_obs, f_perm):
    slack = _TIE_RTOL * max(1.0, abs(f_obs))
    return (1 + int(np.count_nonzero(f_perm >= f_obs - slack))) / (f_perm.size + 1)


def permutation_f_test(X, y, penalty, j, B=1000, rng=None, cache=None):
    """Permutation F-test of column ``j`` in a penalized regression.

    The larger model uses every column of ``X`` (the screened design) with
    diagonal penalty ``penalty``; the smaller one drops column ``j``.
    Column ``j`` is permuted ``B`` times and only the larger model is
    refit, so the smaller model's residual sum of squares is shared by all
    permutations.  The p-value is ``(1 + #{F_b >= F_obs}) / (B + 1)``.
    """
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    if cache is None:
        cache = gram_inverse(X, penalty, y)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    down = inverse_downdate(cache, j)
    perms = draw_permutations(cache.design.shape[0], B, rng)
    f_obs, f_perm = _permuted_f(cache, down, perms)
    return PermutationTest(f_obs, _perm_pvalue(f_obs, f_perm), f_perm)


def clean(d2, sr, mu, B=1000, alpha=0.05, seed=0, kind="adaptive_ridge", weights=None):
    """Test every screened variable on ``d2`` and BH-adjust at level ``alpha``.

    ``kind`` selects the cleaning fit (``adaptive_ridge``, ``ridge`` or
    ``ols``).  OLS cleaning is inapplicable when the screened set leaves
    no residual degrees of freedom on ``d2``; the result then reports
    ``applicable=False`` and no discoveries.  Variable ``j`` draws its
    permutations from the stream ``(seed, j)``.
    """
    if sr.empty:
        return _empty_clean(kind, mu, B, alpha)
    w = sr.weights if weights is None else weights
    S = w.support
    q = S.size
    Xs = d2.x[:, S]
    penalty = penalty_diagonal(w, mu, kind)
    if kind == "ols" and q >= d2.n:
        return _empty_clean(kind, 0.0, B, alpha, S.copy(), applicable=False)
    try:
        cache = gram_inverse(Xs, penalty, d2.y)
    except SingularSystemError:
        if kind == "ols":
            return _empty_clean(kind, 0.0, B, alpha, S.copy(), applicable=False)
        raise
    pvalues = np.ones(q)
    f_obs = np.full(q, np.nan)
    if q == 1:
        stats = [_single_variable_test(Xs, d2.y, penalty, B, _seeding.make_rng(seed, S[0]))]
    else:
        stats = []
        for i in range(q):
            rng = _seeding.make_rng(seed, S[i])
            down = inverse_downdate(cache, i)
            perms = draw_permutations(d2.n, B, rng)
            try:
                stats.append(_permuted_f(cache, down, perms))
            except DegeneratePivotError as exc:
                raise DegeneratePivotError(f"screened variable {S[i]}: {exc}", index=int(S[i])) from None
    for i, (fo, fp) in enumerate(stats):
        f_obs[i] = fo
        pvalues[i] = _perm_pvalue(fo, fp)
    adjusted = bh_adjust(pvalues)
    disc = S[adjusted <= alpha]
    return CleanResult(kind, S.copy(), pvalues, adjusted, f_obs, disc,
                       float(0.0 if kind == "ols" else mu), int(B), float(alpha))


def _single_variable_test(Xs, y, penalty, B, rng):
    # one screened variable: the smaller model is empty, rss0 = ||y||^2
    x = Xs[:, 0]
    lam = penalty[0]
    rss0 = float(y @ y)

    def rss(col):
        denom = col @ col + lam
        if not denom > 0:
            raise SingularSystemError("single screened column is zero with zero penalty")
        b = (col @ y) / denom
        return _rss(y, col * b)

    f_obs = f_statistic(rss0, rss(x))
    perms = draw_permutations(y.size, B, rng)
    Xp = x[perms.T]
    b = (Xp.T @ y) / (np.einsum("ib,ib->b", Xp, Xp) + lam)
    rss1_b = np.sum((y[:, None] - Xp * b) ** 2, axis=0)
    return f_obs, (rss0 - rss1_b) / rss1_b


@dataclass(frozen=True)
class ScreenCleanConfig:
    folds: int = 10
    n_lambdas: int = 100
    lambda_ratio: float | None = None
    rule: str = "min"
    mu_grid: tuple | None = None
    mu_source: str = "d1"
    kind: str = "adaptive_ridge"
    b_permutations: int = 1000
    alpha: float = 0.05
    seed: int | tuple = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.mu_source not in ("d1", "d2"):
            raise ValueError(f"mu_source must be 'd1' or 'd2', got {self.mu_source!r}")
        if self.kind not in ("adaptive_ridge", "ridge", "ols"):
            raise ValueError(f"unknown cleaning kind {self.kind!r}")


@dataclass(frozen=True)
class ScreenCleanResult:
    split: SplitData
    screen: ScreenResult
    clean: CleanResult

    def __iter__(self):
        return iter((self.screen, self.clean))


def choose_cleaning_mu(split, sr, cfg, kind=None):
    """Second-stage strength for ``kind`` using the half named by ``cfg.mu_source``."""
    kind = cfg.kind if kind is None else kind
    if kind == "ols" or sr.empty:
        return 0.0
    d = split.d1 if cfg.mu_source == "d1" else split.d2
    w = sr.weights if kind == "adaptive_ridge" else uniform_weights(sr.support)
    return select_mu(d, w, cfg.folds, cfg.mu_grid, _seeding.child(cfg.seed, _seeding.MU), kind)


def screen_and_clean(data, cfg=ScreenCleanConfig()):
    """Split, screen on the first half, choose ``mu``, clean on the second half."""
    split = split_half(data, _seeding.child(cfg.seed, _seeding.SPLIT))
    sr = screen(split.d1, cfg.folds, cfg.n_lambdas, cfg.lambda_ratio, cfg.rule,
                _seeding.child(cfg.seed, _seeding.SCREEN))
    mu = choose_cleaning_mu(split, sr, cfg)
    weights = None
    if cfg.kind == "ridge" and not sr.empty:
        weights = uniform_weights(sr.support, sr.chosen_lambda)
    cr = clean(split.d2, sr, mu, cfg.b_permutations, cfg.alpha,
               _seeding.child(cfg.seed, _seeding.PERM), cfg.kind, weights)
    return ScreenCleanResult(split, sr, cr)


def _effective_df(cache):
    # trace of X M X^T = trace(M X^T X) = q - trace(M Lambda)
    return cache.q - float(np.sum(np.diag(cache.gram_inverse) * cache.penalty))


def _standard_parts(X, y, penalty, j, cache):
    if cache is None:
        cache = gram_inverse(X, penalty, y)
    n = cache.design.shape[0]
    df1 = _effective_df(cache)
    dfres = n - df1
    if not dfres > 0:
        raise DegenerateFitError(f"no residual degrees of freedom (n={n}, df={df1:.3g})")
    rss1 = _rss(cache.response, cache.design @ cache.beta)
    return cache, dfres, rss1


def standard_f_pvalue(X, y, penalty, j, cache=None):
    """Parametric F-test p-value for dropping column ``j``.

    Both terms of the nested-model statistic are normalized by effective
    degrees of freedom taken from hat-matrix traces: the numerator by
    ``df1 - df0`` (the smaller model keeps the same penalties) and the
    residual by ``n - df1``.  The result is referred to ``F(1, n - df1)``.
    With zero penalty ``df1 - df0 = 1`` and this is the classical partial
    F-test.
    """
    cache, dfres, rss1 = _standard_parts(X, y, penalty, j, cache)
    df1 = cache.design.shape[0] - dfres
    if cache.q == 1:
        rss0 = float(cache.response @ cache.response)
        df0 = 0.0
    else:
        down = inverse_downdate(cache, j)
        rss0 = _rss(cache.response, down.design_minus_j @ down.beta_minus_j)
        lam0 = np.delete(cache.penalty, j)
        df0 = (cache.q - 1) - float(np.sum(np.diag(down.gram_inverse_minus_j) * lam0))
    ddf = df1 - df0
    if not ddf > 0:
        raise DegenerateFitError(f"column {j} carries no effective degrees of freedom")
    stat = f_statistic(rss0, rss1) * dfres / ddf
    if stat <= 0:
        return 1.0
    return float(scipy.stats.f.sf(stat, 1, dfres))


def standard_t_pvalue(X, y, penalty, j, cache=None):
    """Two-sided t-test of coefficient ``j`` using the sandwich variance.

    ``Var(b) = s^2 M X^T X M`` with ``s^2 = rss / (n - df)``.
    """
    cache, dfres, rss1 = _standard_parts(X, y, penalty, j, cache)
    M = cache.gram_inverse
    cov = M - (M * cache.penalty) @ M           # M X^T X M = M - M Lambda M
    var = rss1 / dfres * cov[j, j]
    b = cache.beta[j]
    if b == 0:
        return 1.0
    if not var > 0:
        raise DegenerateFitError(f"standard error of column {j} is zero")
    t = b / np.sqrt(var)
    return float(2 * scipy.stats.t.sf(abs(t), dfres))


def univariate_pvalues(data):
    """Per-variable simple linear regression (with intercept) t-test p-values."""
    X, y = data.x, data.y
    n = X.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 observations, got {n}")
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sxx = np.einsum("ij,ij->j", xc, xc)
    syy = float(yc @ yc)
    sxy = xc.T @ yc
    const = sxx <= 1e-12 * np.maximum(1.0, np.einsum("ij,ij->j", X, X))
    if const.any():
        warnings.warn(f"{int(const.sum())} constant column(s) get p-value 1", RuntimeWarning, stacklevel=2)
    pv = np.ones(X.shape[1])
    ok = ~const
    if syy == 0:
        return pv
    r = sxy[ok] / np.sqrt(sxx[ok] * syy)
    r = np.clip(r, -1.0, 1.0)
    with np.errstate(divide="ignore"):
        t = r * np.sqrt((n - 2) / np.maximum(1.0 - r**2, 0.0))
    pv[ok] = 2 * scipy.stats.t.sf(np.abs(t), n - 2)
    return pv
