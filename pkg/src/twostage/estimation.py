"""Two-stage estimators: Lasso screening followed by a refit on the support.

Methods
-------
``L``    plain Lasso at the cross-validated penalty.
``L+O``  OLS on the Lasso support.
``L+R``  ridge on the Lasso support, ``mu`` by CV of the whole serial process.
``L+A``  adaptive ridge on the Lasso support, same protocol as ``L+R``.
``L&A``  adaptive ridge with ``(lambda, mu)`` chosen jointly by CV.

In the serial protocol ``lambda`` is fixed after the first CV, and the
support (and adaptive weights) are recomputed inside every fold while
``mu`` is being cross-validated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _seeding
from .lasso import _path_gram, cv_select, default_ratio, fold_labels, lambda_grid, lambda_max
from .penalized import (
    EmptySupportError,
    adaptive_weights,
    default_mu_grid,
    ridge_mu_path,
    second_stage_fit,
    uniform_weights,
)

__all__ = [
    "METHODS",
    "EstimationConfig",
    "EstimationResult",
    "estimate",
    "serial_two_stage",
    "joint_two_stage",
    "prediction_error",
]

METHODS = ("L", "L+O", "L+R", "L+A", "L&A")
_KIND = {"L+O": "ols", "L+R": "ridge", "L+A": "adaptive_ridge", "L&A": "adaptive_ridge"}


@dataclass(frozen=True)
class EstimationConfig:
    method: str = "L+A"
    folds: int = 10
    n_lambdas: int | None = None   # 100 for serial methods, 50 for L&A
    lambda_ratio: float | None = None
    lambda_grid: tuple | None = None  # explicit decreasing grid, overrides the two above
    n_mus: int = 25
    mu_grid: tuple | None = None
    rule: str = "min"
    seed: int | tuple = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")

    def lambdas(self, X, y):
        if self.lambda_grid is not None:
            grid = np.atleast_1d(np.asarray(self.lambda_grid, dtype=float))
            if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
                raise ValueError("lambda_grid must be positive and strictly decreasing")
            return grid
        lmax = lambda_max(X, y)
        if lmax == 0:
            return np.zeros(0)
        K = self.n_lambdas or (50 if self.method == "L&A" else 100)
        ratio = self.lambda_ratio or default_ratio(*X.shape)
        return lambda_grid(lmax, K, ratio)

    def mus(self, n):
        if self.mu_grid is not None:
            return np.atleast_1d(np.asarray(self.mu_grid, dtype=float))
        return default_mu_grid(n, self.n_mus)


@dataclass(frozen=True)
class EstimationResult:
    method: str
    beta: np.ndarray
    chosen_lambda: float
    chosen_mu: float | None
    support: np.ndarray
    cv_error: float
    cv_table: dict = field(repr=False, default_factory=dict)
    empty_support: bool = False


def _weights(fit, kind):
    w = adaptive_weights(fit)
    return w if kind == "adaptive_ridge" else uniform_weights(w.support, fit.lam)


def _heldout_errors(X, y, test, fit, kind, mus):
    """Held-out MSE over the ``mu`` grid of the second stage built on ``fit``."""
    ytest = y[test]
    try:
        w = _weights(fit, kind)
    except EmptySupportError:
        return np.full(mus.size, np.mean(ytest**2))
    Xs = X[:, w.support]
    betas = ridge_mu_path(Xs[~test], y[~test], w.weights, mus)
    resid = ytest[:, None] - Xs[test] @ betas.T
    err = np.mean(resid**2, axis=0)
    return np.where(np.isfinite(err), err, np.inf)


def _pick(mus, err):
    best = np.flatnonzero(err == err.min())
    i = best[np.argmax(mus[best])]
    return int(i)


def _zero_result(method, p, lam=0.0):
    return EstimationResult(method, np.zeros(p), float(lam), None,
                            np.zeros(0, dtype=np.int64), float("nan"), {}, True)


def _final(X, y, fit, method, mu):
    if method == "L":
        return fit.beta, fit.support, False
    kind = _KIND[method]
    try:
        w = _weights(fit, kind)
    except EmptySupportError:
        return np.zeros(X.shape[1]), np.zeros(0, dtype=np.int64), True
    s = second_stage_fit(X, y, w, mu, kind)
    return s.beta, s.support, False


def _stage_one(X, y, cfg, cache):
    # Lasso CV and per-fold refits at the chosen lambda do not depend on the
    # second-stage method, so serial methods on the same data may share them.
    key = ("stage1", cfg.folds, cfg.n_lambdas, cfg.lambda_ratio, cfg.lambda_grid, cfg.rule, repr(cfg.seed))
    if cache is not None and key in cache:
        return cache[key]
    grid = cfg.lambdas(X, y)
    if grid.size == 0:
        out = (grid, None, None, None, None)
    else:
        labels = fold_labels(X.shape[0], cfg.folds, _seeding.make_rng(cfg.seed, _seeding.FOLDS))
        cv = cv_select(X, y, grid, rule=cfg.rule, labels=labels)
        i = cv.index
        fold_fits = []
        for k in range(cfg.folds):
            test = labels == k
            Xtr, ytr = X[~test], y[~test]
            fold_fits.append(_path_gram(Xtr.T @ Xtr, Xtr.T @ ytr, grid[: i + 1])[-1])
        full = _path_gram(X.T @ X, X.T @ y, grid[: i + 1])[-1]
        out = (grid, labels, cv, fold_fits, full)
    if cache is not None:
        cache[key] = out
    return out


def serial_two_stage(X, y, cfg, cache=None):
    """``L``, ``L+O``, ``L+R`` or ``L+A`` with serial cross-validation.

    ``cache`` is an optional dict reused across calls on the same ``(X, y)``
    so that several serial methods share the first-stage work.
    """
    if cfg.method == "L&A":
        raise ValueError("L&A is jointly optimized; use joint_two_stage")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    grid, labels, cv, fold_fits, full = _stage_one(X, y, cfg, cache)
    if grid.size == 0:
        return _zero_result(cfg.method, p)
    i = cv.index
    table = {"lambdas": grid, "lambda_cv_mean": cv.cv_mean, "lambda_cv_se": cv.cv_se}

    if cfg.method in ("L", "L+O"):
        mu = None if cfg.method == "L" else 0.0
        cv_error = float(cv.cv_mean[i]) if cfg.method == "L" else float("nan")
    else:
        kind = _KIND[cfg.method]
        mus = cfg.mus(n)
        err = np.zeros(mus.size)
        for k, fit in enumerate(fold_fits):
            err += _heldout_errors(X, y, labels == k, fit, kind, mus)
        err /= cfg.folds
        m = _pick(mus, err)
        mu = float(mus[m])
        cv_error = float(err[m])
        table.update(mus=mus, mu_cv_mean=err)

    beta, support, empty = _final(X, y, full, cfg.method, mu or 0.0)
    return EstimationResult(cfg.method, beta, float(grid[i]), mu, support, cv_error, table, empty)


def joint_two_stage(X, y, cfg):
    """``L&A``: grid search over ``(lambda, mu)`` by K-fold CV of the whole process."""
    if cfg.method != "L&A":
        raise ValueError("joint_two_stage implements L&A only")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    grid = cfg.lambdas(X, y)
    if grid.size == 0:
        return _zero_result(cfg.method, p)
    mus = cfg.mus(n)
    labels = fold_labels(n, cfg.folds, _seeding.make_rng(cfg.seed, _seeding.FOLDS))
    err = np.zeros((grid.size, mus.size))
    for k in range(cfg.folds):
        test = labels == k
        Xtr, ytr = X[~test], y[~test]
        fits = _path_gram(Xtr.T @ Xtr, Xtr.T @ ytr, grid)
        for a, fit in enumerate(fits):
            err[a] += _heldout_errors(X, y, test, fit, "adaptive_ridge", mus)
    err /= cfg.folds
    # ties: larger lambda first (row order), then larger mu
    best = np.inf
    ia = im = 0
    for a in range(grid.size):
        m = _pick(mus, err[a])
        if err[a, m] < best:
            best, ia, im = err[a, m], a, m
    full = _path_gram(X.T @ X, X.T @ y, grid[: ia + 1])[-1]
    beta, support, empty = _final(X, y, full, "L&A", float(mus[im]))
    table = {"lambdas": grid, "mus": mus, "cv_mean": err}
    return EstimationResult("L&A", beta, float(grid[ia]), float(mus[im]), support, float(best), table, empty)


def estimate(X, y, cfg, cache=None):
    """Dispatch on ``cfg.method``; ``cache`` is shared by serial methods."""
    if cfg.method == "L&A":
        return joint_two_stage(X, y, cfg)
    return serial_two_stage(X, y, cfg, cache)


def prediction_error(beta_hat, beta_star, sigma_matrix):
    """Excess prediction risk ``(b - b*)^T Sigma (b - b*)`` for ``x ~ N(0, Sigma)``."""
    d = np.asarray(beta_hat, dtype=float) - np.asarray(beta_star, dtype=float)
    S = np.asarray(sigma_matrix, dtype=float)
    if d.ndim != 1 or S.shape != (d.size, d.size):
        raise ValueError(f"dimension mismatch: beta {d.shape}, sigma {S.shape}")
    return float(d @ S @ d)
