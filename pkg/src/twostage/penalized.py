"""Second-stage estimators on a screened support.

The adaptive-ridge weights ``lam / |b_j|`` come from a first-stage Lasso
fit.  With ``mu = 1`` the adaptive-ridge solution restricted to the Lasso
support reproduces the Lasso coefficients, since at a Lasso optimum
``X_S^T (y - X_S b_S) = lam * b_S / |b_S|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import solve_penalized

__all__ = [
    "EmptySupportError",
    "AdaptiveWeights",
    "SecondStageFit",
    "KINDS",
    "ZERO_TOL",
    "adaptive_weights",
    "uniform_weights",
    "penalty_diagonal",
    "second_stage_fit",
    "ridge_mu_path",
    "default_mu_grid",
]

KINDS = ("ols", "ridge", "adaptive_ridge")

# coefficients this small are treated as exact zeros of the Lasso
ZERO_TOL = 1e-12


class EmptySupportError(ValueError):
    """The first stage selected no variable."""


@dataclass(frozen=True)
class AdaptiveWeights:
    support: np.ndarray
    lambda_screen: float
    weights: np.ndarray

    def as_dict(self):
        return {int(j): float(w) for j, w in zip(self.support, self.weights)}


@dataclass(frozen=True)
class SecondStageFit:
    kind: str
    mu: float
    beta: np.ndarray
    support: np.ndarray


def adaptive_weights(fit):
    """Penalty weights ``lam / |b_j|`` on the support of a Lasso fit."""
    beta = np.asarray(fit.beta, dtype=float)
    support = np.flatnonzero(np.abs(beta) > ZERO_TOL)
    if support.size == 0:
        raise EmptySupportError(f"Lasso fit at lambda={fit.lam:g} has an empty support")
    weights = fit.lam / np.abs(beta[support])
    return AdaptiveWeights(support, float(fit.lam), weights)


def uniform_weights(support, lambda_screen=np.nan):
    """Unit weights on ``support``: plain ridge expressed as adaptive weights."""
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        raise EmptySupportError("empty support")
    return AdaptiveWeights(support, float(lambda_screen), np.ones(support.size))


def penalty_diagonal(w, mu, kind):
    """Diagonal of ``Lambda`` on ``w.support`` for the given second-stage kind."""
    if kind == "ols":
        return np.zeros(w.support.size)
    if kind == "ridge":
        return np.full(w.support.size, float(mu))
    if kind == "adaptive_ridge":
        return float(mu) * w.weights
    raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")


def second_stage_fit(X, y, w, mu, kind="adaptive_ridge"):
    """Refit on ``w.support`` with an OLS, ridge or adaptive-ridge penalty.

    Returns a length-``p`` coefficient vector that is exactly zero off the
    support.  OLS on a rank-deficient ``X_S`` raises
    :class:`~twostage.linalg.SingularSystemError`.
    """
    if mu < 0:
        raise ValueError(f"mu must be non-negative, got {mu}")
    X = np.asarray(X, dtype=float)
    lam = penalty_diagonal(w, mu, kind)
    coef = solve_penalized(X[:, w.support], y, lam)
    beta = np.zeros(X.shape[1])
    beta[w.support] = coef
    return SecondStageFit(kind, float(0.0 if kind == "ols" else mu), beta, w.support.copy())


def ridge_mu_path(Xs, y, weights, mus):
    """Solutions of ``(Xs^T Xs + mu diag(weights)) b = Xs^T y`` for many ``mu``.

    One SVD of the rescaled design ``Xs diag(weights)^{-1/2}`` serves the
    whole grid.  Entries with ``mu = 0`` on a rank-deficient design are
    returned as NaN instead of a minimum-norm solution.

    Returns
    -------
    betas : array, shape (len(mus), q)
    """
    Xs = np.asarray(Xs, dtype=float)
    mus = np.asarray(mus, dtype=float)
    d = 1.0 / np.sqrt(np.asarray(weights, dtype=float))
    U, s, Vt = np.linalg.svd(Xs * d, full_matrices=False)
    uty = U.T @ y
    q = Xs.shape[1]
    rank = int(np.sum(s > s.max() * max(Xs.shape) * np.finfo(float).eps)) if s.size else 0
    out = np.empty((mus.size, q))
    for i, mu in enumerate(mus):
        if mu == 0 and rank < q:
            out[i] = np.nan
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(s > 0, s / (s**2 + mu), 0.0)
        out[i] = d * (Vt.T @ (f * uty))
    return out


def default_mu_grid(n, K=25, span=(1e-4, 1e4)):
    """``K`` geometric values spanning ``span`` times ``1/n``, increasing."""
    lo, hi = span
    return np.geomspace(lo / n, hi / n, K)
