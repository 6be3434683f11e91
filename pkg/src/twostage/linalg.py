"""Dense kernels for penalized least squares.

Everything here works on the active submatrix ``X_S`` (``n x q``) and a
diagonal penalty ``Lambda``.  The cached inverse ``M = (X^T X + Lambda)^{-1}``
is computed once; removing one variable is a Schur-complement downdate of
``M`` and refitting with a permuted column is a rank-one correction of the
reduced solution.  That is what makes permutation testing of every
screened variable affordable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SingularSystemError",
    "DegeneratePivotError",
    "PenalizedSystemCache",
    "DowndatedCache",
    "solve_penalized",
    "gram_inverse",
    "inverse_downdate",
    "permuted_refit",
    "permuted_refits",
]

# pivot threshold relative to the largest diagonal entry of X^T X + Lambda
SINGULAR_RTOL = 1e-12


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when ``X^T X + Lambda`` is numerically singular."""


class DegeneratePivotError(np.linalg.LinAlgError):
    """Raised when a Schur-complement pivot is zero or negative.

    ``index`` identifies the offending column of the active design.
    """

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


def _as_design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"design must be a non-empty 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design contains non-finite entries")
    return X


def _as_penalty(lam, q):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0:
        lam = np.full(q, float(lam))
    if lam.shape != (q,):
        raise ValueError(f"penalty has shape {lam.shape}, expected ({q},)")
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("penalty weights must be finite and non-negative")
    return lam


def _cholesky(A):
    """Lower Cholesky factor of ``A`` with an explicit singularity test."""
    scale = float(np.max(np.diag(A))) if A.size else 0.0
    if not scale > 0:
        raise SingularSystemError("penalized Gram matrix has no positive diagonal entry")
    try:
        L = scipy.linalg.cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"penalized Gram matrix is not positive definite: {exc}") from None
    pivots = np.diag(L) ** 2
    bad = np.flatnonzero(pivots <= SINGULAR_RTOL * scale)
    if bad.size:
        raise SingularSystemError(
            f"penalized Gram matrix is numerically singular (pivot {bad[0]} "
            f"= {pivots[bad[0]]:.3g}, scale {scale:.3g})"
        )
    return L


def solve_penalized(X, y, lam):
    """Solve ``(X^T X + Lambda) beta = X^T y``.

    Parameters
    ----------
    X : array, shape (n, q)
    y : array, shape (n,)
    lam : float or array, shape (q,)
        Diagonal of ``Lambda``.  A scalar is broadcast.

    Returns
    -------
    beta : array, shape (q,)

    Raises
    ------
    SingularSystemError
        If the system is numerically singular (e.g. ``Lambda = 0`` and
        ``X`` rank deficient).
    """
    X = _as_design(X)
    y = np.asarray(y, dtype=float)
    lam = _as_penalty(lam, X.shape[1])
    A = X.T @ X
    A[np.diag_indices_from(A)] += lam
    L = _cholesky(A)
    return scipy.linalg.cho_solve((L, True), X.T @ y, check_finite=False)


@dataclass(frozen=True)
class PenalizedSystemCache:
    """``M = (X^T X + Lambda)^{-1}`` together with the data it was built from."""

    gram_inverse: np.ndarray
    xty: np.ndarray
    design: np.ndarray
    response: np.ndarray
    penalty: np.ndarray

    @property
    def q(self):
        return self.design.shape[1]

    @property
    def beta(self):
        """Full-model solution ``M X^T y``."""
        return self.gram_inverse @ self.xty


@dataclass(frozen=True)
class DowndatedCache:
    """Reduced system after deleting column ``removed_index``."""

    removed_index: int
    gram_inverse_minus_j: np.ndarray
    beta_minus_j: np.ndarray
    design_minus_j: np.ndarray
    xty_minus_j: np.ndarray
    xj_sqnorm: float


def gram_inverse(X, lam, y=None):
    """Factor ``X^T X + Lambda`` once and return the cached inverse.

    ``y`` is optional so the cache can be built before the response is
    known; ``xty`` is then zero.
    """
    X = _as_design(X)
    q = X.shape[1]
    lam = _as_penalty(lam, q)
    A = X.T @ X
    A[np.diag_indices_from(A)] += lam
    L = _cholesky(A)
    M = scipy.linalg.cho_solve((L, True), np.eye(q), check_finite=False)
    M = 0.5 * (M + M.T)
    if y is None:
        y = np.zeros(X.shape[0])
    y = np.asarray(y, dtype=float)
    return PenalizedSystemCache(M, X.T @ y, X, y, lam)


def inverse_downdate(cache, j):
    """Remove variable ``j`` from the cached system via its Schur complement.

    ``(X_{-j}^T X_{-j} + Lambda_{-j})^{-1} = M_{-j,-j} - M_{-j,j} M_{jj}^{-1} M_{j,-j}``
    """
    q = cache.q
    if q < 2:
        raise ValueError("need at least two active columns to remove one")
    if not 0 <= j < q:
        raise IndexError(f"column {j} out of range for q={q}")
    M = cache.gram_inverse
    keep = np.r_[0:j, j + 1:q]
    mjj = M[j, j]
    if not mjj > 0:
        raise DegeneratePivotError(f"diagonal of cached inverse at column {j} is {mjj!r}", index=j)
    mcol = M[keep, j]
    Mj = M[np.ix_(keep, keep)] - np.outer(mcol, mcol) / mjj
    Mj = 0.5 * (Mj + Mj.T)
    xty = cache.xty[keep]
    Xr = cache.design[:, keep]
    xj = cache.design[:, j]
    return DowndatedCache(j, Mj, Mj @ xty, Xr, xty, float(xj @ xj))


def permuted_refits(down, xj_perms, y, lam_jj):
    """Refit the full model for a batch of replacement columns.

    Parameters
    ----------
    down : DowndatedCache
    xj_perms : array, shape (n, B)
        Each column replaces ``x_j``.  Permutations of ``x_j`` are the
        intended use but any replacement works (the squared norm is
        recomputed, not assumed).
    y : array, shape (n,)
    lam_jj : float
        Penalty on the replaced column.

    Returns
    -------
    betas : array, shape (q, B)
        Coefficients with the replaced column's coefficient at
        ``down.removed_index``.
    """
    Xp = np.asarray(xj_perms, dtype=float)
    if Xp.ndim == 1:
        Xp = Xp[:, None]
    y = np.asarray(y, dtype=float)
    Xr = down.design_minus_j
    U = Xr.T @ Xp                       # (q-1, B)
    V = -(down.gram_inverse_minus_j @ U)
    sq = np.einsum("ib,ib->b", Xp, Xp)
    a = sq + lam_jj + np.einsum("ib,ib->b", U, V)
    tol = SINGULAR_RTOL * np.maximum(sq + lam_jj, 1.0)
    if np.any(a <= tol):
        raise DegeneratePivotError(
            f"Schur complement for column {down.removed_index} is not positive "
            f"(min {a.min():.3g})",
            index=down.removed_index,
        )
    coef_j = (Xp.T @ y + V.T @ down.xty_minus_j) / a
    rest = down.beta_minus_j[:, None] + V * coef_j
    return np.insert(rest, down.removed_index, coef_j, axis=0)


def permuted_refit(down, xj_perm, y, lam_jj):
    """Single-column version of :func:`permuted_refits`; returns shape (q,)."""
    xj_perm = np.asarray(xj_perm, dtype=float).reshape(-1, 1)
    return permuted_refits(down, xj_perm, y, lam_jj)[:, 0]
