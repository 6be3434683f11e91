"""Independent reference implementations used as test oracles.

Nothing here reuses the package's factorizations or caches.
"""

import numpy as np
import scipy.stats


def ridge_solve(X, y, lam):
    A = X.T @ X + np.diag(np.broadcast_to(np.asarray(lam, dtype=float), X.shape[1]))
    return np.linalg.solve(A, X.T @ y)


def naive_permuted_f(X, y, lam, j, perms):
    """F statistics from a full re-solve of the larger model per permutation."""
    keep = np.delete(np.arange(X.shape[1]), j)
    b0 = ridge_solve(X[:, keep], y, np.asarray(lam)[keep])
    rss0 = np.sum((y - X[:, keep] @ b0) ** 2)
    out = np.empty(len(perms))
    for b, perm in enumerate(perms):
        Xp = X.copy()
        Xp[:, j] = X[perm, j]
        beta = ridge_solve(Xp, y, lam)
        rss1 = np.sum((y - Xp @ beta) ** 2)
        out[b] = (rss0 - rss1) / rss1
    return out


def classical_partial_f(X, y, j):
    n, q = X.shape
    keep = np.delete(np.arange(q), j)
    rss1 = np.sum((y - X @ np.linalg.lstsq(X, y, rcond=None)[0]) ** 2)
    X0 = X[:, keep]
    rss0 = np.sum((y - X0 @ np.linalg.lstsq(X0, y, rcond=None)[0]) ** 2) if keep.size else y @ y
    F = (rss0 - rss1) / (rss1 / (n - q))
    return scipy.stats.f.sf(F, 1, n - q)


def classical_t(X, y, j):
    n, q = X.shape
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    s2 = np.sum((y - X @ beta) ** 2) / (n - q)
    se = np.sqrt(s2 * np.linalg.inv(X.T @ X)[j, j])
    return 2 * scipy.stats.t.sf(abs(beta[j] / se), n - q)
