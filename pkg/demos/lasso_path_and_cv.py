"""Lasso regularization path, cross-validated choice of lambda and a KKT check.

Run with ``python demos/lasso_path_and_cv.py``.
"""

import numpy as np

from twostage import cv_select, lambda_grid, lambda_max, lasso_path
from twostage.lasso import default_ratio, kkt_violation

rng = np.random.default_rng(0)
n, p = 100, 60
X = rng.standard_normal((n, p))
beta = np.zeros(p)
beta[:6] = [2.0, -1.5, 1.0, 0.8, -0.6, 0.4]
y = X @ beta + rng.standard_normal(n)

grid = lambda_grid(lambda_max(X, y), 100, default_ratio(n, p))
path = lasso_path(X, y, grid)
sizes = [f.support.size for f in path.fits]
print(f"lambda_max = {grid[0]:.3f}; support grows from {sizes[0]} to {sizes[-1]} along the path")

for rule in ("min", "one_se"):
    cv = cv_select(X, y, grid, n_folds=10, rule=rule, seed=1)
    fit = path.fits[cv.index]
    print(f"{rule:>6}: lambda = {cv.chosen_lambda:.4f}, support = {fit.support.tolist()}")

# stationarity: the largest KKT violation along the path, relative to lambda
worst = max(kkt_violation(X.T @ X, X.T @ y, f.lam, f.beta) / max(1.0, f.lam) for f in path.fits)
print(f"worst KKT violation on the path: {worst:.1e}")
