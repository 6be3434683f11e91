"""Simulated designs and the replicate driver.

Designs (predictors are zero-mean Gaussian, blocks are contiguous index
ranges of ``block_size`` variables):

* ``IND``      identity covariance.
* ``BLOCK``    equicorrelation ``rho`` inside blocks, relevant variables
  scattered uniformly over all indices.
* ``GROUP``    same covariance, relevant variables packed into whole
  randomly chosen blocks.
* ``TOEP_NEG`` Toeplitz blocks ``(-rho)^|i-j|``, support placed as GROUP.

The noise level is set from the signal-to-noise ratio
``beta*^T Sigma beta* / sigma^2``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg
from threadpoolctl import threadpool_limits

from . import _seeding
from .dataset import Dataset
from .estimation import METHODS as ESTIMATION_METHODS
from .estimation import EstimationConfig, estimate, prediction_error
from .inference import (
    ScreenCleanConfig,
    choose_cleaning_mu,
    clean,
    screen,
    split_half,
    standard_f_pvalue,
    standard_t_pvalue,
    univariate_pvalues,
)
from .linalg import gram_inverse
from .penalized import penalty_diagonal, uniform_weights
from .stats import bh_adjust, confusion, fdp_sen, fpr_over_screened, sen_fdr_curve

__all__ = [
    "DESIGNS",
    "INFERENCE_METHODS",
    "ESTIMATION_METHODS",
    "CovarianceError",
    "DesignSpec",
    "SimulatedDataset",
    "ExperimentResult",
    "block_slices",
    "covariance",
    "place_support",
    "draw_beta",
    "noise_sigma",
    "simulate",
    "run_experiment",
]

DESIGNS = ("IND", "BLOCK", "GROUP", "TOEP_NEG")
BETA_LAWS = ("uniform_0.1_1", "signed_unit")
INFERENCE_METHODS = ("AR", "ridge", "OLS", "univar", "F-std", "t-std")
_CLEAN_KIND = {"AR": "adaptive_ridge", "ridge": "ridge", "OLS": "ols"}


class CovarianceError(np.linalg.LinAlgError):
    """A design covariance block is not positive definite."""


@dataclass(frozen=True)
class DesignSpec:
    design: str = "IND"
    n: int = 250
    p: int = 500
    s_star: int = 25
    rho: float = 0.5
    snr: float = 4.0
    block_size: int = 25
    beta_law: str = "uniform_0.1_1"
    seed: int = 0

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}; expected one of {DESIGNS}")
        if self.beta_law not in BETA_LAWS:
            raise ValueError(f"unknown beta_law {self.beta_law!r}; expected one of {BETA_LAWS}")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 1 <= self.s_star <= self.p:
            raise ValueError(f"s_star must lie in [1, p={self.p}], got {self.s_star}")
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if self.design != "IND" and not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.design in ("GROUP", "TOEP_NEG"):
            needed = math.ceil(self.s_star / self.block_size)
            if needed > len(block_slices(self.p, self.block_size)):
                raise ValueError(f"s_star={self.s_star} needs {needed} blocks of {self.block_size}, p={self.p} is too small")


@dataclass(frozen=True)
class SimulatedDataset:
    x: np.ndarray
    y: np.ndarray
    beta_star: np.ndarray
    support_star: np.ndarray
    sigma_matrix: np.ndarray = field(repr=False)
    sigma_noise: float = 1.0

    @property
    def data(self):
        return Dataset(self.x, self.y)


def block_slices(p, block_size):
    return [slice(a, min(a + block_size, p)) for a in range(0, p, block_size)]


def _block(design, size, rho):
    lag = np.abs(np.subtract.outer(np.arange(size), np.arange(size)))
    if design in ("BLOCK", "GROUP"):
        return np.where(lag == 0, 1.0, rho)
    return (-rho) ** lag


def covariance(spec):
    """Population covariance of the predictors, checked positive definite."""
    p = spec.p
    if spec.design == "IND":
        return np.eye(p)
    S = np.zeros((p, p))
    for b, sl in enumerate(block_slices(p, spec.block_size)):
        blk = _block(spec.design, sl.stop - sl.start, spec.rho)
        try:
            scipy.linalg.cholesky(blk, lower=True)
        except np.linalg.LinAlgError:
            raise CovarianceError(f"{spec.design} block {b} (indices {sl.start}..{sl.stop - 1}) "
                                  f"is not positive definite at rho={spec.rho}") from None
        S[sl, sl] = blk
    return S


def place_support(spec, rng):
    """Indices of the relevant variables, sorted."""
    if spec.design in ("IND", "BLOCK"):
        return np.sort(rng.choice(spec.p, size=spec.s_star, replace=False))
    blocks = block_slices(spec.p, spec.block_size)
    chosen = np.sort(rng.choice(len(blocks), size=math.ceil(spec.s_star / spec.block_size), replace=False))
    idx = np.concatenate([np.arange(blocks[b].start, blocks[b].stop) for b in chosen])
    return np.sort(idx[: spec.s_star])


def draw_beta(support, p, law="uniform_0.1_1", rng=None):
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        raise ValueError("support must be non-empty")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    beta = np.zeros(p)
    if law == "uniform_0.1_1":
        beta[support] = rng.uniform(0.1, 1.0, size=support.size)
    elif law == "signed_unit":
        signs = np.where(np.arange(support.size) % 2 == 0, 1.0, -1.0)
        beta[support] = rng.permutation(signs)
    else:
        raise ValueError(f"unknown law {law!r}")
    return beta


def noise_sigma(beta_star, sigma_matrix, snr):
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    signal = float(beta_star @ sigma_matrix @ beta_star)
    if not signal > 0:
        raise ValueError("signal variance is zero: SNR is undefined")
    return math.sqrt(signal / snr)


def _chol(spec, sigma):
    if spec.design == "IND":
        return None
    return np.linalg.cholesky(sigma)


def simulate(spec, rng=None, truth=None, sigma_matrix=None):
    """Draw one dataset ``y = X beta* + sigma z``.

    Parameters
    ----------
    spec : DesignSpec
    rng : Generator or int, optional
        Defaults to a generator seeded from ``spec.seed``.
    truth : (support, beta) tuple, optional
        Fixed ground truth; otherwise drawn from ``rng``.
    sigma_matrix : array, optional
        Precomputed ``covariance(spec)``.
    """
    if rng is None:
        rng = _seeding.make_rng(spec.seed)
    elif not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    S = covariance(spec) if sigma_matrix is None else sigma_matrix
    if truth is None:
        support = place_support(spec, rng)
        beta = draw_beta(support, spec.p, spec.beta_law, rng)
    else:
        support, beta = truth
    sigma = noise_sigma(beta, S, spec.snr)
    Z = rng.standard_normal((spec.n, spec.p))
    L = _chol(spec, S)
    X = Z if L is None else Z @ L.T
    y = X @ beta + sigma * rng.standard_normal(spec.n)
    return SimulatedDataset(X, y, beta, np.asarray(support), S, sigma)


@dataclass
class ExperimentResult:
    spec: DesignSpec
    estimation_rows: list
    inference_rows: list
    curves: dict
    failures: list
    example: SimulatedDataset | None = None

    def inference(self, method, key):
        return np.array([r[key] for r in self.inference_rows if r["method"] == method and not r["failed"]])

    def estimation(self, method, key="prediction_error"):
        return np.array([r[key] for r in self.estimation_rows if r["method"] == method and not r["failed"]])

    def fdr(self, method):
        return float(np.mean(self.inference(method, "fdp")))

    def sen(self, method):
        return float(np.mean(self.inference(method, "sen")))

    def fpr(self, method):
        return fpr_over_screened(self.inference(method, "n_null_tested"), self.inference(method, "n_null_rejected"))

    def fpr_replicate_mean(self, method):
        t = self.inference(method, "n_null_tested").astype(float)
        r = self.inference(method, "n_null_rejected").astype(float)
        ok = t > 0
        return float(np.mean(r[ok] / t[ok])) if ok.any() else float("nan")

    def summary(self):
        """Aggregate rows: method, metric, mean, sd, n_ok, n_failed."""
        out = []
        for method in dict.fromkeys(r["method"] for r in self.estimation_rows):
            rows = [r for r in self.estimation_rows if r["method"] == method]
            ok = [r for r in rows if not r["failed"]]
            for metric in ("prediction_error", "chosen_lambda", "chosen_mu"):
                out.append(_agg(method, metric, [r[metric] for r in ok], len(ok), len(rows) - len(ok)))
        for method in dict.fromkeys(r["method"] for r in self.inference_rows):
            rows = [r for r in self.inference_rows if r["method"] == method]
            ok = [r for r in rows if not r["failed"]]
            nf = len(rows) - len(ok)
            for metric in ("fdp", "sen", "n_screened", "n_discoveries"):
                out.append(_agg(method, metric, [r[metric] for r in ok], len(ok), nf))
            out.append(dict(method=method, metric="fpr_pooled", mean=self.fpr(method), sd=None, n_ok=len(ok), n_failed=nf))
            out.append(dict(method=method, metric="fpr_replicate_mean", mean=self.fpr_replicate_mean(method),
                            sd=None, n_ok=len(ok), n_failed=nf))
        return out


def _agg(method, metric, values, n_ok, n_failed):
    v = np.array([np.nan if x is None else x for x in values], dtype=float)
    v = v[np.isfinite(v)]
    mean = float(v.mean()) if v.size else float("nan")
    sd = float(v.std(ddof=1)) if v.size > 1 else (0.0 if v.size == 1 else float("nan"))
    return dict(method=method, metric=metric, mean=mean, sd=sd, n_ok=n_ok, n_failed=n_failed)


def _inference_row(r, method, tested, rejected_raw, discoveries, truth, p, n_screened):
    fdp, sen = fdp_sen(confusion(discoveries, truth, p))
    nulls = ~np.isin(tested, truth)
    return dict(replicate=r, method=method, fdp=fdp, sen=sen, n_screened=int(n_screened),
                n_discoveries=int(len(discoveries)), n_null_tested=int(nulls.sum()),
                n_null_rejected=int(np.sum(nulls & rejected_raw)), failed=False, error="")


def _failed_inference(r, method, exc):
    return dict(replicate=r, method=method, fdp=None, sen=None, n_screened=None, n_discoveries=None,
                n_null_tested=None, n_null_rejected=None, failed=True, error=f"{type(exc).__name__}: {exc}")


def _run_inference(r, sim, methods, cfg, seed):
    rows, rankings = [], {}
    truth = sim.support_star
    p = sim.x.shape[1]
    data = sim.data
    if "univar" in methods:
        try:
            pv = univariate_pvalues(data)
            disc = np.flatnonzero(bh_adjust(pv) <= cfg.alpha)
            rows.append(_inference_row(r, "univar", np.arange(p), pv <= cfg.alpha, disc, truth, p, p))
            rankings["univar"] = np.lexsort((-np.abs(_univariate_t(data)), pv))
        except Exception as exc:  # recorded, not fatal
            rows.append(_failed_inference(r, "univar", exc))
    wanted = [m for m in methods if m != "univar"]
    if not wanted:
        return rows, rankings
    split = split_half(data, _seeding.child(seed, _seeding.SPLIT))
    sr = screen(split.d1, cfg.folds, cfg.n_lambdas, cfg.lambda_ratio, cfg.rule,
                _seeding.child(seed, _seeding.SCREEN))
    mus = {}
    for method in wanted:
        kind = _CLEAN_KIND.get(method, "adaptive_ridge")
        try:
            if kind not in mus:
                mus[kind] = choose_cleaning_mu(split, sr, cfg, kind)
            mu = mus[kind]
            if method in _CLEAN_KIND:
                w = None if kind != "ridge" or sr.empty else uniform_weights(sr.support, sr.chosen_lambda)
                cr = clean(split.d2, sr, mu, cfg.b_permutations, cfg.alpha,
                           _seeding.child(seed, _seeding.PERM), kind, w)
                rows.append(_inference_row(r, method, cr.tested, cr.pvalues <= cfg.alpha,
                                           cr.discoveries, truth, p, sr.support.size))
                rankings[method] = cr.ranking()
            else:
                pv = _standard_pvalues(split.d2, sr, mu, method)
                disc = sr.support[bh_adjust(pv) <= cfg.alpha] if pv.size else sr.support[:0]
                rows.append(_inference_row(r, method, sr.support, pv <= cfg.alpha, disc, truth, p, sr.support.size))
                rankings[method] = sr.support[np.argsort(pv, kind="stable")]
        except Exception as exc:  # recorded, not fatal
            rows.append(_failed_inference(r, method, exc))
    return rows, rankings


def _univariate_t(data):
    xc = data.x - data.x.mean(axis=0)
    yc = data.y - data.y.mean()
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (xc.T @ yc) / np.sqrt(np.einsum("ij,ij->j", xc, xc) * (yc @ yc))
    return np.nan_to_num(r)


def _standard_pvalues(d2, sr, mu, method):
    if sr.empty:
        return np.ones(0)
    Xs = d2.x[:, sr.support]
    pen = penalty_diagonal(sr.weights, mu, "adaptive_ridge")
    cache = gram_inverse(Xs, pen, d2.y)
    test = standard_f_pvalue if method == "F-std" else standard_t_pvalue
    return np.array([test(Xs, d2.y, pen, j, cache=cache) for j in range(sr.support.size)])


def _run_estimation(r, sim, methods, est_kw, seed):
    rows = []
    shared = {}
    for method in methods:
        cfg = EstimationConfig(method=method, seed=_seeding.child(seed, _seeding.FOLDS), **est_kw)
        try:
            res = estimate(sim.x, sim.y, cfg, shared)
            rows.append(dict(replicate=r, method=method, chosen_lambda=res.chosen_lambda,
                             chosen_mu=res.chosen_mu,
                             prediction_error=prediction_error(res.beta, sim.beta_star, sim.sigma_matrix),
                             n_support=int(res.support.size), failed=False, error=""))
        except Exception as exc:  # recorded, not fatal
            rows.append(dict(replicate=r, method=method, chosen_lambda=None, chosen_mu=None,
                             prediction_error=None, n_support=None, failed=True,
                             error=f"{type(exc).__name__}: {exc}"))
    return rows


def run_experiment(spec, methods=ESTIMATION_METHODS + INFERENCE_METHODS, replicates=10, alpha=0.05,
                   seed=0, *, b_permutations=1000, folds=10, rule="min", threads=1, fixed_truth=False,
                   mu_source="d1", estimation_kw=None, keep_example=False):
    """Simulate ``replicates`` datasets and run every method on each.

    Replicate ``r`` draws its data from the stream ``(seed, r)``, so its
    results do not depend on how many replicates run or on ``threads``.
    A method that raises on a replicate is recorded as failed and
    excluded from the aggregates.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    unknown = [m for m in methods if m not in ESTIMATION_METHODS + INFERENCE_METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}")
    est_methods = [m for m in methods if m in ESTIMATION_METHODS]
    inf_methods = [m for m in methods if m in INFERENCE_METHODS]
    cfg = ScreenCleanConfig(folds=folds, rule=rule, b_permutations=b_permutations, alpha=alpha,
                            mu_source=mu_source, seed=seed)
    est_kw = dict(folds=folds, rule=rule, **(estimation_kw or {}))
    sigma = covariance(spec)
    truth = None
    if fixed_truth:
        trng = _seeding.make_rng(seed, _seeding.TRUTH)
        support = place_support(spec, trng)
        truth = (support, draw_beta(support, spec.p, spec.beta_law, trng))

    def one(r):
        sim = simulate(spec, _seeding.make_rng(seed, r, _seeding.DATA), truth, sigma)
        rseed = _seeding.child(seed, r)
        est = _run_estimation(r, sim, est_methods, est_kw, rseed)
        inf, ranks = _run_inference(r, sim, inf_methods, cfg, rseed) if inf_methods else ([], {})
        return sim, est, inf, ranks

    with threadpool_limits(limits=1):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(one, range(replicates)))
        else:
            outs = [one(r) for r in range(replicates)]

    est_rows = [row for o in outs for row in o[1]]
    inf_rows = [row for o in outs for row in o[2]]
    curves = {}
    for method in inf_methods:
        ranked = [(o[3][method], o[0].support_star) for o in outs if method in o[3]]
        if ranked:
            curves[method] = sen_fdr_curve([a for a, _ in ranked], [b for _, b in ranked])
    failures = [row for row in est_rows + inf_rows if row["failed"]]
    spec = replace(spec, seed=seed)
    return ExperimentResult(spec, est_rows, inf_rows, curves, failures, outs[0][0] if keep_example else None)


def spec_dict(spec):
    return asdict(spec)
