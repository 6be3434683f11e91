"""Acceptance criteria, run at their stated scale and tolerance.

Every test records one ``PASS``/``FAIL`` line; the lines are printed in
the ``acceptance criteria`` section at the end of the pytest run (and
immediately with ``-s``).  The simulation runs are shared between the
criteria that read them.
"""

import functools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import naive_permuted_f
from test_stats import adjusted_reference, random_pvalues, step_up_reference

from twostage import lambda_max, lasso_fit
from twostage.cli import main
from twostage.inference import draw_permutations, permutation_f_test
from twostage.lasso import kkt_violation
from twostage.penalized import EmptySupportError, adaptive_weights, second_stage_fit
from twostage.simulation import DesignSpec, run_experiment
from twostage.stats import ConfusionCounts, bh_adjust, bh_reject, confusion, fdp_sen

pytestmark = pytest.mark.slow

SEED = 2024
DESK = dict(n=150, p=100, s_star=10, rho=0.5, snr=4.0)
INFERENCE = ("AR", "ridge", "OLS", "univar", "F-std", "t-std")


def record(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def desk_run(design, methods=INFERENCE, replicates=300):
    t = time.perf_counter()
    res = run_experiment(DesignSpec(design, **DESK), methods, replicates=replicates, alpha=0.05,
                         seed=SEED, b_permutations=500, folds=10)
    stats = {}
    for row in res.summary():
        stats[row["method"], row["metric"]] = row["mean"]
    stats["failures"] = len(res.failures)
    stats["seconds"] = time.perf_counter() - t
    return stats


def pct(x):
    return f"{100 * x:.1f}%"


# ------------------------------------------------------------ calibration


def test_01_permutation_calibration():
    out, ok = [], True
    for design in ("IND", "BLOCK"):
        s = desk_run(design)
        fpr = s["AR", "fpr_pooled"]
        ok &= 0.03 <= fpr <= 0.07
        out.append(f"{design} {pct(fpr)} (ridge {pct(s['ridge', 'fpr_pooled'])}, "
                   f"OLS {pct(s['OLS', 'fpr_pooled'])})")
    assert record("1 permutation FPR in [3%, 7%]", ok, "; ".join(out))


def test_02_standard_f_inflated():
    s = desk_run("BLOCK")
    fpr = s["F-std", "fpr_pooled"]
    ind = desk_run("IND")["F-std", "fpr_pooled"]
    assert record("2 standard F FPR > 7% on BLOCK", fpr > 0.07,
                  f"BLOCK {pct(fpr)}, IND {pct(ind)}, t BLOCK {pct(s['t-std', 'fpr_pooled'])}")


def test_03_ar_fdr():
    fdr = {d: desk_run(d)["AR", "fdp"] for d in ("IND", "BLOCK")}
    assert record("3 AR cleaning FDR <= 7.5%", all(v <= 0.075 for v in fdr.values()),
                  ", ".join(f"{d} {pct(v)}" for d, v in fdr.items()))


def test_04_sensitivity_ordering():
    out, ok = [], True
    for design in ("IND", "BLOCK"):
        s = desk_run(design)
        ar, ridge, ols = s["AR", "sen"], s["ridge", "sen"], s["OLS", "sen"]
        ok &= ar >= ols + 0.05 and ar >= ridge
        out.append(f"{design} AR {pct(ar)} ridge {pct(ridge)} OLS {pct(ols)}")
    assert record("4 SEN(AR) >= SEN(OLS) + 5pp and >= SEN(ridge)", ok, "; ".join(out))


def test_05_univariate_baseline():
    fdr = desk_run("BLOCK")["univar", "fdp"]
    sen = desk_run("GROUP", ("univar",))["univar", "sen"]
    assert record("5 univariate FDR > 20% on BLOCK, SEN > 90% on GROUP", fdr > 0.20 and sen > 0.90,
                  f"BLOCK FDR {pct(fdr)}, GROUP SEN {pct(sen)}")


# ------------------------------------------------------------ kernels


def test_06_lasso_fixed_point():
    r = np.random.default_rng(6)
    worst, done = 0.0, 0
    while done < 50:
        n, p = int(r.integers(40, 81)), int(r.integers(10, 151))
        X = r.standard_normal((n, p))
        beta = np.zeros(p)
        beta[: max(1, p // 10)] = r.uniform(0.5, 2.0, max(1, p // 10))
        y = X @ beta + r.standard_normal(n)
        fit = lasso_fit(X, y, r.uniform(0.05, 0.5) * lambda_max(X, y))
        try:
            w = adaptive_weights(fit)
        except EmptySupportError:
            continue
        assert fit.converged
        S = w.support
        ar = second_stage_fit(X, y, w, 1.0, "adaptive_ridge").beta
        worst = max(worst, np.max(np.abs(ar[S] - fit.beta[S]) / np.abs(fit.beta[S])))
        done += 1
    assert record("6 adaptive ridge at mu=1 reproduces the Lasso", worst <= 1e-4,
                  f"max relative error {worst:.2e} over 50 problems")


def test_07_cached_equals_naive():
    r = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        q = int(r.integers(2, 11))
        n = int(r.integers(q + 5, 80))
        X = r.standard_normal((n, q))
        y = X @ r.standard_normal(q) + r.standard_normal(n)
        lam = r.uniform(0.0, 3.0, q)
        j = int(r.integers(q))
        t = permutation_f_test(X, y, lam, j, B=50, rng=np.random.default_rng(j))
        naive = naive_permuted_f(X, y, lam, j, draw_permutations(n, 50, np.random.default_rng(j)))
        worst = max(worst, np.max(np.abs(t.f_perm - naive) / np.abs(naive)))
    assert record("7 cached permutation path equals naive re-solves", worst <= 1e-8,
                  f"max relative error {worst:.2e} over 20 instances")


def test_08_cached_speed():
    r = np.random.default_rng(8)
    X = r.standard_normal((125, 30))
    y = X[:, :5].sum(axis=1) + r.standard_normal(125)
    lam = r.uniform(0.1, 2.0, 30)
    perms = draw_permutations(125, 1000, np.random.default_rng(0))

    def best_of(f, k):
        times = []
        for _ in range(k):
            t = time.perf_counter()
            f()
            times.append(time.perf_counter() - t)
        return min(times)

    cached = best_of(lambda: permutation_f_test(X, y, lam, 0, B=1000, rng=np.random.default_rng(0)), 5)
    naive = best_of(lambda: naive_permuted_f(X, y, lam, 0, perms), 2)
    ratio = naive / cached
    assert record("8 cached path >= 5x faster (q=30, n=125, B=1000)", ratio >= 5,
                  f"{ratio:.1f}x ({1e3 * cached:.1f} ms vs {1e3 * naive:.1f} ms)")


def test_09_lasso_correctness():
    r = np.random.default_rng(9)
    worst = 0.0
    for _ in range(200):
        n, p = int(r.integers(10, 120)), int(r.integers(2, 200))
        X = r.standard_normal((n, p)) * r.uniform(0.5, 2.0, p)
        y = X[:, : min(p, 5)].sum(axis=1) + r.standard_normal(n)
        lam = r.uniform(0.01, 1.0) * lambda_max(X, y)
        fit = lasso_fit(X, y, lam)
        worst = max(worst, kkt_violation(X.T @ X, X.T @ y, lam, fit.beta) / max(1.0, lam))
    orth = 0.0
    for _ in range(20):
        Q, _ = np.linalg.qr(r.standard_normal((40, 8)))
        y = r.standard_normal(40) * 3
        lam = r.uniform(0.1, 2.0)
        z = Q.T @ y
        soft = np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)
        orth = max(orth, np.max(np.abs(lasso_fit(Q, y, lam).beta - soft)))
    assert record("9 Lasso KKT <= 1e-6, orthonormal soft threshold <= 1e-8",
                  worst <= 1e-6 and orth <= 1e-8,
                  f"KKT {worst:.1e} over 200 problems, orthonormal {orth:.1e}")


# ------------------------------------------------------------ estimation


@functools.lru_cache(maxsize=None)
def estimation_run(snr, methods):
    spec = DesignSpec("IND", n=150, p=100, s_star=20, snr=snr)
    res = run_experiment(spec, methods, replicates=100, seed=SEED, folds=10)
    return {row["method"]: row["mean"] for row in res.summary() if row["metric"] == "prediction_error"}


@pytest.mark.xfail(strict=True, reason="OLS and ridge refits on the CV-min Lasso support lose to "
                                       "the Lasso at this scale; see README")
def test_10a_refits_beat_lasso_at_high_snr():
    e = estimation_run(32.0, ("L", "L+O", "L+R", "L+A", "L&A"))
    ok = all(e[m] < e["L"] for m in ("L+O", "L+R", "L+A"))
    detail = ", ".join(f"{m} {e[m]:.4f}" for m in ("L", "L+O", "L+R", "L+A"))
    assert record("10a SNR 32: L+O, L+R, L+A each below L", ok, detail)


def test_10b_joint_not_worse_than_serial():
    e = estimation_run(32.0, ("L", "L+O", "L+R", "L+A", "L&A"))
    assert record("10b SNR 32: L&A <= L+A", e["L&A"] <= e["L+A"], f"L&A {e['L&A']:.4f}, L+A {e['L+A']:.4f}")


def test_10c_ols_refit_hurts_at_low_snr():
    e = estimation_run(4.0, ("L", "L+O"))
    assert record("10c SNR 4: L+O does not beat L", e["L"] <= e["L+O"], f"L {e['L']:.4f}, L+O {e['L+O']:.4f}")


# ------------------------------------------------------------ kernels, CLI


def test_11_statistical_kernels():
    r = np.random.default_rng(11)
    ok = True
    for _ in range(1000):
        p = random_pvalues(r)
        ok &= np.array_equal(bh_reject(p, 0.05), step_up_reference(p, 0.05))
        ok &= np.array_equal(bh_adjust(p), adjusted_reference(p))
    hand = [
        (confusion([0, 1, 5], [0, 1, 2, 3], 10), (1 / 3, 0.5)),
        (confusion([], [0, 1], 5), (0.0, 0.0)),
        (ConfusionCounts(tp=4, fp=0, fn=0, tn=6), (0.0, 1.0)),
    ]
    ok &= all(np.allclose(fdp_sen(c), want) for c, want in hand)
    assert record("11 BH equals step-up reference on 1000 vectors; fdp_sen hand cases", bool(ok), "exact match")


def test_12_cli_determinism(tmp_path):
    small = ["--design", "BLOCK", "--n", "60", "--p", "40", "--s-star", "5", "--seed", "12",
             "--permutations", "99", "--folds", "5"]
    runs = {
        "experiment": ["--replicates", "4"],
        "estimate": ["--replicates", "3", "--method", "L", "--method", "L&A"],
        "screen-clean": ["--method", "AR", "--method", "OLS"],
        "simulate": [],
    }
    compared = 0
    ok = True
    for cmd, extra in runs.items():
        outs = []
        for tag, threads in (("a", "1"), ("b", "1"), ("c", "3")):
            d = tmp_path / f"{cmd}-{tag}"
            assert main([cmd, *small, *extra, "--threads", threads, "--out", str(d)]) == 0
            outs.append({f.name: f.read_bytes() for f in sorted(d.iterdir())})
        ok &= outs[0] == outs[1] == outs[2]
        compared += len(outs[0])
    assert record("12 CLI outputs byte-identical across reruns and --threads", ok,
                  f"{compared} files across 4 commands")
