"""Mean prediction error of the five estimation pipelines on a small study.

Prediction error is the exact (b - beta)' Sigma (b - beta) under the
simulation covariance.  Expect a few minutes on one core.
"""

from twostage import DesignSpec, run_experiment

methods = ("L", "L+O", "L+R", "L+A", "L&A")
for snr in (4.0, 32.0):
    spec = DesignSpec("IND", n=150, p=100, s_star=20, snr=snr)
    res = run_experiment(spec, methods, replicates=20, seed=1, folds=10)
    errors = {r["method"]: r["mean"] for r in res.summary() if r["metric"] == "prediction_error"}
    print(f"SNR {snr:>4}: " + "  ".join(f"{m} {errors[m]:.3f}" for m in methods))
