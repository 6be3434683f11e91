"""A desk-scale inference study: FDR, sensitivity and null rejection rates.

Equivalent CLI call::

    twostage experiment --design IND --n 150 --p 100 --s-star 10 --replicates 20 \\
        --permutations 500 --method AR --method OLS --method univar --method F-std
"""

from twostage import DesignSpec, run_experiment

methods = ("AR", "ridge", "OLS", "univar", "F-std", "t-std")
for design in ("IND", "BLOCK"):
    spec = DesignSpec(design, n=150, p=100, s_star=10, rho=0.5, snr=4.0)
    res = run_experiment(spec, methods, replicates=20, seed=3, b_permutations=500)
    print(design)
    for m in methods:
        s = {r["metric"]: r["mean"] for r in res.summary() if r["method"] == m}
        print(f"  {m:>6}  FDR {s['fdp']:.3f}  SEN {s['sen']:.3f}  null rejections {s['fpr_pooled']:.3f}")
