"""Command-line front end.

Commands
--------
``simulate``      draw one dataset and write ``dataset.csv`` plus its sidecar.
``estimate``      run estimation methods on simulated replicates or on ``--data``.
``screen-clean``  run the screen-and-clean test procedure on one dataset.
``experiment``    simulate replicates and run every requested method.

Settings come from built-in defaults, then an optional ``--config`` file,
then command-line flags.  The config file is plain ``key = value`` text.
Keys before any section header apply to every command; a section named
after a command (``[experiment]``) applies to that command only.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _seeding
from .dataset import fmt, read_dataset_csv, sidecar_path, write_dataset_csv
from .estimation import METHODS as ESTIMATION_METHODS
from .estimation import EstimationConfig, estimate, prediction_error
from .inference import CLEAN_KINDS, ScreenCleanConfig, screen_and_clean
from .simulation import (
    BETA_LAWS,
    DESIGNS,
    INFERENCE_METHODS,
    DesignSpec,
    covariance,
    run_experiment,
    simulate,
    spec_dict,
)
from .stats import confusion, fdp_sen

__all__ = ["ConfigError", "RunConfig", "parse_config", "run", "main"]

COMMANDS = ("simulate", "estimate", "screen-clean", "experiment")
ENV_THREADS = "TWOSTAGE_THREADS"

ESTIMATION_COLUMNS = ["replicate", "method", "chosen_lambda", "chosen_mu", "prediction_error",
                      "n_support", "failed", "error"]
INFERENCE_COLUMNS = ["replicate", "method", "fdp", "sen", "n_screened", "n_discoveries",
                     "n_null_tested", "n_null_rejected", "failed", "error"]
CURVE_COLUMNS = ["method", "rank", "mean_fdr", "mean_sen"]
SUMMARY_COLUMNS = ["method", "metric", "mean", "sd", "n_ok", "n_failed"]
COEFFICIENT_COLUMNS = ["method", "variable", "coefficient"]
DISCOVERY_COLUMNS = ["method", "variable", "pvalue", "adjusted_pvalue", "discovered"]

DEFAULT_METHODS = {
    "simulate": (),
    "estimate": ESTIMATION_METHODS,
    "screen-clean": ("AR",),
    "experiment": ESTIMATION_METHODS + INFERENCE_METHODS,
}


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    design: DesignSpec = field(default_factory=DesignSpec)
    methods: tuple = ()
    alpha: float = 0.05
    b_permutations: int = 1000
    folds: int = 10
    replicates: int = 10
    rule: str = "min"
    standardize: bool = False
    seed: int = 0
    threads: int = 1
    out: Path = Path(".")
    data: Path | None = None
    fixed_truth: bool = False
    mu_source: str = "d1"


# key -> (parser, RunConfig field or "design.<field>")
def _int(key, v):
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _float(key, v):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {v!r}") from None


def _bool(key, v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true or false, got {v!r}")


def _str(key, v):
    return str(v).strip()


def _methods(key, v):
    items = v if isinstance(v, (list, tuple)) else str(v).replace(",", " ").split()
    return tuple(str(m).strip() for m in items if str(m).strip())


def _rule(key, v):
    r = str(v).strip().replace("-", "_")
    if r not in ("min", "one_se"):
        raise ConfigError(f"{key}: expected min or one-se, got {v!r}")
    return r


KEYS = {
    "design": (_str, "design.design"),
    "n": (_int, "design.n"),
    "p": (_int, "design.p"),
    "s_star": (_int, "design.s_star"),
    "rho": (_float, "design.rho"),
    "snr": (_float, "design.snr"),
    "block_size": (_int, "design.block_size"),
    "beta_law": (_str, "design.beta_law"),
    "methods": (_methods, "methods"),
    "alpha": (_float, "alpha"),
    "permutations": (_int, "b_permutations"),
    "folds": (_int, "folds"),
    "replicates": (_int, "replicates"),
    "rule": (_rule, "rule"),
    "standardize": (_bool, "standardize"),
    "seed": (_int, "seed"),
    "threads": (_int, "threads"),
    "out": (lambda k, v: Path(str(v).strip()), "out"),
    "data": (lambda k, v: Path(str(v).strip()), "data"),
    "fixed_truth": (_bool, "fixed_truth"),
    "mu_source": (_str, "mu_source"),
}
ALIASES = {"method": "methods", "b_permutations": "permutations", "b": "permutations"}


def _canonical(key):
    k = key.strip().lower().replace("-", "_")
    k = ALIASES.get(k, k)
    if k not in KEYS:
        raise ConfigError(f"unknown configuration key {key!r}")
    return k


def read_config_file(path, command):
    """Key/value pairs from ``path`` that apply to ``command``."""
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None, default_section="\0none")
    cp.optionxform = str
    try:
        cp.read_string("[common]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in cp.sections():
        if section not in ("common",) + COMMANDS:
            raise ConfigError(f"{path}: unknown section [{section}]")
    values = {}
    for section in ("common", command):
        if cp.has_section(section):
            for key, v in cp.items(section):
                values[_canonical(key)] = v
    return values


def _validate(cfg):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command: unknown command {cfg.command!r}")
    if not 0 < cfg.alpha < 1:
        raise ConfigError(f"alpha: must lie in (0, 1), got {cfg.alpha}")
    if cfg.b_permutations < 99:
        raise ConfigError(f"permutations: must be >= 99, got {cfg.b_permutations}")
    if cfg.folds < 2:
        raise ConfigError(f"folds: must be >= 2, got {cfg.folds}")
    if cfg.replicates < 1:
        raise ConfigError(f"replicates: must be >= 1, got {cfg.replicates}")
    if cfg.threads < 1:
        raise ConfigError(f"threads: must be >= 1, got {cfg.threads}")
    if cfg.seed < 0:
        raise ConfigError(f"seed: must be non-negative, got {cfg.seed}")
    if cfg.mu_source not in ("d1", "d2"):
        raise ConfigError(f"mu_source: expected d1 or d2, got {cfg.mu_source!r}")
    allowed = {
        "estimate": ESTIMATION_METHODS,
        "screen-clean": tuple(CLEAN_KINDS),
        "experiment": ESTIMATION_METHODS + INFERENCE_METHODS,
        "simulate": (),
    }[cfg.command]
    bad = [m for m in cfg.methods if m not in allowed]
    if bad:
        raise ConfigError(f"methods: {bad} not available for {cfg.command} (choose from {list(allowed)})")
    if cfg.data is not None and cfg.command in ("simulate", "experiment"):
        raise ConfigError(f"data: not accepted by {cfg.command}")
    if cfg.standardize and cfg.data is None:
        raise ConfigError("standardize: only applies to an input dataset given with data")


def parse_config(values, command, config_path=None):
    """Build a validated :class:`RunConfig`.

    ``values`` holds flag values (keys as in the config file); they take
    precedence over the file at ``config_path``.
    """
    merged = {}
    if config_path is not None:
        merged.update(read_config_file(config_path, command))
    for key, v in values.items():
        if v is not None:
            merged[_canonical(key)] = v
    if "threads" not in merged and os.environ.get(ENV_THREADS):
        merged["threads"] = os.environ[ENV_THREADS]

    top, design = {}, {}
    for key, raw in merged.items():
        parse, target = KEYS[key]
        v = parse(key, raw)
        if target.startswith("design."):
            design[target[7:]] = v
        else:
            top[target] = v
    if "design" in design:
        design["design"] = design["design"].upper().replace("-", "_")
        if design["design"] not in DESIGNS:
            raise ConfigError(f"design: expected one of {list(DESIGNS)}, got {design['design']!r}")
    if "beta_law" in design and design["beta_law"] not in BETA_LAWS:
        raise ConfigError(f"beta_law: expected one of {list(BETA_LAWS)}, got {design['beta_law']!r}")
    seed = top.get("seed", 0)
    try:
        spec = DesignSpec(**design, seed=seed)
    except ValueError as exc:
        raise ConfigError(f"design: {exc}") from None
    top.setdefault("methods", DEFAULT_METHODS[command])
    cfg = RunConfig(command=command, design=spec, **top)
    _validate(cfg)
    return cfg


# ---------------------------------------------------------------- output


class _Writer:
    """Tracks files written so a failed run can remove them."""

    def __init__(self, out):
        self.out = Path(out)
        self.files = []

    def path(self, name):
        p = self.out / name
        self.files.append(p)
        return p

    def csv(self, name, columns, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([fmt(row.get(c)) for c in columns])

    def dataset(self, name, data, meta):
        p = self.path(name)
        self.files.append(sidecar_path(p))
        write_dataset_csv(p, data, meta)

    def discard(self):
        for p in self.files:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _meta(spec, sim, seed, replicate=0):
    return {
        "spec": spec_dict(spec),
        "seed": seed,
        "replicate": replicate,
        "beta_star": sim.beta_star.tolist(),
        "support_star": [int(j) for j in sim.support_star],
        "sigma_noise": float(sim.sigma_noise),
    }


def _simulate_one(cfg):
    spec = cfg.design
    return simulate(spec, _seeding.make_rng(cfg.seed, 0, _seeding.DATA), sigma_matrix=covariance(spec))


def _curve_rows(curves):
    rows = []
    for method, c in curves.items():
        for k, f, s in zip(c.ranks, c.fdr, c.sen):
            rows.append(dict(method=method, rank=int(k), mean_fdr=float(f), mean_sen=float(s)))
    return rows


def _load_input(cfg):
    data, meta = read_dataset_csv(cfg.data)
    if cfg.standardize:
        data = data.standardized()
    return data, meta


def _truth_from_meta(meta, p):
    if not meta or "beta_star" not in meta:
        return None
    beta = np.asarray(meta["beta_star"], dtype=float)
    if beta.size != p:
        raise ValueError(f"sidecar beta_star has {beta.size} entries, dataset has {p} columns")
    return beta


def cmd_simulate(cfg, w):
    sim = _simulate_one(cfg)
    w.dataset("dataset.csv", sim.data, _meta(cfg.design, sim, cfg.seed))
    return 0


def cmd_experiment(cfg, w):
    res = run_experiment(cfg.design, cfg.methods, cfg.replicates, cfg.alpha, cfg.seed,
                         b_permutations=cfg.b_permutations, folds=cfg.folds, rule=cfg.rule,
                         threads=cfg.threads, fixed_truth=cfg.fixed_truth, mu_source=cfg.mu_source,
                         keep_example=True)
    w.dataset("dataset.csv", res.example.data, _meta(cfg.design, res.example, cfg.seed))
    w.csv("estimation.csv", ESTIMATION_COLUMNS, res.estimation_rows)
    w.csv("inference.csv", INFERENCE_COLUMNS, res.inference_rows)
    w.csv("curve.csv", CURVE_COLUMNS, _curve_rows(res.curves))
    w.csv("summary.csv", SUMMARY_COLUMNS, res.summary())
    _report_failures(res.failures)
    return 0


def cmd_estimate(cfg, w):
    if cfg.data is None:
        res = run_experiment(cfg.design, cfg.methods, cfg.replicates, cfg.alpha, cfg.seed,
                             folds=cfg.folds, rule=cfg.rule, threads=cfg.threads,
                             fixed_truth=cfg.fixed_truth)
        w.csv("estimation.csv", ESTIMATION_COLUMNS, res.estimation_rows)
        w.csv("summary.csv", SUMMARY_COLUMNS, res.summary())
        _report_failures(res.failures)
        return 0
    data, meta = _load_input(cfg)
    beta_star = None if cfg.standardize else _truth_from_meta(meta, data.p)
    sigma = None
    if beta_star is not None and "spec" in meta:
        sigma = covariance(DesignSpec(**meta["spec"]))
    rows, coefs = [], []
    for method in cfg.methods:
        ecfg = EstimationConfig(method=method, folds=cfg.folds, rule=cfg.rule,
                                seed=_seeding.child(cfg.seed, 0, _seeding.FOLDS))
        r = estimate(data.x, data.y, ecfg)
        pe = prediction_error(r.beta, beta_star, sigma) if sigma is not None else None
        rows.append(dict(replicate=0, method=method, chosen_lambda=r.chosen_lambda, chosen_mu=r.chosen_mu,
                         prediction_error=pe, n_support=int(r.support.size), failed=False, error=""))
        coefs += [dict(method=method, variable=f"x{j + 1}", coefficient=float(b)) for j, b in enumerate(r.beta)]
    w.csv("estimation.csv", ESTIMATION_COLUMNS, rows)
    w.csv("coefficients.csv", COEFFICIENT_COLUMNS, coefs)
    return 0


def cmd_screen_clean(cfg, w):
    if cfg.data is None:
        sim = _simulate_one(cfg)
        data, truth = sim.data, sim.support_star
        w.dataset("dataset.csv", data, _meta(cfg.design, sim, cfg.seed))
    else:
        data, meta = _load_input(cfg)
        beta = _truth_from_meta(meta, data.p)
        truth = None if beta is None else np.flatnonzero(beta)
    disc_rows, inf_rows = [], []
    for method in cfg.methods:
        scfg = ScreenCleanConfig(folds=cfg.folds, rule=cfg.rule, b_permutations=cfg.b_permutations,
                                 alpha=cfg.alpha, kind=CLEAN_KINDS[method], mu_source=cfg.mu_source,
                                 seed=cfg.seed)
        res = screen_and_clean(data, scfg)
        c = res.clean
        found = set(int(j) for j in c.discoveries)
        for j, pv, adj in zip(c.tested, c.pvalues, c.adjusted):
            disc_rows.append(dict(method=method, variable=f"x{int(j) + 1}", pvalue=float(pv),
                                  adjusted_pvalue=float(adj), discovered=int(j) in found))
        if truth is not None:
            fdp, sen = fdp_sen(confusion(c.discoveries, truth, data.p))
            nulls = ~np.isin(c.tested, truth)
            inf_rows.append(dict(replicate=0, method=method, fdp=fdp, sen=sen,
                                 n_screened=int(res.screen.support.size),
                                 n_discoveries=len(found), n_null_tested=int(nulls.sum()),
                                 n_null_rejected=int(np.sum(nulls & (c.pvalues <= cfg.alpha))),
                                 failed=False, error=""))
    w.csv("discoveries.csv", DISCOVERY_COLUMNS, disc_rows)
    if truth is not None:
        w.csv("inference.csv", INFERENCE_COLUMNS, inf_rows)
    return 0


def _report_failures(failures):
    if failures:
        print(f"warning: {len(failures)} method run(s) failed and were excluded from summaries; "
              "see the 'error' column", file=sys.stderr)


HANDLERS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "screen-clean": cmd_screen_clean,
    "experiment": cmd_experiment,
}


def run(cfg):
    """Execute ``cfg``; on error every file written so far is removed."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    w = _Writer(cfg.out)
    try:
        return HANDLERS[cfg.command](cfg, w)
    except BaseException:
        w.discard()
        raise


# ---------------------------------------------------------------- argv


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run settings")
    g.add_argument("--config", type=Path, help="key = value settings file")
    g.add_argument("--seed", type=int)
    g.add_argument("--design", help="IND, BLOCK, GROUP or TOEP_NEG")
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--s-star", dest="s_star", type=int)
    g.add_argument("--rho", type=float)
    g.add_argument("--snr", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--permutations", type=int)
    g.add_argument("--folds", type=int)
    g.add_argument("--replicates", type=int)
    g.add_argument("--method", dest="methods", action="append", help="repeat for several methods")
    g.add_argument("--rule", choices=["min", "one-se"])
    g.add_argument("--standardize", action="store_true", default=None,
                   help="center and scale an input dataset")
    g.add_argument("--out", type=Path, help="output directory (default: current)")
    g.add_argument("--threads", type=int, help=f"worker threads (fallback: ${ENV_THREADS})")
    g.add_argument("--data", type=Path, help="input dataset.csv (estimate, screen-clean)")

    parser = argparse.ArgumentParser(prog="twostage", description="Lasso screening and penalized cleaning.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = parse_config(values, args.command, args.config)
        return run(cfg)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"twostage {args.command}: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except Exception as exc:  # anything else is still a fatal run error
        print(f"twostage {args.command}: fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
