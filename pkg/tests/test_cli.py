import csv
import subprocess
import sys

import numpy as np
import pytest

from twostage import ScreenCleanConfig, read_dataset_csv, screen_and_clean
from twostage.cli import ConfigError, main, parse_config, run

SMALL = ["--design", "IND", "--n", "60", "--p", "30", "--s-star", "4", "--snr", "8"]


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({}, "experiment")
        assert cfg.alpha == 0.05 and cfg.b_permutations == 1000 and cfg.folds == 10
        assert cfg.design.design == "IND" and cfg.rule == "min"

    def test_alpha_out_of_range(self):
        with pytest.raises(ConfigError, match="alpha"):
            parse_config({"alpha": 1.5}, "experiment")

    def test_flag_overrides_file(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("seed = 3\nfolds = 5\n[experiment]\nreplicates = 7\n[estimate]\nreplicates = 2\n")
        cfg = parse_config({"seed": 9}, "experiment", f)
        assert cfg.seed == 9 and cfg.folds == 5 and cfg.replicates == 7
        assert parse_config({}, "estimate", f).replicates == 2

    def test_unknown_key(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("colour = blue\n")
        with pytest.raises(ConfigError, match="colour"):
            parse_config({}, "experiment", f)

    def test_unknown_section(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("[fit]\nseed = 1\n")
        with pytest.raises(ConfigError, match="fit"):
            parse_config({}, "experiment", f)

    @pytest.mark.parametrize("values", [
        {"permutations": 50}, {"folds": 1}, {"replicates": 0}, {"threads": 0}, {"seed": -1},
        {"methods": ["L", "bogus"]}, {"design": "AR1"}, {"n": "ten"}, {"rule": "max"},
        {"standardize": True},
    ])
    def test_rejected(self, values):
        with pytest.raises(ConfigError):
            parse_config(values, "experiment")

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("TWOSTAGE_THREADS", "3")
        assert parse_config({}, "experiment").threads == 3
        assert parse_config({"threads": 2}, "experiment").threads == 2

    def test_exit_code(self, tmp_path, capsys):
        assert main(["experiment", "--alpha", "1.5", "--out", str(tmp_path)]) == 2
        assert "alpha" in capsys.readouterr().err
        assert list(tmp_path.iterdir()) == []


def test_experiment_outputs(tmp_path):
    args = ["experiment", *SMALL, "--replicates", "10", "--permutations", "99", "--folds", "5",
            "--seed", "1", "--out", str(tmp_path)]
    assert main(args) == 0
    names = {"dataset.csv", "estimation.csv", "inference.csv", "curve.csv", "summary.csv"}
    assert names <= {p.name for p in tmp_path.iterdir()}
    est = _read(tmp_path / "estimation.csv")
    inf = _read(tmp_path / "inference.csv")
    for m in ("L", "L+O", "L+R", "L+A", "L&A"):
        assert sum(r["method"] == m for r in est) == 10
    for m in ("AR", "ridge", "OLS", "univar", "F-std", "t-std"):
        assert sum(r["method"] == m for r in inf) == 10


def test_byte_identical_across_threads(tmp_path):
    base = ["experiment", *SMALL, "--replicates", "3", "--permutations", "99", "--folds", "5",
            "--seed", "4", "--method", "L", "--method", "L+A", "--method", "AR"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(base + ["--threads", "1", "--out", str(a)]) == 0
    assert main(base + ["--threads", "3", "--out", str(b)]) == 0
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_simulate_and_screen_clean_roundtrip(tmp_path):
    assert main(["simulate", *SMALL, "--seed", "2", "--out", str(tmp_path)]) == 0
    data, meta = read_dataset_csv(tmp_path / "dataset.csv")
    assert data.x.shape == (60, 30) and len(meta["beta_star"]) == 30

    out = tmp_path / "sc"
    assert main(["screen-clean", "--data", str(tmp_path / "dataset.csv"), "--permutations", "99",
                 "--folds", "5", "--seed", "2", "--out", str(out)]) == 0
    rows = _read(out / "discoveries.csv")
    ref = screen_and_clean(data, ScreenCleanConfig(folds=5, b_permutations=99, seed=2))
    assert [r["variable"] for r in rows] == [f"x{j + 1}" for j in ref.clean.tested]
    np.testing.assert_array_equal([float(r["pvalue"]) for r in rows], ref.clean.pvalues)
    assert (out / "inference.csv").exists()


def test_dataset_full_precision(tmp_path):
    assert main(["simulate", *SMALL, "--seed", "5", "--out", str(tmp_path)]) == 0
    from twostage.cli import _simulate_one

    sim = _simulate_one(parse_config({"seed": 5, "design": "IND", "n": 60, "p": 30, "s_star": 4,
                                      "snr": 8}, "simulate"))
    data, _ = read_dataset_csv(tmp_path / "dataset.csv")
    assert np.array_equal(data.x, sim.x) and np.array_equal(data.y, sim.y)


def test_estimate_on_data(tmp_path):
    assert main(["simulate", *SMALL, "--seed", "6", "--out", str(tmp_path)]) == 0
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(tmp_path / "dataset.csv"), "--folds", "5",
                 "--method", "L", "--method", "L+A", "--out", str(out)]) == 0
    est = _read(out / "estimation.csv")
    assert [r["method"] for r in est] == ["L", "L+A"] and all(r["prediction_error"] for r in est)
    assert len(_read(out / "coefficients.csv")) == 60


def test_partial_outputs_removed(tmp_path, monkeypatch):
    import twostage.cli as cli

    def boom(*a, **k):
        raise RuntimeError("disk gone")

    monkeypatch.setattr(cli, "_curve_rows", boom)
    cfg = parse_config({"design": "IND", "n": 40, "p": 20, "s_star": 3, "replicates": 1,
                        "methods": ["L"], "folds": 3, "out": tmp_path}, "experiment")
    with pytest.raises(RuntimeError):
        run(cfg)
    assert list(tmp_path.iterdir()) == []


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "twostage", "simulate", *SMALL, "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "dataset.csv").exists()
