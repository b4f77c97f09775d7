"""Command-line interface: subcommands, flags, exit codes."""

import json

import numpy as np
import pytest

from bdlbench import data
from bdlbench.cli import main


def _write_regression_fixture(path, n=8, perfect_ranking=True, seed=0):
    rng = np.random.default_rng(seed)
    mu = np.zeros(n)
    if perfect_ranking:
        resid = np.linspace(0.1, 1.0, n)
        sigma2 = resid ** 2 + 0.01
    else:
        resid = rng.normal(size=n)
        sigma2 = rng.uniform(0.05, 1.0, size=n)
    fix = data.RegressionFixture(mu, sigma2, mu + resid)
    data.save_fixture(path, fix)
    return fix


def _write_classification_fixture(path, wrong=False):
    probs = np.tile([0.95, 0.05], (12, 1))
    labels = np.full(12, 1 if wrong else 0, dtype=np.int64)
    data.save_fixture(path, data.ClassificationFixture(probs, labels))


def _base_config(tmp_path, **overrides):
    cfg = {
        "schema_version": 1,
        "task": "toy-regression",
        "seed": 0,
        "output_dir": str(tmp_path / "out"),
        "grid_resolution": 50,
        "dataset": {"n": 12},
        "hmc": {"num_samples": 3, "warmup_steps": 2, "leapfrog_steps": 3},
        "M_values": [1],
        "methods": {"ensembling": {"pool": 1, "epochs": 3}},
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestGradcheckCommand:
    def test_default_passes(self, capsys):
        assert main(["gradcheck", "--instances", "2"]) == 0
        out = capsys.readouterr().out
        assert out.rstrip().endswith("PASS")
        assert "gradient check" in out

    def test_seed_reproducible(self, capsys):
        main(["gradcheck", "--seed", "11", "--instances", "2"])
        first = capsys.readouterr().out
        main(["gradcheck", "--seed", "11", "--instances", "2"])
        assert capsys.readouterr().out == first

    def test_bad_instances(self, capsys):
        assert main(["gradcheck", "--instances", "0"]) == 1
        assert "error:" in capsys.readouterr().err


class TestMetricsCommand:
    def test_regression_all_metrics(self, tmp_path, capsys):
        path = tmp_path / "fix.csv"
        _write_regression_fixture(path)
        assert main(["metrics", str(path)]) == 0
        out = capsys.readouterr().out
        assert "task: regression (n=8)" in out
        assert "ause 0\n" in out          # uncertainty ranks errors perfectly
        assert "auce " in out
        assert "rmse " in out
        assert (tmp_path / "fix_sparsification.csv").exists()
        assert (tmp_path / "fix_calibration.csv").exists()

    def test_regression_single_flag(self, tmp_path, capsys):
        path = tmp_path / "fix.csv"
        fix = _write_regression_fixture(path, perfect_ranking=False)
        assert main(["metrics", str(path), "--rmse"]) == 0
        out = capsys.readouterr().out
        assert "ause" not in out and "auce" not in out
        expected = float(np.sqrt(np.mean((fix.mu - fix.targets) ** 2)))
        assert f"rmse {expected:.10g}" in out
        assert not (tmp_path / "fix_sparsification.csv").exists()

    def test_classification_all_metrics(self, tmp_path, capsys):
        path = tmp_path / "fix.csv"
        _write_classification_fixture(path, wrong=True)
        assert main(["metrics", str(path)]) == 0
        out = capsys.readouterr().out
        assert "task: classification (n=12)" in out
        assert "ece 0.95" in out          # confident and always wrong
        assert (tmp_path / "fix_reliability.csv").exists()
        assert (tmp_path / "fix_sparsification.csv").exists()

    def test_classification_bin_count(self, tmp_path, capsys):
        path = tmp_path / "fix.csv"
        _write_classification_fixture(path)
        assert main(["metrics", str(path), "--ece", "5"]) == 0
        lines = (tmp_path / "fix_reliability.csv").read_text().splitlines()
        assert len(lines) == 6            # header + one row per bin
        capsys.readouterr()

    def test_unsupported_flag_regression(self, tmp_path, capsys):
        path = tmp_path / "fix.csv"
        _write_regression_fixture(path)
        assert main(["metrics", str(path), "--ece", "5"]) == 1
        assert "not defined for a regression fixture" in \
            capsys.readouterr().err

    def test_unsupported_flag_classification(self, tmp_path, capsys):
        path = tmp_path / "fix.csv"
        _write_classification_fixture(path)
        assert main(["metrics", str(path), "--auce"]) == 1
        assert main(["metrics", str(path), "--rmse"]) == 1
        capsys.readouterr()

    def test_missing_fixture(self, tmp_path, capsys):
        assert main(["metrics", str(tmp_path / "nope.csv")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_malformed_fixture(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("mu,sigma2,target\n0.0,zero,0.0\n")
        assert main(["metrics", str(path)]) == 1
        assert "sigma2" in capsys.readouterr().err

    def test_degenerate_fixture_rejected(self, tmp_path, capsys):
        # One row loads fine but cannot be sparsified.
        path = tmp_path / "tiny.csv"
        data.save_fixture(path, data.RegressionFixture(
            np.zeros(1), np.ones(1), np.zeros(1)))
        assert main(["metrics", str(path), "--ause"]) == 1
        assert "error:" in capsys.readouterr().err


class TestRunCommand:
    def test_minimal_run(self, tmp_path, capsys):
        config = _base_config(tmp_path)
        out_dir = tmp_path / "alt"
        assert main(["run", str(config), "--out", str(out_dir)]) == 0
        stdout = capsys.readouterr().out
        assert "task toy-regression" in stdout
        assert "reference: 3 samples" in stdout
        assert "ensembling" in stdout
        assert (out_dir / "report.csv").exists()
        assert (out_dir / "manifest.json").exists()
        assert (out_dir / "dataset.csv").exists()
        assert (out_dir / "reference_curve.csv").exists()

    def test_missing_config(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.json")]) == 1
        assert "no such config file" in capsys.readouterr().err

    def test_bad_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        assert main(["run", str(path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_field(self, tmp_path, capsys):
        config = _base_config(tmp_path, bogus=3)
        assert main(["run", str(config)]) == 1
        assert "bogus" in capsys.readouterr().err

    def test_pool_too_small(self, tmp_path, capsys):
        config = _base_config(
            tmp_path, M_values=[4],
            methods={"ensembling": {"pool": 2, "epochs": 3}})
        assert main(["run", str(config)]) == 1
        err = capsys.readouterr().err
        assert "largest M (4) exceeds the trained model pool (2)" in err

    def test_sampler_blowup_exits_2(self, tmp_path, capsys):
        config = _base_config(
            tmp_path, dataset={"n": 40}, M_values=[2],
            methods={"sgld": {"alpha0": 1e12}})
        assert main(["run", str(config)]) == 2
        assert "error:" in capsys.readouterr().err


class TestUsageErrors:
    @pytest.mark.parametrize("argv", [
        [],
        ["run"],
        ["frobnicate"],
        ["gradcheck", "--instances", "many"],
        ["run", "x.json", "--curves", "bogus"],
    ])
    def test_usage_exits_1(self, argv, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(argv)
        assert exc_info.value.code == 1
        capsys.readouterr()
