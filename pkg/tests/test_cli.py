"""Command-line surface: golden run, exit codes, artifacts, determinism."""

import json
import os

import numpy as np
import pytest

import mrbee as mb
from mrbee.cli import main

DATA = os.path.join(os.path.dirname(__file__), "data", "golden")


def _fit_args(out_dir, method="mrbee-iter"):
    return [
        "fit",
        "--outcome", os.path.join(DATA, "outcome.tsv"),
        "--exposure", os.path.join(DATA, "exposure_bmi.tsv"),
        "--exposure", os.path.join(DATA, "exposure_ldl.tsv"),
        "--iv-pval", "1e-4",
        "--method", method,
        "--out", str(out_dir),
    ]


class TestFit:
    def test_golden_bitwise(self, tmp_path):
        assert main(_fit_args(tmp_path)) == 0
        for name in ("estimates.tsv", "outliers.tsv", "errcov.tsv"):
            got = (tmp_path / name).read_text()
            want = open(os.path.join(DATA, f"golden_{name}")).read()
            assert got == want, f"{name} differs from the committed golden file"
        manifest = json.loads((tmp_path / "run_manifest.json").read_text())
        assert manifest["version"] == mb.__version__
        assert len(manifest["inputs"]) == 3
        assert all(len(h) == 64 for h in manifest["inputs"].values())

    def test_missing_exposure_exit_2(self, tmp_path, capsys):
        args = _fit_args(tmp_path)
        args[args.index("--exposure") + 1] = "/nonexistent/expo.tsv"
        assert main(args) == 2
        assert "/nonexistent/expo.tsv" in capsys.readouterr().err

    def test_ivw_only_no_outlier_report(self, tmp_path):
        assert main(_fit_args(tmp_path, method="ivw")) == 0
        assert (tmp_path / "estimates.tsv").exists()
        assert not (tmp_path / "outliers.tsv").exists()

    def test_plain_mrbee(self, tmp_path):
        assert main(_fit_args(tmp_path, method="mrbee")) == 0
        lines = (tmp_path / "estimates.tsv").read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 exposures
        assert "MRBEE" in lines[1]

    def test_estimates_match_library(self, tmp_path):
        # the written point estimates must equal the library result exactly
        assert main(_fit_args(tmp_path, method="mrbee")) == 0
        outcome = mb.load_summary_table(os.path.join(DATA, "outcome.tsv"))
        e1 = mb.load_summary_table(os.path.join(DATA, "exposure_bmi.tsv"))
        e2 = mb.load_summary_table(os.path.join(DATA, "exposure_ldl.tsv"))
        panel = mb.harmonize(outcome, [e1, e2])
        sel = mb.partition_variants(panel, iv_pvalue=1e-4)
        est = mb.fit_mrbee(sel.iv_panel, mb.estimate_error_cov(sel.null_panel))
        line = (tmp_path / "estimates.tsv").read_text().splitlines()[1].split("\t")
        assert float(line[1]) == pytest.approx(est.theta[0], rel=1e-9)


class TestErrcov:
    def test_writes_matrix(self, tmp_path):
        args = _fit_args(tmp_path)
        args[0] = "errcov"
        args = [a for a in args if a not in ("--method", "mrbee-iter")]
        assert main(args) == 0
        lines = (tmp_path / "errcov.tsv").read_text().strip().splitlines()
        assert lines[0].split("\t") == ["trait", "exposure_bmi", "exposure_ldl", "outcome"]
        vals = np.array([[float(x) for x in ln.split("\t")[1:]] for ln in lines[1:]])
        np.testing.assert_allclose(vals, vals.T, atol=1e-15)
        # z-score scale up to the p>0.05 screening truncation (~0.76 factor)
        assert np.all(np.diag(vals) > 0.5) and np.all(np.diag(vals) < 1.5)
        assert np.linalg.eigvalsh(vals)[0] >= -1e-12


class TestSimulate:
    def _config_path(self, tmp_path, reps=3):
        import importlib.resources as res

        cfg = json.loads(res.files("mrbee").joinpath("configs/figure2_uni.json").read_text())
        cfg["heritability"]["n0"] = cfg["heritability"]["n1"] = 2000
        cfg["heritability"]["m"] = 100
        cfg["simulate"]["replications"] = reps
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        return str(path)

    def test_smoke_deterministic(self, tmp_path):
        cfg = self._config_path(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["simulate", "--config", cfg, "--out", str(out1), "--seed", "1", "--threads", "1"]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(out2), "--seed", "1", "--threads", "1"]) == 0
        assert (out1 / "metrics.csv").read_text() == (out2 / "metrics.csv").read_text()
        header = (out1 / "metrics.csv").read_text().splitlines()[0]
        assert header == "method,coordinate,metric,value"

    def test_zero_reps_exit_2(self, tmp_path):
        cfg = self._config_path(tmp_path)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"), "--reps", "0"]) == 2

    def test_direct_mode_without_overlap_exit_2(self, tmp_path):
        raw = {
            "population": {
                "p": 1,
                "theta": [0.2],
                "Psi_bb": [[0.3]],
                "Sigma_uu": [[0.7]],
                "sigma_uv": [0.05],
                "sigma_vv": 0.1,
                "n": [1000, 1000],
                "overlap": None,
                "m": 50,
            },
            "simulate": {"mode": "direct_errors", "replications": 2, "seed": 0},
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_malformed_config_exit_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


class TestTheory:
    def _spec_json(self, tmp_path, **overrides):
        raw = {
            "heritability": {
                "kind": "univariable",
                "h2_exposure": 0.3,
                "h2_outcome": 0.15,
                "rho_uv": 0.5,
                "theta": 0.3 / np.sqrt(2.0),
                "n0": 20000,
                "n1": 20000,
                "overlap_fraction": 1.0,
                "m": 1000,
            }
        }
        raw["heritability"].update(overrides)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(raw))
        return str(path)

    def test_prints_special_fraction(self, tmp_path, capsys):
        assert main(["theory", "--config", self._spec_json(tmp_path)]) == 0
        out = capsys.readouterr().out
        line = [ln for ln in out.splitlines() if ln.startswith("special_overlap_fraction")][0]
        got = float(line.split("\t")[2])
        spec = mb.univariable_spec(0.3, 0.15, 0.5, 0.3 / np.sqrt(2.0), 20000, 20000, 20000, 1000)
        assert got == pytest.approx(mb.special_overlap_fraction(spec), rel=1e-9)

    def test_zero_theta_confounder_only(self, tmp_path, capsys):
        raw = {
            "population": {
                "p": 1,
                "theta": [0.0],
                "Psi_bb": [[0.3]],
                "Sigma_uu": [[0.7]],
                "sigma_uv": [0.05],
                "sigma_vv": 0.1,
                "n": [2000, 2000],
                "overlap": [[2000, 0], [0, 2000]],
                "m": 100,
            }
        }
        path = tmp_path / "spec0.json"
        path.write_text(json.dumps(raw))
        assert main(["theory", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        rows = {ln.split("\t")[0]: float(ln.split("\t")[2]) for ln in out.splitlines()[1:]}
        assert rows["score_bias_measurement"] == 0.0
        assert rows["score_bias_confounder"] == 0.0  # zero overlap kills it too

    def test_non_pd_spec_exit_2(self, tmp_path):
        raw = {
            "population": {
                "p": 1,
                "theta": [0.1],
                "Psi_bb": [[-0.3]],
                "Sigma_uu": [[0.7]],
                "sigma_uv": [0.0],
                "sigma_vv": 0.1,
                "n": [100, 100],
                "overlap": "full",
                "m": 10,
            }
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        assert main(["theory", "--config", str(path)]) == 2

    def test_regime_predictions(self, tmp_path, capsys):
        assert main(
            ["theory", "--config", self._spec_json(tmp_path), "--ivw-regime", "iii", "--c0", "0.1"]
        ) == 0
        out = capsys.readouterr().out
        assert any(ln.startswith("ivw_bias_regime_iii") for ln in out.splitlines())


def test_no_color_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MRBEE_NO_COLOR", "1")
    args = _fit_args(tmp_path, method="ivw")
    assert main(args) == 0
    err = capsys.readouterr().err
    assert "\033[" not in err


def test_unknown_subcommand_exit_2(capsys):
    assert main(["frobnicate"]) == 2
