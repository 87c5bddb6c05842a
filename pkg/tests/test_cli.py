import json

import pandas as pd
import pytest

from hestonopt.main import EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK, main
from hestonopt.tools.montecarlo import SAMPLE_COLUMNS
from hestonopt.tools.policy import SURFACE_COLUMNS
from hestonopt.tools.reporting import manifest_path


@pytest.fixture
def config_file(tmp_path, config_document):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config_document))
    return path


def test_evaluate_to_file(tmp_path, config_file):
    out = tmp_path / "point.json"
    assert main(["evaluate", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    result = json.loads(out.read_text())
    assert result["constants"]["lambda"] == pytest.approx(-0.75)
    policy = result["policy"]
    assert policy["control"] == pytest.approx(policy["myopic_term"] + policy["hedging_term"])
    assert 0 < policy["f"] < 1
    manifest = json.loads(manifest_path(out).read_text())
    assert manifest["command"] == "evaluate"
    assert str(config_file) in manifest["input_digests"]


def test_evaluate_is_deterministic(config_file, capsys):
    argv = ["evaluate", "--config", str(config_file), "--v", "0.1", "--horizon", "0.5"]
    assert main(argv) == EXIT_OK
    first = capsys.readouterr().out
    assert main(argv) == EXIT_OK
    assert capsys.readouterr().out == first
    assert json.loads(first)["point"]["v"] == 0.1


def test_evaluate_at_horizon(config_file, capsys):
    assert main(["evaluate", "--config", str(config_file), "--t", "1.0"]) == EXIT_OK
    policy = json.loads(capsys.readouterr().out)["policy"]
    assert policy["f"] == 1.0
    assert policy["psi"] is None
    assert policy["hedging_term"] == 0.0


def test_feller_violation_exit_code(tmp_path, config_document, capsys):
    config_document["model"].update({"theta": 0.04, "sigma": 0.5})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config_document))
    assert main(["evaluate", "--config", str(path)]) == EXIT_INVALID
    assert "Feller condition" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["evaluate", "--config", str(tmp_path / "nope.json")]) == EXIT_INVALID


def test_surface_csv(tmp_path, config_file):
    out = tmp_path / "surface.csv"
    argv = ["surface", "--config", str(config_file), "--n-v", "16", "--n-tau", "16", "--out", str(out)]
    assert main(argv) == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == SURFACE_COLUMNS
    assert len(frame) == 17 * 17
    assert manifest_path(out).exists()


def test_verify_rejects_small_sample(tmp_path, config_file):
    argv = ["verify", "--config", str(config_file), "--which", "mc", "--n-paths", "10", "--seed", "1"]
    assert main(argv) == EXIT_INVALID


def test_verify_mc_needs_section(config_file):
    assert main(["verify", "--config", str(config_file), "--which", "mc"]) == EXIT_INVALID


def test_verify_pde_report(tmp_path, config_file):
    report_path = tmp_path / "report.json"
    surface_path = tmp_path / "cn.csv"
    argv = [
        "verify", "--config", str(config_file), "--which", "pde", "--n-v", "16", "--n-tau", "16",
        "--workers", "2", "--report", str(report_path), "--surface-out", str(surface_path),
    ]
    code = main(argv)
    report = json.loads(report_path.read_text())
    assert code == (EXIT_OK if report["passed"] else EXIT_CHECK_FAILED)
    names = {check["name"] for check in report["checks"]}
    assert {"pde_residual", "cn_oracle", "cn_order", "terminal_limit"} <= names
    assert report["which"] == "pde"
    oracle = next(check for check in report["checks"] if check["name"] == "cn_oracle")
    assert {"interior_max_rel_error", "interior_worst_v", "window_v", "window_tau"} <= set(oracle["detail"])
    assert surface_path.exists() and manifest_path(surface_path).exists()
    assert json.loads(manifest_path(report_path).read_text())["resolved_config"]["which"] == "pde"


@pytest.mark.parametrize("workers", ["1", "4", "16"])
def test_surface_rerun_is_byte_identical(tmp_path, config_file, workers):
    base = ["surface", "--config", str(config_file), "--n-v", "16", "--n-tau", "16"]
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    assert main(base + ["--workers", "1", "--out", str(first)]) == EXIT_OK
    assert main(base + ["--workers", workers, "--out", str(second)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_verify_mc_rejects_exploding_short_rate(tmp_path, config_document, capsys):
    config_document["model"] = {"mu": 0.5, "k": 1.0, "theta": 0.1, "sigma": 0.4, "rho": 0.9}
    config_document["mc"] = {"n_paths": 2000, "n_steps": 50, "seed": 1, "scheme": "exact-cir"}
    config_document["point"]["v"] = 0.1
    path = tmp_path / "explosive.json"
    path.write_text(json.dumps(config_document))
    assert main(["verify", "--config", str(path), "--which", "mc"]) == EXIT_INVALID
    assert "lambda < -1/2" in capsys.readouterr().err


def test_verify_mc_samples_out(tmp_path, config_document):
    config_document["mc"] = {"n_paths": 2000, "n_steps": 50, "seed": 7, "scheme": "exact-cir"}
    config_document["point"]["T"] = 0.25
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config_document))
    samples_path = tmp_path / "samples.csv"
    argv = ["verify", "--config", str(path), "--which", "mc", "--report", str(tmp_path / "report.json"),
            "--samples-out", str(samples_path)]
    assert main(argv) in (EXIT_OK, EXIT_CHECK_FAILED)
    frame = pd.read_csv(samples_path)
    assert list(frame.columns) == SAMPLE_COLUMNS
    counts = frame["quantity"].value_counts().to_dict()
    assert counts == {"terminal_utility": 4 * 2000, "bond_discount": 2000}
    assert manifest_path(samples_path).exists()
