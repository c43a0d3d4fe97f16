import json
import math

import pytest

import mfac


def test_version():
    assert mfac.__version__ == "0.1.0"


def test_config_overrides_and_rejection():
    cfg = mfac.resolve_config({"model": {"gamma": 0.25}}, sets=["policy.type=\"logistic\""])
    assert cfg["model"]["gamma"] == 0.25
    assert cfg["policy"]["type"] == "logistic"
    with pytest.raises(mfac.ConfigError):
        mfac.resolve_config({"bogus": 1})


def test_lift_round_trip():
    pmf = mfac.lift_policy([0.3, 0.7], 3)
    assert math.isclose(sum(pmf), 1.0, abs_tol=1e-12)
    probs = mfac.recover_individual(pmf, 3, 2)
    assert probs == pytest.approx([0.3, 0.7], abs=1e-12)
    with pytest.raises(mfac.NotALift):
        mfac.recover_individual([1 / 3, 1 / 3, 1 / 3], 2, 2)


def test_net_forward_matches_features():
    net = mfac.TwoLayerNet.initialize(16, 3, 10.0, 5)
    x = [0.3, -0.2, 0.5]
    phi = net.feature_map(x)
    assert phi.shape == (16, 3)
    assert (phi * net.weights).sum() == pytest.approx(net.forward(x), abs=1e-12)


def test_oracle_line3():
    oracle = mfac.Oracle({"model": {"initial": {"type": "counts", "counts": [2, 1, 1]}}})
    assert oracle.xi_size == 126
    assert oracle.n_state_distributions == 15
    nu = oracle.stationary()
    assert math.isclose(sum(nu), 1.0, abs_tol=1e-10)
    assert oracle.j() <= oracle.optimal_j() + 1e-8
    with pytest.raises(mfac.CapExceeded):
        mfac.Oracle({"model": {"n_agents": 40}})


def test_cli_commands(tmp_path):
    code, _, err = mfac.run("simulate", sets=["simulate.steps=5"], out=tmp_path / "sim")
    assert code == 0, err
    lines = (tmp_path / "sim" / "team.csv").read_text().splitlines()
    assert len(lines) == 6
    code, _, _ = mfac.run("simulate", sets=["model.kernel={\"type\":\"uniform_global\"}"], out=tmp_path / "bad")
    assert code == 6


def test_verify_corrupted_kernel(tmp_path):
    code, _, err = mfac.run(
        "verify",
        sets=["model.kernel={\"type\":\"uniform_global\"}", "verify.criteria=[1]"],
        out=tmp_path / "v",
    )
    assert code == 6
    report = json.loads((tmp_path / "v" / "report.json").read_text())
    assert report["model_validation"]["passed"] is False


def test_run_criterion():
    result = mfac.run_criterion(1)
    assert result["passed"] is True
