"""Experiment harness: seed pairing, evaluation metrics and output files."""

import csv
import json

import numpy as np
import pytest
from scipy.stats import norm

from ccnlab.data import Dataset
from ccnlab.harness import (ABLATION_VARIANTS, ExperimentConfig, _ablation_fccn,
                            _rep_seeds, _sweep_cell, emit_cdf_sketch,
                            evaluate_model, pick_utility, run_ablation,
                            run_experiment, run_rep, run_sweep)
from ccnlab.scenarios import OracleCdfModel, ScenarioOracle

# small-budget training config shared by every integration check below
FAST_TRAIN = {"epochs": 15, "batch_size": 128, "z_draws": 2, "hidden": (8,),
              "patience": 15}
FAST_FCCN = {"q_w": 4, "q_a": 4, "phi_hidden": (8,), "critic_hidden": (8,)}


def fast_config(**overrides):
    kwargs = dict(scenario="logistic", n=240, reps=2, estimator="ccn",
                  mc_samples=400, train=dict(FAST_TRAIN), fccn=dict(FAST_FCCN))
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


def shift_setup(n, seed):
    """Dataset with CATE = x1 plus the exact oracle-backed model for it."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 1))
    t = rng.integers(0, 2, size=n)
    y0 = rng.normal(size=n)
    y1 = x[:, 0] + rng.normal(size=n)
    data = Dataset(x=x, t=t, y=np.where(t == 1, y1, y0), y0=y0, y1=y1)
    oracle = ScenarioOracle(
        name="shift", covariate_dim=1, params={},
        _cdf=lambda arm, X, y: norm.cdf(y - float(arm) * X[:, 0]),
        _mean=lambda arm, X: float(arm) * X[:, 0],
        _propensity=lambda X: np.full(X.shape[0], 0.5))
    model = OracleCdfModel(oracle, z_low=-4.0, z_high=4.0)
    return data, oracle, model


# ------------------------------------------------------------------ config


def test_config_validation():
    with pytest.raises(ValueError, match="scenario"):
        ExperimentConfig(scenario="nope")
    with pytest.raises(ValueError, match="estimator"):
        ExperimentConfig(estimator="slearner")
    with pytest.raises(ValueError, match="reps"):
        ExperimentConfig(reps=0)
    with pytest.raises(ValueError, match="utility"):
        ExperimentConfig(utility="vibes")


def test_config_from_dict_converts_nested():
    cfg = ExperimentConfig.from_dict({
        "scenario": "gamma", "n": 500, "train": {"epochs": 7},
        "fccn": {"alpha": 0.25}, "truncation": [0.4, 0.6]})
    assert cfg.train.epochs == 7
    assert cfg.fccn.alpha == 0.25
    assert cfg.truncation == (0.4, 0.6)
    with pytest.raises(ValueError, match="unknown experiment config keys"):
        ExperimentConfig.from_dict({"scenario": "gamma", "epochs": 7})


def test_config_round_trip_through_dict():
    cfg = fast_config(estimator="fccn", seed=12)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_rep_seeds_deterministic_and_distinct():
    first = _rep_seeds(7, 0)
    assert first == _rep_seeds(7, 0)
    assert len(set(first)) == 4
    assert first != _rep_seeds(7, 1)
    assert first != _rep_seeds(8, 0)


# -------------------------------------------------------------- evaluation


def test_evaluate_model_oracle_backed_is_nearly_exact():
    data, oracle, model = shift_setup(n=400, seed=5)
    report = evaluate_model(model, data, oracle, mc_samples=4000, seed=3)
    # tau_hat only carries Monte-Carlo error around the exact CATE
    assert report.pehe <= 0.06
    assert report.auc >= 0.97
    assert abs(report.ll - report.oracle_ll) <= 1e-9
    assert report.n_test == 400
    pp = report.per_point
    assert np.allclose(pp["tau_true"], data.x[:, 0])
    assert np.allclose(pp["contrast_hat"], pp["tau_hat"])


def test_evaluate_model_constant_contrast_has_no_auc():
    # every true CATE is +1, so decision labels are one-class
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 1))
    t = rng.integers(0, 2, size=50)
    y0 = rng.normal(size=50)
    y1 = y0 + 1.0
    data = Dataset(x=x, t=t, y=np.where(t == 1, y1, y0), y0=y0, y1=y1)
    oracle = ScenarioOracle(
        name="const", covariate_dim=1, params={},
        _cdf=lambda arm, X, y: norm.cdf(y - float(arm)),
        _mean=lambda arm, X: np.full(X.shape[0], float(arm)),
        _propensity=lambda X: np.full(X.shape[0], 0.5))
    model = OracleCdfModel(oracle, z_low=-4.0, z_high=5.0)
    report = evaluate_model(model, data, oracle, mc_samples=300, seed=1)
    assert report.auc is None
    assert report.pehe <= 0.1


def test_evaluate_model_personalized_utility():
    data, oracle, model = shift_setup(n=60, seed=9)
    util = pick_utility("personalized_threshold", oracle, data, seed=4)
    report = evaluate_model(model, data, oracle, mc_samples=2000, seed=2,
                            utility=util)
    assert report.extras["utility"] == "personalized_threshold"
    pp = report.per_point
    # contrast is a probability difference, so it lives in [-1, 1]
    assert np.all(np.abs(pp["contrast_hat"]) <= 1.0)
    assert np.max(np.abs(pp["contrast_hat"] - pp["contrast_true"])) <= 0.08


def test_pick_utility_catalog():
    data, oracle, _ = shift_setup(n=30, seed=2)
    assert pick_utility("identity", oracle, data, 0).name == "identity"
    assert pick_utility("linear_offset", oracle, data, 0).name == "linear_offset"
    cm = pick_utility("control_mean_threshold", oracle, data, 0)
    assert cm.scope == "feature_dependent"
    pt = pick_utility("personalized_threshold", oracle, data, 3)
    assert len(pt.per_individual["v"]) == data.n
    again = pick_utility("personalized_threshold", oracle, data, 3)
    assert np.array_equal(pt.per_individual["v"], again.per_individual["v"])


# -------------------------------------------------------------- experiment


def test_run_rep_paired_and_deterministic():
    cfg = fast_config(seed=21)
    row_a, report_a, _ = run_rep(cfg, 0)
    row_b, _, _ = run_rep(cfg, 0)
    assert row_a["data_checksum"] == row_b["data_checksum"]
    assert row_a["pehe"] == row_b["pehe"]
    assert row_a["ll"] == row_b["ll"]
    row_c, _, _ = run_rep(cfg, 1)
    assert row_c["data_checksum"] != row_a["data_checksum"]
    assert report_a.per_point["tau_hat"].shape == (60,)


def test_run_experiment_outputs(tmp_path):
    cfg = fast_config(reps=2, seed=5)
    result = run_experiment(cfg, out_dir=tmp_path)
    assert result["aggregate"]["reps_done"] == 2
    assert not result["failures"]
    with open(tmp_path / "runs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert rows[0]["rep"] == "0"
    assert float(rows[0]["pehe"]) == result["rows"][0]["pehe"]
    with open(tmp_path / "summary.json") as fh:
        summary = json.load(fh)
    assert summary["config"]["scenario"] == "logistic"
    assert set(summary["aggregate"]) >= {"pehe_mean", "pehe_sd", "reps_done"}
    assert (tmp_path / "points_rep00.csv").exists()
    assert (tmp_path / "points_rep01.csv").exists()


def test_run_experiment_captures_rep_failures(monkeypatch):
    import ccnlab.harness as harness
    real = harness.fit_estimator
    calls = {"count": 0}

    def flaky(data, config, train_seed):
        calls["count"] += 1
        if calls["count"] == 2:
            raise RuntimeError("synthetic failure")
        return real(data, config, train_seed)

    monkeypatch.setattr(harness, "fit_estimator", flaky)
    cfg = fast_config(reps=3, seed=8)
    with pytest.warns(RuntimeWarning, match="rep 1 failed"):
        result = run_experiment(cfg)
    assert [r["rep"] for r in result["rows"]] == [0, 2]
    assert result["failures"] == [{"rep": 1, "error": "RuntimeError: synthetic failure"}]
    assert result["aggregate"]["reps_done"] == 2


# ---------------------------------------------------------------- ablation


def test_ablation_variant_mapping():
    from ccnlab.fccn import FccnConfig
    base = FccnConfig(alpha=3e-5, beta=0.02, **FAST_FCCN)
    wass = _ablation_fccn("wass", base)
    assert wass.alpha == 3e-5 and wass.beta == 0.0 and not wass.propensity_coord
    assign = _ablation_fccn("assign", base)
    assert assign.alpha == 0.0 and assign.beta == 0.02 and not assign.propensity_coord
    ps = _ablation_fccn("ps", base)
    assert ps.alpha == 0.0 and ps.beta == 0.0 and ps.propensity_coord
    both = _ablation_fccn("assign_ps", base)
    assert both.alpha == 0.0 and both.beta == 0.02 and both.propensity_coord
    assert _ablation_fccn("fccn", base) == base
    # zero-weight bases fall back to the default adjustment strengths
    off = FccnConfig(alpha=0.0, beta=0.0, **FAST_FCCN)
    assert _ablation_fccn("wass", off).alpha == FccnConfig().alpha
    assert _ablation_fccn("assign", off).beta == FccnConfig().beta


def test_run_ablation_pairs_datasets(tmp_path):
    cfg = fast_config(reps=1, seed=3)
    result = run_ablation(cfg, out_dir=tmp_path, variants=("ccn", "ps", "fccn"))
    assert set(result["by_variant"]) == {"ccn", "ps", "fccn"}
    checksums = {r["data_checksum"] for r in result["rows"]}
    assert len(checksums) == 1
    with open(tmp_path / "ablation.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["variant"] for r in rows] == ["ccn", "ps", "fccn"]
    with pytest.raises(ValueError, match="unknown ablation variant"):
        run_ablation(cfg, variants=("ccn", "tarnet"))
    assert len(ABLATION_VARIANTS) == 6


# ------------------------------------------------------------------- sweep


def test_sweep_cell_mapping():
    cfg = fast_config()
    assert _sweep_cell(cfg, "sample_size", 999).n == 999
    assert _sweep_cell(cfg, "alpha", 1e-4).fccn.alpha == 1e-4
    assert _sweep_cell(cfg, "beta", 0.2).fccn.beta == 0.2
    assert _sweep_cell(cfg, "noise_dims", 3).noise_dims == 3
    assert _sweep_cell(cfg, "propensity_scale", 2.5).propensity_scale == 2.5


def test_run_sweep_outputs(tmp_path):
    cfg = fast_config(reps=1, seed=6)
    result = run_sweep(cfg, "sample_size", [200, 320], out_dir=tmp_path)
    assert [r["value"] for r in result["rows"]] == [200, 320]
    assert [r["n_test"] for r in result["rows"]] == [50, 80]
    with open(tmp_path / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["axis"] == "sample_size"
    with pytest.raises(ValueError, match="axis"):
        run_sweep(cfg, "learning_rate", [1e-3])


# ------------------------------------------------------------------ sketch


def test_emit_cdf_sketch_matches_oracle(tmp_path):
    data, oracle, model = shift_setup(n=40, seed=4)
    path = tmp_path / "sketch.csv"
    written = emit_cdf_sketch(model, data, oracle, [0, 7], path, grid_size=31)
    assert written == 2 * 2 * 31
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == written
    assert set(rows[0]) == {"index", "arm", "z", "estimate", "oracle"}
    gaps = [abs(float(r["estimate"]) - float(r["oracle"])) for r in rows]
    # oracle-backed model: only the isotonic projection and clipping intervene
    assert max(gaps) <= 1e-9
