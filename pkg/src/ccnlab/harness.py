"""Repeated train/evaluate experiments, ablations and knob sweeps.

Every repetition derives its data, split, training and evaluation seeds
from one master seed through named SeedSequence spawn keys, so paired
comparisons (ablation variants, sweep cells at the same rep index) see
identical datasets.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .ccn import TrainConfig, estimate_cdf, train_ccn
from .data import train_test_split
from .fccn import FccnConfig, train_fccn
from .metrics import (MetricsReport, approx_ll, approx_ll_factual,
                      builtin_utilities, decision_auc, draw_thresholds,
                      identity_utility, pehe, utility_contrast)
from .scenarios import SCENARIO_NAMES, ScenarioConfig, generate_scenario

ESTIMATORS = ("ccn", "fccn")
SWEEP_AXES = ("sample_size", "alpha", "beta", "noise_dims", "propensity_scale")
ABLATION_VARIANTS = ("ccn", "wass", "assign", "ps", "assign_ps", "fccn")

SCALAR_COLUMNS = ("pehe", "ll", "ll_factual", "oracle_ll", "auc", "n_test",
                  "train_seconds")


@dataclass
class ExperimentConfig:
    """One experiment: a scenario, an estimator and the evaluation protocol."""

    scenario: str = "logistic"
    n: int = 1000
    reps: int = 5
    estimator: str = "fccn"
    test_fraction: float = 0.25
    eps: float = 0.2
    mc_samples: int = 3000
    utility: str = "identity"
    seed: int = 0
    noise_dims: int = 0
    propensity_scale: float = 1.0
    truncation: tuple | None = None
    exp_parameterization: str = "rate"
    train: TrainConfig = field(default_factory=TrainConfig)
    fccn: FccnConfig = field(default_factory=FccnConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIO_NAMES:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIO_NAMES}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.reps < 1:
            raise ValueError(f"reps must be positive, got {self.reps}")
        if self.utility not in ("identity", "linear_offset", "control_mean_threshold",
                                "personalized_threshold"):
            raise ValueError(f"unknown utility {self.utility!r}")
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.fccn, dict):
            self.fccn = FccnConfig(**self.fccn)
        if self.truncation is not None:
            self.truncation = tuple(self.truncation)

    def scenario_config(self, data_seed):
        return ScenarioConfig(n=self.n, seed=data_seed, noise_dims=self.noise_dims,
                              propensity_scale=self.propensity_scale,
                              truncation=self.truncation,
                              exp_parameterization=self.exp_parameterization)

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**payload)

    def to_dict(self):
        return asdict(self)


def _rep_seeds(master, rep):
    """(data, split, train, eval) integer seeds for one repetition."""
    children = np.random.SeedSequence(entropy=master, spawn_key=(rep,)).spawn(4)
    return [int(c.generate_state(1)[0]) for c in children]


def pick_utility(name, oracle, test_data, seed):
    """Instantiate a named utility; personalized thresholds are drawn from ``seed``."""
    if name == "identity":
        return identity_utility()
    if name == "personalized_threshold":
        v = draw_thresholds(test_data.n, seed=seed + 1)
        m = test_data.x[:, -1]
        return builtin_utilities(v=v, m=m)["personalized_threshold"]
    return builtin_utilities(oracle=oracle)[name]


def fit_estimator(data, config, train_seed):
    """Train the configured estimator with the repetition's training seed."""
    tc = replace(config.train, seed=train_seed)
    if config.estimator == "ccn":
        return train_ccn(data, tc)
    return train_fccn(data, tc, config.fccn)


def evaluate_model(model, test_data, oracle, eps=0.2, mc_samples=3000, seed=0,
                   utility=None):
    """Per-point CATEs and utility contrasts plus the scalar metric block."""
    util = utility if utility is not None else identity_utility()
    identity = identity_utility()
    n = test_data.n
    tau_true = np.asarray(oracle.true_mean(1, test_data.x)
                          - oracle.true_mean(0, test_data.x), dtype=np.float64)
    seeds = np.random.SeedSequence(seed).spawn(n)
    tau_hat = np.empty(n)
    contrast_hat = np.empty(n)
    contrast_true = np.empty(n)
    same_as_identity = util.name == "identity"
    for i in range(n):
        row = test_data.x[i:i + 1]
        curves = (estimate_cdf(model, row, 0), estimate_cdf(model, row, 1))
        point_seed = int(seeds[i].generate_state(1)[0])
        tau_hat[i] = utility_contrast(model, row, identity, n_samples=mc_samples,
                                      seed=point_seed, curves=curves)
        if same_as_identity:
            contrast_hat[i] = tau_hat[i]
            contrast_true[i] = tau_true[i]
        else:
            index = i if util.per_individual is not None else None
            contrast_hat[i] = utility_contrast(model, row, util, index=index,
                                               n_samples=mc_samples,
                                               seed=point_seed, curves=curves)
            contrast_true[i] = util.oracle_contrast(oracle, row, util.row(index))
    try:
        auc = decision_auc(contrast_hat, contrast_true)
    except ValueError:
        auc = None
    has_po = test_data.y0 is not None and test_data.y1 is not None
    return MetricsReport(
        pehe=pehe(tau_hat, tau_true),
        ll=approx_ll(model, test_data, eps) if has_po else None,
        auc=auc,
        oracle_ll=oracle.true_ll_reference(test_data, eps) if has_po else None,
        ll_factual=approx_ll_factual(model, test_data, eps),
        n_test=n,
        extras={"utility": util.name},
        per_point={"tau_hat": tau_hat, "tau_true": tau_true,
                   "contrast_hat": contrast_hat, "contrast_true": contrast_true})


def run_rep(config, rep):
    """One repetition: draw, split, train, evaluate. Returns (row, report, model)."""
    data_seed, split_seed, train_seed, eval_seed = _rep_seeds(config.seed, rep)
    data, oracle = generate_scenario(config.scenario, config.scenario_config(data_seed))
    train_data, test_data = train_test_split(data, config.test_fraction, split_seed)
    started = time.perf_counter()
    model = fit_estimator(train_data, config, train_seed)
    train_seconds = time.perf_counter() - started
    util = pick_utility(config.utility, oracle, test_data, eval_seed)
    report = evaluate_model(model, test_data, oracle, eps=config.eps,
                            mc_samples=config.mc_samples, seed=eval_seed,
                            utility=util)
    row = {"rep": rep, "data_checksum": data.checksum(),
           "train_seconds": round(train_seconds, 3)}
    for name in ("pehe", "ll", "ll_factual", "oracle_ll", "auc", "n_test"):
        row[name] = getattr(report, name)
    return row, report, model


def _write_rows(path, rows, columns):
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _aggregate(rows, keys=("pehe", "ll", "ll_factual", "oracle_ll", "auc")):
    out = {}
    for key in keys:
        values = [r[key] for r in rows if r.get(key) is not None]
        if values:
            out[f"{key}_mean"] = float(np.mean(values))
            out[f"{key}_sd"] = float(np.std(values))
    out["reps_done"] = len(rows)
    return out


def run_experiment(config, out_dir=None):
    """All repetitions of one experiment; partial results survive failures.

    Returns {"rows", "aggregate", "failures"}; with ``out_dir`` also writes
    runs.csv, summary.json and one per-point CSV per repetition.
    """
    rows, failures, reports = [], [], []
    for rep in range(config.reps):
        try:
            row, report, _ = run_rep(config, rep)
        except Exception as exc:  # noqa: BLE001 - a rep failure must not kill the run
            warnings.warn(f"rep {rep} failed: {exc}", RuntimeWarning, stacklevel=2)
            failures.append({"rep": rep, "error": f"{type(exc).__name__}: {exc}"})
            continue
        rows.append(row)
        reports.append((rep, report))
    result = {"rows": rows, "aggregate": _aggregate(rows), "failures": failures,
              "config": config.to_dict()}
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        _write_rows(d / "runs.csv", rows, ["rep", *SCALAR_COLUMNS, "data_checksum"])
        with open(d / "summary.json", "w", encoding="ascii") as fh:
            json.dump({k: result[k] for k in ("aggregate", "failures", "config")},
                      fh, indent=1)
        for rep, report in reports:
            report.per_point_to_csv(d / f"points_rep{rep:02d}.csv")
    return result


def _ablation_fccn(variant, base):
    if variant == "wass":
        alpha = base.alpha if base.alpha > 0 else FccnConfig().alpha
        return replace(base, alpha=alpha, beta=0.0, propensity_coord=False)
    if variant == "assign":
        beta = base.beta if base.beta > 0 else FccnConfig().beta
        return replace(base, alpha=0.0, beta=beta, propensity_coord=False)
    if variant == "ps":
        return replace(base, alpha=0.0, beta=0.0, propensity_coord=True)
    if variant == "assign_ps":
        beta = base.beta if base.beta > 0 else FccnConfig().beta
        return replace(base, alpha=0.0, beta=beta, propensity_coord=True)
    return base


def run_ablation(config, out_dir=None, variants=ABLATION_VARIANTS):
    """Paired-seed comparison of adjustment subsets on identical datasets."""
    for v in variants:
        if v not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant {v!r}")
    rows, failures = [], []
    for rep in range(config.reps):
        checksums = set()
        for variant in variants:
            if variant == "ccn":
                cell = replace(config, estimator="ccn")
            else:
                cell = replace(config, estimator="fccn",
                               fccn=_ablation_fccn(variant, config.fccn))
            try:
                row, _, _ = run_rep(cell, rep)
            except Exception as exc:  # noqa: BLE001
                warnings.warn(f"{variant} rep {rep} failed: {exc}",
                              RuntimeWarning, stacklevel=2)
                failures.append({"variant": variant, "rep": rep,
                                 "error": f"{type(exc).__name__}: {exc}"})
                continue
            row["variant"] = variant
            checksums.add(row["data_checksum"])
            rows.append(row)
        if len(checksums) > 1:
            raise RuntimeError(f"rep {rep}: variants saw different datasets")
    by_variant = {}
    for variant in variants:
        sub = [r for r in rows if r["variant"] == variant]
        if sub:
            by_variant[variant] = _aggregate(sub)
    result = {"rows": rows, "by_variant": by_variant, "failures": failures,
              "config": config.to_dict()}
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        _write_rows(d / "ablation.csv", rows,
                    ["variant", "rep", *SCALAR_COLUMNS, "data_checksum"])
        with open(d / "ablation.json", "w", encoding="ascii") as fh:
            json.dump({k: result[k] for k in ("by_variant", "failures", "config")},
                      fh, indent=1)
    return result


def _sweep_cell(config, axis, value):
    if axis == "sample_size":
        return replace(config, n=int(value))
    if axis == "alpha":
        return replace(config, fccn=replace(config.fccn, alpha=float(value)))
    if axis == "beta":
        return replace(config, fccn=replace(config.fccn, beta=float(value)))
    if axis == "noise_dims":
        return replace(config, noise_dims=int(value))
    return replace(config, propensity_scale=float(value))


def run_sweep(config, axis, values, out_dir=None):
    """One knob, several values, ``config.reps`` repetitions each; long format."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    rows, failures = [], []
    for value in values:
        cell = _sweep_cell(config, axis, value)
        for rep in range(cell.reps):
            try:
                row, _, _ = run_rep(cell, rep)
            except Exception as exc:  # noqa: BLE001
                warnings.warn(f"{axis}={value} rep {rep} failed: {exc}",
                              RuntimeWarning, stacklevel=2)
                failures.append({"axis": axis, "value": value, "rep": rep,
                                 "error": f"{type(exc).__name__}: {exc}"})
                continue
            row["axis"] = axis
            row["value"] = value
            rows.append(row)
    result = {"rows": rows, "failures": failures, "axis": axis,
              "values": list(values), "config": config.to_dict()}
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        _write_rows(d / "sweep.csv", rows,
                    ["axis", "value", "rep", *SCALAR_COLUMNS, "data_checksum"])
        with open(d / "sweep.json", "w", encoding="ascii") as fh:
            json.dump({k: result[k] for k in ("axis", "values", "failures", "config")},
                      fh, indent=1)
    return result


def emit_cdf_sketch(model, data, oracle, indices, path, grid_size=201):
    """Fitted-versus-true CDF values on the z grid at chosen covariate rows."""
    rows = []
    for index in indices:
        row_x = data.x[index:index + 1]
        for arm in (0, 1):
            curve = estimate_cdf(model, row_x, arm, grid_size)
            truth = oracle.true_cdf(arm, np.repeat(row_x, grid_size, axis=0), curve.z)
            for z, est, ref in zip(curve.z, curve.p, np.atleast_1d(truth)):
                rows.append({"index": index, "arm": arm, "z": z,
                             "estimate": est, "oracle": ref})
    _write_rows(path, rows, ["index", "arm", "z", "estimate", "oracle"])
    return len(rows)
