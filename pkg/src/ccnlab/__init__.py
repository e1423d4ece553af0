"""Distributional treatment-effect estimation with collaborating CDF networks."""

from .ccn import (CdfCurve, CdfModel, ExtrapolationWarning, TrainConfig,
                  estimate_cdf, load_model, neighborhood_prob, quantile,
                  sample_outcomes, save_model, train_ccn)
from .data import Dataset, train_test_split
from .fccn import FccnConfig, estimate_w1, train_fccn
from .harness import (ExperimentConfig, emit_cdf_sketch, evaluate_model,
                      run_ablation, run_experiment, run_sweep)
from .metrics import (MetricsReport, UtilitySpec, approx_ll, builtin_utilities,
                      decision_auc, interval_width, pehe, utility_contrast)
from .scenarios import (SCENARIO_NAMES, ScenarioConfig, ScenarioOracle,
                        apply_imbalance_knobs, generate_scenario, load_scenario,
                        save_scenario)

__version__ = "0.1.0"

__all__ = [
    "CdfCurve", "CdfModel", "Dataset", "ExperimentConfig", "ExtrapolationWarning",
    "FccnConfig", "MetricsReport", "SCENARIO_NAMES", "ScenarioConfig",
    "ScenarioOracle", "TrainConfig", "UtilitySpec", "apply_imbalance_knobs",
    "approx_ll", "builtin_utilities", "decision_auc", "emit_cdf_sketch",
    "estimate_cdf", "estimate_w1", "evaluate_model", "generate_scenario",
    "interval_width", "load_model", "load_scenario", "neighborhood_prob", "pehe",
    "quantile", "run_ablation", "run_experiment", "run_sweep", "sample_outcomes",
    "save_model", "save_scenario", "train_ccn", "train_fccn", "train_test_split",
    "utility_contrast",
]
