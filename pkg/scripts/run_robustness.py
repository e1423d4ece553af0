"""Robustness sweeps: irrelevant covariates and treatment imbalance.

Two one-knob sweeps on the same scenario and budget: padding the covariates
with pure-noise dimensions, and sharpening the assignment propensity until
one arm starves in parts of covariate space.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from ccnlab.ccn import TrainConfig
from ccnlab.fccn import FccnConfig
from ccnlab.harness import ExperimentConfig, run_sweep


def summarize(result, label):
    print(f"{label:<18} {'value':>7} {'pehe':>8} {'|LL gap|':>9}")
    for value in result["values"]:
        rows = [r for r in result["rows"] if r["value"] == value]
        if not rows:
            print(f"{'':<18} {value:>7} {'all failed':>18}")
            continue
        pehe = np.mean([r["pehe"] for r in rows])
        gap = np.mean([abs(r["ll"] - r["oracle_ll"]) for r in rows
                       if r["ll"] is not None])
        print(f"{'':<18} {value:>7} {pehe:8.4f} {gap:9.4f}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="logistic")
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=300)
    parser.add_argument("--noise-dims", default="0,2,8")
    parser.add_argument("--propensity-scales", default="0.5,1,2,4")
    parser.add_argument("--out", default="results/robustness")
    args = parser.parse_args()

    config = ExperimentConfig(
        scenario=args.scenario, n=args.n, reps=args.reps, seed=args.seed,
        estimator="fccn",
        train=TrainConfig(epochs=args.epochs, batch_size=512, z_draws=8,
                          patience=60),
        fccn=FccnConfig())
    noise = run_sweep(config, "noise_dims",
                      [int(v) for v in args.noise_dims.split(",")],
                      out_dir=Path(args.out) / "noise_dims")
    summarize(noise, "noise_dims")
    scales = run_sweep(config, "propensity_scale",
                       [float(v) for v in args.propensity_scales.split(",")],
                       out_dir=Path(args.out) / "propensity_scale")
    summarize(scales, "propensity_scale")
    print(f"Wrote results to {args.out}")


if __name__ == "__main__":  # pragma: no cover - manual script
    main()
