"""Train one model and dump fitted-versus-true conditional CDF curves.

Writes a long CSV (index, arm, z, estimate, oracle) at a few covariate rows
of a fresh test draw. With --plot also renders a small panel per row
(requires matplotlib, which the core package does not).
"""

from __future__ import annotations

import argparse
from pathlib import Path

from ccnlab.ccn import TrainConfig
from ccnlab.fccn import FccnConfig
from ccnlab.harness import ExperimentConfig, emit_cdf_sketch, fit_estimator
from ccnlab.scenarios import ScenarioConfig, generate_scenario


def plot_sketch(csv_path, png_path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the plot")
        return
    import numpy as np
    rows = np.genfromtxt(csv_path, delimiter=",", names=True)
    indices = sorted(set(int(v) for v in rows["index"]))
    fig, axes = plt.subplots(1, len(indices), figsize=(4 * len(indices), 3),
                             squeeze=False)
    for ax, index in zip(axes[0], indices):
        for arm, style in ((0, "C0"), (1, "C1")):
            sel = (rows["index"] == index) & (rows["arm"] == arm)
            ax.plot(rows["z"][sel], rows["oracle"][sel], style, lw=1,
                    label=f"true arm {arm}")
            ax.plot(rows["z"][sel], rows["estimate"][sel], style + "--", lw=1,
                    label=f"fit arm {arm}")
        ax.set_title(f"row {index}")
        ax.set_xlabel("z")
    axes[0][0].set_ylabel("Pr[Y(t) < z | x]")
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    print(f"Wrote plot to {png_path}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="multimodal")
    parser.add_argument("--n", type=int, default=1600)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--estimator", choices=("ccn", "fccn"), default="fccn")
    parser.add_argument("--epochs", type=int, default=400)
    parser.add_argument("--indices", default="0,1,2,3")
    parser.add_argument("--grid-size", type=int, default=201)
    parser.add_argument("--out", default="results/cdf_sketch.csv")
    parser.add_argument("--plot", action="store_true")
    args = parser.parse_args()

    train_data, _ = generate_scenario(args.scenario,
                                      ScenarioConfig(n=args.n, seed=args.seed))
    test_data, oracle = generate_scenario(args.scenario,
                                          ScenarioConfig(n=64, seed=args.seed + 1))
    config = ExperimentConfig(
        scenario=args.scenario, n=args.n, estimator=args.estimator,
        seed=args.seed,
        train=TrainConfig(epochs=args.epochs, batch_size=256, z_draws=8,
                          patience=80),
        fccn=FccnConfig())
    model = fit_estimator(train_data, config, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    indices = [int(v) for v in args.indices.split(",")]
    written = emit_cdf_sketch(model, test_data, oracle, indices, out,
                              grid_size=args.grid_size)
    print(f"Wrote {written} curve points to {out}")
    if args.plot:
        plot_sketch(out, out.with_suffix(".png"))


if __name__ == "__main__":  # pragma: no cover - manual script
    main()
