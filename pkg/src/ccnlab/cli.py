"""Command line entry points for data generation, training and experiments."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from .ccn import TrainConfig, load_model, save_model
from .fccn import FccnConfig
from .harness import (ABLATION_VARIANTS, SWEEP_AXES, ExperimentConfig,
                      emit_cdf_sketch, evaluate_model, fit_estimator,
                      pick_utility, run_ablation, run_experiment, run_sweep)
from .scenarios import SCENARIO_NAMES, ScenarioConfig, generate_scenario, save_scenario

UTILITY_NAMES = ("identity", "linear_offset", "control_mean_threshold",
                 "personalized_threshold")


def _add_scenario_args(parser):
    parser.add_argument("--scenario", choices=SCENARIO_NAMES, default="logistic")
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise-dims", type=int, default=0)
    parser.add_argument("--propensity-scale", type=float, default=1.0)
    parser.add_argument("--truncation", default=None,
                        help="lo,hi propensity band to drop, e.g. 0.4,0.6")
    parser.add_argument("--exp-parameterization", choices=("rate", "mean"),
                        default="rate")


def _scenario_config(args, n=None, seed=None):
    truncation = None
    if args.truncation:
        lo, hi = (float(v) for v in args.truncation.split(","))
        truncation = (lo, hi)
    return ScenarioConfig(n=n if n is not None else args.n,
                          seed=seed if seed is not None else args.seed,
                          noise_dims=args.noise_dims,
                          propensity_scale=args.propensity_scale,
                          truncation=truncation,
                          exp_parameterization=args.exp_parameterization)


def _add_train_args(parser):
    parser.add_argument("--estimator", choices=("ccn", "fccn"), default="fccn")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--z-draws", type=int, default=None)
    parser.add_argument("--learning-rate", type=float, default=None)
    parser.add_argument("--patience", type=int, default=None)
    parser.add_argument("--hidden", default=None, help="layer widths, e.g. 100,100")
    parser.add_argument("--architecture", choices=("plain", "monotone"), default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--no-propensity-coord", action="store_true")


def _train_configs(args, train_seed):
    train_kwargs = {"seed": train_seed}
    for flag, name in (("epochs", "epochs"), ("batch_size", "batch_size"),
                       ("z_draws", "z_draws"), ("learning_rate", "learning_rate"),
                       ("patience", "patience"), ("architecture", "architecture")):
        value = getattr(args, flag)
        if value is not None:
            train_kwargs[name] = value
    if args.hidden is not None:
        train_kwargs["hidden"] = tuple(int(v) for v in args.hidden.split(","))
    fccn_kwargs = {}
    if args.alpha is not None:
        fccn_kwargs["alpha"] = args.alpha
    if args.beta is not None:
        fccn_kwargs["beta"] = args.beta
    if args.no_propensity_coord:
        fccn_kwargs["propensity_coord"] = False
    return TrainConfig(**train_kwargs), FccnConfig(**fccn_kwargs)


def _parse_literal(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_sets(payload, items):
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        target = payload
        parts = key.strip().split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = _parse_literal(raw.strip())


def _experiment_config(args):
    payload = {}
    if args.config:
        with open(args.config, "r", encoding="ascii") as fh:
            payload = json.load(fh)
    _apply_sets(payload, args.set)
    return ExperimentConfig.from_dict(payload)


def _add_config_args(parser):
    parser.add_argument("--config", default=None, help="experiment config JSON")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field, e.g. train.epochs=200")
    parser.add_argument("--out", required=True)


def cmd_generate(args):
    data, oracle = generate_scenario(args.scenario, _scenario_config(args))
    csv_path, _ = save_scenario(data, oracle, _scenario_config(args), args.out,
                                stem=args.stem)
    print(f"Saved {data.n} rows of {args.scenario!r} to {csv_path}")


def cmd_train(args):
    data, _ = generate_scenario(args.scenario, _scenario_config(args))
    tc, fc = _train_configs(args, args.seed)
    config = ExperimentConfig(scenario=args.scenario, n=args.n,
                              estimator=args.estimator, seed=args.seed,
                              train=tc, fccn=fc)
    model = fit_estimator(data, config, args.seed)
    save_model(model, args.out)
    info = model.train_info
    print(f"Saved {args.estimator} model to {args.out} "
          f"(epochs {info['epochs_run']}, holdout loss {info['best_holdout_loss']:.4f})")


def cmd_eval(args):
    model = load_model(args.model)
    data, oracle = generate_scenario(args.scenario, _scenario_config(args))
    util = pick_utility(args.utility, oracle, data, args.seed)
    report = evaluate_model(model, data, oracle, eps=args.eps,
                            mc_samples=args.mc_samples, seed=args.seed,
                            utility=util)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        report.to_json(d / "metrics.json")
        report.per_point_to_csv(d / "points.csv")
        print(f"Wrote metrics to {d / 'metrics.json'}")
    auc = "n/a" if report.auc is None else f"{report.auc:.3f}"
    print(f"pehe {report.pehe:.4f}  ll {report.ll:.4f}  "
          f"oracle_ll {report.oracle_ll:.4f}  auc {auc}")


def cmd_run(args):
    config = _experiment_config(args)
    result = run_experiment(config, args.out)
    agg = result["aggregate"]
    print(f"Finished {agg['reps_done']}/{config.reps} reps of "
          f"{config.estimator} on {config.scenario!r}")
    for key in ("pehe_mean", "ll_mean", "auc_mean"):
        if key in agg:
            print(f"  {key} {agg[key]:.4f}")
    print(f"Wrote results to {args.out}")


def cmd_ablate(args):
    config = _experiment_config(args)
    variants = tuple(args.variants.split(",")) if args.variants else ABLATION_VARIANTS
    result = run_ablation(config, args.out, variants=variants)
    for variant, agg in result["by_variant"].items():
        ll = agg.get("ll_mean")
        shown = "n/a" if ll is None else f"{ll:.4f}"
        print(f"  {variant:<10} pehe {agg['pehe_mean']:.4f}  ll {shown}")
    print(f"Wrote results to {args.out}")


def cmd_sweep(args):
    config = _experiment_config(args)
    values = [_parse_literal(v) for v in args.values.split(",")]
    result = run_sweep(config, args.axis, values, args.out)
    print(f"Swept {args.axis} over {values}: {len(result['rows'])} rows, "
          f"{len(result['failures'])} failures")
    print(f"Wrote results to {args.out}")


def cmd_sketch(args):
    model = load_model(args.model)
    data, oracle = generate_scenario(args.scenario, _scenario_config(args))
    indices = [int(v) for v in args.indices.split(",")]
    written = emit_cdf_sketch(model, data, oracle, indices, args.out,
                              grid_size=args.grid_size)
    print(f"Wrote {written} curve points to {args.out}")


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="ccnlab",
                                     description="Conditional outcome CDF estimation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic dataset and save it")
    _add_scenario_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--stem", default="scenario")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model on a fresh scenario draw")
    _add_scenario_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a fresh draw")
    _add_scenario_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--mc-samples", type=int, default=1000)
    p.add_argument("--utility", choices=UTILITY_NAMES, default="identity")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="repeated train/evaluate experiment")
    _add_config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="paired comparison of adjustment subsets")
    _add_config_args(p)
    p.add_argument("--variants", default=None,
                   help=f"comma list from {ABLATION_VARIANTS}")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="vary one knob over a value list")
    _add_config_args(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma list, e.g. 500,1000,2000")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sketch", help="dump fitted vs true CDF curves to CSV")
    _add_scenario_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--indices", default="0,1,2")
    p.add_argument("--grid-size", type=int, default=201)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sketch)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":  # pragma: no cover - manual entry point
    main()
