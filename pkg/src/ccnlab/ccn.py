"""Conditional outcome CDFs for the two treatment arms.

Two networks g0 and g1 map (features..., z) to Pr[Y(t) < z | x]. Training
minimizes, summed over arms, the mean binary cross-entropy between g_t and
the indicator 1{y < z} at z drawn uniformly from the padded outcome range;
with the uniform z measure this drives each g_t toward the true conditional
CDF pointwise.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression

from .data import Dataset
from .nets import (AdamState, DenseNet, MonotoneNet, adam_step, load_net,
                   save_net)

# Probability clamp applied before any log in a cross-entropy term.
PROB_CLAMP = 1e-7
# Floor for neighborhood probabilities so log-likelihoods stay finite.
DENSITY_FLOOR = 1e-12

ARCHITECTURES = ("plain", "monotone")


class ExtrapolationWarning(UserWarning):
    """A requested quantile lies outside the range the fitted curve attains."""


@dataclass
class TrainConfig:
    """Optimization settings shared by the plain and adjusted trainers."""

    epochs: int = 3000
    batch_size: int = 128
    z_draws: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 50
    holdout_fraction: float = 0.2
    hidden: tuple = (100,)
    activation: str = "relu"
    architecture: str = "plain"
    monotone_components: int = 10
    padding_fraction: float = 0.1
    max_steps: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError(f"holdout_fraction must be in [0, 1), got {self.holdout_fraction}")
        if self.epochs < 1 or self.batch_size < 1 or self.z_draws < 1:
            raise ValueError("epochs, batch_size and z_draws must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class ZSampler:
    """Uniform sampler over the observed outcome range padded on both sides."""

    low: float
    high: float
    padding_fraction: float = 0.1

    @classmethod
    def from_outcomes(cls, y, padding_fraction=0.1):
        return cls(float(np.min(y)), float(np.max(y)), padding_fraction)

    @property
    def support(self):
        pad = self.padding_fraction * (self.high - self.low)
        if pad == 0.0:  # all outcomes equal; keep a usable interval
            pad = 0.5
        return (self.low - pad, self.high + pad)

    def sample(self, rng, size):
        lo, hi = self.support
        return rng.uniform(lo, hi, size=size)


@dataclass
class CdfCurve:
    """A fitted CDF on an even grid: z strictly increasing, p non-decreasing."""

    z: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.z.ndim != 1 or self.z.shape != self.p.shape or self.z.size < 2:
            raise ValueError("curve needs matching 1-D z and p arrays with at least two points")
        if not np.all(np.diff(self.z) > 0):
            raise ValueError("z grid must be strictly increasing")
        if np.any(np.diff(self.p) < 0) or self.p[0] < 0 or self.p[-1] > 1:
            raise ValueError("probabilities must be non-decreasing within [0, 1]")

    def value_at(self, z):
        return np.interp(z, self.z, self.p)

    def inverse_many(self, u):
        """Generalized inverse; exact hits on a flat stretch take its right edge."""
        return np.interp(u, self.p, self.z)


@dataclass
class CdfModel:
    """A trained pair of arm CDFs plus the z range they were fitted on."""

    g0: object
    g1: object
    z_low: float
    z_high: float
    padding_fraction: float
    covariate_dim: int
    architecture: str = "plain"
    heads: object | None = None
    train_info: dict = field(default_factory=dict)

    @property
    def z_support(self):
        pad = self.padding_fraction * (self.z_high - self.z_low)
        if pad == 0.0:
            pad = 0.5
        return (self.z_low - pad, self.z_high + pad)

    def net_for(self, arm):
        if arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {arm!r}")
        return self.g1 if arm == 1 else self.g0

    def features(self, x):
        """Raw covariates, or the learned representation when heads exist."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.covariate_dim:
            raise ValueError(f"expected {self.covariate_dim} covariates, got {x.shape[1]}")
        if self.heads is None:
            return x
        return self.heads.represent(x)

    def cdf_values(self, x, arm, zs):
        """Raw g_t outputs for paired covariate rows and z values."""
        feats = self.features(x)
        zs = np.asarray(zs, dtype=np.float64).reshape(-1, 1)
        if zs.shape[0] != feats.shape[0]:
            raise ValueError(f"{feats.shape[0]} covariate rows but {zs.shape[0]} z values")
        g = self.net_for(arm)
        return g.forward(np.hstack([feats, zs])).ravel()


def _make_g(feature_dim, config, seed_seq):
    if config.architecture == "monotone":
        return MonotoneNet(feature_dim, config.monotone_components,
                           hidden=config.hidden, hidden_activation=config.activation,
                           rng=seed_seq)
    return DenseNet((feature_dim + 1, *config.hidden, 1), config.activation,
                    "sigmoid", rng=seed_seq)


def g_loss_batch(g, feats, y, zs):
    """Cross-entropy of g against 1{y < z}, averaged over pairs and draws.

    Accumulates parameter gradients into ``g`` and returns
    (loss, gradient with respect to the feature rows).
    """
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    if zs.ndim == 1:
        zs = zs[:, None]
    n, k = zs.shape
    if feats.shape[0] != n or y.shape != (n,):
        raise ValueError("feats, y and zs must agree on the number of pairs")
    tiled = np.repeat(feats, k, axis=0)
    targets = (np.repeat(y, k) < zs.ravel()).astype(np.float64)[:, None]
    probs = g.forward(np.hstack([tiled, zs.reshape(-1, 1)]), remember=True)
    clamped = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(-np.mean(targets * np.log(clamped) + (1.0 - targets) * np.log1p(-clamped)))
    upstream = (clamped - targets) / (clamped * (1.0 - clamped)) / targets.size
    input_grad = g.backward(upstream)
    return loss, input_grad[:, :-1].reshape(n, k, -1).sum(axis=1)


def g_loss_value(g, feats, y, zs):
    """Loss of ``g_loss_batch`` without touching any gradients."""
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    zs = np.asarray(zs, dtype=np.float64)
    if zs.ndim == 1:
        zs = zs[:, None]
    n, k = zs.shape
    tiled = np.repeat(feats, k, axis=0)
    targets = (np.repeat(np.asarray(y, dtype=np.float64), k) < zs.ravel()).astype(np.float64)[:, None]
    probs = g.forward(np.hstack([tiled, zs.reshape(-1, 1)]))
    clamped = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(targets * np.log(clamped) + (1.0 - targets) * np.log1p(-clamped)))


def _holdout_loss(g0, g1, bundle, x, t, y, zs):
    feats = x if bundle is None else bundle.represent(x)
    total = 0.0
    for arm, g in ((0, g0), (1, g1)):
        mask = t == arm
        if mask.any():
            total += g_loss_value(g, feats[mask], y[mask], zs[mask])
    return total


def _fit(data, config, make_bundle=None):
    """Shared minibatch loop behind both trainers.

    The bundle, when present, owns the representation stack and performs the
    joint per-batch update; without one the raw covariates feed g directly.
    Both paths consume the seed-derived RNG streams identically.
    """
    if not isinstance(data, Dataset):
        raise TypeError(f"expected Dataset, got {type(data).__name__}")
    root = np.random.SeedSequence(config.seed)
    s_g0, s_g1, s_split, s_train, s_valz, s_heads = root.spawn(6)

    sampler = ZSampler.from_outcomes(data.y, config.padding_fraction)
    rng_split = np.random.default_rng(s_split)
    perm = rng_split.permutation(data.n)
    n_val = int(round(config.holdout_fraction * data.n)) if config.holdout_fraction > 0 else 0
    n_val = min(n_val, data.n - 2)
    val_idx, fit_idx = perm[:n_val], perm[n_val:]
    t_fit = data.t[fit_idx]
    if t_fit.sum() == 0 or t_fit.sum() == t_fit.size:
        raise ValueError("holdout split left a treatment arm empty; provide more data")
    x_fit, y_fit = data.x[fit_idx], data.y[fit_idx]
    x_val, t_val, y_val = data.x[val_idx], data.t[val_idx], data.y[val_idx]
    z_val = sampler.sample(np.random.default_rng(s_valz), (n_val, config.z_draws))

    bundle = make_bundle(data.p, s_heads) if make_bundle is not None else None
    feature_dim = data.p if bundle is None else bundle.feature_dim
    g0 = _make_g(feature_dim, config, s_g0)
    g1 = _make_g(feature_dim, config, s_g1)
    opt0 = AdamState.for_net(g0, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    opt1 = AdamState.for_net(g1, config.learning_rate, config.beta1, config.beta2, config.adam_eps)

    rng_train = np.random.default_rng(s_train)
    best_val = np.inf
    best_params = None
    patience_left = config.patience
    steps = 0
    epochs_run = 0
    out_of_budget = False
    for epoch in range(config.epochs):
        order = rng_train.permutation(fit_idx.size)
        for start in range(0, order.size, config.batch_size):
            rows = order[start:start + config.batch_size]
            zs = sampler.sample(rng_train, (rows.size, config.z_draws))
            xb, tb, yb = x_fit[rows], t_fit[rows], y_fit[rows]
            if bundle is None:
                for arm, g, opt in ((0, g0, opt0), (1, g1, opt1)):
                    mask = tb == arm
                    if mask.any():
                        g_loss_batch(g, xb[mask], yb[mask], zs[mask])
                        adam_step(g, opt)
            else:
                bundle.step(g0, g1, opt0, opt1, xb, tb, yb, zs)
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                out_of_budget = True
                break
        epochs_run = epoch + 1
        if n_val > 0:
            val_loss = _holdout_loss(g0, g1, bundle, x_val, t_val, y_val, z_val)
            if not np.isfinite(val_loss):
                raise RuntimeError(f"holdout loss became non-finite at epoch {epoch}")
            if val_loss < best_val:
                best_val = val_loss
                best_params = [g0.params.copy(), g1.params.copy()]
                if bundle is not None:
                    best_params.append(bundle.snapshot())
                patience_left = config.patience
            else:
                patience_left -= 1
                if patience_left <= 0:
                    break
        if out_of_budget:
            break
    if best_params is not None:
        g0.params[:] = best_params[0]
        g1.params[:] = best_params[1]
        if bundle is not None:
            bundle.restore(best_params[2])

    info = {"epochs_run": epochs_run, "steps": steps,
            "best_holdout_loss": None if best_val == np.inf else best_val,
            "stopped_early": patience_left <= 0}
    return CdfModel(g0, g1, sampler.low, sampler.high, config.padding_fraction,
                    data.p, config.architecture,
                    heads=None if bundle is None else bundle.heads,
                    train_info=info)


def train_ccn(data, config=None):
    """Fit the two arm CDF networks on raw covariates."""
    return _fit(data, config if config is not None else TrainConfig())


def estimate_cdf(model, x, arm, grid_size=201):
    """Monotone CDF curve at one covariate row over the padded z range.

    Raw network outputs are projected onto non-decreasing sequences
    (least-squares isotonic fit), then clipped into [0, 1].
    """
    if grid_size < 2:
        raise ValueError(f"grid_size must be at least 2, got {grid_size}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != 1:
        raise ValueError("estimate_cdf expects a single covariate row")
    lo, hi = model.z_support
    grid = np.linspace(lo, hi, grid_size)
    raw = model.cdf_values(np.repeat(x, grid_size, axis=0), arm, grid)
    iso = isotonic_regression(raw).x
    return CdfCurve(grid, np.clip(iso, 0.0, 1.0))


def quantile(model, x, arm, q, grid_size=201, curve=None):
    """Invert the fitted CDF by bisection on its linear interpolant.

    Targets outside the attained range clamp to the grid edge and raise
    ExtrapolationWarning.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level must be in [0, 1], got {q}")
    if curve is None:
        curve = estimate_cdf(model, x, arm, grid_size)
    z, p = curve.z, curve.p
    if q < p[0] or q > p[-1]:
        warnings.warn(f"quantile {q:.6g} outside attained CDF range [{p[0]:.6g}, {p[-1]:.6g}]; "
                      "clamping to the grid edge", ExtrapolationWarning, stacklevel=2)
        return float(z[0] if q < p[0] else z[-1])
    lo, hi = float(z[0]), float(z[-1])
    tol = 1e-6 * (hi - lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if curve.value_at(mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sample_outcomes(model, x, arm, n_samples, seed, grid_size=201, curve=None):
    """Inverse-transform draws from the fitted CDF at one covariate row."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    rng = np.random.default_rng(seed)
    if curve is None:
        curve = estimate_cdf(model, x, arm, grid_size)
    return curve.inverse_many(rng.uniform(size=int(n_samples)))


def neighborhood_prob(model, x, arm, y, eps):
    """Probability mass the raw g places on (y - eps, y + eps), floored at 1e-12."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    vals = model.cdf_values(np.repeat(x, 2, axis=0), arm, [y - eps, y + eps])
    return float(max(vals[1] - vals[0], DENSITY_FLOOR))


def neighborhood_prob_many(model, x, arm, ys, eps):
    """Vectorized ``neighborhood_prob`` over paired covariate rows and outcomes."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    ys = np.asarray(ys, dtype=np.float64)
    upper = model.cdf_values(x, arm, ys + eps)
    lower = model.cdf_values(x, arm, ys - eps)
    return np.maximum(upper - lower, DENSITY_FLOOR)


def save_model(model, directory):
    """Write manifest plus one file per network under ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {"architecture": model.architecture, "z_low": model.z_low,
                "z_high": model.z_high, "padding_fraction": model.padding_fraction,
                "covariate_dim": model.covariate_dim,
                "train_info": model.train_info, "heads": None}
    save_net(model.g0, d / "g0.net")
    save_net(model.g1, d / "g1.net")
    if model.heads is not None:
        manifest["heads"] = model.heads.manifest()
        model.heads.save(d)
    with open(d / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=1)


def load_model(directory):
    d = Path(directory)
    with open(d / "manifest.json", "r", encoding="ascii") as fh:
        manifest = json.load(fh)
    heads = None
    if manifest["heads"] is not None:
        from .fccn import FccnHeads  # deferred: fccn imports this module
        heads = FccnHeads.load(d, manifest["heads"])
    return CdfModel(load_net(d / "g0.net"), load_net(d / "g1.net"),
                    manifest["z_low"], manifest["z_high"],
                    manifest["padding_fraction"], manifest["covariate_dim"],
                    manifest["architecture"], heads=heads,
                    train_info=manifest.get("train_info", {}))
