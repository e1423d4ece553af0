"""Synthetic outcome scenarios with closed-form conditional-CDF oracles.

Every generator draws both potential outcomes, keeps them on the Dataset for
evaluation, and returns a ScenarioOracle exposing the true conditional CDFs,
means and propensities. Oracles accept covariate arrays that carry extra
trailing noise dimensions and ignore them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import betainc, expit, gamma as gamma_fn, gammainc
from scipy.stats import norm

from .ccn import DENSITY_FLOOR
from .data import Dataset
from .nets import DenseNet

SCENARIO_NAMES = ("multimodal", "logistic", "gumbel", "gamma", "weibull",
                  "beta_hetero", "edu_like")

# Parameter floors for the tail families and the bounded-outcome design.
SCALE_FLOOR = 1e-6
BETA_PARAM_FLOOR = 1e-3


@dataclass
class ScenarioConfig:
    """Size, seed and imbalance knobs shared by all generators."""

    n: int = 1000
    seed: int = 0
    noise_dims: int = 0
    propensity_scale: float = 1.0
    truncation: tuple | None = None
    exp_parameterization: str = "rate"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if self.noise_dims < 0:
            raise ValueError(f"noise_dims must be non-negative, got {self.noise_dims}")
        if self.propensity_scale < 0:
            raise ValueError(f"propensity_scale must be non-negative, got {self.propensity_scale}")
        if self.truncation is not None:
            lo, hi = self.truncation
            if not 0.0 < lo < hi < 1.0:
                raise ValueError(f"truncation must satisfy 0 < lo < hi < 1, got {self.truncation}")
            self.truncation = (float(lo), float(hi))
        if self.exp_parameterization not in ("rate", "mean"):
            raise ValueError(f"exp_parameterization must be 'rate' or 'mean', got {self.exp_parameterization!r}")


@dataclass
class ScenarioOracle:
    """Closed-form ground truth for one generated scenario."""

    name: str
    covariate_dim: int
    params: dict
    _cdf: callable
    _mean: callable
    _propensity: callable

    def _covariates(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] < self.covariate_dim:
            raise ValueError(f"{self.name} oracle needs {self.covariate_dim} covariates, got {x.shape[1]}")
        return x[:, :self.covariate_dim]

    def _pair(self, x, y):
        X = self._covariates(x)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 0:
            y = np.full(X.shape[0], float(y))
        elif X.shape[0] == 1 and y.size > 1:
            X = np.repeat(X, y.size, axis=0)
        elif y.shape != (X.shape[0],):
            raise ValueError(f"{X.shape[0]} covariate rows but {y.shape} outcome values")
        return X, y

    def true_cdf(self, arm, x, y):
        if arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {arm!r}")
        X, yv = self._pair(x, y)
        out = self._cdf(arm, X, yv)
        return float(out[0]) if out.size == 1 else out

    def true_mean(self, arm, x):
        if arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {arm!r}")
        out = self._mean(arm, self._covariates(x))
        return float(out[0]) if out.size == 1 else out

    def true_propensity(self, x):
        out = self._propensity(self._covariates(x))
        return float(out[0]) if out.size == 1 else out

    def true_ll_reference(self, data, eps=0.2):
        """Neighborhood log-likelihood of the truth itself; see metrics.approx_ll."""
        if data.y0 is None or data.y1 is None:
            raise ValueError("reference LL needs both potential outcomes on the dataset")
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        total = 0.0
        for arm, ys in ((0, data.y0), (1, data.y1)):
            X, yv = self._pair(data.x, ys)
            mass = self._cdf(arm, X, yv + eps) - self._cdf(arm, X, yv - eps)
            total += np.log(np.maximum(mass, DENSITY_FLOOR)).sum()
        return float(total / (2.0 * data.n))


@dataclass
class OracleCdfModel:
    """Duck-typed stand-in for a trained CdfModel, backed by the oracle.

    Provides ``cdf_values`` and ``z_support``, which is all the curve,
    quantile, sampling and neighborhood helpers need.
    """

    oracle: ScenarioOracle
    z_low: float
    z_high: float
    padding_fraction: float = 0.1

    @classmethod
    def for_dataset(cls, oracle, data, padding_fraction=0.1):
        return cls(oracle, float(np.min(data.y)), float(np.max(data.y)), padding_fraction)

    @property
    def z_support(self):
        pad = self.padding_fraction * (self.z_high - self.z_low)
        if pad == 0.0:
            pad = 0.5
        return (self.z_low - pad, self.z_high + pad)

    def cdf_values(self, x, arm, zs):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        zs = np.asarray(zs, dtype=np.float64).ravel()
        if x.shape[0] != zs.size:
            raise ValueError(f"{x.shape[0]} covariate rows but {zs.size} z values")
        out = self.oracle.true_cdf(arm, x, zs)
        return np.atleast_1d(np.asarray(out, dtype=np.float64))


def _noise_columns(x, config, rng):
    if config.noise_dims == 0:
        return x
    return np.hstack([x, rng.standard_normal((x.shape[0], config.noise_dims))])


def _forbid_knobs(config, name, scale=True, truncation=True):
    if scale and config.propensity_scale != 1.0:
        raise ValueError(f"{name} has no logistic assignment; propensity_scale does not apply")
    if truncation and config.truncation is not None:
        raise ValueError(f"truncation only applies to edu_like, not {name}")


def gen_multimodal(config):
    """1-D covariate, deterministic assignment T = 1{x > 0}, mixture outcomes.

    Y(0) = x + {N(-2,1) or N(2,1)}, Y(1) = x + {N(6,1.5^2) or Exp(1)}, with a
    shared fair mixture coin per unit.
    """
    _forbid_knobs(config, "multimodal")
    r_x, r_mix, r_n0, r_n1, r_noise = np.random.SeedSequence(config.seed).spawn(5)
    n = config.n
    x = np.random.default_rng(r_x).standard_normal((n, 1))
    coin = np.random.default_rng(r_mix).random(n) < 0.5
    rng0 = np.random.default_rng(r_n0)
    rng1 = np.random.default_rng(r_n1)
    y0 = np.where(coin, rng0.normal(-2.0, 1.0, n), rng0.normal(2.0, 1.0, n)) + x[:, 0]
    y1 = np.where(coin, rng1.normal(6.0, 1.5, n), rng1.standard_exponential(n)) + x[:, 0]
    t = (x[:, 0] > 0).astype(np.int64)
    data = Dataset(_noise_columns(x, config, np.random.default_rng(r_noise)),
                   t, np.where(t == 1, y1, y0), y0, y1)

    def cdf(arm, X, y):
        shifted = y - X[:, 0]
        if arm == 0:
            return 0.5 * norm.cdf(shifted + 2.0) + 0.5 * norm.cdf(shifted - 2.0)
        exp_part = np.where(shifted > 0, -np.expm1(-np.maximum(shifted, 0.0)), 0.0)
        return 0.5 * norm.cdf((shifted - 6.0) / 1.5) + 0.5 * exp_part

    def mean(arm, X):
        return X[:, 0] + (3.5 if arm == 1 else 0.0)

    def propensity(X):
        return (X[:, 0] > 0).astype(np.float64)

    oracle = ScenarioOracle("multimodal", 1, {"mixture_weight": 0.5}, cdf, mean, propensity)
    return data, oracle


def gen_logistic(config):
    """3-D Gaussian covariates, logistic outcomes with shared covariate scale."""
    _forbid_knobs(config, "logistic", scale=False)
    r_x, r_t, r_n0, r_n1, r_noise = np.random.SeedSequence(config.seed).spawn(5)
    n = config.n
    x = np.random.default_rng(r_x).standard_normal((n, 3))
    beta = np.full(3, 2.0) * config.propensity_scale
    prop = expit(x @ beta)
    t = (np.random.default_rng(r_t).random(n) < prop).astype(np.int64)

    def loc_scale(arm, X):
        s = np.abs(X.sum(axis=1)) + 0.5
        if arm == 0:
            return np.sin(np.pi * X[:, 0] + np.pi * X[:, 1]) + np.sin(np.pi * X[:, 2]), s
        return np.cos(np.pi * X[:, 0] + np.pi * X[:, 1]) + np.cos(np.pi * X[:, 2]), s

    mu0, s = loc_scale(0, x)
    mu1, _ = loc_scale(1, x)
    y0 = np.random.default_rng(r_n0).logistic(mu0, s)
    y1 = np.random.default_rng(r_n1).logistic(mu1, s)
    data = Dataset(_noise_columns(x, config, np.random.default_rng(r_noise)),
                   t, np.where(t == 1, y1, y0), y0, y1)

    def cdf(arm, X, y):
        mu, sc = loc_scale(arm, X)
        return expit((y - mu) / sc)

    def mean(arm, X):
        return loc_scale(arm, X)[0]

    oracle = ScenarioOracle("logistic", 3, {"logistic_beta": beta.tolist()},
                            cdf, mean, lambda X: expit(X @ beta))
    return data, oracle


def _tail_params(family, X):
    """Per-arm (a, b) parameter arrays for one tail family.

    The pair reads (location, scale) for gumbel on the full covariate sum,
    (shape, scale) for gamma and (scale, shape) for weibull on half-sums,
    with the arms swapping the sin/cos roles.
    """
    if family == "gumbel":
        s = X[:, :10].sum(axis=1)
        p0 = (5.0 * np.sin(s) ** 2, np.maximum(5.0 * np.cos(s) ** 2, SCALE_FLOOR))
        p1 = (5.0 * np.cos(s) ** 2, np.maximum(5.0 * np.sin(s) ** 2, SCALE_FLOOR))
        return p0, p1
    s1 = X[:, :5].sum(axis=1)
    s2 = X[:, 5:10].sum(axis=1)
    lo = np.sqrt(np.abs(np.sin(s1) + np.cos(s2)))
    hi = np.sqrt(np.abs(np.cos(s1) + np.sin(s2)))
    if family == "gamma":
        p0 = (4.0 * lo + 0.5, np.maximum(2.0 * hi, SCALE_FLOOR))
        p1 = (4.0 * hi + 0.5, np.maximum(2.0 * lo, SCALE_FLOOR))
    else:  # weibull
        p0 = (np.maximum(5.0 * lo, SCALE_FLOOR), 2.0 * hi + 0.2)
        p1 = (np.maximum(5.0 * hi, SCALE_FLOOR), 2.0 * lo + 0.2)
    return p0, p1


def _gumbel_cdf(y, loc, scale):
    # Inner exponent clipped: huge values would overflow before the outer
    # exp flushes them to zero anyway.
    return np.exp(-np.exp(np.clip(-(y - loc) / scale, None, 700.0)))


def gen_tail_family(config, family):
    """10-D Gaussian covariates, logistic assignment, heavy-tailed outcomes."""
    if family not in ("gumbel", "gamma", "weibull"):
        raise ValueError(f"family must be gumbel, gamma or weibull, got {family!r}")
    _forbid_knobs(config, family, scale=False)
    r_x, r_t, r_n0, r_n1, r_noise = np.random.SeedSequence(config.seed).spawn(5)
    n = config.n
    x = np.random.default_rng(r_x).standard_normal((n, 10))
    beta = np.full(10, 0.8) * config.propensity_scale
    t = (np.random.default_rng(r_t).random(n) < expit(x @ beta)).astype(np.int64)

    (a0, b0), (a1, b1) = _tail_params(family, x)
    rng0, rng1 = np.random.default_rng(r_n0), np.random.default_rng(r_n1)
    if family == "gumbel":
        y0, y1 = rng0.gumbel(a0, b0), rng1.gumbel(a1, b1)
    elif family == "gamma":
        y0, y1 = rng0.gamma(a0, b0), rng1.gamma(a1, b1)
    else:
        y0, y1 = a0 * rng0.weibull(b0), a1 * rng1.weibull(b1)
    data = Dataset(_noise_columns(x, config, np.random.default_rng(r_noise)),
                   t, np.where(t == 1, y1, y0), y0, y1)

    def cdf(arm, X, y):
        (c0, d0), (c1, d1) = _tail_params(family, X)
        a, b = (c1, d1) if arm == 1 else (c0, d0)
        if family == "gumbel":
            return _gumbel_cdf(y, a, b)
        if family == "gamma":
            return gammainc(a, np.maximum(y, 0.0) / b)
        return -np.expm1(-np.power(np.maximum(y, 0.0) / a, b))

    def mean(arm, X):
        (c0, d0), (c1, d1) = _tail_params(family, X)
        a, b = (c1, d1) if arm == 1 else (c0, d0)
        if family == "gumbel":
            return a + np.euler_gamma * b
        if family == "gamma":
            return a * b
        return a * gamma_fn(1.0 + 1.0 / b)

    oracle = ScenarioOracle(family, 10, {"logistic_beta": beta.tolist(), "family": family},
                            cdf, mean, lambda X: expit(X[:, :10] @ beta))
    return data, oracle


def gen_beta_hetero(config):
    """10-D covariates, shifted Beta outcomes with arm-swapped shape parameters."""
    _forbid_knobs(config, "beta_hetero", scale=False)
    r_x, r_t, r_n0, r_n1, r_noise = np.random.SeedSequence(config.seed).spawn(5)
    n = config.n
    x = np.random.default_rng(r_x).standard_normal((n, 10))
    beta = np.full(10, 0.8) * config.propensity_scale
    t = (np.random.default_rng(r_t).random(n) < expit(x @ beta)).astype(np.int64)

    def beta_params(arm, X):
        lo = np.maximum(np.abs(X[:, :5]).sum(axis=1) / 5.0, BETA_PARAM_FLOOR)
        hi = np.maximum(np.abs(X[:, 5:10]).sum(axis=1) / 5.0, BETA_PARAM_FLOOR)
        s = X[:, :10].sum(axis=1)
        if arm == 0:
            return lo, hi, np.sin(s)
        return hi, lo, np.cos(s)

    a0, b0, sh0 = beta_params(0, x)
    a1, b1, sh1 = beta_params(1, x)
    y0 = np.random.default_rng(r_n0).beta(a0, b0) + sh0
    y1 = np.random.default_rng(r_n1).beta(a1, b1) + sh1
    data = Dataset(_noise_columns(x, config, np.random.default_rng(r_noise)),
                   t, np.where(t == 1, y1, y0), y0, y1)

    def cdf(arm, X, y):
        a, b, shift = beta_params(arm, X)
        return betainc(a, b, np.clip(y - shift, 0.0, 1.0))

    def mean(arm, X):
        a, b, shift = beta_params(arm, X)
        return a / (a + b) + shift

    oracle = ScenarioOracle("beta_hetero", 10, {"logistic_beta": beta.tolist()},
                            cdf, mean, lambda X: expit(X[:, :10] @ beta))
    return data, oracle


def _frozen_response_net(rng, target_mean, calib_x):
    """Random single-hidden-layer response surface, standardized on the x law."""
    net = DenseNet((10, 32, 1), "sigmoid", "identity", rng=rng)
    raw = net.forward(calib_x).ravel()
    spread = raw.std()
    if spread < 1e-9:
        spread = 1.0
    # Rescale the output layer so the surface has unit sd and the target mean.
    w2 = net.params[-33:-1]
    b2 = net.params[-1:]
    w2 /= spread
    b2[:] = (b2 - raw.mean()) / spread + target_mean
    return net


def gen_edu_like(config):
    """9 Gaussian covariates plus a binary modifier m as the 10th coordinate.

    Y(0) = f0(x) + (2-m) N(0, 0.5^2) and Y(1) = f1(x) + (2-m) Exp(rate 2),
    so outcome spread doubles when m = 0 and the treated arm is skewed.
    f0 and f1 are frozen random response surfaces stored with the oracle.
    The exponential's second parameter is read as a rate by default;
    exp_parameterization="mean" flips the convention.
    """
    r_x, r_m, r_f, r_beta, r_t, r_n0, r_n1, r_noise = np.random.SeedSequence(config.seed).spawn(8)
    n = config.n
    xc = np.random.default_rng(r_x).standard_normal((n, 9))
    m = (np.random.default_rng(r_m).random(n) < 0.5).astype(np.float64)
    x = np.hstack([xc, m[:, None]])

    rng_f = np.random.default_rng(r_f)
    calib_x = np.hstack([rng_f.standard_normal((4096, 9)),
                         (rng_f.random(4096) < 0.5).astype(np.float64)[:, None]])
    f0 = _frozen_response_net(rng_f, 0.0, calib_x)
    f1 = _frozen_response_net(rng_f, 0.5, calib_x)

    beta = np.random.default_rng(r_beta).uniform(-0.8, 0.8, 10) * config.propensity_scale
    prop = expit(x @ beta)
    t = (np.random.default_rng(r_t).random(n) < prop).astype(np.int64)

    exp_scale = 0.5 if config.exp_parameterization == "rate" else 2.0
    spread = 2.0 - m
    y0 = f0.forward(x).ravel() + spread * np.random.default_rng(r_n0).normal(0.0, 0.5, n)
    y1 = f1.forward(x).ravel() + spread * np.random.default_rng(r_n1).exponential(exp_scale, n)

    keep = np.ones(n, dtype=bool)
    if config.truncation is not None:
        lo, hi = config.truncation
        keep = ~((prop > lo) & (prop < hi))
        if not keep.any() or len(set(t[keep])) < 2:
            raise ValueError("truncation removed too many units; a treatment arm is empty")
    x, t, m, y0, y1 = x[keep], t[keep], m[keep], y0[keep], y1[keep]
    data = Dataset(_noise_columns(x, config, np.random.default_rng(r_noise)),
                   t, np.where(t == 1, y1, y0), y0, y1)

    def cdf(arm, X, y):
        mm = X[:, 9]
        width = 2.0 - mm
        if arm == 0:
            return norm.cdf((y - f0.forward(X[:, :10]).ravel()) / (0.5 * width))
        centered = y - f1.forward(X[:, :10]).ravel()
        return np.where(centered > 0, -np.expm1(-np.maximum(centered, 0.0) / (exp_scale * width)), 0.0)

    def mean(arm, X):
        if arm == 0:
            return f0.forward(X[:, :10]).ravel()
        return f1.forward(X[:, :10]).ravel() + exp_scale * (2.0 - X[:, 9])

    params = {"logistic_beta": beta.tolist(),
              "exp_parameterization": config.exp_parameterization,
              "f0_params": f0.params.tolist(), "f1_params": f1.params.tolist()}
    oracle = ScenarioOracle("edu_like", 10, params, cdf, mean,
                            lambda X: expit(X[:, :10] @ beta))
    return data, oracle


REGISTRY = {
    "multimodal": gen_multimodal,
    "logistic": gen_logistic,
    "gumbel": lambda cfg: gen_tail_family(cfg, "gumbel"),
    "gamma": lambda cfg: gen_tail_family(cfg, "gamma"),
    "weibull": lambda cfg: gen_tail_family(cfg, "weibull"),
    "beta_hetero": gen_beta_hetero,
    "edu_like": gen_edu_like,
}


def generate_scenario(name, config):
    if name not in REGISTRY:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(REGISTRY)}")
    return REGISTRY[name](config)


def apply_imbalance_knobs(data, oracle, config):
    """Re-randomize assignment under a scaled logistic law and append noise.

    Needs both potential outcomes on the dataset (the observed outcome is
    re-derived from the new assignment) and a logistic assignment in the
    oracle. propensity_scale multiplies the oracle's current coefficients;
    0 gives a balanced coin. Returns (dataset, oracle) with the oracle's
    propensity updated; CDFs and means are unchanged.
    """
    base_beta = oracle.params.get("logistic_beta")
    if base_beta is None:
        raise ValueError(f"{oracle.name} has no logistic assignment; imbalance knobs do not apply")
    if data.y0 is None or data.y1 is None:
        raise ValueError("imbalance knobs need both potential outcomes to re-derive observed y")
    r_t, r_noise = np.random.SeedSequence(config.seed).spawn(2)
    beta = np.asarray(base_beta, dtype=np.float64) * config.propensity_scale
    prop = expit(data.x[:, :beta.size] @ beta)
    t = (np.random.default_rng(r_t).random(data.n) < prop).astype(np.int64)
    x = _noise_columns(data.x, config, np.random.default_rng(r_noise))
    new_data = Dataset(x, t, np.where(t == 1, data.y1, data.y0), data.y0, data.y1)
    new_params = dict(oracle.params, logistic_beta=beta.tolist())
    new_oracle = replace(oracle, params=new_params,
                         _propensity=lambda X: expit(X[:, :beta.size] @ beta))
    return new_data, new_oracle


def save_scenario(data, oracle, config, directory, stem="scenario"):
    """Write ``<stem>.csv`` plus a JSON sidecar with seed, config and oracle params."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    csv_path = d / f"{stem}.csv"
    data.to_csv(csv_path)
    sidecar = {"scenario": oracle.name,
               "config": asdict(config), "n_rows": data.n,
               "checksum": data.checksum(), "oracle_params": oracle.params}
    with open(d / f"{stem}.json", "w", encoding="ascii") as fh:
        json.dump(sidecar, fh, indent=1)
    return csv_path, d / f"{stem}.json"


def load_scenario(sidecar_path, csv_path=None):
    """Rebuild (dataset, oracle) from a sidecar; CSV overrides the regenerated rows."""
    with open(sidecar_path, "r", encoding="ascii") as fh:
        sidecar = json.load(fh)
    cfg_dict = dict(sidecar["config"])
    if cfg_dict.get("truncation") is not None:
        cfg_dict["truncation"] = tuple(cfg_dict["truncation"])
    config = ScenarioConfig(**cfg_dict)
    data, oracle = generate_scenario(sidecar["scenario"], config)
    if csv_path is not None:
        data = Dataset.from_csv(csv_path)
    return data, oracle, config
