"""Decision-oriented evaluation: PEHE, neighborhood log-likelihood, utilities, AUC.

Utility specs cover four scopes of increasing personalization: a single
function of the outcome, one function per arm, functions that also read the
covariates, and functions with per-individual parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .ccn import estimate_cdf, neighborhood_prob_many, quantile, sample_outcomes

UTILITY_SCOPES = ("unified", "treatment_specific", "feature_dependent", "personalized")


@dataclass
class UtilitySpec:
    """Outcome-to-value maps for both arms at one of the four scopes.

    ``u0`` and ``u1`` take (outcome draws, covariate row, per-individual row)
    and return element-wise values; lower scopes ignore the extra arguments.
    ``oracle_contrast``, when present, maps (oracle, covariate row,
    per-individual row) to the exact expected utility contrast.
    """

    name: str
    scope: str
    u0: callable
    u1: callable
    per_individual: dict | None = None
    oracle_contrast: callable | None = None

    def __post_init__(self):
        if self.scope not in UTILITY_SCOPES:
            raise ValueError(f"scope must be one of {UTILITY_SCOPES}, got {self.scope!r}")
        if self.scope == "personalized":
            if not self.per_individual:
                raise ValueError("personalized utilities need a per_individual table")
            lengths = {len(v) for v in self.per_individual.values()}
            if len(lengths) != 1:
                raise ValueError("per_individual columns disagree on length")

    def row(self, index):
        if self.per_individual is None:
            return None
        if index is None:
            raise ValueError(f"utility {self.name!r} is personalized; an individual index is required")
        return {k: v[index] for k, v in self.per_individual.items()}


def identity_utility():
    """U(gamma) = gamma for both arms; the contrast is the CATE."""
    u = lambda g, x, row: np.asarray(g, dtype=np.float64)
    return UtilitySpec("identity", "unified", u, u,
                       oracle_contrast=lambda o, x, row: o.true_mean(1, x) - o.true_mean(0, x))


def linear_offset_utility(offset=4.0):
    """U0 = gamma, U1 = gamma - offset: a constant treatment cost."""
    return UtilitySpec(
        "linear_offset", "treatment_specific",
        lambda g, x, row: np.asarray(g, dtype=np.float64),
        lambda g, x, row: np.asarray(g, dtype=np.float64) - offset,
        oracle_contrast=lambda o, x, row: o.true_mean(1, x) - o.true_mean(0, x) - offset)


def control_mean_threshold_utility(oracle, offset=4.0):
    """Indicator utilities thresholded at the true control mean (plus offset
    under treatment). The thresholds come from the oracle, not the model."""
    def u0(g, x, row):
        return (np.asarray(g) > oracle.true_mean(0, x)).astype(np.float64)

    def u1(g, x, row):
        return (np.asarray(g) > oracle.true_mean(0, x) + offset).astype(np.float64)

    def contrast(o, x, row):
        thr = o.true_mean(0, x)
        return o.true_cdf(0, x, thr) - o.true_cdf(1, x, thr + offset)

    return UtilitySpec("control_mean_threshold", "feature_dependent", u0, u1,
                       oracle_contrast=contrast)


def personalized_threshold_utility(v, m):
    """U0 = 1{gamma > v_i}, U1 = 1{gamma > v_i + 1 - m_i} per individual."""
    v = np.asarray(v, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    return UtilitySpec(
        "personalized_threshold", "personalized",
        lambda g, x, row: (np.asarray(g) > row["v"]).astype(np.float64),
        lambda g, x, row: (np.asarray(g) > row["v"] + 1.0 - row["m"]).astype(np.float64),
        per_individual={"v": v, "m": m},
        oracle_contrast=lambda o, x, row: (o.true_cdf(0, x, row["v"])
                                           - o.true_cdf(1, x, row["v"] + 1.0 - row["m"])))


def draw_thresholds(n, seed):
    """The v_i ~ U(0, 1.5) personal thresholds."""
    return np.random.default_rng(seed).uniform(0.0, 1.5, int(n))


def builtin_utilities(oracle=None, v=None, m=None, offset=4.0):
    """Catalog of the built-in utilities; entries needing context appear only
    when that context (oracle, per-individual v and m) is supplied."""
    catalog = {"identity": identity_utility(),
               "linear_offset": linear_offset_utility(offset)}
    if oracle is not None:
        catalog["control_mean_threshold"] = control_mean_threshold_utility(oracle, offset)
    if v is not None and m is not None:
        catalog["personalized_threshold"] = personalized_threshold_utility(v, m)
    return catalog


def pehe(tau_hat, tau_true):
    """Root mean squared error between estimated and true effects.

    Uses exactly-rounded summation so the value is independent of
    accumulation order.
    """
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    tau_true = np.asarray(tau_true, dtype=np.float64)
    if tau_hat.shape != tau_true.shape or tau_hat.ndim != 1 or tau_hat.size == 0:
        raise ValueError("tau_hat and tau_true must be matching non-empty 1-D arrays")
    return math.sqrt(math.fsum((tau_hat - tau_true) ** 2) / tau_hat.size)


def approx_ll(model, data, eps=0.2):
    """Mean log probability of the eps-neighborhoods of both potential outcomes.

    Averages over both arms for every unit (2N terms), so it needs a dataset
    that carries y0 and y1.
    """
    if data.y0 is None or data.y1 is None:
        raise ValueError("approx_ll needs both potential outcomes; use a synthetic dataset")
    total = 0.0
    for arm, ys in ((0, data.y0), (1, data.y1)):
        total += np.log(neighborhood_prob_many(model, data.x, arm, ys, eps)).sum()
    return float(total / (2.0 * data.n))


def approx_ll_factual(model, data, eps=0.2):
    """Observed-arm-only variant: mean log neighborhood probability of y_i
    under the assigned arm. Works without potential outcomes."""
    total = 0.0
    for arm in (0, 1):
        idx = data.arm_indices(arm)
        if idx.size:
            total += np.log(neighborhood_prob_many(model, data.x[idx], arm, data.y[idx], eps)).sum()
    return float(total / data.n)


def utility_contrast(model, x, util, index=None, n_samples=3000, seed=0,
                     grid_size=201, curves=None):
    """Monte-Carlo estimate of E[U1(Y(1))] - E[U0(Y(0))] at one covariate row.

    Draws are inverse-transform samples from the model's fitted curves; the
    two arms use seeds split from ``seed``. ``curves`` can carry precomputed
    (arm-0, arm-1) CDF curves for reuse across utilities.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    row = util.row(index) if util.per_individual is not None else None
    s0, s1 = np.random.SeedSequence(seed).spawn(2)
    if curves is None:
        curves = (estimate_cdf(model, x, 0, grid_size), estimate_cdf(model, x, 1, grid_size))
    draws0 = sample_outcomes(model, x, 0, n_samples, s0, curve=curves[0])
    draws1 = sample_outcomes(model, x, 1, n_samples, s1, curve=curves[1])
    return float(np.mean(util.u1(draws1, x, row)) - np.mean(util.u0(draws0, x, row)))


def decision_auc(scores, true_contrasts):
    """Probability a positive-contrast unit outranks a negative one; ties count half.

    ``true_contrasts`` are thresholded at zero to form the labels.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(true_contrasts, dtype=np.float64) > 0
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and true_contrasts must be matching 1-D arrays")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: every unit has the same decision label")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def interval_width(model, x, arm, coverage=0.9, grid_size=201, curve=None):
    """Width of the central ``coverage`` interval of the fitted CDF."""
    if not 0.0 < coverage < 1.0:
        raise ValueError(f"coverage must be in (0, 1), got {coverage}")
    if curve is None:
        curve = estimate_cdf(model, x, arm, grid_size)
    hi = quantile(model, x, arm, (1.0 + coverage) / 2.0, curve=curve)
    lo = quantile(model, x, arm, (1.0 - coverage) / 2.0, curve=curve)
    return max(float(hi - lo), 0.0)


@dataclass
class MetricsReport:
    """One evaluation's scalar metrics plus optional per-point columns."""

    pehe: float | None = None
    ll: float | None = None
    auc: float | None = None
    oracle_ll: float | None = None
    ll_factual: float | None = None
    n_test: int | None = None
    extras: dict = field(default_factory=dict)
    per_point: dict | None = None

    def to_json(self, path):
        payload = {k: v for k, v in self.__dict__.items() if k != "per_point"}
        with open(path, "w", encoding="ascii") as fh:
            json.dump(payload, fh, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="ascii") as fh:
            payload = json.load(fh)
        return cls(**payload)

    def per_point_to_csv(self, path):
        if not self.per_point:
            raise ValueError("report has no per-point columns")
        names = sorted(self.per_point)
        table = np.column_stack([np.asarray(self.per_point[k], dtype=np.float64) for k in names])
        np.savetxt(path, table, delimiter=",", comments="", header=",".join(names), fmt="%.17g")
