"""Shared fixtures.

The expensive fixture here is a CCN trained on a 1-D Gaussian location
model, x ~ N(0,1), T ~ Bern(1/2), Y(t) = x + t + N(0,1).  Its true
conditional CDF is Phi(z - x - t), which makes every downstream query
(quantiles, samples, neighborhood probabilities, interval widths) easy
to check against closed forms.  Trained once per session.
"""

import numpy as np
import pytest
from scipy.stats import norm

from ccnlab.ccn import TrainConfig, train_ccn
from ccnlab.data import Dataset
from ccnlab.scenarios import OracleCdfModel, ScenarioOracle


def make_gaussian_dataset(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 1))
    t = rng.integers(0, 2, size=n)
    noise = rng.normal(size=n)
    y0 = x[:, 0] + noise
    y1 = x[:, 0] + 1.0 + noise
    y = np.where(t == 1, y1, y0)
    return Dataset(x=x, t=t, y=y, y0=y0, y1=y1)


def gaussian_true_cdf(arm, x_scalar, z):
    from scipy.stats import norm

    return norm.cdf(np.asarray(z) - x_scalar - float(arm))


@pytest.fixture(scope="session")
def gaussian_data():
    return make_gaussian_dataset(6000, seed=11)


@pytest.fixture(scope="session")
def gaussian_model(gaussian_data):
    config = TrainConfig(epochs=400, batch_size=512, z_draws=16,
                         patience=120, seed=3)
    return train_ccn(gaussian_data, config)


@pytest.fixture(scope="session")
def std_normal_model():
    """Exact standard-normal CDF model: both arms N(0,1) regardless of x."""
    oracle = ScenarioOracle(
        name="std_normal", covariate_dim=1, params={},
        _cdf=lambda arm, X, y: norm.cdf(y),
        _mean=lambda arm, X: np.zeros(X.shape[0]),
        _propensity=lambda X: np.full(X.shape[0], 0.5))
    return OracleCdfModel(oracle, z_low=-4.0, z_high=4.0, padding_fraction=0.1)
