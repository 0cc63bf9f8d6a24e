import numpy as np
import pytest

from dpdglm.families import Bernoulli, Binomial, Gaussian, Poisson
from dpdglm.model import ModelSpec


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240809)


def small_poisson_spec(seed=1, n=30):
    rng = np.random.default_rng(seed)
    i = np.arange(1, n + 1, dtype=float)
    X = np.column_stack([np.ones(n), 1.0 / i])
    y = rng.poisson(np.exp(X @ np.array([1.0, 1.0]))).astype(float)
    return ModelSpec(X=X, y=y, family=Poisson())


def small_bernoulli_spec(seed=2, n=40):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    X = np.column_stack([np.ones(n), x])
    pi = 1.0 / (1.0 + np.exp(-(0.3 + 0.8 * x)))
    y = rng.binomial(1, pi).astype(float)
    return ModelSpec(X=X, y=y, family=Bernoulli())


def small_binomial_spec(seed=3, n=15):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    m = rng.integers(3, 12, size=n)
    X = np.column_stack([np.ones(n), x])
    pi = 1.0 / (1.0 + np.exp(-(0.2 + 0.5 * x)))
    y = rng.binomial(m, pi).astype(float)
    return ModelSpec(X=X, y=y, family=Binomial(m))


def small_gaussian_spec(seed=4, n=35, estimate_scale=True):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    X = np.column_stack([np.ones(n), x])
    y = X @ np.array([0.5, -1.2]) + rng.normal(scale=1.3, size=n)
    return ModelSpec(X=X, y=y, family=Gaussian(), estimate_scale=estimate_scale,
                     phi_value=1.0 if estimate_scale else 1.69)


def all_small_specs():
    return [
        small_poisson_spec(),
        small_bernoulli_spec(),
        small_binomial_spec(),
        small_gaussian_spec(),
    ]
