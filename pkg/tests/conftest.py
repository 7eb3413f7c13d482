"""Shared simulation fixtures.

The heavyweight bundles are session scoped and shared across test modules;
everything here is a pure function of (model, seed, grid, paths), so sharing
cannot couple tests.  Total resident size stays under ~2 GB.
"""

import numpy as np
import pytest

from benchmark_pricer import engine, models


@pytest.fixture(scope="session")
def bs_model():
    return models.black_scholes()


@pytest.fixture(scope="session")
def bs_r0_model():
    # drift 0.1, vol 0.2, s0 100, but zero rate: deflated = risk-neutral prices
    return models.black_scholes(rate=0.0)


@pytest.fixture(scope="session")
def bessel_model():
    return models.bessel3()


@pytest.fixture(scope="session")
def rank_deficient_model():
    return models.custom_multi(drift=[0.1, 0.2], vol=[[1.0], [1.0]], rate=0.0,
                               s0=[1.0, 1.0], rank_deficient_allowed=True)


@pytest.fixture(scope="session")
def bs_small(bs_model):
    return engine.simulate_bundle(bs_model, 11, 2000, n_steps=64)


@pytest.fixture(scope="session")
def bessel_exact(bessel_model):
    return engine.simulate_bundle(bessel_model, 3, 100_000, n_steps=64)


@pytest.fixture(scope="session")
def bs_r0_big(bs_r0_model):
    return engine.simulate_bundle(bs_r0_model, 1, 100_000, n_steps=256)


@pytest.fixture(scope="session")
def hedge_coarse(bs_r0_model):
    return engine.simulate_bundle(bs_r0_model, 0, 10_000, n_steps=256,
                                  use_exact=False)


@pytest.fixture(scope="session")
def hedge_fine(bs_r0_model):
    return engine.simulate_bundle(bs_r0_model, 0, 10_000, n_steps=1024,
                                  use_exact=False)


def black_scholes_call(s0, strike, rate, vol, horizon):
    from scipy.stats import norm
    d1 = (np.log(s0 / strike) + (rate + 0.5 * vol * vol) * horizon) \
        / (vol * np.sqrt(horizon))
    d2 = d1 - vol * np.sqrt(horizon)
    return s0 * norm.cdf(d1) - strike * np.exp(-rate * horizon) * norm.cdf(d2)
