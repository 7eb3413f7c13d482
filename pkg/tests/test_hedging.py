"""Value surface regression and delta replication."""

import numpy as np
import pytest

from benchmark_pricer import engine, hedging, models, pricing
from benchmark_pricer.errors import ConfigError, ModelAssumptionError
from benchmark_pricer.hedging import fairness_check, replicate, value_function
from benchmark_pricer.pricing import (call_claim, polynomial_claim,
                                      real_world_price, zero_coupon_claim)

from conftest import black_scholes_call


def test_replication_needs_single_asset(bs_small):
    model = models.custom_multi([0.1, 0.05], [[0.2, 0.0], [0.0, 0.3]])
    bundle = engine.simulate_bundle(model, 1, 200, n_steps=8)
    with pytest.raises(ModelAssumptionError):
        value_function(zero_coupon_claim(), bundle)
    with pytest.raises(ConfigError):
        value_function(zero_coupon_claim(), bs_small, degree=0)


def test_flat_claim_hedges_exactly_flat(bs_small, bs_model):
    result = replicate(zero_coupon_claim(), bs_small)
    assert np.array_equal(result.strategy_table, np.zeros_like(result.strategy_table))
    # wealth sits in savings, so the only error is the funding gap times B_T
    v_h = result.initial_capital
    assert v_h == real_world_price(zero_coupon_claim(), bs_small).value
    expected = abs(v_h * np.exp(0.02) - 1.0)
    assert result.terminal_error_rms == pytest.approx(expected, rel=1e-12)
    assert result.frozen_share == 0.0
    assert result.capped_share == 0.0


def test_value_surface_tracks_closed_form(hedge_coarse):
    surface = value_function(call_claim(100.0), hedge_coarse)
    k = hedge_coarse.grid.n_steps // 2
    t = hedge_coarse.grid.times[k]
    prices = hedge_coarse.assets[:, k, 0]
    lo, hi = np.percentile(prices, [25, 75])
    mid = (prices >= lo) & (prices <= hi)
    fitted = surface.node_values(k, prices[mid])
    exact = black_scholes_call(prices[mid], 100.0, 0.0, 0.2, 1.0 - t)
    rel = np.abs(fitted - exact) / exact
    assert np.median(rel) < 0.01


def test_call_hedge_on_coarse_grid(hedge_coarse):
    result = replicate(call_claim(100.0), hedge_coarse)
    assert result.claim_label == "call_100"
    assert result.initial_capital == result.price.value
    assert result.portfolio.shape == (10_000, 257)
    assert np.allclose(result.portfolio[:, 0], result.initial_capital)
    assert result.relative_rms < 0.10
    assert result.terminal_error_rms == pytest.approx(
        result.relative_rms * result.initial_capital, rel=1e-12)
    assert result.fairness.fair
    assert 0.0 <= result.frozen_share < 0.5
    assert result.capped_share < 0.01
    # running tracking error grows toward expiry where the kink concentrates
    assert result.rms_running[0] == 0.0
    assert result.rms_running[-1] > result.rms_running[1]


def test_asset_claim_hedges_by_holding_the_asset(hedge_coarse):
    result = replicate(polynomial_claim([0.0, 1.0]), hedge_coarse)
    # the claim pays S_T, so the hedge is a buy and hold of the asset
    assert result.relative_rms < 0.01
    assert abs(float(result.mean_delta.mean()) - 1.0) < 0.005
    assert np.abs(result.mean_delta - 1.0).max() < 0.05


def test_hedge_is_deterministic(bs_small):
    a = replicate(call_claim(100.0), bs_small)
    b = replicate(call_claim(100.0), bs_small)
    assert a.strategy_table.tobytes() == b.strategy_table.tobytes()
    assert a.portfolio.tobytes() == b.portfolio.tobytes()
    assert a.terminal_error_rms == b.terminal_error_rms


def test_delta_fractions_track_closed_form_elasticity(hedge_coarse):
    result = replicate(call_claim(100.0), hedge_coarse)
    k = hedge_coarse.grid.n_steps // 2
    t = hedge_coarse.grid.times[k]
    prices = hedge_coarse.assets[:, k, 0]
    lo, hi = np.percentile(prices, [25, 75])
    mid = (prices >= lo) & (prices <= hi)
    from scipy.stats import norm
    tau = 1.0 - t
    d1 = (np.log(prices[mid] / 100.0) + 0.5 * 0.04 * tau) / (0.2 * np.sqrt(tau))
    delta = norm.cdf(d1)
    value = black_scholes_call(prices[mid], 100.0, 0.0, 0.2, tau)
    target = delta * prices[mid] / value
    got = result.strategy_table[mid, k]
    rel = np.abs(got - target) / target
    # at 2^8 steps the interquartile deltas already sit close to closed form
    assert np.median(rel) < 0.05


def test_fair_portfolio_and_unfair_leak(bs_small, bessel_exact):
    report = fairness_check(bs_small.gop, bs_small)
    assert report.fair
    assert report.worst_abs_z == 0.0
    # riding savings in the radial market leaks value against the benchmark
    ones = np.ones_like(bessel_exact.savings)
    leak = fairness_check(ones, bessel_exact)
    assert not leak.fair
    assert leak.worst_abs_z > 50.0
