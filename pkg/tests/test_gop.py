"""Growth-optimal portfolio and the numeraire property of benchmarked values."""

import numpy as np
import pytest

from benchmark_pricer import engine, gop, models
from benchmark_pricer.engine import constant_strategy, simulate_portfolio
from benchmark_pricer.errors import ConfigError, ModelAssumptionError


def test_growth_rate_closed_form(bs_model):
    snap = models.eval_coefficients(bs_model, 0.0, [100.0])
    # r + pi (mu - r) - 0.5 pi^2 sigma^2 at pi = 1
    assert gop.growth_rate(snap, [1.0]) == pytest.approx(0.02 + 0.08 - 0.02)
    assert gop.growth_rate(snap, [0.0]) == pytest.approx(0.02)


def test_gop_strategy_maximizes_growth(bs_model):
    snap = models.eval_coefficients(bs_model, 0.0, [100.0])
    pi_star = gop.gop_strategy(snap)
    # (mu - r) / sigma^2 = 0.08 / 0.04
    assert pi_star == pytest.approx([2.0], abs=1e-12)
    g_star = gop.growth_rate(snap, pi_star)
    assert g_star == pytest.approx(0.02 + 0.5 * 0.16)  # r + |theta|^2 / 2
    gen = np.random.default_rng(0)
    for _ in range(50):
        other = pi_star + gen.standard_normal(1)
        assert gop.growth_rate(snap, other) <= g_star + 1e-12


def test_gop_strategy_unsolvable(rank_deficient_model):
    snap = models.eval_coefficients(rank_deficient_model, 0.0, [1.0, 1.0])
    with pytest.raises(ModelAssumptionError):
        gop.gop_strategy(snap)


def test_gop_weights_match_direct_accumulation(bs_model):
    bundle = engine.simulate_bundle(bs_model, 12, 300, n_steps=32)
    values = simulate_portfolio(bs_model, gop.gop_weights(bs_model), 1.0,
                                bundle, store=False)
    assert np.allclose(values, bundle.gop, rtol=1e-12)


def test_bessel_gop_holds_the_asset(bessel_model, bessel_exact):
    # mpr is 1/S and sigma is 1/S, so pi* = 1: the asset is growth optimal
    strat = gop.gop_weights(bessel_model)
    t = 0.5
    states = bessel_exact.assets[:100, 32, :]
    assert np.allclose(strat.weights(t, states), 1.0, atol=1e-12)


def test_simulate_gop_requires_solvable_drift(rank_deficient_model):
    bundle = engine.simulate_bundle(rank_deficient_model, 2, 100, n_steps=8)
    with pytest.raises(ModelAssumptionError):
        gop.simulate_gop(rank_deficient_model, bundle)


def test_benchmarked_values_shape_check(bs_small):
    with pytest.raises(ConfigError):
        gop.benchmark(np.ones((10, 3)), bs_small)


def test_benchmarked_savings_account(bs_model, bs_small):
    savings = simulate_portfolio(bs_model, constant_strategy("savings", [0.0]),
                                 1.0, bs_small, store=False)
    benchmarked = gop.benchmark(savings, bs_small)
    assert np.allclose(benchmarked, bs_small.deflator, rtol=1e-14)


def test_numeraire_property_of_held_asset(bs_model, bs_small):
    held = simulate_portfolio(bs_model, constant_strategy("hold_1", [1.0]),
                              1.0, bs_small, store=False)
    report = gop.numeraire_test(gop.benchmark(held, bs_small),
                                bs_small.grid)
    assert report.passed
    assert report.worst_z <= 3.0
    assert report.means[0] == pytest.approx(1.0)


def test_benchmarked_savings_strictly_decreases_in_radial_market(bessel_exact):
    # the deflator is a strict local martingale here: its mean visibly falls
    report = gop.numeraire_test(bessel_exact.deflator, bessel_exact.grid)
    assert report.passed
    assert report.strictly_decreasing
    assert report.means[-1] < 0.75


def test_numeraire_test_flags_mean_increase(bs_small):
    # an unbenchmarked growing account must fail the supermartingale test
    rising = np.broadcast_to(np.exp(0.5 * bs_small.grid.times),
                             (bs_small.n_paths, bs_small.grid.n_steps + 1))
    noise = 1.0 + 0.01 * np.sin(np.arange(bs_small.n_paths))[:, None]
    report = gop.numeraire_test(rising * noise, bs_small.grid)
    assert not report.passed
    assert report.worst_z > 3.0
