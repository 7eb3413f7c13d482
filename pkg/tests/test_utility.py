"""Utility maximization by duality and indifference pricing."""

import numpy as np
import pytest

from benchmark_pricer import engine, utility as ut
from benchmark_pricer.errors import ConfigError, ModelAssumptionError, NumericalError
from benchmark_pricer.pricing import call_claim, real_world_price, zero_coupon_claim
from benchmark_pricer.utility import (dual_value, expected_utility,
                                      indifference_price, log_utility,
                                      optimal_terminal_wealth, power_utility,
                                      solve_lagrange, utility_from_config,
                                      utility_gain_curve)


def test_builtin_utilities_validate():
    assert log_utility().label == "log"
    assert power_utility(0.5).label == "power_0.5"
    for bad in (0.0, 1.0, 1.5, -0.3):
        with pytest.raises(ConfigError):
            power_utility(bad)


def test_custom_utility_validation_rejects_shape_violations():
    with pytest.raises(ConfigError):  # marginal not steep near zero
        ut.custom_utility("affine", value=lambda x: x,
                          marginal=lambda x: np.ones_like(x),
                          inverse_marginal=lambda y: np.ones_like(y))
    with pytest.raises(ConfigError):  # inverse does not invert
        ut.custom_utility("mismatched", value=np.log,
                          marginal=lambda x: 1.0 / x,
                          inverse_marginal=lambda y: 2.0 / y)


def test_utility_from_config():
    assert utility_from_config({"kind": "log"}).label == "log"
    assert utility_from_config({"kind": "power", "exponent": 0.3}).label == "power_0.3"
    with pytest.raises(ConfigError):
        utility_from_config({"kind": "power"})
    with pytest.raises(ConfigError):
        utility_from_config({"kind": "exp"})
    with pytest.raises(ConfigError):
        utility_from_config("log")


def test_log_dual_value_closed_form(bs_small):
    # candidate wealth v / (y Z) spends exactly v / y
    assert dual_value(log_utility(), 2.0, bs_small) == pytest.approx(0.5, rel=1e-14)
    assert dual_value(log_utility(), 0.25, bs_small, v=3.0) == pytest.approx(
        12.0, rel=1e-14)
    with pytest.raises(ConfigError):
        dual_value(log_utility(), -1.0, bs_small)
    with pytest.raises(ConfigError):
        dual_value(log_utility(), 1.0, bs_small, v=0.0)


def test_log_multiplier_exits_immediately(bs_small):
    sol = solve_lagrange(log_utility(), 1.0, bs_small)
    assert sol.y_star == 1.0
    assert sol.iterations == 0
    assert sol.budget == pytest.approx(1.0, rel=1e-14)


def test_power_multiplier_matches_moment_formula(bs_small):
    # budget(y) = y^(1/(a-1)) E[Z^(a/(a-1))], so y* = E[Z^(a/(a-1))]^(1-a)
    z = bs_small.deflator[:, -1]
    for a in (0.3, 0.5, 0.7):
        sol = solve_lagrange(power_utility(a), 1.0, bs_small)
        m = float(np.mean(z ** (a / (a - 1.0))))
        assert sol.y_star == pytest.approx(m ** (1.0 - a), rel=1e-6)
        assert sol.budget == pytest.approx(1.0, rel=1e-7)


def test_log_optimal_wealth_is_capital_times_gop(bs_small, bessel_exact):
    for bundle in (bs_small, bessel_exact):
        for v in (0.5, 1.0, 5.0):
            wealth = optimal_terminal_wealth(log_utility(), v, bundle)
            target = v * bundle.gop[:, -1]
            assert float(np.abs(wealth / target - 1.0).max()) < 1e-12


def test_optimal_wealth_budget_identity(bs_small):
    z = bs_small.deflator[:, -1]
    for spec in (log_utility(), power_utility(0.5)):
        for v in (0.5, 2.0):
            wealth = optimal_terminal_wealth(spec, v, bs_small)
            assert float(np.mean(z * wealth)) == pytest.approx(v, rel=1e-6)


def test_expected_utility_requires_positive_wealth():
    with pytest.raises(NumericalError):
        expected_utility(log_utility(), np.array([1.0, 0.0]))


def test_log_indifference_price_equals_real_world_price(bs_small):
    claim = call_claim(100.0)
    rw = real_world_price(claim, bs_small)
    indiff = indifference_price(log_utility(), claim, bs_small)
    # log marginal utility at the optimum is the deflator itself, so the
    # indifference ratio reduces to the deflated payoff mean
    assert indiff.value == pytest.approx(rw.value, rel=1e-12)
    assert indiff.y_star == 1.0
    assert indiff.utility_label == "log"
    assert abs(indiff.value - rw.value) <= 3.0 * np.hypot(indiff.stderr, rw.stderr)


def test_power_indifference_price_close_to_real_world(bs_small):
    claim = zero_coupon_claim()
    rw = real_world_price(claim, bs_small)
    for a in (0.3, 0.7):
        indiff = indifference_price(power_utility(a), claim, bs_small, v=2.0)
        joint = np.hypot(indiff.stderr, rw.stderr)
        assert abs(indiff.value - rw.value) <= 3.0 * joint


def test_gain_curve_flat_only_at_indifference_price(bs_small):
    claim = call_claim(100.0)
    spec = log_utility()
    p = indifference_price(spec, claim, bs_small).value
    eps = np.array([-0.02, 0.0, 0.02])
    fair = utility_gain_curve(spec, claim, bs_small, 1.0, p, eps)
    cheap = utility_gain_curve(spec, claim, bs_small, 1.0, p - 2.0, eps)
    rich = utility_gain_curve(spec, claim, bs_small, 1.0, p + 2.0, eps)
    fair_slope = (fair[2] - fair[0]) / 0.04
    cheap_slope = (cheap[2] - cheap[0]) / 0.04
    rich_slope = (rich[2] - rich[0]) / 0.04
    assert cheap[2] > cheap[1] > cheap[0]     # buying cheap helps
    assert rich[2] < rich[1] < rich[0]        # buying rich hurts
    assert abs(fair_slope) < 0.05 * abs(cheap_slope)
    assert abs(fair_slope) < 0.05 * abs(rich_slope)
    # concave in the position size
    assert fair[2] + fair[0] - 2.0 * fair[1] < 0.0
    # the analytic first-order condition holds at sample level
    wealth = optimal_terminal_wealth(spec, 1.0, bs_small)
    from benchmark_pricer.pricing import claim_payoff
    payoff_bar = claim_payoff(claim, bs_small) / bs_small.savings[:, -1]
    foc = float(np.mean(payoff_bar / wealth)) - p
    assert abs(foc) < 1e-12 * max(1.0, p)


def test_utility_needs_deflator(rank_deficient_model):
    bundle = engine.simulate_bundle(rank_deficient_model, 2, 100, n_steps=8)
    with pytest.raises(ModelAssumptionError):
        solve_lagrange(log_utility(), 1.0, bundle)
