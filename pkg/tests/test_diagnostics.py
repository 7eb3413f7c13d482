"""Market viability diagnostics: rank, increasing profits, deflator checks."""

import numpy as np
import pytest

from benchmark_pricer import diagnostics, engine, models
from benchmark_pricer.diagnostics import (DeflatorSpec, default_sample_points,
                                          detect_increasing_profit, diagnose,
                                          exploit_increasing_profit,
                                          market_price_of_risk, martingale_gap,
                                          mpr_loadings, validate_deflator,
                                          verify_exploit, viability_check,
                                          volatility_rank_ok)
from benchmark_pricer.errors import (BenchmarkPricerError, ConfigError,
                                     ModelAssumptionError)


def test_market_price_of_risk_black_scholes(bs_model):
    snap = models.eval_coefficients(bs_model, 0.0, [100.0])
    theta = market_price_of_risk(snap)
    assert theta == pytest.approx([0.4], abs=1e-14)


def test_market_price_of_risk_unsolvable(rank_deficient_model):
    snap = models.eval_coefficients(rank_deficient_model, 0.0, [1.0, 1.0])
    with pytest.raises(ModelAssumptionError):
        market_price_of_risk(snap)
    theta = market_price_of_risk(snap, allow_unsolvable=True)
    # least squares averages the two inconsistent excess drifts
    assert theta == pytest.approx([0.15], abs=1e-12)


def test_increasing_profit_detected_on_kernel_component(rank_deficient_model):
    report = detect_increasing_profit(rank_deficient_model)
    assert report.found
    assert report.verdict == "found"
    assert report.residual_norm == pytest.approx(0.05 * np.sqrt(2.0), abs=1e-12)
    assert report.strategy == pytest.approx([-np.sqrt(0.5), np.sqrt(0.5)], abs=1e-9)
    # the strategy earns the kernel drift with zero volatility
    snap = models.eval_coefficients(rank_deficient_model, report.time, report.state)
    assert report.strategy @ snap.volatility == pytest.approx([0.0], abs=1e-12)
    assert report.strategy @ snap.excess_drift() > 0.0


def test_no_increasing_profit_on_full_rank_markets(bs_model, bessel_model):
    for model in (bs_model, bessel_model):
        report = detect_increasing_profit(model)
        assert not report.found
        assert report.verdict == "none"
        assert report.strategy is None
        assert report.residual_norm < 1e-9


def test_random_full_rank_markets_have_no_kernel_residual():
    gen = np.random.default_rng(7)
    for _ in range(100):
        n = int(gen.integers(1, 4))
        d = n + int(gen.integers(0, 3))
        sigma = gen.standard_normal((n, d))
        while np.linalg.matrix_rank(sigma) < n:
            sigma = gen.standard_normal((n, d))
        model = models.custom_multi(gen.standard_normal(n) * 0.2, sigma,
                                    rate=float(gen.uniform(-0.02, 0.05)))
        report = detect_increasing_profit(model, n_points=8)
        assert report.residual_norm < 1e-9


def test_exploit_scale_factor():
    plan = exploit_increasing_profit([1.0], 0.5)
    assert plan.factor == pytest.approx(4.0 * np.log(2.0), abs=1e-12)
    assert plan.scaled == pytest.approx([plan.factor], abs=1e-12)
    with pytest.raises(ConfigError):
        exploit_increasing_profit([1.0], 0.0)
    with pytest.raises(ConfigError):
        exploit_increasing_profit([1.0], 1.0)


def test_exploit_dominates_pathwise(rank_deficient_model):
    report = detect_increasing_profit(rank_deficient_model)
    plan = exploit_increasing_profit(report.strategy, 0.5)
    bundle = engine.simulate_bundle(rank_deficient_model, 2, 400, n_steps=32)
    check = verify_exploit(rank_deficient_model, plan, bundle)
    assert check.dominates
    assert check.min_margin > 0.0
    assert np.all(check.scaled_terminal >= check.base_terminal - 1.0 - 1e-12)


def test_viability_profile_constant_mpr(bs_model, bs_small):
    report = viability_check(bs_model, bs_small, 3)
    assert report.verdict == "viable"
    # |theta|^2 T = 0.16 at every refinement level
    assert report.profile == pytest.approx([0.16, 0.16, 0.16], abs=1e-12)


def test_viability_divergent_when_drift_explodes():
    model = models.exploding_mpr()
    bundle = engine.simulate_bundle(model, 1, 256, n_steps=64)
    report = viability_check(model, bundle, 3)
    assert report.verdict == "divergent_mpr_integral"
    # each extra octave toward t=0 adds integral of 1/t dt = log 2
    assert report.increments == pytest.approx([np.log(2.0)] * 2, rel=0.05)


def test_viability_saturates_for_radial_market(bessel_model, bessel_exact):
    report = viability_check(bessel_model, bessel_exact, 4)
    assert report.verdict == "viable"
    last_change = abs(report.profile[-1] - report.profile[-2])
    assert last_change < 1e-2 * report.profile[-2]


def test_validate_deflator_mpr_is_minimal(bs_model, bs_small):
    report = validate_deflator(bs_model, mpr_loadings(bs_model), bs_small)
    assert report.ok
    assert report.drift_residual_max <= 1e-12
    assert report.norm_minimality_margin == pytest.approx(0.0, abs=1e-12)
    assert set(report.drift_tstats) == {"savings", "hold_1"}
    assert all(abs(t) < 4.0 for t in report.drift_tstats.values())


def test_validate_deflator_kernel_perturbation_grows_norm():
    # one asset, two drivers: sigma gamma = mu - r has a 1-D solution family
    model = models.custom_multi([0.1], [[0.2, 0.3]], rate=0.02)
    bundle = engine.simulate_bundle(model, 6, 1500, n_steps=32)
    kernel = np.array([-0.3, 0.2]) / np.hypot(0.3, 0.2)
    theta_norm = 0.08 / np.hypot(0.2, 0.3)
    for c in (0.15, 0.6):
        gamma = DeflatorSpec(
            label=f"perturbed_{c}",
            loadings=lambda t, s, c=c: np.array([0.2, 0.3]) * 0.08 / 0.13 + c * kernel)
        report = validate_deflator(model, gamma, bundle)
        assert report.ok
        expected = np.hypot(theta_norm, c) - theta_norm
        assert report.norm_minimality_margin == pytest.approx(expected, abs=1e-10)
        assert report.norm_minimality_margin > 0.0


def test_validate_deflator_rejects_wrong_loadings(bs_model, bs_small):
    bad = DeflatorSpec(label="wrong", loadings=lambda t, s: np.array([0.1]))
    with pytest.raises(ModelAssumptionError):
        validate_deflator(bs_model, bad, bs_small)


def test_martingale_gap_verdicts():
    ones = np.ones(2000)
    assert martingale_gap(ones).verdict == "true_martingale_consistent"
    gen = np.random.default_rng(3)
    low = 0.68 + 0.01 * gen.standard_normal(5000)
    report = martingale_gap(low)
    assert report.verdict == "strict_supermartingale"
    assert report.mean + 5.0 * report.stderr < 1.0
    high = 1.5 + 0.01 * gen.standard_normal(5000)
    assert martingale_gap(high).verdict == "inconclusive"
    with pytest.raises(ConfigError):
        martingale_gap(np.ones(10))


def test_rank_check(bs_model, rank_deficient_model):
    points = default_sample_points(bs_model, 16)
    assert volatility_rank_ok(bs_model, points)
    points = default_sample_points(rank_deficient_model, 16)
    assert not volatility_rank_ok(rank_deficient_model, points)


def test_diagnose_black_scholes(bs_model, bs_small):
    report = diagnose(bs_model, bs_small, refinement_levels=2)
    assert report.rank_ok
    assert report.increasing_profit.verdict == "none"
    assert report.viability.verdict == "viable"
    assert report.deflator_gap.verdict == "true_martingale_consistent"
    d = report.to_dict()
    assert d["viability"]["profile"] == pytest.approx([0.16, 0.16])
    assert set(d) == {"rank_ok", "increasing_profit", "viability", "deflator"}


def test_diagnose_rank_deficient_market(rank_deficient_model):
    bundle = engine.simulate_bundle(rank_deficient_model, 2, 1200, n_steps=16)
    assert bundle.deflator is None
    report = diagnose(rank_deficient_model, bundle, refinement_levels=2)
    assert not report.rank_ok
    assert report.increasing_profit.found
    assert report.viability.verdict == "undetermined"
    assert report.deflator_gap is None
    assert report.to_dict()["deflator"]["verdict"] == "inconclusive"


def test_inconsistent_diagnosis_is_rejected(bs_model, bs_small, rank_deficient_model):
    viable = viability_check(bs_model, bs_small, 2)
    profit = detect_increasing_profit(rank_deficient_model)
    with pytest.raises(BenchmarkPricerError):
        diagnostics.DiagnosticsReport(rank_ok=False, increasing_profit=profit,
                                      viability=viable, deflator_gap=None)
