"""Market model construction, coefficient evaluation, config round-trips."""

import numpy as np
import pytest

from benchmark_pricer import models
from benchmark_pricer.errors import ConfigError, NumericalError


def test_black_scholes_snapshot(bs_model):
    snap = models.eval_coefficients(bs_model, 0.5, [100.0])
    assert snap.short_rate == 0.02
    assert snap.drift.tolist() == [0.1]
    assert snap.volatility.tolist() == [[0.2]]
    assert snap.excess_drift().tolist() == [0.08]


def test_bessel_coefficients_scale_like_inverse_state(bessel_model):
    snap = models.eval_coefficients(bessel_model, 0.1, [2.0])
    assert snap.short_rate == 0.0
    assert snap.drift == pytest.approx([0.25])
    assert snap.volatility[0, 0] == pytest.approx(0.5)
    # market price of risk sigma^{-1}(mu - r) = 1/S
    assert snap.drift[0] / snap.volatility[0, 0] == pytest.approx(0.5)


def test_exploding_mpr_drift_diverges_at_origin():
    m = models.exploding_mpr()
    early = models.eval_coefficients(m, 1e-6, [1.0])
    late = models.eval_coefficients(m, 1.0, [1.0])
    assert early.drift[0] == pytest.approx(1000.0)
    assert late.drift[0] == pytest.approx(1.0)
    assert m.drift_singular_at_origin


def test_batch_evaluation_broadcasts(bs_model):
    states = np.array([[90.0], [100.0], [110.0]])
    r, mu, sigma = models.eval_coefficients_batch(bs_model, 0.0, states)
    assert r.shape == (3,) and mu.shape == (3, 1) and sigma.shape == (3, 1, 1)
    assert np.all(r == 0.02) and np.all(mu == 0.1) and np.all(sigma == 0.2)


def test_batch_evaluation_rejects_non_finite():
    m = models.custom_multi([0.1], [[0.2]])
    bad = models.MarketModel(
        name="bad", n_assets=1, n_drivers=1,
        short_rate_fn=m.short_rate_fn,
        drift_fn=lambda t, s: np.array([np.nan]),
        volatility_fn=m.volatility_fn,
        initial_prices=np.array([1.0]), horizon=1.0)
    with pytest.raises(NumericalError):
        models.eval_coefficients_batch(bad, 0.3, np.ones((2, 1)))


def test_radial_transition_matches_norm_construction():
    sampler = models.RadialBrownianTransition()
    assert sampler.n_extra_lanes == 3
    states = np.array([[1.0], [2.0]])
    normals = np.array([[0.5, -1.0, 0.25], [0.0, 1.0, 1.0]])
    out = sampler(0.0, 0.25, states, normals)
    for i in range(2):
        x = states[i, 0] + 0.5 * normals[i, 0]
        y = 0.5 * normals[i, 1]
        z = 0.5 * normals[i, 2]
        assert out[i, 0] == pytest.approx(np.sqrt(x * x + y * y + z * z))


def test_model_validation_errors():
    with pytest.raises(ConfigError):
        models.black_scholes(vol=0.0)
    with pytest.raises(ConfigError):
        models.bessel3(s0=-1.0)
    with pytest.raises(ConfigError):
        models.custom_multi([0.1, 0.2], [[1.0], [1.0]])  # 2 assets, 1 driver
    with pytest.raises(ConfigError):
        models.custom_multi([0.1], [[0.2]], s0=[-5.0])
    with pytest.raises(ConfigError):
        models.custom_multi([0.1], [[0.2]], horizon=0.0)


def test_rank_deficient_needs_explicit_flag(rank_deficient_model):
    assert rank_deficient_model.rank_deficient_allowed
    assert rank_deficient_model.n_assets == 2
    assert rank_deficient_model.n_drivers == 1


def test_config_round_trip(bs_model, bessel_model):
    for model in (bs_model, bessel_model):
        rebuilt = models.model_from_config(model.config())
        assert rebuilt.name == model.name
        assert rebuilt.horizon == model.horizon
        assert np.array_equal(rebuilt.initial_prices, model.initial_prices)
    multi = models.custom_multi([0.1, 0.2], [[0.3, 0.0], [0.1, 0.2]], rate=0.01)
    again = models.model_from_config(multi.config())
    snap_a = models.eval_coefficients(multi, 0.0, [1.0, 1.0])
    snap_b = models.eval_coefficients(again, 0.0, [1.0, 1.0])
    assert np.array_equal(snap_a.volatility, snap_b.volatility)


def test_builtin_lookup_errors():
    with pytest.raises(ConfigError):
        models.builtin_model("nope")
    with pytest.raises(ConfigError):
        models.builtin_model("black_scholes", wrong_kw=1)
    with pytest.raises(ConfigError):
        models.model_from_config({"name": "black_scholes", "extra": 1})
    with pytest.raises(ConfigError):
        models.model_from_config({"params": {}})
