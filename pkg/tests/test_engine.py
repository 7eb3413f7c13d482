"""Simulation engine: grids, driver tables, schemes, reproducibility."""

import io
import os

import numpy as np
import pytest

from benchmark_pricer import engine, models
from benchmark_pricer.engine import (SimulationGrid, constant_strategy,
                                     simulate_bundle, simulate_drivers,
                                     simulate_portfolio, tabulated_strategy)
from benchmark_pricer.errors import ConfigError


def test_uniform_grid():
    grid = SimulationGrid.uniform(2.0, 8)
    assert grid.n_steps == 8
    assert grid.horizon == 2.0
    assert np.allclose(grid.dt, 0.25)
    # step keys count down from the far end so extending the grid near the
    # origin never renames an existing step
    assert grid.step_keys.dtype == np.uint32
    assert list(grid.step_keys) == list(range(7, -1, -1))


def test_refined_grid_concentrates_near_origin():
    grid = SimulationGrid.refined_near_origin(1.0, 3)
    assert grid.times[0] == 0.0
    assert grid.times[1] == 0.125  # one plain step to T / 2^octaves
    assert grid.times[-1] == 1.0
    assert np.all(np.diff(grid.times) > 0.0)
    assert grid.n_steps == 1 + 3 * 32
    # band steps halve toward the origin
    assert grid.dt[1] == pytest.approx(grid.dt[-1] / 4)


def test_grid_validation():
    with pytest.raises(ConfigError):
        SimulationGrid(np.array([0.1, 0.5, 1.0]))  # must start at 0
    with pytest.raises(ConfigError):
        SimulationGrid(np.array([0.0, 0.5, 0.5]))  # must increase
    with pytest.raises(ConfigError):
        SimulationGrid.uniform(1.0, 0)


def test_driver_table_is_coordinate_pure():
    grid = SimulationGrid.uniform(1.0, 16)
    small = simulate_drivers(5, grid, 40, 2)
    large = simulate_drivers(5, grid, 100, 2)
    assert np.array_equal(small, large[:40])
    # a refined grid keeps the coarse grid's keys for shared steps
    assert small.shape == (40, 16, 2)
    assert abs(float(small.mean())) < 0.05
    assert float(np.var(small)) == pytest.approx(1.0 / 16, rel=0.1)


def test_bundle_matches_manual_log_euler(bs_small, bs_model):
    dt = bs_small.grid.dt
    dw = bs_small.increments[:, :, 0]
    log_s = np.log(100.0) + np.cumsum((0.1 - 0.5 * 0.04) * dt + 0.2 * dw, axis=1)
    assert np.allclose(bs_small.assets[:, 1:, 0], np.exp(log_s), rtol=1e-12)
    assert np.allclose(bs_small.assets[:, 0, 0], 100.0)
    # savings account compounds the short rate deterministically
    assert np.allclose(bs_small.savings, np.exp(0.02 * bs_small.grid.times), rtol=1e-12)
    # deflator follows -0.5 theta^2 t - theta W with theta = 0.08 / 0.2
    log_z = np.cumsum(-0.5 * 0.16 * dt - 0.4 * dw, axis=1)
    assert np.allclose(bs_small.deflator[:, 1:], np.exp(log_z), rtol=1e-12)


def test_deflator_is_exact_reciprocal_of_gop(bs_small, bessel_exact):
    for bundle in (bs_small, bessel_exact):
        err = np.abs(np.log(bundle.deflator) + np.log(bundle.gop))
        assert float(err.max()) <= 1e-10


def test_mpr_square_integral_constant_model(bs_small, bs_model):
    total = engine.mpr_square_integral(bs_model, bs_small)
    assert total.shape == (bs_small.n_paths,)
    assert np.allclose(total, 0.16, rtol=1e-12)


def test_full_asset_strategy_reproduces_discounted_asset(bs_small, bs_model):
    values = simulate_portfolio(bs_model, constant_strategy("hold_1", [1.0]),
                                1.0, bs_small, store=False)
    discounted = bs_small.assets[:, :, 0] / (100.0 * bs_small.savings)
    assert np.allclose(values, discounted, rtol=1e-10)


def test_portfolio_scales_linearly_in_capital(bs_small, bs_model):
    strat = constant_strategy("half", [0.5])
    one = simulate_portfolio(bs_model, strat, 1.0, bs_small, store=False)
    five = simulate_portfolio(bs_model, strat, 5.0, bs_small, store=False)
    assert np.allclose(five, 5.0 * one, rtol=1e-14)


def test_portfolio_store_and_labels(bs_model):
    bundle = simulate_bundle(bs_model, 21, 50, n_steps=8)
    simulate_portfolio(bs_model, constant_strategy("x", [0.3]), 1.0, bundle)
    simulate_portfolio(bs_model, constant_strategy("x", [0.3]), 1.0, bundle,
                       label="renamed")
    assert set(bundle.portfolios) == {"x", "renamed"}


def test_tabulated_strategy_roundtrip(bs_model):
    bundle = simulate_bundle(bs_model, 22, 30, n_steps=8)
    table = np.full((30, 8, 1), 0.7)
    via_table = simulate_portfolio(bs_model, tabulated_strategy("t", table),
                                   1.0, bundle, store=False)
    via_const = simulate_portfolio(bs_model, constant_strategy("c", [0.7]),
                                   1.0, bundle, store=False)
    assert np.array_equal(via_table, via_const)
    with pytest.raises(ConfigError):
        tabulated_strategy("bad", np.zeros((30, 8)))


def test_exact_sampler_stays_positive_and_flags(bessel_model):
    bundle = simulate_bundle(bessel_model, 9, 2000, n_steps=32)
    assert bundle.exact
    assert bundle.assets.min() > 0.0
    euler = simulate_bundle(bessel_model, 9, 2000, n_steps=32, use_exact=False)
    assert not euler.exact
    assert not np.array_equal(bundle.assets, euler.assets)


def test_bundle_config_errors(bs_model):
    grid = SimulationGrid.uniform(1.0, 16)
    with pytest.raises(ConfigError):
        simulate_bundle(bs_model, 1, 10, grid=grid, n_steps=32)
    with pytest.raises(ConfigError):
        simulate_bundle(bs_model, 1, 0, n_steps=16)
    with pytest.raises(ConfigError):
        simulate_bundle(bs_model, 1, 10, n_steps=16, use_exact=True)


def test_worker_count_cannot_change_bytes(bs_model):
    a = simulate_bundle(bs_model, 33, 500, n_steps=32, workers=1)
    b = simulate_bundle(bs_model, 33, 500, n_steps=32, workers=4)
    assert a.assets.tobytes() == b.assets.tobytes()
    assert a.deflator.tobytes() == b.deflator.tobytes()
    assert a.gop.tobytes() == b.gop.tobytes()
    strat = constant_strategy("s", [0.4])
    pa = simulate_portfolio(bs_model, strat, 1.0, a, store=False, workers=1)
    pb = simulate_portfolio(bs_model, strat, 1.0, a, store=False, workers=4)
    assert pa.tobytes() == pb.tobytes()


def test_thread_env_cap(monkeypatch):
    monkeypatch.setenv("BENCHMARK_PRICER_THREADS", "2")
    assert engine.resolve_workers(None) == 2
    assert engine.resolve_workers(8) == 2
    monkeypatch.setenv("BENCHMARK_PRICER_THREADS", "frogs")
    with pytest.raises(ConfigError):
        engine.resolve_workers(None)
    monkeypatch.setenv("BENCHMARK_PRICER_THREADS", "0")
    with pytest.raises(ConfigError):
        engine.resolve_workers(None)


def test_paths_csv_roundtrip(bs_model):
    bundle = simulate_bundle(bs_model, 4, 3, n_steps=4)
    buf = io.StringIO()
    engine.dump_paths_csv(bundle, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "path,time,asset_1,deflator,gop"
    assert len(lines) == 1 + 3 * 5
    parsed = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",")
    assert np.array_equal(parsed[:5, 2], bundle.assets[0, :, 0])
    assert np.array_equal(parsed[5:10, 3], bundle.deflator[1])
