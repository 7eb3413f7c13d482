"""Path simulation: grids, driver tables, assets, portfolios, deflators.

All schemes work in log space with coefficients frozen at the left endpoint of
each interval, so every simulated price, portfolio value and deflator is an
exponential and stays strictly positive:

    asset:      S^i_{k+1} = S^i_k * exp[(mu^i - 0.5 sum_j (sigma^{ij})^2) dt
                                        + sum_j sigma^{ij} dW^j]
    portfolio:  Vbar_{k+1} = Vbar_k * exp[(pi'(mu - r 1) - 0.5 |sigma' pi|^2) dt
                                          + (sigma' pi)' dW]      (discounted)
    deflator:   Zhat_{k+1} = Zhat_k * exp[-theta' dW - 0.5 |theta|^2 dt]
    growth-opt: Vbar*_{k+1} = Vbar*_k * exp[+theta' dW + 0.5 |theta|^2 dt]

with theta the minimal solution of sigma theta = mu - r 1.  The deflator and
discounted growth-optimal updates are exact negations of each other in log
space, which is the discrete form of the identity Zhat * Vbar* = 1.

Coefficients frozen at the left endpoint make every update conditionally
Gaussian, so Zhat * Vbar^pi is a martingale of the discrete scheme itself (not
just in the continuous limit) whenever the drift equation holds.  Models with
a drift singularity at t=0 have their first coefficient evaluation moved to
the right endpoint of the first interval.

Models with an exact transition sampler are stepped through it instead of the
Euler map; the Brownian increments implied by inverting the Euler map on the
exact states are stored so that portfolios and deflators built from the table
satisfy the same pathwise identities.

Randomness is addressed, never streamed: worker threads fill disjoint path
slices of preallocated tables and the result is byte-identical for every
worker count.  BENCHMARK_PRICER_THREADS caps the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng
from .errors import ConfigError, ModelAssumptionError, NumericalError
from .models import MarketModel, eval_coefficients_batch

DEFAULT_N_STEPS = 256

# Relative tolerance for the drift equation sigma theta = mu - r 1; residuals
# beyond it mean the volatility lost rank along the path.
DRIFT_EQUATION_TOL = 1e-9


@dataclass(frozen=True)
class SimulationGrid:
    """Strictly increasing time grid starting at 0.

    step_keys are the counter coordinates handed to the RNG, indexed by
    distance from the horizon: grids that differ only by refinement near t=0
    then share the draws on their common coarse tail.
    """

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ConfigError("grid needs at least two time points")
        if not np.all(np.isfinite(times)):
            raise ConfigError("grid times must be finite")
        if times[0] != 0.0:
            raise ConfigError(f"grid must start at 0, got {times[0]}")
        if np.any(np.diff(times) <= 0.0):
            raise ConfigError("grid times must be strictly increasing")
        if times.size - 1 >= 1 << 32:
            raise ConfigError("step count exhausts the 32-bit counter space")
        times = times.copy()
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        dt = np.diff(times)
        dt.setflags(write=False)
        object.__setattr__(self, "dt", dt)
        keys = np.arange(times.size - 2, -1, -1, dtype=np.uint32)
        keys.setflags(write=False)
        object.__setattr__(self, "step_keys", keys)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @classmethod
    def uniform(cls, horizon: float, n_steps: int = DEFAULT_N_STEPS) -> "SimulationGrid":
        if n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
        if not (np.isfinite(horizon) and horizon > 0.0):
            raise ConfigError(f"horizon must be positive, got {horizon}")
        return cls(np.linspace(0.0, horizon, n_steps + 1))

    @classmethod
    def refined_near_origin(cls, horizon: float, octaves: int,
                            steps_per_octave: int = 32) -> "SimulationGrid":
        """Geometric refinement toward t=0: one plain step [0, T 2^-octaves],
        then steps_per_octave uniform steps on each band [T 2^-j, T 2^-j+1].
        Designed for drift singularities at the origin, where uniform grids
        cannot resolve the near-zero contribution of the drift integral.
        """
        if octaves < 1:
            raise ConfigError(f"octaves must be >= 1, got {octaves}")
        if steps_per_octave < 1:
            raise ConfigError(f"steps_per_octave must be >= 1, got {steps_per_octave}")
        if not (np.isfinite(horizon) and horizon > 0.0):
            raise ConfigError(f"horizon must be positive, got {horizon}")
        pieces = [np.array([0.0])]
        for j in range(octaves, 0, -1):
            lo = horizon * 2.0 ** (-j)
            hi = horizon * 2.0 ** (-(j - 1))
            band = np.linspace(lo, hi, steps_per_octave + 1)
            pieces.append(band if j == octaves else band[1:])
        return cls(np.concatenate(pieces))


def _coefficient_time(model: MarketModel, grid: SimulationGrid, k: int) -> float:
    """Left endpoint of step k, shifted to the right endpoint of the first
    interval for models whose drift is singular at t=0."""
    if k == 0 and model.drift_singular_at_origin:
        return float(grid.times[1])
    return float(grid.times[k])


@dataclass(frozen=True)
class Strategy:
    """Fraction-of-wealth portfolio weights.

    weights is either a callable (t, states (P, N)) -> (P, N) or (N,), a
    constant (N,) vector, or a per-path table of shape (P, n_steps, N).
    """

    label: str
    weights: Callable | np.ndarray

    @property
    def tabulated(self) -> bool:
        return isinstance(self.weights, np.ndarray) and self.weights.ndim == 3

    def at_step(self, t: float, k: int, states: np.ndarray,
                path_slice: slice = slice(None)) -> np.ndarray:
        if self.tabulated:
            w = self.weights[path_slice, k, :]
        elif callable(self.weights):
            w = np.asarray(self.weights(t, states), dtype=float)
        else:
            w = np.asarray(self.weights, dtype=float)
        return np.broadcast_to(w, states.shape)


def constant_strategy(label: str, weights) -> Strategy:
    w = np.atleast_1d(np.asarray(weights, dtype=float)).copy()
    w.setflags(write=False)
    return Strategy(label=label, weights=w)


def tabulated_strategy(label: str, table: np.ndarray) -> Strategy:
    table = np.asarray(table, dtype=float)
    if table.ndim != 3:
        raise ConfigError(
            f"tabulated strategy needs a (n_paths, n_steps, N) table, got {table.shape}")
    return Strategy(label=label, weights=table)


@dataclass
class PathBundle:
    """Simulated ensemble tied to one (model, seed, grid, n_paths) key.

    assets has shape (n_paths, n_steps+1, N); savings, deflator and gop are
    (n_paths, n_steps+1) with node 0 equal to 1; increments is the Brownian
    table (n_paths, n_steps, d) actually driving the paths (implied increments
    for exact transition sampling).  deflator and gop are None when the drift
    equation sigma theta = mu - r 1 has no solution along the paths, which can
    only happen for rank-deficient markets.
    """

    model: MarketModel
    seed: int
    grid: SimulationGrid
    n_paths: int
    increments: np.ndarray
    assets: np.ndarray
    savings: np.ndarray
    deflator: np.ndarray | None
    gop: np.ndarray | None
    mpr_square_integral: np.ndarray | None
    drift_residual_max: float
    exact: bool
    portfolios: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def terminal_assets(self) -> np.ndarray:
        return self.assets[:, -1, :]


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, capped by BENCHMARK_PRICER_THREADS."""
    cap_env = os.environ.get("BENCHMARK_PRICER_THREADS")
    cap = None
    if cap_env is not None:
        try:
            cap = int(cap_env)
        except ValueError:
            raise ConfigError(
                f"BENCHMARK_PRICER_THREADS must be an integer, got {cap_env!r}") from None
        if cap < 1:
            raise ConfigError(f"BENCHMARK_PRICER_THREADS must be >= 1, got {cap}")
    if workers is None:
        workers = cap if cap is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if cap is not None:
        workers = min(workers, cap)
    return workers


def _path_slices(n_paths: int, workers: int) -> list[tuple[int, int]]:
    workers = min(workers, n_paths)
    bounds = np.linspace(0, n_paths, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_chunked(fn: Callable[[int, int], None], n_paths: int, workers: int) -> None:
    slices = _path_slices(n_paths, workers)
    if len(slices) == 1:
        fn(*slices[0])
        return
    with ThreadPoolExecutor(max_workers=len(slices)) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in slices]
        for fut in futures:
            fut.result()


def simulate_drivers(seed: int, grid: SimulationGrid, n_paths: int,
                     n_drivers: int, *, workers: int | None = None) -> np.ndarray:
    """Brownian increment table (n_paths, n_steps, d), entry variance dt_k.

    Entry [p, k, j] is a pure function of (seed, p, step key of k, j): the
    table is bit-reproducible and extending any axis preserves existing values.
    """
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    if n_drivers < 1 or n_drivers >= rng.SAMPLER_LANE_BASE:
        raise ConfigError(f"n_drivers out of range: {n_drivers}")
    workers = resolve_workers(workers)
    out = np.empty((n_paths, grid.n_steps, n_drivers))
    root_dt = np.sqrt(grid.dt)[:, None]

    def fill(lo: int, hi: int) -> None:
        z = rng.normal_table(seed, hi - lo, grid.step_keys, n_drivers, path_offset=lo)
        z *= root_dt
        out[lo:hi] = z

    _run_chunked(fill, n_paths, workers)
    return out


def _mpr_step(excess: np.ndarray, sigma: np.ndarray, allow_deficient: bool,
              model_name: str) -> tuple[np.ndarray, float]:
    """Minimal-norm solution theta of sigma theta = excess for a batch.

    Returns (theta (P, d), max residual of the drift equation).  For full-rank
    volatility theta = sigma'(sigma sigma')^{-1} excess; rank-deficient
    batches fall back to the pseudoinverse, which still yields the minimal
    least-squares solution, and the residual tells whether the equation was
    solvable at all.
    """
    n, d = sigma.shape[1], sigma.shape[2]
    if n == 1 and d == 1:
        s = sigma[:, 0, 0]
        b = excess[:, 0]
        safe = np.where(s == 0.0, 1.0, s)
        theta = np.where(s == 0.0, 0.0, b / safe)
        resid = np.abs(b - s * theta)
        return theta[:, None], float(resid.max(initial=0.0))
    gram = np.einsum("pnd,pmd->pnm", sigma, sigma)
    try:
        x = np.linalg.solve(gram, excess[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        if not allow_deficient:
            raise ModelAssumptionError(
                f"volatility of model '{model_name}' loses full rank along the "
                "paths; the market price of risk is not determined") from None
        x = np.einsum("pnm,pm->pn", np.linalg.pinv(gram), excess)
    theta = np.einsum("pnd,pn->pd", sigma, x)
    resid = np.abs(np.einsum("pnd,pd->pn", sigma, theta) - excess)
    return theta, float(resid.max(initial=0.0))


def _gop_weights_step(excess: np.ndarray, sigma: np.ndarray, allow_deficient: bool,
                      model_name: str) -> np.ndarray:
    """Solve (sigma sigma') pi = excess for a batch; minimal-norm on deficiency."""
    n, d = sigma.shape[1], sigma.shape[2]
    if n == 1 and d == 1:
        s2 = sigma[:, 0, 0] ** 2
        safe = np.where(s2 == 0.0, 1.0, s2)
        pi = np.where(s2 == 0.0, 0.0, excess[:, 0] / safe)
        return pi[:, None]
    gram = np.einsum("pnd,pmd->pnm", sigma, sigma)
    try:
        return np.linalg.solve(gram, excess[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        if not allow_deficient:
            raise ModelAssumptionError(
                f"volatility of model '{model_name}' loses full rank along the "
                "paths; the growth-optimal weights are not determined") from None
        return np.einsum("pnm,pm->pn", np.linalg.pinv(gram), excess)


def simulate_assets(model: MarketModel, drivers: np.ndarray, grid: SimulationGrid,
                    *, workers: int | None = None) -> np.ndarray:
    """Log-Euler asset table (n_paths, n_steps+1, N) from a driver table."""
    drivers = np.asarray(drivers)
    if drivers.ndim != 3 or drivers.shape[1] != grid.n_steps \
            or drivers.shape[2] != model.n_drivers:
        raise ConfigError(
            f"driver table shape {drivers.shape} does not match "
            f"(n_paths, {grid.n_steps}, {model.n_drivers})")
    n_paths = drivers.shape[0]
    workers = resolve_workers(workers)
    out = np.empty((n_paths, grid.n_steps + 1, model.n_assets))
    out[:, 0, :] = model.initial_prices

    def run(lo: int, hi: int) -> None:
        for k in range(grid.n_steps):
            t = _coefficient_time(model, grid, k)
            dt = grid.dt[k]
            states = out[lo:hi, k, :]
            _, mu, sigma = eval_coefficients_batch(model, t, states)
            vol2 = np.einsum("pnd,pnd->pn", sigma, sigma)
            dlog = (mu - 0.5 * vol2) * dt + np.einsum("pnd,pd->pn", sigma,
                                                      drivers[lo:hi, k, :])
            out[lo:hi, k + 1, :] = states * np.exp(dlog)
        block = out[lo:hi]
        if not np.all(np.isfinite(block)):
            raise NumericalError(
                f"asset path left the finite domain for model '{model.name}'")

    _run_chunked(run, n_paths, workers)
    return out


def _exact_assets(model: MarketModel, seed: int, grid: SimulationGrid,
                  n_paths: int, workers: int) -> tuple[np.ndarray, np.ndarray]:
    """Asset table from the exact transition sampler plus implied increments.

    The implied Brownian increments invert the log-Euler map on the exact
    states, so portfolio and deflator tables built from them satisfy the same
    discrete-scheme identities as Euler bundles while the asset marginals stay
    exact in law.  Requires an invertible square volatility (d = N).
    """
    sampler = model.exact_sampler
    if model.n_drivers != model.n_assets:
        raise ModelAssumptionError(
            f"exact transition sampling for model '{model.name}' needs d = N "
            f"to imply driver increments, got d={model.n_drivers}, N={model.n_assets}")
    n = model.n_assets
    lanes = int(sampler.n_extra_lanes)
    assets = np.empty((n_paths, grid.n_steps + 1, n))
    assets[:, 0, :] = model.initial_prices
    drivers = np.empty((n_paths, grid.n_steps, n))

    def run(lo: int, hi: int) -> None:
        normals = rng.normal_table(seed, hi - lo, grid.step_keys, lanes,
                                   path_offset=lo, lane_base=rng.SAMPLER_LANE_BASE)
        for k in range(grid.n_steps):
            t0 = float(grid.times[k])
            t1 = float(grid.times[k + 1])
            dt = grid.dt[k]
            states = assets[lo:hi, k, :]
            nxt = np.asarray(sampler(t0, t1, states, normals[:, k, :]), dtype=float)
            t = _coefficient_time(model, grid, k)
            _, mu, sigma = eval_coefficients_batch(model, t, states)
            vol2 = np.einsum("pnd,pnd->pn", sigma, sigma)
            gap = np.log(nxt) - np.log(states) - (mu - 0.5 * vol2) * dt
            if n == 1:
                drivers[lo:hi, k, 0] = gap[:, 0] / sigma[:, 0, 0]
            else:
                drivers[lo:hi, k, :] = np.linalg.solve(sigma, gap[:, :, None])[:, :, 0]
            assets[lo:hi, k + 1, :] = nxt
        block = assets[lo:hi]
        if not (np.all(np.isfinite(block)) and np.all(block > 0.0)):
            raise NumericalError(
                f"exact sampler left the positive domain for model '{model.name}'")

    _run_chunked(run, n_paths, workers)
    return assets, drivers


def _derived_tables(model: MarketModel, grid: SimulationGrid, drivers: np.ndarray,
                    assets: np.ndarray, workers: int):
    """Savings, deflator, discounted growth-optimal table and the per-path
    Riemann sum of |theta|^2 dt, all from one sweep over the steps.

    The deflator and growth-optimal logs are accumulated as exact negations of
    one another.  Returns (savings, deflator, gop, mpr_sq, max_residual);
    deflator, gop and mpr_sq are None when the drift equation failed to be
    solvable (only possible for rank-deficient markets, reported via the
    residual).
    """
    n_paths = assets.shape[0]
    n_nodes = grid.n_steps + 1
    savings = np.empty((n_paths, n_nodes))
    deflator = np.empty((n_paths, n_nodes))
    gop = np.empty((n_paths, n_nodes))
    mpr_sq = np.zeros(n_paths)
    savings[:, 0] = 1.0
    deflator[:, 0] = 1.0
    gop[:, 0] = 1.0
    slices = _path_slices(n_paths, workers)
    residuals = np.zeros(len(slices))

    def run_idx(idx: int, lo: int, hi: int) -> None:
        log_sav = np.zeros(hi - lo)
        log_gop = np.zeros(hi - lo)
        worst = 0.0
        for k in range(grid.n_steps):
            t = _coefficient_time(model, grid, k)
            dt = grid.dt[k]
            states = assets[lo:hi, k, :]
            r, mu, sigma = eval_coefficients_batch(model, t, states)
            excess = mu - r[:, None]
            theta, resid = _mpr_step(excess, sigma, model.rank_deficient_allowed,
                                     model.name)
            scale = max(1.0, float(np.abs(excess).max(initial=0.0)))
            worst = max(worst, resid / scale)
            norm_sq = np.einsum("pd,pd->p", theta, theta)
            growth = 0.5 * norm_sq * dt + np.einsum(
                "pd,pd->p", theta, drivers[lo:hi, k, :])
            log_gop += growth
            log_sav += r * dt
            mpr_sq[lo:hi] += norm_sq * dt
            savings[lo:hi, k + 1] = np.exp(log_sav)
            gop[lo:hi, k + 1] = np.exp(log_gop)
            deflator[lo:hi, k + 1] = np.exp(-log_gop)
        residuals[idx] = worst

    if len(slices) == 1:
        run_idx(0, *slices[0])
    else:
        with ThreadPoolExecutor(max_workers=len(slices)) as pool:
            futures = [pool.submit(run_idx, i, lo, hi)
                       for i, (lo, hi) in enumerate(slices)]
            for fut in futures:
                fut.result()
    max_resid = float(residuals.max(initial=0.0))
    if max_resid > DRIFT_EQUATION_TOL:
        if not model.rank_deficient_allowed:
            raise ModelAssumptionError(
                f"drift equation residual {max_resid:.3e} for model "
                f"'{model.name}': mu - r 1 leaves the range of the volatility")
        return savings, None, None, None, max_resid
    return savings, deflator, gop, mpr_sq, max_resid


def simulate_bundle(model: MarketModel, seed: int, n_paths: int, *,
                    grid: SimulationGrid | None = None, n_steps: int | None = None,
                    use_exact: bool | None = None,
                    workers: int | None = None) -> PathBundle:
    """Simulate drivers, assets, savings, deflator and growth-optimal tables.

    The result is a pure function of (model, seed, grid, n_paths); worker
    count and path chunking cannot change a single byte.
    """
    if grid is None:
        grid = SimulationGrid.uniform(model.horizon, n_steps or DEFAULT_N_STEPS)
    elif n_steps is not None and n_steps != grid.n_steps:
        raise ConfigError("pass either grid or n_steps, not conflicting values")
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    workers = resolve_workers(workers)
    if use_exact is None:
        use_exact = model.exact_sampler is not None
    if use_exact and model.exact_sampler is None:
        raise ConfigError(f"model '{model.name}' has no exact transition sampler")
    if use_exact:
        assets, drivers = _exact_assets(model, seed, grid, n_paths, workers)
    else:
        drivers = simulate_drivers(seed, grid, n_paths, model.n_drivers,
                                   workers=workers)
        assets = simulate_assets(model, drivers, grid, workers=workers)
    savings, deflator, gop, mpr_sq, max_resid = _derived_tables(
        model, grid, drivers, assets, workers)
    for arr in (drivers, assets, savings, deflator, gop, mpr_sq):
        if arr is not None:
            arr.setflags(write=False)
    return PathBundle(model=model, seed=seed, grid=grid, n_paths=n_paths,
                      increments=drivers, assets=assets, savings=savings,
                      deflator=deflator, gop=gop, mpr_square_integral=mpr_sq,
                      drift_residual_max=max_resid, exact=use_exact)


def simulate_portfolio(model: MarketModel, strategy: Strategy, initial_value: float,
                       bundle: PathBundle, *, label: str | None = None,
                       store: bool = True,
                       workers: int | None = None) -> np.ndarray:
    """Discounted value table (n_paths, n_steps+1) of a fraction-of-wealth
    strategy, self-financing by construction.  Values are initial_value times
    an exponential, so scaling initial_value rescales the table exactly."""
    if not (np.isfinite(initial_value) and initial_value > 0.0):
        raise ConfigError(
            f"initial portfolio value must be positive, got {initial_value}")
    grid = bundle.grid
    n_paths = bundle.n_paths
    workers = resolve_workers(workers)
    out = np.empty((n_paths, grid.n_steps + 1))
    out[:, 0] = initial_value

    def run(lo: int, hi: int) -> None:
        log_v = np.zeros(hi - lo)
        for k in range(grid.n_steps):
            t = _coefficient_time(model, grid, k)
            dt = grid.dt[k]
            states = bundle.assets[lo:hi, k, :]
            r, mu, sigma = eval_coefficients_batch(model, t, states)
            w = strategy.at_step(t, k, states, slice(lo, hi))
            excess = np.einsum("pn,pn->p", w, mu - r[:, None])
            volw = np.einsum("pnd,pn->pd", sigma, w)
            dlog = (excess - 0.5 * np.einsum("pd,pd->p", volw, volw)) * dt \
                + np.einsum("pd,pd->p", volw, bundle.increments[lo:hi, k, :])
            log_v += dlog
            out[lo:hi, k + 1] = initial_value * np.exp(log_v)
        if not np.all(np.isfinite(out[lo:hi])):
            raise NumericalError(
                f"portfolio '{strategy.label}' left the finite domain")

    _run_chunked(run, n_paths, workers)
    out.setflags(write=False)
    if store:
        bundle.portfolios[label or strategy.label] = out
    return out


def simulate_deflator(model: MarketModel, bundle: PathBundle) -> np.ndarray:
    """Recompute the martingale deflator table from the bundle's increments."""
    _, deflator, _, _, _ = _derived_tables(model, bundle.grid, bundle.increments,
                                           bundle.assets, resolve_workers(None))
    if deflator is None:
        raise ModelAssumptionError(
            f"model '{model.name}' admits no martingale deflator: the drift "
            "equation is unsolvable along the simulated paths")
    return deflator


def mpr_square_integral(model: MarketModel, bundle: PathBundle) -> np.ndarray:
    """Per-path Riemann sum of |theta|^2 dt along the bundle's grid."""
    if bundle.mpr_square_integral is not None:
        return bundle.mpr_square_integral
    _, _, _, mpr_sq, _ = _derived_tables(model, bundle.grid, bundle.increments,
                                         bundle.assets, resolve_workers(None))
    if mpr_sq is None:
        raise ModelAssumptionError(
            f"model '{model.name}': the drift equation is unsolvable along the "
            "paths; the squared market price of risk is undefined")
    return mpr_sq


def dump_paths_csv(bundle: PathBundle, destination) -> None:
    """Write (path, time, asset_1..N, deflator, gop) rows, path-major."""
    n = bundle.model.n_assets
    header = "path,time," + ",".join(f"asset_{i+1}" for i in range(n)) \
        + ",deflator,gop"
    fmt = ["%d"] + ["%.17g"] * (1 + n + 2)
    n_nodes = bundle.grid.n_steps + 1

    def write(handle) -> None:
        handle.write(header + "\n")
        chunk = max(1, 65536 // n_nodes)
        for lo in range(0, bundle.n_paths, chunk):
            hi = min(lo + chunk, bundle.n_paths)
            rows = (hi - lo) * n_nodes
            block = np.empty((rows, 4 + n))
            block[:, 0] = np.repeat(np.arange(lo, hi), n_nodes)
            block[:, 1] = np.tile(bundle.grid.times, hi - lo)
            block[:, 2:2 + n] = bundle.assets[lo:hi].reshape(rows, n)
            for col, table in ((2 + n, bundle.deflator), (3 + n, bundle.gop)):
                block[:, col] = np.nan if table is None else table[lo:hi].reshape(rows)
            np.savetxt(handle, block, fmt=fmt, delimiter=",")

    if hasattr(destination, "write"):
        write(destination)
    else:
        with open(destination, "w", encoding="utf-8") as handle:
            write(handle)
