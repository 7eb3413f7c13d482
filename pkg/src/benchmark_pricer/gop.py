"""Growth-optimal portfolio: pointwise weights, growth rates, simulation,
and the numeraire property of benchmarked portfolios.

The log growth rate of a fixed-fraction portfolio pi is
g(pi) = r + pi'(mu - r 1) - 0.5 pi' sigma sigma' pi, concave in pi with
first-order condition sigma sigma' pi = mu - r 1.  The maximizer pi* makes
V^{pi*} the growth-optimal portfolio; every other portfolio deflated by it
(benchmarked) loses its upward drift, which is what numeraire_test checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import PathBundle, SimulationGrid, Strategy
from .errors import ConfigError, ModelAssumptionError
from .models import CoefficientSnapshot, MarketModel, eval_coefficients_batch

GRAM_RESIDUAL_TOL = 1e-9


def growth_rate(snapshot: CoefficientSnapshot, weights) -> float:
    """Log growth rate r + pi'(mu - r 1) - 0.5 |sigma' pi|^2 of constant
    fractions pi at frozen coefficients."""
    pi = np.asarray(weights, dtype=float)
    sigma = np.asarray(snapshot.volatility, dtype=float)
    excess = snapshot.excess_drift()
    vol = sigma.T @ pi
    return float(snapshot.short_rate + pi @ excess - 0.5 * vol @ vol)


def gop_strategy(snapshot: CoefficientSnapshot) -> np.ndarray:
    """Growth-maximizing fractions at one point: the minimal-norm solution of
    sigma sigma' pi = mu - r 1, or ModelAssumptionError when that Gram system
    is unsolvable (then no growth-optimal portfolio exists)."""
    sigma = np.asarray(snapshot.volatility, dtype=float)
    excess = np.asarray(snapshot.excess_drift(), dtype=float)
    gram = sigma @ sigma.T
    try:
        pi = np.linalg.solve(gram, excess)
    except np.linalg.LinAlgError:
        pi = np.linalg.lstsq(gram, excess, rcond=None)[0]
    resid = float(np.abs(gram @ pi - excess).max(initial=0.0))
    scale = max(1.0, float(np.abs(excess).max(initial=0.0)))
    if resid > GRAM_RESIDUAL_TOL * scale:
        raise ModelAssumptionError(
            f"no growth-optimal portfolio: sigma sigma' pi = mu - r 1 is "
            f"unsolvable (residual {resid:.3e})")
    return pi


def gop_weights(model: MarketModel) -> Strategy:
    """The growth-optimal weights as a state-dependent strategy."""

    def weights(t: float, states: np.ndarray) -> np.ndarray:
        r, mu, sigma = eval_coefficients_batch(model, t, states)
        return engine._gop_weights_step(mu - r[:, None], sigma,
                                        model.rank_deficient_allowed,
                                        model.name)

    return Strategy(label="growth_optimal", weights=weights)


def simulate_gop(model: MarketModel, bundle: PathBundle) -> np.ndarray:
    """Discounted growth-optimal wealth from unit capital, accumulated by the
    direct log scheme 0.5 |theta|^2 dt + theta' dW during bundle construction."""
    if bundle.gop is None:
        raise ModelAssumptionError(
            "bundle carries no growth-optimal portfolio: the drift equation "
            "was unsolvable along its paths")
    return bundle.gop


def benchmark(values: np.ndarray, bundle: PathBundle) -> np.ndarray:
    """Deflate a table of discounted portfolio values by the discounted
    growth-optimal portfolio, turning drift into (local) supermartingale
    behavior under the real-world measure."""
    gop_values = simulate_gop(bundle.model, bundle)
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != gop_values.shape[-1]:
        raise ConfigError(
            f"value table has {values.shape[-1]} nodes, bundle grid has "
            f"{gop_values.shape[-1]}")
    return values / gop_values


@dataclass(frozen=True)
class NumeraireReport:
    """Paired-difference supermartingale test of a benchmarked value table.

    Between every ordered pair of monitor nodes the per-path difference of
    benchmarked values gets a one-sided 3 sigma test: supermartingale means
    no mean increase.  worst_z is the largest mean/stderr over pairs, so
    passed is worst_z <= 3.  strictly_decreasing reports whether the first
    versus last node fell by more than 3 sigma, separating strict
    supermartingales from martingale-consistent ones.
    """

    passed: bool
    worst_z: float
    strictly_decreasing: bool
    monitor_times: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray


def numeraire_test(benchmarked: np.ndarray, grid: SimulationGrid, *,
                   n_monitor: int = 10) -> NumeraireReport:
    values = np.asarray(benchmarked, dtype=float)
    if values.ndim != 2 or values.shape[1] != grid.n_steps + 1:
        raise ConfigError("benchmarked table must be paths x grid nodes")
    nodes = np.unique(np.linspace(0, grid.n_steps, n_monitor + 1).astype(int))
    n_paths = values.shape[0]
    means = values[:, nodes].mean(axis=0)
    stderrs = values[:, nodes].std(axis=0, ddof=1) / np.sqrt(n_paths)
    worst_z = -np.inf
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            diff = values[:, nodes[b]] - values[:, nodes[a]]
            m = float(diff.mean())
            se = float(diff.std(ddof=1) / np.sqrt(n_paths))
            if se == 0.0:
                z = 0.0 if m <= 1e-14 * max(1.0, abs(means[a])) else np.inf
            else:
                z = m / se
            worst_z = max(worst_z, z)
    last = values[:, nodes[-1]] - values[:, nodes[0]]
    se_last = float(last.std(ddof=1) / np.sqrt(n_paths))
    strictly_decreasing = bool(se_last > 0.0
                               and float(last.mean()) < -3.0 * se_last)
    return NumeraireReport(passed=bool(worst_z <= 3.0), worst_z=float(worst_z),
                           strictly_decreasing=strictly_decreasing,
                           monitor_times=grid.times[nodes],
                           means=means, stderrs=stderrs)
