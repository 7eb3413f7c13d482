"""No-arbitrage diagnostics: market price of risk, increasing profits,
viability of the drift integral, and deflator validation.

The drift equation sigma theta = mu - r 1 organizes everything here.

* If it is solvable, the minimal-norm solution theta is the market price of
  risk; any other solution gamma differs by a kernel component orthogonal to
  theta, so |gamma| >= |theta| pointwise.
* If it is unsolvable, the excess drift has a component p in the kernel of
  sigma' and the strategy p/|p| earns a deterministic rate with zero
  volatility: an increasing profit.  Scaling that strategy by
  -(log v + log(1-v))/v turns initial capital v in (0,1) into a terminal
  value dominating V_T - 1 of the unscaled portfolio pathwise.
* If it is solvable but the Riemann sums of |theta|^2 dt diverge as the grid
  refines toward a singularity, unbounded profit with vanishing risk appears
  in the limit; the refinement ladder below classifies this.

A candidate deflator is the stochastic exponential of -integral(gamma' dW)
for any drift-equation solution gamma.  With coefficients frozen per step the
product of the deflator with any simulated portfolio is a martingale of the
discrete scheme itself, so a pooled regression of its increments on dt gives
an honest zero-drift test.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import engine
from .engine import PathBundle, SimulationGrid, constant_strategy, simulate_portfolio
from .errors import BenchmarkPricerError, ConfigError, ModelAssumptionError
from .models import CoefficientSnapshot, MarketModel, eval_coefficients, \
    eval_coefficients_batch

RANK_TOL = 1e-10            # singular value ratio below which rank is lost
DRIFT_RESIDUAL_TOL = 1e-9   # solvability threshold for sigma theta = mu - r 1


def market_price_of_risk(snapshot: CoefficientSnapshot, *,
                         allow_unsolvable: bool = False) -> np.ndarray:
    """Minimal-norm solution of sigma theta = mu - r 1 at one point.

    For full-rank sigma this is sigma'(sigma sigma')^{-1}(mu - r 1); in
    general the pseudoinverse least-squares solution.  Unless allow_unsolvable
    is set, a residual beyond tolerance raises ModelAssumptionError.
    """
    sigma = np.asarray(snapshot.volatility, dtype=float)
    excess = np.asarray(snapshot.excess_drift(), dtype=float)
    theta, _, _, _ = np.linalg.lstsq(sigma, excess, rcond=None)
    resid = float(np.abs(sigma @ theta - excess).max(initial=0.0))
    scale = max(1.0, float(np.abs(excess).max(initial=0.0)))
    if resid > DRIFT_RESIDUAL_TOL * scale and not allow_unsolvable:
        raise ModelAssumptionError(
            f"drift equation unsolvable (residual {resid:.3e}): the market "
            "admits an increasing profit; no market price of risk exists")
    return theta


def default_sample_points(model: MarketModel, n_points: int = 64,
                          seed: int = 0) -> list[tuple[float, np.ndarray]]:
    """Deterministic (t, state) probes: times in (0, T], states log-normally
    scattered around the initial prices."""
    gen = np.random.default_rng(seed)
    times = np.linspace(model.horizon / n_points, model.horizon, n_points)
    spreads = gen.standard_normal((n_points, model.n_assets)) * 0.5
    states = model.initial_prices[None, :] * np.exp(spreads)
    return [(float(t), states[i]) for i, t in enumerate(times)]


def volatility_rank_ok(model: MarketModel,
                       sample_points: Sequence[tuple[float, np.ndarray]]) -> bool:
    """True when sigma has full row rank N at every sampled point, judged by
    the smallest singular value exceeding RANK_TOL times the largest."""
    for t, state in sample_points:
        sigma = eval_coefficients(model, t, state).volatility
        sv = np.linalg.svd(sigma, compute_uv=False)
        if sv.size < model.n_assets or sv[model.n_assets - 1] <= RANK_TOL * sv[0]:
            return False
    return True


@dataclass(frozen=True)
class IncreasingProfitReport:
    """Kernel component of the excess drift and the strategy that earns it."""

    found: bool
    residual_norm: float
    strategy: np.ndarray | None
    time: float | None
    state: np.ndarray | None
    points_checked: int

    @property
    def verdict(self) -> str:
        return "found" if self.found else "none"


def detect_increasing_profit(model: MarketModel,
                             sample_points: Sequence[tuple[float, np.ndarray]] | None
                             = None, *, n_points: int = 64,
                             seed: int = 0) -> IncreasingProfitReport:
    """Project mu - r 1 onto the kernel of sigma' at each sample point.

    A non-vanishing projection p means no deflator can exist and pi = p/|p|
    has positive excess drift with zero volatility; the sign convention of the
    projection already points the strategy in the profitable direction.
    """
    if sample_points is None:
        sample_points = default_sample_points(model, n_points, seed)
    best = (0.0, None, None, None)
    for t, state in sample_points:
        snap = eval_coefficients(model, t, state)
        sigma = np.asarray(snap.volatility, dtype=float)
        excess = np.asarray(snap.excess_drift(), dtype=float)
        x, _, _, _ = np.linalg.lstsq(sigma, excess, rcond=None)
        p = excess - sigma @ x
        norm = float(np.linalg.norm(p))
        if norm > best[0]:
            best = (norm, p, t, state)
    norm, p, t, state = best
    found = norm > DRIFT_RESIDUAL_TOL
    return IncreasingProfitReport(
        found=found, residual_norm=norm,
        strategy=None if not found else p / norm,
        time=None if not found else float(t),
        state=None if not found else np.asarray(state, dtype=float),
        points_checked=len(sample_points))


@dataclass(frozen=True)
class ExploitPlan:
    """Scaled strategy turning capital v in (0,1) into a pathwise dominator
    of V_T - 1 of the base strategy."""

    base: np.ndarray
    fraction: float
    factor: float
    scaled: np.ndarray


def exploit_increasing_profit(strategy, fraction: float) -> ExploitPlan:
    """Scale an increasing-profit strategy by -(log v + log(1-v))/v."""
    base = np.asarray(strategy, dtype=float)
    if not (np.isfinite(fraction) and 0.0 < fraction < 1.0):
        raise ConfigError(
            f"fraction must lie strictly inside (0, 1), got {fraction}")
    factor = -(np.log(fraction) + np.log1p(-fraction)) / fraction
    return ExploitPlan(base=base, fraction=float(fraction),
                       factor=float(factor), scaled=factor * base)


@dataclass(frozen=True)
class ExploitCheck:
    dominates: bool
    min_margin: float
    base_terminal: np.ndarray
    scaled_terminal: np.ndarray


def verify_exploit(model: MarketModel, plan: ExploitPlan, bundle: PathBundle) -> ExploitCheck:
    """Simulate both sides of the domination claim on a bundle:
    the scaled portfolio from capital v must end above V_T - 1 of the base
    portfolio from capital 1, path by path."""
    base = simulate_portfolio(model, constant_strategy("profit_base", plan.base),
                              1.0, bundle, store=False)
    scaled = simulate_portfolio(model, constant_strategy("profit_scaled", plan.scaled),
                                plan.fraction, bundle, store=False)
    margin = scaled[:, -1] - (base[:, -1] - 1.0)
    return ExploitCheck(dominates=bool(margin.min() >= -1e-12),
                        min_margin=float(margin.min()),
                        base_terminal=base[:, -1], scaled_terminal=scaled[:, -1])


@dataclass(frozen=True)
class ViabilityReport:
    """Refinement profile of the Riemann sums of |theta|^2 dt."""

    verdict: str                 # viable | divergent_mpr_integral | undetermined
    profile: np.ndarray          # mean sum per refinement level
    increments: np.ndarray
    octaves: np.ndarray          # near-origin octaves per level
    sample_sums: np.ndarray | None
    note: str = ""


def viability_check(model: MarketModel, bundle: PathBundle,
                    refinement_levels: int = 6, *, base_octaves: int = 6,
                    steps_per_octave: int = 32, max_ladder_paths: int = 256,
                    use_exact: bool | None = None) -> ViabilityReport:
    """Classify the growth of integral |theta|^2 dt under grid refinement.

    Re-simulates the model on grids geometrically refined toward t=0, one more
    octave per level, and compares the per-level ensemble means of the
    per-path Riemann sums.  Divergent means every level's increase keeps at
    least 90 percent of the previous one and stays material; viable means the
    final relative change is below one percent; anything else is undetermined.
    The ladder caps its ensemble at max_ladder_paths since level means are
    compared; level-to-level noise is damped because refined grids share the
    draws of their common coarse tail.
    """
    if refinement_levels < 2:
        raise ConfigError(
            f"refinement_levels must be >= 2, got {refinement_levels}")
    if bundle.mpr_square_integral is None:
        return ViabilityReport(
            verdict="undetermined", profile=np.array([]), increments=np.array([]),
            octaves=np.array([], dtype=int), sample_sums=None,
            note="drift equation unsolvable along the paths; the squared market "
                 "price of risk is undefined")
    n_paths = min(bundle.n_paths, max_ladder_paths)
    if use_exact is None:
        use_exact = model.exact_sampler is not None
    sums = []
    octaves = []
    for level in range(refinement_levels):
        octave = base_octaves + level
        grid = SimulationGrid.refined_near_origin(model.horizon, octave,
                                                  steps_per_octave)
        ladder = engine.simulate_bundle(model, bundle.seed, n_paths, grid=grid,
                                        use_exact=use_exact)
        if ladder.mpr_square_integral is None:
            return ViabilityReport(
                verdict="undetermined", profile=np.array(sums),
                increments=np.diff(np.array(sums)), octaves=np.array(octaves),
                sample_sums=bundle.mpr_square_integral,
                note="drift equation became unsolvable under refinement")
        sums.append(float(ladder.mpr_square_integral.mean()))
        octaves.append(octave)
    profile = np.array(sums)
    increments = np.diff(profile)
    scale = max(1.0, abs(profile[-1]))
    material = increments[-1] > 1e-2 * scale
    growing = bool(np.all(increments > 0.0)
                   and np.all(increments[1:] >= 0.9 * increments[:-1]))
    if growing and material:
        verdict = "divergent_mpr_integral"
        note = "Riemann sums of |theta|^2 dt grow without saturation"
    elif abs(profile[-1] - profile[-2]) < 1e-2 * max(abs(profile[-2]), 1e-12):
        verdict = "viable"
        note = "Riemann sums of |theta|^2 dt stable under refinement"
    else:
        verdict = "undetermined"
        note = "refinement profile neither saturates nor grows steadily"
    return ViabilityReport(verdict=verdict, profile=profile, increments=increments,
                           octaves=np.array(octaves, dtype=int),
                           sample_sums=bundle.mpr_square_integral, note=note)


@dataclass(frozen=True)
class DeflatorSpec:
    """Candidate deflator loadings gamma: the deflator is the stochastic
    exponential of -integral(gamma' dW).  loadings maps (t, states (P, N))
    to (P, d) or a constant (d,) vector."""

    label: str
    loadings: Callable[[float, np.ndarray], np.ndarray]


def mpr_loadings(model: MarketModel) -> DeflatorSpec:
    """The market price of risk itself as deflator loadings."""

    def load(t: float, states: np.ndarray) -> np.ndarray:
        r, mu, sigma = eval_coefficients_batch(model, t, states)
        theta, _ = engine._mpr_step(mu - r[:, None], sigma,
                                    model.rank_deficient_allowed, model.name)
        return theta

    return DeflatorSpec(label="market_price_of_risk", loadings=load)


@dataclass(frozen=True)
class DeflatorReport:
    label: str
    drift_residual_max: float
    norm_minimality_margin: float   # min over samples of |gamma| - |theta|
    drift_tstats: dict[str, float]  # strategy label -> pooled t statistic
    ok: bool


def validate_deflator(model: MarketModel, candidate: DeflatorSpec,
                      bundle: PathBundle, strategies=None, *,
                      max_nodes: int = 17, max_paths: int = 256,
                      tstat_bound: float = 4.0) -> DeflatorReport:
    """Check a candidate deflator: drift equation at sampled nodes, norm
    comparison against the market price of risk, and zero-drift regressions
    of D * Vbar^pi increments on dt for each supplied strategy."""
    grid = bundle.grid
    node_idx = np.unique(np.linspace(0, grid.n_steps - 1, max_nodes).astype(int))
    path_idx = np.arange(min(bundle.n_paths, max_paths))
    worst_resid = 0.0
    min_margin = np.inf
    for k in node_idx:
        t = engine._coefficient_time(model, grid, int(k))
        states = bundle.assets[path_idx, k, :]
        r, mu, sigma = eval_coefficients_batch(model, t, states)
        excess = mu - r[:, None]
        gamma = np.broadcast_to(
            np.asarray(candidate.loadings(t, states), dtype=float),
            (states.shape[0], model.n_drivers))
        resid = np.abs(np.einsum("pnd,pd->pn", sigma, gamma) - excess)
        scale = max(1.0, float(np.abs(excess).max(initial=0.0)))
        worst_resid = max(worst_resid, float(resid.max(initial=0.0)) / scale)
        theta, _ = engine._mpr_step(excess, sigma, model.rank_deficient_allowed,
                                    model.name)
        margin = np.linalg.norm(gamma, axis=1) - np.linalg.norm(theta, axis=1)
        min_margin = min(min_margin, float(margin.min()))
    if worst_resid > DRIFT_RESIDUAL_TOL:
        raise ModelAssumptionError(
            f"candidate '{candidate.label}' violates the drift equation "
            f"(residual {worst_resid:.3e}); it deflates nothing")

    density = np.empty((bundle.n_paths, grid.n_steps + 1))
    density[:, 0] = 1.0
    log_d = np.zeros(bundle.n_paths)
    for k in range(grid.n_steps):
        t = engine._coefficient_time(model, grid, k)
        dt = grid.dt[k]
        states = bundle.assets[:, k, :]
        gamma = np.broadcast_to(
            np.asarray(candidate.loadings(t, states), dtype=float),
            (bundle.n_paths, model.n_drivers))
        log_d += -np.einsum("pd,pd->p", gamma, bundle.increments[:, k, :]) \
            - 0.5 * np.einsum("pd,pd->p", gamma, gamma) * dt
        density[:, k + 1] = np.exp(log_d)

    if strategies is None:
        strategies = [constant_strategy("savings", np.zeros(model.n_assets))]
        for i in range(model.n_assets):
            w = np.zeros(model.n_assets)
            w[i] = 1.0
            strategies.append(constant_strategy(f"hold_{i+1}", w))
    tstats: dict[str, float] = {}
    for strat in strategies:
        values = bundle.portfolios.get(strat.label)
        if values is None:
            values = simulate_portfolio(model, strat, 1.0, bundle)
        mart = density * values
        dm = np.diff(mart, axis=1).ravel()
        dts = np.broadcast_to(grid.dt, (bundle.n_paths, grid.n_steps)).ravel()
        slope = dm.dot(dts) / dts.dot(dts)
        resid = dm - slope * dts
        se = np.sqrt(resid.dot(resid) / (dm.size - 1) / dts.dot(dts))
        tstats[strat.label] = float(slope / se) if se > 0.0 else 0.0
    ok = all(abs(t) < tstat_bound for t in tstats.values())
    return DeflatorReport(label=candidate.label, drift_residual_max=worst_resid,
                          norm_minimality_margin=float(min_margin),
                          drift_tstats=tstats, ok=ok)


@dataclass(frozen=True)
class MartingaleGapReport:
    """Terminal-mean test of a candidate deflator: a true martingale started
    at 1 keeps mean 1; a strict local martingale shows mean + 5 stderr < 1."""

    mean: float
    stderr: float
    n_samples: int
    verdict: str   # strict_supermartingale | true_martingale_consistent | inconclusive


def martingale_gap(samples: np.ndarray, *, min_samples: int = 1000) -> MartingaleGapReport:
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < min_samples:
        raise ConfigError(
            f"martingale gap needs at least {min_samples} samples, got {samples.size}")
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / np.sqrt(samples.size))
    if mean + 5.0 * stderr < 1.0:
        verdict = "strict_supermartingale"
    elif abs(mean - 1.0) <= 3.0 * stderr:
        verdict = "true_martingale_consistent"
    else:
        verdict = "inconclusive"
    return MartingaleGapReport(mean=mean, stderr=stderr,
                               n_samples=samples.size, verdict=verdict)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Machine-readable market diagnosis; construction enforces consistency
    between the increasing-profit and viability verdicts."""

    rank_ok: bool
    increasing_profit: IncreasingProfitReport
    viability: ViabilityReport
    deflator_gap: MartingaleGapReport | None

    def __post_init__(self):
        if self.increasing_profit.found and self.viability.verdict == "viable":
            raise BenchmarkPricerError(
                "inconsistent diagnosis: an increasing profit exists but the "
                "viability check reported viable")

    def to_dict(self) -> dict:
        gap = self.deflator_gap
        return {
            "rank_ok": bool(self.rank_ok),
            "increasing_profit": {
                "verdict": self.increasing_profit.verdict,
                "residual_norm": float(self.increasing_profit.residual_norm),
            },
            "viability": {
                "verdict": self.viability.verdict,
                "profile": [float(x) for x in self.viability.profile],
            },
            "deflator": {
                "verdict": gap.verdict if gap else "inconclusive",
                "mean": gap.mean if gap else None,
                "stderr": gap.stderr if gap else None,
            },
        }


def diagnose(model: MarketModel, bundle: PathBundle, *,
             refinement_levels: int = 6, n_points: int = 64,
             seed: int = 0) -> DiagnosticsReport:
    """Full diagnosis: rank, increasing profits, viability ladder, and the
    terminal martingale gap of the minimal deflator."""
    points = default_sample_points(model, n_points, seed)
    rank_ok = volatility_rank_ok(model, points)
    profit = detect_increasing_profit(model, points)
    viability = viability_check(model, bundle, refinement_levels)
    gap = None
    if not profit.found and bundle.deflator is not None \
            and bundle.n_paths >= 1000:
        gap = martingale_gap(bundle.deflator[:, -1])
    return DiagnosticsReport(rank_ok=rank_ok, increasing_profit=profit,
                             viability=viability, deflator_gap=gap)
