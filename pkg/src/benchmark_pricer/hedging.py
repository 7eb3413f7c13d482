"""Constructive replication in complete one-factor markets.

The conditional-expectation value process v(t, S_t) of a claim is recovered
by per-node polynomial regression in the current price; the hedge fraction
is the log-price elasticity of that surface, pi = S dv/dS / v, obtained by
central differences.  Running the resulting self-financing portfolio forward
reproduces the claim up to regression and discretization error.

The regressions run backwards: the terminal node fits the payoff itself and
every earlier node fits the next node's fitted value carried back one step
by the deflator.  Conditioning step by step matters for the slopes.  A
direct regression of the terminal payoff leaves the full remaining-path
variance in the regressand, and at early nodes, where the cross-section of
prices has barely spread, the fitted slope is then mostly noise; a wrong
fraction early detaches the multiplicative wealth update from the value
process by a factor that never heals.  The one-step regressand carries only
one step of variance, so the slope stays resolvable however thin the design
is.  A claim whose payoff does not depend on the terminal state at all is
recognized up front and hedged exactly flat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gop
from .engine import PathBundle, _coefficient_time, eval_coefficients_batch, \
    simulate_portfolio, tabulated_strategy
from .errors import ConfigError, ModelAssumptionError, NumericalError
from .pricing import Claim, PriceEstimate, claim_payoff, deflated_claim_samples, \
    real_world_price

DEFAULT_DEGREE = 4
DEFAULT_RIDGE = 1e-8
DEFAULT_THRESHOLD = 4.0
FD_FRACTION = 0.01
QUOTIENT_CAP = 1e6
DEGENERATE_SPREAD = 1e-12


def _transition_bump(model, grid, shape_fn):
    """Smoothing bump of a terminal payoff: the payoff averaged over one
    lognormal transition at the node's local coefficients, frozen at the
    current price, across the whole remaining time, minus the payoff itself.

    In log price the average is exactly a Gaussian convolution of
    y -> shape(exp(y)), evaluated at the drift-shifted query point and
    discounted, so it is computed spectrally: sample the payoff on a grid
    much finer than the kernel width, apply the kernel's exact Fourier
    transform, and interpolate.  A payoff kink contributes to the
    convolution through its neighborhood's area, so sampling error at the
    kink itself washes out; quadrature rules applied directly to the
    kinked integrand instead leave a slowly decaying ripple across the
    whole node.  Freezing the coefficients makes this computable for any
    model; the result is not the claim's value, but it has the value
    function's signature feature near maturity, a bump around each payoff
    kink of width sigma sqrt(tau), which no polynomial in the basis can
    resolve once the cross-section of prices is much wider than that.
    State-dependent volatility varies the kernel width across paths; the
    convolution is computed on a short grid of widths and interpolated.

    Uniform-width nodes cache the convolved grid: the hedge loop evaluates
    the same node at three nearby price sets per step, and the grid is
    built with enough slack (8 kernel widths against wraparound plus the
    difference-quotient shift) to serve all of them.  A query outside the
    cached safe zone rebuilds.
    """
    horizon = float(grid.times[-1])
    cache: dict = {}

    def bump(k, prices):
        raw = shape_fn(prices)
        tau = horizon - float(grid.times[k])
        if tau <= 0.0:
            return np.zeros_like(raw)
        t = _coefficient_time(model, grid, k)
        rate, _, sigma = eval_coefficients_batch(model, t, prices[:, None])
        sig = np.abs(sigma[:, 0, 0])
        width = sig * np.sqrt(tau)
        w_hi = float(width.max())
        if w_hi <= 0.0:
            return np.zeros_like(raw)
        w_lo = float(width[width > 0.0].min())
        query = np.log(prices) + (rate - 0.5 * sig * sig) * tau
        uniform = w_hi - w_lo <= 1e-12 * w_hi
        entry = cache.get(k)
        if entry is not None and uniform:
            ygrid, smoothed, w_cached, safe_lo, safe_hi = entry
            if abs(w_cached - w_hi) <= 1e-12 * w_hi \
                    and float(query.min()) >= safe_lo \
                    and float(query.max()) <= safe_hi:
                smooth = np.interp(query, ygrid, smoothed)
                return np.exp(-rate * tau) * smooth - raw
        margin = 8.0 * w_hi + 0.03
        lo = float(query.min()) - margin
        hi = float(query.max()) + margin
        step = w_lo / 16.0
        n = min(int((hi - lo) / step) + 2, 1 << 16)
        ygrid = np.linspace(lo, hi, n)
        transformed = np.fft.rfft(shape_fn(np.exp(ygrid)))
        freq = np.fft.rfftfreq(n, d=(hi - lo) / (n - 1))

        def convolved(kernel_width):
            damping = np.exp(-2.0 * (np.pi * freq * kernel_width) ** 2)
            return np.fft.irfft(transformed * damping, n)

        if uniform:
            smoothed = convolved(w_hi)
            cache[k] = (ygrid, smoothed, w_hi,
                        lo + 8.0 * w_hi, hi - 8.0 * w_hi)
            smooth = np.interp(query, ygrid, smoothed)
        else:
            # state-dependent volatility: interpolate across kernel widths
            widths = np.linspace(w_lo, w_hi, 5)
            rows = np.stack([np.interp(query, ygrid, convolved(v))
                             for v in widths])
            idx = np.clip(np.searchsorted(widths, width) - 1, 0, 3)
            frac = (width - widths[idx]) / (widths[idx + 1] - widths[idx])
            lane = np.arange(len(prices))
            smooth = rows[idx, lane] * (1.0 - frac) + rows[idx + 1, lane] * frac
        return np.exp(-rate * tau) * smooth - raw

    return bump


@dataclass(frozen=True)
class ValueSurface:
    """Per-node value estimates v(t_k, S): polynomial in standardized log
    price, optionally augmented by the claim's own payoff shape.

    coeffs[k, :degree+1] are ascending polynomial coefficients in
    x = (log S - x_loc[k]) / x_scale[k]; coeffs[k, degree+1] multiplies the
    standardized payoff column when payoff_shape is set (smooth polynomials
    cannot represent a payoff kink, which otherwise makes the fit undershoot
    zero on the worthless wing near maturity), and coeffs[k, degree+2]
    multiplies the standardized smoothing bump: the payoff convolved with
    one lognormal transition at the model's local coefficients over the
    remaining time, minus the payoff itself.  Near maturity the true value
    differs from the payoff by exactly such a narrow bump around the kink,
    far narrower than the cross-section of prices, and a global polynomial
    cannot resolve it.  Nodes whose prices did not spread (node 0 in
    particular) store an intercept-only fit equal to the sample mean of the
    regressand there.
    """

    times: np.ndarray
    degree: int
    ridge: float
    coeffs: np.ndarray
    x_loc: np.ndarray
    x_scale: np.ndarray
    x_lo: np.ndarray                # supported range of the standardized
    x_hi: np.ndarray                # coordinate; the fit is data beyond it
    payoff_shape: object = None     # callable prices (P,) -> payoff (P,)
    shape_loc: np.ndarray | None = None
    shape_scale: np.ndarray | None = None
    bump_shape: object = None       # callable (k, prices (P,)) -> bump (P,)
    bump_loc: np.ndarray | None = None
    bump_scale: np.ndarray | None = None

    def node_values(self, k: int, prices: np.ndarray) -> np.ndarray:
        """Evaluate the node-k fit at undiscounted prices.

        Outside the design's supported range the polynomial continues
        linearly from the edge: a quartic extrapolates wildly a few design
        deviations out, while the edge value and slope are still anchored
        by data.  The payoff and bump columns are exact functions
        everywhere and are never clamped, so deep in the money the fit
        keeps the payoff's own slope.
        """
        poly = np.polynomial.polynomial
        x = (np.log(prices) - self.x_loc[k]) / self.x_scale[k]
        xq = np.clip(x, self.x_lo[k], self.x_hi[k])
        core = self.coeffs[k, :self.degree + 1]
        values = poly.polyval(xq, core)
        outside = x != xq
        if np.any(outside):
            slope = poly.polyval(xq[outside], poly.polyder(core))
            values[outside] += slope * (x[outside] - xq[outside])
        if self.payoff_shape is not None and self.shape_scale[k] > 0.0:
            shape = (self.payoff_shape(prices) - self.shape_loc[k]) \
                / self.shape_scale[k]
            values = values + self.coeffs[k, self.degree + 1] * shape
        if self.bump_shape is not None and self.bump_scale[k] > 0.0:
            bump = (self.bump_shape(k, prices) - self.bump_loc[k]) \
                / self.bump_scale[k]
            values = values + self.coeffs[k, self.degree + 2] * bump
        return values


def value_function(claim: Claim, bundle: PathBundle, *,
                   degree: int = DEFAULT_DEGREE,
                   ridge: float = DEFAULT_RIDGE,
                   payoff_column: bool | None = None,
                   threshold: float | None = None,
                   refinements: int = 1) -> ValueSurface:
    """Fit the undiscounted value surface v(t_k, S_k) at every grid node.

    Each node regresses the deflated terminal payoff re-conditioned to the
    node, B_k Z_T H / (B_T Z_k), whose conditional mean is the value.  The
    raw regressand carries the claim's full remaining variance, which at
    early nodes, where the cross-section of prices has barely spread,
    buries the fitted slope in noise.  Each refinement pass therefore
    rebuilds the surface with a hedging control variate: the accumulated
    gains of the previous surface's replicating book, delta units of the
    deflated asset plus the rest of the value in deflated savings.  Both
    leg prices are exact one-step martingales of the discretization and the
    positions are predictable, so subtracting the gains leaves the
    conditional mean untouched at every node while removing the hedgeable
    part of the variance, and the refitted slopes come out clean even where
    the design is thin.  The savings leg matters: the deflator carries risk
    of its own, so delta units of the deflated asset alone would not track
    the deflated value.

    A small ridge penalty on the non-intercept coefficients stabilizes
    nearly collinear high powers without biasing constants.  For terminal
    claims the basis also carries the payoff evaluated at the current price
    (payoff_column, on by default), since near maturity the value converges
    to the payoff itself and a kink there defeats any smooth polynomial;
    the payoff column is further interacted with low polynomial powers, so
    the fit is effectively piecewise around the kink, which it needs to be:
    close to maturity the true value is nearly intrinsic on one side and
    nearly zero on the other, with all the curvature concentrated between.
    Passing a threshold additionally drops, on refined passes only,
    non-intercept coefficients within that many standard errors of zero and
    refits the node; the residual noise a control variate cannot remove is
    rarely small enough for this to be safe, so it is off by default.  A
    payoff with no price spread at all makes every node fit its sample
    mean, so deterministic claims are hedged exactly flat.
    """
    model = bundle.model
    if model.n_assets != 1 or model.n_drivers != 1:
        raise ModelAssumptionError(
            f"replication by price regression needs one asset and one driver; "
            f"model '{model.name}' has {model.n_assets} assets, "
            f"{model.n_drivers} drivers")
    if degree < 1:
        raise ConfigError(f"regression degree must be >= 1, got {degree}")
    if payoff_column is None:
        payoff_column = claim.kind == "terminal"
    if payoff_column and claim.kind != "terminal":
        raise ConfigError(
            "a payoff basis column needs a terminal claim; the payoff of a "
            f"'{claim.kind}' claim is not a function of the current price")
    n_nodes = bundle.grid.n_steps + 1
    grid = bundle.grid
    shape_fn = (lambda prices: np.asarray(
        claim.payoff(prices[:, None]), dtype=float)) if payoff_column else None
    bump_fn = _transition_bump(model, grid, shape_fn) if payoff_column else None
    n_coef = degree + 3 if payoff_column else degree + 1
    coeffs = np.zeros((n_nodes, n_coef))
    x_loc = np.zeros(n_nodes)
    x_scale = np.ones(n_nodes)
    x_lo = np.full(n_nodes, -np.inf)
    x_hi = np.full(n_nodes, np.inf)
    shape_loc = np.zeros(n_nodes) if payoff_column else None
    shape_scale = np.zeros(n_nodes) if payoff_column else None
    bump_loc = np.zeros(n_nodes) if payoff_column else None
    bump_scale = np.zeros(n_nodes) if payoff_column else None
    surface = ValueSurface(times=bundle.grid.times, degree=degree, ridge=ridge,
                           coeffs=coeffs, x_loc=x_loc, x_scale=x_scale,
                           x_lo=x_lo, x_hi=x_hi,
                           payoff_shape=shape_fn, shape_loc=shape_loc,
                           shape_scale=shape_scale, bump_shape=bump_fn,
                           bump_loc=bump_loc, bump_scale=bump_scale)
    penalty = np.r_[0.0, np.ones(n_coef - 1)]

    def fit_node(k: int, y: np.ndarray, screen: float | None,
                 flat: bool) -> None:
        x = np.log(bundle.assets[:, k, 0])
        loc = float(x.mean())
        scale = float(x.std())
        x_loc[k] = loc
        if flat or scale <= DEGENERATE_SPREAD * max(1.0, abs(loc)):
            coeffs[k, :] = 0.0
            coeffs[k, 0] = y.mean()
            return
        x_scale[k] = scale
        xc = (x - loc) / scale
        x_lo[k], x_hi[k] = np.quantile(xc, [0.005, 0.995])
        basis = np.polynomial.polynomial.polyvander(xc, degree)
        if payoff_column:
            prices = bundle.assets[:, k, 0]
            for column, locs, scales in (
                    (shape_fn(prices), shape_loc, shape_scale),
                    (bump_fn(k, prices), bump_loc, bump_scale)):
                c_loc = float(column.mean())
                c_scale = float(column.std())
                if c_scale > DEGENERATE_SPREAD * max(1.0, abs(c_loc)):
                    locs[k] = c_loc
                    scales[k] = c_scale
                    basis = np.c_[basis, (column - c_loc) / c_scale]
                else:
                    basis = np.c_[basis, np.zeros_like(column)]
        keep = np.ones(basis.shape[1], dtype=bool)
        while True:
            design = basis[:, keep]
            gram = design.T @ design + np.diag(ridge * penalty[keep])
            beta = np.linalg.solve(gram, design.T @ y)
            if screen is None:
                break
            resid = y - design @ beta
            dof = max(len(y) - design.shape[1], 1)
            sigma2 = float(resid @ resid) / dof
            stderr = np.sqrt(np.maximum(
                sigma2 * np.diag(np.linalg.inv(gram)), 0.0))
            floor = 1e-12 * max(1.0, float(np.abs(y).max()))
            weak = np.abs(beta) <= screen * stderr + floor
            weak[0] = False    # the intercept always stays
            if not weak.any():
                break
            kept = keep.copy()
            kept[np.flatnonzero(keep)[weak]] = False
            keep = kept
        coeffs[k, :] = 0.0
        coeffs[k, np.flatnonzero(keep)] = beta

    if refinements < 0:
        raise ConfigError(f"refinements must be >= 0, got {refinements}")
    numerator = deflated_claim_samples(claim, bundle)
    ratio = bundle.savings / bundle.deflator     # node-k units per node-0 unit
    terminal = numerator * ratio[:, -1]
    flat_claim = bool(terminal.std() <= DEGENERATE_SPREAD
                      * max(1.0, float(np.abs(terminal).max())))

    def run_pass(correction: np.ndarray | None) -> None:
        for k in range(n_nodes - 1, -1, -1):
            y = numerator if correction is None else numerator - correction[:, k]
            fit_node(k, y * ratio[:, k],
                     None if correction is None else threshold, flat_claim)

    run_pass(None)
    if flat_claim:
        return surface

    def proxy_values(j: int, prices: np.ndarray) -> np.ndarray:
        # structural stand-in for the value: payoff plus smoothing bump;
        # any predictable book gives mean-zero gains, and this one needs
        # no regression, so its deltas carry no fit noise into the
        # control variate
        return shape_fn(prices) + bump_fn(j, prices)

    book_values = proxy_values if payoff_column else \
        (lambda j, prices: surface.node_values(max(j, 1), prices))
    deflated_asset = bundle.assets[:, :, 0] / ratio
    asset_moves = np.diff(deflated_asset, axis=1)
    deflator_moves = np.diff(bundle.deflator, axis=1)
    for _ in range(refinements):
        gains = np.empty((bundle.n_paths, n_nodes - 1))
        for j in range(n_nodes - 1):
            prices = bundle.assets[:, j, 0]
            up = book_values(j, prices * (1.0 + FD_FRACTION))
            down = book_values(j, prices * (1.0 - FD_FRACTION))
            value = book_values(j, prices)
            delta = (up - down) / (2.0 * FD_FRACTION * prices)
            gamma = (up - 2.0 * value + down) / (FD_FRACTION * prices) ** 2
            t = _coefficient_time(model, grid, j)
            _, _, sigma = eval_coefficients_batch(model, t,
                                                  bundle.assets[:, j, :])
            quad_var = bundle.increments[:, j, 0] ** 2 - grid.dt[j]
            # three exact-martingale legs: delta units of the deflated
            # asset, the rest of the book in deflated savings, and the
            # book's own quadratic-variation exposure against the centered
            # squared increment, which no position in the asset can hedge
            gains[:, j] = delta * asset_moves[:, j] \
                + ((value - delta * prices) / bundle.savings[:, j]) \
                * deflator_moves[:, j] \
                + 0.5 * gamma * (sigma[:, 0, 0] * prices) ** 2 \
                * (bundle.deflator[:, j] / bundle.savings[:, j]) * quad_var
        correction = np.zeros((bundle.n_paths, n_nodes))
        correction[:, :-1] = gains[:, ::-1].cumsum(axis=1)[:, ::-1]
        run_pass(correction)
        # later passes hedge the control variate with the refitted surface
        book_values = lambda j, prices: surface.node_values(max(j, 1), prices)
    return surface


@dataclass(frozen=True)
class HedgeResult:
    """Replication output: regression surface, hedge fraction table, the
    self-financing portfolio run with it, its error against the claim, and
    the fairness verdict for the hedge portfolio itself."""

    claim_label: str
    initial_capital: float
    price: PriceEstimate
    surface: ValueSurface
    strategy_table: np.ndarray   # hedge fractions of wealth, paths x steps
    portfolio: np.ndarray        # discounted wealth, paths x nodes
    terminal_errors: np.ndarray
    terminal_error_rms: float
    terminal_error_max: float
    relative_rms: float          # terminal_error_rms / initial_capital
    rms_running: np.ndarray      # per-node RMS of portfolio minus surface value
    mean_delta: np.ndarray       # per-step mean hedge fraction
    frozen_share: float          # share of points parked below value resolution
    capped_share: float          # share of points at the fraction cap
    fairness: FairnessReport


def replicate(claim: Claim, bundle: PathBundle, *,
              degree: int = DEFAULT_DEGREE, ridge: float = DEFAULT_RIDGE,
              fd_fraction: float = FD_FRACTION,
              quotient_cap: float = QUOTIENT_CAP,
              value_floor_fraction: float = 1e-3,
              fraction_cap: float | None = 100.0,
              broken_node_limit: float = 0.5) -> HedgeResult:
    """Build and run the delta hedge for a claim on the bundle's paths.

    The hedge holds the surface's dollar delta, obtained by central
    differences, as a fraction of the portfolio's own wealth: the delta
    position replicates the claim, any tracking surplus or shortfall sits
    in the savings account.  Dividing by the fitted value instead would
    compound every tracking gap by the claim's whole remaining growth,
    since the wealth update is multiplicative and a detached ratio never
    heals; dividing by wealth freezes gaps at dollar size.  Wealth alone
    cannot be the denominator either: on a path whose book has fallen far
    below the value, the dollar delta demands a fraction beyond any cap,
    and at the cap the multiplicative update's variance drag grinds the
    book to zero, an absorbing state that forfeits the payoff if the path
    recovers.  The denominator is therefore the larger of wealth and the
    fitted value, so the fraction never exceeds the value's own
    elasticity.  A book above value holds the exact dollar delta with the
    surplus parked in savings; a book below value rides at the elasticity,
    which keeps the shortfall proportional instead of compounding it,
    since exposure beyond the elasticity has negative expected log effect
    once the elasticity is large.  The table is built step by step
    alongside the wealth recursion so each fraction only uses information
    available at its own node, and the reported portfolio is the engine's
    own run of the finished table.

    The node-0 fraction borrows the node-1 surface because node 0 carries
    no price spread.  Polynomial fits of kinked payoffs undershoot zero on
    the wing where the true value vanishes, so points whose value estimate
    falls below value_floor_fraction times the initial capital park the
    hedge in the savings account there (the book is below regression
    resolution); their share is reported as frozen_share.  fraction_cap
    bounds the fraction of wealth, keeping the multiplicative update
    stable; capped points are reported as capped_share.  A surface
    non-positive on more than broken_node_limit of the paths at one node, a
    non-positive initial value, or a difference quotient beyond
    quotient_cap abort with NumericalError.
    """
    surface = value_function(claim, bundle, degree=degree, ridge=ridge)
    price = real_world_price(claim, bundle)
    # the hedge is funded by the price estimate itself, not the node-0 fit
    v_h = price.value
    if v_h <= 0.0:
        raise NumericalError(
            f"non-positive initial value {v_h:.3e}; nothing to replicate")
    floor = value_floor_fraction * v_h
    model = bundle.model
    grid = bundle.grid
    n_steps = grid.n_steps
    n_paths = bundle.n_paths
    weights = np.empty((n_paths, n_steps))
    log_wealth = np.zeros(n_paths)      # discounted wealth / v_h, in logs
    n_frozen = 0
    n_capped = 0
    for k in range(n_steps):
        node = max(k, 1)
        prices = bundle.assets[:, k, 0]
        value = surface.node_values(node, prices)
        broken = value <= 0.0
        if broken.sum() > broken_node_limit * n_paths:
            raise NumericalError(
                f"value surface non-positive on {broken.sum()} of {n_paths} "
                f"paths at step {k}; the regression does not support a hedge "
                "there (more paths or a lower degree may help)")
        up = surface.node_values(node, prices * (1.0 + fd_fraction))
        down = surface.node_values(node, prices * (1.0 - fd_fraction))
        quotient = (up - down) / (2.0 * fd_fraction * prices)
        if np.abs(quotient).max(initial=0.0) > quotient_cap:
            raise NumericalError(
                f"difference quotient exceeded {quotient_cap:g} at step {k}; "
                "the fitted surface oscillates too hard to hedge from")
        frozen = value <= floor
        n_frozen += int(frozen.sum())
        wealth = v_h * np.exp(log_wealth) * bundle.savings[:, k]
        denom = np.maximum(wealth, np.maximum(value, floor))
        fraction = np.where(frozen, 0.0, quotient * prices / denom)
        if fraction_cap is not None:
            over = np.abs(fraction) > fraction_cap
            n_capped += int(over.sum())
            fraction = np.clip(fraction, -fraction_cap, fraction_cap)
        weights[:, k] = fraction
        # advance the wealth mirror with the engine's own update
        t = _coefficient_time(model, grid, k)
        rate, mu, sigma = eval_coefficients_batch(model, t,
                                                  bundle.assets[:, k, :])
        vol = sigma[:, 0, 0] * fraction
        log_wealth += (fraction * (mu[:, 0] - rate) - 0.5 * vol * vol) \
            * grid.dt[k] + vol * bundle.increments[:, k, 0]
    strategy = tabulated_strategy("delta_hedge", weights[:, :, None])
    portfolio = simulate_portfolio(bundle.model, strategy, v_h, bundle,
                                   store=False)
    payoff = claim_payoff(claim, bundle)
    terminal = portfolio[:, -1] * bundle.savings[:, -1]
    errors = terminal - payoff
    rms_terminal = float(np.sqrt(np.mean(errors ** 2)))
    rms_running = np.empty(n_steps + 1)
    rms_running[0] = 0.0
    for k in range(1, n_steps + 1):
        fitted = surface.node_values(k, bundle.assets[:, k, 0])
        res = portfolio[:, k] * bundle.savings[:, k] - fitted
        rms_running[k] = np.sqrt(np.mean(res ** 2))
    return HedgeResult(
        claim_label=claim.label, initial_capital=v_h, price=price,
        surface=surface, strategy_table=weights, portfolio=portfolio,
        terminal_errors=errors, terminal_error_rms=rms_terminal,
        terminal_error_max=float(np.abs(errors).max()),
        relative_rms=rms_terminal / v_h if v_h > 0.0 else np.inf,
        rms_running=rms_running, mean_delta=weights.mean(axis=0),
        frozen_share=n_frozen / (n_paths * n_steps),
        capped_share=n_capped / (n_paths * n_steps),
        fairness=fairness_check(portfolio, bundle))


@dataclass(frozen=True)
class FairnessReport:
    """Paired two-sided martingale test of a benchmarked portfolio against
    its starting node."""

    fair: bool
    worst_abs_z: float
    monitor_times: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray


def fairness_check(values: np.ndarray, bundle: PathBundle, *,
                   n_monitor: int = 10, z_bound: float = 4.0) -> FairnessReport:
    """A portfolio is fair when its benchmarked value is a martingale: the
    paired difference of V / V_gop between node 0 and each monitor node must
    stay within z_bound standard errors of zero, both directions."""
    benchmarked = gop.benchmark(values, bundle)
    n_steps = bundle.grid.n_steps
    nodes = np.unique(np.linspace(0, n_steps, n_monitor + 1).astype(int))
    n_paths = benchmarked.shape[0]
    means = np.empty(len(nodes))
    stderrs = np.empty(len(nodes))
    worst = 0.0
    base = benchmarked[:, nodes[0]]
    scale = max(1.0, float(np.abs(base).max(initial=0.0)))
    for i, node in enumerate(nodes):
        diff = benchmarked[:, node] - base
        means[i] = diff.mean()
        stderrs[i] = diff.std(ddof=1) / np.sqrt(n_paths)
        if stderrs[i] == 0.0:
            z = 0.0 if abs(means[i]) <= 1e-14 * scale else np.inf
        else:
            z = abs(means[i]) / stderrs[i]
        worst = max(worst, z)
    return FairnessReport(fair=bool(worst <= z_bound), worst_abs_z=float(worst),
                          monitor_times=bundle.grid.times[nodes],
                          means=means, stderrs=stderrs)
