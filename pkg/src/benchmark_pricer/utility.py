"""Expected-utility maximization and utility-indifference pricing built on
the martingale deflator.

For a concave utility U with marginal U' and its inverse I, the optimal
discounted terminal wealth from capital v is I(y* Z_T / v) where y* makes the
budget E[Z_T I(y* Z_T / v)] equal v.  The dual function y -> E[Z_T I(y Z_T / v)]
is strictly decreasing, so a bracket-and-bisect search on the simulated
samples inverts it.  The marginal utility-indifference price of a claim then
reduces to the deflator expectation of its discounted payoff, independent of
the utility and the capital; the estimator here exposes that cancellation
sample by sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .engine import PathBundle
from .errors import ConfigError, ModelAssumptionError, NumericalError
from .pricing import Claim, claim_payoff

INADA_ZERO_PROBE = 1e-12    # marginal here must exceed 1e3
INADA_INF_PROBE = 1e12      # marginal here must fall below 1e-3
ROUNDTRIP_TOL = 1e-9
DEFAULT_BUDGET_TOL = 1e-8


@dataclass(frozen=True)
class UtilitySpec:
    """Utility on positive wealth: value U, marginal U', inverse marginal I.

    validate() probes Inada behavior (steep at zero, flat at infinity),
    strict decrease of the marginal, and the I(U'(x)) = x roundtrip on a log
    grid spanning [1e-4, 1e4].
    """

    label: str
    value: Callable[[np.ndarray], np.ndarray]
    marginal: Callable[[np.ndarray], np.ndarray]
    inverse_marginal: Callable[[np.ndarray], np.ndarray]

    def validate(self) -> "UtilitySpec":
        near_zero = float(self.marginal(np.array([INADA_ZERO_PROBE]))[0])
        near_inf = float(self.marginal(np.array([INADA_INF_PROBE]))[0])
        if not near_zero > 1e3:
            raise ConfigError(
                f"utility '{self.label}' is not steep near zero: marginal at "
                f"{INADA_ZERO_PROBE:g} is {near_zero:g}, expected > 1e3")
        if not near_inf < 1e-3:
            raise ConfigError(
                f"utility '{self.label}' does not flatten at large wealth: "
                f"marginal at {INADA_INF_PROBE:g} is {near_inf:g}, expected < 1e-3")
        grid = np.geomspace(1e-4, 1e4, 41)
        marg = np.asarray(self.marginal(grid), dtype=float)
        if not (np.all(np.isfinite(marg)) and np.all(marg > 0.0)):
            raise ConfigError(
                f"utility '{self.label}' has a non-finite or non-positive "
                "marginal on [1e-4, 1e4]")
        if not np.all(np.diff(marg) < 0.0):
            raise ConfigError(
                f"utility '{self.label}' marginal is not strictly decreasing")
        back = np.asarray(self.inverse_marginal(marg), dtype=float)
        rel = np.abs(back - grid) / grid
        if not np.all(rel <= ROUNDTRIP_TOL):
            raise ConfigError(
                f"utility '{self.label}' inverse marginal does not invert the "
                f"marginal (worst relative error {rel.max():.3e})")
        vals = np.asarray(self.value(grid), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ConfigError(
                f"utility '{self.label}' value is non-finite on [1e-4, 1e4]")
        return self


def log_utility() -> UtilitySpec:
    return UtilitySpec(label="log", value=np.log,
                       marginal=lambda x: 1.0 / x,
                       inverse_marginal=lambda y: 1.0 / y).validate()


def power_utility(exponent: float) -> UtilitySpec:
    """U(x) = x^a / a for 0 < a < 1."""
    a = float(exponent)
    if not (np.isfinite(a) and 0.0 < a < 1.0):
        raise ConfigError(
            f"power utility exponent must lie in (0, 1), got {exponent}")
    return UtilitySpec(
        label=f"power_{a:g}",
        value=lambda x: np.power(x, a) / a,
        marginal=lambda x: np.power(x, a - 1.0),
        inverse_marginal=lambda y: np.power(y, 1.0 / (a - 1.0))).validate()


def custom_utility(label: str, value, marginal, inverse_marginal) -> UtilitySpec:
    return UtilitySpec(label=label, value=value, marginal=marginal,
                       inverse_marginal=inverse_marginal).validate()


def utility_from_config(config: dict) -> UtilitySpec:
    if not isinstance(config, dict) or "kind" not in config:
        raise ConfigError("utility config must be an object with a 'kind' key")
    kind = config["kind"]
    if kind == "log":
        return log_utility()
    if kind == "power":
        if "exponent" not in config:
            raise ConfigError("power utility config needs 'exponent'")
        return power_utility(config["exponent"])
    raise ConfigError(f"unknown utility kind '{kind}'")


def _deflator_terminal(bundle: PathBundle) -> np.ndarray:
    if bundle.deflator is None:
        raise ModelAssumptionError(
            "no martingale deflator exists along the bundle's paths; "
            "utility maximization is undefined")
    return bundle.deflator[:, -1]


def _check_positive(name: str, x: float) -> float:
    x = float(x)
    if not (np.isfinite(x) and x > 0.0):
        raise ConfigError(f"{name} must be a positive number, got {x}")
    return x


def dual_value(utility: UtilitySpec, y: float, bundle: PathBundle,
               v: float = 1.0) -> float:
    """Budget used by the candidate wealth I(y Z_T / v): E[Z_T I(y Z_T / v)].

    Strictly decreasing in y; the Lagrange multiplier y* solves
    dual_value(y*) = v.
    """
    y = _check_positive("multiplier y", y)
    v = _check_positive("initial capital v", v)
    z = _deflator_terminal(bundle)
    wealth = np.asarray(utility.inverse_marginal(y * z / v), dtype=float)
    if not np.all(np.isfinite(wealth)):
        raise NumericalError(
            f"inverse marginal of '{utility.label}' produced non-finite "
            "wealth along the paths")
    return float((z * wealth).mean())


@dataclass(frozen=True)
class LagrangeSolution:
    y_star: float
    budget: float
    iterations: int


def solve_lagrange(utility: UtilitySpec, v: float, bundle: PathBundle, *,
                   tol: float = DEFAULT_BUDGET_TOL,
                   max_iterations: int = 200) -> LagrangeSolution:
    """Find y* with |dual_value(y*) - v| <= tol * v by bracketing from y = 1
    and bisecting.  Log utility exits immediately at y* = 1 because the
    candidate wealth v / (y Z_T) spends exactly v / y."""
    v = _check_positive("initial capital v", v)
    y = 1.0
    w = dual_value(utility, y, bundle, v)
    iterations = 0
    if abs(w - v) <= tol * v:
        return LagrangeSolution(y_star=y, budget=w, iterations=iterations)
    if w > v:
        lo, w_lo = y, w
        hi = y
        while True:
            hi *= 2.0
            iterations += 1
            if iterations > max_iterations:
                raise NumericalError(
                    f"no bracket for the Lagrange multiplier of "
                    f"'{utility.label}' after {max_iterations} doublings")
            w_hi = dual_value(utility, hi, bundle, v)
            if abs(w_hi - v) <= tol * v:
                return LagrangeSolution(hi, w_hi, iterations)
            if w_hi < v:
                break
    else:
        hi, w_hi = y, w
        lo = y
        while True:
            lo /= 2.0
            iterations += 1
            if iterations > max_iterations:
                raise NumericalError(
                    f"no bracket for the Lagrange multiplier of "
                    f"'{utility.label}' after {max_iterations} halvings")
            w_lo = dual_value(utility, lo, bundle, v)
            if abs(w_lo - v) <= tol * v:
                return LagrangeSolution(lo, w_lo, iterations)
            if w_lo > v:
                break
    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        iterations += 1
        w_mid = dual_value(utility, mid, bundle, v)
        if abs(w_mid - v) <= tol * v:
            return LagrangeSolution(mid, w_mid, iterations)
        if w_mid > v:
            lo = mid
        else:
            hi = mid
    raise NumericalError(
        f"bisection for the Lagrange multiplier of '{utility.label}' did not "
        f"reach tolerance {tol:g} within {max_iterations} iterations")


def optimal_terminal_wealth(utility: UtilitySpec, v: float, bundle: PathBundle,
                            y_star: float | None = None) -> np.ndarray:
    """Optimal discounted terminal wealth I(y* Z_T / v), solving for y* when
    not supplied, with the budget identity E[Z_T W] = v re-checked."""
    v = _check_positive("initial capital v", v)
    if y_star is None:
        y_star = solve_lagrange(utility, v, bundle).y_star
    z = _deflator_terminal(bundle)
    wealth = np.asarray(utility.inverse_marginal(y_star * z / v), dtype=float)
    budget = float((z * wealth).mean())
    if abs(budget - v) > 1e-6 * v:
        raise NumericalError(
            f"optimal wealth for '{utility.label}' spends {budget:.6e} "
            f"instead of the capital {v:.6e}; y_star is off")
    return wealth


def expected_utility(utility: UtilitySpec, wealth: np.ndarray) -> float:
    wealth = np.asarray(wealth, dtype=float)
    if wealth.min(initial=np.inf) <= 0.0:
        raise NumericalError("expected utility needs strictly positive wealth")
    return float(np.asarray(utility.value(wealth), dtype=float).mean())


@dataclass(frozen=True)
class IndifferencePrice:
    claim_label: str
    utility_label: str
    initial_capital: float
    y_star: float
    value: float
    stderr: float
    n_paths: int


def indifference_price(utility: UtilitySpec, claim: Claim, bundle: PathBundle,
                       v: float = 1.0,
                       y_star: float | None = None) -> IndifferencePrice:
    """Marginal utility-indifference price of a claim at capital v.

    The first-order price of an infinitesimal position is
    E[U'(W*) Hbar] / E[U'(W*) W*/v] with W* the optimal discounted wealth and
    Hbar the discounted payoff.  The stderr comes from the delta method for
    the ratio of sample means.
    """
    v = _check_positive("initial capital v", v)
    wealth = optimal_terminal_wealth(utility, v, bundle, y_star=y_star)
    if y_star is None:
        y_star = solve_lagrange(utility, v, bundle).y_star
    payoff_bar = claim_payoff(claim, bundle) / bundle.savings[:, -1]
    marg = np.asarray(utility.marginal(wealth), dtype=float)
    if not np.all(np.isfinite(marg)):
        raise NumericalError(
            f"marginal utility of '{utility.label}' non-finite at the "
            "optimal wealth")
    num = marg * payoff_bar
    den = marg * (wealth / v)
    a_bar = float(num.mean())
    b_bar = float(den.mean())
    if b_bar <= 0.0:
        raise NumericalError("degenerate denominator in indifference price")
    ratio = a_bar / b_bar
    n = num.size
    var_a = float(num.var(ddof=1))
    var_b = float(den.var(ddof=1))
    cov = float(np.cov(num, den, ddof=1)[0, 1])
    se = np.sqrt(max(var_a - 2.0 * ratio * cov + ratio ** 2 * var_b, 0.0) / n) \
        / b_bar
    return IndifferencePrice(claim_label=claim.label,
                             utility_label=utility.label,
                             initial_capital=v, y_star=float(y_star),
                             value=float(ratio), stderr=float(se), n_paths=n)


def utility_gain_curve(utility: UtilitySpec, claim: Claim, bundle: PathBundle,
                       v: float, price: float, epsilons) -> np.ndarray:
    """Expected utility of holding epsilon claims bought at the given price,
    funding them from the optimal strategy: E[U((v - eps p) W*/v + eps Hbar)].
    Flat at eps = 0 exactly when the price is the indifference price."""
    v = _check_positive("initial capital v", v)
    wealth = optimal_terminal_wealth(utility, v, bundle)
    payoff_bar = claim_payoff(claim, bundle) / bundle.savings[:, -1]
    out = []
    for eps in np.atleast_1d(np.asarray(epsilons, dtype=float)):
        mixed = (v - eps * price) * (wealth / v) + eps * payoff_bar
        out.append(expected_utility(utility, mixed))
    return np.array(out)
