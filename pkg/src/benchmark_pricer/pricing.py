"""Real-world pricing under the growth-optimal numeraire.

The price of a nonnegative claim H is E[Z_T H / B_T] with Z the minimal
martingale deflator and B the savings account; equivalently the expectation
of H deflated by the undiscounted growth-optimal portfolio.  This needs no
equivalent martingale measure: it remains the minimal replication capital
even when Z is a strict local martingale and classical risk-neutral pricing
overstates hedging costs.  upper_hedging_price exposes the same number under
its minimal-superreplication-capital reading, which is only justified when
the market is complete (as many driving factors as assets).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diagnostics import MartingaleGapReport, martingale_gap
from .engine import PathBundle
from .errors import ConfigError, ModelAssumptionError, NumericalError

KURTOSIS_WARN_LEVEL = 100.0
DEGENERATE_REL_STD = 1e-12


@dataclass(frozen=True)
class Claim:
    """Nonnegative payoff at the horizon.

    kind 'terminal' evaluates payoff(terminal_prices (P, N)) -> (P,);
    kind 'path' evaluates payoff(price_paths (P, K+1, N), times) -> (P,);
    kind 'benchmark' delivers the undiscounted growth-optimal wealth from
    one unit of capital and needs no payoff function.
    """

    label: str
    kind: str
    payoff: Callable[..., np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("terminal", "path", "benchmark"):
            raise ConfigError(f"unknown claim kind '{self.kind}'")
        if self.kind != "benchmark" and self.payoff is None:
            raise ConfigError(f"claim '{self.label}' needs a payoff function")

    @property
    def path_dependent(self) -> bool:
        return self.kind == "path"


def call_claim(strike: float) -> Claim:
    strike = _positive_strike(strike)
    return Claim(label=f"call_{strike:g}", kind="terminal",
                 payoff=lambda s: np.maximum(s[:, 0] - strike, 0.0))


def put_claim(strike: float) -> Claim:
    strike = _positive_strike(strike)
    return Claim(label=f"put_{strike:g}", kind="terminal",
                 payoff=lambda s: np.maximum(strike - s[:, 0], 0.0))


def zero_coupon_claim() -> Claim:
    return Claim(label="zcb", kind="terminal",
                 payoff=lambda s: np.ones(s.shape[0]))


def benchmark_claim() -> Claim:
    return Claim(label="benchmark", kind="benchmark")


def polynomial_claim(coefficients) -> Claim:
    coeffs = np.asarray(coefficients, dtype=float)
    if coeffs.ndim != 1 or coeffs.size == 0 or not np.all(np.isfinite(coeffs)):
        raise ConfigError("polynomial claim needs a finite 1-D coefficient list")
    return Claim(label="polynomial_deg%d" % (coeffs.size - 1), kind="terminal",
                 payoff=lambda s: np.polynomial.polynomial.polyval(s[:, 0], coeffs))


def _positive_strike(strike) -> float:
    strike = float(strike)
    if not (np.isfinite(strike) and strike > 0.0):
        raise ConfigError(f"strike must be a positive number, got {strike}")
    return strike


def claim_from_config(config: dict) -> Claim:
    if not isinstance(config, dict) or "kind" not in config:
        raise ConfigError("claim config must be an object with a 'kind' key")
    kind = config["kind"]
    if kind == "call":
        return call_claim(config.get("strike", 1.0))
    if kind == "put":
        return put_claim(config.get("strike", 1.0))
    if kind == "zcb":
        return zero_coupon_claim()
    if kind == "benchmark":
        return benchmark_claim()
    if kind == "polynomial":
        if "coefficients" not in config:
            raise ConfigError("polynomial claim config needs 'coefficients'")
        return polynomial_claim(config["coefficients"])
    raise ConfigError(f"unknown claim kind '{kind}'")


def claim_payoff(claim: Claim, bundle: PathBundle) -> np.ndarray:
    """Evaluate the claim on a bundle's undiscounted asset paths and check
    the payoff is finite and nonnegative."""
    if claim.kind == "terminal":
        values = np.asarray(claim.payoff(bundle.assets[:, -1, :]), dtype=float)
    elif claim.kind == "path":
        values = np.asarray(claim.payoff(bundle.assets, bundle.grid.times),
                            dtype=float)
    else:
        if bundle.gop is None:
            raise ModelAssumptionError(
                "benchmark claim undefined: no growth-optimal portfolio exists "
                "along the bundle's paths")
        values = bundle.gop[:, -1] * bundle.savings[:, -1]
    if values.shape != (bundle.n_paths,):
        raise ConfigError(
            f"claim '{claim.label}' returned shape {values.shape}, expected "
            f"({bundle.n_paths},)")
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"claim '{claim.label}' produced non-finite payoffs")
    if values.min(initial=0.0) < 0.0:
        raise ConfigError(
            f"claim '{claim.label}' produced negative payoffs; claims must be "
            "nonnegative")
    return values


def deflated_claim_samples(claim: Claim, bundle: PathBundle) -> np.ndarray:
    """Per-path samples Z_T H / B_T whose mean is the real-world price."""
    if bundle.deflator is None:
        raise ModelAssumptionError(
            "no martingale deflator exists along the bundle's paths; "
            "real-world pricing is undefined")
    payoff = claim_payoff(claim, bundle)
    return payoff * bundle.deflator[:, -1] / bundle.savings[:, -1]


@dataclass(frozen=True)
class PriceEstimate:
    claim_label: str
    method: str
    value: float
    stderr: float
    n_paths: int
    sample_kurtosis: float
    heavy_tailed: bool


def _estimate(claim: Claim, bundle: PathBundle, method: str) -> PriceEstimate:
    samples = deflated_claim_samples(claim, bundle)
    value = float(samples.mean())
    std = float(samples.std(ddof=1)) if samples.size > 1 else 0.0
    stderr = std / np.sqrt(samples.size)
    if std <= DEGENERATE_REL_STD * max(1.0, abs(value)):
        kurt, heavy = float("nan"), False
    else:
        centered = samples - value
        kurt = float(np.mean(centered ** 4) / np.mean(centered ** 2) ** 2)
        heavy = kurt > KURTOSIS_WARN_LEVEL
    if heavy:
        warnings.warn(
            f"price samples for '{claim.label}' are heavy-tailed (kurtosis "
            f"{kurt:.1f}); the stderr may be unreliable, consider more paths",
            RuntimeWarning, stacklevel=3)
    return PriceEstimate(claim_label=claim.label, method=method, value=value,
                         stderr=float(stderr), n_paths=samples.size,
                         sample_kurtosis=kurt, heavy_tailed=heavy)


def real_world_price(claim: Claim, bundle: PathBundle) -> PriceEstimate:
    """Monte Carlo estimate of E[Z_T H / B_T] on the bundle."""
    return _estimate(claim, bundle, "real_world")


def zero_coupon_bond(bundle: PathBundle) -> PriceEstimate:
    """Real-world price of one unit at the horizon: E[Z_T / B_T]."""
    return _estimate(zero_coupon_claim(), bundle, "real_world")


def upper_hedging_price(claim: Claim, bundle: PathBundle) -> PriceEstimate:
    """Minimal superreplication capital.  In a complete market this coincides
    with the real-world price estimator sample by sample; with fewer assets
    than driving factors the identification fails and pricing stops here."""
    model = bundle.model
    if model.n_assets != model.n_drivers:
        raise ModelAssumptionError(
            f"upper hedging price needs a complete market; model "
            f"'{model.name}' has {model.n_assets} assets driven by "
            f"{model.n_drivers} factors")
    return _estimate(claim, bundle, "upper_hedging")


@dataclass(frozen=True)
class RiskNeutralComparison:
    """Real-world versus risk-neutral valuation of the savings-account claim
    H = B_T.  Risk-neutral valuation returns B_0 = 1 by construction; the
    real-world price is E[Z_T], so the discrepancy 1 - E[Z_T] is exactly the
    terminal martingale gap of the deflator."""

    savings_claim_price: PriceEstimate
    deflator_gap: MartingaleGapReport
    discrepancy: float
    risk_neutral_reliable: bool
    note: str


def risk_neutral_comparison(bundle: PathBundle) -> RiskNeutralComparison:
    if bundle.deflator is None:
        raise ModelAssumptionError(
            "no martingale deflator exists along the bundle's paths")
    # the savings-account claim pays B_T, taken from the bundle's own table
    terminal = bundle.savings[:, -1]
    samples = terminal * bundle.deflator[:, -1] / bundle.savings[:, -1]
    price = PriceEstimate(
        claim_label="savings_account", method="real_world",
        value=float(samples.mean()),
        stderr=float(samples.std(ddof=1) / np.sqrt(samples.size)),
        n_paths=samples.size, sample_kurtosis=float("nan"), heavy_tailed=False)
    gap = martingale_gap(bundle.deflator[:, -1])
    discrepancy = 1.0 - gap.mean
    reliable = gap.verdict == "true_martingale_consistent"
    if reliable:
        note = ("deflator consistent with a true martingale; risk-neutral and "
                "real-world prices agree within Monte Carlo error")
    elif gap.verdict == "strict_supermartingale":
        note = (f"deflator is a strict supermartingale (E[Z_T] = {gap.mean:.4f}); "
                "risk-neutral valuation overstates the replication capital by "
                f"{discrepancy:.4f} per unit of the savings-account claim")
    else:
        note = "deflator terminal mean inconclusive at this sample size"
    return RiskNeutralComparison(savings_claim_price=price, deflator_gap=gap,
                                 discrepancy=float(discrepancy),
                                 risk_neutral_reliable=reliable, note=note)
