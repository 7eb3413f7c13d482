"""Growth-optimal-portfolio based diagnostics, pricing and hedging.

Core objects: immutable market models (models), counter-keyed randomness
(rng), path simulation (engine), no-arbitrage diagnostics (diagnostics),
growth-optimal portfolio tooling (gop), real-world and hedging prices
(pricing, hedging), expected-utility pricing (utility), and the
`benchmark-pricer` command line runner (cli).
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (BenchmarkPricerError, ConfigError, ModelAssumptionError,
                     NumericalError)
from .models import (CoefficientSnapshot, MarketModel, bessel3, black_scholes,
                     builtin_model, custom_multi, eval_coefficients,
                     exploding_mpr, model_from_config)
from .engine import (PathBundle, SimulationGrid, Strategy, constant_strategy,
                     dump_paths_csv, simulate_assets, simulate_bundle,
                     simulate_deflator, simulate_drivers, simulate_portfolio,
                     tabulated_strategy)
from .diagnostics import (DiagnosticsReport, detect_increasing_profit, diagnose,
                          exploit_increasing_profit, market_price_of_risk,
                          martingale_gap, validate_deflator, verify_exploit,
                          viability_check)
from .gop import (benchmark, gop_strategy, gop_weights, growth_rate,
                  numeraire_test, simulate_gop)
from .pricing import (Claim, PriceEstimate, benchmark_claim, call_claim,
                      claim_from_config, polynomial_claim, put_claim,
                      real_world_price, risk_neutral_comparison,
                      upper_hedging_price, zero_coupon_bond, zero_coupon_claim)
from .hedging import (HedgeResult, ValueSurface, fairness_check, replicate,
                      value_function)
from .utility import (UtilitySpec, custom_utility, dual_value,
                      indifference_price, log_utility,
                      optimal_terminal_wealth, power_utility, solve_lagrange)

__all__ = [
    "BenchmarkPricerError", "ConfigError", "ModelAssumptionError",
    "NumericalError", "CoefficientSnapshot", "MarketModel", "bessel3",
    "black_scholes", "builtin_model", "custom_multi", "eval_coefficients",
    "exploding_mpr", "model_from_config", "PathBundle", "SimulationGrid",
    "Strategy", "constant_strategy", "dump_paths_csv", "simulate_assets",
    "simulate_bundle", "simulate_deflator", "simulate_drivers",
    "simulate_portfolio", "tabulated_strategy", "DiagnosticsReport",
    "detect_increasing_profit", "diagnose", "exploit_increasing_profit",
    "market_price_of_risk", "martingale_gap", "validate_deflator",
    "verify_exploit", "viability_check", "benchmark", "gop_strategy",
    "gop_weights", "growth_rate", "numeraire_test", "simulate_gop", "Claim",
    "PriceEstimate", "benchmark_claim", "call_claim", "claim_from_config",
    "polynomial_claim", "put_claim", "real_world_price",
    "risk_neutral_comparison", "upper_hedging_price", "zero_coupon_bond",
    "zero_coupon_claim", "HedgeResult", "ValueSurface", "fairness_check",
    "replicate", "value_function", "UtilitySpec", "custom_utility",
    "dual_value", "indifference_price", "log_utility",
    "optimal_terminal_wealth", "power_utility", "solve_lagrange",
    "__version__",
]
