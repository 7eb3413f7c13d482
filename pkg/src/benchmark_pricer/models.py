"""Market model descriptions: coefficient functions, built-ins, JSON configs.

A market holds one savings account with short rate r(t, S) and N risky assets
driven by d >= N Brownian motions,

    dS^i / S^i = mu^i(t, S) dt + sum_j sigma^{ij}(t, S) dW^j,

with mu the *relative* appreciation rate (the short rate is not subtracted).
Models are immutable descriptions; all randomness and path state live in the
engine.  Coefficient functions are pure and vectorized over a batch of states:
given t and a (P, N) state block they return r of shape (P,) (or a scalar),
mu of shape (P, N) (or (N,)) and sigma of shape (P, N, d) (or (N, d)).

An optional exact transition sampler replaces Euler stepping when the marginal
law is known in closed form.  The squared-distance construction used for the
radial process here is exact in law: the norm of a 3-D Brownian motion started
at radius s solves dS = dt/S + dW, so one step is the norm of the previous
radius plus an independent 3-D Gaussian increment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ConfigError, NumericalError

CoefficientFn = Callable[[float, np.ndarray], np.ndarray]


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CoefficientSnapshot:
    """Model coefficients evaluated at one (t, state) point."""

    short_rate: float
    drift: np.ndarray       # (N,) relative drift mu
    volatility: np.ndarray  # (N, d)

    def excess_drift(self) -> np.ndarray:
        """mu - r * 1, the drift the savings account does not explain."""
        return self.drift - self.short_rate


@dataclass(frozen=True)
class MarketModel:
    """Immutable market description; see the module docstring for conventions."""

    name: str
    n_assets: int
    n_drivers: int
    short_rate_fn: CoefficientFn
    drift_fn: CoefficientFn
    volatility_fn: CoefficientFn
    initial_prices: np.ndarray
    horizon: float
    exact_sampler: Any = None
    rank_deficient_allowed: bool = False
    drift_singular_at_origin: bool = False
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            raise ConfigError("model name must be non-empty")
        if self.n_assets < 1:
            raise ConfigError(f"n_assets must be >= 1, got {self.n_assets}")
        if self.n_drivers < 1:
            raise ConfigError(f"n_drivers must be >= 1, got {self.n_drivers}")
        if not self.rank_deficient_allowed and self.n_assets > self.n_drivers:
            raise ConfigError(
                f"n_assets={self.n_assets} exceeds n_drivers={self.n_drivers}; "
                "a full-rank volatility needs at least as many drivers as assets "
                "(set rank_deficient_allowed to describe such a market anyway)")
        prices = _frozen_array(self.initial_prices)
        if prices.shape != (self.n_assets,):
            raise ConfigError(
                f"initial_prices must have shape ({self.n_assets},), got {prices.shape}")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0.0):
            raise ConfigError("initial prices must be finite and strictly positive")
        object.__setattr__(self, "initial_prices", prices)
        if not (np.isfinite(self.horizon) and self.horizon > 0.0):
            raise ConfigError(f"horizon must be finite and positive, got {self.horizon}")

    def config(self) -> dict:
        """JSON-serializable description; model_from_config round-trips it."""
        return {"name": self.name, "params": dict(self.params)}


def eval_coefficients(model: MarketModel, t: float, state) -> CoefficientSnapshot:
    """Evaluate (r, mu, sigma) at a single (t, state) point with shape checks."""
    state = np.asarray(state, dtype=float)
    if state.shape != (model.n_assets,):
        raise ConfigError(
            f"state must have shape ({model.n_assets},), got {state.shape}")
    batch = state[None, :]
    r, mu, sigma = eval_coefficients_batch(model, t, batch)
    return CoefficientSnapshot(short_rate=float(r[0]),
                               drift=_frozen_array(mu[0]),
                               volatility=_frozen_array(sigma[0]))


def eval_coefficients_batch(model: MarketModel, t: float, states: np.ndarray):
    """Vectorized coefficient evaluation over a (P, N) state block.

    Returns r (P,), mu (P, N), sigma (P, N, d); scalar or unbatched returns
    from the model's functions are broadcast.  Raises NumericalError on any
    non-finite coefficient, naming the time at which it appeared.
    """
    n_paths = states.shape[0]
    n, d = model.n_assets, model.n_drivers
    r = np.broadcast_to(np.asarray(model.short_rate_fn(t, states), dtype=float),
                        (n_paths,))
    mu = np.broadcast_to(np.asarray(model.drift_fn(t, states), dtype=float),
                         (n_paths, n))
    sigma = np.broadcast_to(np.asarray(model.volatility_fn(t, states), dtype=float),
                            (n_paths, n, d))
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(mu))
            and np.all(np.isfinite(sigma))):
        raise NumericalError(
            f"non-finite coefficient for model '{model.name}' at t={t}")
    return r, mu, sigma


class RadialBrownianTransition:
    """Exact transition sampler for the norm of a 3-D Brownian motion.

    Consumes three standard normals per path and step: the next radius is
    sqrt((S + g1*sqrt(dt))**2 + dt*(g2**2 + g3**2)), which has exactly the
    transition law of the radial process started at S.
    """

    n_extra_lanes = 3

    def __call__(self, t0: float, t1: float, states: np.ndarray,
                 normals: np.ndarray) -> np.ndarray:
        dt = t1 - t0
        root = np.sqrt(dt)
        s = states[:, 0]
        radial = s + root * normals[:, 0]
        cross = dt * (normals[:, 1] ** 2 + normals[:, 2] ** 2)
        return np.sqrt(radial * radial + cross)[:, None]


def black_scholes(drift: float = 0.1, vol: float = 0.2, rate: float = 0.02,
                  s0: float = 100.0, horizon: float = 1.0) -> MarketModel:
    """Single asset with constant coefficients."""
    if vol == 0.0:
        raise ConfigError("black_scholes volatility must be nonzero")
    params = {"drift": drift, "vol": vol, "rate": rate, "s0": s0, "horizon": horizon}
    mu = np.array([float(drift)])
    sigma = np.array([[float(vol)]])
    return MarketModel(
        name="black_scholes", n_assets=1, n_drivers=1,
        short_rate_fn=lambda t, s: float(rate),
        drift_fn=lambda t, s: mu,
        volatility_fn=lambda t, s: sigma,
        initial_prices=np.array([s0]), horizon=horizon, params=params)


def bessel3(s0: float = 1.0, horizon: float = 1.0) -> MarketModel:
    """Radial part of a 3-D Brownian motion as the single asset, zero rates.

    In relative form the coefficients are mu = 1/S^2 and sigma = 1/S, so the
    market price of risk is 1/S and the growth-optimal portfolio holds the
    asset itself.  The canonical example of a viable market whose martingale
    deflator is a strict local martingale.
    """
    if s0 <= 0.0:
        raise ConfigError(f"bessel3 initial value must be positive, got {s0}")
    params = {"s0": s0, "horizon": horizon}
    return MarketModel(
        name="bessel3", n_assets=1, n_drivers=1,
        short_rate_fn=lambda t, s: 0.0,
        drift_fn=lambda t, s: 1.0 / (s * s),
        volatility_fn=lambda t, s: (1.0 / s)[:, :, None],
        initial_prices=np.array([s0]), horizon=horizon,
        exact_sampler=RadialBrownianTransition(), params=params)


def exploding_mpr(s0: float = 1.0, horizon: float = 1.0) -> MarketModel:
    """Unit volatility with drift 1/sqrt(t): the squared market price of risk
    integrates to infinity near t=0, so the market admits unbounded profits
    with vanishing risk even though each fixed-time coefficient is finite.
    The drift is singular at t=0; the engine evaluates the first step's
    coefficients at the right endpoint of the first interval.
    """
    if s0 <= 0.0:
        raise ConfigError(f"exploding_mpr initial value must be positive, got {s0}")
    params = {"s0": s0, "horizon": horizon}
    one = np.array([[1.0]])
    return MarketModel(
        name="exploding_mpr", n_assets=1, n_drivers=1,
        short_rate_fn=lambda t, s: 0.0,
        drift_fn=lambda t, s: np.array([1.0 / np.sqrt(t)]),
        volatility_fn=lambda t, s: one,
        initial_prices=np.array([s0]), horizon=horizon,
        drift_singular_at_origin=True, params=params)


def custom_multi(drift, vol, rate: float = 0.0, s0=None, horizon: float = 1.0,
                 rank_deficient_allowed: bool = False) -> MarketModel:
    """Constant-coefficient market with arbitrary (N, d) volatility matrix."""
    mu = np.asarray(drift, dtype=float)
    sigma = np.asarray(vol, dtype=float)
    if mu.ndim != 1:
        raise ConfigError(f"drift must be a vector, got shape {mu.shape}")
    n = mu.shape[0]
    if sigma.ndim != 2 or sigma.shape[0] != n:
        raise ConfigError(
            f"vol must be an (N, d) matrix with N={n} rows, got shape {sigma.shape}")
    d = sigma.shape[1]
    if s0 is None:
        s0 = np.ones(n)
    s0 = np.asarray(s0, dtype=float)
    params = {"drift": mu.tolist(), "vol": sigma.tolist(), "rate": float(rate),
              "s0": s0.tolist(), "horizon": horizon,
              "rank_deficient_allowed": bool(rank_deficient_allowed)}
    mu_c = _frozen_array(mu)
    sigma_c = _frozen_array(sigma)
    return MarketModel(
        name="custom_multi", n_assets=n, n_drivers=d,
        short_rate_fn=lambda t, s: float(rate),
        drift_fn=lambda t, s: mu_c,
        volatility_fn=lambda t, s: sigma_c,
        initial_prices=s0, horizon=horizon,
        rank_deficient_allowed=rank_deficient_allowed, params=params)


_BUILTINS: dict[str, Callable[..., MarketModel]] = {
    "black_scholes": black_scholes,
    "bessel3": bessel3,
    "exploding_mpr": exploding_mpr,
    "custom_multi": custom_multi,
}


def builtin_model(name: str, **params) -> MarketModel:
    """Construct a built-in model by name; unknown names raise ConfigError."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ConfigError(
            f"unknown model '{name}'; built-ins: {sorted(_BUILTINS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model '{name}': {exc}") from None


def model_from_config(config: Mapping[str, Any]) -> MarketModel:
    """Build a model from a {"name": ..., "params": {...}} mapping."""
    if not isinstance(config, Mapping):
        raise ConfigError("model config must be a mapping")
    unknown = set(config) - {"name", "params"}
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    if "name" not in config:
        raise ConfigError("model config needs a 'name'")
    params = config.get("params", {})
    if not isinstance(params, Mapping):
        raise ConfigError("model 'params' must be a mapping")
    return builtin_model(config["name"], **params)
