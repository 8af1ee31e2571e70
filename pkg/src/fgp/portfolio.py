"""Shares and weights of market, equal, CES, generated and additive strategies.

Shares follow the convention of a closed market whose market portfolio holds
one share of every asset, so relative prices double as share prices once the
market value is scaled to one. ``vs_over_vm`` is the strategy value divided
by the market value.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .dispersion import DispersionMeasure, check_gamma, measure_from_name, neg_ces, neg_geometric_mean
from .errors import ConfigError, DataError, PreconditionError

DEFAULT_GAMMA = -0.5
STRATEGY_KINDS = ("market", "equal", "ces", "generated", "additive")
REBALANCE_SCHEDULES = ("monthly", "step", "none")


@dataclass(frozen=True)
class StrategySpec:
    """Which portfolio to run and how often to rebalance it."""

    kind: str
    gamma: float | None = None
    measure: DispersionMeasure | None = None
    rebalance: str = "monthly"

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if self.rebalance not in REBALANCE_SCHEDULES:
            raise ConfigError(f"unknown rebalance schedule {self.rebalance!r}")
        if self.kind == "ces":
            object.__setattr__(self, "gamma", check_gamma(DEFAULT_GAMMA if self.gamma is None else self.gamma))
        if self.kind in ("generated", "additive") and self.measure is None:
            raise ConfigError(f"{self.kind} strategy needs a dispersion measure")

    @property
    def name(self) -> str:
        if self.kind == "ces":
            return f"ces({self.gamma:g})"
        if self.kind in ("generated", "additive"):
            return f"{self.kind}[{self.measure.name}]"
        return self.kind

    def dispersion(self) -> DispersionMeasure:
        """The measure whose decomposition describes this strategy."""
        if self.kind == "equal":
            return neg_geometric_mean()
        if self.kind == "ces":
            return neg_ces(self.gamma)
        if self.kind == "market":
            return neg_ces(1.0)
        return self.measure

    def target_weights(self, theta, vs_over_vm: float = 1.0) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "market":
            return market_weights(theta)
        if self.kind == "equal":
            return equal_weights(theta.size)
        if self.kind == "ces":
            return ces_weights(theta, self.gamma)
        if self.kind == "generated":
            return generated_weights(self.measure, theta)
        return weights_from_shares(additive_shares(self.measure, theta, vs_over_vm), theta)


def parse_strategy(text: str, rebalance: str = "monthly") -> StrategySpec:
    """Parse ``market``, ``equal``, ``ces:gamma=-0.5`` or ``generated:measure=neg_ces,gamma=0.5``."""
    kind, _, rest = text.strip().partition(":")
    params = {}
    for part in filter(None, (p.strip() for p in re.split(r"[,;]", rest))):
        key, sep, val = part.partition("=")
        if not sep:
            raise ConfigError(f"bad strategy parameter {part!r} in {text!r}")
        params[key.strip().lower()] = val.strip()
    kind = kind.lower()
    try:
        gamma = float(params.pop("gamma")) if "gamma" in params else None
    except ValueError:
        raise ConfigError(f"gamma must be a number in {text!r}") from None
    measure = None
    if kind in ("generated", "additive"):
        measure = measure_from_name(params.pop("measure", "neg_geometric_mean"), gamma)
    rebalance = params.pop("rebalance", rebalance)
    if params:
        raise ConfigError(f"unknown strategy parameters {sorted(params)} in {text!r}")
    return StrategySpec(kind=kind, gamma=gamma, measure=measure, rebalance=rebalance)


def _check_simplex(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 2:
        raise PreconditionError("theta must be a vector of at least two relative prices")
    if not (np.all(theta > 0) and np.all(theta < 1)) or abs(theta.sum() - 1) > 1e-9:
        raise PreconditionError(f"theta is not in the open simplex: {theta}")
    return theta


def market_weights(theta) -> np.ndarray:
    return _check_simplex(theta).copy()


def equal_weights(n: int) -> np.ndarray:
    if n < 1:
        raise ConfigError("need at least one asset")
    return np.full(n, 1.0 / n)


def equal_shares(theta, vs_over_vm: float) -> np.ndarray:
    theta = _check_simplex(theta)
    return vs_over_vm / (theta.size * theta)


def ces_weights(theta, gamma: float) -> np.ndarray:
    """theta_i^gamma / sum_j theta_j^gamma."""
    gamma = check_gamma(gamma)
    if gamma == 1.0:
        return market_weights(theta)
    return softmax(gamma * np.log(_check_simplex(theta)))


def _correction(measure: DispersionMeasure, theta) -> tuple[np.ndarray, float]:
    """Gradient centred on its theta-weighted mean, and F(theta)."""
    grad = np.asarray(measure.gradient(theta), dtype=float)
    return grad - theta @ grad, float(measure.value(theta))


def _warn_negative(shares: np.ndarray, what: str) -> None:
    if np.any(shares < 0):
        warnings.warn(f"{what} produced negative shares {shares[shares < 0]}", RuntimeWarning, stacklevel=3)


def generated_shares(measure: DispersionMeasure, theta, vs_over_vm: float) -> np.ndarray:
    """Shares of the portfolio generated by a negative dispersion measure.

    s_i = (V_s/V_m) * (1 + (F_i - sum_j theta_j F_j) / F), requires F(theta) < 0.
    """
    theta = _check_simplex(theta)
    centred, f = _correction(measure, theta)
    if not f < 0:
        raise PreconditionError(f"generated strategy needs F(theta) < 0, got {f}")
    shares = vs_over_vm * (1.0 + centred / f)
    _warn_negative(shares, f"generated strategy for {measure.name}")
    return shares


def generated_weights(measure: DispersionMeasure, theta) -> np.ndarray:
    theta = _check_simplex(theta)
    return weights_from_shares(generated_shares(measure, theta, 1.0), theta)


def additive_shares(measure: DispersionMeasure, theta, vs_over_vm: float) -> np.ndarray:
    """s_i = sum_j theta_j F_j - F_i + V_s/V_m (no logarithms, F need not be negative)."""
    theta = _check_simplex(theta)
    centred, _ = _correction(measure, theta)
    shares = vs_over_vm - centred
    _warn_negative(shares, f"additive strategy for {measure.name}")
    return shares


def weights_from_shares(shares, prices) -> np.ndarray:
    shares = np.asarray(shares, dtype=float)
    prices = np.asarray(prices, dtype=float)
    dollars = shares * prices
    total = dollars.sum()
    if not total > 0:
        raise DataError(f"portfolio value must be positive, got {total}")
    return dollars / total
