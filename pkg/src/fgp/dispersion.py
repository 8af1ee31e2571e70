"""Measures of relative price dispersion and their derivatives.

Built-in measures are minus the geometric mean and minus the CES function of
the relative price vector. Both are evaluated in log space. Arrays of shape
``(..., N)`` are accepted so whole time series can be evaluated at once.

Custom measures supply only a value function; their gradient and Hessian are
central finite differences along simplex tangent directions, so they are the
tangent projections ``P g`` and ``P H P`` with ``P = I - 11'/N``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DomainError, NumericError, PreconditionError

GAMMA_CAP = 10.0
FD_STEP = 1e-5


def _log_theta(theta) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] < 1:
        raise DomainError("empty relative price vector")
    if not np.all(theta > 0):
        raise DomainError(f"relative prices must be positive, got {theta}")
    return theta, np.log(theta)


def check_gamma(gamma: float, cap: float = GAMMA_CAP) -> float:
    gamma = float(gamma)
    if gamma == 0 or not np.isfinite(gamma):
        raise ConfigError("CES parameter gamma must be a finite nonzero number")
    if abs(gamma) > cap:
        raise ConfigError(f"|gamma| = {abs(gamma)} exceeds cap {cap}")
    return gamma


def geometric_mean(theta) -> np.ndarray | float:
    """(theta_1 ... theta_N)^(1/N), computed as exp(mean(log theta))."""
    _, lt = _log_theta(theta)
    out = np.exp(lt.mean(axis=-1))
    return float(out) if out.ndim == 0 else out


def log_ces_value(theta, gamma: float) -> np.ndarray | float:
    """log U = logsumexp(gamma * log theta) / gamma, finite for any gamma != 0."""
    gamma = check_gamma(gamma)
    _, lt = _log_theta(theta)
    out = logsumexp(gamma * lt, axis=-1) / gamma
    return float(out) if np.ndim(out) == 0 else out


def ces_value(theta, gamma: float) -> np.ndarray | float:
    """(sum theta_i^gamma)^(1/gamma) via log-sum-exp.

    For |gamma| near zero U behaves like N^(1/gamma) and leaves the float64
    range; that raises NumericError, and :func:`log_ces_value` stays usable.
    """
    log_u = np.asarray(log_ces_value(theta, gamma))
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(log_u)
    if not np.all(np.isfinite(out) & (out > 0)):
        raise NumericError(f"CES value exp({log_u.flat[0]:.6g}) is outside float64 range; use log_ces_value")
    return float(out) if out.ndim == 0 else out


def _check_finite(out: np.ndarray, theta) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite derivative at theta={np.asarray(theta)}")
    return out


@dataclass(frozen=True)
class DispersionMeasure:
    """A convex, permutation-symmetric function of relative prices.

    Use :func:`neg_geometric_mean`, :func:`neg_ces` or :func:`custom` rather
    than building instances directly.
    """

    kind: str
    gamma: float | None = None
    func: Callable[[np.ndarray], float] | None = None
    label: str = ""

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "neg_ces":
            return f"neg_ces(gamma={self.gamma:g})"
        return self.kind

    @property
    def strictly_convex(self) -> bool:
        return self.kind == "neg_geometric_mean" or (self.kind == "neg_ces" and self.gamma < 1)

    def value(self, theta):
        if self.kind == "neg_geometric_mean":
            return -geometric_mean(theta)
        if self.kind == "neg_ces":
            return -ces_value(theta, self.gamma)
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 1:
            return float(self.func(theta))
        flat = theta.reshape(-1, theta.shape[-1])
        return np.array([self.func(t) for t in flat]).reshape(theta.shape[:-1])

    def gradient(self, theta) -> np.ndarray:
        if self.kind == "custom":
            return _map_rows(lambda t: tangent_gradient(self.func, t), theta)
        theta, lt = _log_theta(theta)
        n = theta.shape[-1]
        if self.kind == "neg_geometric_mean":
            g = np.exp(lt.mean(axis=-1, keepdims=True))
            return _check_finite(-g / (n * theta), theta)
        gam = self.gamma
        log_u = logsumexp(gam * lt, axis=-1, keepdims=True) / gam
        return _check_finite(-np.exp((gam - 1) * lt + (1 - gam) * log_u), theta)

    def hessian(self, theta) -> np.ndarray:
        if self.kind == "custom":
            return _map_rows(lambda t: tangent_hessian(self.func, t), theta, matrix=True)
        theta, lt = _log_theta(theta)
        n = theta.shape[-1]
        eye = np.eye(n)
        if self.kind == "neg_geometric_mean":
            g = np.exp(lt.mean(axis=-1))[..., None, None]
            inv = 1.0 / theta
            outer = inv[..., :, None] * inv[..., None, :]
            h = -g * outer / n**2 + g * eye * (inv**2)[..., None, :] / n
            return _check_finite(h, theta)
        gam = self.gamma
        # F_ij = (1-g) U / (theta_i theta_j) * (diag(w) - w w')_ij with CES weights w.
        # 1 - w_i is summed from the other weights so it survives w_i close to 1.
        z = gam * lt
        lse = logsumexp(z, axis=-1, keepdims=True)
        w = np.exp(z - lse)
        others = np.where(eye.astype(bool), -np.inf, z[..., None, :])
        rest = np.exp(logsumexp(others, axis=-1) - lse)
        cov = -w[..., :, None] * w[..., None, :]
        idx = np.arange(n)
        cov[..., idx, idx] = w * rest
        scale = (1 - gam) * np.exp(lse / gam)[..., None] / (theta[..., :, None] * theta[..., None, :])
        return _check_finite(scale * cov, theta)

    def __call__(self, theta):
        return self.value(theta)


def neg_geometric_mean() -> DispersionMeasure:
    return DispersionMeasure(kind="neg_geometric_mean")


def neg_ces(gamma: float) -> DispersionMeasure:
    return DispersionMeasure(kind="neg_ces", gamma=check_gamma(gamma))


def custom(func: Callable[[np.ndarray], float], label: str = "custom") -> DispersionMeasure:
    """Wrap a user value function defined on the simplex."""
    return DispersionMeasure(kind="custom", func=func, label=label)


def measure_from_name(name: str, gamma: float | None = None) -> DispersionMeasure:
    key = name.strip().lower()
    if key in ("neg_geometric_mean", "geometric", "g", "-g"):
        return neg_geometric_mean()
    if key in ("neg_ces", "ces", "u", "-u"):
        if gamma is None:
            raise ConfigError("neg_ces needs gamma")
        return neg_ces(gamma)
    raise ConfigError(f"unknown dispersion measure {name!r}")


def gradient(measure: DispersionMeasure, theta) -> np.ndarray:
    return measure.gradient(theta)


def hessian(measure: DispersionMeasure, theta) -> np.ndarray:
    return measure.hessian(theta)


def _map_rows(fn, theta, matrix=False):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        return fn(theta)
    flat = theta.reshape(-1, theta.shape[-1])
    out = np.stack([fn(t) for t in flat])
    return out.reshape(theta.shape + ((theta.shape[-1],) if matrix else ()))


def _tangent_basis(n: int) -> np.ndarray:
    return np.eye(n) - 1.0 / n


def tangent_gradient(f, theta, h: float = FD_STEP) -> np.ndarray:
    """Central differences of ``f`` along e_i - 1/N; perturbed points stay on the simplex."""
    theta = np.asarray(theta, dtype=float)
    d = _tangent_basis(theta.size)
    if np.any(theta <= 2 * h):
        raise DomainError("theta too close to the simplex boundary for finite differences")
    out = np.array([(f(theta + h * di) - f(theta - h * di)) / (2 * h) for di in d])
    return _check_finite(out, theta)


def tangent_hessian(f, theta, h: float = FD_STEP) -> np.ndarray:
    """Second-order central differences of ``f`` along simplex tangent directions."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    d = _tangent_basis(n)
    if np.any(theta <= 4 * h):
        raise DomainError("theta too close to the simplex boundary for finite differences")
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            a, b = h * d[i], h * d[j]
            v = f(theta + a + b) - f(theta + a - b) - f(theta - a + b) + f(theta - a - b)
            out[i, j] = out[j, i] = v / (4 * h * h)
    return _check_finite(out, theta)


def tangent_projection(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def check_convexity(measure: DispersionMeasure, theta, n_directions: int = 20, rng=None,
                    tol: float = 1e-10) -> float:
    """Spot-check convexity with random tangent quadratic forms.

    Returns the smallest observed ``0.5 v'Hv`` for unit tangent ``v``. A value
    below ``-tol`` triggers a ``RuntimeWarning``; it is not an error because
    only the drift non-negativity guarantee is lost.
    """
    rng = np.random.default_rng(rng)
    theta = np.asarray(theta, dtype=float)
    h = measure.hessian(theta)
    v = rng.standard_normal((n_directions, theta.size))
    v -= v.mean(axis=1, keepdims=True)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    q = 0.5 * np.einsum("ki,ij,kj->k", v, h, v)
    worst = float(q.min())
    if worst < -tol:
        warnings.warn(f"{measure.name} is not convex near theta={theta}: min 0.5 v'Hv = {worst:.3e}",
                      RuntimeWarning, stacklevel=2)
    return worst


@dataclass(frozen=True)
class OrderingReport:
    f_theta: float
    f_theta_prime: float
    holds: bool
    strict: bool


def ordering_hypothesis(theta, theta_prime, tol: float = 0.0) -> bool:
    """max(theta) > max(theta') and the vectors differ in at most two coordinates."""
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    if theta.shape != theta_prime.shape:
        return False
    differ = np.abs(theta - theta_prime) > tol
    return bool(theta.max() > theta_prime.max() and differ.sum() <= 2)


def check_dispersion_ordering(measure: DispersionMeasure, theta, theta_prime) -> OrderingReport:
    """Evaluate a measure at a pair where ``theta`` is the more dispersed point.

    Raises ``PreconditionError`` unless max(theta) > max(theta') and all but
    two coordinates coincide.
    """
    if not ordering_hypothesis(theta, theta_prime):
        raise PreconditionError("need max(theta) > max(theta') with all but two coordinates equal")
    a = float(measure.value(theta))
    b = float(measure.value(theta_prime))
    return OrderingReport(f_theta=a, f_theta_prime=b, holds=a >= b - 1e-12, strict=a > b)
