"""Synthetic markets of continuous semimartingale prices.

Log prices follow correlated Brownian motion with drift (geometric Brownian
motion in price), optionally with every log price pulled toward the
cross-sectional mean at rate ``kappa`` so that dispersion stays stationary.

Random numbers: ``numpy.random.SeedSequence(seed).spawn(n_assets)`` gives one
PCG64 stream per asset; asset ``i`` draws its standard normals from stream
``i`` only, and correlation is applied afterwards through a matrix square
root. Replication ``r`` of a batch uses ``SeedSequence([seed, r])`` as its
master sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .decomposition import quadratic_drift
from .dispersion import DispersionMeasure, neg_geometric_mean
from .errors import ConfigError
from .market_data import NormalizedPanel, write_panel
from .portfolio import generated_weights

REGIMES = ("iid_gbm", "mean_reverting_relative")
DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class SimConfig:
    """Parameters of a simulated market. Rates are annual."""

    n_assets: int = 10
    horizon_years: float = 30.0
    steps_per_year: int = 252
    drift: float | tuple[float, ...] = 0.0  # arithmetic GBM drift mu per asset
    vol: float | tuple[float, ...] = 0.3
    correlation: float | tuple[tuple[float, ...], ...] = 0.0  # scalar = constant pairwise
    seed: int = 0
    regime: str = "iid_gbm"
    kappa: float = 0.5
    start_date: str = "2000-01-01"

    def __post_init__(self):
        if int(self.n_assets) < 2:
            raise ConfigError("n_assets must be at least 2")
        if not self.horizon_years > 0:
            raise ConfigError("horizon_years must be positive")
        if int(self.steps_per_year) < 12:
            raise ConfigError("steps_per_year must be at least 12")
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.kappa < 0:
            raise ConfigError("kappa must be non-negative")
        if np.any(self.vols < 0):
            raise ConfigError("vol must be non-negative")
        self.corr_factor  # validates the correlation matrix

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_years * self.steps_per_year))

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_year

    def _per_asset(self, x, name) -> np.ndarray:
        a = np.broadcast_to(np.asarray(x, dtype=float), (self.n_assets,)) if np.ndim(x) == 0 else np.asarray(x, dtype=float)
        if a.shape != (self.n_assets,):
            raise ConfigError(f"{name} needs {self.n_assets} entries, got {a.size}")
        return a

    @property
    def drifts(self) -> np.ndarray:
        return self._per_asset(self.drift, "drift")

    @property
    def vols(self) -> np.ndarray:
        return self._per_asset(self.vol, "vol")

    @property
    def correlation_matrix(self) -> np.ndarray:
        n = self.n_assets
        if np.ndim(self.correlation) == 0:
            rho = float(self.correlation)
            return np.full((n, n), rho) + (1 - rho) * np.eye(n)
        c = np.asarray(self.correlation, dtype=float)
        if c.shape != (n, n):
            raise ConfigError(f"correlation matrix must be {n}x{n}, got {c.shape}")
        return c

    @property
    def corr_factor(self) -> np.ndarray:
        """L with L L' = correlation; raises ConfigError unless symmetric PSD with unit diagonal."""
        c = self.correlation_matrix
        if not np.allclose(c, c.T, atol=1e-12) or not np.allclose(np.diag(c), 1.0, atol=1e-12):
            raise ConfigError("correlation matrix must be symmetric with unit diagonal")
        try:
            return np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(c)
            if w.min() < -1e-10:
                raise ConfigError(f"correlation matrix is not positive semidefinite (min eigenvalue {w.min():.3g})") from None
            return v * np.sqrt(np.clip(w, 0, None))

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class SimPanel:
    """A simulated normalized panel with the configuration that produced it."""

    panel: NormalizedPanel
    config: SimConfig
    times: np.ndarray = field(repr=False)  # years since start

    @property
    def log_prices(self) -> np.ndarray:
        return np.log(self.panel.index)

    def to_csv(self, path_or_buf=None):
        return write_panel(self.panel, path_or_buf)


def _parse_value(key: str, text: str):
    text = text.strip()
    try:
        if key in ("n_assets", "steps_per_year", "seed"):
            return int(text)
        if key in ("horizon_years", "kappa"):
            return float(text)
        if key in ("regime", "start_date"):
            return text
        if key == "correlation" and ";" in text:
            return tuple(tuple(float(x) for x in row.split(",")) for row in text.split(";"))
        if key in ("drift", "vol", "correlation"):
            parts = [float(x) for x in text.split(",")]
            return parts[0] if len(parts) == 1 else tuple(parts)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key}") from None
    raise ConfigError(f"unknown simulation key {key!r}")


def parse_sim_config(text: str, **overrides) -> SimConfig:
    """Build a SimConfig from ``key = value`` lines.

    Keys are the SimConfig field names. ``drift`` and ``vol`` take one number
    or a comma-separated list; ``correlation`` takes one number (constant
    pairwise correlation) or rows separated by ``;``. ``#`` starts a comment.
    """
    kw = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"expected key = value, got {line!r}")
        key = key.strip()
        kw[key] = _parse_value(key, val)
    for key, val in overrides.items():
        kw[key] = _parse_value(key, val) if isinstance(val, str) else val
    return SimConfig(**kw)


def format_sim_config(config: SimConfig) -> str:
    lines = []
    for f in fields(config):
        v = getattr(config, f.name)
        if isinstance(v, tuple) and v and isinstance(v[0], tuple):
            v = ";".join(",".join(repr(x) for x in row) for row in v)
        elif isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def _seed_sequence(config: SimConfig, replication: int | None) -> np.random.SeedSequence:
    entropy = config.seed if replication is None else [config.seed, replication]
    return np.random.SeedSequence(entropy)


def standard_normals(config: SimConfig, n_steps: int, replication: int | None = None) -> np.ndarray:
    """Independent N(0,1) draws, shape (n_steps, n_assets), one stream per asset."""
    streams = _seed_sequence(config, replication).spawn(config.n_assets)
    return np.column_stack([np.random.Generator(np.random.PCG64(s)).standard_normal(n_steps) for s in streams])


def brownian_increments(config: SimConfig, steps_per_year: int | None = None,
                        replication: int | None = None) -> np.ndarray:
    """Correlated Brownian increments on the grid 1/steps_per_year, shape (n_steps, N)."""
    spy = config.steps_per_year if steps_per_year is None else int(steps_per_year)
    n = int(round(config.horizon_years * spy))
    z = standard_normals(config, n, replication)
    return (z @ config.corr_factor.T) * np.sqrt(1.0 / spy)


def coarsen(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` fine increments."""
    n, k = increments.shape
    if factor < 1 or n % factor:
        raise ConfigError(f"cannot aggregate {n} steps in blocks of {factor}")
    return increments.reshape(n // factor, factor, k).sum(axis=1)


def _dates(config: SimConfig, times: np.ndarray) -> pd.DatetimeIndex:
    start = pd.Timestamp(config.start_date)
    unit = "D" if config.steps_per_year <= 365 else "s"
    offsets = pd.to_timedelta(times * DAYS_PER_YEAR, unit="D").floor(unit)
    return pd.DatetimeIndex(start + offsets)


def simulate(config: SimConfig, increments: np.ndarray | None = None,
             replication: int | None = None) -> SimPanel:
    """Simulate a panel of price indexes starting at 1.0.

    iid_gbm uses exact GBM steps (mu - sigma^2/2) dt + sigma dW. The
    mean-reverting regime adds -kappa * dt * (x_i - mean_j x_j) to each log
    price step, evaluated at the start of the step.

    ``increments`` (correlated Brownian increments on this config's grid) may
    be supplied to share one path across grids; otherwise they are drawn from
    the configured seed.
    """
    dt = config.dt
    dw = brownian_increments(config, replication=replication) if increments is None else np.asarray(increments)
    if dw.shape != (config.n_steps, config.n_assets):
        raise ConfigError(f"increments must have shape {(config.n_steps, config.n_assets)}, got {dw.shape}")
    mu, sig = config.drifts, config.vols
    steps = (mu - 0.5 * sig**2) * dt + sig * dw
    if config.regime == "mean_reverting_relative" and config.kappa > 0:
        # the cross-sectional mean is unaffected by the pull; deviations follow an AR(1)
        mean_step = steps.mean(axis=1, keepdims=True)
        dev = lfilter([1.0], [1.0, -(1.0 - config.kappa * dt)], steps - mean_step, axis=0)
        mean = np.cumsum(mean_step, axis=0)
        # lfilter output is the deviation after the step; shift so x_0 = 0
        logp = np.vstack([np.zeros(config.n_assets), mean + dev])
    else:
        logp = np.vstack([np.zeros(config.n_assets), np.cumsum(steps, axis=0)])
    times = np.arange(config.n_steps + 1) * dt
    dates = _dates(config, times)
    panel = NormalizedPanel(
        dates=dates, assets=tuple(f"A{i:02d}" for i in range(config.n_assets)),
        index=np.exp(logp), base_date=dates[0],
    )
    return SimPanel(panel=panel, config=config, times=times)


def replicate(config: SimConfig, n: int) -> list[SimPanel]:
    """``n`` independent panels; replication r is seeded by (config.seed, r)."""
    return [simulate(config, replication=r) for r in range(n)]


# -- convergence of the decomposition under per-step rebalancing ---------------

def per_step_log_relative(theta: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """log(V_s/V_m) for a strategy rebalanced to ``weights`` at every step of a closed market.

    Over one step the strategy grows by sum_i w_i p_i'/p_i and the market by
    sum_i theta_i p_i'/p_i, so their ratio grows by sum_i w_i theta_i'/theta_i.
    """
    growth = np.sum(weights[:-1] * theta[1:] / theta[:-1], axis=1)
    return np.concatenate([[0.0], np.cumsum(np.log(growth))])


def per_step_additive_relative(theta: np.ndarray, measure: DispersionMeasure) -> np.ndarray:
    """V_s/V_m for the additive strategy rebalanced every step, starting at 1.

    The ratio moves by sum_i s_i dtheta_i. The shares are a common term plus
    V_s/V_m, and sum_i dtheta_i = 0, so only -sum_i F_i dtheta_i remains and
    the path is a cumulative sum.
    """
    grad = np.asarray(measure.gradient(theta[:-1]))
    d = np.diff(theta, axis=0)
    return np.concatenate([[1.0], 1.0 - np.cumsum(np.sum(grad * d, axis=1))])


def _gaps_for_path(theta: np.ndarray, measure: DispersionMeasure) -> dict:
    f = np.asarray(measure.value(theta))
    d = np.diff(theta, axis=0)
    alpha = quadratic_drift(measure, theta[:-1], d)

    w = np.array([generated_weights(measure, t) for t in theta[:-1]]) if measure.kind == "custom" \
        else _vector_generated_weights(measure, theta[:-1])
    w = np.vstack([w, w[-1:]])
    log_rel = per_step_log_relative(theta, w)
    disp = np.log(-f)
    gap_log = np.concatenate([[0.0], np.cumsum(-alpha / f[:-1])]) - (log_rel - (disp - disp[0]))

    ratio = per_step_additive_relative(theta, measure)
    gap_add = np.concatenate([[0.0], np.cumsum(alpha)]) - ((ratio - 1.0) + f - f[0])
    return {
        "gap_terminal": abs(gap_log[-1]), "gap_max": np.abs(gap_log).max(),
        "additive_gap_terminal": abs(gap_add[-1]), "additive_gap_max": np.abs(gap_add).max(),
    }


def _vector_generated_weights(measure: DispersionMeasure, theta: np.ndarray) -> np.ndarray:
    grad = measure.gradient(theta)
    f = np.asarray(measure.value(theta))[:, None]
    centred = grad - np.sum(theta * grad, axis=1, keepdims=True)
    w = theta * (1.0 + centred / f)
    return w / w.sum(axis=1, keepdims=True)


def convergence_study(config: SimConfig, step_list: Sequence[int], measure: DispersionMeasure | None = None,
                      n_paths: int = 64) -> pd.DataFrame:
    """Direct-versus-residual drift gap as the rebalancing step shrinks.

    ``step_list`` holds steps per year in increasing order (decreasing step
    size); each must divide the finest. For each of ``n_paths`` replications
    the Brownian increments are drawn once on the finest grid and summed for
    coarser grids, so every grid sees the same path. The strategy generated by
    ``measure`` (default minus the geometric mean) and the additive strategy
    are rebalanced at every step.

    Returns one row per grid with the mean over paths of the terminal and the
    maximum absolute gap, for the log and additive identities, and the ratio
    of each terminal gap to the next finer one.
    """
    steps = [int(s) for s in step_list]
    if len(steps) < 1 or any(b <= a for a, b in zip(steps, steps[1:])):
        raise ConfigError("step_list must be strictly increasing steps per year")
    finest = steps[-1]
    if any(finest % s for s in steps):
        raise ConfigError(f"every grid in {steps} must divide the finest grid {finest}")
    measure = neg_geometric_mean() if measure is None else measure
    fine_cfg = config.with_(steps_per_year=finest)
    for s in steps:
        if abs(config.horizon_years * s - round(config.horizon_years * s)) > 1e-9:
            raise ConfigError(f"horizon {config.horizon_years} is not a whole number of steps at {s}/year")

    records = {s: [] for s in steps}
    for r in range(n_paths):
        fine = brownian_increments(fine_cfg, replication=r)
        for s in steps:
            cfg = config.with_(steps_per_year=s)
            sim = simulate(cfg, increments=coarsen(fine, finest // s))
            x = sim.panel.index
            records[s].append(_gaps_for_path(x / x.sum(axis=1, keepdims=True), measure))

    rows = []
    for s in steps:
        df = pd.DataFrame(records[s])
        rows.append({"steps_per_year": s, "dt": 1.0 / s, **df.mean().to_dict()})
    table = pd.DataFrame(rows)
    for col in ("gap_terminal", "additive_gap_terminal"):
        table[f"{col}_ratio"] = table[col] / table[col].shift(-1)
    return table
