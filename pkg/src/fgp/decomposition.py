"""Drift estimation and the relative-return decomposition.

The drift increment over one step is the quadratic form
``0.5 * dtheta' H_F(theta) dtheta`` with the Hessian taken at the start of the
step. Its cumulative sum (scaled by ``-1/F`` for the log form) is the
"direct" drift. The "residual" drift is what is left of the cumulative
abnormal return after removing the change in dispersion; it satisfies the
decomposition identity exactly, and the direct-minus-residual gap measures
discretization error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dispersion import DispersionMeasure
from .errors import DataError, NumericError, PreconditionError

IDENTITY_TOL = 1e-12
_CHUNK = 4096


@dataclass(frozen=True)
class DriftIncrement:
    alpha: float
    adjusted: float
    date: pd.Timestamp | None = None


@dataclass(frozen=True)
class DecompositionSeries:
    """Aligned decomposition of a strategy's value relative to the market.

    For ``form == "log"``: ``abnormal`` is log(V_s/V_m) anchored at zero and
    ``dispersion`` is log(-F(theta)). For ``form == "additive"``: ``abnormal``
    is V_s/V_m minus its initial value and ``dispersion`` is -F(theta).
    In both cases ``abnormal = drift_residual + (dispersion - dispersion[0])``.
    """

    dates: pd.Index
    abnormal: np.ndarray
    dispersion: np.ndarray
    drift_residual: np.ndarray
    drift_direct: np.ndarray
    alpha: np.ndarray  # per-step drift increments, length T-1
    adjusted: np.ndarray  # per-step increments of the direct drift, length T-1
    form: str = "log"
    measure: str = ""
    skipped_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def gap(self) -> np.ndarray:
        return self.drift_direct - self.drift_residual

    def identity_error(self) -> float:
        """max |abnormal - (residual + dispersion change)| over all dates."""
        rhs = self.drift_residual + (self.dispersion - self.dispersion[0])
        return float(np.max(np.abs(self.abnormal - rhs)))

    def to_frame(self) -> pd.DataFrame:
        disp_col = "log_neg_F" if self.form == "log" else "neg_F"
        return pd.DataFrame(
            {
                "cum_abnormal": self.abnormal,
                disp_col: self.dispersion,
                "drift_residual": self.drift_residual,
                "drift_direct": self.drift_direct,
                "gap": self.gap,
            },
            index=pd.Index(self.dates, name="date"),
        )

    def to_csv(self, path_or_buf=None):
        df = self.to_frame()
        if isinstance(df.index, pd.DatetimeIndex):
            df.index = [d.strftime("%Y-%m-%d") if d == d.normalize() else d.isoformat() for d in df.index]
            df.index.name = "date"
        return df.to_csv(path_or_buf, float_format="%.17g", lineterminator="\n")


def realized_covariation(theta_series) -> np.ndarray:
    """Per-step outer products dtheta dtheta' of relative price increments, shape (T-1, N, N)."""
    theta = np.asarray(theta_series, dtype=float)
    if theta.ndim != 2 or theta.shape[0] < 2:
        raise DataError("need a (T, N) relative price series with at least two dates")
    d = np.diff(theta, axis=0)
    return d[:, :, None] * d[:, None, :]


def quadratic_drift(measure: DispersionMeasure, theta, dtheta) -> np.ndarray:
    """0.5 * dtheta' H(theta) dtheta for each row; Hessians evaluated in chunks."""
    theta = np.asarray(theta, dtype=float)
    dtheta = np.asarray(dtheta, dtype=float)
    if theta.ndim == 1:
        h = measure.hessian(theta)
        return 0.5 * float(dtheta @ h @ dtheta)
    out = np.empty(theta.shape[0])
    for s in range(0, theta.shape[0], _CHUNK):
        sl = slice(s, s + _CHUNK)
        h = measure.hessian(theta[sl])
        out[sl] = 0.5 * np.einsum("ti,tij,tj->t", dtheta[sl], h, dtheta[sl])
    return out


def drift_increment(measure: DispersionMeasure, theta, delta_theta, date=None) -> DriftIncrement:
    """Drift over a single step starting at ``theta``.

    ``adjusted`` is -alpha/F(theta) and requires F(theta) < 0.
    """
    theta = np.asarray(theta, dtype=float)
    delta_theta = np.asarray(delta_theta, dtype=float)
    end = theta + delta_theta
    for name, x in (("theta", theta), ("theta + delta_theta", end)):
        if not (np.all(x > 0) and abs(x.sum() - 1) <= 1e-9):
            raise PreconditionError(f"{name} is not in the simplex")
    alpha = quadratic_drift(measure, theta, delta_theta)
    f = float(measure.value(theta))
    if f == 0:
        raise NumericError("F(theta) = 0; adjusted drift undefined")
    return DriftIncrement(alpha=alpha, adjusted=-alpha / f, date=date)


def _segments(theta: np.ndarray) -> np.ndarray:
    """Boolean per step: True when the active asset set is unchanged across the step."""
    active = np.isfinite(theta)
    return np.all(active[1:] == active[:-1], axis=1)


def _step_drift(measure: DispersionMeasure, theta: np.ndarray):
    """Drift increments and dispersion values for a (T, N) series whose columns may switch on."""
    T = theta.shape[0]
    alpha = np.zeros(T - 1)
    f = np.empty(T)
    active = np.isfinite(theta)
    keep = _segments(theta)
    patterns, inverse = np.unique(active, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    for k, pattern in enumerate(patterns):
        rows = np.flatnonzero(inverse == k)
        th = theta[np.ix_(rows, pattern)]
        f[rows] = measure.value(th)
        steps = rows[rows < T - 1]
        steps = steps[keep[steps]]
        if steps.size:
            d = theta[np.ix_(steps + 1, pattern)] - theta[np.ix_(steps, pattern)]
            alpha[steps] = quadratic_drift(measure, theta[np.ix_(steps, pattern)], d)
    return alpha, f, np.flatnonzero(~keep)


def decompose_arrays(theta, log_relative, measure: DispersionMeasure, dates=None) -> DecompositionSeries:
    """Log-form decomposition from a relative price series and log(V_s/V_m).

    ``theta`` is (T, N) with NaN for assets not yet active. Steps across which
    the active set changes contribute no direct drift and are listed in
    ``skipped_steps``.
    """
    theta = np.asarray(theta, dtype=float)
    log_rel = np.asarray(log_relative, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != log_rel.shape[0]:
        raise DataError("theta and value series are misaligned")
    if theta.shape[0] < 1:
        raise DataError("empty series")
    alpha, f, skipped = _step_drift(measure, theta)
    if not np.all(f < 0):
        raise PreconditionError(f"log decomposition needs F < 0 on every date; max F = {f.max()}")
    adjusted = -alpha / f[:-1]
    abnormal = log_rel - log_rel[0]
    disp = np.log(-f)
    residual = abnormal - (disp - disp[0])
    direct = np.concatenate([[0.0], np.cumsum(adjusted)])
    series = DecompositionSeries(
        dates=pd.Index(range(len(f))) if dates is None else pd.Index(dates),
        abnormal=abnormal, dispersion=disp, drift_residual=residual, drift_direct=direct,
        alpha=alpha, adjusted=adjusted, form="log", measure=measure.name, skipped_steps=skipped,
    )
    _assert_identity(series)
    return series


def additive_decompose_arrays(theta, relative_value, measure: DispersionMeasure, dates=None) -> DecompositionSeries:
    """Additive decomposition from a relative price series and V_s/V_m."""
    theta = np.asarray(theta, dtype=float)
    ratio = np.asarray(relative_value, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != ratio.shape[0]:
        raise DataError("theta and value series are misaligned")
    alpha, f, skipped = _step_drift(measure, theta)
    abnormal = ratio - ratio[0]
    disp = -f
    residual = abnormal - (disp - disp[0])
    direct = np.concatenate([[0.0], np.cumsum(alpha)])
    series = DecompositionSeries(
        dates=pd.Index(range(len(f))) if dates is None else pd.Index(dates),
        abnormal=abnormal, dispersion=disp, drift_residual=residual, drift_direct=direct,
        alpha=alpha, adjusted=alpha.copy(), form="additive", measure=measure.name, skipped_steps=skipped,
    )
    _assert_identity(series)
    return series


def _assert_identity(series: DecompositionSeries) -> None:
    err = series.identity_error()
    if not err <= IDENTITY_TOL:
        raise NumericError(f"residual identity violated by {err:.3e}")


def _aligned_inputs(panel, v_s: pd.Series, v_m: pd.Series):
    if not isinstance(v_s, pd.Series) or not isinstance(v_m, pd.Series):
        raise DataError("value series must be pandas Series indexed by date")
    if not v_s.index.equals(v_m.index):
        raise DataError("strategy and market value series have different dates")
    rows = panel.dates.get_indexer(v_s.index)
    if np.any(rows < 0):
        raise DataError("value series contains dates not in the panel")
    x = panel.index[rows]
    theta = x / np.nansum(x, axis=1, keepdims=True)
    return theta, v_s.to_numpy(dtype=float), v_m.to_numpy(dtype=float)


def decompose(panel, measure: DispersionMeasure, v_s: pd.Series, v_m: pd.Series) -> DecompositionSeries:
    """Decompose log(V_s/V_m) into drift and dispersion change over a panel.

    Relative prices are taken over every asset active on each date.
    """
    theta, vs, vm = _aligned_inputs(panel, v_s, v_m)
    return decompose_arrays(theta, np.log(vs) - np.log(vm), measure, dates=v_s.index)


def additive_decompose(panel, measure: DispersionMeasure, v_s: pd.Series, v_m: pd.Series) -> DecompositionSeries:
    theta, vs, vm = _aligned_inputs(panel, v_s, v_m)
    return additive_decompose_arrays(theta, vs / vm, measure, dates=v_s.index)


@dataclass(frozen=True)
class ComponentStats:
    """Coefficients of variation of changes in the two decomposition components."""

    drift_cv: float
    dispersion_cv: float
    drift_var: float
    dispersion_var: float
    drift_mean_zero: bool
    dispersion_mean_zero: bool
    freq: str
    n_changes: int

    def as_dict(self) -> dict:
        return {
            "freq": self.freq, "n_changes": self.n_changes,
            "drift_cv": self.drift_cv, "dispersion_cv": self.dispersion_cv,
            "drift_var": self.drift_var, "dispersion_var": self.dispersion_var,
            "drift_mean_zero": self.drift_mean_zero, "dispersion_mean_zero": self.dispersion_mean_zero,
        }


def _cv(changes: np.ndarray) -> tuple[float, float, bool]:
    mean = changes.mean()
    sd = changes.std(ddof=1)
    var = float(sd**2)
    if mean == 0:
        return (0.0 if sd == 0 else float("inf")), var, True
    return float(sd / abs(mean)), var, False


def component_stats(series: DecompositionSeries, freq: str = "monthly") -> ComponentStats:
    """CV (sd / |mean|) of changes in residual drift and in the dispersion term.

    ``freq="monthly"`` samples both components on the last date of each
    calendar month before differencing; ``freq="step"`` uses every date.
    """
    if len(series.dates) < 3:
        raise DataError("need at least three dates")
    drift = pd.Series(series.drift_residual, index=series.dates)
    disp = pd.Series(series.dispersion, index=series.dates)
    if freq == "monthly":
        if not isinstance(series.dates, pd.DatetimeIndex):
            raise DataError("monthly sampling needs dated series")
        # keep the anchor date so the first month has a change
        month = series.dates.to_period("M")
        last = ~pd.Series(month).duplicated(keep="last").to_numpy()
        last[0] = True
        drift, disp = drift[last], disp[last]
    elif freq != "step":
        raise DataError(f"unknown frequency {freq!r}")
    dd = np.diff(drift.to_numpy())
    dp = np.diff(disp.to_numpy())
    if dd.size < 2:
        raise DataError("fewer than two changes at this frequency")
    cv_d, var_d, z_d = _cv(dd)
    cv_p, var_p, z_p = _cv(dp)
    return ComponentStats(drift_cv=cv_d, dispersion_cv=cv_p, drift_var=var_d, dispersion_var=var_p,
                          drift_mean_zero=z_d, dispersion_mean_zero=z_p, freq=freq, n_changes=int(dd.size))
