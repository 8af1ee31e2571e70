"""Self-financing backtests and the monthly performance report.

The market portfolio holds the same number of shares of every active asset,
so its weights are the relative prices. When an asset enters the panel the
market buys it at its index level, funded by selling the incumbents
pro rata, which keeps the market value continuous. Weighted strategies only
add an entrant at their next rebalance.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dispersion import check_convexity
from .errors import ConfigError, DataError
from .market_data import NormalizedPanel
from .portfolio import StrategySpec

VALUE_TOL = 1e-10


@dataclass
class BacktestResult:
    """Value path of one strategy next to the market it is measured against."""

    name: str
    spec: StrategySpec
    value: pd.Series
    market_value: pd.Series
    weights: pd.DataFrame  # post-trade weights, one row per rebalance date
    shares: pd.DataFrame  # post-trade shares, one row per rebalance date
    pre_weights: pd.DataFrame  # weights just before each trade
    turnover: pd.Series  # one-way turnover 0.5 * sum |w_post - w_pre|
    rebalance_jump: pd.Series = field(default=None)  # |V after trade - V before| / V

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.value.index

    @property
    def relative_log(self) -> pd.Series:
        return np.log(self.value) - np.log(self.market_value)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "value": self.value, "market_value": self.market_value, "relative_log": self.relative_log,
        })


def rebalance_rows(dates: pd.DatetimeIndex, schedule: str) -> np.ndarray:
    """Row numbers of rebalance dates: first trading date of each month, every row, or none."""
    if schedule == "step":
        return np.arange(len(dates))
    if schedule == "monthly":
        month = dates.to_period("M")
        return np.flatnonzero(~pd.Series(month).duplicated().to_numpy())
    if schedule == "none":
        return np.zeros(0, dtype=int)
    raise ConfigError(f"unknown rebalance schedule {schedule!r}")


def _burn_in_end(start: pd.Timestamp, years: float) -> pd.Timestamp:
    if years < 0:
        raise ConfigError("burn-in must be non-negative")
    whole = int(np.floor(years))
    return start + pd.DateOffset(years=whole) + pd.Timedelta(days=(years - whole) * 365.25)


def formation_row(panel: NormalizedPanel, strategy: StrategySpec, burn_in_years: float) -> int:
    end = _burn_in_end(panel.dates[0], burn_in_years)
    rows = rebalance_rows(panel.dates, strategy.rebalance if strategy.rebalance != "none" else "step")
    rows = rows[panel.dates[rows] >= end]
    if rows.size == 0 or rows[0] >= len(panel.dates) - 1:
        raise DataError(f"panel ending {panel.dates[-1].date()} is not longer than the {burn_in_years}-year burn-in")
    return int(rows[0])


def market_path(panel: NormalizedPanel, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Market value from row ``start`` (equal to the sum of active indexes there) and shares held per row."""
    x = panel.index[start:]
    active = np.isfinite(x)
    x0 = np.where(active, x, 0.0)
    total = x0.sum(axis=1)
    scale = np.ones(len(x))
    # scale changes only when the active set grows
    grow = np.flatnonzero(np.any(active[1:] & ~active[:-1], axis=1)) + 1
    c = 1.0
    for g in grow:
        old = active[g - 1]
        value_before = c * x0[g, old].sum()
        c = value_before / total[g]
        scale[g:] = c
    return scale * total, scale


def run_backtest(panel: NormalizedPanel, strategy: StrategySpec, burn_in_years: float = 5.0) -> BacktestResult:
    """Run one self-financing strategy from the first rebalance date after burn-in.

    The strategy starts with the market's value. Between rebalances the share
    counts are fixed; at a rebalance the current value is reallocated to the
    strategy's target weights over the assets active on that date.
    """
    start = formation_row(panel, strategy, burn_in_years)
    dates = panel.dates[start:]
    x = panel.index[start:]
    vm, mscale = market_path(panel, start)
    T, N = x.shape

    if strategy.kind == "market":
        rows = rebalance_rows(dates, strategy.rebalance)
        shares = pd.DataFrame(np.where(np.isfinite(x[rows]), mscale[rows, None], 0.0), index=dates[rows],
                              columns=panel.assets)
        w = np.where(np.isfinite(x[rows]), x[rows], 0.0)
        w = pd.DataFrame(w / w.sum(axis=1, keepdims=True), index=dates[rows], columns=panel.assets)
        zeros = pd.Series(0.0, index=dates[rows])
        return BacktestResult(strategy.name, strategy, pd.Series(vm, index=dates), pd.Series(vm, index=dates),
                              w, shares, w.copy(), zeros, zeros.copy())

    rows = rebalance_rows(dates, strategy.rebalance)
    if rows.size == 0 or rows[0] != 0:
        rows = np.concatenate([[0], rows[rows > 0]])
    bounds = np.append(rows, T)

    if strategy.kind in ("generated", "additive") and strategy.measure.kind == "custom":
        t0 = x[0][np.isfinite(x[0])]
        check_convexity(strategy.measure, t0 / t0.sum(), rng=0)

    value = np.empty(T)
    s = np.zeros(N)
    w_post = np.zeros((len(rows), N))
    w_pre = np.zeros((len(rows), N))
    s_post = np.zeros((len(rows), N))
    jump = np.zeros(len(rows))
    for k, r in enumerate(rows):
        price = x[r]
        active = np.isfinite(price)
        held = np.where(active, price, 0.0)
        if np.any((s != 0) & ~active):
            raise DataError(f"strategy holds assets inactive on {dates[r].date()}")
        v = vm[0] if k == 0 else float(s @ held)
        if not v > 0:
            raise DataError(f"non-positive strategy value {v} on {dates[r].date()}")
        theta = held[active] / held[active].sum()
        target = strategy.target_weights(theta, v / vm[r])
        w_full = np.zeros(N)
        w_full[active] = target
        w_pre[k] = s * held / v if k else w_full
        s = np.where(active, w_full * v / np.where(active, price, 1.0), 0.0)
        v_after = float(s @ held)
        jump[k] = abs(v_after - v) / v
        w_post[k] = w_full
        s_post[k] = s

        seg = slice(r, bounds[k + 1])
        block = x[seg]
        held_block = np.where(np.isfinite(block), block, 0.0)
        if np.any(np.isnan(block[:, s != 0])):
            raise DataError("held asset lost its quote")
        value[seg] = held_block @ s
        if not np.all(value[seg] > 0):
            raise DataError(f"strategy value became non-positive after {dates[r].date()}")
        value[r] = v  # the trade preserves value; store the pre-trade figure

    if jump.max(initial=0.0) > VALUE_TOL:
        warnings.warn(f"rebalance changed value by up to {jump.max():.2e}", RuntimeWarning, stacklevel=2)

    idx = dates[rows]
    cols = list(panel.assets)
    return BacktestResult(
        name=strategy.name, spec=strategy,
        value=pd.Series(value, index=dates), market_value=pd.Series(vm, index=dates),
        weights=pd.DataFrame(w_post, index=idx, columns=cols),
        shares=pd.DataFrame(s_post, index=idx, columns=cols),
        pre_weights=pd.DataFrame(w_pre, index=idx, columns=cols),
        turnover=pd.Series(0.5 * np.abs(w_post - w_pre).sum(axis=1), index=idx),
        rebalance_jump=pd.Series(jump, index=idx),
    )


def run_backtests(panel: NormalizedPanel, strategies, burn_in_years: float = 5.0) -> dict[str, BacktestResult]:
    return {s.name: run_backtest(panel, s, burn_in_years) for s in strategies}


def values_frame(results: dict[str, BacktestResult]) -> pd.DataFrame:
    """Value paths side by side with the market in the first column."""
    first = next(iter(results.values()))
    out = {"market": first.market_value}
    for name, res in results.items():
        if name != "market":
            out[name] = res.value
    return pd.DataFrame(out)


# -- performance statistics -----------------------------------------------------

def monthly_returns(value: pd.Series) -> pd.Series:
    """Simple returns between month-end values.

    The first month runs from the initial value; it is dropped when the
    initial value is its only observation.
    """
    month = value.index.to_period("M")
    month_end = value.groupby(month).last()
    prev = month_end.shift(1)
    prev.iloc[0] = value.iloc[0]
    out = month_end / prev - 1.0
    if np.sum(month == month[0]) == 1 and len(out) > 1:
        out = out.iloc[1:]
    return out


def _period_bounds(months: pd.PeriodIndex, boundaries) -> list[tuple[str, pd.Period, pd.Period]]:
    first, last = months[0], months[-1]
    full = [(f"{first.year}-{last.year}", first, last)]
    if boundaries is None:
        boundaries = [y for y in range(10 * (first.year // 10 + 1), last.year + 1, 10)]
    edges = sorted(int(b) for b in boundaries if first.year < int(b) <= last.year)
    starts = [first] + [pd.Period(f"{b}-01", "M") for b in edges]
    ends = [pd.Period(f"{b - 1}-12", "M") for b in edges] + [last]
    labels = [f"{s.year}-{e.year + 1 if i < len(edges) else e.year}" for i, (s, e) in enumerate(zip(starts, ends))]
    if not edges:
        return full
    return full + list(zip(labels, starts, ends))


def _ann_stats(r: pd.Series) -> tuple[float, float]:
    mean = 12.0 * r.mean()
    sd = float(np.sqrt(12.0) * r.std(ddof=1)) if len(r) > 1 else float("nan")
    return float(mean), sd


def _sharpe(mean: float, sd: float) -> tuple[float, str]:
    if not np.isfinite(sd):
        return float("nan"), "undefined"
    if sd <= 1e-12 * max(1.0, abs(mean)):
        if abs(mean) <= 1e-12:
            return float("nan"), "undefined"
        return float(np.sign(mean) * np.inf), "infinite"
    return mean / sd, ""


@dataclass
class PerformanceReport:
    """Annualized monthly statistics per strategy and sub-period.

    ``absolute`` has columns sample, period, strategy, ann_mean, ann_sd,
    corr_market, n_months, flag. ``relative`` (strategy minus market) has
    columns sample, period, strategy, ann_mean, ann_sd, sharpe, n_months, flag.
    """

    absolute: pd.DataFrame
    relative: pd.DataFrame

    def to_json(self, path=None) -> str:
        def records(df):
            return json.loads(df.to_json(orient="records", double_precision=15))
        text = json.dumps({"absolute": records(self.absolute), "relative": records(self.relative)},
                          indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_text(self) -> str:
        """Plain-text tables: mean% (sd) per period and strategy, then relative returns with Sharpe ratios."""
        def cell(m, s):
            return f"{100 * m:6.2f}% ({100 * s:5.2f})"

        lines = ["Annualized average and standard deviation of monthly returns"]
        strategies = list(dict.fromkeys(self.absolute["strategy"]))
        lines.append(f"{'period':<11}" + "".join(f"{s:>22}" for s in strategies))
        for (_, period), grp in self.absolute.groupby(["sample", "period"], sort=False):
            g = grp.set_index("strategy")
            lines.append(f"{period:<11}" + "".join(f"{cell(g.at[s, 'ann_mean'], g.at[s, 'ann_sd']):>22}" for s in strategies))
        lines.append("")
        lines.append("Relative to market: annualized average (sd) and Sharpe ratio")
        rel = list(dict.fromkeys(self.relative["strategy"]))
        lines.append(f"{'period':<11}" + "".join(f"{s:>30}" for s in rel))
        for (_, period), grp in self.relative.groupby(["sample", "period"], sort=False):
            g = grp.set_index("strategy")
            parts = []
            for s in rel:
                sh = g.at[s, "sharpe"]
                sh_txt = f"{sh:6.2f}" if np.isfinite(sh) else f"{g.at[s, 'flag'] or 'n/a':>6}"
                parts.append(f"{cell(g.at[s, 'ann_mean'], g.at[s, 'ann_sd'])} {sh_txt}")
            lines.append(f"{period:<11}" + "".join(f"{p:>30}" for p in parts))
        return "\n".join(lines) + "\n"


def performance_report(results: dict[str, BacktestResult], sub_periods=None) -> PerformanceReport:
    """Tables of annualized monthly return statistics.

    Annualized mean is 12 x the monthly mean and annualized sd is sqrt(12) x
    the monthly sample sd. The relative Sharpe ratio divides the annualized
    mean of (strategy - market) monthly simple returns by their annualized sd;
    no risk-free rate is subtracted. ``sub_periods`` are boundary years; by
    default the decade years inside the sample. The first rows cover the
    whole sample (``sample == "full"``, labelled first-last year); sub-periods
    are labelled like ``1980-1990`` for January 1980 through December 1989,
    and the last one ends with the final year of data. Periods shorter than
    twelve months are kept and flagged.
    """
    if not results:
        raise DataError("no backtest results")
    first = next(iter(results.values()))
    market = monthly_returns(first.market_value)
    rets = {"market": market}
    for name, res in results.items():
        if name == "market":
            continue
        if not res.market_value.index.equals(first.market_value.index):
            raise DataError(f"strategy {name} was run over a different date range")
        rets[name] = monthly_returns(res.value)

    abs_rows, rel_rows = [], []
    for k, (label, lo, hi) in enumerate(_period_bounds(market.index, sub_periods)):
        sample = "full" if k == 0 else "sub"
        sel = (market.index >= lo) & (market.index <= hi)
        n = int(sel.sum())
        short = "short" if n < 12 else ""
        m_r = market[sel]
        for name, r in rets.items():
            r = r[sel]
            mean, sd = _ann_stats(r)
            corr = float(np.corrcoef(r, m_r)[0, 1]) if n > 1 and r.std() > 0 and m_r.std() > 0 else float("nan")
            if name == "market":
                corr = 1.0
            abs_rows.append({"sample": sample, "period": label, "strategy": name, "ann_mean": mean, "ann_sd": sd,
                             "corr_market": corr, "n_months": n, "flag": short})
            if name == "market":
                continue
            diff = r - m_r
            mean, sd = _ann_stats(diff)
            sharpe, flag = _sharpe(mean, sd)
            rel_rows.append({"sample": sample, "period": label, "strategy": name, "ann_mean": mean, "ann_sd": sd,
                             "sharpe": sharpe, "n_months": n, "flag": ",".join(filter(None, [short, flag]))})
    rel_cols = ["sample", "period", "strategy", "ann_mean", "ann_sd", "sharpe", "n_months", "flag"]
    return PerformanceReport(absolute=pd.DataFrame(abs_rows), relative=pd.DataFrame(rel_rows, columns=rel_cols))
