"""Price panel ingestion, index normalization and relative prices.

A panel is a dated grid of positive prices, one column per asset. Assets may
start trading after the first date; cells before an asset's entry are NaN.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError

DEFAULT_FILL_LIMIT = 5


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawPanel:
    """Raw price quotes, already gap-filled and validated."""

    dates: pd.DatetimeIndex
    assets: tuple[str, ...]
    prices: np.ndarray  # (T, N), NaN before entry
    entry: tuple[int, ...] = field(default=())  # row index of first quote per asset

    def __post_init__(self):
        object.__setattr__(self, "prices", _freeze(self.prices))
        if not self.entry:
            object.__setattr__(self, "entry", _entry_rows(self.prices))

    @property
    def values(self) -> np.ndarray:
        return self.prices

    @property
    def entry_dates(self) -> dict[str, pd.Timestamp]:
        return {a: self.dates[e] for a, e in zip(self.assets, self.entry)}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.prices, index=self.dates, columns=list(self.assets))


@dataclass(frozen=True)
class NormalizedPanel:
    """Normalized price indexes: equal on ``base_date``, raw log changes afterwards."""

    dates: pd.DatetimeIndex
    assets: tuple[str, ...]
    index: np.ndarray  # (T, N), NaN before entry
    base_date: pd.Timestamp
    entry: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "index", _freeze(self.index))
        if not self.entry:
            object.__setattr__(self, "entry", _entry_rows(self.index))

    @property
    def values(self) -> np.ndarray:
        return self.index

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def active(self, row: int) -> np.ndarray:
        """Boolean mask of assets whose entry row is at or before ``row``."""
        return np.asarray(self.entry) <= row

    def row(self, date) -> int:
        ts = pd.Timestamp(date)
        loc = self.dates.get_indexer([ts])[0]
        if loc < 0:
            raise DataError(f"date {ts.date()} not in panel")
        return int(loc)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.index, index=self.dates, columns=list(self.assets))

    def to_csv(self, path_or_buf=None) -> str | None:
        return write_panel(self, path_or_buf)


@dataclass(frozen=True)
class RelativePriceVector:
    """A point of the open simplex: relative prices of the active assets on one date."""

    theta: np.ndarray
    date: pd.Timestamp | None = None
    assets: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "theta", _freeze(self.theta))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.theta, dtype=dtype)

    def __len__(self):
        return len(self.theta)


def _entry_rows(values: np.ndarray) -> tuple[int, ...]:
    present = np.isfinite(values)
    if not present.any(axis=0).all():
        raise DataError("every asset needs at least one quote")
    return tuple(int(i) for i in present.argmax(axis=0))


def _parse_float(cell: str, date: str, asset: str) -> float:
    try:
        x = float(cell)
    except ValueError:
        raise DataError(f"unparseable number {cell!r} at date {date}, asset {asset}") from None
    if not np.isfinite(x):
        raise DataError(f"non-finite price {cell!r} at date {date}, asset {asset}")
    if x <= 0:
        raise DataError(f"non-positive price {x!r} at date {date}, asset {asset}")
    return x


def load_panel(source, fill_limit: int = DEFAULT_FILL_LIMIT) -> RawPanel:
    """Read a comma-separated price panel.

    The first column holds ISO-8601 dates, each further column one asset.
    Blank cells before an asset's first quote mean "not yet trading". Blank
    cells after entry are forward-filled when the run of blanks is at most
    ``fill_limit`` rows long; longer gaps reject the panel.

    Parameters
    ----------
    source : path, file-like or str
        A filesystem path or an open text buffer.
    fill_limit : int
        Longest run of missing post-entry quotes that is forward-filled.

    Raises
    ------
    DataError
        On unparseable dates or numbers, non-positive prices, non-increasing
        dates, or post-entry gaps longer than ``fill_limit``.
    """
    if isinstance(source, (str, os.PathLike)) and not (isinstance(source, str) and "\n" in source):
        with open(source, newline="") as fh:
            text = fh.read()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    try:
        df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as exc:
        raise DataError(f"malformed panel: {exc}") from None
    if df.shape[1] < 2:
        raise DataError("panel needs a date column and at least one asset column")

    date_col, *assets = list(df.columns)
    assets = [a.strip() for a in assets]
    if len(set(assets)) != len(assets):
        raise DataError("duplicate asset names in header")

    raw_dates = df[date_col].str.strip().tolist()
    cells = df.iloc[:, 1:].to_numpy()
    keep = [i for i in range(len(df)) if any(str(c).strip() for c in cells[i])]
    dates = []
    for i in keep:
        try:
            dates.append(pd.Timestamp(raw_dates[i]))
        except (ValueError, TypeError):
            raise DataError(f"unparseable date {raw_dates[i]!r} on line {i + 2}") from None
    dates = pd.DatetimeIndex(dates)
    if len(dates) == 0:
        raise DataError("panel has no quoted rows")
    bad = np.flatnonzero(np.diff(dates.asi8) <= 0)
    if bad.size:
        raise DataError(f"dates not strictly increasing at {dates[bad[0] + 1]}")

    prices = np.full((len(keep), len(assets)), np.nan)
    for r, i in enumerate(keep):
        for j, asset in enumerate(assets):
            c = str(cells[i, j]).strip()
            if c:
                prices[r, j] = _parse_float(c, raw_dates[i], asset)

    prices = _fill_gaps(prices, dates, assets, fill_limit)
    return RawPanel(dates=dates, assets=tuple(assets), prices=prices)


def _fill_gaps(prices: np.ndarray, dates, assets, fill_limit: int) -> np.ndarray:
    out = prices.copy()
    for j, asset in enumerate(assets):
        col = out[:, j]
        present = np.isfinite(col)
        if not present.any():
            raise DataError(f"asset {asset} has no quotes")
        start = int(present.argmax())
        run = 0
        for t in range(start + 1, len(col)):
            if np.isfinite(col[t]):
                run = 0
                continue
            run += 1
            if run > fill_limit:
                raise DataError(
                    f"gap of more than {fill_limit} missing quotes for asset {asset} "
                    f"ending after {dates[t].date()}"
                )
            col[t] = col[t - 1]
    return out


def normalize_panel(raw, base_date=None) -> NormalizedPanel:
    """Turn raw prices into comparable indexes.

    Assets trading on ``base_date`` start at index 1.0. An asset entering later
    starts at the exponential of the mean log index of the assets already
    present on its entry date. After that every index moves exactly like the
    raw price. Dates before ``base_date`` are dropped.

    Accepts a ``RawPanel`` or an already normalized panel (idempotent).
    """
    values = raw.values
    dates = raw.dates
    base = dates[0] if base_date is None else pd.Timestamp(base_date)
    b = dates.get_indexer([base])[0]
    if b < 0:
        raise DataError(f"base date {base.date()} not in panel")

    dates = dates[b:]
    values = values[b:]
    entry = np.array(_entry_rows(values))
    at_base = entry == 0
    if at_base.sum() < 2:
        raise DataError(f"fewer than two assets trade on base date {base.date()}")

    with np.errstate(invalid="ignore"):
        logp = np.log(values)
    logidx = np.full_like(logp, np.nan)
    logidx[:, at_base] = logp[:, at_base] - logp[0, at_base]

    # entrants in order of entry; same-day entrants only see earlier assets
    for e in np.unique(entry[~at_base]):
        newcomers = np.flatnonzero(entry == e)
        incumbents = entry < e
        level = logidx[e, incumbents].mean()
        for j in newcomers:
            logidx[e:, j] = logp[e:, j] - logp[e, j] + level

    return NormalizedPanel(
        dates=dates, assets=tuple(raw.assets), index=np.exp(logidx),
        base_date=base, entry=tuple(int(e) for e in entry),
    )


def relative_prices(panel: NormalizedPanel, date, assets: Sequence[str] | None = None) -> RelativePriceVector:
    """Relative prices index_i / sum_j index_j on ``date``.

    Without ``assets`` every panel asset must be active on ``date``. Pass an
    explicit subset to work with the assets that have entered so far.
    """
    row = panel.row(date)
    if assets is None:
        cols = np.arange(panel.n_assets)
        if not panel.active(row).all():
            missing = [a for a, on in zip(panel.assets, panel.active(row)) if not on]
            raise DataError(f"assets not yet active on {panel.dates[row].date()}: {missing}")
        names = panel.assets
    else:
        names = tuple(assets)
        pos = {a: i for i, a in enumerate(panel.assets)}
        try:
            cols = np.array([pos[a] for a in names])
        except KeyError as exc:
            raise DataError(f"unknown asset {exc.args[0]}") from None
        if not panel.active(row)[cols].all():
            raise DataError(f"requested asset inactive on {panel.dates[row].date()}")
    x = panel.index[row, cols]
    return RelativePriceVector(theta=x / x.sum(), date=panel.dates[row], assets=names)


def relative_price_matrix(panel: NormalizedPanel, rows: Iterable[int] | None = None) -> np.ndarray:
    """Relative prices on every row over the assets active on that row (NaN elsewhere)."""
    x = panel.index if rows is None else panel.index[np.asarray(list(rows))]
    return x / np.nansum(x, axis=1, keepdims=True)


def write_panel(panel, path_or_buf=None) -> str | None:
    """Write a panel in the ingestion format (empty cell = not yet trading)."""
    df = panel.to_frame()
    df.index = _format_dates(panel.dates)
    df.index.name = "date"
    return df.to_csv(path_or_buf, float_format="%.17g", lineterminator="\n")


def _format_dates(dates: pd.DatetimeIndex) -> list[str]:
    if (dates == dates.normalize()).all():
        return [d.strftime("%Y-%m-%d") for d in dates]
    return [d.isoformat() for d in dates]
