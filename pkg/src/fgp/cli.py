"""Command-line front end: simulate, normalize, backtest, decompose, report.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` file whose
keys are the long flag names with dashes replaced by underscores
(``burn_in_years = 5``). Command-line flags override file values. For
``simulate`` the file may also hold simulation keys (``n_assets``, ``vol``,
``correlation``, ...; see ``fgp.simulator.parse_sim_config``).

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import pandas as pd

from .backtest import performance_report, run_backtests, values_frame
from .decomposition import additive_decompose, component_stats, decompose
from .errors import ConfigError, DataError, DomainError, NumericError, PreconditionError
from .market_data import load_panel, normalize_panel, write_panel
from .portfolio import parse_strategy
from .simulator import SimConfig, convergence_study, parse_sim_config, simulate

DEFAULT_STRATEGIES = ("market", "equal", "ces:gamma=-0.5")
SIM_KEYS = {f.name for f in fields(SimConfig)}
LIST_KEYS = {"strategy", "set"}


def _file_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", name).strip("_")


def _read_config(path: str | None) -> tuple[dict, list[str]]:
    """Split a key-value file into CLI defaults and raw simulation lines."""
    if path is None:
        return {}, []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    opts, sim = {}, []
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, val = body.partition("=")
        if not sep:
            raise ConfigError(f"expected key = value in {path}, got {body!r}")
        key, val = key.strip().replace("-", "_"), val.strip()
        if key in SIM_KEYS:
            sim.append(f"{key} = {val}")
        elif key in LIST_KEYS:
            opts.setdefault(key, []).append(val)
        else:
            opts[key] = val
    return opts, sim


def _merge(args: argparse.Namespace, opts: dict) -> None:
    for key, val in opts.items():
        if not hasattr(args, key):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        if getattr(args, key) in (None, []):
            setattr(args, key, val)


def _float(value, name: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None


def _int_list(value, name: str) -> list[int] | None:
    if value is None:
        return None
    try:
        return [int(v) for v in str(value).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name} must be a comma-separated list of integers, got {value!r}") from None


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required")


def _panel(args):
    try:
        raw = load_panel(args.input)
    except OSError as exc:
        raise DataError(f"cannot read panel {args.input}: {exc.strerror}") from None
    return normalize_panel(raw, args.base_date)


def _strategies(args):
    texts = args.strategy or list(DEFAULT_STRATEGIES)
    rebalance = args.rebalance or "monthly"
    specs = [parse_strategy(t, rebalance=rebalance) for t in texts]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate strategies {names}")
    return specs


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df = df.copy()
    if isinstance(df.index, pd.DatetimeIndex):
        df.index = [d.strftime("%Y-%m-%d") if d == d.normalize() else d.isoformat() for d in df.index]
        df.index.name = "date"
    df.to_csv(path, float_format="%.17g", lineterminator="\n")


def cmd_simulate(args) -> int:
    opts, sim_lines = _read_config(args.config)
    _merge(args, opts)
    _require(args, "output")
    overrides = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = val.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    config = parse_sim_config("\n".join(sim_lines), **overrides)
    out = Path(args.output)
    steps = _int_list(args.steps, "steps")
    if steps:
        paths = int(_float(args.paths or 64, "paths"))
        table = convergence_study(config, steps, n_paths=paths)
        table.to_csv(out, index=False, float_format="%.17g", lineterminator="\n")
    else:
        simulate(config).to_csv(out)
    return 0


def cmd_normalize(args) -> int:
    opts, _ = _read_config(args.config)
    _merge(args, opts)
    _require(args, "input", "output")
    write_panel(_panel(args), args.output)
    return 0


def _run(args):
    panel = _panel(args)
    specs = _strategies(args)
    burn = _float(args.burn_in_years if args.burn_in_years is not None else 5.0, "burn-in-years")
    return panel, specs, run_backtests(panel, specs, burn)


def cmd_backtest(args) -> int:
    opts, _ = _read_config(args.config)
    _merge(args, opts)
    _require(args, "input", "output")
    panel, specs, results = _run(args)
    out = _outdir(args.output)
    _write_csv(values_frame(results), out / "values.csv")
    for name, res in results.items():
        _write_csv(res.weights, out / f"weights_{_file_name(name)}.csv")
    turnover = pd.DataFrame({name: res.turnover for name, res in results.items()})
    _write_csv(turnover, out / "turnover.csv")
    x = np.log(panel.index)
    _write_csv(pd.DataFrame(x - np.nanmean(x, axis=1, keepdims=True), index=panel.dates, columns=panel.assets),
               out / "relative_log_prices.csv")
    return 0


def cmd_decompose(args) -> int:
    opts, _ = _read_config(args.config)
    _merge(args, opts)
    _require(args, "input", "output")
    panel, specs, results = _run(args)
    out = _outdir(args.output)
    stats = {}
    for spec in specs:
        if spec.kind == "market":
            continue
        res = results[spec.name]
        measure = spec.dispersion()
        if spec.kind == "additive":
            series = additive_decompose(panel, measure, res.value, res.market_value)
        else:
            series = decompose(panel, measure, res.value, res.market_value)
        series.to_csv(out / f"decomposition_{_file_name(spec.name)}.csv")
        stats[spec.name] = {
            "measure": measure.name, "form": series.form,
            "identity_error": series.identity_error(),
            "terminal_gap": float(series.gap[-1]),
            "skipped_steps": int(series.skipped_steps.size),
            "monthly": component_stats(series, "monthly").as_dict(),
        }
    (out / "component_stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return 0


def asset_table(panel) -> pd.DataFrame:
    """Start date and annualized mean / sd of log index changes per asset."""
    years = (panel.dates[-1] - panel.dates[0]).days / 365.25
    per_year = (len(panel.dates) - 1) / years if years > 0 else float("nan")
    d = np.diff(np.log(panel.index), axis=0)
    rows = []
    for j, asset in enumerate(panel.assets):
        x = d[:, j][np.isfinite(d[:, j])]
        rows.append({
            "asset": asset, "start_date": panel.dates[panel.entry[j]].strftime("%Y-%m-%d"),
            "ann_mean_log_change": float(per_year * x.mean()) if x.size else float("nan"),
            "ann_sd_log_change": float(np.sqrt(per_year) * x.std(ddof=1)) if x.size > 1 else float("nan"),
        })
    return pd.DataFrame(rows)


def cmd_report(args) -> int:
    opts, _ = _read_config(args.config)
    _merge(args, opts)
    _require(args, "input", "output")
    panel, specs, results = _run(args)
    periods = _int_list(args.periods, "periods")
    report = performance_report(results, periods)
    out = _outdir(args.output)
    asset_table(panel).to_csv(out / "table1_assets.csv", index=False, float_format="%.17g", lineterminator="\n")
    report.absolute.to_csv(out / "table2_returns.csv", index=False, float_format="%.17g", lineterminator="\n")
    report.relative.to_csv(out / "table3_relative.csv", index=False, float_format="%.17g", lineterminator="\n")
    report.to_json(out / "report.json")
    text = report.to_text()
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fgp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, panel_input=True):
        sp.add_argument("--config", help="flat key = value file; flags override it")
        sp.add_argument("--output", help="output file or directory")
        if panel_input:
            sp.add_argument("--input", help="price panel CSV (date column + one column per asset)")
            sp.add_argument("--base-date", dest="base_date", help="normalization date (default: first date)")

    s = sub.add_parser("simulate", help="simulate a panel, or a convergence table with --steps")
    common(s, panel_input=False)
    s.add_argument("--seed", type=int)
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="simulation parameter")
    s.add_argument("--steps", help="steps per year for a convergence study, e.g. 252,504,1008,2016")
    s.add_argument("--paths", help="Monte Carlo paths for the convergence study (default 64)")
    s.set_defaults(func=cmd_simulate)

    n = sub.add_parser("normalize", help="normalize raw prices into equal-start indexes")
    common(n)
    n.set_defaults(func=cmd_normalize)

    for name, func, help_ in (
        ("backtest", cmd_backtest, "run self-financing strategies"),
        ("decompose", cmd_decompose, "decompose relative returns into drift and dispersion"),
        ("report", cmd_report, "annualized performance tables"),
    ):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        sp.add_argument("--strategy", action="append", default=[],
                        help="market | equal | ces:gamma=G | generated:measure=M[,gamma=G] | additive:... (repeatable)")
        sp.add_argument("--burn-in-years", dest="burn_in_years", help="years before forming portfolios (default 5)")
        sp.add_argument("--rebalance", choices=["monthly", "step", "none"])
        sp.add_argument("--seed", type=int, help="accepted for config symmetry; backtests are deterministic")
        if name == "report":
            sp.add_argument("--periods", help="sub-period boundary years, e.g. 1980,1990,2000,2010")
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fgp {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, DomainError, PreconditionError, NumericError) as exc:
        print(f"fgp {args.command}: data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
