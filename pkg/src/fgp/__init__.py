"""Portfolios generated by measures of relative price dispersion.

Strategies whose value relative to the market splits into a non-negative
drift and the change in a convex dispersion measure of relative prices, with
tools to estimate the drift, check the split on simulated and real panels,
and report performance.
"""
from .backtest import BacktestResult, PerformanceReport, performance_report, run_backtest, run_backtests
from .decomposition import (
    ComponentStats, DecompositionSeries, DriftIncrement, additive_decompose, component_stats,
    decompose, drift_increment, realized_covariation,
)
from .dispersion import (
    DispersionMeasure, ces_value, log_ces_value, check_dispersion_ordering, custom, geometric_mean,
    gradient, hessian, neg_ces, neg_geometric_mean,
)
from .errors import ConfigError, DataError, DomainError, NumericError, PreconditionError
from .market_data import NormalizedPanel, RawPanel, RelativePriceVector, load_panel, normalize_panel, relative_prices
from .portfolio import (
    StrategySpec, additive_shares, ces_weights, equal_shares, equal_weights, generated_shares,
    generated_weights, market_weights, parse_strategy, weights_from_shares,
)
from .simulator import SimConfig, SimPanel, convergence_study, simulate

__version__ = "0.1.0"
