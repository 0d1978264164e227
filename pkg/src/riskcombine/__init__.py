"""Produce, combine and evaluate one-day-ahead VaR and ES forecasts."""

from .core import (DataError, ForecastPair, ForecastPool, NativeDist, ReturnSeries, describe,
                   load_pool, load_returns, save_pool, save_returns, spacing_of)
from .score import AL, VARIANTS, ScoreSpec, average_score, joint_score

__version__ = "0.1.0"
