"""Historical simulation, Gaussian window and EWMA forecasters."""

from __future__ import annotations

import logging
import math

import numpy as np

from ..core import ForecastPair, NativeDist, check_alpha
from ..dist import gaussian_var_es

log = logging.getLogger(__name__)

EWMA_LAMBDA = 0.94
VAR_FLOOR = 1e-12


def hs_forecast(window_returns, alpha: float) -> ForecastPair:
    """Empirical alpha-quantile and mean of the returns strictly below it."""
    r = np.asarray(window_returns, float)
    alpha = check_alpha(alpha)
    if r.size < math.ceil(1 / alpha):
        raise ValueError(f"historical simulation needs at least {math.ceil(1 / alpha)} returns")
    var = float(np.quantile(r, alpha))
    tail = r[r < var]
    if tail.size == 0:
        log.warning("no return below the HS quantile; setting es = var")
        return ForecastPair(var, var)
    return ForecastPair(var, float(tail.mean()))


def gaussian_window_forecast(window_returns, alpha: float) -> tuple[ForecastPair, NativeDist]:
    """Zero-mean Gaussian with the window's sample standard deviation."""
    r = np.asarray(window_returns, float)
    if r.size < 2:
        raise ValueError("need at least two returns")
    sd = math.sqrt(max(float(np.var(r, ddof=1)), VAR_FLOOR))
    return gaussian_var_es(0.0, sd, alpha), NativeDist("gaussian", 0.0, sd)


def ewma_variance(returns) -> np.ndarray:
    """EWMA variance path; element t uses returns up to t - 1, the last
    element is the one-day-ahead forecast."""
    r = np.asarray(returns, float)
    v = np.empty(r.size + 1)
    v[0] = np.mean(r * r)
    for t in range(r.size):
        v[t + 1] = EWMA_LAMBDA * v[t] + (1 - EWMA_LAMBDA) * r[t] ** 2
    return v


def ewma_forecast(returns, alpha: float) -> tuple[ForecastPair, NativeDist]:
    r = np.asarray(returns, float)
    if r.size < 2:
        raise ValueError("need at least two returns")
    sd = math.sqrt(max(ewma_variance(r)[-1], VAR_FLOOR))
    return gaussian_var_es(0.0, sd, alpha), NativeDist("gaussian", 0.0, sd)
