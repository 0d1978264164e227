"""Calibration tests for VaR and ES forecast paths."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..core import check_alpha


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    reject_at_5pct: bool
    note: str = ""

    __test__ = False  # not a pytest class

    @classmethod
    def from_p(cls, stat: float, p: float, note: str = "") -> "TestResult":
        p = float(min(max(p, 0.0), 1.0))
        return cls(float(stat), p, p < 0.05, note)


def _xlogy(x, y):
    return 0.0 if x == 0 else x * math.log(y)


def _hits(hits) -> np.ndarray:
    h = np.asarray(hits)
    if h.dtype != bool:
        if not np.all(np.isin(h, (0, 1))):
            raise ValueError("hits must be boolean or 0/1")
        h = h.astype(bool)
    return h


def uc_lr(hits, alpha: float) -> float:
    h = _hits(hits)
    n, x = h.size, int(h.sum())
    p = x / n
    ll0 = _xlogy(n - x, 1 - alpha) + _xlogy(x, alpha)
    ll1 = _xlogy(n - x, 1 - p) + _xlogy(x, p)
    return max(0.0, -2.0 * (ll0 - ll1))


def uc_test(hits, alpha: float) -> TestResult:
    """Kupiec unconditional coverage likelihood-ratio test, chi2(1)."""
    alpha = check_alpha(alpha)
    h = _hits(hits)
    if h.size < 50:
        raise ValueError("coverage tests need at least 50 observations")
    lr = uc_lr(h, alpha)
    return TestResult.from_p(lr, stats.chi2.sf(lr, 1))


def independence_lr(hits) -> float:
    """First-order Markov independence likelihood ratio."""
    h = _hits(hits).astype(int)
    prev, cur = h[:-1], h[1:]
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    p01 = n01 / (n00 + n01) if n00 + n01 else 0.0
    p11 = n11 / (n10 + n11) if n10 + n11 else 0.0
    p = (n01 + n11) / (n00 + n01 + n10 + n11)
    ll0 = _xlogy(n00 + n10, 1 - p) + _xlogy(n01 + n11, p)
    ll1 = (_xlogy(n00, 1 - p01) + _xlogy(n01, p01) + _xlogy(n10, 1 - p11) + _xlogy(n11, p11))
    return max(0.0, -2.0 * (ll0 - ll1))


def cc_test(hits, alpha: float) -> TestResult:
    """Christoffersen conditional coverage test (coverage plus independence), chi2(2)."""
    alpha = check_alpha(alpha)
    h = _hits(hits)
    if h.size < 50:
        raise ValueError("coverage tests need at least 50 observations")
    lr = uc_lr(h, alpha) + independence_lr(h)
    return TestResult.from_p(lr, stats.chi2.sf(lr, 2))


class SingularRegressors(np.linalg.LinAlgError):
    pass


def dq_test(hits, var_path, alpha: float, lags: int = 4) -> TestResult:
    """Dynamic quantile test.

    Regresses ``hit - alpha`` on a constant, ``lags`` lagged values of
    ``hit - alpha`` and the VaR forecast; the Wald statistic is chi2 with
    ``lags + 2`` degrees of freedom. When every hit is equal the lagged
    columns duplicate the constant and the projection is taken with a
    pseudo-inverse.
    """
    alpha = check_alpha(alpha)
    h = _hits(hits).astype(float) - alpha
    v = np.asarray(var_path, float)
    if h.size != v.size:
        raise ValueError("hits and VaR path differ in length")
    if h.size < 100:
        raise ValueError("the DQ test needs at least 100 observations")
    y = h[lags:]
    X = np.column_stack([np.ones(y.size)] + [h[lags - k:-k] for k in range(1, lags + 1)]
                        + [v[lags:]])
    constant_hits = np.ptp(h) == 0
    if not constant_hits and np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularRegressors("DQ regressors are collinear")
    beta = np.linalg.lstsq(X, y, rcond=None)[0] if constant_hits else np.linalg.solve(X.T @ X, X.T @ y)
    fitted = X @ beta
    stat = float(fitted @ fitted / (alpha * (1 - alpha)))
    return TestResult.from_p(stat, stats.chi2.sf(stat, lags + 2))


def es_bootstrap_test(returns, var_path, es_path, n_boot: int = 10000, seed: int = 0) -> TestResult:
    """Bootstrap test that the VaR-standardized ES residuals have mean zero.

    Residuals ``u = (r - es) / var`` on exceedance days; the studentized mean
    is compared with its bootstrap distribution under the centred residuals
    (two-sided).
    """
    r = np.asarray(returns, float)
    v = np.asarray(var_path, float)
    e = np.asarray(es_path, float)
    hit = r <= v
    u = (r[hit] - e[hit]) / v[hit]
    n = u.size
    if n < 5:
        return TestResult(math.nan, math.nan, False, "insufficient exceedances")
    mean = u.mean()
    sd = u.std(ddof=1)
    if sd == 0:
        return TestResult.from_p(0.0 if mean == 0 else math.inf, 1.0 if mean == 0 else 0.0)
    t_obs = mean / (sd / math.sqrt(n))
    rng = np.random.default_rng(seed)
    c = u - mean
    draws = c[rng.integers(0, n, size=(n_boot, n))]
    sds = draws.std(axis=1, ddof=1)
    t_boot = np.divide(draws.mean(axis=1), sds / math.sqrt(n),
                       out=np.zeros(n_boot), where=sds > 0)
    p = float(np.mean(np.abs(t_boot) >= abs(t_obs)))
    return TestResult.from_p(t_obs, p)
