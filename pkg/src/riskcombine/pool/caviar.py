"""CAViaR quantile recursions with multiplicative or additive ES, and CARE.

Quantile forms, with driver ``x`` (|return|, range or realized volatility)
and the leverage sign always taken from the return:

* SAV: q[t] = b0 + b1 q[t-1] + b2 x[t-1]
* AS:  q[t] = b0 + b1 q[t-1] + b2 x[t-1] 1{r[t-1] >= 0} + b3 x[t-1] 1{r[t-1] < 0}
* IG:  q[t] = -sqrt(b0 + b1 q[t-1]**2 + b2 x[t-1]**2)

CAViaR ES is either ``c q`` with ``c > 1`` (multiplicative) or ``q - w`` with
``w[t] = g0 + g1 (q[t-1] - r[t-1]) 1{r[t-1] <= q[t-1]} + g2 w[t-1] > 0``
(additive). Parameters minimize the in-sample average AL score.

CARE fits the same recursions to an expectile by asymmetric least squares,
with the expectile level chosen so the in-sample exceedance rate is alpha.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.signal import lfilter
from scipy.special import expit, logit

from ..core import ForecastPair, ReturnSeries, check_alpha
from ..score import ScoreSpec, joint_score
from .garch import FitError, FitOptions, FittedMethod, _multistart
from .specs import MethodSpec

log = logging.getLogger(__name__)

MIN_WINDOW = 250
CAVIAR_STARTS = 10
PERSIST = 0.999


def _inputs(spec: MethodSpec, window: ReturnSeries):
    r = np.asarray(window.returns, float)
    x = np.abs(r) if spec.driver == "return" else window.driver(spec.driver)
    return r, np.asarray(x, float)


def _n_quantile(form: str) -> int:
    return {"SAV": 3, "AS": 4, "IG": 3}[form]


def quantile_path(form: str, beta, r, x, q0: float) -> np.ndarray:
    """Path of length n + 1: element t uses data up to t - 1 (last = forecast)."""
    b = np.asarray(beta, float)
    n = r.size
    out = np.empty(n + 1)
    out[0] = q0
    if form == "IG":
        b1 = PERSIST * expit(b[1])
        drive = math.exp(b[0]) + math.exp(b[2]) * x * x
        q2 = lfilter([1.0], [1.0, -b1], drive, zi=[b1 * q0 * q0])[0]
        out[1:] = -np.sqrt(q2)
        return out
    b1 = PERSIST * math.tanh(b[1])
    if form == "SAV":
        drive = b[0] + b[2] * x
    else:
        pos = r >= 0
        drive = b[0] + np.where(pos, b[2], b[3]) * x
    out[1:] = lfilter([1.0], [1.0, -b1], drive, zi=[b1 * q0])[0]
    return out


def _spacing_path(gam, r, q, w0: float) -> np.ndarray:
    g0, g1 = math.exp(gam[0]), math.exp(gam[1])
    g2 = PERSIST * expit(gam[2])
    hit = r <= q[:-1]
    drive = g0 + g1 * np.where(hit, q[:-1] - r, 0.0)
    out = np.empty(r.size + 1)
    out[0] = w0
    out[1:] = lfilter([1.0], [1.0, -g2], drive, zi=[g2 * w0])[0]
    return out


def _quantile_start(form: str, q: float, x: np.ndarray) -> np.ndarray:
    m1 = float(np.mean(x)) or 1e-6
    if form == "IG":
        m2 = float(np.mean(x * x)) or 1e-12
        return np.array([math.log(0.05 * q * q), logit(0.85 / PERSIST), math.log(0.1 * q * q / m2)])
    base = [0.05 * q, math.atanh(0.85 / PERSIST), 0.1 * q / m1]
    return np.array(base + [0.1 * q / m1] if form == "AS" else base)


class _CaviarProblem:
    def __init__(self, spec: MethodSpec, r, x, alpha):
        self.form = spec.caviar_form
        self.es_form = spec.es_form
        self.r, self.x = r, x
        self.nq = _n_quantile(self.form)
        self.score = ScoreSpec("AL", alpha)
        tail = np.sort(r)[: max(1, int(math.ceil(alpha * r.size)))]
        self.q0 = float(np.quantile(r, alpha))
        self.e0 = float(min(tail.mean(), self.q0 - 1e-6))
        if self.q0 >= 0:
            self.q0 = -float(np.std(r)) * 1.96 or -1e-3
            self.e0 = 1.2 * self.q0

    def paths(self, theta):
        q = quantile_path(self.form, theta[:self.nq], self.r, self.x, self.q0)
        g = theta[self.nq:]
        if self.es_form == "multiplicative":
            return q, (1.0 + math.exp(g[0])) * q
        w = _spacing_path(g, self.r, q, self.q0 - self.e0)
        return q, q - w

    def __call__(self, theta):
        q, e = self.paths(theta)
        q, e = q[:-1], e[:-1]
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(e))) or np.any(e >= -1e-10):
            return np.inf
        return float(np.mean(joint_score(self.score, q, e, self.r)))

    def start(self) -> np.ndarray:
        qs = _quantile_start(self.form, self.q0, self.x)
        ratio = self.e0 / self.q0
        if self.es_form == "multiplicative":
            gs = [math.log(max(ratio - 1.0, 1e-3))]
        else:
            gap = max(self.q0 - self.e0, 1e-6)
            gs = [math.log(0.1 * gap), math.log(0.05), logit(0.9 / PERSIST)]
        return np.concatenate([qs, gs])


def caviar_fit(spec: MethodSpec, window: ReturnSeries, alpha: float,
               opts: FitOptions = FitOptions(n_starts=CAVIAR_STARTS), warm=None) -> FittedMethod:
    """Joint CAViaR/ES fit minimizing the average AL score."""
    if spec.family != "CAViaR":
        raise ValueError("not a CAViaR spec")
    if len(window) < MIN_WINDOW:
        raise ValueError(f"CAViaR estimation needs at least {MIN_WINDOW} days")
    r, x = _inputs(spec, window)
    prob = _CaviarProblem(spec, r, x, check_alpha(alpha))
    theta, obj = _multistart(prob, prob.start(), opts, scale=0.3, warm=warm)
    return FittedMethod(spec, theta, {"score": obj, "q0": prob.q0, "e0": prob.e0})


def caviar_forecast(fm: FittedMethod, window: ReturnSeries, alpha: float) -> ForecastPair:
    r, x = _inputs(fm.spec, window)
    prob = _CaviarProblem(fm.spec, r, x, check_alpha(alpha))
    q, e = prob.paths(fm.params)
    return ForecastPair(q[-1], min(e[-1], q[-1]))


def caviar_fit_forecast(spec: MethodSpec, window: ReturnSeries, alpha: float,
                        opts: FitOptions = FitOptions(n_starts=CAVIAR_STARTS)) -> ForecastPair:
    return caviar_forecast(caviar_fit(spec, window, alpha, opts), window, alpha)


# ---------------------------------------------------------------------------
# CARE

def als_loss(tau: float, r, mu) -> float:
    """Mean asymmetric squared loss of expectile path ``mu`` at level ``tau``."""
    d = r - mu
    return float(np.mean(np.where(d < 0, 1 - tau, tau) * d * d))


def care_expectile_fit(form: str, r, x, tau: float, warm=None,
                       opts: FitOptions = FitOptions(n_starts=3)):
    """Expectile recursion parameters at level ``tau`` by asymmetric least squares.

    Returns ``(theta, path)`` where ``path`` has length n + 1.
    """
    r = np.asarray(r, float)
    x = np.asarray(x, float)
    order = np.sort(r)
    mu0 = _sample_expectile(order, tau)
    if form == "IG" and mu0 >= 0:
        mu0 = -1e-3
    f = lambda th: _care_obj(form, th, r, x, tau, mu0)
    start = _quantile_start(form, mu0 if mu0 != 0 else -1e-3, x)
    theta, _ = _multistart(f, start, opts, scale=0.3, warm=warm, smooth=True)
    return theta, quantile_path(form, theta, r, x, mu0)


def _care_obj(form, th, r, x, tau, mu0):
    mu = quantile_path(form, th, r, x, mu0)[:-1]
    if not np.all(np.isfinite(mu)):
        return np.inf
    return als_loss(tau, r, mu)


def _sample_expectile(sorted_r: np.ndarray, tau: float) -> float:
    lo, hi = float(sorted_r[0]), float(sorted_r[-1])
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        d = sorted_r - mid
        g = np.sum(np.where(d < 0, 1 - tau, tau) * d)
        lo, hi = (mid, hi) if g > 0 else (lo, mid)
    return 0.5 * (lo + hi)


def care_es(mu: float, tau: float, alpha: float, mean: float) -> float:
    """ES implied by an expectile whose exceedance probability is alpha."""
    k = tau / ((1 - 2 * tau) * alpha)
    return (1 + k) * mu - k * mean


def care_fit(spec: MethodSpec, window: ReturnSeries, alpha: float, max_iter: int = 30,
             opts: FitOptions = FitOptions(n_starts=3)) -> FittedMethod:
    """Bisection on log(tau) until the in-sample exceedance rate matches alpha."""
    if spec.family != "CARE":
        raise ValueError("not a CARE spec")
    if len(window) < MIN_WINDOW:
        raise ValueError(f"CARE estimation needs at least {MIN_WINDOW} days")
    alpha = check_alpha(alpha)
    r, x = _inputs(spec, window)
    form = spec.caviar_form

    def rate(tau, warm):
        th, mu = care_expectile_fit(form, r, x, tau, warm, opts)
        return float(np.mean(r < mu[:-1])), th

    lo, hi = math.log(1e-5), math.log(0.5 - 1e-6)
    rate_lo, th_lo = rate(math.exp(lo), None)
    rate_hi, th_hi = rate(math.exp(hi), th_lo)
    if not rate_lo <= alpha <= rate_hi:
        raise FitError(f"expectile level cannot bracket exceedance rate {alpha}")
    best = (abs(rate_lo - alpha), math.exp(lo), th_lo)
    warm = th_lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        rt, th = rate(math.exp(mid), warm)
        warm = th
        if abs(rt - alpha) < best[0]:
            best = (abs(rt - alpha), math.exp(mid), th)
        if rt < alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-4:
            break
    _, tau, theta = best
    mu0 = _sample_expectile(np.sort(r), tau)
    if form == "IG" and mu0 >= 0:
        mu0 = -1e-3
    return FittedMethod(spec, theta, {"tau": tau, "mu0": mu0, "mean": float(np.mean(r))})


def care_forecast(fm: FittedMethod, window: ReturnSeries, alpha: float) -> ForecastPair:
    r, x = _inputs(fm.spec, window)
    st = fm.residual_state
    mu = quantile_path(fm.spec.caviar_form, fm.params, r, x, st["mu0"])[-1]
    es = care_es(mu, st["tau"], alpha, float(np.mean(r)))
    return ForecastPair(mu, min(es, mu))


def care_fit_forecast(spec: MethodSpec, window: ReturnSeries, alpha: float) -> ForecastPair:
    return care_forecast(care_fit(spec, window, alpha), window, alpha)
