"""GARCH(1,1) and GJR-GARCH(1,1) forecasters with return, range or RV drivers.

Zero-mean model

    s2[t] = omega + (a + g * 1{r[t-1] < 0}) * x[t-1]**2 + b * s2[t-1]

where ``x`` is the return, the high-low range, or the square root of
realized variance. The leverage indicator always uses the sign of the
return. Plain GARCH is the same model with ``g`` fixed at zero, so both are
estimated by the same code path.

Constraints are imposed by transformation: omega = exp(p0); the persistence
``a k + g k / 2 + b`` equals ``0.9999 expit(p1)``, split between its terms by a
softmax, where ``k = mean(x**2) / mean(r**2)`` puts range and RV drivers on
the return scale.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, logit, softmax

from ..core import ForecastPair, NativeDist, ReturnSeries, check_alpha
from ..dist import gaussian_var_es, std_skewt_logpdf, std_skewt_var_es
from .simple import VAR_FLOOR, hs_forecast
from .specs import MethodSpec

log = logging.getLogger(__name__)

MIN_WINDOW = 250
MAX_PERSISTENCE = 0.9999
EVT_THRESHOLD = 0.10
BIG = 1e100
NU_MIN, NU_MAX = 2.05, 200.0


class FitError(RuntimeError):
    """Estimation failed on every start."""


@dataclass(frozen=True)
class FitOptions:
    n_starts: int = 5
    maxiter: int = 4000
    seed: int = 12345


@dataclass
class FittedMethod:
    spec: MethodSpec
    params: np.ndarray
    residual_state: dict


def _garch_path(theta, x2, neg, s2_0, leverage: bool, kappa: float):
    omega = math.exp(theta[0])
    pers = MAX_PERSISTENCE * expit(theta[1])
    shares = softmax(np.r_[theta[2:4] if leverage else theta[2:3], 0.0])
    a = pers * shares[0] / kappa
    if leverage:
        g = 2 * pers * shares[1] / kappa
        b = pers * shares[2]
    else:
        g = 0.0
        b = pers * shares[1]
    drive = omega + (a + g * neg) * x2
    # s2[t + 1] = drive[t] + b * s2[t], with s2[0] given
    s2 = np.empty(x2.size + 1)
    s2[0] = s2_0
    s2[1:] = lfilter([1.0], [1.0, -b], drive, zi=[b * s2_0])[0]
    return s2, (omega, a, g, b)


def _dist_params(theta, dist):
    if dist == "gaussian":
        return ()
    nu = NU_MIN + (NU_MAX - NU_MIN) * expit(theta[0])
    if dist == "t":
        return (nu,)
    return nu, math.tanh(theta[1])


def _std_logpdf(z, dist, dp):
    if dist == "gaussian":
        return -0.5 * z * z - 0.5 * math.log(2 * math.pi)
    nu = dp[0]
    lam = dp[1] if dist == "skewt" else 0.0
    return std_skewt_logpdf(z, nu, lam)


def _n_vol(leverage: bool) -> int:
    return 4 if leverage else 3


def _n_dist(dist: str) -> int:
    return {"gaussian": 0, "t": 1, "skewt": 2}[dist]


def _setup(spec: MethodSpec, window: ReturnSeries):
    r = np.asarray(window.returns, float)
    x = window.driver(spec.driver)
    x2 = x * x
    neg = (r < 0).astype(float)
    kappa = float(np.mean(x2) / max(np.mean(r * r), VAR_FLOOR))
    s2_0 = float(max(np.var(r), VAR_FLOOR))
    return r, x2, neg, max(kappa, 1e-8), s2_0


def _nll(theta, spec, r, x2, neg, kappa, s2_0):
    lev = spec.family == "GJR"
    nv = _n_vol(lev)
    s2, _ = _garch_path(theta[:nv], x2, neg, s2_0, lev, kappa)
    s2 = s2[:-1]
    if not np.all(np.isfinite(s2)) or np.any(s2 <= 0):
        return np.inf
    dp = _dist_params(theta[nv:], spec.dist)
    z = r / np.sqrt(s2)
    ll = _std_logpdf(z, spec.dist, dp) - 0.5 * np.log(s2)
    val = -float(np.sum(ll))
    return val if np.isfinite(val) else np.inf


def _initial(spec: MethodSpec, s2_0: float) -> np.ndarray:
    lev = spec.family == "GJR"
    # persistence 0.95 with a : g/2 : b shares of 0.05 : 0.05 : 0.9 (GJR) or 0.05 : 0.95
    vol = [math.log(0.05 * s2_0), logit(0.95 / MAX_PERSISTENCE)]
    vol += [math.log(0.05 / 0.9), math.log(0.05 / 0.9)] if lev else [math.log(0.05 / 0.95)]
    nu0 = float(logit((8.0 - NU_MIN) / (NU_MAX - NU_MIN)))
    dist = {"gaussian": [], "t": [nu0], "skewt": [nu0, 0.0]}[spec.dist]
    return np.array(vol + dist)


def _multistart(f, x0, opts: FitOptions, scale: float = 0.5, warm=None, smooth: bool = False):
    rng = np.random.default_rng(opts.seed)
    starts = [np.asarray(warm, float)] if warm is not None else []
    starts.append(x0)
    while len(starts) < opts.n_starts:
        starts.append(x0 + rng.normal(0.0, scale, x0.size))
    best = None
    for s in starts:
        f0 = f(s)
        if not np.isfinite(f0):
            continue
        if smooth:
            res = minimize(f, s, method="L-BFGS-B",
                           options={"maxiter": opts.maxiter, "ftol": 1e-13, "gtol": 1e-7})
        else:
            res = minimize(f, s, method="Nelder-Mead",
                           options={"maxiter": opts.maxiter, "maxfev": opts.maxiter,
                                    "xatol": 1e-7, "fatol": 1e-9, "adaptive": True})
        x, fx = (res.x, res.fun) if res.fun <= f0 else (s, f0)
        if best is None or fx < best[1]:
            best = (x, fx)
    if best is None or not np.isfinite(best[1]):
        raise FitError("no start produced a finite objective")
    return best


def garch_fit(spec: MethodSpec, window: ReturnSeries, opts: FitOptions = FitOptions(),
              warm=None) -> FittedMethod:
    """Maximum-likelihood fit of a GARCH or GJR model under ``spec.dist``."""
    if spec.family not in ("GARCH", "GJR"):
        raise ValueError("not a GARCH-family spec")
    if len(window) < MIN_WINDOW:
        raise ValueError(f"GARCH estimation needs at least {MIN_WINDOW} days")
    r, x2, neg, kappa, s2_0 = _setup(spec, window)
    f = lambda th: _nll(th, spec, r, x2, neg, kappa, s2_0)
    theta, nll = _multistart(f, _initial(spec, s2_0), opts, warm=warm, smooth=True)
    return FittedMethod(spec, theta, {"nll": nll})


def garch_params(fm: FittedMethod, window: ReturnSeries) -> dict:
    """Natural-scale parameters of a fitted GARCH/GJR model on ``window``."""
    spec = fm.spec
    r, x2, neg, kappa, s2_0 = _setup(spec, window)
    lev = spec.family == "GJR"
    nv = _n_vol(lev)
    _, (omega, a, g, b) = _garch_path(fm.params[:nv], x2, neg, s2_0, lev, kappa)
    dp = _dist_params(fm.params[nv:], spec.dist)
    out = {"omega": omega, "alpha": a, "gamma": g, "beta": b}
    if dp:
        out["nu"] = dp[0]
    if len(dp) > 1:
        out["skew"] = dp[1]
    return out


def _gpd_tail(losses: np.ndarray, alpha: float):
    """Threshold, GPD (xi, beta) and exceedance rate for the upper tail of ``losses``."""
    u = float(np.quantile(losses, 1 - EVT_THRESHOLD))
    y = losses[losses > u] - u
    if y.size < 10:
        raise FitError("too few exceedances for the GPD fit")
    def nnlf(p):
        # finite penalty outside the support keeps the simplex comparisons defined
        v = stats.genpareto.nnlf((p[0], 0.0, math.exp(p[1])), y)
        return v if np.isfinite(v) else BIG

    best = None
    for xi0 in (0.1, 0.3, -0.1):
        res = minimize(nnlf, [xi0, math.log(y.mean())], method="Nelder-Mead",
                       options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": 2000})
        if res.fun < BIG and -0.5 < res.x[0] < 0.95 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitError("GPD fit failed")
    return u, float(best.x[0]), math.exp(best.x[1]), y.size / losses.size


def evt_var_es(z: np.ndarray, alpha: float) -> tuple[float, float]:
    """Lower-tail quantile and tail mean of standardized residuals via a GPD fit."""
    u, xi, beta, rate = _gpd_tail(-np.asarray(z, float), alpha)
    ratio = alpha / rate
    if abs(xi) < 1e-8:
        q = u - beta * math.log(ratio)
    else:
        q = u + beta / xi * (ratio ** -xi - 1)
    es = (q + beta - xi * u) / (1 - xi)
    return -q, -es


def garch_forecast(fm: FittedMethod, window: ReturnSeries, alpha: float):
    """One-day-ahead (pair, native distribution or None) from fitted parameters."""
    alpha = check_alpha(alpha)
    spec = fm.spec
    r, x2, neg, kappa, s2_0 = _setup(spec, window)
    lev = spec.family == "GJR"
    nv = _n_vol(lev)
    s2, _ = _garch_path(fm.params[:nv], x2, neg, s2_0, lev, kappa)
    sd = math.sqrt(max(s2[-1], VAR_FLOOR))
    dp = _dist_params(fm.params[nv:], spec.dist)
    if spec.tail == "native":
        if spec.dist == "gaussian":
            return gaussian_var_es(0.0, sd, alpha), NativeDist("gaussian", 0.0, sd)
        lam = dp[1] if spec.dist == "skewt" else 0.0
        q, e = std_skewt_var_es(alpha, dp[0], lam)
        return (ForecastPair(float(sd * q), float(sd * e)),
                NativeDist(spec.dist, 0.0, sd, dp[0], lam))
    z = r / np.sqrt(s2[:-1])
    if spec.tail == "EVT":
        q, e = evt_var_es(z, alpha)
        return ForecastPair(sd * q, sd * min(e, q)), None
    p = hs_forecast(z, alpha)
    return ForecastPair(sd * p.var, sd * p.es), None


def garch_fit_forecast(spec: MethodSpec, window: ReturnSeries, alpha: float,
                       opts: FitOptions = FitOptions()) -> ForecastPair:
    fm = garch_fit(spec, window, opts)
    return garch_forecast(fm, window, alpha)[0]


def simulate_garch(n: int, omega: float, a: float, b: float, g: float = 0.0, nu: float = math.inf,
                   seed: int = 0, burn: int = 500):
    """Simulate a zero-mean GJR-GARCH(1,1) with standardized t (or Gaussian) shocks.

    Returns ``(returns, conditional variances)``, where variance t is known at
    the end of day t - 1.
    """
    rng = np.random.default_rng(seed)
    total = n + burn
    if math.isinf(nu):
        z = rng.standard_normal(total)
    else:
        z = rng.standard_t(nu, total) * math.sqrt((nu - 2) / nu)
    s2 = np.empty(total)
    r = np.empty(total)
    s2[0] = omega / max(1 - a - g / 2 - b, 1e-6)
    for t in range(total):
        if t:
            s2[t] = omega + (a + g * (r[t - 1] < 0)) * r[t - 1] ** 2 + b * s2[t - 1]
        r[t] = math.sqrt(s2[t]) * z[t]
    return r[burn:], s2[burn:]
