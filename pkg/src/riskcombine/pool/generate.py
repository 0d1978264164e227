"""Rolling-window pool generation and the synthetic GARCH-t pool."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core import DataError, ForecastPair, ForecastPool, ReturnSeries, check_alpha, series_from_returns
from ..dist import std_skewt_var_es
from .caviar import caviar_fit, caviar_forecast, care_fit, care_forecast
from .garch import FitOptions, garch_fit, garch_forecast, simulate_garch
from .simple import ewma_forecast, gaussian_window_forecast, hs_forecast
from .specs import MethodSpec

log = logging.getLogger(__name__)


class MethodError(RuntimeError):
    """A forecaster failed at a given origin."""


def _window_size(spec: MethodSpec, est_window: int) -> int:
    return spec.window or est_window


def forecast_one(spec: MethodSpec, window: ReturnSeries, alpha: float, fitted=None,
                 opts: FitOptions | None = None):
    """One-day-ahead forecast from the trailing ``window``.

    Returns ``(pair, native or None, fitted)``. Passing ``fitted`` reuses its
    parameters instead of re-estimating them.
    """
    fam = spec.family
    if spec.needs:
        window.driver(spec.driver)
    if fam == "HS":
        return hs_forecast(window.returns, alpha), None, None
    if fam == "GaussianWindow":
        return (*gaussian_window_forecast(window.returns, alpha), None)
    if fam == "EWMA":
        return (*ewma_forecast(window.returns, alpha), None)
    if fam in ("GARCH", "GJR"):
        fm = fitted or garch_fit(spec, window, opts or FitOptions())
        pair, native = garch_forecast(fm, window, alpha)
        return pair, native, fm
    if fam == "CAViaR":
        fm = fitted or caviar_fit(spec, window, alpha, *(() if opts is None else (opts,)))
        return caviar_forecast(fm, window, alpha), None, fm
    fm = fitted or care_fit(spec, window, alpha)
    return care_forecast(fm, window, alpha), None, fm


def _method_path(spec: MethodSpec, mid: str, series: ReturnSeries, est_window: int, alpha: float,
                 refit_every: int, opts: FitOptions | None):
    w = _window_size(spec, est_window)
    if w > est_window:
        raise ValueError(f"{mid}: window {w} exceeds the estimation window")
    T = len(series) - est_window
    var, es = np.empty(T), np.empty(T)
    fitted = None
    dists = []
    for j in range(T):
        end = est_window + j
        window = series[end - w:end]
        reuse = fitted if (j % refit_every) else None
        try:
            pair, nd, fitted = forecast_one(spec, window, alpha, reuse, opts)
        except Exception as exc:
            raise MethodError(f"{mid} at origin {series.dates[end - 1]}: {exc}") from exc
        var[j], es[j] = pair.var, pair.es
        dists.append(nd)
    log.info("generated %s", mid)
    return var, es, tuple(dists)


def _method_job(args):
    return _method_path(*args)


def generate_pool(specs: list[MethodSpec], series: ReturnSeries, est_window: int, alpha: float,
                  refit_every: int = 1, opts: FitOptions | None = None,
                  threads: int = 1) -> ForecastPool:
    """Rolling one-day-ahead forecasts for every spec.

    Column ``j`` is the forecast for day ``est_window + j`` made from the
    ``est_window`` days before it (HS/Gaussian use their own shorter window
    at the end of that span). Parameters are re-estimated every
    ``refit_every`` origins and otherwise carried forward on the new window.
    Methods run in up to ``threads`` worker processes; the result does not
    depend on the worker count.
    """
    alpha = check_alpha(alpha)
    n = len(series)
    if n < est_window + 1:
        raise DataError(f"series of length {n} is too short for a {est_window}-day window")
    if refit_every < 1:
        raise ValueError("refit_every must be positive")
    for spec in specs:
        if spec.needs:
            try:
                series.driver(spec.driver)
            except DataError as exc:
                raise DataError(f"{spec.method_id(est_window)}: {exc}") from None
    ids = [s.method_id(est_window) for s in specs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate method specs")
    jobs = [(spec, mid, series, est_window, alpha, refit_every, opts) for spec, mid in zip(specs, ids)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_method_job, jobs))
    else:
        results = [_method_job(j) for j in jobs]
    native = {mid: res[2] for spec, mid, res in zip(specs, ids, results) if spec.has_native}
    return ForecastPool(tuple(ids), series.dates[est_window:], np.array([res[0] for res in results]),
                        np.array([res[1] for res in results]), native)


# ---------------------------------------------------------------------------
# synthetic pool

@dataclass(frozen=True)
class DgpConfig:
    """GARCH-t data generator plus per-forecaster distortion levels.

    ``true_params`` is ``(omega, alpha, beta, nu)``. Each forecaster ``m``
    multiplies the true VaR by ``exp(b_m + s_m e)`` and the true spacing by
    ``exp(c_m + s_m f)`` with ``e, f`` i.i.d. standard normal per day; the
    biases ``b_m, c_m`` are drawn once from N(0, bias_sd^2) and the noise
    scales ``s_m`` from U(0.5, 1.5) * noise_sd.
    """

    kind: str = "garch-t"
    true_params: tuple = (0.02, 0.08, 0.9, 6.0)
    m_noise: tuple = (0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if self.kind != "garch-t":
            raise ValueError("only the GARCH-t generator is available")
        omega, a, b, nu = self.true_params
        if not (omega > 0 and a >= 0 and b >= 0 and a + b < 1 and nu > 2):
            raise ValueError("GARCH-t parameters must be positive, stationary and have nu > 2")
        if min(self.m_noise) < 0:
            raise ValueError("noise levels must be nonnegative")


@dataclass(frozen=True)
class SynthResult:
    pool: ForecastPool
    series: ReturnSeries
    true_var: np.ndarray
    true_es: np.ndarray
    sigma: np.ndarray = field(repr=False, default=None)


def synth_pool(cfg: DgpConfig, M: int, T: int, alpha: float = 0.025) -> SynthResult:
    """Simulated returns, the true conditional (VaR, ES) path and M distorted forecasters."""
    alpha = check_alpha(alpha)
    omega, a, b, nu = cfg.true_params
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    r, s2 = simulate_garch(T, omega, a, b, 0.0, nu, seed=int(seeds[0].generate_state(1)[0]))
    q, e = std_skewt_var_es(alpha, nu, 0.0)
    sd = np.sqrt(s2)
    tv = float(q) * sd
    gap = float(q - e) * sd
    # written as var - spacing so undistorted forecasters reproduce it bit for bit
    te = tv - gap
    rng = np.random.default_rng(seeds[1])
    bias_sd, noise_sd = cfg.m_noise
    bv = rng.normal(0.0, 1.0, (M, 1)) * bias_sd
    bs = rng.normal(0.0, 1.0, (M, 1)) * bias_sd
    scale = rng.uniform(0.5, 1.5, (M, 1)) * noise_sd
    ev = rng.normal(0.0, 1.0, (M, T))
    es_ = rng.normal(0.0, 1.0, (M, T))
    var = tv[None, :] * np.exp(bv + scale * ev)
    spacing = gap[None, :] * np.exp(bs + scale * es_)
    series = series_from_returns(r)
    ids = tuple(f"F{m + 1:02d}" for m in range(M))
    pool = ForecastPool(ids, series.dates, var, var - spacing)
    return SynthResult(pool, series, tv, te, sd)


def true_pair(cfg: DgpConfig, sigma: float, alpha: float) -> ForecastPair:
    q, e = std_skewt_var_es(alpha, cfg.true_params[3], 0.0)
    return ForecastPair(float(q) * sigma, float(e) * sigma)
