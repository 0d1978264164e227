"""Rolling-window combiner backtest and the dynamic-selection benchmark."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..combine import GRAND_AVERAGE, Combiner, make_combiner
from ..core import DataError, ForecastPool, ReturnSeries, align, check_alpha
from ..pool.simple import hs_forecast
from ..score import AL, VARIANTS, ScoreSpec, joint_score

log = logging.getLogger(__name__)

DYNAMIC_SELECTION = "dynamic_selection"
HS_WINDOW = 250


@dataclass(frozen=True)
class BacktestConfig:
    """Rolling-window settings.

    ``score_specs`` defaults to the five score variants at ``alpha``.
    ``refit_stride`` re-estimates combiner parameters every that many origins
    and carries them forward in between (1 = daily).
    """

    est_window: int
    eval_span: int
    alpha: float = 0.025
    score_specs: tuple = ()
    benchmark_method: str = "HS-250"
    refit_stride: int = 1
    threads: int = 1

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.est_window < 1 or self.eval_span < 1:
            raise ValueError("est_window and eval_span must be positive")
        if self.refit_stride < 1:
            raise ValueError("refit_stride must be positive")
        if not self.score_specs:
            object.__setattr__(self, "score_specs",
                               tuple(ScoreSpec(v, self.alpha) for v in VARIANTS))
        if any(s.alpha != self.alpha for s in self.score_specs):
            raise ValueError("score specs must use the backtest alpha")

    @property
    def al(self) -> ScoreSpec:
        return ScoreSpec("AL", self.alpha)


@dataclass
class ForecastPath:
    """Out-of-sample forecasts of one combiner; NaN marks a failed origin."""

    name: str
    dates: np.ndarray
    var: np.ndarray
    es: np.ndarray
    failures: list = field(default_factory=list)  # (date, message)

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.var) & np.isfinite(self.es)


@dataclass
class BacktestReport:
    cfg: BacktestConfig
    dates: np.ndarray
    returns: np.ndarray
    paths: dict  # name -> ForecastPath, combiners first, then benchmarks
    selected: np.ndarray | None = None  # dynamic-selection method index per origin

    def names(self) -> list:
        return list(self.paths)

    def daily_scores(self, spec: ScoreSpec = AL) -> dict:
        out = {}
        for name, p in self.paths.items():
            s = np.full(p.var.size, np.nan)
            ok = p.ok
            s[ok] = joint_score(spec, p.var[ok], p.es[ok], self.returns[ok])
            out[name] = s
        return out


def _eval_columns(cfg: BacktestConfig, n_cols: int) -> np.ndarray:
    if cfg.est_window + cfg.eval_span > n_cols:
        raise DataError(
            f"pool has {n_cols} origins; est_window + eval_span = {cfg.est_window + cfg.eval_span}")
    return np.arange(n_cols - cfg.eval_span, n_cols)


def _aligned_returns(pool: ForecastPool, returns) -> np.ndarray:
    if isinstance(returns, ReturnSeries):
        return align(pool, returns)
    r = np.asarray(returns, float)
    if r.shape != (pool.shape[1],):
        raise DataError("returns must align with the pool origins")
    return r


def _natives(pool: ForecastPool, t: int) -> list:
    return [pool.native[m][t] if m in pool.native else None for m in pool.method_ids]


def _run_combiner(comb: Combiner, pool: ForecastPool, r: np.ndarray, cols: np.ndarray,
                  window: int, stride: int) -> ForecastPath:
    V, E = pool.var, pool.es
    var = np.full(cols.size, np.nan)
    es = np.full(cols.size, np.nan)
    failures = []
    fitted = False
    native = getattr(comb, "uses_native", False)
    for k, t in enumerate(cols):
        date = pool.origins[t]
        if not fitted or k % stride == 0:
            lo = t - window
            try:
                comb.fit(V[:, lo:t], E[:, lo:t], r[lo:t])
                fitted = True
            except Exception as exc:  # recorded, never filled
                fitted = False
                failures.append((date, f"fit: {exc}"))
                log.warning("%s failed to fit at %s: %s", comb.name, date, exc)
                continue
        try:
            if native:
                v, e = comb.predict(V[:, t], E[:, t], _natives(pool, t))
            else:
                v, e = comb.predict(V[:, t], E[:, t])
            if not (np.isfinite(v) and np.isfinite(e)) or e > v:
                raise ValueError(f"invalid combined pair ({v}, {e})")
            var[k], es[k] = v, e
        except Exception as exc:
            failures.append((date, f"predict: {exc}"))
            log.warning("%s failed to predict at %s: %s", comb.name, date, exc)
    return ForecastPath(comb.name, pool.origins[cols], var, es, failures)


def _job(args):
    return _run_combiner(*args)


def grand_average_path(paths: list, dates: np.ndarray) -> ForecastPath:
    """Per-origin mean over the available combiner forecasts."""
    V = np.array([p.var for p in paths])
    E = np.array([p.es for p in paths])
    ok = np.isfinite(V) & np.isfinite(E)
    n = ok.sum(axis=0)
    failures = [(dates[k], "all combiners failed") for k in np.flatnonzero(n == 0)]
    with np.errstate(invalid="ignore"):
        var = np.where(ok, V, 0.0).sum(axis=0) / n
        es = np.where(ok, E, 0.0).sum(axis=0) / n
    var[n == 0] = np.nan
    es[n == 0] = np.nan
    return ForecastPath(GRAND_AVERAGE, dates, var, es, failures)


def run_backtest(cfg: BacktestConfig, pool: ForecastPool, returns, combiners) -> BacktestReport:
    """Refit each combiner on the trailing ``est_window`` columns and forecast the next one.

    ``combiners`` holds registry names or :class:`Combiner` instances. The
    grand average (if listed) is computed from the other combiners. The
    dynamic-selection path and the HS-250 benchmark are always added.
    """
    r = _aligned_returns(pool, returns)
    cols = _eval_columns(cfg, pool.shape[1])
    items = [make_combiner(c, cfg.al) if isinstance(c, str) and c != GRAND_AVERAGE else c
             for c in combiners]
    want_grand = GRAND_AVERAGE in items
    combs = [c for c in items if c != GRAND_AVERAGE]
    names = [c.name for c in combs]
    if len(set(names)) != len(names):
        raise ValueError("duplicate combiner names")
    jobs = [(c, pool, r, cols, cfg.est_window, cfg.refit_stride) for c in combs]
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    paths = {p.name: p for p in results}
    if want_grand:
        paths[GRAND_AVERAGE] = grand_average_path(results, pool.origins[cols])
    dv, de, sel = dynamic_selection(cfg, pool, r)
    paths[DYNAMIC_SELECTION] = ForecastPath(DYNAMIC_SELECTION, pool.origins[cols], dv, de)
    bench = benchmark_path(cfg, pool, r)
    paths[bench.name] = bench
    return BacktestReport(cfg, pool.origins[cols], r[cols], paths, sel)


def dynamic_selection(cfg: BacktestConfig, pool: ForecastPool, returns, spec: ScoreSpec | None = None):
    """Each day, the forecast of the method with the lowest trailing-window average score.

    Returns ``(var, es, selected)`` over the evaluation span; ties go to the
    lowest method index.
    """
    spec = spec or cfg.al
    r = _aligned_returns(pool, returns)
    cols = _eval_columns(cfg, pool.shape[1])
    S = joint_score(spec, pool.var, pool.es, r[None, :])
    w = cfg.est_window
    sel = np.empty(cols.size, dtype=int)
    for k, t in enumerate(cols):
        sel[k] = int(np.argmin(S[:, t - w:t].mean(axis=1)))
    return pool.var[sel, cols].copy(), pool.es[sel, cols].copy(), sel


def hs_benchmark(returns, positions, alpha: float, window: int = HS_WINDOW):
    """HS forecasts for the days at ``positions`` of a return array, each
    from the ``window`` returns before it."""
    r = np.asarray(returns, float)
    pos = np.asarray(positions)
    if pos.min() < window:
        raise DataError(f"HS-{window} needs {window} returns before the first evaluated day")
    pairs = [hs_forecast(r[t - window:t], alpha) for t in pos]
    return np.array([p.var for p in pairs]), np.array([p.es for p in pairs])


def benchmark_path(cfg: BacktestConfig, pool: ForecastPool, r: np.ndarray) -> ForecastPath:
    cols = _eval_columns(cfg, pool.shape[1])
    name = cfg.benchmark_method
    if name in pool.method_ids:
        m = pool.method_ids.index(name)
        return ForecastPath(name, pool.origins[cols], pool.var[m, cols].copy(),
                            pool.es[m, cols].copy())
    if name != f"HS-{HS_WINDOW}":
        raise DataError(f"benchmark {name!r} is not in the pool")
    v, e = hs_benchmark(r, cols, cfg.alpha)
    return ForecastPath(name, pool.origins[cols], v, e)
