"""Performance-weighted combiners.

* relative score: softmax weights in minus the summed in-sample score,
  shared by VaR and ES (weighted mean or weighted median);
* minimum score: separate simplex weights for VaR and for the spacing (or
  for the ES/VaR ratio) chosen to minimize the in-sample average score;
* ridge: minimum score plus squared-weight penalties, with penalties picked
  on a chronological 75:25 holdout.

Simplex weights are parameterized by softmax logits and optimized with
L-BFGS-B using the almost-everywhere analytic gradient of the score.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from ..core import ForecastPair
from ..score import AL, ScoreSpec, joint_score, score_gradient
from .base import Combiner, as_column, as_pair
from .central import _GOLDEN

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-10
OBJ_RTOL = 1e-10
TEMPERATURE_GRID = np.concatenate([[0.0], np.logspace(-4, 2, 24)])
PENALTY_GRID = np.concatenate([[0.0], np.logspace(-4, 2, 13)])


def check_simplex(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, float)
    if w.ndim != 1 or np.any(w < -SIMPLEX_TOL) or np.any(w > 1 + SIMPLEX_TOL) \
            or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError("weights are not on the simplex")
    return w


@dataclass(frozen=True)
class RelScoreConfig:
    temperature: float = 0.0

    def __post_init__(self):
        if not self.temperature >= 0:
            raise ValueError("temperature must be nonnegative")


@dataclass(frozen=True)
class RidgeConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    holdout_fraction: float = 0.25

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("penalties must be nonnegative")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout fraction must lie in (0, 1)")


# ---------------------------------------------------------------------------
# relative score

def relative_score_weights(cfg: RelScoreConfig, score_history) -> np.ndarray:
    """Softmax of minus temperature times each method's summed score."""
    s = np.asarray(score_history, float)
    if not np.all(np.isfinite(s)):
        raise ValueError("summed scores must be finite")
    if cfg.temperature == 0:
        return np.full(s.size, 1.0 / s.size)
    z = -cfg.temperature * (s - s.min())
    w = np.exp(z)
    return check_simplex(w / w.sum())


def relative_score_combine(weights, column) -> ForecastPair:
    """Weighted mean of VaRs and of ESs with one weight vector."""
    v, e = as_column(column)
    w = np.asarray(weights, float)
    if w.shape != v.shape:
        raise ValueError("weights and column differ in length")
    return as_pair(w @ v, w @ e)


def _weighted_median(x: np.ndarray, w: np.ndarray) -> float:
    order = np.argsort(x, kind="stable")
    cum = np.cumsum(w[order])
    k = np.searchsorted(cum, 0.5 - 1e-12)
    return float(x[order][min(k, len(x) - 1)])


def weighted_median_combine(weights, column) -> ForecastPair:
    """Smallest value whose cumulative weight reaches one half, per component."""
    v, e = as_column(column)
    w = np.asarray(weights, float)
    if w.shape != v.shape:
        raise ValueError("weights and column differ in length")
    return as_pair(_weighted_median(v, w), _weighted_median(e, w))


def _weighted_median_rows(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted median of each column of the M x W array X."""
    order = np.argsort(X, axis=0, kind="stable")
    cum = np.cumsum(w[order], axis=0)
    k = np.argmax(cum >= 0.5 - 1e-12, axis=0)
    return np.take_along_axis(X, order, axis=0)[k, np.arange(X.shape[1])]


def _relscore_objective(lam, S, V, E, r, spec, median):
    w = relative_score_weights(RelScoreConfig(lam), S)
    if median:
        v, e = _weighted_median_rows(V, w), _weighted_median_rows(E, w)
    else:
        v, e = w @ V, w @ E
    return float(np.mean(joint_score(spec, v, e, r)))


def optimize_temperature(V, E, r, spec: ScoreSpec = AL, median: bool = False,
                         grid=TEMPERATURE_GRID) -> RelScoreConfig:
    """Temperature minimizing the in-sample score of the relative-score combination.

    The weights come from each method's score summed over the whole training
    window. A log-spaced grid search is refined by golden-section search (in
    log temperature) between the neighbours of the grid minimizer; ties go to
    the smallest temperature.
    """
    V, E, r = (np.asarray(a, float) for a in (V, E, r))
    if V.shape[1] < 100:
        raise ValueError("temperature optimization needs at least 100 training days")
    S = joint_score(spec, V, E, r[None, :]).sum(axis=1)
    f = lambda lam: _relscore_objective(lam, S, V, E, r, spec, median)
    objs = np.array([f(lam) for lam in grid])
    best = float(objs.min())
    i = int(np.flatnonzero(objs <= best + OBJ_RTOL * (1 + abs(best)))[0])
    lam = float(grid[i])
    if 0 < i < len(grid) - 1 and grid[i - 1] > 0:
        a, b = np.log(grid[i - 1]), np.log(grid[i + 1])
        c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
        fc, fd = f(np.exp(c)), f(np.exp(d))
        for _ in range(40):
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - _GOLDEN * (b - a)
                fc = f(np.exp(c))
            else:
                a, c, fc = c, d, fd
                d = a + _GOLDEN * (b - a)
                fd = f(np.exp(d))
        x = np.exp(c if fc <= fd else d)
        if min(fc, fd) < best - OBJ_RTOL * (1 + abs(best)):
            lam = float(x)
    return RelScoreConfig(lam)


# ---------------------------------------------------------------------------
# minimum score

def _split(V, E, mode):
    if mode == "spacing":
        return V - E
    if mode == "ratio":
        if np.any(V >= 0):
            raise ValueError("ratio mode needs every VaR forecast below zero")
        return E / V
    raise ValueError(f"unknown minimum-score mode {mode!r}")


def combine_with(w, u, V, E, mode):
    """Combined (var, es) paths for VaR weights w and spacing/ratio weights u."""
    X = _split(V, E, mode)
    v = w @ V
    return (v, v - u @ X) if mode == "spacing" else (v, v * (u @ X))


def minimum_score_objective(w, u, V, E, r, spec: ScoreSpec = AL, mode="spacing",
                            lambda1: float = 0.0, lambda2: float = 0.0) -> float:
    """Average in-sample score of the combination plus ridge penalties."""
    v, e = combine_with(np.asarray(w, float), np.asarray(u, float), V, E, mode)
    pen = lambda1 * np.sum(np.square(w)) + lambda2 * np.sum(np.square(u))
    return float(np.mean(joint_score(spec, v, e, r)) + pen)


class _Problem:
    """Minimum-score objective in softmax logits, with its gradient."""

    def __init__(self, V, E, r, spec, mode, lambda1=0.0, lambda2=0.0):
        self.V, self.r, self.spec, self.mode = V, r, spec, mode
        self.X = _split(V, E, mode)
        self.m = V.shape[0]
        self.l1, self.l2 = lambda1, lambda2

    def __call__(self, z):
        m = self.m
        w, u = softmax(z[:m]), softmax(z[m:])
        v = w @ self.V
        x = u @ self.X
        e = v - x if self.mode == "spacing" else v * x
        if np.any(e >= -1e-10) and self.spec.variant in ("AL", "NZ"):
            return np.inf, np.zeros_like(z)
        n = self.r.size
        val = np.mean(joint_score(self.spec, v, e, self.r))
        gv, ge = score_gradient(self.spec, v, e, self.r)
        if self.mode == "spacing":
            dw = self.V @ (gv + ge) / n
            du = -(self.X @ ge) / n
        else:
            dw = self.V @ (gv + ge * x) / n
            du = self.X @ (ge * v) / n
        val += self.l1 * w @ w + self.l2 * u @ u
        dw = dw + 2 * self.l1 * w
        du = du + 2 * self.l2 * u
        gz = np.concatenate([w * (dw - w @ dw), u * (du - u @ du)])
        return float(val), gz


def _solve(prob: _Problem, z0: np.ndarray) -> tuple[np.ndarray, float]:
    f0 = prob(z0)[0]
    if not np.isfinite(f0):
        return z0, np.inf
    res = minimize(prob, z0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 500, "gtol": 1e-9, "ftol": 1e-13})
    if res.fun <= f0:
        return res.x, float(res.fun)
    return z0, f0


def _starts(V, E, r, spec, n_starts, seed):
    m = V.shape[0]
    starts = [np.zeros(2 * m)]
    if n_starts > 1:
        S = joint_score(spec, V, E, r[None, :]).mean(axis=1)
        warm = -(S - S.min()) / max(S.std(), 1e-12)
        starts.append(np.concatenate([warm, warm]))
    rng = np.random.default_rng(seed)
    while len(starts) < n_starts:
        starts.append(rng.normal(0.0, 1.0, 2 * m))
    return starts


def _fit(prob: _Problem, starts) -> tuple[np.ndarray, np.ndarray, float]:
    m = prob.m
    best = None
    for z0 in starts:
        z, f = _solve(prob, z0)
        if best is None or f < best[2] - OBJ_RTOL * (1 + abs(best[2])):
            best = (softmax(z[:m]), softmax(z[m:]), f)
    w, u, f = best
    # softmax cannot reach a vertex; compare against the single methods directly
    for i in range(m):
        one = np.zeros(m)
        one[i] = 1.0
        fv = prob_value(prob, one, one)
        if fv < f - OBJ_RTOL * (1 + abs(f)):
            w, u, f = one, one.copy(), fv
    return check_simplex(w), check_simplex(u), f


def prob_value(prob: _Problem, w, u) -> float:
    v = w @ prob.V
    x = u @ prob.X
    e = v - x if prob.mode == "spacing" else v * x
    if prob.spec.variant in ("AL", "NZ") and np.any(e >= -1e-12):
        return np.inf
    return float(np.mean(joint_score(prob.spec, v, e, prob.r))
                 + prob.l1 * w @ w + prob.l2 * u @ u)


def fit_minimum_score(V, E, r, spec: ScoreSpec = AL, mode: str = "spacing",
                      n_starts: int = 10, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Simplex weights for VaR and for the spacing (or ratio) minimizing the
    in-sample average score.

    Starts: equal weights, a warm start from standardized mean scores, then
    seeded random logits. The first start reaching the best objective wins.
    """
    V, E, r = (np.asarray(a, float) for a in (V, E, r))
    if V.shape[1] < 100:
        raise ValueError("minimum-score fitting needs at least 100 training days")
    prob = _Problem(V, E, r, spec, mode)
    w, u, _ = _fit(prob, _starts(V, E, r, spec, n_starts, seed))
    return w, u


def fit_minimum_score_ridge(V, E, r, spec: ScoreSpec = AL, cfg: RidgeConfig = RidgeConfig(),
                            grid=PENALTY_GRID, n_starts: int = 1, seed: int = 0):
    """Ridge-penalized minimum score with penalties chosen on a holdout.

    Every (lambda1, lambda2) on ``grid`` x ``grid`` is fitted on the first
    75% of the window (warm-started from the previous cell) and scored
    without penalty on the last 25%. The best pair, ties going to the
    larger penalties, is refitted on the whole window.
    Returns ``(w_var, w_spacing, RidgeConfig)``.
    """
    V, E, r = (np.asarray(a, float) for a in (V, E, r))
    if V.shape[1] < 100:
        raise ValueError("minimum-score fitting needs at least 100 training days")
    n = V.shape[1]
    cut = int(round(n * (1 - cfg.holdout_fraction)))
    m = V.shape[0]
    grid = np.asarray(grid, float)
    scores = np.full((len(grid), len(grid)), np.inf)
    val = _Problem(V[:, cut:], E[:, cut:], r[cut:], spec, "spacing")
    starts = _starts(V[:, :cut], E[:, :cut], r[:cut], spec, n_starts, seed)
    row_start = None
    for i, l1 in enumerate(grid):
        z = row_start
        for j, l2 in enumerate(grid):
            prob = _Problem(V[:, :cut], E[:, :cut], r[:cut], spec, "spacing", l1, l2)
            if z is None:
                w, u, _ = _fit(prob, starts)
            else:
                zz, _ = _solve(prob, z)
                w, u = softmax(zz[:m]), softmax(zz[m:])
            z = np.concatenate([np.log(np.maximum(w, 1e-300)), np.log(np.maximum(u, 1e-300))])
            z -= z.max()
            if j == 0:
                row_start = z
            scores[i, j] = prob_value(val, w, u)
    best = scores.min()
    ok = np.argwhere(scores <= best + OBJ_RTOL * (1 + abs(best)))
    i, j = max(map(tuple, ok))
    chosen = RidgeConfig(float(grid[i]), float(grid[j]), cfg.holdout_fraction)
    prob = _Problem(V, E, r, spec, "spacing", chosen.lambda1, chosen.lambda2)
    w, u, _ = _fit(prob, _starts(V, E, r, spec, max(n_starts, 1), seed))
    return w, u, chosen


def fit_ridge_fixed(V, E, r, spec: ScoreSpec, cfg: RidgeConfig, n_starts: int = 1, seed: int = 0):
    """Minimum score with fixed ridge penalties on the whole window."""
    V, E, r = (np.asarray(a, float) for a in (V, E, r))
    prob = _Problem(V, E, r, spec, "spacing", cfg.lambda1, cfg.lambda2)
    w, u, _ = _fit(prob, _starts(V, E, r, spec, n_starts, seed))
    return w, u


# ---------------------------------------------------------------------------
# combiner wrappers

class RelativeScore(Combiner):
    def __init__(self, spec: ScoreSpec = AL, median: bool = False):
        super().__init__(spec)
        self.median = median
        self.name = "relative_score_wmedian" if median else "relative_score"
        self.cfg = RelScoreConfig()
        self.weights = None

    def fit(self, V, E, r):
        self.cfg = optimize_temperature(V, E, r, self.spec, self.median)
        S = joint_score(self.spec, np.asarray(V, float), np.asarray(E, float),
                        np.asarray(r, float)[None, :]).sum(axis=1)
        self.weights = relative_score_weights(self.cfg, S)
        return self

    def predict(self, v, e):
        col = np.column_stack([v, e])
        f = weighted_median_combine if self.median else relative_score_combine
        p = f(self.weights, col)
        return p.var, p.es

    def state(self):
        return {"temperature": self.cfg.temperature}


class MinimumScore(Combiner):
    def __init__(self, spec: ScoreSpec = AL, mode: str = "spacing", n_starts: int = 10,
                 seed: int = 0):
        super().__init__(spec)
        self.mode = mode
        self.n_starts = n_starts
        self.seed = seed
        self.name = "minimum_score" if mode == "spacing" else "minimum_score_ratio"
        self.w = self.u = None

    def fit(self, V, E, r):
        self.w, self.u = fit_minimum_score(V, E, r, self.spec, self.mode, self.n_starts, self.seed)
        return self

    def predict(self, v, e):
        var, es = combine_with(self.w, self.u, np.asarray(v)[:, None], np.asarray(e)[:, None],
                               self.mode)
        return float(var[0]), float(min(es[0], var[0]))

    def state(self):
        return {"w_var": self.w.tolist(), "w_es": self.u.tolist()}


class MinimumScoreRidge(Combiner):
    name = "minimum_score_ridge"

    def __init__(self, spec: ScoreSpec = AL, grid=PENALTY_GRID, n_starts: int = 1, seed: int = 0):
        super().__init__(spec)
        self.grid = grid
        self.n_starts = n_starts
        self.seed = seed
        self.cfg = RidgeConfig()
        self.w = self.u = None

    def fit(self, V, E, r):
        self.w, self.u, self.cfg = fit_minimum_score_ridge(
            V, E, r, self.spec, RidgeConfig(), self.grid, self.n_starts, self.seed)
        return self

    def predict(self, v, e):
        var, es = combine_with(self.w, self.u, np.asarray(v)[:, None], np.asarray(e)[:, None],
                               "spacing")
        return float(var[0]), float(es[0])

    def state(self):
        return {"lambda1": self.cfg.lambda1, "lambda2": self.cfg.lambda2}
