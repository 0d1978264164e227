"""Combinations of combined forecasts: smooth transition and the grand average."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ..core import ForecastPair
from ..score import AL, ScoreSpec, joint_score
from .base import Combiner, as_pair
from .central import _mean
from .weighted import OBJ_RTOL, RelativeScore

log = logging.getLogger(__name__)

STC_STARTS = ((0.0, 0.0), (2.0, 2.0), (2.0, -2.0), (-2.0, 2.0), (-2.0, -2.0))


@dataclass(frozen=True)
class StcParams:
    beta0: float = 0.0
    beta1: float = 0.0
    z_mean: float = 0.0
    z_sd: float = 1.0

    def __post_init__(self):
        if not self.z_sd > 0:
            raise ValueError("transition standard deviation must be positive")


def stc_weight(params: StcParams, z) -> np.ndarray | float:
    """Logistic weight on the first method given the raw transition variable."""
    zs = (np.asarray(z, float) - params.z_mean) / params.z_sd
    out = expit(params.beta0 + params.beta1 * zs)
    return out if np.ndim(out) else float(out)


def _blend(f, v1, e1, v2, e2):
    var = f * v1 + (1 - f) * v2
    gap = f * (v1 - e1) + (1 - f) * (v2 - e2)
    return var, var - np.maximum(gap, 0.0)


def stc_combine(params: StcParams, pair1: ForecastPair, pair2: ForecastPair, z) -> ForecastPair:
    """Blend the VaRs and the spacings of two forecasts with the transition weight."""
    f = stc_weight(params, z)
    var, es = _blend(f, pair1.var, pair1.es, pair2.var, pair2.es)
    return as_pair(var, es)


def stc_objective(beta, z_std, va, ea, vb, eb, r, spec: ScoreSpec = AL) -> float:
    f = expit(beta[0] + beta[1] * z_std)
    v, e = _blend(f, va, ea, vb, eb)
    return float(np.mean(joint_score(spec, v, e, r)))


def fit_stc(va, ea, vb, eb, z, r, spec: ScoreSpec = AL) -> StcParams:
    """Fit (beta0, beta1) by minimizing the in-sample average score.

    The transition variable is standardized with its training mean and
    standard deviation. Nelder-Mead runs from five fixed starts; a start only
    replaces the flat (0, 0) solution when it is strictly better.
    """
    va, ea, vb, eb, z, r = (np.asarray(a, float) for a in (va, ea, vb, eb, z, r))
    if r.size < 100:
        raise ValueError("smooth transition fitting needs at least 100 training days")
    mu, sd = float(z.mean()), float(z.std())
    if not sd > 0:
        sd = 1.0
    zs = (z - mu) / sd
    f = lambda b: stc_objective(b, zs, va, ea, vb, eb, r, spec)
    best_b, best_f = np.zeros(2), f(np.zeros(2))
    for s in STC_STARTS:
        res = minimize(f, np.array(s), method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 2000})
        if res.fun < best_f - OBJ_RTOL * (1 + abs(best_f)):
            best_b, best_f = res.x, float(res.fun)
    return StcParams(float(best_b[0]), float(best_b[1]), mu, sd)


def grand_average(pairs: Sequence) -> ForecastPair:
    """Componentwise mean of the available combined forecasts (``None`` = failed)."""
    ok = [p for p in pairs if p is not None]
    failed = len(pairs) - len(ok)
    if failed:
        log.info("grand average: %d of %d combiners unavailable", failed, len(pairs))
    if not ok:
        raise ValueError("all combiners failed")
    v = np.array([p[0] if isinstance(p, tuple) else p.var for p in ok])
    e = np.array([p[1] if isinstance(p, tuple) else p.es for p in ok])
    return as_pair(_mean(v), _mean(e))


class SmoothTransition(Combiner):
    """Blend of the simple average and relative-score combining driven by the
    cross-method mean VaR."""

    name = "stc"

    def __init__(self, spec: ScoreSpec = AL):
        super().__init__(spec)
        self.inner = RelativeScore(spec)
        self.params = StcParams()

    def fit(self, V, E, r):
        V, E = np.asarray(V, float), np.asarray(E, float)
        self.inner.fit(V, E, r)
        w = self.inner.weights
        va, ea = V.mean(axis=0), E.mean(axis=0)
        vb, eb = w @ V, w @ E
        self.params = fit_stc(va, ea, vb, eb, va, r, self.spec)
        return self

    def predict(self, v, e):
        va, ea = _mean(np.asarray(v)), _mean(np.asarray(e))
        vb, eb = self.inner.predict(v, e)
        var, es = _blend(stc_weight(self.params, va), va, ea, vb, eb)
        return float(var), float(es)

    def state(self):
        return {"beta0": self.params.beta0, "beta1": self.params.beta1}
