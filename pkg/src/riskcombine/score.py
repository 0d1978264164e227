"""Joint VaR/ES scoring functions.

Every score has the form

    S(v, e, r) = (I - a) G1(v) - I G1(r) + G2(e) (e - v + I (v - r) / a)
                 - zeta2(e) + A(r),      I = 1{r <= v},

with ``a`` the probability level. The five variants differ in the choice of
(G1, G2, zeta2, A):

====  ===========  ==================  =============  ===============
name  G1(x)        G2(x)               zeta2(x)       A(x)
====  ===========  ==================  =============  ===============
QS    x            0                   0              a x
AL    0            -1/x                -ln(-x)        1 - ln(1 - a)
NZ    0            (-x)^(-1/2) / 2     -(-x)^(1/2)    0
FZG   x            e^x / (1 + e^x)     ln(1 + e^x)    ln 2
AS    -W x^2 / 2   a x                 a x^2 / 2      0
====  ===========  ==================  =============  ===============
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import DataError, ForecastPool, check_alpha

VARIANTS = ("QS", "AL", "NZ", "FZG", "AS")

# es must stay strictly below this for the log / sqrt based scores
ES_CEILING = -1e-12


@dataclass(frozen=True)
class ScoreSpec:
    variant: str = "AL"
    alpha: float = 0.025
    w: float = 4.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown score variant {self.variant!r}; expected one of {VARIANTS}")
        check_alpha(self.alpha)
        if not self.w > 0:
            raise ValueError("W must be positive")


AL = ScoreSpec("AL")


def _softplus(x):
    return np.logaddexp(0.0, x)


def joint_score(spec: ScoreSpec, var, es, r):
    """Score of VaR/ES forecasts against realized returns (broadcasts)."""
    v = np.asarray(var, dtype=float)
    e = np.asarray(es, dtype=float)
    r = np.asarray(r, dtype=float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(e)) and np.all(np.isfinite(r))):
        raise ValueError("non-finite input to joint_score")
    a = spec.alpha
    hit = (r <= v).astype(float)
    kind = spec.variant
    if kind == "QS":
        out = (hit - a) * (v - r)
    elif kind == "AL":
        if np.any(e >= ES_CEILING):
            raise ValueError("AL score requires es < 0")
        out = -(e - v + hit * (v - r) / a) / e + np.log(-e) + 1.0 - np.log1p(-a)
    elif kind == "NZ":
        if np.any(e >= ES_CEILING):
            raise ValueError("NZ score requires es < 0")
        s = np.sqrt(-e)
        out = (e - v + hit * (v - r) / a) / (2.0 * s) + s
    elif kind == "FZG":
        out = ((hit - a) * v - hit * r + expit(e) * (e - v + hit * (v - r) / a)
               - _softplus(e) + np.log(2.0))
    else:  # AS
        g1 = lambda x: -0.5 * spec.w * x * x
        out = ((hit - a) * g1(v) - hit * g1(r) + a * e * (e - v + hit * (v - r) / a)
               - 0.5 * a * e * e)
    return out if out.ndim else float(out)


def score_gradient(spec: ScoreSpec, var, es, r):
    """Almost-everywhere partial derivatives (dS/dvar, dS/des)."""
    v = np.asarray(var, dtype=float)
    e = np.asarray(es, dtype=float)
    r = np.asarray(r, dtype=float)
    a = spec.alpha
    hit = (r <= v).astype(float)
    inner = e - v + hit * (v - r) / a
    kind = spec.variant
    if kind == "QS":
        return hit - a, np.zeros(np.broadcast(v, e, r).shape)
    if kind == "AL":
        return -(hit / a - 1.0) / e, inner / (e * e)
    if kind == "NZ":
        s = np.sqrt(-e)
        return (hit / a - 1.0) / (2.0 * s), inner / (4.0 * s ** 3)
    if kind == "FZG":
        p = expit(e)
        return (hit - a) + p * (hit / a - 1.0), p * (1.0 - p) * inner
    # AS
    return (hit - a) * (-spec.w * v) + a * e * (hit / a - 1.0), a * inner


def average_score(spec: ScoreSpec, forecasts: Sequence, returns: Sequence[float]) -> float:
    """Mean joint score over a span of (VaR, ES) forecasts."""
    if len(forecasts) != len(returns):
        raise ValueError("forecasts and returns differ in length")
    if len(forecasts) == 0:
        raise ValueError("empty forecast span")
    if isinstance(forecasts, np.ndarray) and forecasts.ndim == 2:
        v, e = forecasts[:, 0], forecasts[:, 1]
    else:
        v = np.array([f[0] if isinstance(f, tuple) else f.var for f in forecasts])
        e = np.array([f[1] if isinstance(f, tuple) else f.es for f in forecasts])
    return float(np.mean(joint_score(spec, v, e, np.asarray(returns, float))))


def score_matrix(spec: ScoreSpec, pool: ForecastPool, returns) -> np.ndarray:
    """M x T matrix of daily scores for every method in the pool."""
    r = np.asarray(returns, dtype=float)
    if r.shape != (pool.shape[1],):
        raise DataError(f"returns length {r.shape} does not match pool origins {pool.shape[1]}")
    return joint_score(spec, pool.var, pool.es, r[None, :])


def save_score_matrix(pool: ForecastPool, scores: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method_id", "date", "score"])
        for m, mid in enumerate(pool.method_ids):
            for t, d in enumerate(pool.origins):
                w.writerow([mid, str(d), repr(float(scores[m, t]))])
