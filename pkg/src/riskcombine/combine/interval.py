"""Combiners that treat each forecast as a distribution or as a point in the plane.

Probability averaging averages CDFs on a fixed x-grid and reads the combined
VaR and ES off the mean CDF. Depth combining picks the method whose
(VaR, ES) point is deepest in the cloud of all methods' points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from ..core import ForecastPair, NativeDist
from ..dist import CandidateGrid, cached_candidate_grid, fit_grid_indices, native_cdf, std_skewt_cdf
from ..score import AL, ScoreSpec
from .base import Combiner, as_column, as_pair

log = logging.getLogger(__name__)

X_GRID = np.linspace(-20.0, 20.0, 1000)


class GridRangeError(ValueError):
    """The mean CDF does not cross the probability level inside the x-grid."""


@dataclass(frozen=True)
class CdfCurve:
    xs: np.ndarray
    ps: np.ndarray

    def __post_init__(self):
        if self.xs.shape != self.ps.shape:
            raise ValueError("xs and ps differ in shape")
        if np.any(np.diff(self.ps) < 0) or self.ps.min() < 0 or self.ps.max() > 1:
            raise ValueError("CDF values must be nondecreasing within [0, 1]")


def method_cdf(pair: ForecastPair, native: NativeDist | None = None,
               grid: CandidateGrid | None = None, alpha: float = 0.025,
               xs: np.ndarray = X_GRID) -> CdfCurve:
    """CDF of one method on the x-grid.

    Uses the method's own parametric distribution when given, otherwise the
    skew-t grid cell whose VaR/ES is nearest to ``pair``.
    """
    if native is not None:
        return CdfCurve(xs, native_cdf(native, xs))
    grid = grid if grid is not None else cached_candidate_grid(alpha)
    idx = fit_grid_indices(grid, pair.var, pair.es)[0]
    return CdfCurve(xs, _grid_cdf(grid, idx[None, :], xs)[0])


def _grid_cdf(grid: CandidateGrid, idx: np.ndarray, xs: np.ndarray) -> np.ndarray:
    sig = grid.sigmas[idx[:, 0]]
    nu = grid.nus[idx[:, 1]]
    lam = grid.skews[idx[:, 2]]
    return np.clip(std_skewt_cdf(xs[None, :] / sig[:, None], nu[:, None], lam[:, None]), 0.0, 1.0)


def column_cdfs(v, e, natives: Sequence | None, grid: CandidateGrid, xs=X_GRID) -> np.ndarray:
    """M x len(xs) CDF values for a column, fitting all non-native methods at once."""
    m = len(v)
    natives = list(natives) if natives is not None else [None] * m
    out = np.empty((m, len(xs)))
    fit = [i for i in range(m) if natives[i] is None]
    if fit:
        idx = fit_grid_indices(grid, np.asarray(v)[fit], np.asarray(e)[fit])
        out[fit] = _grid_cdf(grid, idx, xs)
    for i in range(m):
        if natives[i] is not None:
            out[i] = native_cdf(natives[i], xs)
    return out


def mean_cdf(P: np.ndarray) -> np.ndarray:
    """Pointwise mean of the rows of P, exact when all rows are identical."""
    return P[0] + (P - P[0]).mean(axis=0)


def probability_average(curves, alpha: float = 0.025, strict: bool = False) -> ForecastPair:
    """VaR and ES of the pointwise mean of CDF curves.

    By default the VaR is interpolated linearly between the two grid points
    bracketing the level and the ES integral runs exactly up to that VaR,
    counting the partial cell, so the integrated mass is exactly ``alpha``
    (mass below the first grid point is placed at the first grid point).
    With ``strict`` the VaR is the first grid point whose mean CDF reaches the
    level and the ES sums midpoint-weighted CDF increments over the grid
    points up to that VaR.
    """
    if isinstance(curves, np.ndarray):
        xs, P = X_GRID, curves
    else:
        curves = list(curves)
        if not curves:
            raise ValueError("no curves to average")
        xs = curves[0].xs
        if any(not np.array_equal(c.xs, xs) for c in curves):
            raise ValueError("curves do not share an x-grid")
        P = np.stack([c.ps for c in curves])
    p = mean_cdf(P) if P.ndim == 2 else P
    above = np.flatnonzero(p >= alpha)
    if not len(above) or above[0] == 0:
        raise GridRangeError(
            f"mean CDF does not cross {alpha} inside [{xs[0]}, {xs[-1]}]")
    k = above[0]
    mids = 0.5 * (xs[1:] + xs[:-1])
    dp = np.diff(p)
    if strict:
        var = xs[k]
        es = float(np.sum(dp[:k] * mids[:k]) / alpha)
    else:
        x0, x1, p0, p1 = xs[k - 1], xs[k], p[k - 1], p[k]
        var = x0 + (alpha - p0) / (p1 - p0) * (x1 - x0) if p1 > p0 else x1
        es = (p[0] * xs[0] + np.sum(dp[:k - 1] * mids[:k - 1])
              + (alpha - p0) * 0.5 * (x0 + var)) / alpha
    var, es = float(var), float(es)
    assert es <= var + 1e-12 * (1 + abs(var)), "probability averaging produced es > var"
    return as_pair(var, min(es, var))


# ---------------------------------------------------------------------------
# depth

def _points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, float).reshape(-1, 2)
    v, e = as_column(points)
    return np.column_stack([v, e])


def _point(p) -> np.ndarray:
    if isinstance(p, ForecastPair):
        return np.array([p.var, p.es])
    return np.asarray(p, float).reshape(2)


def _rays(X: np.ndarray, p: np.ndarray):
    """Cross products, same-ray and opposite-ray masks of the nonzero directions."""
    d = X - p
    nz = np.any(d != 0, axis=1)
    d = d[nz]
    cross = d[:, None, 0] * d[None, :, 1] - d[:, None, 1] * d[None, :, 0]
    dot = d[:, None, 0] * d[None, :, 0] + d[:, None, 1] * d[None, :, 1]
    line = cross == 0
    return nz, cross, line & (dot > 0), line & (dot < 0)


def _max_open_halfplane(cross, same, opposite) -> int:
    if cross.shape[0] == 0:
        return 0
    a = (cross > 0).sum(axis=1) + opposite.sum(axis=1)
    b = (cross < 0).sum(axis=1) + same.sum(axis=1)
    return int(max(a.max(), b.max()))


def _halfspace_count(X: np.ndarray, q: np.ndarray) -> int:
    _, cross, same, opposite = _rays(X, q)
    return len(X) - _max_open_halfplane(cross, same, opposite)


def _simplicial_count(X: np.ndarray, q: np.ndarray) -> int:
    # a triangle misses q exactly when its vertices fit in an open half-plane
    # through q; each such triple is counted once, at its clockwise-most vertex
    _, cross, same, _ = _rays(X, q)
    n = cross.shape[0]
    later = np.triu(np.ones((n, n), bool), k=1)
    k = (cross > 0).sum(axis=1) + (same & later).sum(axis=1)
    return comb(len(X), 3) - int(np.sum(k * (k - 1) // 2))


def halfspace_depth(points, p) -> Fraction:
    """Tukey depth of ``p``: smallest fraction of points in a closed half-plane
    whose boundary passes through ``p``."""
    X, q = _points(points), _point(p)
    if len(X) < 1:
        raise ValueError("no points")
    return Fraction(_halfspace_count(X, q), len(X))


def simplicial_depth(points, p) -> Fraction:
    """Fraction of closed triangles with vertices in ``points`` containing ``p``."""
    X, q = _points(points), _point(p)
    if len(X) < 3:
        raise ValueError("simplicial depth needs at least three points")
    return Fraction(_simplicial_count(X, q), comb(len(X), 3))


def depth_all(points, notion: str) -> np.ndarray:
    """Depth of every data point as integer counts (over M or C(M, 3))."""
    X = _points(points)
    count = {"halfspace": _halfspace_count, "simplicial": _simplicial_count}.get(notion)
    if count is None:
        raise ValueError(f"unknown depth notion {notion!r}")
    return np.array([count(X, x) for x in X])


def deepest_index(points, notion: str = "halfspace") -> int:
    """Index of the deepest data point; ties go to the point nearest the
    componentwise median, then to the lowest index."""
    X = _points(points)
    if len(X) < 3:
        raise ValueError("depth combining needs at least three points")
    depth = depth_all(X, notion)
    cand = np.flatnonzero(depth == depth.max())
    if len(cand) == 1:
        return int(cand[0])
    med = np.median(X, axis=0)
    dist = np.sum((X[cand] - med) ** 2, axis=1)
    return int(cand[np.flatnonzero(dist == dist.min())[0]])


def deepest_combine(column, notion: str = "halfspace") -> ForecastPair:
    """The (VaR, ES) pair of the deepest method."""
    X = _points(column)
    i = deepest_index(X, notion)
    return as_pair(X[i, 0], X[i, 1])


# ---------------------------------------------------------------------------
# combiner wrappers

class ProbabilityAverage(Combiner):
    name = "probability_average"
    uses_native = True

    def __init__(self, spec: ScoreSpec = AL, grid: CandidateGrid | None = None,
                 strict: bool = False):
        super().__init__(spec)
        self.grid = grid
        self.strict = strict

    def predict(self, v, e, native=None):
        if self.grid is None:
            self.grid = cached_candidate_grid(self.spec.alpha)
        P = column_cdfs(v, e, native, self.grid)
        p = probability_average(mean_cdf(P), self.spec.alpha, self.strict)
        return p.var, p.es

    def __getstate__(self):
        # the grid is large; workers reload it from the disk cache
        state = self.__dict__.copy()
        state["grid"] = None
        return state


class DeepestPoint(Combiner):
    def __init__(self, notion: str, spec: ScoreSpec = AL):
        super().__init__(spec)
        self.notion = notion
        self.name = f"{notion}_deepest"

    def predict(self, v, e):
        i = deepest_index(np.column_stack([v, e]), self.notion)
        return float(v[i]), float(e[i])
