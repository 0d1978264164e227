"""Central-tendency combiners: mean, median, KDE mode and trimmed means.

All trimmed means sort the M VaR forecasts and the M ES forecasts
separately (ascending) and average a contiguous block of order statistics
of each. The kinds differ only in which block is kept:

===========  ===============  ===============
kind         VaR kept         ES kept
===========  ===============  ===============
symmetric    [n, M - n)       [n, M - n)
exterior     [0, M - n)       [n, M)
interior     [n, M)           [0, M - n)
lower        [n, M)           [n, M)
higher       [0, M - n)       [0, M - n)
flexible     see below        see below
===========  ===============  ===============

For the flexible kind a positive count trims from the low end and a
negative count from the high end, separately for VaR and ES.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..core import ForecastPair
from ..score import AL, ScoreSpec, joint_score
from .base import Combiner, as_column, as_pair

log = logging.getLogger(__name__)

TRIM_KINDS = ("symmetric", "exterior", "interior", "lower", "higher", "flexible")

# objectives this close to the minimum are treated as ties
TIE_RTOL = 1e-12


def _mean(x: np.ndarray) -> float:
    # summing in sorted order makes the result independent of method order
    return float(np.sum(np.sort(x)) / x.size)


def simple_average(column) -> ForecastPair:
    """Componentwise arithmetic mean of the column."""
    v, e = as_column(column)
    return as_pair(_mean(v), _mean(e))


def median_combine(column) -> ForecastPair:
    """Componentwise median; even M takes the midpoint of the central pair."""
    v, e = as_column(column)
    return as_pair(np.median(v), np.median(e))


# ---------------------------------------------------------------------------
# trimmed means

@dataclass(frozen=True)
class TrimSpec:
    kind: str
    n: int = 0
    n_var: int = 0
    n_es: int = 0

    def __post_init__(self):
        if self.kind not in TRIM_KINDS:
            raise ValueError(f"unknown trim kind {self.kind!r}")

    def validate(self, m: int) -> None:
        if self.kind == "flexible":
            if abs(self.n_var) > m - 1 or abs(self.n_es) > m - 1:
                raise ValueError(f"flexible trim ({self.n_var}, {self.n_es}) too large for M={m}")
            return
        top = max_trim(self.kind, m)
        if not 0 <= self.n <= top:
            raise ValueError(f"{self.kind} trim n={self.n} outside [0, {top}] for M={m}")


def max_trim(kind: str, m: int) -> int:
    if kind == "symmetric":
        return max(0, (m - 2) // 2)
    return m - 1


def _flex_slice(n: int, m: int) -> tuple[int, int]:
    return (n, m) if n >= 0 else (0, m + n)


def trim_slices(spec: TrimSpec, m: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Kept index ranges ``(lo, hi)`` into the sorted VaRs and sorted ESs."""
    n = spec.n
    if spec.kind == "symmetric":
        return (n, m - n), (n, m - n)
    if spec.kind == "exterior":
        return (0, m - n), (n, m)
    if spec.kind == "interior":
        return (n, m), (0, m - n)
    if spec.kind == "lower":
        return (n, m), (n, m)
    if spec.kind == "higher":
        return (0, m - n), (0, m - n)
    return _flex_slice(spec.n_var, m), _flex_slice(spec.n_es, m)


def as_flexible(spec: TrimSpec) -> TrimSpec:
    """The flexible counts that keep the same blocks as a one-sided kind."""
    n = spec.n
    signs = {"exterior": (-1, 1), "interior": (1, -1), "lower": (1, 1), "higher": (-1, -1)}
    if spec.kind == "flexible":
        return spec
    if spec.kind == "symmetric":
        if n:
            raise ValueError("symmetric trimming removes both ends and has no flexible equivalent")
        return TrimSpec("flexible", 0, 0, 0)
    sv, se = signs[spec.kind]
    return TrimSpec("flexible", 0, sv * n, se * n)


def trimmed_combine(column, spec: TrimSpec, counter: Counter | None = None) -> ForecastPair:
    """Sort, trim and average VaRs and ESs separately.

    A combined ES above the combined VaR is clamped to the VaR; each clamp is
    added to ``counter[spec.kind]`` when a counter is given.
    """
    v, e = as_column(column)
    m = v.size
    spec.validate(m)
    (a, b), (c, d) = trim_slices(spec, m)
    if b <= a or d <= c:
        raise ValueError("over-trimming: no forecast survives")
    sv, se = np.sort(v), np.sort(e)
    var = float(np.sum(sv[a:b]) / (b - a))
    es = float(np.sum(se[c:d]) / (d - c))
    if es > var:
        log.debug("%s trim crossed (var=%r, es=%r); clamping", spec.kind, var, es)
        if counter is not None:
            counter[spec.kind] += 1
        es = var
    return as_pair(var, es)


def _block_means(S: np.ndarray, los, his) -> np.ndarray:
    """Means of sorted blocks [lo, hi) for each (lo, hi), per day. S is M x W."""
    C = np.vstack([np.zeros((1, S.shape[1])), np.cumsum(S, axis=0)])
    los = np.asarray(los)
    his = np.asarray(his)
    return (C[his] - C[los]) / (his - los)[:, None]


def _slack(x):
    # cumulative-sum block means carry rounding error the exact sums do not
    return 1e-12 * (1.0 + np.abs(x))


def _pick(objs: np.ndarray, keys: list) -> int:
    """Index of the minimum objective, ties resolved by smallest key."""
    finite = np.isfinite(objs)
    if not finite.any():
        return -1
    best = objs[finite].min()
    ok = np.flatnonzero(finite & (objs <= best + TIE_RTOL * (1.0 + abs(best))))
    return int(min(ok, key=lambda i: keys[i]))


def trim_candidates(kind: str, m: int) -> list[TrimSpec]:
    if kind == "flexible":
        ns = range(-(m - 1), m)
        return [TrimSpec("flexible", 0, a, b) for a in ns for b in ns]
    return [TrimSpec(kind, n) for n in range(max_trim(kind, m) + 1)]


def _trim_key(s: TrimSpec):
    if s.kind == "flexible":
        return (abs(s.n_var) + abs(s.n_es), abs(s.n_var), s.n_var, s.n_es)
    return (s.n,)


def trim_objectives(kind: str, V: np.ndarray, E: np.ndarray, r: np.ndarray,
                    spec: ScoreSpec = AL) -> tuple[list[TrimSpec], np.ndarray]:
    """Average in-sample score of every legal trim; crossing candidates get inf."""
    m = V.shape[0]
    SV, SE = np.sort(V, axis=0), np.sort(E, axis=0)
    cands = trim_candidates(kind, m)
    if kind == "flexible":
        ns = np.arange(-(m - 1), m)
        lo = np.where(ns >= 0, ns, 0)
        hi = np.where(ns >= 0, m, m + ns)
        mv, me = _block_means(SV, lo, hi), _block_means(SE, lo, hi)
        k = len(ns)
        objs = np.full(k * k, np.inf)
        for i in range(k):
            ok = np.all(me <= mv[i] + _slack(mv[i]), axis=1)
            if not ok.any():
                continue
            sc = joint_score(spec, mv[i][None, :], me[ok], r[None, :]).mean(axis=1)
            row = np.full(k, np.inf)
            row[ok] = sc
            objs[i * k:(i + 1) * k] = row
        return cands, objs
    sl = [trim_slices(c, m) for c in cands]
    mv = _block_means(SV, [s[0][0] for s in sl], [s[0][1] for s in sl])
    me = _block_means(SE, [s[1][0] for s in sl], [s[1][1] for s in sl])
    objs = np.full(len(cands), np.inf)
    ok = np.all(me <= mv + _slack(mv), axis=1)
    if ok.any():
        objs[ok] = joint_score(spec, mv[ok], me[ok], r[None, :]).mean(axis=1)
    return cands, objs


def optimize_trim(kind: str, V, E, r, spec: ScoreSpec = AL) -> TrimSpec:
    """Exhaustive search for the trim minimizing in-sample average score.

    ``V`` and ``E`` are M x W training forecasts (e.g. ``pool.var``), ``r`` the
    W aligned returns. Candidates whose combined ES crosses the VaR on any
    training day are excluded; if all are excluded n = 0 is returned.
    """
    V = np.asarray(V, float)
    E = np.asarray(E, float)
    r = np.asarray(r, float)
    if V.shape[1] < 50:
        raise ValueError("trim optimization needs at least 50 training days")
    cands, objs = trim_objectives(kind, V, E, r, spec)
    i = _pick(objs, [_trim_key(c) for c in cands])
    if i < 0:
        log.warning("every %s trim crosses in-sample; falling back to n=0", kind)
        return TrimSpec(kind)
    return cands[i]


# ---------------------------------------------------------------------------
# KDE mode

BANDWIDTH_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)
KDE_GRID = 512
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class KdeSpec:
    bandwidth_var: float
    bandwidth_spacing: float
    kernel: str = "gaussian"

    def __post_init__(self):
        if not (self.bandwidth_var > 0 and self.bandwidth_spacing > 0):
            raise ValueError("KDE bandwidths must be positive")
        if self.kernel != "gaussian":
            raise ValueError("only the Gaussian kernel is supported")


def silverman(x: np.ndarray) -> np.ndarray:
    """Silverman's rule-of-thumb bandwidth along the last axis."""
    x = np.asarray(x, float)
    n = x.shape[-1]
    sd = x.std(axis=-1, ddof=1) if n > 1 else np.zeros(x.shape[:-1])
    q75, q25 = np.percentile(x, [75, 25], axis=-1)
    spread = np.minimum(sd, (q75 - q25) / 1.34)
    spread = np.where(spread > 0, spread, sd)
    h = 0.9 * spread * n ** -0.2
    return np.where(h > 0, h, 1.0)


def _density(g: np.ndarray, X: np.ndarray, h: np.ndarray) -> np.ndarray:
    # g: (N, K) evaluation points, X: (N, M) data, h: (N,) bandwidths
    z = (g[:, :, None] - X[:, None, :]) / h[:, None, None]
    return np.exp(-0.5 * z * z).sum(axis=2)


def kde_modes(X, h, chunk: int = 64) -> np.ndarray:
    """Mode of the Gaussian KDE of each row of ``X`` with bandwidth ``h``.

    The argmax is first located on a 512-point grid over
    [min - 3h, max + 3h] (ties go to the most negative grid point) and then
    refined by golden-section search between the neighbouring grid points.
    """
    X = np.atleast_2d(np.asarray(X, float))
    h = np.broadcast_to(np.asarray(h, float), X.shape[:1]).copy()
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        x, hh = X[s:s + chunk], h[s:s + chunk]
        lo = x.min(axis=1) - 3 * hh
        hi = x.max(axis=1) + 3 * hh
        t = np.linspace(0.0, 1.0, KDE_GRID)
        g = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        dens = _density(g, x, hh)
        top = dens.max(axis=1, keepdims=True)
        k = np.argmax(dens >= top * (1.0 - TIE_RTOL), axis=1)
        rows = np.arange(len(k))
        a = g[rows, np.maximum(k - 1, 0)]
        b = g[rows, np.minimum(k + 1, KDE_GRID - 1)]
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc = _density(c[:, None], x, hh)[:, 0]
        fd = _density(d[:, None], x, hh)[:, 0]
        for _ in range(60):
            left = fc >= fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            nc = b - _GOLDEN * (b - a)
            nd = a + _GOLDEN * (b - a)
            c, d = np.where(left, nc, d), np.where(left, c, nd)
            fnew = _density(np.where(left, c, d)[:, None], x, hh)[:, 0]
            fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        mode = 0.5 * (a + b)
        flat = x.max(axis=1) == x.min(axis=1)
        mode[flat] = x[flat, 0]
        out[s:s + chunk] = mode
    return out


def mode_combine(column, spec: KdeSpec) -> ForecastPair:
    """VaR from the KDE mode of the VaRs, ES via the KDE mode of the spacings."""
    v, e = as_column(column)
    if v.size < 2:
        raise ValueError("mode combining needs at least two forecasts")
    var = kde_modes(v[None, :], spec.bandwidth_var)[0]
    gap = max(kde_modes((v - e)[None, :], spec.bandwidth_spacing)[0], 0.0)
    return as_pair(var, var - gap)


# ---------------------------------------------------------------------------
# combiner wrappers

class SimpleAverage(Combiner):
    name = "simple_average"

    def predict(self, v, e):
        p = simple_average(np.column_stack([v, e]))
        return p.var, p.es


class Median(Combiner):
    name = "median"

    def predict(self, v, e):
        return float(np.median(v)), float(np.median(e))


class TrimmedMean(Combiner):
    """Trimmed mean whose trimming parameter is re-optimized at each fit."""

    def __init__(self, kind: str, spec: ScoreSpec = AL):
        super().__init__(spec)
        self.kind = kind
        self.name = f"trim_{kind}"
        self.trim = TrimSpec(kind)
        self.clamps = Counter()

    def fit(self, V, E, r):
        self.trim = optimize_trim(self.kind, V, E, r, self.spec)
        return self

    def predict(self, v, e):
        p = trimmed_combine(np.column_stack([v, e]), self.trim, self.clamps)
        return p.var, p.es

    def state(self):
        t = self.trim
        return {"n_var": t.n_var, "n_es": t.n_es} if t.kind == "flexible" else {"n": t.n}


class KdeMode(Combiner):
    """KDE mode with bandwidth multipliers chosen by in-sample score.

    Bandwidths are the chosen multiples of Silverman's rule applied to the
    column being combined. Per-column modes are cached, so refitting on a
    rolling window only computes modes for new days.
    """

    name = "mode"

    def __init__(self, spec: ScoreSpec = AL, multipliers=BANDWIDTH_MULTIPLIERS):
        super().__init__(spec)
        self.multipliers = tuple(multipliers)
        self.k_var = 1.0
        self.k_spacing = 1.0
        self._cache: dict = {}

    def _modes(self, X: np.ndarray) -> np.ndarray:
        """(len(multipliers), W) modes of each column of the M x W array X."""
        out = np.empty((len(self.multipliers), X.shape[1]))
        keys = [X[:, j].tobytes() for j in range(X.shape[1])]
        todo = [j for j, k in enumerate(keys) if k not in self._cache]
        if todo:
            cols = X[:, todo].T
            base = silverman(cols)
            fresh = np.stack([kde_modes(cols, f * base) for f in self.multipliers])
            for i, j in enumerate(todo):
                self._cache[keys[j]] = fresh[:, i]
        for j, k in enumerate(keys):
            out[:, j] = self._cache[k]
        return out

    def fit(self, V, E, r):
        V = np.asarray(V, float)
        mv = self._modes(V)
        ms = np.maximum(self._modes(V - np.asarray(E, float)), 0.0)
        r = np.asarray(r, float)
        k = len(self.multipliers)
        objs = np.empty(k * k)
        for i in range(k):
            objs[i * k:(i + 1) * k] = joint_score(
                self.spec, mv[i][None, :], mv[i][None, :] - ms, r[None, :]).mean(axis=1)
        dist = [abs(np.log(f)) for f in self.multipliers]
        keys = [(dist[i] + dist[j], self.multipliers[i], self.multipliers[j])
                for i in range(k) for j in range(k)]
        best = _pick(objs, keys)
        self.k_var = self.multipliers[best // k]
        self.k_spacing = self.multipliers[best % k]
        if len(self._cache) > 50_000:
            self._cache.clear()
        return self

    def kde_spec(self, v, e) -> KdeSpec:
        return KdeSpec(self.k_var * float(silverman(v)), self.k_spacing * float(silverman(v - e)))

    def predict(self, v, e):
        p = mode_combine(np.column_stack([v, e]), self.kde_spec(v, e))
        return p.var, p.es

    def state(self):
        return {"k_var": self.k_var, "k_spacing": self.k_spacing}
