"""Gaussian, Student-t and Hansen skewed-t distributions with VaR/ES extraction,
plus the skew-t candidate grid used to infer a CDF from a (VaR, ES) pair.

The skewed t is Hansen's standardized form (zero mean, unit variance), scaled
by ``sigma``. Quantiles and lower partial moments are evaluated in closed form
through the Student-t CDF on each side of the mode.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .core import ForecastPair, NativeDist, check_alpha

log = logging.getLogger(__name__)


def gaussian_var_es(mean: float, sd: float, alpha: float) -> ForecastPair:
    if not sd > 0:
        raise ValueError("sd must be positive")
    alpha = check_alpha(alpha)
    z = stats.norm.ppf(alpha)
    return ForecastPair(mean + sd * z, mean - sd * stats.norm.pdf(z) / alpha)


@dataclass(frozen=True)
class SkewTParams:
    sigma: float = 1.0
    nu: float = 8.0
    skew: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.nu > 2:
            raise ValueError("nu must exceed 2")
        if not -1 < self.skew < 1:
            raise ValueError("skew must lie in (-1, 1)")


def _hansen_consts(nu, lam):
    nu = np.asarray(nu, float)
    lam = np.asarray(lam, float)
    c = np.exp(gammaln((nu + 1) / 2) - gammaln(nu / 2)) / np.sqrt(np.pi * (nu - 2))
    a = 4 * lam * c * (nu - 2) / (nu - 1)
    b = np.sqrt(1 + 3 * lam ** 2 - a ** 2)
    s = np.sqrt(nu / (nu - 2))
    return a, b, s


def std_skewt_pdf(z, nu, lam):
    z = np.asarray(z, float)
    a, b, _ = _hansen_consts(nu, lam)
    c = np.exp(gammaln((nu + 1) / 2) - gammaln(nu / 2)) / np.sqrt(np.pi * (nu - 2))
    k = np.where(z < -a / b, 1 - lam, 1 + lam)
    return b * c * (1 + ((b * z + a) / k) ** 2 / (nu - 2)) ** (-(nu + 1) / 2)


def std_skewt_logpdf(z, nu, lam):
    z = np.asarray(z, float)
    a, b, _ = _hansen_consts(nu, lam)
    logc = gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * np.log(np.pi * (nu - 2))
    k = np.where(z < -a / b, 1 - lam, 1 + lam)
    return np.log(b) + logc - (nu + 1) / 2 * np.log1p(((b * z + a) / k) ** 2 / (nu - 2))


def std_skewt_cdf(z, nu, lam):
    z = np.asarray(z, float)
    a, b, s = _hansen_consts(nu, lam)
    y = b * z + a
    left = (1 - lam) * stats.t.cdf(s * y / (1 - lam), nu)
    # upper branch written via the survival function: monotone and exact near 1
    right = 1 - (1 + lam) * stats.t.sf(s * y / (1 + lam), nu)
    return np.clip(np.where(z < -a / b, left, right), 0.0, 1.0)


def std_skewt_ppf(p, nu, lam):
    p = np.asarray(p, float)
    a, b, s = _hansen_consts(nu, lam)
    lo = p < (1 - lam) / 2
    y_left = stats.t.ppf(np.where(lo, p, 0.25) / (1 - lam), nu)
    pr = np.where(lo, 0.75, p)
    y_right = stats.t.ppf(0.5 + (pr - (1 - lam) / 2) / (1 + lam), nu)
    y = np.where(lo, (1 - lam) * y_left, (1 + lam) * y_right) / s
    return (y - a) / b


def _t_partial(y, nu):
    """Integral of u * t_nu(u) du over (-inf, y]."""
    return -(nu + y * y) / (nu - 1) * stats.t.pdf(y, nu)


def std_skewt_var_es(alpha, nu, lam):
    """Standardized skew-t alpha-quantile and lower tail mean (broadcasts)."""
    nu = np.asarray(nu, float)
    lam = np.asarray(lam, float)
    a, b, s = _hansen_consts(nu, lam)
    q = std_skewt_ppf(alpha, nu, lam)
    lo = alpha < (1 - lam) / 2
    y_l = stats.t.ppf(np.minimum(alpha / (1 - lam), 0.5), nu)
    pm_left = (1 - lam) / b * ((1 - lam) / s * _t_partial(y_l, nu)
                               - a * stats.t.cdf(y_l, nu))
    y_r = stats.t.ppf(np.clip(0.5 + (alpha - (1 - lam) / 2) / (1 + lam), 0.5, 1.0), nu)
    pm_right = (1 + lam) / b * ((1 + lam) / s * (_t_partial(y_r, nu) - _t_partial(0.0, nu))
                                - a * (stats.t.cdf(y_r, nu) - 0.5))
    partial = np.where(lo, pm_left, pm_left + pm_right)
    return q, partial / alpha


def skewt_cdf(p: SkewTParams, x):
    return std_skewt_cdf(np.asarray(x, float) / p.sigma, p.nu, p.skew)


def skewt_pdf(p: SkewTParams, x):
    return std_skewt_pdf(np.asarray(x, float) / p.sigma, p.nu, p.skew) / p.sigma


def skewt_ppf(p: SkewTParams, prob):
    return p.sigma * std_skewt_ppf(prob, p.nu, p.skew)


def skewt_var_es(p: SkewTParams, alpha: float) -> ForecastPair:
    alpha = check_alpha(alpha)
    q, e = std_skewt_var_es(alpha, p.nu, p.skew)
    return ForecastPair(float(p.sigma * q), float(p.sigma * e))


def native_cdf(nd: NativeDist, x):
    """CDF of a forecaster's parametric predictive distribution."""
    z = (np.asarray(x, float) - nd.loc) / nd.scale
    if nd.family == "gaussian":
        return stats.norm.cdf(z)
    if nd.family == "t":
        return std_skewt_cdf(z, nd.nu, 0.0)
    if nd.family == "skewt":
        return std_skewt_cdf(z, nd.nu, nd.skew)
    raise ValueError(f"unknown native family {nd.family!r}")


def native_var_es(nd: NativeDist, alpha: float) -> ForecastPair:
    if nd.family == "gaussian":
        return gaussian_var_es(nd.loc, nd.scale, alpha)
    lam = nd.skew if nd.family == "skewt" else 0.0
    q, e = std_skewt_var_es(alpha, nd.nu, lam)
    return ForecastPair(float(nd.loc + nd.scale * q), float(nd.loc + nd.scale * e))


# ----------------------------------------------------------------------------
# candidate grid

GRID_VERSION = 1
GRID_MAGIC = b"RCGRID\x00"


def half_open_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` equally spaced points in (lo, hi], returned in ascending order."""
    step = (hi - lo) / n
    return (hi - np.arange(n) * step)[::-1].copy()


def open_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` equally spaced interior points of (lo, hi)."""
    return np.linspace(lo, hi, n + 2)[1:-1]


@dataclass(frozen=True, eq=False)
class CandidateGrid:
    """Skew-t (VaR, ES) candidates over a sigma x nu x skew lattice.

    ``std_var`` and ``std_es`` hold the standardized quantile and tail mean for
    each (nu, skew) cell; the candidate for ``(i, j, k)`` is
    ``sigmas[i] * (std_var[j, k], std_es[j, k])``.
    """

    alpha: float
    sigmas: np.ndarray
    nus: np.ndarray
    skews: np.ndarray
    std_var: np.ndarray
    std_es: np.ndarray
    _pairs: list = field(default_factory=list, repr=False)

    @property
    def shape(self) -> tuple:
        return (len(self.sigmas), len(self.nus), len(self.skews))

    @property
    def var_es(self) -> np.ndarray:
        """Full (n_sigma, n_nu, n_skew, 2) array of candidate pairs."""
        if not self._pairs:
            out = np.empty(self.shape + (2,))
            out[..., 0] = self.sigmas[:, None, None] * self.std_var[None]
            out[..., 1] = self.sigmas[:, None, None] * self.std_es[None]
            self._pairs.append(out)
        return self._pairs[0]

    def slice_var_es(self, i: int) -> np.ndarray:
        """Candidate pairs for one sigma value, shape (n_nu, n_skew, 2)."""
        return np.stack([self.sigmas[i] * self.std_var, self.sigmas[i] * self.std_es], axis=-1)

    def params(self, idx) -> SkewTParams:
        i, j, k = idx
        return SkewTParams(float(self.sigmas[i]), float(self.nus[j]), float(self.skews[k]))


DEFAULT_RANGES = {"sigma": (0.0, 10.0, 300), "nu": (2.0, 30.0, 100), "skew": (-1.0, 1.0, 200)}


def build_candidate_grid(alpha: float = 0.025, ranges: dict | None = None,
                         eager: bool = True) -> CandidateGrid:
    """Precompute skew-t VaR/ES candidates.

    Sigma and nu use the half-open convention (lo, hi]; skew uses interior
    points of the open interval. With ``eager=False`` the full pair array is
    only materialized on first access of ``var_es``.
    """
    alpha = check_alpha(alpha)
    rg = dict(DEFAULT_RANGES)
    rg.update(ranges or {})
    sigmas = half_open_grid(*rg["sigma"])
    nus = half_open_grid(*rg["nu"])
    skews = open_grid(*rg["skew"])
    q, e = std_skewt_var_es(alpha, nus[:, None], skews[None, :])
    grid = CandidateGrid(alpha, sigmas, nus, skews, q, e)
    if eager:
        grid.var_es
    return grid


def save_grid(grid: CandidateGrid, path) -> None:
    header = json.dumps({
        "version": GRID_VERSION,
        "alpha": grid.alpha,
        "dims": list(grid.shape),
        "endpoints": "sigma,nu: (lo,hi] right-inclusive; skew: open interior",
    }).encode()
    with Path(path).open("wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for arr in (grid.sigmas, grid.nus, grid.skews, grid.std_var, grid.std_es, grid.var_es):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_grid(path) -> CandidateGrid:
    with Path(path).open("rb") as fh:
        if fh.read(len(GRID_MAGIC)) != GRID_MAGIC:
            raise ValueError(f"{path} is not a candidate-grid file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        if header.get("version") != GRID_VERSION:
            raise ValueError(f"unsupported grid version {header.get('version')}")
        ns, nn, nk = header["dims"]

        def read(count):
            return np.frombuffer(fh.read(8 * count), dtype="<f8").astype(float)

        sigmas, nus, skews = read(ns), read(nn), read(nk)
        q = read(nn * nk).reshape(nn, nk)
        e = read(nn * nk).reshape(nn, nk)
        pairs = read(ns * nn * nk * 2).reshape(ns, nn, nk, 2)
    return CandidateGrid(header["alpha"], sigmas, nus, skews, q, e, [pairs])


def grid_cache_dir() -> Path:
    return Path(os.environ.get("RISKCOMBINE_CACHE", Path.home() / ".cache" / "riskcombine"))


def cached_candidate_grid(alpha: float = 0.025, cache_dir=None) -> CandidateGrid:
    """Load the default grid for ``alpha`` from disk, building it on a miss."""
    cache_dir = Path(cache_dir) if cache_dir is not None else grid_cache_dir()
    path = cache_dir / f"skewt_grid_a{alpha:.6f}_v{GRID_VERSION}.bin"
    if path.exists():
        try:
            return load_grid(path)
        except (ValueError, OSError) as exc:
            log.warning("ignoring unreadable grid cache %s: %s", path, exc)
    grid = build_candidate_grid(alpha)
    try:
        cache_dir.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        save_grid(grid, tmp)
        tmp.replace(path)
    except OSError as exc:
        log.warning("could not write grid cache %s: %s", path, exc)
    return grid


def fit_grid_indices(grid: CandidateGrid, var, es, chunk: int = 128) -> np.ndarray:
    """Grid index (i_sigma, i_nu, i_skew) nearest to each (var, es) target.

    For a fixed (nu, skew) the squared distance is a convex quadratic in sigma,
    so only the two lattice sigmas around its unconstrained minimizer need to
    be checked. Exact ties go to the lexicographically smallest index.
    """
    tv = np.atleast_1d(np.asarray(var, float))
    te = np.atleast_1d(np.asarray(es, float))
    q = grid.std_var.ravel()
    e = grid.std_es.ravel()
    sig = grid.sigmas
    ns, nk = len(sig), len(grid.skews)
    out = np.empty((len(tv), 3), dtype=np.int64)
    norm2 = q * q + e * e
    for start in range(0, len(tv), chunk):
        v = tv[start:start + chunk, None]
        w = te[start:start + chunk, None]
        s_star = (v * q + w * e) / norm2
        hi = np.clip(np.searchsorted(sig, s_star), 0, ns - 1)
        lo = np.maximum(hi - 1, 0)
        best_d = None
        for cand in (lo, hi):
            s = sig[cand]
            d = (s * q - v) ** 2 + (s * e - w) ** 2
            if best_d is None:
                best_d, best_i = d, cand
            else:
                better = (d < best_d) | ((d == best_d) & (cand < best_i))
                best_d = np.where(better, d, best_d)
                best_i = np.where(better, cand, best_i)
        first = best_d.argmin(axis=1)
        rows = np.arange(len(first))
        dmin = best_d[rows, first][:, None]
        out[start:start + len(first)] = np.stack(
            [best_i[rows, first], first // nk, first % nk], axis=1)
        tied = np.flatnonzero((best_d == dmin).sum(axis=1) > 1)
        for row in tied:
            cells = np.flatnonzero(best_d[row] == dmin[row, 0])
            keys = np.stack([best_i[row, cells], cells // nk, cells % nk], axis=1)
            pick = np.lexsort(keys.T[::-1])[0]
            out[start + row] = keys[pick]
    return out


def fit_skewt_to_var_es(grid: CandidateGrid, target: ForecastPair) -> SkewTParams:
    """Skew-t on the grid whose (VaR, ES) is closest to ``target``."""
    idx = fit_grid_indices(grid, target.var, target.es)[0]
    return grid.params(idx)
