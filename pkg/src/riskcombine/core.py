"""Data model and file I/O for return series and VaR/ES forecast pools.

Returns are percent log returns (log return x 100). A forecast pool is an
M x T panel of (VaR, ES) pairs, one row per forecasting method and one column
per target day. Column dates are the dates of the returns being forecast, so
column ``t`` of a pool lines up with the return observed on ``origins[t]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats


class DataError(ValueError):
    """Raised when input data violates a structural invariant."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _fmt(x: float) -> str:
    return repr(float(x))


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha}")
    return alpha


@dataclass(frozen=True)
class ForecastPair:
    var: float
    es: float

    def __post_init__(self):
        object.__setattr__(self, "var", float(self.var))
        object.__setattr__(self, "es", float(self.es))
        if not (math.isfinite(self.var) and math.isfinite(self.es)):
            raise DataError(f"non-finite forecast pair ({self.var}, {self.es})")
        if self.es > self.var:
            raise DataError(f"ES {self.es} lies above VaR {self.var}")

    @property
    def spacing(self) -> float:
        return self.var - self.es


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Daily percent log returns with optional range and realized variance."""

    dates: np.ndarray
    returns: np.ndarray
    range: np.ndarray | None = None
    rv: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        object.__setattr__(self, "returns", _frozen(self.returns))
        n = len(self.dates)
        if len(self.returns) != n:
            raise DataError("dates and returns differ in length")
        if n > 1 and np.any(np.diff(self.dates.astype(np.int64)) <= 0):
            raise DataError("non-monotone dates")
        if not np.all(np.isfinite(self.returns)):
            raise DataError("non-finite return")
        for name in ("range", "rv"):
            col = getattr(self, name)
            if col is None:
                continue
            col = _frozen(col)
            if len(col) != n:
                raise DataError(f"{name} column length differs from returns")
            if not np.all(np.isfinite(col)) or np.any(col < 0):
                raise DataError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, col)

    def __len__(self) -> int:
        return len(self.returns)

    def __getitem__(self, key: slice) -> "ReturnSeries":
        if not isinstance(key, slice):
            raise TypeError("ReturnSeries supports slice indexing only")
        return ReturnSeries(
            self.dates[key],
            self.returns[key],
            None if self.range is None else self.range[key],
            None if self.rv is None else self.rv[key],
        )

    def driver(self, name: str) -> np.ndarray:
        """Volatility driver column used by the GARCH/CAViaR/CARE families.

        ``return`` gives the returns themselves, ``range`` the high-low range
        and ``rv`` the realized volatility (square root of realized variance).
        """
        if name == "return":
            return self.returns
        if name == "range":
            if self.range is None:
                raise DataError("series has no range column")
            return self.range
        if name == "rv":
            if self.rv is None:
                raise DataError("series has no rv column")
            return np.sqrt(self.rv)
        raise ValueError(f"unknown driver {name!r}")


@dataclass(frozen=True)
class NativeDist:
    """Parametric predictive distribution behind a forecast (location-scale).

    ``family`` is one of ``gaussian``, ``t`` or ``skewt``. ``scale`` is the
    standard deviation; ``nu`` and ``skew`` are ignored where not applicable.
    """

    family: str
    loc: float
    scale: float
    nu: float = math.inf
    skew: float = 0.0


@dataclass(frozen=True, eq=False)
class ForecastPool:
    """M x T panel of VaR/ES forecasts.

    ``native`` optionally maps a method id to one :class:`NativeDist` per
    origin for methods whose forecasts come from a parametric distribution.
    """

    method_ids: tuple
    origins: np.ndarray
    var: np.ndarray
    es: np.ndarray
    native: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "method_ids", tuple(str(m) for m in self.method_ids))
        object.__setattr__(self, "origins", _frozen(self.origins, "datetime64[D]"))
        var = _frozen(np.atleast_2d(self.var))
        es = _frozen(np.atleast_2d(self.es))
        object.__setattr__(self, "var", var)
        object.__setattr__(self, "es", es)
        m, t = len(self.method_ids), len(self.origins)
        if m < 1 or t < 1:
            raise DataError("pool needs at least one method and one origin")
        if len(set(self.method_ids)) != m:
            raise DataError("duplicate method ids")
        if var.shape != (m, t) or es.shape != (m, t):
            raise DataError(f"pool arrays must have shape ({m}, {t})")
        if t > 1 and np.any(np.diff(self.origins.astype(np.int64)) <= 0):
            raise DataError("non-monotone dates")
        if not (np.all(np.isfinite(var)) and np.all(np.isfinite(es))):
            raise DataError("non-finite forecast in pool")
        bad = np.argwhere(es > var)
        if len(bad):
            i, j = bad[0]
            raise DataError(
                f"es > var for method {self.method_ids[i]} on {self.origins[j]}: "
                f"var={var[i, j]!r}, es={es[i, j]!r}"
            )
        for mid, dists in self.native.items():
            if mid not in self.method_ids or len(dists) != t:
                raise DataError(f"native distributions for {mid!r} do not match pool")

    @property
    def shape(self) -> tuple:
        return self.var.shape

    def pair(self, m: int, t: int) -> ForecastPair:
        return ForecastPair(float(self.var[m, t]), float(self.es[m, t]))

    def column(self, t: int) -> list:
        return [self.pair(m, t) for m in range(len(self.method_ids))]

    def select(self, methods: Sequence[str] | None = None, cols: slice | None = None) -> "ForecastPool":
        rows = list(range(len(self.method_ids))) if methods is None else [
            self.method_ids.index(m) for m in methods
        ]
        cols = slice(None) if cols is None else cols
        ids = tuple(self.method_ids[i] for i in rows)
        native = {k: tuple(v[cols]) for k, v in self.native.items() if k in ids}
        return ForecastPool(ids, self.origins[cols], self.var[rows][:, cols],
                            self.es[rows][:, cols], native)


def business_dates(n: int, start: str = "2000-01-03") -> np.ndarray:
    """``n`` consecutive weekdays starting at ``start`` (rolled forward)."""
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward")


def series_from_returns(returns, range=None, rv=None, start: str = "2000-01-03") -> ReturnSeries:
    """ReturnSeries on a synthetic weekday calendar."""
    r = np.asarray(returns, float)
    return ReturnSeries(business_dates(len(r), start), r, range, rv)


def spacing_of(pool: ForecastPool) -> np.ndarray:
    """VaR minus ES for every cell of the pool (nonnegative)."""
    return pool.var - pool.es


def _parse_date(text: str, line: int) -> np.datetime64:
    try:
        return np.datetime64(text.strip(), "D")
    except ValueError as exc:
        raise DataError(f"line {line}: unparseable date {text!r}") from exc


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise DataError(f"line {line}: bad {what} value {text!r}") from exc


DEFAULT_SCHEMA = {"date": "date", "return": "return", "high": "high",
                  "low": "low", "range": "range", "rv": "rv"}


def load_returns(path, schema: Mapping[str, str] | None = None) -> ReturnSeries:
    """Read a returns CSV.

    ``schema`` maps the logical columns ``date``, ``return`` and optionally
    ``high``, ``low``, ``range``, ``rv`` to header names in the file. When high
    and low prices are present the range is computed as
    ``100 * (ln high - ln low)``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"returns file not found: {path}")
    cols = dict(DEFAULT_SCHEMA)
    cols.update(schema or {})
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for required in ("date", "return"):
            if cols[required] not in header:
                raise DataError(f"missing column {cols[required]!r} in {path}")
        has_hl = cols["high"] in header and cols["low"] in header
        has_range = cols["range"] in header
        has_rv = cols["rv"] in header
        dates, rets, rng, rv = [], [], [], []
        for i, row in enumerate(reader, start=2):
            dates.append(_parse_date(row[cols["date"]], i))
            rets.append(_parse_float(row[cols["return"]], "return", i))
            if has_hl:
                hi = _parse_float(row[cols["high"]], "high", i)
                lo = _parse_float(row[cols["low"]], "low", i)
                if hi <= 0 or lo <= 0 or lo > hi:
                    raise DataError(f"line {i}: invalid high/low prices")
                rng.append(100.0 * (math.log(hi) - math.log(lo)))
            elif has_range:
                rng.append(_parse_float(row[cols["range"]], "range", i))
            if has_rv:
                rv.append(_parse_float(row[cols["rv"]], "rv", i))
    return ReturnSeries(
        np.array(dates, dtype="datetime64[D]"),
        np.array(rets),
        np.array(rng) if (has_hl or has_range) else None,
        np.array(rv) if has_rv else None,
    )


def save_returns(series: ReturnSeries, path) -> None:
    header = ["date", "return"]
    if series.range is not None:
        header.append("range")
    if series.rv is not None:
        header.append("rv")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(series)):
            row = [str(series.dates[i]), _fmt(series.returns[i])]
            if series.range is not None:
                row.append(_fmt(series.range[i]))
            if series.rv is not None:
                row.append(_fmt(series.rv[i]))
            w.writerow(row)


def describe(series: ReturnSeries | Sequence[float]) -> dict:
    """Summary statistics of a return series.

    Standard deviation uses the n-1 denominator; skewness and kurtosis are the
    moment-based (biased) estimators and kurtosis is raw, not excess.
    """
    x = np.asarray(series.returns if isinstance(series, ReturnSeries) else series, float)
    if len(x) < 2:
        raise ValueError("describe needs at least two observations")
    sd = float(np.std(x, ddof=1))
    if np.ptp(x) == 0:
        skew, kurt = 0.0, math.nan
    else:
        skew = float(stats.skew(x, bias=True))
        kurt = float(stats.kurtosis(x, fisher=False, bias=True))
    return {
        "mean": float(np.mean(x)),
        "median": float(np.median(x)),
        "min": float(np.min(x)),
        "max": float(np.max(x)),
        "std": sd,
        "skewness": skew,
        "kurtosis": kurt,
    }


POOL_HEADER = ["date", "method_id", "var", "es"]
NATIVE_HEADER = ["date", "method_id", "family", "loc", "scale", "nu", "skew"]


def native_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".native.csv")


def save_pool(pool: ForecastPool, path) -> None:
    """Write a pool as long-format CSV (``date,method_id,var,es``).

    Native distributions, when present, go to a sidecar ``<stem>.native.csv``.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POOL_HEADER)
        for t, d in enumerate(pool.origins):
            for m, mid in enumerate(pool.method_ids):
                w.writerow([str(d), mid, _fmt(pool.var[m, t]), _fmt(pool.es[m, t])])
    if pool.native:
        with native_path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(NATIVE_HEADER)
            for mid in pool.method_ids:
                for d, nd in zip(pool.origins, pool.native.get(mid, ())):
                    w.writerow([str(d), mid, nd.family, _fmt(nd.loc), _fmt(nd.scale),
                                _fmt(nd.nu), _fmt(nd.skew)])


def load_pool(path) -> ForecastPool:
    """Read a long-format pool CSV; rejects ragged panels, duplicates and es > var."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"pool file not found: {path}")
    cells: dict = {}
    methods: list = []
    seen: set = set()
    dates: set = set()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in POOL_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"missing column(s) {missing} in {path}")
        for i, row in enumerate(reader, start=2):
            d = _parse_date(row["date"], i)
            mid = row["method_id"]
            v = _parse_float(row["var"], "var", i)
            e = _parse_float(row["es"], "es", i)
            if not (math.isfinite(v) and math.isfinite(e)):
                raise DataError(f"line {i}: non-finite forecast for {mid} on {d}")
            if e > v:
                raise DataError(f"line {i}: es > var for method {mid} on {d} (var={v!r}, es={e!r})")
            if (mid, d) in cells:
                raise DataError(f"line {i}: duplicate entry for method {mid} on {d}")
            if mid not in seen:
                seen.add(mid)
                methods.append(mid)
            cells[(mid, d)] = (v, e)
            dates.add(d)
    origins = np.array(sorted(dates), dtype="datetime64[D]")
    var = np.empty((len(methods), len(origins)))
    es = np.empty_like(var)
    for m, mid in enumerate(methods):
        for t, d in enumerate(origins):
            try:
                var[m, t], es[m, t] = cells[(mid, d)]
            except KeyError:
                raise DataError(f"ragged panel: method {mid} has no forecast on {d}") from None
    native = {}
    npath = native_path(path)
    if npath.exists():
        index = {d: t for t, d in enumerate(origins)}
        rows: dict = {}
        with npath.open(newline="") as fh:
            for i, row in enumerate(csv.DictReader(fh), start=2):
                d = _parse_date(row["date"], i)
                rows.setdefault(row["method_id"], {})[index[d]] = NativeDist(
                    row["family"], float(row["loc"]), float(row["scale"]),
                    float(row["nu"]), float(row["skew"]))
        for mid, by_t in rows.items():
            native[mid] = tuple(by_t[t] for t in range(len(origins)))
    return ForecastPool(tuple(methods), origins, var, es, native)


def align(pool: ForecastPool, series: ReturnSeries) -> np.ndarray:
    """Returns matching the pool's columns; raises if any pool date is absent."""
    idx = np.searchsorted(series.dates, pool.origins)
    ok = (idx < len(series)) & (series.dates[np.minimum(idx, len(series) - 1)] == pool.origins)
    if not np.all(ok):
        missing = pool.origins[~ok][0]
        raise DataError(f"pool date {missing} not found in return series")
    return series.returns[idx]
