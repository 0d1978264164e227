"""Shared plumbing for combiners: column coercion and the fit/predict protocol."""

from __future__ import annotations

import numpy as np

from ..core import ForecastPair
from ..score import AL, ScoreSpec


def as_column(column) -> tuple[np.ndarray, np.ndarray]:
    """Split a column of forecasts into (var, es) float arrays.

    Accepts a sequence of :class:`ForecastPair` or ``(var, es)`` tuples, or an
    ``(M, 2)`` array.
    """
    if isinstance(column, np.ndarray):
        arr = np.asarray(column, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("array column must have shape (M, 2)")
        v, e = arr[:, 0].copy(), arr[:, 1].copy()
    else:
        items = list(column)
        v = np.array([p.var if isinstance(p, ForecastPair) else p[0] for p in items], dtype=float)
        e = np.array([p.es if isinstance(p, ForecastPair) else p[1] for p in items], dtype=float)
    if v.size == 0:
        raise ValueError("empty column")
    return v, e


def as_pair(v: float, e: float) -> ForecastPair:
    return ForecastPair(float(v), float(e))


class Combiner:
    """Base class for combiners.

    ``fit`` receives the training window as M x W arrays of VaR and ES
    forecasts plus the W aligned returns; ``predict`` maps one column of M
    forecasts to a combined ``(var, es)``. Stateless combiners only override
    ``predict``.
    """

    name = "combiner"

    def __init__(self, spec: ScoreSpec = AL):
        self.spec = spec

    def fit(self, V: np.ndarray, E: np.ndarray, r: np.ndarray) -> "Combiner":
        return self

    def predict(self, v: np.ndarray, e: np.ndarray) -> tuple[float, float]:
        raise NotImplementedError

    def state(self) -> dict:
        """Fitted parameters worth logging per origin."""
        return {}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"
