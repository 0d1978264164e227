"""Model confidence set with the T_max elimination rule and a moving-block bootstrap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class McsResult:
    surviving: tuple
    elimination_order: tuple  # (name, monotonized p-value) in elimination order
    p_values: dict

    def __post_init__(self):
        if not self.surviving:
            raise ValueError("the confidence set cannot be empty")


def block_bootstrap_counts(n: int, n_boot: int, block_len: int, seed: int) -> np.ndarray:
    """How often each day appears in each moving-block bootstrap resample (B x n)."""
    rng = np.random.default_rng(seed)
    n_blocks = -(-n // block_len)
    starts = rng.integers(0, n - block_len + 1, size=(n_boot, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_len)).reshape(n_boot, -1)[:, :n]
    counts = np.zeros((n_boot, n))
    rows = np.repeat(np.arange(n_boot), n)
    np.add.at(counts, (rows, idx.ravel()), 1.0)
    return counts


def mcs_pvalues(losses, n_boot: int = 5000, block_len: int = 21, seed: int = 0,
                counts: np.ndarray | None = None):
    """Full elimination sequence and monotonized MCS p-values.

    Returns ``(order, pvals)``: model indices in elimination order (the last
    one is never eliminated and gets p = 1) and their p-values.
    """
    L = np.asarray(losses, float)
    m, n = L.shape
    if m < 2:
        raise ValueError("MCS needs at least two models")
    if counts is None:
        counts = block_bootstrap_counts(n, n_boot, block_len, seed)
    boot = L @ counts.T / n          # m x B bootstrap mean losses
    mean = L.mean(axis=1)
    alive = list(range(m))
    order, pvals = [], []
    running = 0.0
    while len(alive) > 1:
        a = np.array(alive)
        d = mean[a] - mean[a].mean()
        db = boot[a] - boot[a].mean(axis=0)
        var = np.mean((db - d[:, None]) ** 2, axis=1)
        scale = np.sqrt(var)
        tiny = scale <= 1e-12 * (1.0 + np.abs(mean[a]).max())
        t = np.where(tiny, 0.0, d / np.where(tiny, 1.0, scale))
        tb = np.where(tiny[:, None], 0.0, (db - d[:, None]) / np.where(tiny, 1.0, scale)[:, None])
        t_max = t.max()
        p = float(np.mean(tb.max(axis=0) >= t_max - 1e-12 * (1 + abs(t_max))))
        running = max(running, p)
        worst = int(a[np.argmax(t)])
        order.append(worst)
        pvals.append(running)
        alive.remove(worst)
    order.append(alive[0])
    pvals.append(1.0)
    return order, pvals


def mcs(losses, names=None, confidence: float = 0.75, n_boot: int = 5000, block_len: int = 21,
        seed: int = 0, counts: np.ndarray | None = None) -> McsResult:
    """Models retained at ``confidence``: those whose MCS p-value is at least
    ``1 - confidence``."""
    L = np.asarray(losses, float)
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    if L.shape[1] < 250:
        raise ValueError("MCS needs at least 250 days")
    names = list(names) if names is not None else [str(i) for i in range(L.shape[0])]
    order, pvals = mcs_pvalues(L, n_boot, block_len, seed, counts)
    level = 1.0 - confidence
    keep = tuple(names[i] for i, p in zip(order, pvals) if p >= level)
    elim = tuple((names[i], p) for i, p in zip(order, pvals))
    return McsResult(keep, elim, {names[i]: p for i, p in zip(order, pvals)})
