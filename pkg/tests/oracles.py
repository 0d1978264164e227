"""Independent reference implementations shared by the unit and acceptance tests."""

import math
from itertools import combinations
from fractions import Fraction

import numpy as np


def tup(p):
    return (p.var, p.es)


def random_column(rng, m):
    v = -np.exp(rng.normal(0.5, 0.4, m))
    return np.column_stack([v, v - np.exp(rng.normal(-0.5, 0.5, m))])


def drop(values, k, end):
    # remove k extremes one at a time by search rather than by slicing a sorted copy
    out = list(values)
    for _ in range(k):
        out.remove(min(out) if end == "low" else max(out))
    return out


def trim_oracle(col, kind, n):
    v, e = list(col[:, 0]), list(col[:, 1])
    if kind == "symmetric":
        v, e = drop(drop(v, n, "low"), n, "high"), drop(drop(e, n, "low"), n, "high")
    elif kind == "exterior":
        v, e = drop(v, n, "high"), drop(e, n, "low")
    elif kind == "interior":
        v, e = drop(v, n, "low"), drop(e, n, "high")
    elif kind == "lower":
        v, e = drop(v, n, "low"), drop(e, n, "low")
    elif kind == "higher":
        v, e = drop(v, n, "high"), drop(e, n, "high")
    var, es = sum(sorted(v)) / len(v), sum(sorted(e)) / len(e)
    return var, min(es, var)


def flex_oracle(col, nv, ne):
    v = drop(col[:, 0], abs(nv), "low" if nv >= 0 else "high")
    e = drop(col[:, 1], abs(ne), "low" if ne >= 0 else "high")
    var, es = sum(sorted(v)) / len(v), sum(sorted(e)) / len(e)
    return var, min(es, var)


def brute_halfspace(X, p):
    d = X - p
    nz = np.any(d != 0, axis=1)
    if not nz.any():
        return Fraction(1)
    best = len(X)
    dirs = []
    for dx, dy in d[nz]:
        dirs += [(-dy, dx), (dy, -dx)]
    # boundary lines strictly between consecutive data directions (lines are undirected)
    ang = np.sort(np.mod(np.arctan2(d[nz, 1], d[nz, 0]), np.pi))
    mids = np.r_[(ang[1:] + ang[:-1]) / 2, (ang[-1] + ang[0] + np.pi) / 2]
    for a in mids:
        dirs += [(-math.sin(a), math.cos(a)), (math.sin(a), -math.cos(a))]
    for u in dirs:
        dot = d[:, 0] * u[0] + d[:, 1] * u[1]
        best = min(best, int(np.sum(dot >= -1e-12)))
    return Fraction(best, len(X))


def brute_simplicial(X, p):
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def on_segment(a, b, q):
        return (cross(a, b, q) == 0 and min(a[0], b[0]) <= q[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= q[1] <= max(a[1], b[1]))

    n = 0
    for a, b, c in combinations(X.tolist(), 3):
        if cross(a, b, c) == 0:
            n += on_segment(a, b, p) or on_segment(b, c, p) or on_segment(a, c, p)
        else:
            s = [cross(a, b, p), cross(b, c, p), cross(c, a, p)]
            n += min(s) >= 0 or max(s) <= 0
    return Fraction(n, math.comb(len(X), 3))
