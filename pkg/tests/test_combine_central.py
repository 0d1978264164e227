from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskcombine.combine import (KdeMode, KdeSpec, TrimSpec, as_flexible, kde_modes, max_trim,
                                 median_combine, mode_combine, optimize_trim, silverman,
                                 simple_average, trim_candidates, trimmed_combine)
from riskcombine.combine.central import trim_objectives
from riskcombine.score import AL, joint_score

from oracles import flex_oracle, random_column, trim_oracle, tup

FIXED = ("symmetric", "exterior", "interior", "lower", "higher")


# -- mean / median -----------------------------------------------------------

def test_simple_average_examples(rng):
    assert tup(simple_average([(-1, -2), (-3, -4)])) == (-2, -3)
    assert tup(simple_average([(-1.5, -2.5)])) == (-1.5, -2.5)
    col = random_column(rng, 90)
    loop = [0.0, 0.0]
    for v, e in col:
        loop[0] += v / 90
        loop[1] += e / 90
    assert tup(simple_average(col)) == pytest.approx(tuple(loop), abs=1e-12)
    with pytest.raises(ValueError):
        simple_average([])


def test_median_examples(rng):
    assert median_combine([(-1, -5), (-2, -5), (-3, -5)]).var == -2
    assert median_combine([(-1, -5), (-2, -5), (-3, -5), (-4, -5)]).var == -2.5
    for _ in range(1000):
        p = median_combine(random_column(rng, int(rng.integers(1, 12))))
        assert p.es <= p.var


@given(st.integers(0, 10_000), st.integers(1, 20))
def test_permutation_invariance(seed, m):
    rng = np.random.default_rng(seed)
    col = random_column(rng, m)
    perm = col[rng.permutation(m)]
    assert simple_average(col) == simple_average(perm)
    assert median_combine(col) == median_combine(perm)
    for kind in FIXED:
        n = int(rng.integers(0, max_trim(kind, m) + 1))
        assert trimmed_combine(col, TrimSpec(kind, n)) == trimmed_combine(perm, TrimSpec(kind, n))


# -- trimmed means -----------------------------------------------------------

def test_trim_examples():
    col = np.column_stack([[-1.0, -1.2, -1.4, -1.6, -1.8], [-3.0] * 5])
    assert trimmed_combine(col, TrimSpec("symmetric", 1)).var == pytest.approx(-1.4, abs=1e-15)
    col = np.array([(-1.0, -1.5), (-1.2, -2.5), (-1.4, -1.9), (-1.1, -3.0), (-1.6, -2.0)])
    p = trimmed_combine(col, TrimSpec("exterior", 1))
    assert p.var == pytest.approx(np.mean([-1.2, -1.4, -1.1, -1.6]))
    assert p.es == pytest.approx(np.mean([-1.5, -2.5, -1.9, -2.0]))


@pytest.mark.parametrize("kind", FIXED + ("flexible",))
def test_zero_trim_is_simple_average(kind, rng):
    for m in (1, 2, 5, 90):
        col = random_column(rng, m)
        spec = TrimSpec(kind) if kind != "flexible" else TrimSpec("flexible", 0, 0, 0)
        assert trimmed_combine(col, spec) == simple_average(col)


@pytest.mark.parametrize("m", [5, 10, 90])
def test_enumerate_sort_oracle(m, rng):
    for _ in range(3 if m == 90 else 10):
        col = random_column(rng, m)
        for kind in FIXED:
            for n in range(max_trim(kind, m) + 1):
                got = trimmed_combine(col, TrimSpec(kind, n))
                assert tup(got) == pytest.approx(trim_oracle(col, kind, n), abs=1e-12)
        for nv in range(-(m - 1), m, 1 if m < 90 else 7):
            for ne in range(-(m - 1), m, 1 if m < 90 else 11):
                got = trimmed_combine(col, TrimSpec("flexible", 0, nv, ne))
                assert tup(got) == pytest.approx(flex_oracle(col, nv, ne), abs=1e-12)


def test_flexible_encompasses_one_sided_kinds(rng):
    for _ in range(1000):
        m = int(rng.integers(2, 20))
        col = random_column(rng, m)
        kind = FIXED[1 + int(rng.integers(0, 4))]
        spec = TrimSpec(kind, int(rng.integers(0, m)))
        assert trimmed_combine(col, as_flexible(spec)) == trimmed_combine(col, spec)


def test_symmetric_has_no_flexible_equivalent():
    assert as_flexible(TrimSpec("symmetric", 0)) == TrimSpec("flexible", 0, 0, 0)
    with pytest.raises(ValueError):
        as_flexible(TrimSpec("symmetric", 1))


def test_no_clamps_for_order_preserving_kinds(rng):
    counter = Counter()
    for _ in range(10_000):
        m = int(rng.integers(2, 15))
        col = random_column(rng, m)
        for kind in ("symmetric", "lower", "higher"):
            trimmed_combine(col, TrimSpec(kind, int(rng.integers(0, max_trim(kind, m) + 1))), counter)
    assert sum(counter.values()) == 0


def test_exterior_can_clamp():
    col = np.array([(-1.0, -1.1), (-5.0, -5.1)])
    counter = Counter()
    p = trimmed_combine(col, TrimSpec("exterior", 1), counter)
    assert p.es == p.var == -5.0 and counter["exterior"] == 1


def test_trim_validation():
    with pytest.raises(ValueError):
        TrimSpec("median")
    with pytest.raises(ValueError):
        trimmed_combine(random_column(np.random.default_rng(0), 4), TrimSpec("symmetric", 2))
    with pytest.raises(ValueError):
        trimmed_combine(random_column(np.random.default_rng(0), 4), TrimSpec("flexible", 0, 4, 0))
    assert max_trim("symmetric", 90) == 44 and max_trim("lower", 90) == 89


def test_optimize_trim(rng):
    W = 200
    sig = np.exp(rng.normal(0, 0.3, W))
    r = sig * rng.standard_t(6, W) * np.sqrt(4 / 6)
    tv, te = -2.2 * sig, -2.9 * sig
    same = optimize_trim("symmetric", np.tile(tv, (6, 1)), np.tile(te, (6, 1)), r)
    assert same == TrimSpec("symmetric", 0)
    V = tv * np.exp(rng.normal(0, 0.05, (9, W)))
    E = V - (tv - te) * np.exp(rng.normal(0, 0.05, (9, W)))
    V[4], E[4] = 10 * tv, 10 * te
    best = optimize_trim("symmetric", V, E, r)
    assert best.n >= 1
    def score(s):
        pairs = [tup(trimmed_combine(np.column_stack([V[:, j], E[:, j]]), s)) for j in range(W)]
        v, e = map(np.array, zip(*pairs))
        return np.mean(joint_score(AL, v, e, r))
    assert score(best) < score(TrimSpec("symmetric", 0))
    # exhaustive argmin
    cands, objs = trim_objectives("lower", V, E, r)
    assert optimize_trim("lower", V, E, r) == cands[int(np.argmin(objs))]
    with pytest.raises(ValueError):
        optimize_trim("lower", V[:, :49], E[:, :49], r[:49])


def test_flexible_candidate_count():
    assert len(trim_candidates("flexible", 90)) == (2 * 89 + 1) ** 2 == 32041


# -- KDE mode ----------------------------------------------------------------

def test_mode_point_mass():
    col = np.column_stack([np.full(7, -1.3), np.full(7, -2.0)])
    p = mode_combine(col, KdeSpec(0.1, 0.1))
    assert p.var == -1.3 and p.es == pytest.approx(-2.0, abs=1e-12)


def test_mode_bimodal_tie_goes_negative():
    x = np.r_[np.full(45, -1.0), np.full(45, -3.0)]
    col = np.column_stack([x, x - 0.5])
    assert mode_combine(col, KdeSpec(0.1, 0.1)).var == pytest.approx(-3.0, abs=1e-6)


def test_mode_unimodal_recovery():
    good = 0
    for seed in range(100):
        x = np.random.default_rng(seed).normal(-2.0, 0.3, 90)
        # at 1x Silverman the mode's sampling error exceeds half a bandwidth in
        # most samples; 2x is the smallest multiplier on the grid where it does not
        h = 2.0 * float(silverman(x))
        good += abs(kde_modes(x[None, :], h)[0] + 2.0) <= 0.5 * h
    assert good >= 95


def test_mode_matches_dense_argmax(rng):
    x = rng.normal(size=(5, 30))
    h = silverman(x)
    got = kde_modes(x, h)
    for i in range(5):
        g = np.linspace(x[i].min() - 3 * h[i], x[i].max() + 3 * h[i], 200_001)
        d = np.exp(-0.5 * ((g[:, None] - x[i]) / h[i]) ** 2).sum(axis=1)
        assert got[i] == pytest.approx(g[np.argmax(d)], abs=1e-3)


def test_kde_spec_validation():
    with pytest.raises(ValueError):
        KdeSpec(0.0, 1.0)
    with pytest.raises(ValueError):
        KdeSpec(1.0, 1.0, kernel="epanechnikov")


def test_kde_combiner_selects_from_grid(rng):
    W = 120
    sig = np.exp(rng.normal(0, 0.3, W))
    r = sig * rng.normal(size=W)
    V = -1.96 * sig * np.exp(rng.normal(0, 0.1, (8, W)))
    E = V * 1.2
    c = KdeMode().fit(V, E, r)
    assert c.k_var in c.multipliers and c.k_spacing in c.multipliers
    v, e = c.predict(V[:, -1], E[:, -1])
    assert e <= v
