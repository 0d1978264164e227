"""Acceptance suite: one PASS/FAIL line per criterion, collected in the
terminal summary. Each criterion runs at its stated tolerance and budget."""

import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from riskcombine.backtest import (BacktestConfig, block_bootstrap_counts, cc_test, dq_test,
                                  es_bootstrap_test, mcs, run_backtest, uc_test)
from riskcombine.combine import (COMBINER_NAMES, X_GRID, RelScoreConfig, RidgeConfig, TrimSpec,
                                 as_flexible, fit_minimum_score, halfspace_depth,
                                 max_trim, method_cdf, minimum_score_objective, probability_average,
                                 relative_score_weights, simple_average, simplicial_depth,
                                 trimmed_combine)
from riskcombine.combine.interval import depth_all
from riskcombine.combine.weighted import fit_ridge_fixed
from riskcombine.core import ForecastPair, NativeDist, describe, load_returns
from riskcombine.dist import SkewTParams, build_candidate_grid, fit_grid_indices, skewt_var_es
from riskcombine.pool import DgpConfig, simulate_garch, synth_pool
from riskcombine.score import AL, ScoreSpec, joint_score

from oracles import brute_halfspace, brute_simplicial, flex_oracle, random_column, trim_oracle, tup

A = 0.025
STEP = X_GRID[1] - X_GRID[0]
KINDS = ("symmetric", "exterior", "interior", "lower", "higher", "flexible")
ONE_SIDED = ("exterior", "interior", "lower", "higher")
FTSE_ENV = "RISKCOMBINE_FTSE_CSV"

RESULTS = []


class Checks:
    """Collects named sub-checks and a wall-clock budget for one criterion."""

    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.items = []
        self.t0 = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))

    def finish(self, note=""):
        elapsed = time.perf_counter() - self.t0
        self.check(f"runtime < {self.budget:.0f}s", elapsed < self.budget, f"{elapsed:.1f}s")
        failed = [f"{n} ({d})" if d else n for n, ok, d in self.items if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"[{status}] criterion {self.number}: {self.title} ({elapsed:.1f}s)"
        if failed:
            line += " failed: " + "; ".join(failed)
        if note:
            line += " " + note
        RESULTS.append(line)
        print(line)
        for n, ok, d in self.items:
            print(f"    {'ok ' if ok else 'BAD'} {n} {d}")
        assert not failed, line


# -- 1. scores ---------------------------------------------------------------

def test_criterion_1_scores():
    c = Checks(1, "score hand values and consistency", 60)
    qs = ScoreSpec("QS")
    for spec, r, want in [(AL, 0.0, 1.7906), (AL, -4.0, 28.4573), (qs, 0.0, 0.05), (qs, -4.0, 1.95)]:
        # hand values are quoted to four decimals; compare against the closed forms at 1e-6
        got = float(joint_score(spec, -2.0, -3.0, r))
        exact = {
            (AL.variant, 0.0): -1 / 3 + math.log(3) + 1 - math.log(1 - A),
            (AL.variant, -4.0): (-1 + 2 / A) / 3 + math.log(3) + 1 - math.log(1 - A),
            ("QS", 0.0): A * 2.0,
            ("QS", -4.0): (1 - A) * 2.0,
        }[(spec.variant, r)]
        c.check(f"{spec.variant}({r})={want}", abs(got - exact) < 1e-6 and abs(got - want) < 5e-5,
                f"{got:.7f}")
    nu = 5
    r = stats.t.rvs(nu, size=100_000, random_state=np.random.default_rng(2024))
    q = stats.t.ppf(A, nu)
    es = -stats.t.pdf(q, nu) * (nu + q * q) / (nu - 1) / A
    for variant in ("AL", "NZ", "FZG"):
        spec = ScoreSpec(variant)
        base = joint_score(spec, q, es, r)
        for k in (0.8, 1.2):
            for label, (v, e) in [("both", (q * k, es * k)), ("var", (q * k, min(q * k, es))),
                                  ("es", (q, min(q, es * k)))]:
                d = joint_score(spec, v, e, r) - base
                z = d.mean() / (d.std(ddof=1) / math.sqrt(d.size))
                c.check(f"{variant} {label} x{k}", z > 2, f"z={z:.1f}")
    c.finish()


# -- 2. trimmed means --------------------------------------------------------

def test_criterion_2_trims():
    c = Checks(2, "trimmed-mean identities", 60)
    rng = np.random.default_rng(2)
    zero_ok = True
    for kind in KINDS:
        for m in (1, 2, 5, 10, 90):
            col = random_column(rng, m)
            spec = TrimSpec("flexible", 0, 0, 0) if kind == "flexible" else TrimSpec(kind, 0)
            zero_ok &= trimmed_combine(col, spec) == simple_average(col)
    c.check("n=0 equals simple average (six kinds)", zero_ok)

    flex_ok = True
    for i in range(1000):
        m = int(rng.integers(2, 31))
        col = random_column(rng, m)
        kind = ONE_SIDED[i % 4]
        spec = TrimSpec(kind, int(rng.integers(0, max_trim(kind, m) + 1)))
        flex_ok &= trimmed_combine(col, as_flexible(spec)) == trimmed_combine(col, spec)
        flex_ok &= trimmed_combine(col, as_flexible(TrimSpec("symmetric", 0))) == \
            trimmed_combine(col, TrimSpec("symmetric", 0))
    c.check("flexible reproduces exterior/interior/lower/higher on 1000 columns", flex_ok)

    worst = 0.0
    for m in (5, 10, 90):
        for _ in range(3 if m == 90 else 10):
            col = random_column(rng, m)
            for kind in KINDS[:5]:
                for n in range(max_trim(kind, m) + 1):
                    got = tup(trimmed_combine(col, TrimSpec(kind, n)))
                    worst = max(worst, *np.abs(np.subtract(got, trim_oracle(col, kind, n))))
            step = 1 if m < 90 else 3
            for nv in range(-(m - 1), m, step):
                for ne in range(-(m - 1), m, step):
                    got = tup(trimmed_combine(col, TrimSpec("flexible", 0, nv, ne)))
                    worst = max(worst, *np.abs(np.subtract(got, flex_oracle(col, nv, ne))))
    c.check("enumerate-sort oracle, all legal n, M in {5, 10, 90}", worst < 1e-12, f"max err {worst:.1e}")
    c.finish("| symmetric n>=1 via flexible: UNATTAINABLE, see strict xfail")


@pytest.mark.xfail(strict=True, reason="flexible trims one end per component; symmetric trims both")
def test_criterion_2_flexible_reproduces_symmetric():
    rng = np.random.default_rng(22)
    m, n = 10, 1
    cols = [random_column(rng, m) for _ in range(20)]
    target = [tup(trimmed_combine(col, TrimSpec("symmetric", n))) for col in cols]
    found = any(
        all(tup(trimmed_combine(col, TrimSpec("flexible", 0, nv, ne))) == t for col, t in zip(cols, target))
        for nv in range(-(m - 1), m) for ne in range(-(m - 1), m))
    assert found


# -- 3. candidate grid and probability averaging -----------------------------

def test_criterion_3_grid():
    c = Checks(3, "candidate grid and probability averaging", 300)
    t0 = time.perf_counter()
    grid = build_candidate_grid(A)
    build = time.perf_counter() - t0
    c.check("dims 300x100x200", grid.shape == (300, 100, 200) and grid.var_es.shape == (300, 100, 200, 2),
            f"built in {build:.1f}s")
    s, n, k = grid.sigmas, grid.nus, grid.skews
    c.check("sigma (0, 10] step 10/300", s[0] > 0 and s[-1] == 10 and np.allclose(np.diff(s), 10 / 300))
    c.check("nu (2, 30] step 28/100", n[0] > 2 and n[-1] == 30 and np.allclose(np.diff(n), 28 / 100))
    c.check("skew interior of (-1, 1)", -1 < k[0] and k[-1] < 1 and np.allclose(np.diff(k), np.diff(k)[0]))

    rng = np.random.default_rng(3)
    misses = 0
    for _ in range(50):
        p = SkewTParams(rng.uniform(0.2, 9.5), rng.uniform(2.5, 29), rng.uniform(-0.9, 0.9))
        t = skewt_var_es(p, A)
        got = grid.var_es[tuple(fit_grid_indices(grid, t.var, t.es)[0])]
        # the cell one rounding step from the true parameters bounds the achievable error
        ref = grid.var_es[np.abs(s - p.sigma).argmin(), np.abs(n - p.nu).argmin(), np.abs(k - p.skew).argmin()]
        misses += math.hypot(*(got - (t.var, t.es))) > math.hypot(*(ref - (t.var, t.es))) + 1e-12
    c.check("fit round trip within one step on 50 targets", misses == 0, f"{misses} misses")

    g = method_cdf(ForecastPair(-1, -2), NativeDist("gaussian", 0.0, 1.0))
    p = probability_average([g], A)
    q = stats.norm.ppf(A)
    ev, ee = abs(p.var - q), abs(p.es + stats.norm.pdf(q) / A)
    c.check("single Gaussian within 0.04", ev < 0.04 and ee < 0.04, f"dVaR {ev:.4f} dES {ee:.4f}")

    mix = [method_cdf(ForecastPair(-1, -2), NativeDist("gaussian", 0.0, sd)) for sd in (1.0, 3.0)]
    pm = probability_average(mix, A)
    qm = optimize.brentq(lambda x: 0.5 * stats.norm.cdf(x) + 0.5 * stats.norm.cdf(x / 3) - A, -20, 0, xtol=1e-14)
    tail = integrate.quad(lambda x: x * (0.5 * stats.norm.pdf(x) + stats.norm.pdf(x / 3) / 6), -np.inf, qm)[0] / A
    qavg = 0.5 * (stats.norm.ppf(A) + 3 * stats.norm.ppf(A))
    c.check("mixture widening: prob-avg VaR <= quantile-avg VaR", pm.var <= qavg,
            f"{pm.var:.3f} <= {qavg:.3f}")
    c.check("mixture matches root-finding/quadrature oracle", abs(pm.var - qm) < STEP and abs(pm.es - tail) < STEP)
    c.finish()


# -- 4. depth ----------------------------------------------------------------

def test_criterion_4_depth():
    c = Checks(4, "data depth", 120)
    sq = np.array([(0, 0), (1, 0), (0, 1), (1, 1), (0.5, 0.5)], float)
    c.check("halfspace center 3/5", halfspace_depth(sq, (0.5, 0.5)) == Fraction(3, 5))
    c.check("halfspace corner 1/5", halfspace_depth(sq, (0, 0)) == Fraction(1, 5))
    c.check("simplicial center 1", simplicial_depth(sq, (0.5, 0.5)) == 1)
    c.check("simplicial corner 6/10", simplicial_depth(sq, (0, 0)) == Fraction(6, 10))
    bad = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(3, 31))
        # half integer clouds (ties, collinear triples), half continuous
        X = rng.integers(-4, 5, (m, 2)).astype(float) if seed % 2 else rng.normal(size=(m, 2))
        h, s = depth_all(X, "halfspace"), depth_all(X, "simplicial")
        for i, x in enumerate(X):
            bad += Fraction(int(h[i]), m) != brute_halfspace(X, x)
            bad += Fraction(int(s[i]), math.comb(m, 3)) != brute_simplicial(X, x)
    c.check("optimized equals brute force on 100 clouds, M <= 30", bad == 0, f"{bad} mismatches")
    c.finish()


# -- 5. weighting limits -----------------------------------------------------

def training_pool(seed, m=4, w=300, bias=(0.0, 0.6, -0.5, 0.4)):
    rng = np.random.default_rng(seed)
    sig = np.exp(np.cumsum(rng.normal(0, 0.05, w)) * 0.5)
    r = sig * rng.standard_t(6, w) * np.sqrt(4 / 6)
    tv, te = -2.3 * sig, -3.1 * sig
    b = np.resize(np.asarray(bias), m)[:, None]
    V = tv * np.exp(b + rng.normal(0, 0.05, (m, w)))
    E = V - (tv - te) * np.exp(b + rng.normal(0, 0.05, (m, w)))
    return V, E, r


def test_criterion_5_weighting_limits():
    c = Checks(5, "weighting limits", 120)
    V, E, r = training_pool(5)
    scores = joint_score(AL, V, E, r).sum(axis=1)
    w0 = relative_score_weights(RelScoreConfig(0.0), scores)
    c.check("relative score lambda=0 uniform exactly", np.array_equal(w0, np.full(4, 0.25)))
    wb = relative_score_weights(RelScoreConfig(1e6), scores)
    c.check("relative score lambda=1e6 best >= 0.999", wb[np.argmin(scores)] >= 0.999, f"{wb.max():.6f}")
    w, u = fit_ridge_fixed(V, E, r, AL, RidgeConfig(1e6, 1e6))
    dev = max(np.abs(w - 0.25).max(), np.abs(u - 0.25).max())
    c.check("ridge lambda=1e6 within 1e-3 of uniform", dev < 1e-3, f"{dev:.1e}")
    wm, um = fit_minimum_score(V, E, r)
    wz, uz = fit_ridge_fixed(V, E, r, AL, RidgeConfig(0.0, 0.0), n_starts=10)
    plain = minimum_score_objective(wm, um, V, E, r)
    gap = abs(minimum_score_objective(wz, uz, V, E, r, lambda1=0.0, lambda2=0.0) - plain)
    same = minimum_score_objective(wm, um, V, E, r, lambda1=0.0, lambda2=0.0) == plain
    c.check("ridge lambda=0 objective equals unregularized to 1e-8", gap < 1e-8 and same, f"{gap:.1e}")
    c.finish()


# -- 6. calibration tests ----------------------------------------------------

def test_criterion_6_calibration():
    c = Checks(6, "backtest size and ES power", 600)
    rng = np.random.default_rng(6)
    rej = np.zeros(3)
    reps = 1000
    for _ in range(reps):
        h = rng.random(1800) < A
        v = -2 + 0.2 * rng.normal(size=1800)
        rej += [uc_test(h, A).reject_at_5pct, cc_test(h, A).reject_at_5pct, dq_test(h, v, A).reject_at_5pct]
    for name, rate in zip(("UC", "CC", "DQ"), rej / reps):
        c.check(f"{name} size in [3%, 7%]", 0.03 <= rate <= 0.07, f"{rate:.3f}")

    q = stats.t.ppf(A, 5) * math.sqrt(3 / 5)
    es_true = -stats.t.pdf(stats.t.ppf(A, 5), 5) * (5 + stats.t.ppf(A, 5) ** 2) / 4 / A * math.sqrt(3 / 5)
    hits, n = 0, 100
    for seed in range(n):
        r, s2 = simulate_garch(1800, 0.05, 0.08, 0.9, nu=5, seed=1000 + seed)
        s = np.sqrt(s2)
        hits += es_bootstrap_test(r, q * s, 0.8 * es_true * s, 2000, seed).reject_at_5pct
    c.check("ES bootstrap power > 80% (20% shallow ES, GARCH-t5)", hits / n > 0.8, f"{hits / n:.2f}")
    c.finish()


# -- 7. end-to-end synthetic pipeline ----------------------------------------

def test_criterion_7_pipeline():
    c = Checks(7, "end-to-end synthetic pipeline", 1800)
    res = synth_pool(DgpConfig(seed=7), 30, 4000)
    cfg = BacktestConfig(900, 1000, refit_stride=10)
    rep = run_backtest(cfg, res.pool, res.series.returns, list(COMBINER_NAMES))
    r = rep.returns
    true = joint_score(AL, res.true_var[-1000:], res.true_es[-1000:], r).mean()
    ds = rep.paths["dynamic_selection"]
    ds_score = joint_score(AL, ds.var, ds.es, r).mean()
    lo, hi = stats.binom.ppf([0.005, 0.995], 1000, A)
    combiners = [nm for nm in COMBINER_NAMES if nm in rep.paths]
    c.check("19 combiners evaluated", len(combiners) == 19, f"{len(combiners)}")
    out_band, beats, rel = [], 0, {}
    for nm in combiners:
        p = rep.paths[nm]
        hits = int(np.sum(r <= p.var))
        if not lo <= hits <= hi:
            out_band.append(f"{nm}={hits}")
        s = joint_score(AL, p.var, p.es, r).mean()
        rel[nm] = s / true - 1
        beats += s <= ds_score
    c.check(f"(a) hits within 99% band [{lo:.0f}, {hi:.0f}]", not out_band, ", ".join(out_band))
    for nm in ("minimum_score", "minimum_score_ratio", "minimum_score_ridge", "probability_average"):
        c.check(f"(b) {nm} within 5% of true AL", abs(rel[nm]) <= 0.05, f"{rel[nm]:+.4f}")
    c.check("(c) >= 10 of 19 weakly beat dynamic selection", beats >= 10, f"{beats}/19")
    c.finish("| refit_stride=10")


# -- 8. model confidence set -------------------------------------------------

def test_criterion_8_mcs():
    c = Checks(8, "model confidence set", 300)
    eliminated = 0
    for seed in range(20):
        g = np.random.default_rng(seed)
        L = g.normal(1.0, 0.2, (5, 400))
        L[2] += 5 * 0.2
        eliminated += "c" not in mcs(L, list("abcde"), 0.75, n_boot=1000, seed=seed).surviving
    c.check("+5 sd method eliminated at 75% (20 seeds)", eliminated == 20, f"{eliminated}/20")
    nested = True
    for seed in range(10):
        g = np.random.default_rng(100 + seed)
        L = g.normal(1.0, 0.3, (6, 500)) + np.linspace(0, 0.08, 6)[:, None]
        counts = block_bootstrap_counts(500, 2000, 21, seed)
        sets = [set(mcs(L, None, lvl, counts=counts).surviving) for lvl in (0.5, 0.75, 0.9, 0.95, 0.99)]
        nested &= all(a <= b for a, b in zip(sets, sets[1:]))
    c.check("survivor sets nested across levels on shared draws", nested)
    c.finish()


# -- 9. conditional FTSE description -----------------------------------------

def test_criterion_9_ftse_describe():
    path = os.environ.get(FTSE_ENV)
    if not path:
        RESULTS.append(f"[SKIP] criterion 9: FTSE description (set {FTSE_ENV} to a returns CSV)")
        pytest.skip(f"{FTSE_ENV} not set")
    c = Checks(9, "FTSE description", 60)
    d = describe(load_returns(path))
    for key, want, tol in [("mean", 0.0024, 5e-5), ("min", -10.137, 5e-4), ("max", 9.485, 5e-4),
                           ("kurtosis", 10.471, 5e-4)]:
        c.check(f"{key} = {want}", abs(d[key] - want) <= tol, f"{d[key]:.5f}")
    c.finish()
