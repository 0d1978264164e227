import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from riskcombine.core import DataError, series_from_returns
from riskcombine.dist import gaussian_var_es
from riskcombine.pool import (DgpConfig, FitOptions, MethodError, MethodSpec, care_fit,
                              care_forecast, caviar_fit, caviar_forecast, ewma_forecast,
                              ewma_variance, evt_var_es, garch_fit, garch_forecast, garch_params,
                              generate_pool, hs_forecast, parse_method_id, simulate_garch,
                              standard_specs, synth_pool)
from riskcombine.pool.caviar import _sample_expectile, care_expectile_fit, quantile_path

A = 0.025


@pytest.fixture(scope="module")
def garch_data():
    r, s2 = simulate_garch(3000, 0.05, 0.08, 0.9, nu=6, seed=4)
    return series_from_returns(r), s2


# -- specs -------------------------------------------------------------------

def test_standard_pool_size():
    specs = standard_specs()
    assert len(specs) == 90
    assert sum(s.has_native for s in specs) == 23
    ids = [s.method_id(1800) for s in specs]
    assert len(set(ids)) == 90
    assert all(parse_method_id(i, 1800) == s for i, s in zip(ids, specs))


def test_invalid_specs():
    with pytest.raises(ValueError):
        MethodSpec("GARCH", dist="cauchy")
    with pytest.raises(ValueError):
        MethodSpec("HS", window=-3)
    with pytest.raises(ValueError):
        parse_method_id("NOPE-1")


# -- HS / EWMA -----------------------------------------------------------------

def test_hs_sort_oracle():
    w = np.arange(-5.0, 95.0)
    p = hs_forecast(np.random.default_rng(0).permutation(w), A)
    assert (p.var, p.es) == pytest.approx((-2.525, -4.0), abs=1e-12)
    x = np.sort(w)
    h = (x.size - 1) * A
    q = x[int(h)] + (h - int(h)) * (x[int(h) + 1] - x[int(h)])
    assert p.var == pytest.approx(q, abs=1e-12)
    assert p.es == pytest.approx(x[x < q].mean(), abs=1e-12)


def test_hs_degenerate_and_median():
    p = hs_forecast(np.full(50, -0.7), A)
    assert p.var == p.es == -0.7
    sym = np.r_[-np.arange(1.0, 51.0), np.arange(1.0, 51.0)]
    assert hs_forecast(sym, 0.4999).var == pytest.approx(np.median(sym), abs=0.05)
    with pytest.raises(ValueError):
        hs_forecast(np.ones(39), A)


def test_ewma_recursion():
    v = ewma_variance(np.r_[3.0, np.zeros(10)])
    assert v[6] == pytest.approx(v[1] * 0.94 ** 5, rel=1e-12)
    p, nd = ewma_forecast(np.zeros(30), A)
    assert p.var < 0 and p.var > -1e-5 and p.es <= p.var
    r = np.random.default_rng(1).normal(size=100)
    p, nd = ewma_forecast(r, A)
    sd = math.sqrt(ewma_variance(r)[-1])
    assert p == gaussian_var_es(0.0, sd, A)
    assert nd.scale == pytest.approx(sd)


# -- GARCH ---------------------------------------------------------------------

def garch_nll(params, r):
    omega, a, b = params
    s2 = np.empty(r.size)
    s2[0] = np.var(r)
    for t in range(1, r.size):
        s2[t] = omega + a * r[t - 1] ** 2 + b * s2[t - 1]
    return 0.5 * np.sum(np.log(2 * np.pi * s2) + r * r / s2)


def test_garch_mle_recovers_parameters():
    true = np.array([0.05, 0.08, 0.9])
    r, _ = simulate_garch(5000, *true, seed=21)
    s = series_from_returns(r)
    fm = garch_fit(MethodSpec("GARCH", dist="gaussian", tail="native"), s)
    p = garch_params(fm, s)
    est = np.array([p["omega"], p["alpha"], p["beta"]])
    assert garch_nll(est, r) == pytest.approx(fm.residual_state["nll"], rel=1e-9)
    h = 1e-4 * np.maximum(est, 1e-3)
    H = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            ei, ej = np.eye(3)[i] * h[i], np.eye(3)[j] * h[j]
            H[i, j] = (garch_nll(est + ei + ej, r) - garch_nll(est + ei - ej, r)
                       - garch_nll(est - ei + ej, r) + garch_nll(est - ei - ej, r)) / (4 * h[i] * h[j])
    se = np.sqrt(np.diag(np.linalg.inv(H)))
    assert np.all(np.abs(est - true) < 3 * se)


def test_fhs_close_to_native_gaussian():
    r, _ = simulate_garch(5000, 0.05, 0.08, 0.9, seed=8)
    s = series_from_returns(r)
    native = garch_forecast(garch_fit(MethodSpec("GARCH", dist="gaussian", tail="native"), s), s, A)[0]
    fhs = garch_forecast(garch_fit(MethodSpec("GARCH", dist="gaussian", tail="FHS"), s), s, A)[0]
    assert abs(fhs.var / native.var - 1) < 0.10


def test_gjr_without_leverage_equals_garch(garch_data):
    s, _ = garch_data
    g = garch_fit(MethodSpec("GARCH", dist="t", tail="native"), s)
    theta = np.r_[g.params[:3], -np.inf, g.params[3:]]
    gjr = type(g)(MethodSpec("GJR", dist="t", tail="native"), theta, {})
    a, b = garch_forecast(g, s, A)[0], garch_forecast(gjr, s, A)[0]
    assert a.var == pytest.approx(b.var, abs=1e-6)
    assert a.es == pytest.approx(b.es, abs=1e-6)


def test_refit_is_deterministic(garch_data):
    s, _ = garch_data
    w = s[:500]
    spec = MethodSpec("GJR", dist="skewt", tail="EVT")
    assert np.array_equal(garch_fit(spec, w).params, garch_fit(spec, w).params)


def test_evt_tail_on_t_sample():
    z = stats.t.rvs(5, size=50000, random_state=np.random.default_rng(2)) * math.sqrt(3 / 5)
    q, e = evt_var_es(z, A)
    tq = stats.t.ppf(A, 5) * math.sqrt(3 / 5)
    assert abs(q / tq - 1) < 0.05
    assert e < q


def test_driver_guard():
    s = series_from_returns(np.random.default_rng(0).normal(size=400))
    with pytest.raises(DataError, match="rv"):
        generate_pool([MethodSpec("GARCH", driver="rv", dist="t", tail="FHS")], s, 300, A)


# -- CAViaR / CARE -------------------------------------------------------------

def test_caviar_forms(garch_data):
    s, s2 = garch_data
    w = s[:800]
    mult = caviar_fit(MethodSpec("CAViaR", caviar_form="SAV", es_form="multiplicative"), w, A)
    p = caviar_forecast(mult, w, A)
    c = 1 + math.exp(mult.params[-1])
    assert c > 1 and p.var < 0
    assert p.es == pytest.approx(c * p.var, rel=1e-12)
    add = caviar_fit(MethodSpec("CAViaR", caviar_form="AS", es_form="additive"), w, A)
    q = caviar_forecast(add, w, A)
    assert q.es <= q.var


def test_caviar_tracks_true_var(garch_data):
    s, s2 = garch_data
    fm = caviar_fit(MethodSpec("CAViaR", caviar_form="SAV", es_form="multiplicative"), s, A)
    q = quantile_path("SAV", fm.params[:3], s.returns, np.abs(s.returns), fm.residual_state["q0"])[:-1]
    true = stats.t.ppf(A, 6) * math.sqrt(4 / 6) * np.sqrt(s2)
    assert np.corrcoef(q, true)[0, 1] > 0.9


def test_expectile_identities():
    x = np.sort(np.random.default_rng(3).normal(size=500))
    assert _sample_expectile(x, 0.5) == pytest.approx(x.mean(), abs=1e-10)
    r = np.random.default_rng(4).normal(size=400)
    rates = []
    for tau in (0.001, 0.01, 0.05, 0.2):
        _, mu = care_expectile_fit("SAV", r, np.abs(r), tau)
        rates.append(np.mean(r < mu[:-1]))
    assert rates == sorted(rates)


def test_care_matches_true_var(garch_data):
    s, s2 = garch_data
    fm = care_fit(MethodSpec("CARE", caviar_form="SAV"), s, A)
    st_ = fm.residual_state
    mu = quantile_path("SAV", fm.params, s.returns, np.abs(s.returns), st_["mu0"])[:-1]
    assert np.mean(s.returns < mu) == pytest.approx(A, abs=0.004)
    true = stats.t.ppf(A, 6) * math.sqrt(4 / 6) * np.sqrt(s2)
    assert math.sqrt(np.mean(((mu - true) / true) ** 2)) < 0.15
    p = care_forecast(fm, s, A)
    assert p.es <= p.var


# -- pool generation -----------------------------------------------------------

def test_hs_pool_on_constant_series():
    s = series_from_returns(np.full(150, -0.3))
    pool = generate_pool([MethodSpec("HS", window=100)], s, 100, A)
    assert pool.shape == (1, 50)
    assert np.all(pool.var == -0.3) and np.all(pool.es == -0.3)


@pytest.mark.parametrize("est_window,n,cols", [(1800, 5400, 3600), (900, 5400, 4500)])
def test_pool_columns(est_window, n, cols):
    s = series_from_returns(np.random.default_rng(0).normal(size=n))
    pool = generate_pool([MethodSpec("HS", window=100)], s, est_window, A)
    assert pool.shape == (1, cols)
    assert pool.origins[0] == s.dates[est_window]


def test_errors_carry_context():
    s = series_from_returns(np.random.default_rng(0).normal(size=260))
    with pytest.raises(MethodError, match="GARCH-t-native at origin"):
        generate_pool([MethodSpec("GARCH", dist="t", tail="native")], s, 200, A)


def test_refit_every_and_threads(garch_data):
    s, _ = garch_data
    w = s[:560]
    specs = [MethodSpec("GARCH", dist="t", tail="native"), MethodSpec("EWMA"),
             MethodSpec("GaussianWindow", window=250)]
    a = generate_pool(specs, w, 500, A, refit_every=20)
    b = generate_pool(specs, w, 500, A, refit_every=20, threads=2)
    assert np.array_equal(a.var, b.var) and np.array_equal(a.es, b.es)
    assert set(a.native) == {"GARCH-t-native", "EWMA", "Gaussian-250"}


@pytest.mark.slow
def test_every_family_keeps_es_below_var(garch_data):
    s, s2 = garch_data
    rng = np.random.default_rng(0)
    n = 301
    rg = 1.6 * np.sqrt(s2[:n]) * np.exp(0.3 * rng.normal(size=n))
    rv = s2[:n] * np.exp(0.3 * rng.normal(size=n))
    series = series_from_returns(s.returns[:n], range=rg, rv=rv)
    pool = generate_pool(standard_specs(windows=(100, 250, 0)), series, 300, A,
                         opts=FitOptions(n_starts=2, maxiter=600))
    assert pool.shape == (88, 1)
    assert np.all(pool.es <= pool.var)


# -- synthetic pool ------------------------------------------------------------

def test_synth_zero_noise_identity():
    res = synth_pool(DgpConfig(m_noise=(0.0, 0.0), seed=3), 4, 300)
    for m in range(4):
        assert np.array_equal(res.pool.var[m], res.true_var)
        assert np.array_equal(res.pool.es[m], res.true_es)


def test_synth_deterministic():
    a = synth_pool(DgpConfig(seed=5), 6, 400)
    b = synth_pool(DgpConfig(seed=5), 6, 400)
    assert np.array_equal(a.pool.var, b.pool.var) and np.array_equal(a.series.returns, b.series.returns)
    assert a.pool.shape == (6, 400) and a.true_var.shape == (400,)


def test_synth_true_hit_rate():
    res = synth_pool(DgpConfig(seed=9), 2, 10000)
    hits = int(np.sum(res.series.returns <= res.true_var))
    lo, hi = stats.binom.ppf([0.005, 0.995], 10000, A)
    assert lo <= hits <= hi


@given(st.floats(0.0, 0.3), st.floats(0.0, 0.3), st.integers(0, 1000))
def test_synth_pool_valid(bias, noise, seed):
    res = synth_pool(DgpConfig(m_noise=(bias, noise), seed=seed), 3, 60)
    assert np.all(res.pool.es <= res.pool.var)
    assert np.all(res.true_es < res.true_var)
