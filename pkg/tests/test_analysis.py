import math

import numpy as np
import pytest

from stopped_euler.analysis import (
    AnalysisConfig,
    RunSummary,
    error_matrix,
    estimate_from_errors,
    fit_rate,
    freeze_fraction,
    lemma1_constant,
    moment_bound_check,
    moment_envelope,
    rate_report,
    sobolev_bound_check,
    strong_error,
    summarize,
)
from stopped_euler.errors import ConfigurationError
from stopped_euler.model import ModelSpec, coercivity_constant
from stopped_euler.noise import aggregate, increment_tables, sample_seed
from stopped_euler.scheme import SchemeParams, run_batch

from oracles import scalar_path


def seeds_for(S, master=31):
    return np.array([sample_seed(master, i) for i in range(S)], dtype=np.uint64)


def runs_at(spec, resolutions, S=16, master=31):
    seeds = seeds_for(S, master)
    N_fine = max(r[0] for r in resolutions)
    m_max = max(r[2] for r in resolutions)
    fine = increment_tables(seeds, N_fine, m_max, spec.T)
    return [run_batch(SchemeParams(N, n, m), spec, aggregate(fine[:, :, :m], N, axis=1), seeds=seeds)
            for N, n, m in resolutions]


# -- rate fitting ----------------------------------------------------------

def test_fit_exact_powers():
    h = np.array([8, 16, 32, 64, 128])
    assert fit_rate(h, 3.0 / h).slope == pytest.approx(1.0, abs=1e-12)
    assert fit_rate(h, 0.7 * h**-0.5).slope == pytest.approx(0.5, abs=1e-12)
    fit = fit_rate(h, 0.7 * h**-0.5)
    assert fit.dropped == () and fit.interval[0] == pytest.approx(0.5, abs=1e-10)


def test_fit_with_noise(rng):
    h = np.array([8, 16, 32, 64, 128])
    for _ in range(20):
        e = h**-0.5 * (1 + 0.05 * rng.uniform(-1, 1, size=5))
        assert 0.4 <= fit_rate(h, e).slope <= 0.6


def test_fit_drops_preasymptotic_point():
    h = np.array([2, 4, 8, 16, 32])
    e = h**-1.0
    e[0] = 1e-3  # leading point far off the trend
    fit = fit_rate(h, e)
    assert fit.dropped == (2.0,)
    assert fit.slope == pytest.approx(1.0, abs=1e-12)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rate([1, 2], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_rate([1, 2, 4], [1.0, 0.0, 0.5])


# -- lemma constant --------------------------------------------------------

def test_lemma1_examples():
    assert lemma1_constant(2, 1.0, 1.0, 0.25) == 6.0
    for C in (1.0, 1.5, 7.25):
        assert lemma1_constant(2, C, 1.0, 0.25) == pytest.approx(2 * C + 4, rel=1e-15)
    ks = [lemma1_constant(3.5, C, 2.0, 0.2) for C in np.linspace(1, 10, 50)]
    assert all(a <= b for a, b in zip(ks, ks[1:]))
    with pytest.raises(ConfigurationError):
        lemma1_constant(1.5, 1.0, 1.0, 0.25)
    with pytest.raises(ConfigurationError):
        lemma1_constant(2.0, 0.5, 1.0, 0.25)


def test_lemma1_symbolic(rng):
    sp = pytest.importorskip("sympy")
    p, C, T, th = sp.symbols("p C T theta", positive=True)
    K = 3 * (p - 2) + 2 * C ** (p / 2) + 2 * (T ** (1 - 2 * th) + p / 2 * T ** (sp.Rational(1, 2) - 2 * th)) ** (p / 2)
    for _ in range(20):
        vals = dict(p=rng.uniform(2, 8), C=rng.uniform(1, 5), T=rng.uniform(0.1, 3), theta=rng.uniform(0.01, 0.25))
        exact = float(K.subs({p: vals["p"], C: vals["C"], T: vals["T"], th: vals["theta"]}).evalf(30))
        got = lemma1_constant(vals["p"], vals["C"], vals["T"], vals["theta"])
        assert got == pytest.approx(exact, rel=1e-12)


def test_acceptance_constants():
    spec = ModelSpec()
    C = coercivity_constant(spec, 0.5)
    assert C == pytest.approx(1 + 0.0625 * math.pi**2 / 6, rel=1e-14)
    assert lemma1_constant(2, C, 1.0, 0.25) == pytest.approx(2 * C + 4, rel=1e-15)
    np.testing.assert_allclose(moment_envelope(2.0, 3.0, [0.0, 1.0]), [2.0, 5.0 * math.e**3])


# -- strong errors ---------------------------------------------------------

def test_self_error_is_zero():
    spec = ModelSpec()
    (run,) = runs_at(spec, [(16, 8, 8)], S=8)
    est = strong_error(run, run, bootstrap=200)
    assert est.value == 0.0 and est.ci_low == 0.0 and est.ci_high == 0.0


def test_linear_case_error_vanishes():
    spec = ModelSpec(kappa=0.0, sigma=0.0)
    test, ref = runs_at(spec, [(8, 16, 4), (64, 16, 8)], S=4)
    assert strong_error(test, ref, bootstrap=100).value <= 1e-12


def test_single_mode_error_matches_scalar_oracle():
    spec = ModelSpec(kappa=1.5, sigma=0.6)
    S = 64
    seeds = seeds_for(S)
    fine = increment_tables(seeds, 64, 1, 1.0)
    test = run_batch(SchemeParams(8, 1, 1), spec, aggregate(fine, 8, axis=1), seeds=seeds)
    ref = run_batch(SchemeParams(64, 1, 1), spec, fine, seeds=seeds)
    kw = dict(eps=1.0, kappa=1.5, rho=1.0, sigma=0.6, q=2.0, c_q=1.0, T=1.0, theta=0.25, L=4)
    y0 = float(spec.initial(1)[0])
    sq = np.zeros(9)
    for i in range(S):
        yt, _ = scalar_path(y0, aggregate(fine[i], 8, axis=0)[:, 0], N=8, **kw)
        yr, _ = scalar_path(y0, fine[i, :, 0], N=64, **kw)
        sq += (np.array(yr[::8]) - np.array(yt)) ** 2
    oracle = float(np.max(np.sqrt(sq / S)))
    assert strong_error(test, ref, bootstrap=100).value == pytest.approx(oracle, abs=1e-9)


def test_error_matrix_requires_shared_paths():
    spec = ModelSpec()
    a = runs_at(spec, [(8, 4, 4)], S=4, master=1)[0]
    b = runs_at(spec, [(16, 4, 4)], S=4, master=2)[0]
    with pytest.raises(ConfigurationError):
        error_matrix(a, b)
    seeds = seeds_for(4)
    rng = np.random.default_rng(0)
    t = run_batch(SchemeParams(16, 4, 4), spec, 0.1 * rng.standard_normal((4, 16, 4)), seeds=seeds)
    r = run_batch(SchemeParams(24, 4, 4), spec, 0.1 * rng.standard_normal((4, 24, 4)), seeds=seeds)
    with pytest.raises(ConfigurationError):
        error_matrix(t, r)


def test_bootstrap_interval_brackets_estimate(rng):
    err = np.abs(rng.standard_normal((200, 5)))
    est = estimate_from_errors(err, p=2, bootstrap=500)
    assert est.ci_low <= est.value <= est.ci_high
    assert est.value == pytest.approx(np.max(np.sqrt(np.mean(err**2, axis=0))))
    again = estimate_from_errors(err, p=2, bootstrap=500)
    assert (again.ci_low, again.ci_high) == (est.ci_low, est.ci_high)


def test_temporal_errors_decrease():
    spec = ModelSpec()
    res = [(8, 16, 16), (16, 16, 16), (32, 16, 16), (256, 32, 32)]
    runs = runs_at(spec, res, S=32)
    mats = [error_matrix(r, runs[-1])[0] for r in runs[:-1]]
    rep = rate_report("temporal", [8, 16, 32], mats, bootstrap=200)
    for (e0, lo0), (e1, hi1) in zip(zip(rep.errors, rep.ci_low), zip(rep.errors[1:], rep.ci_high[1:])):
        assert e1 <= e0 or lo0 <= hi1
    assert rep.fitted_slope > 0
    assert rep.slope_interval[0] <= rep.fitted_slope <= rep.slope_interval[1] + 1e-12
    d = rep.to_dict()
    assert d["kind"] == "rate_report" and d["schema_version"] == 1


# -- moment, freeze and Sobolev witnesses ---------------------------------

def test_moment_check_linear_case():
    spec = ModelSpec(kappa=0.0, sigma=0.0)
    runs = runs_at(spec, [(8, 8, 4), (32, 8, 4)], S=4)
    rep = moment_bound_check(runs, 2.0, spec, bootstrap=100)
    assert rep.passed and rep.C == 1.0 and rep.K == 6.0
    params = SchemeParams(8, 8, 4)
    y0 = float(np.sum(spec.initial(8) ** 2))
    decayed = np.sum((np.exp(np.outer(params.times(), spec.spectrum.eigenvalues(8))) * spec.initial(8)) ** 2, axis=1)
    margin = np.min((moment_envelope(y0, 6.0, params.times()) - decayed)[1:])
    assert rep.margins[0] == pytest.approx(margin, rel=1e-12)


def test_moment_check_logistic_invariant_region():
    spec = ModelSpec(sigma=0.0, xi_scale=2.0)  # xi in (0, 1/2]
    runs = runs_at(spec, [(16, 16, 4)], S=2)
    rep = moment_bound_check(runs, 2.0, spec, bootstrap=50)
    assert rep.passed and rep.worst_margin > 0.5 and rep.worst_time > 0
    env = moment_envelope(float(np.sum(spec.initial(16) ** 2)), rep.K, runs[0].times[1:])
    assert np.all(env - np.sum(runs[0].states[0, 1:] ** 2, axis=-1) > 0.5)


def test_moment_check_flags_divergence():
    spec = ModelSpec(sigma=0.0, xi_scale=4096.0)
    seeds = seeds_for(2)
    run = run_batch(SchemeParams(8, 4, 4), spec, increment_tables(seeds, 8, 4, 1.0), seeds=seeds,
                    scheme="untamed")
    rep = moment_bound_check(run, 2.0, spec, bootstrap=50)
    assert not rep.passed and rep.diverged == 2


def test_freeze_fraction_zero_and_saturated():
    spec0 = ModelSpec(kappa=0.0, sigma=0.0)
    rep = freeze_fraction(runs_at(spec0, [(4, 8, 4), (16, 8, 4)], S=4))
    assert rep.fractions == [0.0, 0.0] and rep.nonincreasing and rep.slope is None
    hot = ModelSpec(sigma=0.0, xi_scale=64.0)
    rep = freeze_fraction(runs_at(hot, [(1, 4, 1)], S=4))
    assert rep.fractions == [1.0]


def _summary(N, frozen_counts, S=100):
    frozen = np.zeros((S, N), dtype=bool)
    frozen.flat[: frozen_counts] = True
    z = np.zeros((S, N + 1))
    return RunSummary(N, 4, 4, 1.0, None, np.linspace(0, 1, N + 1), z, None, None, frozen,
                      np.full(S, -1))


def test_freeze_monotonicity_tolerance():
    ok = freeze_fraction([_summary(8, 80), _summary(16, 100), _summary(32, 20)])
    assert ok.nonincreasing and ok.slope < 0
    bad = freeze_fraction([_summary(8, 8), _summary(16, 400)])
    assert not bad.nonincreasing


def test_sobolev_linear_case_and_eta_zero():
    spec = ModelSpec(kappa=0.0, sigma=0.0)
    runs = runs_at(spec, [(8, 16, 4)], S=4)
    rep = sobolev_bound_check(runs, 0.3, spec)
    lam = np.abs(spec.spectrum.eigenvalues(16))
    assert rep.max_moment == pytest.approx(np.sqrt(np.sum(lam**0.6 * spec.initial(16) ** 2)), rel=1e-14)
    spec = ModelSpec()
    runs = runs_at(spec, [(8, 16, 8), (16, 16, 8)], S=8)
    s0 = sobolev_bound_check(runs, 0.0, spec)
    plain = [np.max(np.mean(summarize(r).h_norms ** 2, axis=0)) ** 0.5 for r in runs]
    np.testing.assert_allclose(s0.sup_moments, plain, rtol=1e-14)
    with pytest.raises(ConfigurationError):
        sobolev_bound_check(runs, 0.5, spec)


def test_sobolev_stable_under_mode_doubling():
    spec = ModelSpec()
    r64, r128 = runs_at(spec, [(16, 64, 16), (16, 128, 16)], S=32)
    a = sobolev_bound_check(r64, 0.3, spec).max_moment
    b = sobolev_bound_check(r128, 0.3, spec).max_moment
    assert abs(b / a - 1) < 0.05


def test_analysis_config_validation():
    for kw in ({"p": 1.5}, {"eta": 0.5}, {"iota": 0.0}, {"p": 2.0, "kappa_growth": 1.0}, {"M_samples": 1}):
        with pytest.raises(ConfigurationError):
            AnalysisConfig(**kw)
    cfg = AnalysisConfig(M_samples=5, seeds=(1, 2))
    assert cfg.sample_keys() == [(1, 0), (2, 0), (1, 1), (2, 1), (1, 2)]
    with pytest.raises(ConfigurationError):
        cfg.check_reference(Ns=[48])
