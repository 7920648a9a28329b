"""Monte Carlo estimators and a-priori bound checks.

Strong errors are measured against a coupled reference run (same Wiener
paths, finer resolution) at the grid times shared by both runs.  All
confidence intervals come from a nonparametric percentile bootstrap over
samples with a fixed bootstrap seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .model import ModelSpec, lemma_constant_C
from .scheme import BatchRun, Trajectory

__all__ = [
    "AnalysisConfig",
    "RunSummary",
    "ErrorEstimate",
    "RateFit",
    "RateReport",
    "MomentReport",
    "FreezeReport",
    "SobolevReport",
    "summarize",
    "error_matrix",
    "estimate_from_errors",
    "strong_error",
    "fit_rate",
    "lemma1_constant",
    "moment_bound_check",
    "freeze_fraction",
    "sobolev_bound_check",
]

SCHEMA_VERSION = 1
BOOTSTRAP_SEED = 20150101


@dataclass(frozen=True)
class AnalysisConfig:
    """Error order ``p``, rate target ``eta``, slack ``iota``, Markov growth
    exponent ``kappa_growth`` and the Monte Carlo / reference setup."""

    p: float = 2.0
    eta: float = 0.3
    iota: float = 0.01
    kappa_growth: float = 2.0
    M_samples: int = 256
    seeds: tuple = (20240601,)
    reference: tuple = (1024, 128, 128)
    separation: int = 8
    bootstrap: int = 1000
    chunk: int = 32

    def __post_init__(self):
        if not self.p >= 2:
            raise ConfigurationError("p must be at least 2", field="p")
        if not 0 <= self.eta < 0.5:
            raise ConfigurationError("eta must lie in [0, 1/2)", field="eta")
        if not self.iota > 0:
            raise ConfigurationError("iota must be positive", field="iota")
        if not self.kappa_growth > 2.0 / self.p:
            raise ConfigurationError("kappa_growth must exceed 2/p", field="kappa_growth")
        if self.M_samples < 2:
            raise ConfigurationError("M_samples must be at least 2", field="M_samples")
        if len(self.seeds) < 1:
            raise ConfigurationError("at least one master seed is required", field="seeds")
        if len(self.reference) != 3 or min(self.reference) < 1:
            raise ConfigurationError("reference must be (N_ref, n_ref, m_ref)", field="reference")
        if self.bootstrap < 1 or self.chunk < 1 or self.separation < 1:
            raise ConfigurationError("bootstrap, chunk and separation must be positive")

    def sample_keys(self):
        """``(master_seed, index)`` for every sample, round-robin over the seed list."""
        k = len(self.seeds)
        return [(int(self.seeds[i % k]), i // k) for i in range(self.M_samples)]

    def check_reference(self, Ns=(), ns=(), ms=()) -> None:
        N_ref, n_ref, m_ref = self.reference
        for N in Ns:
            if N_ref % N:
                raise ConfigurationError(f"N_ref={N_ref} is not divisible by N={N}", field="reference")
        if ns and n_ref < max(ns):
            raise ConfigurationError(f"n_ref={n_ref} below test n={max(ns)}", field="reference")
        if ms and m_ref < max(ms):
            raise ConfigurationError(f"m_ref={m_ref} below test m={max(ms)}", field="reference")


@dataclass(eq=False)
class RunSummary:
    """Per-sample norms of a run, enough for every estimator in this module."""

    N: int
    n: int
    m: int
    T: float
    seeds: np.ndarray | None
    times: np.ndarray
    h_norms: np.ndarray  # (S, K)
    eta_norms: np.ndarray | None  # (S, K)
    eta: float | None
    frozen: np.ndarray  # (S, N)
    diverged_step: np.ndarray  # (S,)

    @property
    def samples(self) -> int:
        return self.h_norms.shape[0]


def summarize(run, spec: ModelSpec | None = None, eta: float | None = None) -> RunSummary:
    """Reduce a :class:`BatchRun` (or a list of trajectories) to norms."""
    if isinstance(run, RunSummary):
        return run
    if isinstance(run, (list, tuple)):
        run = _stack_trajectories(run)
    p = run.params
    states = run.states
    with np.errstate(over="ignore", invalid="ignore"):
        h = np.sqrt(np.sum(states**2, axis=-1))
        eta_norms = None
        if eta is not None:
            if spec is None:
                raise ValueError("H_eta norms need the model spectrum")
            w = np.abs(spec.spectrum.eigenvalues(p.n)) ** (2.0 * eta)
            eta_norms = np.sqrt(np.sum(w * states**2, axis=-1))
    return RunSummary(p.N, p.n, p.m, p.T, run.seeds, run.times, h, eta_norms, eta,
                      run.frozen, run.diverged_step)


def _stack_trajectories(trajs) -> BatchRun:
    from .scheme import SchemeParams

    first = trajs[0]
    n = first.states.shape[1]
    N = first.N
    params = SchemeParams(N=N, n=n, m=1, T=float(first.times[-1]))
    seeds = [t.seed for t in trajs]
    return BatchRun(
        params=params,
        seeds=None if any(s is None for s in seeds) else np.array(seeds, dtype=np.uint64),
        steps=np.arange(N + 1),
        states=np.stack([t.states for t in trajs]),
        frozen=np.stack([t.freeze_flags for t in trajs]),
        diverged_step=np.array([-1 if t.diverged_step is None else t.diverged_step for t in trajs]),
    )


# -- strong errors ---------------------------------------------------------


def _as_batch(run) -> BatchRun:
    if isinstance(run, BatchRun):
        return run
    if isinstance(run, Trajectory):
        return _stack_trajectories([run])
    return _stack_trajectories(list(run))


def error_matrix(test, reference) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample errors ``||Y_ref(t) - Y_test(t)||_H`` on the shared grid times.

    Fields are compared after zero-padding to the larger mode count.
    Returns ``(errors (S, K), times (K,))``.
    """
    test, reference = _as_batch(test), _as_batch(reference)
    if test.states.shape[0] != reference.states.shape[0]:
        raise ConfigurationError("test and reference runs have different sample counts")
    if test.seeds is None or reference.seeds is None or not np.array_equal(test.seeds, reference.seeds):
        raise ConfigurationError("test and reference runs are not driven by the same Wiener paths")
    N_t, N_r = test.params.N, reference.params.N
    if N_r % N_t:
        raise ConfigurationError(f"test grid N={N_t} is not contained in reference grid N={N_r}")
    ratio = N_r // N_t
    t_steps = test.steps
    r_index = {int(s): i for i, s in enumerate(reference.steps)}
    try:
        ref_idx = [r_index[int(s) * ratio] for s in t_steps]
    except KeyError as exc:
        raise ConfigurationError("reference run was not recorded at every test grid time") from exc
    a = test.states
    b = reference.states[:, ref_idx]
    n = max(a.shape[-1], b.shape[-1])
    if a.shape[-1] < n:
        a = np.pad(a, [(0, 0), (0, 0), (0, n - a.shape[-1])])
    if b.shape[-1] < n:
        b = np.pad(b, [(0, 0), (0, 0), (0, n - b.shape[-1])])
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.sqrt(np.sum((b - a) ** 2, axis=-1))
    return err, test.times


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    ci_low: float
    ci_high: float
    per_time: np.ndarray = field(repr=False)
    samples: int = 0


def _sup_lp(err: np.ndarray, p: float) -> float:
    # max over times of (mean over samples of err^p)^(1/p)
    return float(np.max(np.mean(err**p, axis=0) ** (1.0 / p)))


def _bootstrap_weights(S: int, B: int, seed: int = BOOTSTRAP_SEED) -> np.ndarray:
    """Resampling multiplicities divided by S: row b averages replicate b."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, S, size=(B, S))
    counts = np.zeros((B, S))
    np.add.at(counts, (np.repeat(np.arange(B), S), idx.ravel()), 1.0)
    return counts / S


def _bootstrap_means(values: np.ndarray, B: int, seed: int = BOOTSTRAP_SEED) -> np.ndarray:
    """Bootstrap replicates of the sample mean of ``values`` (S, K) -> (B, K)."""
    with np.errstate(invalid="ignore", over="ignore"):
        return _bootstrap_weights(values.shape[0], B, seed) @ values


def estimate_from_errors(err: np.ndarray, p: float = 2.0, bootstrap: int = 1000,
                         level: float = 0.95) -> ErrorEstimate:
    err = np.asarray(err, dtype=float)
    per_time = np.mean(err**p, axis=0) ** (1.0 / p)
    value = float(np.max(per_time))
    boots = np.max(_bootstrap_means(err**p, bootstrap) ** (1.0 / p), axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(boots, [alpha, 1.0 - alpha])
    return ErrorEstimate(value, float(lo), float(hi), per_time, err.shape[0])


def strong_error(test_runs, reference_runs, p: float = 2.0, bootstrap: int = 1000) -> ErrorEstimate:
    """``max_k (E ||Y_ref(t_k) - Y_test(t_k)||_H^p)^(1/p)`` with a bootstrap 95% CI."""
    err, _ = error_matrix(test_runs, reference_runs)
    return estimate_from_errors(err, p, bootstrap)


# -- rate fitting ----------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float  # the rate: minus the log-log slope
    intercept: float
    interval: tuple
    used: tuple  # resolutions kept in the fit
    dropped: tuple  # leading resolutions flagged pre-asymptotic


def _ols(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef[0], coef[1]


def _slope_interval(x, y, slope):
    k = len(x)
    if k < 3:
        return (slope, slope)
    b, a = _ols(x, y)
    resid = y - (a + b * x)
    s2 = float(np.sum(resid**2)) / (k - 2)
    se = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    from scipy.stats import t as student_t

    q = float(student_t.ppf(0.975, k - 2))
    return (slope - q * se, slope + q * se)


def fit_rate(resolutions, errors, *, drop_preasymptotic: bool = True, tolerance: float = 0.5) -> RateFit:
    """Least-squares rate of ``error ~ C * resolution^(-rate)``.

    Leading points whose two-point slope differs from the slope of the
    remaining points by more than ``tolerance`` (relative) are dropped,
    keeping at least three; dropped resolutions are reported.
    """
    res = np.asarray(resolutions, dtype=float)
    err = np.asarray(errors, dtype=float)
    if res.size != err.size or res.size < 3:
        raise ValueError("need at least three (resolution, error) pairs")
    if not (np.all(np.isfinite(err)) and np.all(err > 0)):
        raise ValueError("errors must be finite and strictly positive")
    if not (np.all(res > 0) and np.all(np.diff(res) > 0)):
        raise ValueError("resolutions must be positive and strictly increasing")
    x, y = np.log(res), np.log(err)
    start = 0
    if drop_preasymptotic:
        while x.size - start > 3:
            local = -(y[start + 1] - y[start]) / (x[start + 1] - x[start])
            tail = -_ols(x[start + 1:], y[start + 1:])[0]
            if abs(local - tail) > tolerance * abs(tail):
                start += 1
            else:
                break
    b, a = _ols(x[start:], y[start:])
    slope = -float(b)
    lo, hi = _slope_interval(x[start:], y[start:], slope)
    return RateFit(slope, float(a), (lo, hi), tuple(res[start:].tolist()), tuple(res[:start].tolist()))


@dataclass
class RateReport:
    axis: str
    resolutions: list
    errors: list
    ci_low: list
    ci_high: list
    fitted_slope: float
    slope_interval: tuple
    dropped: tuple = ()
    p: float = 2.0
    samples: int = 0
    reference: tuple = ()
    fixed: dict = field(default_factory=dict)
    seeds: tuple = ()
    runtime_s: float | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "rate_report",
            "axis": self.axis,
            "p": self.p,
            "samples": self.samples,
            "seeds": [int(s) for s in self.seeds],
            "reference": list(self.reference),
            "fixed": dict(self.fixed),
            "resolutions": [int(r) for r in self.resolutions],
            "errors": [float(e) for e in self.errors],
            "ci_low": [float(e) for e in self.ci_low],
            "ci_high": [float(e) for e in self.ci_high],
            "fitted_slope": float(self.fitted_slope),
            "slope_interval": [float(s) for s in self.slope_interval],
            "dropped": [int(d) for d in self.dropped],
        }

    def csv_rows(self):
        yield ["resolution", "error", "ci_low", "ci_high"]
        for r, e, lo, hi in zip(self.resolutions, self.errors, self.ci_low, self.ci_high):
            yield [int(r), float(e), float(lo), float(hi)]


def rate_report(axis, resolutions, error_mats, p=2.0, bootstrap=1000, **meta) -> RateReport:
    """Errors, CIs and fitted rate from per-resolution error matrices.

    The slope interval resamples the same sample indices for every
    resolution, so the coupling between resolutions is kept.
    """
    ests = [estimate_from_errors(E, p, bootstrap) for E in error_mats]
    errors = [e.value for e in ests]
    fit = fit_rate(resolutions, errors)
    keep = [i for i, r in enumerate(resolutions) if float(r) in fit.used]
    S = error_mats[0].shape[0]
    boot = np.array([
        np.max(_bootstrap_means(error_mats[i] ** p, bootstrap, BOOTSTRAP_SEED + 1) ** (1.0 / p), axis=1)
        for i in keep
    ])  # (len(keep), B), same resamples for every resolution
    slopes = []
    for e in boot.T:
        if np.all(e > 0) and np.all(np.isfinite(e)):
            slopes.append(fit_rate([resolutions[i] for i in keep], e, drop_preasymptotic=False).slope)
    lo, hi = np.quantile(slopes, [0.025, 0.975]) if slopes else fit.interval
    return RateReport(
        axis=axis,
        resolutions=list(resolutions),
        errors=errors,
        ci_low=[e.ci_low for e in ests],
        ci_high=[e.ci_high for e in ests],
        fitted_slope=fit.slope,
        slope_interval=(float(lo), float(hi)),
        dropped=fit.dropped,
        p=p,
        samples=S,
        **meta,
    )


# -- a-priori bounds -------------------------------------------------------


def lemma1_constant(p: float, C: float, T: float, theta: float) -> float:
    """``3(p-2) + 2 C^(p/2) + 2 [T^(1-2 theta) + (p/2) T^(1/2 - 2 theta)]^(p/2)``."""
    if not p >= 2:
        raise ConfigurationError("p must be at least 2", field="p")
    if not C >= 1:
        raise ConfigurationError("C must be at least 1", field="C")
    if not T > 0:
        raise ConfigurationError("T must be positive", field="T")
    if not 0 < theta <= 0.25:
        raise ConfigurationError("theta must lie in (0, 1/4]", field="theta")
    inner = T ** (1 - 2 * theta) + 0.5 * p * T ** (0.5 - 2 * theta)
    return 3 * (p - 2) + 2 * C ** (p / 2) + 2 * inner ** (p / 2)


def moment_envelope(y0_moment: float, K: float, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return (y0_moment + K * t) * np.exp(K * t)


@dataclass
class MomentReport:
    passed: bool
    p: float
    C: float
    K: float
    worst_margin: float
    worst_time: float
    resolutions: list  # (N, n, m) per run
    margins: list  # worst margin per run
    diverged: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "moment_report",
            "passed": bool(self.passed),
            "p": self.p,
            "C": self.C,
            "K": self.K,
            "worst_margin": self.worst_margin,
            "worst_time": self.worst_time,
            "resolutions": [list(r) for r in self.resolutions],
            "margins": [float(m) for m in self.margins],
            "diverged": int(self.diverged),
        }


def moment_bound_check(runs, p: float, spec: ModelSpec, theta: float = 0.25,
                       bootstrap: int = 1000, level: float = 0.99) -> MomentReport:
    """Check ``E||Y_t||^p <= (E||Y_0||^p + K t) e^{K t}`` on every grid time.

    The Monte Carlo moment is replaced by its upper ``level`` bootstrap
    bound; ``C`` is the coercivity constant at ``(p-1)/2`` (at least 1).
    The reported margins are the smallest ones over ``t > 0``.
    """
    if isinstance(runs, (BatchRun, RunSummary)):
        runs = [runs]
    C = lemma_constant_C(spec, p)
    K = lemma1_constant(p, C, spec.T, theta)
    worst, worst_t, margins, res, ndiv = math.inf, 0.0, [], [], 0
    for run in runs:
        s = summarize(run, spec)
        ndiv += int(np.sum(s.diverged_step >= 0))
        with np.errstate(over="ignore", invalid="ignore"):
            mom = s.h_norms**p
        finite = np.all(np.isfinite(mom), axis=0)
        boot = _bootstrap_means(np.where(np.isfinite(mom), mom, 0.0), bootstrap)
        upper = np.quantile(boot, level, axis=0)
        upper = np.where(finite, upper, np.inf)
        y0 = float(np.mean(mom[:, 0]))
        margin = moment_envelope(y0, K, s.times) - upper
        # at t = 0 the bound is an identity; only rounding can show there
        if margin[0] < -1e-12 * max(1.0, y0):
            i = 0
        else:
            i = 1 + int(np.argmin(margin[1:]))
        margins.append(float(margin[i]))
        res.append((s.N, s.n, s.m))
        if margin[i] < worst:
            worst, worst_t = float(margin[i]), float(s.times[i])
    return MomentReport(bool(worst >= 0 and ndiv == 0), p, C, K, worst, worst_t, res, margins, ndiv)


@dataclass
class FreezeReport:
    Ns: list
    fractions: list
    counts: list  # total step count per N
    nonincreasing: bool
    slope: float | None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "freeze_report",
            "N": [int(n) for n in self.Ns],
            "fractions": [float(f) for f in self.fractions],
            "counts": [int(c) for c in self.counts],
            "nonincreasing": bool(self.nonincreasing),
            "slope": None if self.slope is None else float(self.slope),
        }


def freeze_fraction(runs, sigmas: float = 2.0) -> FreezeReport:
    """Fraction of frozen steps per N, with a binomial-tolerance monotonicity test."""
    if isinstance(runs, (BatchRun, RunSummary)):
        runs = [runs]
    by_N: dict = {}
    for run in runs:
        frozen = run.frozen
        N = frozen.shape[1]
        tot, cnt = by_N.get(N, (0, 0))
        by_N[N] = (tot + int(np.sum(frozen)), cnt + frozen.size)
    Ns = sorted(by_N)
    fr = [by_N[N][0] / by_N[N][1] for N in Ns]
    counts = [by_N[N][1] for N in Ns]
    ok = True
    for i in range(len(Ns) - 1):
        se = math.sqrt(fr[i] * (1 - fr[i]) / counts[i] + fr[i + 1] * (1 - fr[i + 1]) / counts[i + 1])
        if fr[i + 1] > fr[i] + sigmas * se:
            ok = False
    slope = None
    pos = [(N, f) for N, f in zip(Ns, fr) if f > 0]
    if len(pos) >= 2:
        x, y = np.log([a for a, _ in pos]), np.log([b for _, b in pos])
        slope = float(_ols(x, y)[0])
    return FreezeReport(Ns, fr, counts, ok, slope)


@dataclass
class SobolevReport:
    eta: float
    p: float
    resolutions: list
    sup_moments: list  # per run: sup_t (E||Y_t||_{H_eta}^p)^(1/p)
    max_moment: float
    growth_slope: float | None
    passed: bool

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "sobolev_report",
            "eta": self.eta,
            "p": self.p,
            "resolutions": [list(r) for r in self.resolutions],
            "sup_moments": [float(v) for v in self.sup_moments],
            "max_moment": float(self.max_moment),
            "growth_slope": None if self.growth_slope is None else float(self.growth_slope),
            "passed": bool(self.passed),
        }


def sobolev_bound_check(runs, eta: float, spec: ModelSpec, p: float = 2.0,
                        tolerance: float = 0.1) -> SobolevReport:
    """Uniform-in-resolution ``H_eta`` moment witness.

    Passes when the log-log slope of the sup-in-time moment against N
    stays within ``tolerance`` of zero (trivially with a single N).
    """
    if not eta < 0.5:
        raise ConfigurationError("eta must be below 1/2", field="eta")
    if isinstance(runs, (BatchRun, RunSummary)):
        runs = [runs]
    res, sups = [], []
    for run in runs:
        s = summarize(run, spec, eta=eta)
        if s.eta_norms is None or s.eta != eta:
            raise ValueError(f"summary carries no H_{eta} norms")
        mom = np.mean(s.eta_norms**p, axis=0) ** (1.0 / p)
        sups.append(float(np.max(mom)))
        res.append((s.N, s.n, s.m))
    Ns = sorted({r[0] for r in res})
    slope = None
    if len(Ns) >= 2:
        best = [max(v for r, v in zip(res, sups) if r[0] == N) for N in Ns]
        slope = float(_ols(np.log(Ns), np.log(best))[0])
    passed = bool(np.all(np.isfinite(sups)) and (slope is None or abs(slope) <= tolerance))
    return SobolevReport(eta, p, res, sups, float(max(sups)), slope, passed)
