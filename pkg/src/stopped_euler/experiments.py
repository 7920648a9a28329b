"""Coupled Monte Carlo experiments built from the scheme and the estimators.

Samples are processed in chunks.  For each chunk the fine Wiener
increments are generated once at the reference resolution; the reference
and every test resolution are then driven by aggregates of that table, so
all runs in a chunk share their paths exactly.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    AnalysisConfig,
    FreezeReport,
    MomentReport,
    RateReport,
    RunSummary,
    SobolevReport,
    error_matrix,
    freeze_fraction,
    moment_bound_check,
    rate_report,
    sobolev_bound_check,
    summarize,
)
from .errors import ConfigurationError
from .model import ModelSpec
from .noise import aggregate, increment_tables, sample_seed
from .scheme import BatchRun, SchemeParams, run_batch

log = logging.getLogger(__name__)

AXES = ("temporal", "spatial", "noise")


def _chunks(keys, size):
    for i in range(0, len(keys), size):
        yield keys[i:i + size]


def _seeds(keys):
    return np.array([sample_seed(m, i) for m, i in keys], dtype=np.uint64)


def _merge(summaries: list[RunSummary]) -> RunSummary:
    first = summaries[0]
    cat = lambda name: np.concatenate([getattr(s, name) for s in summaries])  # noqa: E731
    return RunSummary(
        first.N, first.n, first.m, first.T,
        None if first.seeds is None else cat("seeds"),
        first.times,
        cat("h_norms"),
        None if first.eta_norms is None else cat("eta_norms"),
        first.eta,
        cat("frozen"),
        cat("diverged_step"),
    )


def axis_resolutions(axis: str, values, fixed: dict) -> list[tuple[int, int, int]]:
    """``(N, n, m)`` for every value on ``axis`` with the other two fixed."""
    if axis not in AXES:
        raise ConfigurationError(f"unknown axis '{axis}' (use one of {', '.join(AXES)})", field="axis")
    out = []
    for v in values:
        N, n, m = fixed.get("N"), fixed.get("n"), fixed.get("m")
        if axis == "temporal":
            N = v
        elif axis == "spatial":
            n = v
        else:
            m = v
        if None in (N, n, m):
            raise ConfigurationError(f"axis '{axis}' needs fixed values for the other two of N, n, m")
        out.append((int(N), int(n), int(m)))
    return out


@dataclass
class ConvergenceResult:
    report: RateReport
    summaries: dict = field(default_factory=dict)  # (N, n, m) -> RunSummary
    reference_summary: RunSummary | None = None


def convergence_experiment(
    spec: ModelSpec,
    axis: str,
    values,
    fixed: dict,
    cfg: AnalysisConfig,
    theta: float = 0.25,
    eta: float | None = None,
) -> ConvergenceResult:
    """Strong errors along one axis against the coupled reference ``cfg.reference``."""
    values = sorted(int(v) for v in values)
    if len(values) < 3:
        raise ConfigurationError("a rate fit needs at least three resolutions", field="values")
    res = axis_resolutions(axis, values, fixed)
    N_ref, n_ref, m_ref = cfg.reference
    cfg.check_reference(Ns=[r[0] for r in res], ns=[r[1] for r in res], ms=[r[2] for r in res])
    for N, _, _ in res:
        if (N_ref // N) & (N_ref // N - 1):
            raise ConfigurationError(f"N_ref/N = {N_ref // N} must be a power of two", field="reference")
    if N_ref & (N_ref - 1):
        raise ConfigurationError("N_ref must be a power of two", field="reference")
    ref_params = SchemeParams(N_ref, n_ref, m_ref, theta=theta, T=spec.T)
    stride = math.gcd(*[N_ref // r[0] for r in res])
    started = time.perf_counter()
    errs = {r: [] for r in res}
    sums = {r: [] for r in res}
    ref_sums = []
    for keys in _chunks(cfg.sample_keys(), cfg.chunk):
        seeds = _seeds(keys)
        fine = increment_tables(seeds, N_ref, m_ref, spec.T)
        ref = run_batch(ref_params, spec, fine, seeds=seeds, stride=stride)
        ref_sums.append(summarize(ref, spec, eta))
        for r in res:
            N, n, m = r
            params = SchemeParams(N, n, m, theta=theta, T=spec.T)
            inc = aggregate(fine[:, :, :m], N, axis=1)
            run = run_batch(params, spec, inc, seeds=seeds)
            E, _ = error_matrix(run, ref)
            errs[r].append(E)
            sums[r].append(summarize(run, spec, eta))
        log.info("%s axis: %d/%d samples", axis, len(ref_sums) * cfg.chunk, cfg.M_samples)
    mats = [np.concatenate(errs[r]) for r in res]
    report = rate_report(
        axis, values, mats, p=cfg.p, bootstrap=cfg.bootstrap,
        reference=tuple(cfg.reference),
        fixed={k: int(v) for k, v in fixed.items() if k != _axis_key(axis)},
        seeds=tuple(cfg.seeds),
    )
    report.runtime_s = time.perf_counter() - started
    return ConvergenceResult(report, {r: _merge(sums[r]) for r in res}, _merge(ref_sums))


def _axis_key(axis):
    return {"temporal": "N", "spatial": "n", "noise": "m"}[axis]


def batch_summaries(
    spec: ModelSpec,
    resolutions,
    cfg: AnalysisConfig,
    theta: float = 0.25,
    eta: float | None = None,
    scheme: str = "stopped",
) -> dict:
    """Independent (but path-coupled) runs at each ``(N, n, m)``, reduced to norms."""
    resolutions = [tuple(int(x) for x in r) for r in resolutions]
    N_fine = max(r[0] for r in resolutions)
    if any(N_fine % r[0] for r in resolutions) or N_fine & (N_fine - 1):
        raise ConfigurationError("resolutions must share a power-of-two fine grid", field="N")
    m_max = max(r[2] for r in resolutions)
    out = {r: [] for r in resolutions}
    for keys in _chunks(cfg.sample_keys(), cfg.chunk):
        seeds = _seeds(keys)
        fine = increment_tables(seeds, N_fine, m_max, spec.T)
        for r in resolutions:
            N, n, m = r
            params = SchemeParams(N, n, m, theta=theta, T=spec.T)
            run = run_batch(params, spec, aggregate(fine[:, :, :m], N, axis=1), seeds=seeds, scheme=scheme)
            out[r].append(summarize(run, spec, eta))
    return {r: _merge(v) for r, v in out.items()}


@dataclass
class MomentsResult:
    moments: MomentReport
    freeze: FreezeReport
    sobolev: SobolevReport

    @property
    def passed(self) -> bool:
        return self.moments.passed and self.freeze.nonincreasing and self.sobolev.passed

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "moments",
            "passed": bool(self.passed),
            "moment_bound": self.moments.to_dict(),
            "freeze": self.freeze.to_dict(),
            "sobolev": self.sobolev.to_dict(),
        }


def moments_experiment(spec, resolutions, cfg: AnalysisConfig, theta: float = 0.25) -> MomentsResult:
    sums = batch_summaries(spec, resolutions, cfg, theta=theta, eta=cfg.eta)
    runs = list(sums.values())
    return MomentsResult(
        moment_bound_check(runs, cfg.p, spec, theta, bootstrap=cfg.bootstrap),
        freeze_fraction(runs),
        sobolev_bound_check(runs, cfg.eta, spec, cfg.p),
    )


@dataclass
class CompareResult:
    params: tuple
    samples: int
    max_moment: dict  # scheme -> max_t E||Y_t||^p over finite samples
    diverged_fraction: dict
    within_envelope: dict  # scheme -> fraction of paths under the Lemma 1 envelope
    max_deviation: float  # max |stopped - untamed| over finite paths/times

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "compare",
            "N": self.params[0],
            "n": self.params[1],
            "m": self.params[2],
            "samples": self.samples,
            "max_moment": {k: _json_float(v) for k, v in self.max_moment.items()},
            "diverged_fraction": dict(self.diverged_fraction),
            "within_envelope": dict(self.within_envelope),
            "max_deviation": _json_float(self.max_deviation),
        }


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def compare_experiment(spec, N, n, m, cfg: AnalysisConfig, theta: float = 0.25) -> CompareResult:
    """Stopped and untamed schemes on the same paths."""
    from .analysis import lemma1_constant, moment_envelope
    from .model import lemma_constant_C

    params = SchemeParams(N, n, m, theta=theta, T=spec.T)
    C = lemma_constant_C(spec, cfg.p)
    K = lemma1_constant(cfg.p, C, spec.T, theta)
    runs: dict[str, list[BatchRun]] = {"stopped": [], "untamed": []}
    for keys in _chunks(cfg.sample_keys(), cfg.chunk):
        seeds = _seeds(keys)
        inc = increment_tables(seeds, N, m, spec.T)
        for scheme in runs:
            runs[scheme].append(run_batch(params, spec, inc, seeds=seeds, scheme=scheme))
    states = {k: np.concatenate([r.states for r in v]) for k, v in runs.items()}
    dsteps = {k: np.concatenate([r.diverged_step for r in v]) for k, v in runs.items()}
    times = params.times()
    y0 = float(np.sum(spec.initial(n) ** 2)) ** (cfg.p / 2)
    env = moment_envelope(y0, K, times)
    out_mom, out_div, out_env = {}, {}, {}
    with np.errstate(over="ignore", invalid="ignore"):
        for k, st in states.items():
            norms_p = np.sum(st**2, axis=-1) ** (cfg.p / 2)
            finite = dsteps[k] < 0
            out_div[k] = float(np.mean(~finite))
            out_mom[k] = float(np.max(np.mean(norms_p[finite], axis=0))) if finite.any() else math.inf
            inside = finite & np.all(norms_p <= env, axis=1)
            out_env[k] = float(np.mean(inside))
        both = (dsteps["stopped"] < 0) & (dsteps["untamed"] < 0)
        dev = float(np.max(np.abs(states["stopped"][both] - states["untamed"][both]))) if both.any() else math.nan
    return CompareResult((N, n, m), states["stopped"].shape[0], out_mom, out_div, out_env, dev)


@dataclass
class CounterpartGap:
    N: int
    gap_free: float  # max_k (E||Y_k - Ybar_k||^p)^(1/p), indicator-free counterpart
    gap_stopped: float  # same with the indicator inside the counterpart
    frozen_fraction: float

    def differ(self, tol: float = 1e-12) -> bool:
        return abs(self.gap_free - self.gap_stopped) > tol * max(1.0, self.gap_free)

    def to_dict(self) -> dict:
        return {"N": self.N, "gap_free": self.gap_free, "gap_stopped": self.gap_stopped,
                "frozen_fraction": self.frozen_fraction, "differ": self.differ()}


def counterpart_gaps(spec, Ns, n, m, cfg: AnalysisConfig, substeps: int = 16,
                     theta: float = 0.25) -> list[CounterpartGap]:
    """Gap between the scheme and both variants of its integrated counterpart."""
    from .scheme import run_counterpart_batch

    Ns = sorted(int(N) for N in Ns)
    N_fine = Ns[-1] * substeps
    if N_fine & (N_fine - 1) or any(Ns[-1] % N for N in Ns):
        raise ConfigurationError("the N values and substeps must share a power-of-two fine grid", field="N")
    acc = {N: [[], [], []] for N in Ns}
    for keys in _chunks(cfg.sample_keys(), cfg.chunk):
        fine = increment_tables(_seeds(keys), N_fine, m, spec.T)
        for N in Ns:
            params = SchemeParams(N, n, m, theta=theta, T=spec.T)
            inc = aggregate(fine, N * substeps, axis=1)
            run, free = run_counterpart_batch(params, spec, inc, substeps)
            _, stopped = run_counterpart_batch(params, spec, inc, substeps, stopped=True)
            with np.errstate(over="ignore", invalid="ignore"):
                acc[N][0].append(np.sum((run.states - free) ** 2, axis=-1) ** (cfg.p / 2))
                acc[N][1].append(np.sum((run.states - stopped) ** 2, axis=-1) ** (cfg.p / 2))
            acc[N][2].append(run.frozen)
    out = []
    for N in Ns:
        a, b, fz = (np.concatenate(x) for x in acc[N])
        out.append(CounterpartGap(
            N,
            float(np.max(np.mean(a, axis=0)) ** (1 / cfg.p)),
            float(np.max(np.mean(b, axis=0)) ** (1 / cfg.p)),
            float(np.mean(fz)),
        ))
    return out
