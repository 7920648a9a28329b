r"""Time steppers on the spectral Galerkin space ``span{e_1..e_n}``.

The nonlinearities-stopped exponential Euler step is

.. math::

    Y_{k+1} = e^{\Delta t A}\Big(Y_k + \mathbf 1\{\|P_nF(Y_k)\|_H
        + \|P_nB(Y_k)\|_{HS} \le (N/T)^\theta\}
        \big[\Delta t\,P_nF(Y_k) + P_nB(Y_k)P_m\Delta W_k\big]\Big),

i.e. an explicit exponential Euler step whose update is dropped
("frozen") whenever the coefficients are too large for the step size.
The untamed baseline forces the indicator to one.  The integrated
counterpart integrates the same frozen coefficients exactly in time
(``phi1`` weights for the drift, fine-grid Ito sums for the noise).

All steppers work on sample batches: state arrays of shape ``(S, n)``
with one row per Monte Carlo sample.  Rows never interact, so a batch run
equals the stack of single runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError
from .model import (
    ModelSpec,
    default_tail,
    drift_values,
    hs_norm_sq,
    noise_values,
    taming_threshold,
)
from .noise import BrownianPath, aggregate
from .spectral import GridPlan, SpectralField, analyze, phi1_weight, synthesize

__all__ = [
    "SchemeParams",
    "Trajectory",
    "BatchRun",
    "IndicatorResult",
    "indicator",
    "stopped_euler_step",
    "untamed_step",
    "simulate",
    "simulate_untamed",
    "simulate_counterpart",
    "run_batch",
    "run_counterpart_batch",
]


@dataclass(frozen=True)
class SchemeParams:
    """Discretization: ``N`` steps on [0, T], ``n`` modes, ``m`` noise modes."""

    N: int
    n: int
    m: int
    theta: float = 0.25
    T: float = 1.0
    plan: GridPlan | None = None
    L_tail: int | None = None

    def __post_init__(self):
        for name in ("N", "n", "m"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be at least 1", field=name)
        if not 0 < self.theta <= 0.25:
            raise ConfigurationError("theta must lie in (0, 1/4]", field="theta")
        if not self.T > 0:
            raise ConfigurationError("T must be positive", field="T")
        plan = self.plan or GridPlan.for_modes(max(self.n, self.m))
        plan.check_dealiased(max(self.n, self.m))
        object.__setattr__(self, "plan", plan)
        L = default_tail(self.n) if self.L_tail is None else int(self.L_tail)
        if L < self.n:
            raise ConfigurationError("L_tail must be at least n", field="L_tail")
        object.__setattr__(self, "L_tail", L)

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def threshold(self) -> float:
        return taming_threshold(self.N, self.T, self.theta)

    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def replace(self, **changes) -> "SchemeParams":
        kw = dict(N=self.N, n=self.n, m=self.m, theta=self.theta, T=self.T, plan=None, L_tail=None)
        kw.update(changes)
        return SchemeParams(**kw)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One sample path of a scheme on the grid ``t_k = kT/N``.

    ``freeze_flags[k]`` is True when the step from ``t_k`` to ``t_{k+1}``
    was frozen (indicator 0).
    """

    states: np.ndarray  # (N+1, n)
    times: np.ndarray
    freeze_flags: np.ndarray  # (N,)
    diverged: bool = False
    diverged_step: int | None = None
    seed: int | None = None

    @property
    def N(self) -> int:
        return self.freeze_flags.size

    def state(self, k: int) -> SpectralField:
        return SpectralField(self.states[k], diverged=self.diverged and k >= (self.diverged_step or 0))

    def h_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.states**2, axis=-1))


@dataclass(eq=False)
class BatchRun:
    """Output of :func:`run_batch` for ``S`` samples.

    ``states`` holds the recorded time slices only (every ``stride`` steps).
    """

    params: SchemeParams
    seeds: np.ndarray
    steps: np.ndarray  # recorded step indices
    states: np.ndarray  # (S, K, n)
    frozen: np.ndarray  # (S, N)
    diverged_step: np.ndarray  # (S,), -1 when finite throughout
    scheme: str = "stopped"
    extra: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.params.dt

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_step >= 0

    def trajectory(self, i: int) -> Trajectory:
        if len(self.steps) != self.params.N + 1:
            raise ValueError("trajectory() needs a run recorded at every step")
        d = int(self.diverged_step[i])
        return Trajectory(
            states=self.states[i],
            times=self.times,
            freeze_flags=self.frozen[i],
            diverged=d >= 0,
            diverged_step=d if d >= 0 else None,
            seed=int(self.seeds[i]) if self.seeds is not None else None,
        )


class IndicatorResult(NamedTuple):
    passed: bool
    drift_norm: float
    hs_norm: float
    threshold: float
    diverged: bool


class _Stepper:
    """Precomputed per-resolution quantities; evaluates batched steps."""

    def __init__(self, params: SchemeParams, spec: ModelSpec):
        if abs(params.T - spec.T) > 1e-12 * spec.T:
            raise ConfigurationError("scheme horizon T differs from the model horizon", field="T")
        self.params = params
        self.spec = spec
        self.M = params.plan.M
        self.lam = spec.spectrum.eigenvalues(params.n)
        self.decay = np.exp(self.lam * params.dt)
        self.threshold = params.threshold

    def coefficients(self, Y):
        """Grid values, ``P_n F(Y)``, and the two indicator norms, row-wise."""
        p = self.params
        vals = synthesize(Y, self.M)
        Fc = analyze(drift_values(vals, self.spec), p.n)
        fnorm = np.sqrt(np.sum(Fc * Fc, axis=-1))
        hs = np.sqrt(hs_norm_sq(Y, self.spec, p.n, p.L_tail))
        return vals, Fc, fnorm, hs

    def diffusion(self, vals, dW):
        w = self.spec.sigma * vals * noise_values(dW, self.spec, self.M)
        return analyze(w, self.params.n)

    def step(self, Y, dW, tamed=True):
        """One step for every row; returns the new states and the frozen mask."""
        p = self.params
        if tamed:
            vals, Fc, fnorm, hs = self.coefficients(Y)
            passed = (fnorm + hs) <= self.threshold
        else:
            vals = synthesize(Y, self.M)
            Fc = analyze(drift_values(vals, self.spec), p.n)
            passed = np.ones(Y.shape[0], dtype=bool)
        if self.spec.sigma != 0:
            update = p.dt * Fc + self.diffusion(vals, dW)
        else:
            update = p.dt * Fc
        new = self.decay * np.where(passed[:, None], Y + update, Y)
        return new, ~passed


def _initial_batch(params: SchemeParams, spec: ModelSpec, S: int) -> np.ndarray:
    y0 = spec.initial(params.n)
    return np.repeat(y0[None, :], S, axis=0)


def _recorded_steps(N: int, stride: int) -> np.ndarray:
    if stride < 1 or N % stride:
        raise ConfigurationError(f"record stride {stride} must divide N={N}")
    return np.arange(0, N + 1, stride)


def run_batch(
    params: SchemeParams,
    spec: ModelSpec,
    increments: np.ndarray,
    *,
    seeds=None,
    scheme: str = "stopped",
    stride: int = 1,
    initial: np.ndarray | None = None,
) -> BatchRun:
    """Run ``S`` coupled samples.

    ``increments`` has shape ``(S, N, m')`` with ``m' >= params.m``: the
    coarse increments of each sample's Wiener path on the scheme grid.
    """
    if scheme not in ("stopped", "untamed"):
        raise ConfigurationError(f"unknown scheme '{scheme}'")
    inc = np.asarray(increments, dtype=float)
    if inc.ndim != 3 or inc.shape[1] != params.N or inc.shape[2] < params.m:
        raise ConfigurationError(
            f"increments of shape {inc.shape} do not fit N={params.N}, m={params.m}"
        )
    inc = inc[:, :, :params.m]
    S = inc.shape[0]
    stepper = _Stepper(params, spec)
    steps = _recorded_steps(params.N, stride)
    Y = _initial_batch(params, spec, S) if initial is None else np.array(initial, dtype=float)
    states = np.empty((S, steps.size, params.n))
    states[:, 0] = Y
    frozen = np.zeros((S, params.N), dtype=bool)
    dstep = np.full(S, -1, dtype=np.int64)
    tamed = scheme == "stopped"
    slot = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(params.N):
            Y, fz = stepper.step(Y, inc[:, k], tamed=tamed)
            frozen[:, k] = fz
            bad = (dstep < 0) & ~np.all(np.isfinite(Y), axis=-1)
            dstep[bad] = k + 1
            if (k + 1) % stride == 0:
                states[:, slot] = Y
                slot += 1
    return BatchRun(
        params=params,
        seeds=None if seeds is None else np.asarray(seeds, dtype=np.uint64),
        steps=steps,
        states=states,
        frozen=frozen,
        diverged_step=dstep,
        scheme=scheme,
    )


def run_counterpart_batch(
    params: SchemeParams,
    spec: ModelSpec,
    fine_increments: np.ndarray,
    substeps: int = 16,
    *,
    stopped: bool = False,
    seeds=None,
) -> tuple[BatchRun, np.ndarray]:
    """Scheme states together with their integrated counterpart.

    ``fine_increments`` has shape ``(S, N*substeps, m')``.  The counterpart
    advances by ``e^{dt A} Ybar_k + phi1(A, dt) P_nF(Y_k)
    + sum_i e^{(dt - i*h) A} P_nB(Y_k) dW_{k,i}`` with ``h = dt/substeps``;
    ``stopped=True`` multiplies both terms by the scheme's indicator.
    Returns the scheme run and the counterpart states ``(S, N+1, n)``.
    """
    fine = np.asarray(fine_increments, dtype=float)
    N, n, m = params.N, params.n, params.m
    if fine.ndim != 3 or fine.shape[1] != N * substeps or fine.shape[2] < m:
        raise ConfigurationError(
            f"fine increments of shape {fine.shape} do not fit N*substeps={N * substeps}, m={m}"
        )
    fine = fine[:, :, :m]
    S = fine.shape[0]
    coarse = aggregate(fine, N, axis=1)
    stepper = _Stepper(params, spec)
    h = params.dt / substeps
    drift_w = phi1_weight(stepper.lam, params.dt)
    offsets = params.dt - h * np.arange(substeps)
    noise_w = np.exp(np.outer(offsets, stepper.lam))  # (substeps, n)

    Y = _initial_batch(params, spec, S)
    Yb = Y.copy()
    states = np.empty((S, N + 1, n))
    bar = np.empty((S, N + 1, n))
    states[:, 0] = Y
    bar[:, 0] = Yb
    frozen = np.zeros((S, N), dtype=bool)
    dstep = np.full(S, -1, dtype=np.int64)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            vals, Fc, fnorm, hs = stepper.coefficients(Y)
            passed = (fnorm + hs) <= stepper.threshold
            gate = passed[:, None] if stopped else 1.0
            inc = Yb * stepper.decay + gate * drift_w * Fc
            if spec.sigma != 0:
                sub = fine[:, k * substeps:(k + 1) * substeps]  # (S, sub, m)
                noise = noise_values(sub, spec, stepper.M)
                B = analyze(spec.sigma * vals[:, None, :] * noise, n)  # (S, sub, n)
                inc = inc + gate * np.sum(noise_w * B, axis=1)
            Yb = inc
            Y, fz = stepper.step(Y, coarse[:, k], tamed=True)
            frozen[:, k] = fz
            bad = (dstep < 0) & ~np.all(np.isfinite(Y), axis=-1)
            dstep[bad] = k + 1
            states[:, k + 1] = Y
            bar[:, k + 1] = Yb
    run = BatchRun(
        params=params,
        seeds=None if seeds is None else np.asarray(seeds, dtype=np.uint64),
        steps=np.arange(N + 1),
        states=states,
        frozen=frozen,
        diverged_step=dstep,
    )
    return run, bar


# -- single-field API ------------------------------------------------------


def _as_row(y: SpectralField, params: SchemeParams) -> np.ndarray:
    if y.n != params.n:
        raise ConfigurationError(f"state has {y.n} modes, scheme expects {params.n}")
    return y.coeffs[None, :]


def indicator(y: SpectralField, params: SchemeParams, spec: ModelSpec) -> IndicatorResult:
    """Whether the step from ``y`` is taken, with the two norms it compares.

    A non-finite state never passes.
    """
    row = _as_row(y, params)
    with np.errstate(over="ignore", invalid="ignore"):
        _, _, fnorm, hs = _Stepper(params, spec).coefficients(row)
    f, b = float(fnorm[0]), float(hs[0])
    bad = y.diverged or not (np.isfinite(f) and np.isfinite(b))
    thr = params.threshold
    return IndicatorResult(bool(not bad and f + b <= thr), f, b, thr, bool(bad))


def _single_step(y, dW, params, spec, tamed):
    row = _as_row(y, params)
    dW = np.asarray(dW, dtype=float).reshape(1, -1)
    if dW.shape[1] != params.m:
        raise ConfigurationError(f"expected {params.m} increments, got {dW.shape[1]}")
    with np.errstate(over="ignore", invalid="ignore"):
        new, fz = _Stepper(params, spec).step(row, dW, tamed=tamed)
    return SpectralField(new[0], diverged=y.diverged), bool(fz[0])


def stopped_euler_step(y: SpectralField, dW, params: SchemeParams, spec: ModelSpec):
    """One stopped step; returns ``(new_state, frozen)``."""
    return _single_step(y, dW, params, spec, tamed=True)


def untamed_step(y: SpectralField, dW, params: SchemeParams, spec: ModelSpec):
    new, _ = _single_step(y, dW, params, spec, tamed=False)
    return new


def _path_increments(params: SchemeParams, path: BrownianPath) -> np.ndarray:
    if path.N_fine % params.N:
        raise ConfigurationError(f"N={params.N} does not divide the path's N_fine={path.N_fine}")
    if params.m > path.m_max:
        raise ConfigurationError(f"m={params.m} exceeds the path's m_max={path.m_max}")
    if abs(path.T - params.T) > 1e-12 * params.T:
        raise ConfigurationError("path horizon differs from scheme horizon", field="T")
    return path.coarse(params.N, params.m)[None]


def simulate(params: SchemeParams, spec: ModelSpec, path: BrownianPath) -> Trajectory:
    run = run_batch(params, spec, _path_increments(params, path), seeds=[path.master_seed])
    return run.trajectory(0)


def simulate_untamed(params: SchemeParams, spec: ModelSpec, path: BrownianPath) -> Trajectory:
    run = run_batch(params, spec, _path_increments(params, path), seeds=[path.master_seed],
                    scheme="untamed")
    return run.trajectory(0)


def simulate_counterpart(
    params: SchemeParams,
    spec: ModelSpec,
    path: BrownianPath,
    substeps: int = 16,
    *,
    stopped: bool = False,
) -> Trajectory:
    """Integrated counterpart of the stopped scheme along ``path``.

    Frozen flags and divergence refer to the underlying scheme.
    """
    if path.N_fine % (params.N * substeps):
        raise ConfigurationError(
            f"N*substeps={params.N * substeps} does not divide N_fine={path.N_fine}"
        )
    fine = path.coarse(params.N * substeps, params.m)[None]
    run, bar = run_counterpart_batch(params, spec, fine, substeps, stopped=stopped,
                                     seeds=[path.master_seed])
    base = run.trajectory(0)
    return Trajectory(bar[0], base.times, base.freeze_flags, base.diverged, base.diverged_step,
                      base.seed)
