r"""The stochastic reaction-diffusion example.

.. math::

    dX_t = [\varepsilon \Delta X_t + \kappa |X_t| (\rho - X_t)]\,dt
           + \sigma X_t\, dW^Q_t, \qquad X_0 = \xi,

on (0, 1) with Dirichlet conditions and diagonal noise covariance
``Q e_k = r_k e_k``, ``r_k = c_q k^{-q}``.  The drift ``F`` and the
multiplicative diffusion ``B(v)u = sigma * v * sqrt(Q) u`` are evaluated
pseudo-spectrally; Hilbert-Schmidt norms are exact finite sums up to a
truncation level with a certified tail bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.special

from . import kernels
from .errors import ConfigurationError
from .spectral import (
    GridPlan,
    OperatorSpectrum,
    SpectralField,
    analyze,
    cosine_moments,
    sup_norm_bound,
    synthesize,
)

__all__ = [
    "ModelSpec",
    "TheoryConstants",
    "HSNorm",
    "default_initial_coeffs",
    "drift",
    "diffusion_apply",
    "hs_norm",
    "coercivity_constant",
    "lemma_constant_C",
    "monotonicity_constant",
    "taming_threshold",
]


def default_initial_coeffs(n: int, scale: float = 8.0) -> np.ndarray:
    """Sine coefficients of ``scale * x * (1 - x)``, exact (odd modes only)."""
    k = np.arange(1, n + 1, dtype=float)
    odd = (np.arange(1, n + 1) % 2) == 1
    return np.where(odd, scale * np.sqrt(2.0) * 4.0 / (k * np.pi) ** 3, 0.0)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Coefficients of the example equation.

    ``xi`` overrides the default initial condition ``xi_scale * x(1-x)``.
    """

    eps: float = 1.0
    kappa: float = 1.0
    rho: float = 1.0
    sigma: float = 0.25
    q: float = 2.0
    c_q: float = 1.0
    T: float = 1.0
    xi_scale: float = 8.0
    xi: SpectralField | None = None
    spectrum: OperatorSpectrum = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("eps", "rho", "T", "c_q"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive", field=name)
        # kappa = sigma = 0 is kept as the linear test case
        for name in ("kappa", "sigma"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be nonnegative", field=name)
        if not self.q > 1:
            raise ConfigurationError(
                "noise decay exponent q must exceed 1 (Trace(Q) is infinite otherwise)", field="q"
            )
        if self.xi is None and not self.xi_scale >= 0:
            raise ConfigurationError("xi_scale must be nonnegative", field="xi_scale")
        object.__setattr__(self, "spectrum", OperatorSpectrum(self.eps))
        if self.xi is not None:
            if self.xi.diverged:
                raise ConfigurationError("initial condition is not finite", field="xi")
            plan = GridPlan.for_modes(self.xi.n)
            vals = synthesize(self.xi.coeffs, plan.M)
            tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
            if np.min(vals) < -tol:
                raise ConfigurationError("initial condition must be nonnegative", field="xi")

    def initial(self, n: int) -> np.ndarray:
        """Coefficients of ``P_n xi``."""
        if self.xi is None:
            return default_initial_coeffs(n, self.xi_scale)
        return self.xi.padded(n)

    def noise_weights(self, count: int) -> np.ndarray:
        """``r_1..r_count``."""
        k = np.arange(1, count + 1, dtype=float)
        return self.c_q * k ** (-self.q)

    @property
    def trace_q(self) -> float:
        return float(self.c_q * scipy.special.zeta(self.q))

    def noise_tail(self, L: int) -> float:
        """``sum_{l > L} r_l``."""
        return float(self.c_q * scipy.special.zeta(self.q, L + 1))

    def replace(self, **changes) -> "ModelSpec":
        kw = {k: getattr(self, k) for k in
              ("eps", "kappa", "rho", "sigma", "q", "c_q", "T", "xi_scale", "xi")}
        kw.update(changes)
        return ModelSpec(**kw)


# -- array layer used by the time steppers ---------------------------------


def drift_values(values: np.ndarray, spec: ModelSpec) -> np.ndarray:
    return spec.kappa * np.abs(values) * (spec.rho - values)


def noise_values(dW: np.ndarray, spec: ModelSpec, M: int) -> np.ndarray:
    """Grid values of ``sqrt(Q) P_m dW`` for increments of the first m modes."""
    m = dW.shape[-1]
    return synthesize(np.sqrt(spec.noise_weights(m)) * dW, M)


def hs_norm_sq(coeffs: np.ndarray, spec: ModelSpec, n_proj: int, L_tail: int) -> np.ndarray:
    """``||P_n B(v)||_HS^2`` summed over noise modes ``l <= L_tail``.

    Uses ``<v e_l, e_k> = g[|l-k|] - g[l+k]`` with the cosine moments g of v.
    """
    coeffs = np.atleast_2d(coeffs)
    if spec.sigma == 0:
        return np.zeros(coeffs.shape[0])
    g = cosine_moments(coeffs, L_tail + n_proj)
    r = spec.noise_weights(L_tail)
    sums = kernels.hs_weighted_sums(np.ascontiguousarray(g), r, n_proj)
    return spec.sigma**2 * sums


def default_tail(n_proj: int) -> int:
    return 4 * n_proj


# -- field layer -----------------------------------------------------------


def _check_plan(plan: GridPlan, *sizes: int) -> None:
    plan.check_dealiased(max(sizes))


def drift(v: SpectralField, spec: ModelSpec, plan: GridPlan, n_out: int | None = None) -> SpectralField:
    """``P_{n_out} F(v)`` with ``F(v)(x) = kappa |v(x)| (rho - v(x))``."""
    n_out = v.n if n_out is None else n_out
    _check_plan(plan, v.n, n_out)
    with np.errstate(invalid="ignore", over="ignore"):
        vals = synthesize(v.coeffs, plan.M)
        out = analyze(drift_values(vals, spec), n_out)
    return SpectralField(out, diverged=v.diverged)


def diffusion_apply(
    v: SpectralField,
    noise_incr,
    spec: ModelSpec,
    plan: GridPlan,
    n_out: int | None = None,
) -> SpectralField:
    """``P_{n_out} B(v) P_m dW``: grid product ``sigma * v * sqrt(Q) dW`` projected back."""
    dW = np.asarray(noise_incr, dtype=float).reshape(-1)
    n_out = v.n if n_out is None else n_out
    _check_plan(plan, v.n, dW.size, n_out)
    with np.errstate(invalid="ignore", over="ignore"):
        vals = synthesize(v.coeffs, plan.M)
        w = spec.sigma * vals * noise_values(dW, spec, plan.M)
        out = analyze(w, n_out)
    return SpectralField(out, diverged=v.diverged)


class HSNorm(NamedTuple):
    value: float
    tail_bound: float  # bound on the omitted part of the squared norm
    L_tail: int


def hs_norm(v: SpectralField, spec: ModelSpec, n_proj: int | None = None, L_tail: int | None = None) -> HSNorm:
    """Hilbert-Schmidt norm of ``P_{n_proj} B(v)`` truncated at ``L_tail`` noise modes.

    The omitted part of the squared norm is at most
    ``sigma^2 ||v||_inf^2 sum_{l > L_tail} r_l``; ``||v||_inf`` is bounded
    by the coefficient sum, so the report is certified.
    """
    n_proj = v.n if n_proj is None else n_proj
    L_tail = default_tail(n_proj) if L_tail is None else L_tail
    if L_tail < n_proj:
        raise ConfigurationError("L_tail must be at least n_proj", field="L_tail")
    with np.errstate(invalid="ignore", over="ignore"):
        sq = float(hs_norm_sq(v.coeffs, spec, n_proj, L_tail)[0])
        sup = float(sup_norm_bound(v.coeffs))
        tail = spec.sigma**2 * sup**2 * spec.noise_tail(L_tail)
    return HSNorm(float(np.sqrt(sq)), tail, L_tail)


@dataclass(frozen=True)
class TheoryConstants:
    """Coercivity and monotonicity constants of the example."""

    kappa_rho: float
    sigma_sq: float
    trace_q: float

    @classmethod
    def of(cls, spec: ModelSpec) -> "TheoryConstants":
        return cls(spec.kappa * spec.rho, spec.sigma**2, spec.trace_q)

    def coercive(self, p_hat: float) -> float:
        if p_hat < 0:
            raise ConfigurationError("p_hat must be nonnegative")
        return self.kappa_rho + 2.0 * p_hat * self.sigma_sq * self.trace_q

    def monotone(self, p_hat: float, eps_pert: float) -> float:
        # bound on <u-v, A(u-v) + F(u)-F(v)> + (p-1)(1+eps)/2 ||B(u)-B(v)||^2
        return self.coercive((p_hat - 1.0) * (1.0 + eps_pert) / 2.0)


def coercivity_constant(spec: ModelSpec, p_hat: float) -> float:
    """``kappa*rho + 2*p_hat*sigma^2*Trace(Q)``."""
    return TheoryConstants.of(spec).coercive(p_hat)


def lemma_constant_C(spec: ModelSpec, p: float) -> float:
    """Coercivity constant at ``(p-1)/2`` raised to at least 1.

    The coercivity inequality stays true for any larger constant, and the
    moment lemma is stated for constants in [1, inf).
    """
    return max(1.0, coercivity_constant(spec, (p - 1) / 2))


def monotonicity_constant(spec: ModelSpec, p_hat: float, eps_pert: float) -> float:
    return TheoryConstants.of(spec).monotone(p_hat, eps_pert)


def taming_threshold(N: int, T: float, theta: float) -> float:
    """``(N/T)^theta``; theta must lie in (0, 1/4]."""
    if N < 1:
        raise ConfigurationError("N must be at least 1", field="N")
    if not T > 0:
        raise ConfigurationError("T must be positive", field="T")
    if not 0 < theta <= 0.25:
        raise ConfigurationError("theta must lie in (0, 1/4]", field="theta")
    return float((N / T) ** theta)
