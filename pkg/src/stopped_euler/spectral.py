r"""Diagonal operator calculus on the Dirichlet sine basis of L^2(0, 1).

Fields are stored as coefficient vectors with respect to the orthonormal
basis :math:`e_k(x) = \sqrt{2}\sin(k\pi x)`.  The operator
:math:`A = \varepsilon\,\partial_x^2` is diagonal there with eigenvalues
:math:`\lambda_k = -\varepsilon\pi^2k^2`, so the semigroup, the fractional
norms and the exponential-integrator weights are all componentwise.

Pointwise nonlinearities are evaluated on the interior collocation grid
:math:`x_j = j/(M+1)`, :math:`j = 1..M`, where the synthesis and analysis
maps are a scaled DST-I pair.

The module has two layers: array functions (``synthesize``, ``analyze``,
``semigroup_factors`` ...) operating on the last axis of ndarrays so the
Monte Carlo engine can push whole sample batches through, and the
:class:`SpectralField` API built on top of them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import ConfigurationError

__all__ = [
    "SpectralField",
    "OperatorSpectrum",
    "GridPlan",
    "synthesize",
    "analyze",
    "to_grid",
    "from_grid",
    "apply_semigroup",
    "fractional_norm",
    "phi1_weight",
    "project",
    "sup_norm_bound",
]

PHI1_CUTOFF = 1e-8
MIN_GRID = 1023


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients ``c_1..c_n`` of ``sum_k c_k e_k``.

    ``diverged`` marks a field produced from non-finite input; such fields
    are allowed to hold NaN/Inf, all others must be finite.
    """

    coeffs: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True).reshape(-1)
        if c.size < 1:
            raise ConfigurationError("a field needs at least one mode")
        diverged = self.diverged or not np.all(np.isfinite(c))
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "diverged", bool(diverged))

    @property
    def n(self) -> int:
        return self.coeffs.size

    @classmethod
    def zeros(cls, n: int) -> "SpectralField":
        return cls(np.zeros(n))

    @classmethod
    def basis(cls, k: int, n: int | None = None) -> "SpectralField":
        """The unit field e_k, stored with ``n`` (default ``k``) modes."""
        n = k if n is None else n
        if not 1 <= k <= n:
            raise ConfigurationError(f"basis index {k} outside 1..{n}")
        c = np.zeros(n)
        c[k - 1] = 1.0
        return cls(c)

    def norm(self) -> float:
        """L^2(0,1) norm (Parseval)."""
        return float(np.sqrt(np.sum(self.coeffs**2)))

    def padded(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        k = min(n, self.n)
        out[:k] = self.coeffs[:k]
        return out

    def __add__(self, other: "SpectralField") -> "SpectralField":
        n = max(self.n, other.n)
        return SpectralField(self.padded(n) + other.padded(n))

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        n = max(self.n, other.n)
        return SpectralField(self.padded(n) - other.padded(n))

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(scalar * self.coeffs)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SpectralField(n={self.n}, norm={self.norm():.6g}, diverged={self.diverged})"


@dataclass(frozen=True)
class OperatorSpectrum:
    """Eigenvalues ``-eps * pi^2 * k^2`` of the Dirichlet Laplacian scaled by eps."""

    diffusivity: float = 1.0

    def __post_init__(self):
        if not self.diffusivity > 0:
            raise ConfigurationError("diffusivity must be positive", field="eps")

    def eigenvalues(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=float)
        return -self.diffusivity * np.pi**2 * k**2


@dataclass(frozen=True)
class GridPlan:
    """Interior collocation grid with ``M`` points for fields of up to ``n`` modes.

    Only ``M >= n`` is needed for the transforms to be inverse to each
    other.  Quadratic products need ``M >= 3n + 1``; use :meth:`for_modes`
    to get a dealiased, FFT-friendly size.
    """

    M: int
    n: int = 1
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.M < self.n:
            raise ConfigurationError(f"grid of size M={self.M} cannot carry n={self.n} modes")
        x = np.arange(1, self.M + 1) / (self.M + 1)
        x.setflags(write=False)
        object.__setattr__(self, "points", x)

    @classmethod
    def for_modes(cls, n: int) -> "GridPlan":
        """Smallest grid with ``M + 1`` a power of two, ``M >= 3n + 1`` and ``M >= 1023``.

        Products of sine modes are cosine series, so the quadratic part of
        the drift is not band-limited in the sine basis and collocation
        aliases with an error of order ``M^-4``; the floor keeps that below
        1e-11 for unit-size fields.
        """
        size = MIN_GRID + 1
        while size - 1 < 3 * n + 1:
            size *= 2
        return cls(size - 1, n)

    @property
    def dealiased(self) -> bool:
        return self.M >= 3 * self.n + 1

    def check_dealiased(self, n: int) -> None:
        if self.M < 3 * n + 1:
            raise ConfigurationError(
                f"grid M={self.M} too small for quadratic products of {n} modes (need {3 * n + 1})"
            )


# -- array layer -----------------------------------------------------------


def synthesize(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Point values at ``x_j = j/(M+1)`` of the sine series along the last axis."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    if n > M:
        raise ConfigurationError(f"grid of size {M} cannot represent {n} modes")
    if n < M:
        pad = [(0, 0)] * (coeffs.ndim - 1) + [(0, M - n)]
        coeffs = np.pad(coeffs, pad)
    return scipy.fft.dst(coeffs, type=1, axis=-1) / np.sqrt(2.0)


def analyze(values: np.ndarray, n: int) -> np.ndarray:
    """First ``n`` sine coefficients of grid values (discrete L^2 projection)."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    if n > M:
        raise ConfigurationError(f"cannot extract {n} modes from {M} grid values")
    c = scipy.fft.dst(values, type=1, axis=-1)[..., :n]
    return c / (np.sqrt(2.0) * (M + 1))


def semigroup_factors(eigenvalues: np.ndarray, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("the semigroup is only defined for t >= 0")
    return np.exp(eigenvalues * t)


def phi1_weight(lam, dt):
    """``(exp(lam*dt) - 1)/lam``, the exact per-mode drift weight over a step.

    Uses ``dt*(1 + lam*dt/2)`` when ``|lam*dt| < 1e-8``.  Works elementwise
    on arrays.
    """
    lam = np.asarray(lam, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError("dt must be nonnegative")
    z = lam * dt
    small = np.abs(z) < PHI1_CUTOFF
    safe_lam = np.where(small, 1.0, lam)
    out = np.where(small, dt * (1.0 + 0.5 * z), np.expm1(z) / safe_lam)
    return out[()] if out.ndim == 0 else out


def sup_norm_bound(coeffs: np.ndarray) -> np.ndarray:
    """Certified bound ``sqrt(2) * sum |c_k|`` on the sup norm of a sine series."""
    return np.sqrt(2.0) * np.sum(np.abs(coeffs), axis=-1)


# -- field layer -----------------------------------------------------------


def to_grid(v: SpectralField, plan: GridPlan) -> np.ndarray:
    if plan.M < v.n:
        raise ConfigurationError(f"grid M={plan.M} smaller than field with n={v.n}")
    return synthesize(v.coeffs, plan.M)


def from_grid(values, n: int) -> SpectralField:
    values = np.asarray(values, dtype=float).reshape(-1)
    return SpectralField(analyze(values, n))


def apply_semigroup(v: SpectralField, t: float, spec: OperatorSpectrum) -> SpectralField:
    fac = semigroup_factors(spec.eigenvalues(v.n), t)
    return SpectralField(fac * v.coeffs, diverged=v.diverged)


def fractional_norm(v: SpectralField, r: float, spec: OperatorSpectrum) -> float:
    """``(sum_k |lambda_k|^(2r) c_k^2)^(1/2)``; ``r = 0`` is the L^2 norm."""
    w = np.abs(spec.eigenvalues(v.n)) ** (2.0 * r)
    return float(np.sqrt(np.sum(w * v.coeffs**2)))


def project(v: SpectralField, n_target: int) -> SpectralField:
    """Truncate (or zero-pad) to the first ``n_target`` modes.

    ``n_target = 0`` gives the one-mode zero field, since a field always
    carries at least one coefficient.
    """
    if n_target < 0:
        raise ConfigurationError("n_target must be nonnegative")
    return SpectralField(v.padded(max(n_target, 1)), diverged=v.diverged)


@lru_cache(maxsize=64)
def _cosine_moment_matrix(n: int, smax: int) -> np.ndarray:
    # S[s, j-1] = int_0^1 e_j(x) cos(s pi x) dx, s = 0..smax
    s = np.arange(smax + 1, dtype=float)[:, None]
    j = np.arange(1, n + 1, dtype=float)[None, :]
    odd = ((np.arange(smax + 1)[:, None] + np.arange(1, n + 1)[None, :]) % 2) == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.sqrt(2.0) * 2.0 * j / (np.pi * (j**2 - s**2))
    S = np.where(odd, vals, 0.0)
    S.setflags(write=False)
    return S


def cosine_moments(coeffs: np.ndarray, smax: int) -> np.ndarray:
    """``g[s] = int_0^1 v(x) cos(s pi x) dx`` for ``s = 0..smax``, exactly.

    Products of sine modes are cosine series,
    ``e_l e_k = cos((l-k) pi x) - cos((l+k) pi x)``, so these moments give
    every Galerkin entry ``<v e_l, e_k> = g[|l-k|] - g[l+k]``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    S = _cosine_moment_matrix(coeffs.shape[-1], smax)
    return coeffs @ S.T
