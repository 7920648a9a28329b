"""Standalone scalar oracle for the one-mode stopped scheme.

With one Galerkin mode the state is ``y e_1`` and, since ``e_1 >= 0``, every
projection reduces to integrals of powers of ``sin``:

* ``<e_1, F(y e_1)> = kappa |y| (rho - a y)`` with ``a = int e_1^3 = 8 sqrt(2)/(3 pi)``;
* ``<e_1, B(y e_1) sqrt(r_1) dW e_1> = sigma y sqrt(r_1) a dW``;
* ``||P_1 B(y e_1)||_HS^2 = sigma^2 y^2 sum_l r_l (int e_1^2 e_l)^2`` where
  ``int e_1^2 e_l = -8 sqrt(2) / (l pi (l^2 - 4))`` for odd l and 0 for even l.

Written with the math module only, independent of the package code.
"""
import math

A3 = 8.0 * math.sqrt(2.0) / (3.0 * math.pi)


def e1_sq_el(l):
    if l % 2 == 0:
        return 0.0
    return -8.0 * math.sqrt(2.0) / (l * math.pi * (l * l - 4))


def scalar_drift(y, kappa, rho):
    return kappa * abs(y) * (rho - A3 * y)


def scalar_hs(y, sigma, q, c_q, L):
    s = sum(c_q * l ** (-q) * e1_sq_el(l) ** 2 for l in range(1, L + 1))
    return abs(sigma * y) * math.sqrt(s)


def scalar_step(y, dw, *, eps, kappa, rho, sigma, q, c_q, N, T, theta, L=4, tamed=True):
    dt = T / N
    f = scalar_drift(y, kappa, rho)
    b = sigma * y * math.sqrt(c_q) * A3  # r_1 = c_q
    ok = True
    if tamed:
        ok = abs(f) + scalar_hs(y, sigma, q, c_q, L) <= (N / T) ** theta
    upd = dt * f + b * dw if ok else 0.0
    return math.exp(-eps * math.pi**2 * dt) * (y + upd), not ok


def scalar_path(y0, dws, **kw):
    ys, frozen = [y0], []
    for dw in dws:
        y, fz = scalar_step(ys[-1], dw, **kw)
        ys.append(y)
        frozen.append(fz)
    return ys, frozen
