"""Closed-form references, kept independent of the solver code paths."""

from __future__ import annotations

import cmath
import math

import numpy as np
from scipy import integrate

from .grid import Field, Frame, GridSpec


def ode_closed_form(t: float, z0: complex, lam: complex, b: float, alpha: float) -> complex:
    """Exact solution of ``i z' = lam (1 - b t)^-1 |z|^alpha z``.

    The modulus obeys ``|z|^-alpha = |z0|^-alpha + (alpha |Im lam| / b) |log(1 - b t)|``
    and the phase is the integral of ``-Re lam (1 - b s)^-1 |z(s)|^alpha``.
    """
    if not 0.0 <= t < 1.0 / b:
        raise ValueError(f"t={t} outside [0, 1/b) with b={b}")
    if z0 == 0:
        raise ValueError("z0 must be nonzero")
    lam = complex(lam)
    r0 = abs(z0)
    ell = -math.log(1.0 - b * t)
    if lam.imag == 0.0:
        r = r0
        phase = -lam.real * r0**alpha * ell / b
    else:
        r = (r0**-alpha + alpha * abs(lam.imag) * ell / b) ** (-1.0 / alpha)
        phase = -(lam.real / (alpha * lam.imag)) * math.log(r**alpha / r0**alpha)
    return r * cmath.exp(1j * (cmath.phase(z0) + phase))


def ode_limit(lam: complex, b: float, alpha: float) -> float:
    """Limit of ``|log(1 - b t)|^(1/alpha) |z(t)|`` for dissipative ``lam``."""
    return (b / (alpha * abs(complex(lam).imag))) ** (1.0 / alpha)


def gaussian_free_solution(t: float, grid: GridSpec, a: float = 1.0) -> Field:
    """Samples of ``exp(i t Laplacian) exp(-a |x|^2)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    den = 1.0 + 4j * a * t
    values = den ** (-grid.dimension / 2) * np.exp(-a * grid.radius_squared() / den)
    return Field(grid, np.broadcast_to(values, grid.shape), Frame.U, t)


def gaussian_l2_norm(t: float, dimension: int, a: float = 1.0) -> float:
    """Analytic L^2 norm of the propagated Gaussian (independent of ``t``)."""
    del t
    return (math.pi / (2.0 * a)) ** (dimension / 4.0)


def gaussian_sup_norm(t: float, dimension: int, a: float = 1.0) -> float:
    return abs(1.0 + 4j * a * t) ** (-dimension / 2.0)


def check_integral_identity(mu: float, b: float, t: float) -> tuple[float, float]:
    """Adaptive quadrature of ``int_0^t (1 - b s)^(-1-mu) ds`` and its closed form."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 <= t < 1.0 / b:
        raise ValueError(f"t={t} outside [0, 1/b) with b={b}")
    rhs = ((1.0 - b * t) ** (-mu) - 1.0) / (b * mu)
    if t == 0.0:
        return 0.0, rhs
    lhs, _ = integrate.quad(
        lambda s: (1.0 - b * s) ** (-1.0 - mu), 0.0, t, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return float(lhs), float(rhs)
