"""Oracle and invariant checks that need no PDE run."""

from __future__ import annotations

import math

import numpy as np

from .config import RunConfig, build_initial
from .dynamics import PhysParams, StepSchedule, evolve, log_spaced_times
from .grid import Field, Frame, GridSpec, free_propagate, relative_l2
from .norms import build_cascade
from .oracles import check_integral_identity, gaussian_free_solution, gaussian_sup_norm, ode_closed_form, ode_limit
from .pseudoconformal import Direction, map_time, u_from_v, v_from_u

INTEGRAL_CASES = ((1.0, 2.0, 0.25), (0.5, 1.0, 0.99), (3.0, 1.0, 0.9))


def linear_oracle(grid: GridSpec | None = None, t: float = 0.5) -> tuple[float, float]:
    """Relative L^2 error of the free propagator and the sup-norm error, Gaussian datum."""
    grid = grid or GridSpec(1, 40.0, 1024)
    start = gaussian_free_solution(0.0, grid)
    stepped = free_propagate(start, t)
    exact = gaussian_free_solution(t, grid)
    err = relative_l2(stepped.values, exact.values)
    sup = abs(float(np.abs(stepped.values).max()) - gaussian_sup_norm(t, grid.dimension))
    return err, sup


def transform_roundtrip(phi0: Field, params: PhysParams, tau: float) -> tuple[float, float, float]:
    """Round-trip error, L^2 isometry defect and time-map round-trip error at ``tau``."""
    v = phi0.with_values(phi0.values, time=tau)
    u = u_from_v(v, params)
    back = v_from_u(u, params)
    rt = relative_l2(back.values, v.values)
    iso = abs(u.l2_norm() - v.l2_norm()) / v.l2_norm()
    t = map_time(tau, Direction.TO_U, params.b)
    tt = abs(map_time(t, Direction.TO_V, params.b) - tau) / max(tau, 1e-300)
    return rt, iso, tt


def ode_oracle(z0: complex, lam: complex = -1j, b: float = 1.0, eps_end: float = 1e-8, points: int = 8):
    """Solver on spatially uniform data against the closed form.

    Returns the largest relative deviation over the snapshots and the scaled
    modulus ``|log(1 - b tau)|^(1/alpha) |v|`` at the final time.
    """
    grid = GridSpec(1, 1.0, points)
    params = PhysParams(1, lam, b)
    phi0 = Field(grid, np.full(grid.shape, complex(z0)), Frame.V, 0.0)
    times = log_spaced_times(b, eps_end, per_decade=2, eps_start=0.5)
    traj = evolve(phi0, params, StepSchedule.compact(b, eps_end, snapshot_times=times))
    worst = 0.0
    for snap in traj.snapshots:
        exact = ode_closed_form(snap.time, complex(z0), lam, b, params.alpha)
        worst = max(worst, float(np.abs(snap.values - exact).max()) / abs(exact))
    final = traj.snapshots[-1]
    ell = -math.log1p(-b * final.time)
    scaled = ell ** (1.0 / params.alpha) * float(np.abs(final.values).max())
    return worst, scaled, ode_limit(lam, b, params.alpha)


def run_verify(cfg: RunConfig) -> dict[str, bool]:
    results: dict[str, bool] = {}
    err, sup = linear_oracle()
    results["linear_oracle"] = err <= 1e-8 and sup <= 1e-8
    phi0 = build_initial(cfg)
    params = cfg.params
    rt, iso, tt = transform_roundtrip(phi0, params, 0.5 / params.b)
    results["transform_roundtrip"] = rt <= 1e-10 and iso <= 1e-10 and tt <= 1e-14
    ok = True
    for z0 in (2.0, 1.5 + 1.5j):
        worst, scaled, limit = ode_oracle(z0)
        ok = ok and worst <= 1e-10 and abs(scaled - limit) <= 0.01 * limit
    results["ode_oracle"] = ok
    ok = True
    for mu, b, t in INTEGRAL_CASES:
        lhs, rhs = check_integral_identity(mu, b, t)
        ok = ok and abs(lhs - rhs) <= 1e-10 * abs(rhs)
    results["integral_identity"] = ok
    try:
        cas = build_cascade(cfg.indices, params.alpha, cfg.sigma_bar)
        results["cascade"] = cas.admissible and all(b > a for a, b in zip(cas.sigma, cas.sigma[1:]))
    except ValueError:
        results["cascade"] = False
    return results
