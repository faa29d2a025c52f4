"""Change of frame between the physical solution and the compactified one.

With ``s = 1 + b t = 1 / (1 - b tau)``::

    u(t, x) = s^(-N/2) exp(i b |x|^2 / (4 s)) v(tau, x / s),    tau = t / (1 + b t).

By default the physical field lives on the *co-moving* grid, whose half
width is ``s`` times that of the compactified grid.  Samples then map one to
one and the transform is exact up to rounding.  An explicit target grid
switches to band-limited interpolation with zero fill.
"""

from __future__ import annotations

import enum
import math
import time as _time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .dynamics import (
    DEFAULT_DT_MAX,
    DEFAULT_ENDPOINT_FACTOR,
    PHYSICAL_DT_MAX,
    PHYSICAL_FRAME_FACTOR,
    PhysParams,
    StepSchedule,
    evolve,
)
from .grid import Field, Frame, GridSpec, free_propagate, relative_l2, resample

DEFAULT_TAIL_THRESHOLD = 1e-10


class Direction(str, enum.Enum):
    TO_V = "to_v"
    TO_U = "to_u"


class DilationWarning(UserWarning):
    """The target grid does not hold the whole dilated field."""


def map_time(value: float, direction: Direction | str, b: float) -> float:
    """``tau = t / (1 + b t)`` (``TO_V``) or its inverse ``t = tau / (1 - b tau)`` (``TO_U``)."""
    direction = Direction(direction)
    if b <= 0:
        raise ValueError("b must be positive")
    if direction is Direction.TO_V:
        if value < 0:
            raise ValueError(f"physical time must be nonnegative, got {value}")
        return value / (1.0 + b * value)
    if not 0.0 <= value < 1.0 / b:
        raise ValueError(f"tau={value} outside [0, 1/b) with b={b}")
    return value / (1.0 - b * value)


def dilation(tau: float, b: float) -> float:
    """The factor ``s = 1 + b t = 1 / (1 - b tau)``."""
    return 1.0 / (1.0 - b * tau)


def comoving_grid(grid: GridSpec, s: float) -> GridSpec:
    return GridSpec(grid.dimension, grid.half_width * s, grid.points)


def outside_mass_fraction(field: Field, half_width: float) -> float:
    """Share of the L^2 mass lying outside the cube of the given half width."""
    inside = field.grid.window(min(1.0, half_width / field.grid.half_width))
    total = float((np.abs(field.values) ** 2).sum())
    if total == 0.0 or half_width >= field.grid.half_width:
        return 0.0
    return float((np.abs(field.values[~inside]) ** 2).sum() / total)


def _check_frame(field: Field, frame: Frame) -> None:
    if field.frame is not frame:
        raise ValueError(f"expected a {frame.value}-frame field, got {field.frame.value}")


def u_from_v(
    v_field: Field,
    params: PhysParams,
    grid: GridSpec | None = None,
    tail_threshold: float = DEFAULT_TAIL_THRESHOLD,
) -> Field:
    """Physical field at ``t = tau / (1 - b tau)`` from the compactified one."""
    _check_frame(v_field, Frame.V)
    b, N = params.b, v_field.grid.dimension
    tau = v_field.time
    if not 0.0 <= tau < 1.0 / b:
        raise ValueError(f"tau={tau} outside [0, 1/b)")
    s = dilation(tau, b)
    t = map_time(tau, Direction.TO_U, b)
    target = comoving_grid(v_field.grid, s) if grid is None else grid
    if grid is None:
        base = v_field.values
    else:
        lost = outside_mass_fraction(v_field, target.half_width / s)
        if lost > tail_threshold:
            warnings.warn(f"dilated field loses mass fraction {lost:.2e} outside the target box", DilationWarning)
        base = resample(v_field.values, v_field.grid, target.axis / s)
    chirp = np.exp(1j * b * target.radius_squared() / (4.0 * s))
    return Field(target, s ** (-N / 2) * chirp * base, Frame.U, t)


def v_from_u(
    u_field: Field,
    params: PhysParams,
    grid: GridSpec | None = None,
    tail_threshold: float = DEFAULT_TAIL_THRESHOLD,
) -> Field:
    """Exact inverse of :func:`u_from_v`."""
    _check_frame(u_field, Frame.U)
    b, N = params.b, u_field.grid.dimension
    t = u_field.time
    tau = map_time(t, Direction.TO_V, b)
    s = 1.0 + b * t
    if grid is None:
        target = GridSpec(N, u_field.grid.half_width / s, u_field.grid.points)
        base = u_field.values * np.exp(-1j * b * u_field.grid.radius_squared() / (4.0 * s))
    else:
        target = grid
        lost = outside_mass_fraction(u_field, target.half_width * s)
        if lost > tail_threshold:
            warnings.warn(f"contracted field loses mass fraction {lost:.2e} outside the target box", DilationWarning)
        smooth = u_field.values * np.exp(-1j * b * u_field.grid.radius_squared() / (4.0 * s))
        base = resample(smooth, u_field.grid, target.axis * s)
    return Field(target, s ** (N / 2) * base, Frame.V, tau)


def quadratic_phase(grid: GridSpec, a: float) -> np.ndarray:
    """``M_a(x) = exp(i |x|^2 / (4 a))``."""
    return np.exp(1j * grid.radius_squared() / (4.0 * a))


def scattering_state_u_plus(w0: Field, params: PhysParams) -> Field:
    """``u+ = M_{1/b} exp(-(i/b) Laplacian) w0``."""
    back = free_propagate(w0, -1.0 / params.b)
    return Field(w0.grid, quadratic_phase(w0.grid, 1.0 / params.b) * back.values, Frame.U, 0.0)


# --- cross-frame consistency -------------------------------------------------


@dataclass
class FrameEquivalenceReport:
    times: list[float]
    errors: list[float]
    steps_v: int
    steps_u: int
    refine: int
    u_points: int
    seconds: float

    @property
    def max_error(self) -> float:
        return max(self.errors)

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "errors": self.errors,
            "max_error": self.max_error,
            "steps_v": self.steps_v,
            "steps_u": self.steps_u,
            "refine": self.refine,
            "u_points": self.u_points,
            "seconds": self.seconds,
        }


def physical_grid_for(grid: GridSpec, b: float, t_max: float, refine: int | None = None, margin: float = 1.1):
    """Fine physical-frame grid whose samples contain every dilated compact sample.

    The spacing is ``h / q`` with ``q`` large enough that the Nyquist
    wavenumber exceeds the initial chirp wavenumber ``b L / 2`` by 20%.
    """
    if refine is None:
        nyquist = math.pi / grid.spacing
        refine = max(1, math.ceil(1.2 * b * grid.half_width / 2.0 / nyquist))
    h_u = grid.spacing / refine
    need = 2.0 * margin * (1.0 + b * t_max) * grid.half_width / h_u
    points = int(math.ceil(need))
    while True:
        points = sfft.next_fast_len(points)
        if points % 2 == 0:
            break
        points += 1
    return GridSpec(grid.dimension, 0.5 * points * h_u, points), refine


def frame_equivalence(
    phi0: Field,
    params: PhysParams,
    t_values,
    *,
    window: float = 0.9,
    refine: int | None = None,
    dt_max: float = DEFAULT_DT_MAX,
    u_dt_max: float = PHYSICAL_DT_MAX,
    v_factor: float = DEFAULT_ENDPOINT_FACTOR,
    u_factor: float = PHYSICAL_FRAME_FACTOR,
) -> FrameEquivalenceReport:
    """Evolve both frames from the same datum and compare in the compact frame.

    Errors are relative L^2 differences over the interior ``window`` of the
    compact box, away from the tapered edge.  Times with integer ``1 + b t``
    (more generally ``q (1 + b t)`` integer) map onto physical samples
    exactly; other times go through interpolation.
    """
    _check_frame(phi0, Frame.V)
    start = _time.perf_counter()
    b = params.b
    t_values = sorted(float(t) for t in t_values)
    taus = [map_time(t, Direction.TO_V, b) for t in t_values]
    v_sched = StepSchedule(end_time=taus[-1], dt_max=dt_max, endpoint_factor=v_factor, snapshot_times=taus)
    v_traj = evolve(phi0, params, v_sched)
    u_grid, q = physical_grid_for(phi0.grid, b, t_values[-1], refine)
    u0 = u_from_v(phi0, params, grid=u_grid)
    u_sched = StepSchedule(end_time=t_values[-1], dt_max=u_dt_max, endpoint_factor=u_factor, snapshot_times=t_values)
    u_traj = evolve(u0, params, u_sched)
    mask = phi0.grid.window(window)
    v_by_time = {s.time: s for s in v_traj.snapshots}
    u_by_time = {s.time: s for s in u_traj.snapshots}
    errors = []
    for t, tau in zip(t_values, taus):
        mapped = v_from_u(u_by_time[t], params, grid=phi0.grid)
        errors.append(relative_l2(mapped.values, v_by_time[tau].values, mask))
    return FrameEquivalenceReport(
        times=t_values,
        errors=errors,
        steps_v=v_traj.steps,
        steps_u=u_traj.steps,
        refine=q,
        u_points=u_grid.points,
        seconds=_time.perf_counter() - start,
    )
