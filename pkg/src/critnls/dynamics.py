"""Strang-split time stepping in the physical and the compactified frame.

Physical frame: ``i u_t + Lap u = lam |u|^alpha u`` on ``t >= 0``.
Compactified frame: ``i v_t + Lap v = lam (1 - b t)^-1 |v|^alpha v`` on ``[0, 1/b)``.

The pointwise part ``i z' = lam g(s) |z|^alpha z`` is solved exactly: with
``q = int g |z|^alpha ds`` one has ``z1 = z0 exp(-i lam q)``, and ``q`` has a
closed form because ``|z|^-alpha`` grows linearly in ``G = int g ds``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .grid import (
    Field,
    FieldError,
    Frame,
    GridSpec,
    bracket_power,
    dealias_mask,
    first_nonfinite,
    free_propagate,
)
from .snapshots import atomic_write_text, dump_json, load_field, save_field

DEFAULT_DT_MAX = 1e-3
DEFAULT_ENDPOINT_FACTOR = 0.1
# The chirp carried by the physical frame needs much finer steps for the same accuracy.
PHYSICAL_FRAME_FACTOR = DEFAULT_ENDPOINT_FACTOR / 16
PHYSICAL_DT_MAX = 0.1
DEFAULT_EPS_END = 1e-6


class SimulationError(RuntimeError):
    """A run produced non-finite data; ``last_good`` is the last finite state."""

    def __init__(self, message: str, last_good: Field | None = None, checkpoint: str | None = None):
        super().__init__(message)
        self.last_good = last_good
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class PhysParams:
    """Dimension, complex coupling ``lam`` (``Im lam <= 0``) and chirp ``b > 0``."""

    dimension: int
    lam: complex
    b: float

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        object.__setattr__(self, "lam", complex(self.lam))
        if self.lam.imag > 0:
            raise ValueError(f"Im(lambda) must be <= 0, got {self.lam.imag}")
        if not (math.isfinite(self.b) and self.b > 0):
            raise ValueError(f"b must be positive, got {self.b}")

    @property
    def alpha(self) -> float:
        return 2.0 / self.dimension

    @property
    def singular_time(self) -> float:
        return 1.0 / self.b

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "lambda": [self.lam.real, self.lam.imag], "b": self.b}


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule and output times.

    In the compactified frame a step taken at ``tau`` never exceeds
    ``min(dt_max, c (1 - b tau) / b)``; in the physical frame the bound is
    ``min(dt_max, c (1 + b t) / b)``.
    """

    end_time: float
    dt_max: float = DEFAULT_DT_MAX
    endpoint_factor: float = DEFAULT_ENDPOINT_FACTOR
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 < self.endpoint_factor <= 1.0:
            raise ValueError("endpoint_factor must lie in (0, 1]")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] > self.end_time):
            raise ValueError("snapshot times must lie in [0, end_time]")
        object.__setattr__(self, "snapshot_times", times)

    @classmethod
    def compact(cls, b: float, eps_end: float = DEFAULT_EPS_END, snapshot_times=(), **kw) -> "StepSchedule":
        """Schedule for the compactified frame ending where ``1 - b tau = eps_end``."""
        if not 0.0 < eps_end < 1.0:
            raise ValueError("eps_end must lie in (0, 1)")
        return cls(end_time=(1.0 - eps_end) / b, snapshot_times=tuple(snapshot_times), **kw)

    @classmethod
    def physical(cls, t_end: float, snapshot_times=(), **kw) -> "StepSchedule":
        kw.setdefault("endpoint_factor", PHYSICAL_FRAME_FACTOR)
        kw.setdefault("dt_max", PHYSICAL_DT_MAX)
        return cls(end_time=t_end, snapshot_times=tuple(snapshot_times), **kw)

    @property
    def tau_end(self) -> float:
        return self.end_time

    def max_step(self, t: float, frame: Frame, b: float) -> float:
        if frame is Frame.V:
            return min(self.dt_max, self.endpoint_factor * (1.0 - b * t) / b)
        return min(self.dt_max, self.endpoint_factor * (1.0 + b * t) / b)

    def to_dict(self) -> dict:
        return {
            "end_time": self.end_time,
            "dt_max": self.dt_max,
            "endpoint_factor": self.endpoint_factor,
            "snapshot_times": list(self.snapshot_times),
        }


def log_spaced_times(b: float, eps_end: float, per_decade: int = 4, eps_start: float = 0.5) -> tuple[float, ...]:
    """Times ``tau`` with ``1 - b tau`` log-uniform from ``eps_start`` down to ``eps_end``."""
    decades = math.log10(eps_start / eps_end)
    count = max(1, int(round(decades * per_decade)))
    eps = eps_start * np.power(10.0, -np.linspace(0.0, decades, count + 1))
    return tuple(float((1.0 - e) / b) for e in eps)


@dataclass
class Trajectory:
    """Snapshots of one run, all on the same grid and in the same frame."""

    params: PhysParams
    schedule: StepSchedule
    snapshots: list[Field]
    provenance: dict = dc_field(default_factory=dict)
    flags: list[str] = dc_field(default_factory=list)
    steps: int = 0

    def __post_init__(self) -> None:
        times = [s.time for s in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshots must be strictly increasing in time")
        if len({(s.frame, s.grid) for s in self.snapshots}) > 1:
            raise ValueError("snapshots must share one frame and one grid")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def frame(self) -> Frame:
        return self.snapshots[0].frame

    @property
    def grid(self) -> GridSpec:
        return self.snapshots[0].grid


def gauge_integral(t0: float, t1: float, frame: Frame, b: float) -> float:
    """``G = int_{t0}^{t1} g``, with ``g = (1 - b s)^-1`` in the compactified frame."""
    if frame is Frame.V:
        if t1 >= 1.0 / b:
            raise ValueError(f"t1={t1} reaches the singular time 1/b={1.0 / b}")
        return (math.log1p(-b * t0) - math.log1p(-b * t1)) / b
    return t1 - t0


def _modulus_power(z: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 2.0:
        return z.real * z.real + z.imag * z.imag
    return np.abs(z) ** alpha


def _apply_nonlinear(z: np.ndarray, G: float, lam: complex, alpha: float) -> np.ndarray:
    """In-place exact pointwise flow over a gauge increment ``G``."""
    if G == 0.0 or lam == 0:
        return z
    r = _modulus_power(z, alpha)
    damping = alpha * abs(lam.imag)
    if damping > 0:
        q = np.log1p(damping * G * r) / damping
    else:
        q = r * G
    if lam.real == 0.0:
        z *= np.exp(lam.imag * q)
    else:
        z *= np.exp(-1j * lam * q)
    return z


def substep_nonlinear(field: Field, t0: float, t1: float, params: PhysParams) -> Field:
    """Exact solution of the pointwise gauge ODE over ``[t0, t1]``."""
    if t0 < 0 or t1 < t0:
        raise ValueError("need 0 <= t0 <= t1")
    G = gauge_integral(t0, t1, field.frame, params.b)
    z = np.array(field.values, dtype=complex)
    return field.with_values(_apply_nonlinear(z, G, params.lam, params.alpha))


def strang_step(field: Field, t: float, dt: float, params: PhysParams, dealias: bool = False) -> Field:
    """Half nonlinear step, free flow over ``dt``, half nonlinear step."""
    half = substep_nonlinear(field, t, t + 0.5 * dt, params)
    moved = free_propagate(half.with_values(half.values, time=t), dt, dealias=dealias)
    out = substep_nonlinear(moved, t + 0.5 * dt, t + dt, params)
    return out.with_values(out.values, time=t + dt)


class _Stepper:
    """Strang stepping on a raw array with adjacent half steps merged.

    Two consecutive nonlinear half steps compose into one exact step over the
    combined gauge interval, so each step costs one FFT pair and one
    pointwise update.  ``flush`` completes the pending half step.
    """

    def __init__(self, values: np.ndarray, grid: GridSpec, frame: Frame, params: PhysParams, dealias: bool):
        self.z = np.array(values, dtype=complex)
        self.frame = frame
        self.params = params
        self.k2 = grid.wavenumber_squared()
        self.mask = dealias_mask(grid) if dealias else None
        self.pending_from: float | None = None
        self._cache: dict[float, np.ndarray] = {}

    def _multiplier(self, dt: float) -> np.ndarray:
        mult = self._cache.get(dt)
        if mult is None:
            mult = np.exp(-1j * dt * self.k2)
            if self.mask is not None:
                mult = mult * self.mask
            if len(self._cache) >= 2:
                self._cache.pop(next(iter(self._cache)))
            self._cache[dt] = mult
        return mult

    def _nonlinear(self, t0: float, t1: float) -> None:
        G = gauge_integral(t0, t1, self.frame, self.params.b)
        _apply_nonlinear(self.z, G, self.params.lam, self.params.alpha)

    def step(self, t: float, dt: float) -> None:
        start = t if self.pending_from is None else self.pending_from
        self._nonlinear(start, t + 0.5 * dt)
        spec = sfft.fftn(self.z, overwrite_x=True)
        spec *= self._multiplier(dt)
        self.z = sfft.ifftn(spec, overwrite_x=True)
        self.pending_from = t + 0.5 * dt

    def flush(self, t: float) -> None:
        if self.pending_from is not None:
            self._nonlinear(self.pending_from, t)
            self.pending_from = None


def _quantize(dt: float, dt_max: float) -> float:
    """Largest rung of the ladder ``dt_max 2^(-j/8)`` not exceeding ``dt``."""
    if dt >= dt_max:
        return dt_max
    j = math.ceil(-8.0 * math.log2(dt / dt_max) - 1e-12)
    return dt_max * 2.0 ** (-j / 8.0)


@dataclass
class Checkpointer:
    """Writes the state plus a schedule cursor every ``every`` steps."""

    directory: Path
    every: int = 0
    _written: int = dc_field(default=0, repr=False)

    def __post_init__(self) -> None:
        self.directory = Path(self.directory)

    def save(self, state: Field, cursor: dict, snapshots: list[Field], b: float) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        save_field(state, self.directory / "state", b=b)
        # Snapshots are immutable once recorded, so only new ones are written.
        for i in range(self._written, len(snapshots)):
            save_field(snapshots[i], self.directory / f"snapshot_{i:05d}", b=b)
        self._written = len(snapshots)
        atomic_write_text(self.directory / "cursor.json", dump_json(cursor))

    @staticmethod
    def load(directory: Path) -> tuple[Field, dict, list[Field]]:
        directory = Path(directory)
        cursor = json.loads((directory / "cursor.json").read_text())
        state, _ = load_field(directory / "state")
        snaps = [load_field(directory / f"snapshot_{i:05d}")[0] for i in range(cursor["snapshots"])]
        return state, cursor, snaps


def evolve(
    initial: Field,
    params: PhysParams,
    schedule: StepSchedule,
    *,
    dealias: bool = False,
    inf_floor: float | None = None,
    weight_power: float = 0.0,
    monitor_window: float = 1.0,
    checkpoint: Checkpointer | None = None,
    resume: str | Path | None = None,
    provenance: dict | None = None,
    stop_after_steps: int | None = None,
    on_snapshot: Callable[[Field], None] | None = None,
) -> Trajectory:
    """March Strang steps from ``initial`` to ``schedule.end_time``.

    Snapshots are recorded at ``schedule.snapshot_times`` (the initial state is
    always the first snapshot) and at the end time.  Steps are drawn from a
    geometric ladder below the schedule bound so that propagators can be
    reused, and are shortened to land exactly on output times.

    ``inf_floor`` flags snapshots where the weighted minimum
    ``min <x>^n |v|`` over the monitor window falls below the floor.
    ``stop_after_steps`` halts early (after writing a checkpoint when one is
    configured) and exists to exercise resume.
    """
    bad = first_nonfinite(initial.values)
    if bad is not None:
        raise FieldError(f"non-finite initial value at index {bad}")
    frame = initial.frame
    b = params.b
    if frame is Frame.V and not 0.0 <= initial.time < 1.0 / b:
        raise ValueError("compactified-frame time must lie in [0, 1/b)")
    if frame is Frame.V and schedule.end_time >= 1.0 / b:
        raise ValueError("end time must be strictly below 1/b")

    if stop_after_steps is not None and (checkpoint is None or not checkpoint.every or stop_after_steps % checkpoint.every):
        raise ValueError("stop_after_steps must be a multiple of the checkpoint interval")

    targets = [t for t in schedule.snapshot_times if t > initial.time]
    if not targets or targets[-1] < schedule.end_time:
        targets.append(schedule.end_time)
    flags: list[str] = []
    mask = initial.grid.window(monitor_window)
    weight = bracket_power(initial.grid, weight_power)

    def inspect(snap: Field) -> None:
        if inf_floor is not None:
            low = float((weight * np.abs(snap.values))[mask].min())
            if low < inf_floor:
                flags.append(f"weighted minimum {low:.3e} below floor {inf_floor:.3e} at time {snap.time!r}")
        if on_snapshot is not None:
            on_snapshot(snap)

    if resume is not None:
        state, cursor, snapshots = Checkpointer.load(Path(resume))
        t, steps, target_index = cursor["time"], cursor["steps"], cursor["target_index"]
        flags.extend(cursor.get("flags", []))
        if cursor.get("schedule") != schedule.to_dict():
            raise ValueError("checkpoint was written for a different schedule")
    else:
        state, t, steps, target_index = initial, initial.time, 0, 0
        snapshots = [initial]
        inspect(initial)

    stepper = _Stepper(state.values, state.grid, frame, params, dealias)
    if resume is not None:
        stepper.pending_from = cursor.get("pending_from")
    last_good = state

    def cursor_dict() -> dict:
        return {
            "time": t,
            "steps": steps,
            "target_index": target_index,
            "snapshots": len(snapshots),
            "flags": flags,
            "schedule": schedule.to_dict(),
            "pending_from": stepper.pending_from,
        }

    while target_index < len(targets):
        target = targets[target_index]
        bound = schedule.max_step(t, frame, b)
        dt = _quantize(bound, schedule.dt_max)
        remaining = target - t
        if remaining <= dt:
            dt = remaining
        stepper.step(t, dt)
        steps += 1
        t = target if dt == remaining else t + dt
        at_target = t == target
        at_checkpoint = checkpoint is not None and checkpoint.every and steps % checkpoint.every == 0
        halting = bool(at_checkpoint) and stop_after_steps is not None and steps >= stop_after_steps
        if at_target or at_checkpoint:
            # Checkpoints keep the pending half step unapplied, so writing one
            # never changes the arithmetic of the run.
            if at_target:
                stepper.flush(t)
            bad = first_nonfinite(stepper.z)
            if bad is not None:
                ref = str(checkpoint.directory) if checkpoint is not None else None
                raise SimulationError(
                    f"non-finite state at time {t!r}, index {bad}", last_good=last_good, checkpoint=ref
                )
            current = Field(state.grid, stepper.z, frame, t)
            if at_target:
                last_good = current
                snapshots.append(current)
                inspect(current)
                target_index += 1
            if at_checkpoint:
                checkpoint.save(current, cursor_dict(), snapshots, b)
            if halting:
                break

    prov = {"determinism": "seedless", **(provenance or {})}
    return Trajectory(params, schedule, snapshots, prov, flags, steps)
