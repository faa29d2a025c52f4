"""Periodic grids, complex fields and the spectral operators acting on them.

The box is ``[-L, L)^N`` sampled at ``M`` points per axis, so the sample
coordinates are ``x_j = -L + j h`` with ``h = 2L/M`` and the wavenumbers follow
the usual FFT ordering ``k_j = pi j / L``.  Every operator here is pure: the
input field is never modified and a fresh :class:`Field` is returned.
"""

from __future__ import annotations

import enum
import functools
import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

DEFAULT_MAX_ORDER = 4

# Centered 8th-order stencils for the first and second derivative.
_FD1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_FD2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])


class Frame(str, enum.Enum):
    """Coordinate system a field lives in."""

    U = "u"
    V = "v"


class FieldError(ValueError):
    """Raised for malformed or non-finite field data."""


class DerivativeOrderError(ValueError):
    """Raised when a derivative exceeds the configured order cap."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L, L)^N``.

    Parameters
    ----------
    dimension : int
        Space dimension ``N`` (1, 2 or 3).
    half_width : float
        Half box width ``L``.
    points : int
        Even number of samples ``M`` per axis.
    """

    dimension: int
    half_width: float
    points: int

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if self.points <= 0 or self.points % 2:
            raise ValueError(f"points must be a positive even integer, got {self.points}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dimension

    @property
    def size(self) -> int:
        return self.points**self.dimension

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    @functools.cached_property
    def axis(self) -> np.ndarray:
        """Sample coordinates along one axis."""
        return -self.half_width + self.spacing * np.arange(self.points)

    @functools.cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers along one axis in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points, self.spacing)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        return _open_mesh(self.axis, self.dimension)

    def radius_squared(self) -> np.ndarray:
        return functools.reduce(np.add, (c * c for c in self.coordinates()))

    def wavenumber_squared(self) -> np.ndarray:
        return _k_squared(self)

    def window(self, fraction: float = 1.0) -> np.ndarray:
        """Boolean mask of points with every coordinate inside ``fraction * L``."""
        inside = np.abs(self.axis) <= fraction * self.half_width + 1e-12 * self.half_width
        mask = functools.reduce(np.logical_and, _open_mesh(inside, self.dimension))
        return np.broadcast_to(mask, self.shape)


def _open_mesh(axis: np.ndarray, dimension: int) -> tuple[np.ndarray, ...]:
    out = []
    for d in range(dimension):
        shape = [1] * dimension
        shape[d] = axis.size
        out.append(axis.reshape(shape))
    return tuple(out)


@functools.lru_cache(maxsize=16)
def _k_squared(grid: GridSpec) -> np.ndarray:
    k2 = functools.reduce(np.add, (k * k for k in _open_mesh(grid.wavenumbers, grid.dimension)))
    k2 = np.broadcast_to(k2, grid.shape).copy()
    k2.flags.writeable = False
    return k2


def first_nonfinite(values: np.ndarray) -> tuple[int, ...] | None:
    bad = ~np.isfinite(values)
    if not bad.any():
        return None
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(bad)), values.shape))


@dataclass(frozen=True, eq=False)
class Field:
    """Grid function tagged with its frame and time stamp.

    ``values`` is stored as a read-only array of shape ``grid.shape``; a flat
    array of length ``M**N`` is accepted and reshaped.
    """

    grid: GridSpec
    values: np.ndarray
    frame: Frame = Frame.V
    time: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, copy=True)
        if values.size != self.grid.size:
            raise FieldError(f"expected {self.grid.size} samples, got {values.size}")
        values = values.reshape(self.grid.shape)
        if not (np.issubdtype(values.dtype, np.complexfloating) or np.issubdtype(values.dtype, np.floating)):
            values = values.astype(float)
        bad = first_nonfinite(values)
        if bad is not None:
            raise FieldError(f"non-finite value at index {bad}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "frame", Frame(self.frame))
        object.__setattr__(self, "time", float(self.time))

    def with_values(self, values: np.ndarray, **changes) -> "Field":
        return replace(self, values=values, **changes)

    def l2_norm(self, mask: np.ndarray | None = None) -> float:
        return l2_norm(self.values, self.grid, mask)

    def sup_norm(self, mask: np.ndarray | None = None) -> float:
        a = np.abs(self.values)
        return float((a[mask] if mask is not None else a).max(initial=0.0))


def l2_norm(values: np.ndarray, grid: GridSpec, mask: np.ndarray | None = None) -> float:
    """Riemann-sum L^2 norm, optionally restricted to a mask."""
    a = np.abs(values) ** 2
    if mask is not None:
        a = a[mask]
    return float(np.sqrt(a.sum() * grid.cell_volume))


def relative_l2(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """``||a - b|| / ||b||`` on the samples (mask optional)."""
    d, r = a - b, b
    if mask is not None:
        d, r = d[mask], r[mask]
    den = np.linalg.norm(r)
    num = np.linalg.norm(d)
    return float(num / den) if den > 0 else float(num)


def fourier_l2_norm(field: Field) -> float:
    """The same L^2 norm computed from the Fourier coefficients."""
    c = sfft.fftn(field.values)
    return float(np.sqrt((np.abs(c) ** 2).sum() * field.grid.cell_volume / field.grid.size))


@functools.lru_cache(maxsize=4)
def _propagator(grid: GridSpec, dt: float) -> np.ndarray:
    mult = np.exp(-1j * dt * _k_squared(grid))
    mult.flags.writeable = False
    return mult


def dealias_mask(grid: GridSpec) -> np.ndarray:
    """Two-thirds rule mask in Fourier space."""
    kmax = np.pi / grid.spacing
    keep = np.abs(grid.wavenumbers) <= (2.0 / 3.0) * kmax
    return functools.reduce(np.logical_and, _open_mesh(keep, grid.dimension))


def _check_finite(field: Field) -> None:
    bad = first_nonfinite(field.values)
    if bad is not None:
        raise FieldError(f"non-finite value at index {bad}")


def free_propagate(field: Field, dt: float, dealias: bool = False) -> Field:
    """Apply the free Schroedinger group ``exp(i dt Laplacian)``.

    Each Fourier mode is multiplied by ``exp(-i dt |k|^2)``.  Negative ``dt``
    runs the group backwards.  The returned field is stamped ``time + dt``.
    """
    _check_finite(field)
    if dt == 0.0 and not dealias:
        return field.with_values(field.values)
    spec = sfft.fftn(field.values)
    spec *= _propagator(field.grid, float(dt))
    if dealias:
        spec *= dealias_mask(field.grid)
    return field.with_values(sfft.ifftn(spec, overwrite_x=True), time=field.time + dt)


def multi_indices(dimension: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices of length ``dimension`` with ``|beta| == order``."""
    return [
        beta
        for beta in itertools.product(range(order + 1), repeat=dimension)
        if sum(beta) == order
    ]


def _check_order(beta: Sequence[int], dimension: int, max_order: int) -> tuple[int, ...]:
    beta = tuple(int(b) for b in beta)
    if len(beta) != dimension or any(b < 0 for b in beta):
        raise ValueError(f"multi-index {beta} does not match dimension {dimension}")
    if sum(beta) > max_order:
        raise DerivativeOrderError(f"derivative order {sum(beta)} exceeds cap {max_order}")
    return beta


def spectral_derivative(field: Field, beta: Sequence[int], max_order: int = DEFAULT_MAX_ORDER) -> Field:
    """``D^beta`` of a field through the Fourier multiplier ``(i k)^beta``.

    The Nyquist mode is dropped for odd orders along an axis so that real
    input yields real output.
    """
    beta = _check_order(beta, field.grid.dimension, max_order)
    _check_finite(field)
    if sum(beta) == 0:
        return field.with_values(field.values)
    spec = sfft.fftn(field.values)
    for d, order in enumerate(beta):
        if order:
            spec *= _axis_multiplier(field.grid, d, order)
    out = sfft.ifftn(spec, overwrite_x=True)
    if not np.iscomplexobj(field.values):
        out = out.real
    return field.with_values(out)


def _axis_multiplier(grid: GridSpec, axis: int, order: int) -> np.ndarray:
    k = grid.wavenumbers.copy()
    if order % 2:
        k[grid.points // 2] = 0.0
    shape = [1] * grid.dimension
    shape[axis] = grid.points
    return ((1j * k) ** order).reshape(shape)


def laplacian(field: Field) -> Field:
    """Spectral Laplacian, the trace of the order-two derivatives."""
    _check_finite(field)
    spec = sfft.fftn(field.values) * (-_k_squared(field.grid))
    out = sfft.ifftn(spec, overwrite_x=True)
    if not np.iscomplexobj(field.values):
        out = out.real
    return field.with_values(out)


def fd_derivative(field: Field, beta: Sequence[int], max_order: int = DEFAULT_MAX_ORDER) -> Field:
    """``D^beta`` from periodic 8th-order centered finite differences.

    Even orders use the second-derivative stencil repeatedly and an odd
    remainder uses the first-derivative stencil once.
    """
    beta = _check_order(beta, field.grid.dimension, max_order)
    _check_finite(field)
    h = field.grid.spacing
    out = np.asarray(field.values)
    for axis, order in enumerate(beta):
        for _ in range(order // 2):
            out = _apply_stencil(out, _FD2, axis) / h**2
        if order % 2:
            out = _apply_stencil(out, _FD1, axis) / h
    return field.with_values(out)


def _apply_stencil(values: np.ndarray, stencil: np.ndarray, axis: int) -> np.ndarray:
    half = stencil.size // 2
    acc = np.zeros_like(values)
    for offset, c in zip(range(-half, half + 1), stencil):
        if c:
            acc = acc + c * np.roll(values, -offset, axis=axis)
    return acc


def weight_field(grid: GridSpec, p: float, frame: Frame = Frame.V) -> Field:
    """Samples of the Japanese bracket power ``(1 + |x|^2)^(p/2)``."""
    return Field(grid, np.power(1.0 + grid.radius_squared(), 0.5 * p), frame)


def bracket_power(grid: GridSpec, p: float) -> np.ndarray:
    return np.broadcast_to(np.power(1.0 + grid.radius_squared(), 0.5 * p), grid.shape)


def smooth_taper(grid: GridSpec, fraction: float = 0.1) -> np.ndarray:
    """Window equal to 1 inside ``(1 - fraction) L`` that rolls off to 0 at the edge.

    The roll-off is a cosine of a smooth step built from ``exp(-1/s)``, so
    every derivative is continuous, including at the periodic seam.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("taper fraction must lie in (0, 1)")
    x0 = (1.0 - fraction) * grid.half_width
    s = np.clip((np.abs(grid.axis) - x0) / (grid.half_width - x0), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        rise = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        fall = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    step = rise / (rise + fall)
    w1 = 0.5 * (1.0 + np.cos(np.pi * step))
    return functools.reduce(np.multiply, _open_mesh(w1, grid.dimension)) * np.ones(grid.shape)


# --- band-limited resampling -------------------------------------------------


def _aligned_indices(positions: np.ndarray, tol: float = 1e-9) -> np.ndarray | None:
    idx = np.rint(positions)
    if np.all(np.abs(positions - idx) <= tol * np.maximum(1.0, np.abs(positions))):
        return idx.astype(np.int64)
    return None


def _refinement_factor(positions: np.ndarray, limit: int = 64) -> int | None:
    for q in range(2, limit + 1):
        if _aligned_indices(positions * q) is not None:
            return q
    return None


def _resample_axis(values: np.ndarray, grid: GridSpec, targets: np.ndarray, axis: int) -> np.ndarray:
    """Band-limited evaluation along one axis with zero fill outside the box."""
    M, h, L = grid.points, grid.spacing, grid.half_width
    targets = np.asarray(targets, dtype=float)
    inside = (targets >= -L - 1e-12 * L) & (targets < L - 1e-12 * L)
    pos = (targets + L) / h
    moved = np.moveaxis(values, axis, -1)
    out = np.zeros(moved.shape[:-1] + (targets.size,), dtype=np.result_type(values, complex))

    idx = _aligned_indices(pos)
    if idx is not None:
        out[..., inside] = moved[..., idx[inside] % M]
        return np.moveaxis(out, -1, axis)

    spec = sfft.fft(moved, axis=-1)
    q = _refinement_factor(pos[inside]) if inside.any() else None
    if q is not None:
        padded = np.zeros(spec.shape[:-1] + (M * q,), dtype=complex)
        half = M // 2
        padded[..., :half] = spec[..., :half]
        padded[..., -half + 1 :] = spec[..., half + 1 :]
        padded[..., half] = 0.5 * spec[..., half]
        padded[..., -half] += 0.5 * spec[..., half]
        fine = sfft.ifft(padded, axis=-1) * q
        fidx = np.rint(pos[inside] * q).astype(np.int64) % (M * q)
        out[..., inside] = fine[..., fidx]
        return np.moveaxis(out, -1, axis)

    k = grid.wavenumbers.copy()
    weights = np.ones(M)
    weights[M // 2] = 0.5
    t_in = targets[inside] + L
    chunk = max(1, 2**22 // M)
    result = np.empty(moved.shape[:-1] + (t_in.size,), dtype=complex)
    nyq = spec[..., M // 2]
    for start in range(0, t_in.size, chunk):
        t = t_in[start : start + chunk]
        basis = np.exp(1j * np.outer(k, t)) * weights[:, None]
        vals = spec @ basis
        # Nyquist term symmetrized into a cosine.
        vals = vals + 0.5 * nyq[..., None] * np.exp(-1j * k[M // 2] * t)
        result[..., start : start + chunk] = vals / M
    out[..., inside] = result
    return np.moveaxis(out, -1, axis)


def resample(values: np.ndarray, grid: GridSpec, target_axes: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``values`` on a tensor grid.

    Points outside the box are filled with zero.  Targets that coincide with
    grid points are copied, integer refinements use zero padding, and anything
    else falls back to direct evaluation of the Fourier sum.
    """
    if isinstance(target_axes, np.ndarray) and target_axes.ndim == 1:
        target_axes = [target_axes] * grid.dimension
    out = np.asarray(values)
    for axis, targets in enumerate(target_axes):
        out = _resample_axis(out, grid, targets, axis)
    if not np.iscomplexobj(values):
        out = out.real
    return out


def iter_multi_indices(dimension: int, orders: Iterable[int]) -> Iterable[tuple[int, ...]]:
    for order in orders:
        yield from multi_indices(dimension, order)
