"""Weighted derivative norms, the exponent cascade and the bootstrap functionals."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.fft as sfft

from .dynamics import Trajectory
from .grid import (
    DEFAULT_MAX_ORDER,
    Field,
    Frame,
    _axis_multiplier,
    bracket_power,
    fd_derivative,
    multi_indices,
)
from .snapshots import rows_csv


class Family(str, enum.Enum):
    FAM1 = "fam1"
    FAM2 = "fam2"
    FAM3 = "fam3"


class CascadeError(ValueError):
    pass


@dataclass(frozen=True)
class RegularityIndices:
    """Integers ``k, m, n`` fixing the function space, with ``J = 2m + 2 + k + n``.

    Constraints: ``k > N/2``, ``n > max(N/2 + 1, N/(2 alpha))`` and
    ``2m >= k + n + 1``.
    """

    k: int
    m: int
    n: int
    dimension: int = 1

    def __post_init__(self) -> None:
        N = self.dimension
        alpha = 2.0 / N
        problems = []
        if not self.k > N / 2:
            problems.append(f"k={self.k} must exceed N/2={N / 2}")
        floor_n = max(N / 2 + 1, N / (2 * alpha))
        if not self.n > floor_n:
            problems.append(f"n={self.n} must exceed {floor_n}")
        if not 2 * self.m >= self.k + self.n + 1:
            problems.append(f"2m={2 * self.m} must be at least k+n+1={self.k + self.n + 1}")
        if problems:
            raise ValueError("invalid regularity indices: " + "; ".join(problems))

    @property
    def J(self) -> int:
        return 2 * self.m + 2 + self.k + self.n

    @property
    def alpha(self) -> float:
        return 2.0 / self.dimension

    def family_range(self, kind: Family) -> tuple[int, int]:
        """Orders ``|beta|`` entering a family, and the largest admissible ``ell``."""
        m, k = self.m, self.k
        return {
            Family.FAM1: (0, 2 * m),
            Family.FAM2: (2 * m + 1, 2 * m + 2 + k),
            Family.FAM3: (2 * m + 3 + k, self.J),
        }[Family(kind)]

    def to_dict(self) -> dict:
        return {"k": self.k, "m": self.m, "n": self.n, "J": self.J, "dimension": self.dimension}


def default_indices(dimension: int) -> RegularityIndices:
    """Smallest admissible indices for each dimension."""
    return {
        1: RegularityIndices(k=1, m=2, n=2, dimension=1),
        2: RegularityIndices(k=2, m=3, n=3, dimension=2),
        3: RegularityIndices(k=2, m=3, n=3, dimension=3),
    }[dimension]


@dataclass(frozen=True)
class CascadeExponents:
    sigma_bar: float
    J: int
    alpha: float
    sigma: tuple[float, ...]
    admissible: bool = True

    @property
    def ratio(self) -> float:
        return 4 * self.J + 2 * self.alpha + 2

    @property
    def bound(self) -> float:
        return cascade_bound(self.J, self.alpha)


def cascade_bound(J: int, alpha: float) -> float:
    return (4 * J + 2 * alpha + 1) ** (-J)


def _cascade(J: int, alpha: float, sigma_bar: float) -> tuple[float, ...]:
    ratio = 4 * J + 2 * alpha + 2
    return (0.0,) + tuple(ratio**j * sigma_bar for j in range(1, J + 1))


def build_cascade(indices: RegularityIndices, alpha: float, sigma_bar: float | None = None) -> CascadeExponents:
    """Geometric exponents ``sigma_j = (4J + 2 alpha + 2)^j sigma_bar`` with ``sigma_0 = 0``.

    ``sigma_bar`` defaults to half of its admissible bound.  The ordering
    ``0 < sigma_bar < sigma_1 < ... < sigma_J < 1`` is checked explicitly,
    since the bound on ``sigma_bar`` alone only gives ``sigma_J`` below
    ``(1 + 1/(4J + 2 alpha + 1))^J``.
    """
    J = indices.J
    bound = cascade_bound(J, alpha)
    if sigma_bar is None:
        sigma_bar = 0.5 * bound
    if not 0.0 < sigma_bar < bound:
        raise CascadeError(f"sigma_bar={sigma_bar!r} must lie in (0, {bound!r})")
    sigma = _cascade(J, alpha, sigma_bar)
    if not sigma[-1] < 1.0:
        raise CascadeError(f"sigma_J={sigma[-1]!r} is not below 1 for sigma_bar={sigma_bar!r}")
    if not all(a < b for a, b in zip((0.0, sigma_bar) + sigma[1:], sigma[1:])):
        raise CascadeError("cascade is not strictly increasing")
    return CascadeExponents(sigma_bar, J, alpha, sigma)


def display_cascade(indices: RegularityIndices, alpha: float, top: float = 0.9) -> CascadeExponents:
    """Cascade scaled so that ``sigma_J = top``; for plotting envelopes only."""
    if not 0.0 < top < 1.0:
        raise CascadeError("top must lie in (0, 1)")
    J = indices.J
    sigma_bar = top / (4 * J + 2 * alpha + 2) ** J
    sigma = _cascade(J, alpha, sigma_bar)
    return CascadeExponents(sigma_bar, J, alpha, sigma, admissible=sigma_bar < cascade_bound(J, alpha))


# --- derivative tables ------------------------------------------------------------


class DerivativeTable:
    """Lazily computed ``D^beta`` of one field, sharing a single forward FFT."""

    def __init__(self, field: Field, max_order: int = DEFAULT_MAX_ORDER, method: str = "spectral"):
        if method not in ("spectral", "fd"):
            raise ValueError(f"unknown derivative method {method!r}")
        self.field = field
        self.max_order = max_order
        self.method = method
        self._spec = None
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def get(self, beta: tuple[int, ...]) -> np.ndarray:
        if beta in self._cache:
            return self._cache[beta]
        if sum(beta) == 0:
            out = np.asarray(self.field.values)
        elif self.method == "fd":
            out = np.asarray(fd_derivative(self.field, beta, self.max_order).values)
        else:
            if self._spec is None:
                self._spec = sfft.fftn(self.field.values)
            spec = self._spec
            for axis, order in enumerate(beta):
                if order:
                    spec = spec * _axis_multiplier(self.field.grid, axis, order)
            out = sfft.ifftn(spec)
        self._cache[beta] = out
        return out

    def order_norm(self, order: int, weight: np.ndarray, kind: str, mask: np.ndarray | None) -> float:
        """``sup_{|beta| = order}`` of a weighted sup or L^2 norm."""
        grid = self.field.grid
        best = 0.0
        for beta in multi_indices(grid.dimension, order):
            a = weight * np.abs(self.get(beta))
            if mask is not None:
                a = a[mask]
            if kind == "sup":
                val = float(a.max(initial=0.0))
            else:
                val = float(np.sqrt((a * a).sum() * grid.cell_volume))
            best = max(best, val)
        return best


@dataclass(frozen=True)
class NormValue:
    value: float
    truncated_at: int | None = None

    @property
    def truncated(self) -> bool:
        return self.truncated_at is not None


def _mask(field: Field, window: float) -> np.ndarray | None:
    return None if window >= 1.0 else field.grid.window(window)


def weighted_norm_family(
    field: Field,
    indices: RegularityIndices,
    kind: Family | str,
    ell: int,
    *,
    max_order: int = DEFAULT_MAX_ORDER,
    method: str = "spectral",
    window: float = 1.0,
    table: DerivativeTable | None = None,
) -> NormValue:
    """One member ``||v||_{kind, ell}`` of the three weighted families.

    FAM1 is the sup over ``|beta| <= ell`` of ``|| <x>^n D^beta v ||_inf``,
    FAM2 the sup over ``2m+1 <= |beta| <= ell`` of the weighted L^2 norm and
    FAM3 the sup over ``2m+3+k <= |beta| <= ell`` with weight ``<x>^(J-ell)``.
    Orders above ``max_order`` are skipped and reported in ``truncated_at``.
    """
    kind = Family(kind)
    lo, hi = indices.family_range(kind)
    if not 0 <= ell <= hi:
        raise ValueError(f"ell={ell} outside the admissible range [0, {hi}] for {kind.value}")
    if ell < lo:
        return NormValue(0.0)
    table = table or DerivativeTable(field, max_order, method)
    mask = _mask(field, window)
    if kind is Family.FAM3:
        weight = bracket_power(field.grid, indices.J - ell)
        norm_kind = "l2"
    else:
        weight = bracket_power(field.grid, indices.n)
        norm_kind = "sup" if kind is Family.FAM1 else "l2"
    top = min(ell, max_order)
    value = 0.0
    for order in range(lo, top + 1):
        value = max(value, table.order_norm(order, weight, norm_kind, mask))
    return NormValue(value, max_order if ell > max_order else None)


def inf_weighted(field: Field, n: float, window: float = 1.0) -> float:
    """``min <x>^n |v|`` over the grid, or over an interior window."""
    a = bracket_power(field.grid, n) * np.abs(field.values)
    mask = _mask(field, window)
    return float((a[mask] if mask is not None else a).min())


def x_norm_proxy(
    field: Field,
    indices: RegularityIndices,
    *,
    max_order: int = DEFAULT_MAX_ORDER,
    method: str = "spectral",
    window: float = 1.0,
) -> NormValue:
    """Space norm restricted to derivative orders up to ``max_order``.

    Sum over ``c <= 2m`` of the weighted sup norms of order ``c`` plus the
    sum over ``p <= k+1, s <= n`` of the ``<x>^(n-s)`` weighted L^2 norms of
    order ``p + s + 2m + 1``.
    """
    table = DerivativeTable(field, max_order, method)
    mask = _mask(field, window)
    k, m, n = indices.k, indices.m, indices.n
    weight_n = bracket_power(field.grid, n)
    total = 0.0
    truncated = None
    for c in range(0, 2 * m + 1):
        if c > max_order:
            truncated = max_order
            break
        total += table.order_norm(c, weight_n, "sup", mask)
    for p in range(0, k + 2):
        for s in range(0, n + 1):
            order = p + s + 2 * m + 1
            if order > max_order:
                truncated = max_order
                continue
            total += table.order_norm(order, bracket_power(field.grid, n - s), "l2", mask)
    return NormValue(total, truncated)


def input_size_constant(
    phi0: Field,
    indices: RegularityIndices,
    *,
    headroom: float = 0.2,
    max_order: int = DEFAULT_MAX_ORDER,
    method: str = "spectral",
    window: float = 1.0,
) -> float:
    """``K = (1 + headroom) (||phi0||_X + 1 / inf <x>^n |phi0|)`` at monitored orders."""
    size = x_norm_proxy(phi0, indices, max_order=max_order, method=method, window=window).value
    low = inf_weighted(phi0, indices.n, window)
    inverse = math.inf if low == 0.0 else 1.0 / low
    return (1.0 + headroom) * (size + inverse)


# --- functionals -----------------------------------------------------------------


@dataclass
class NormReport:
    """Per-snapshot monitors and the running functionals."""

    times: list[float]
    columns: dict[str, list[float]]
    K: float
    truncated_at: int | None
    flags: list[str] = dc_field(default_factory=list)

    @property
    def psi_final(self) -> float:
        return self.columns["psi"][-1]

    @property
    def bound_holds(self) -> bool:
        return all(p <= 4.0 * self.K for p in self.columns["psi"])

    def bound_holds_until(self, time: float) -> bool:
        return all(p <= 4.0 * self.K for t, p in zip(self.times, self.columns["psi"]) if t <= time)

    def to_csv(self) -> str:
        names = list(self.columns)
        rows = [[t] + [self.columns[c][i] for c in names] for i, t in enumerate(self.times)]
        return rows_csv(["time"] + names, rows)

    def summary(self) -> dict:
        return {
            "psi_final": self.psi_final,
            "phi_final": self.columns["phi"][-1],
            "K": self.K,
            "four_K": 4.0 * self.K,
            "bound_holds": self.bound_holds,
            "truncated_at": self.truncated_at,
            "flags": list(self.flags),
        }


def snapshot_monitors(
    field: Field,
    indices: RegularityIndices,
    *,
    max_order: int = DEFAULT_MAX_ORDER,
    method: str = "spectral",
    window: float = 1.0,
) -> tuple[dict[str, list[float]], float, int | None]:
    """Family values ``||v||_{i, j}`` for all ``j`` and the weighted minimum."""
    table = DerivativeTable(field, max_order, method)
    fams = {}
    truncated = None
    for kind, top in ((Family.FAM1, 2 * indices.m), (Family.FAM2, 2 * indices.m + 2 + indices.k), (Family.FAM3, indices.J)):
        vals = []
        for j in range(top + 1):
            nv = weighted_norm_family(field, indices, kind, j, max_order=max_order, window=window, table=table)
            if nv.truncated:
                truncated = nv.truncated_at
            vals.append(nv.value)
        fams[kind.value] = vals
    return fams, inf_weighted(field, indices.n, window), truncated


def functionals_phi_psi(
    trajectory: Trajectory,
    cascade: CascadeExponents,
    indices: RegularityIndices,
    *,
    K: float | None = None,
    max_order: int = DEFAULT_MAX_ORDER,
    method: str = "spectral",
    window: float = 1.0,
) -> NormReport:
    """Running functionals ``Phi_1..Phi_4``, ``Phi`` and ``Psi`` along a trajectory.

    At each snapshot ``tau`` the family members are weighted by
    ``(1 - b tau)^sigma_j``; ``Phi_4`` uses ``(1 - b tau)^sigma_1`` divided by
    the weighted minimum.  ``K`` defaults to the input-size constant of the
    first snapshot.
    """
    if trajectory.frame is not Frame.V:
        raise ValueError("functionals are defined on compactified-frame trajectories")
    b = trajectory.params.b
    sigma = cascade.sigma
    if K is None:
        K = input_size_constant(trajectory.snapshots[0], indices, max_order=max_order, method=method, window=window)
    columns: dict[str, list[float]] = {}
    running = {"phi1": 0.0, "phi2": 0.0, "phi3": 0.0, "phi4": 0.0}
    flags: list[str] = []
    truncated = None
    for snap in trajectory.snapshots:
        eps = 1.0 - b * snap.time
        fams, low, trunc = snapshot_monitors(snap, indices, max_order=max_order, method=method, window=window)
        truncated = trunc if trunc is not None else truncated
        row = {}
        for name, vals in fams.items():
            for j, val in enumerate(vals):
                row[f"{name}_{j}"] = val
        row["inf_weighted"] = low
        inner = {
            "phi1": max(eps ** sigma[j] * v for j, v in enumerate(fams["fam1"])),
            "phi2": max(eps ** sigma[j] * v for j, v in enumerate(fams["fam2"])),
            "phi3": max(eps ** sigma[j] * v for j, v in enumerate(fams["fam3"])),
        }
        if low > 0.0:
            inner["phi4"] = eps ** sigma[1] / low
        else:
            inner["phi4"] = math.inf
            flags.append(f"weighted minimum vanishes at time {snap.time!r}")
        for key, val in inner.items():
            running[key] = max(running[key], val)
            row[key] = running[key]
        row["phi"] = max(running["phi1"], running["phi2"], running["phi3"])
        row["psi"] = max(row["phi"], running["phi4"])
        for key, val in row.items():
            columns.setdefault(key, []).append(val)
    report = NormReport([s.time for s in trajectory.snapshots], columns, K, truncated, flags)
    if not report.bound_holds:
        report.flags.append("Psi exceeds 4K")
    return report
