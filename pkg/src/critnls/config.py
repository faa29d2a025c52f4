"""Run configuration: a flat ``key = value`` file with dotted keys.

Every key has a default below; the resolved values are echoed into the
verdict so a run can be reproduced from its output alone.
"""

from __future__ import annotations

import configparser
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_DT_MAX, DEFAULT_ENDPOINT_FACTOR, PhysParams
from .grid import Field, Frame, GridSpec, bracket_power, smooth_taper
from .norms import RegularityIndices, default_indices, inf_weighted
from .snapshots import load_field


class ConfigError(ValueError):
    pass


class InitialFamily(str, enum.Enum):
    ALG_TAIL = "ALG_TAIL"
    ALG_TAIL_PLUS_GAUSSIAN = "ALG_TAIL_PLUS_GAUSSIAN"
    CUSTOM_FILE = "CUSTOM_FILE"


DEFAULTS: dict[str, str] = {
    "physics.dimension": "1",
    "physics.lambda": "-1j",
    "physics.b": "20",
    "indices.k": "",
    "indices.m": "",
    "indices.n": "",
    "grid.half_width": "40",
    "grid.points": "",
    "schedule.eps_end": "1e-6",
    "schedule.dt_max": repr(DEFAULT_DT_MAX),
    "schedule.endpoint_factor": repr(DEFAULT_ENDPOINT_FACTOR),
    "schedule.per_decade": "80",
    "schedule.dealias": "false",
    "cascade.sigma_bar": "",
    "initial.family": "ALG_TAIL",
    "initial.c": "1",
    "initial.eps": "0.5",
    "initial.decay": "",
    "initial.gaussian_amplitude": "0.25",
    "initial.gaussian_width": "1",
    "initial.taper": "0.1",
    "initial.file": "",
    "norms.K": "",
    "norms.headroom": "0.2",
    "norms.max_order": "4",
    "norms.method": "spectral",
    "norms.window": "0.9",
    "norms.monitor_until": "1e-4",
    "norms.inf_floor": "0",
    "asymptotics.fit_lo": "1e-5",
    "asymptotics.fit_hi": "1e-2",
    "asymptotics.delta_min": "0.8",
    "asymptotics.agree_tol": "0.1",
    "asymptotics.limit_tol": "0.02",
    "asymptotics.f_rate_min": "0.85",
    "asymptotics.endpoint_eps": "1e-6",
    "frame.enabled": "false",
    "frame.t_values": "0.05, 0.25, 0.5, 1.0",
    "frame.tolerance": "1e-6",
    "output.dir": "out",
    "output.plots": "false",
}

_DEFAULT_POINTS = {1: 1024, 2: 256, 3: 64}


def parse_complex(text: str) -> complex:
    """Accept Python literals (``-1j``, ``1-1j``) and the ``i`` spelling (``1-i``)."""
    raw = text.strip().replace(" ", "")
    if raw.endswith("i") and not raw.endswith("j"):
        head = raw[:-1]
        if head in ("", "+", "-"):
            head += "1"
        if head[-1] in "+-":
            head += "1"
        raw = head + "j"
    try:
        return complex(raw)
    except ValueError as exc:
        raise ConfigError(f"not a complex number: {text!r}") from exc


def parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_pairs(path: str | Path | None) -> dict[str, str]:
    """Read dotted ``key = value`` pairs; unknown keys are an error."""
    values = dict(DEFAULTS)
    if path is None:
        return values
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[run]\n" + text, source=str(path))
    for key, val in parser["run"].items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r} in {path}")
        values[key] = val.strip()
    return values


@dataclass(frozen=True)
class RunConfig:
    params: PhysParams
    indices: RegularityIndices
    grid: GridSpec
    eps_end: float
    dt_max: float
    endpoint_factor: float
    per_decade: int
    dealias: bool
    sigma_bar: float | None
    family: InitialFamily
    c: complex
    eps: float
    decay: float
    gaussian_amplitude: float
    gaussian_width: float
    taper: float
    initial_file: str
    K: float | None
    headroom: float
    max_order: int
    method: str
    window: float
    monitor_until: float
    inf_floor: float
    tolerances: dict
    frame_enabled: bool
    frame_t_values: tuple[float, ...]
    frame_tolerance: float
    out_dir: str
    plots: bool
    raw: dict

    @classmethod
    def from_pairs(cls, values: dict[str, str]) -> "RunConfig":
        try:
            return cls._build(values)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _build(cls, v: dict[str, str]) -> "RunConfig":
        N = int(v["physics.dimension"])
        lam = parse_complex(v["physics.lambda"])
        if lam.imag > 0:
            raise ConfigError("Im lambda must be nonpositive")
        params = PhysParams(N, lam, float(v["physics.b"]))
        base = default_indices(N)
        indices = RegularityIndices(
            int(v["indices.k"] or base.k), int(v["indices.m"] or base.m), int(v["indices.n"] or base.n), N
        )
        points = int(v["grid.points"] or _DEFAULT_POINTS[N])
        grid = GridSpec(N, float(v["grid.half_width"]), points)
        tolerances = {
            "fit_lo": float(v["asymptotics.fit_lo"]),
            "fit_hi": float(v["asymptotics.fit_hi"]),
            "delta_min": float(v["asymptotics.delta_min"]),
            "agree_tol": float(v["asymptotics.agree_tol"]),
            "limit_tol": float(v["asymptotics.limit_tol"]),
            "f_rate_min": float(v["asymptotics.f_rate_min"]),
            "endpoint_eps": float(v["asymptotics.endpoint_eps"]),
        }
        eps_end = float(v["schedule.eps_end"])
        if not 0.0 < eps_end < 1.0:
            raise ConfigError("schedule.eps_end must lie in (0, 1)")
        K = float(v["norms.K"]) if v["norms.K"] else None
        if K is not None and K <= 0:
            raise ConfigError("norms.K must be positive")
        method = v["norms.method"]
        if method not in ("spectral", "fd"):
            raise ConfigError("norms.method is 'spectral' or 'fd'")
        cfg = cls(
            params=params,
            indices=indices,
            grid=grid,
            eps_end=eps_end,
            dt_max=float(v["schedule.dt_max"]),
            endpoint_factor=float(v["schedule.endpoint_factor"]),
            per_decade=int(v["schedule.per_decade"]),
            dealias=parse_bool(v["schedule.dealias"]),
            sigma_bar=float(v["cascade.sigma_bar"]) if v["cascade.sigma_bar"] else None,
            family=InitialFamily(v["initial.family"].strip().upper()),
            c=parse_complex(v["initial.c"]),
            eps=float(v["initial.eps"]),
            decay=float(v["initial.decay"] or indices.n),
            gaussian_amplitude=float(v["initial.gaussian_amplitude"]),
            gaussian_width=float(v["initial.gaussian_width"]),
            taper=float(v["initial.taper"]),
            initial_file=v["initial.file"],
            K=K,
            headroom=float(v["norms.headroom"]),
            max_order=int(v["norms.max_order"]),
            method=method,
            window=float(v["norms.window"]),
            monitor_until=float(v["norms.monitor_until"]),
            inf_floor=float(v["norms.inf_floor"]),
            tolerances=tolerances,
            frame_enabled=parse_bool(v["frame.enabled"]),
            frame_t_values=tuple(float(t) for t in v["frame.t_values"].split(",") if t.strip()),
            frame_tolerance=float(v["frame.tolerance"]),
            out_dir=v["output.dir"],
            plots=parse_bool(v["output.plots"]),
            raw=dict(v),
        )
        return cfg

    def with_b(self, b: float) -> "RunConfig":
        pairs = dict(self.raw)
        pairs["physics.b"] = repr(float(b))
        return RunConfig.from_pairs(pairs)

    def resolved(self) -> dict[str, str]:
        """All keys with the implicit defaults filled in."""
        out = dict(self.raw)
        out["indices.k"], out["indices.m"], out["indices.n"] = (str(self.indices.k), str(self.indices.m), str(self.indices.n))
        out["grid.points"] = str(self.grid.points)
        out["initial.decay"] = repr(self.decay)
        out["physics.b"] = repr(self.params.b)
        return dict(sorted(out.items()))


def load_config(path: str | Path | None) -> RunConfig:
    return RunConfig.from_pairs(read_pairs(path))


def build_initial(cfg: RunConfig) -> Field:
    """Initial datum on the configured grid, checked for a positive weighted minimum."""
    grid = cfg.grid
    n = cfg.indices.n
    if cfg.family is InitialFamily.CUSTOM_FILE:
        if not cfg.initial_file:
            raise ConfigError("initial.file is required for CUSTOM_FILE")
        loaded, _ = load_field(cfg.initial_file)
        if loaded.grid != grid:
            raise ConfigError(f"initial file grid {loaded.grid} does not match the configured {grid}")
        values = np.asarray(loaded.values, dtype=complex)
    else:
        taper = smooth_taper(grid, cfg.taper) if cfg.taper > 0 else 1.0
        values = cfg.c * bracket_power(grid, -cfg.decay) * taper
        if cfg.family is InitialFamily.ALG_TAIL_PLUS_GAUSSIAN:
            if cfg.eps <= 0 or cfg.eps >= abs(cfg.c):
                raise ConfigError("initial.eps must lie in (0, |c|)")
            bump = cfg.gaussian_amplitude * np.exp(-grid.radius_squared() / cfg.gaussian_width**2) * taper
            ratio = float((np.abs(bump) * bracket_power(grid, n)).max())
            if ratio > abs(cfg.c) - cfg.eps:
                raise ConfigError(
                    f"perturbation too large: max <x>^n |phi| = {ratio:.4g} exceeds |c| - eps = {abs(cfg.c) - cfg.eps:.4g}"
                )
            values = values + bump
        values = np.broadcast_to(values, grid.shape).astype(complex)
    phi0 = Field(grid, values, Frame.V, 0.0)
    low = inf_weighted(phi0, n, cfg.window)
    if not low > 0.0 or not math.isfinite(low):
        raise ConfigError(f"initial datum has weighted minimum {low!r}; it must be positive")
    return phi0
