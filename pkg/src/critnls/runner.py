"""Run orchestration: one simulation to a verdict, and sweeps over the chirp ``b``."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .asymptotics import (
    Which,
    build_profile,
    profile_eval,
    residual_and_limits,
    scattering_residuals,
)
from .config import RunConfig, build_initial
from .dynamics import Checkpointer, StepSchedule, Trajectory, evolve, log_spaced_times
from .grid import bracket_power, free_propagate, relative_l2
from .norms import build_cascade, functionals_phi_psi, input_size_constant
from .pseudoconformal import frame_equivalence
from .snapshots import atomic_write_text, dump_json, rows_csv, save_field

log = logging.getLogger(__name__)

WORKERS_ENV = "CRITNLS_WORKERS"
CHECKPOINT_EVERY = 200


def _check(passed: bool, **info) -> dict:
    return {"pass": bool(passed), **info}


def _schedule(cfg: RunConfig) -> StepSchedule:
    b = cfg.params.b
    times = log_spaced_times(b, cfg.eps_end, per_decade=cfg.per_decade, eps_start=1.0)
    return StepSchedule.compact(
        b, cfg.eps_end, snapshot_times=times, dt_max=cfg.dt_max, endpoint_factor=cfg.endpoint_factor
    )


def _evolve(cfg: RunConfig, phi0, checkpoint: str | Path | None) -> Trajectory:
    schedule = _schedule(cfg)
    kw = dict(dealias=cfg.dealias, weight_power=cfg.indices.n, monitor_window=cfg.window)
    if cfg.inf_floor > 0:
        kw["inf_floor"] = cfg.inf_floor
    if checkpoint is None:
        return evolve(phi0, cfg.params, schedule, **kw)
    directory = Path(checkpoint)
    resume = directory if (directory / "cursor.json").exists() else None
    if resume is not None:
        log.info("resuming from %s", directory)
    return evolve(phi0, cfg.params, schedule, checkpoint=Checkpointer(directory, CHECKPOINT_EVERY), resume=resume, **kw)


def _linear_checks(cfg: RunConfig, phi0, traj: Trajectory) -> dict:
    mass0 = phi0.l2_norm()
    drift = max(abs(s.l2_norm() - mass0) / mass0 for s in traj.snapshots)
    final = traj.snapshots[-1]
    direct = free_propagate(phi0, final.time)
    return {
        "mass_conservation": _check(drift <= 1e-12, estimate=drift, tolerance=1e-12),
        "free_flow_consistency": _check(
            relative_l2(final.values, direct.values) <= 1e-10,
            estimate=relative_l2(final.values, direct.values),
            tolerance=1e-10,
        ),
    }


def _profile_checks(cfg: RunConfig, profile, traj: Trajectory, K: float) -> dict:
    lam = cfg.params.lam
    alpha = cfg.params.alpha
    mask = cfg.grid.window(cfg.window)
    weight = bracket_power(cfg.grid, cfg.indices.n)
    psi_lo, psi_hi, theta_gap, vt_max = math.inf, -math.inf, 0.0, 0.0
    for snap in traj.snapshots:
        vt = profile_eval(profile, snap.time, Which.V_TILDE).values
        vt_max = max(vt_max, float((weight * vt)[mask].max()))
        psi = profile_eval(profile, snap.time, Which.PSI).values
        psi_lo = min(psi_lo, float(psi.min()))
        psi_hi = max(psi_hi, float(psi.max()))
        if lam.imag < 0:
            theta = profile_eval(profile, snap.time, Which.THETA).values
            ident = (lam.real / lam.imag) * np.log(psi)
            theta_gap = max(theta_gap, float(np.abs(theta - ident).max()))
    checks = {
        "psi_range": _check(0.0 <= psi_lo and psi_hi <= 1.0, min=psi_lo, max=psi_hi),
        "w0_nonzero": _check(profile.w0.l2_norm(mask) > 1e-6, estimate=profile.w0.l2_norm(mask), threshold=1e-6),
        "w0_convergence": _check(
            all(b <= a for a, b in zip(profile.w_increments, profile.w_increments[1:])),
            increments=profile.w_increments,
            rate=profile.w_rate,
        ),
    }
    above = not any("below b1" in f for f in profile.flags)
    checks["v_tilde_bound"] = _check(
        vt_max <= 2.0 ** (1.0 / alpha) * K or not above, estimate=vt_max, bound=2.0 ** (1.0 / alpha) * K, enforced=above
    )
    if lam.imag == 0:
        lhs = np.abs(profile.w0.values[mask]) ** alpha
        rhs = np.abs(profile.phi0.values[mask]) ** alpha / (1.0 + profile.f0.values[mask])
        gap = float(np.abs(lhs - rhs).max() / np.abs(rhs).max())
        tol = cfg.tolerances["limit_tol"]
        checks["modulus_identity"] = _check(gap <= tol, estimate=gap, tolerance=tol)
    if lam.imag < 0:
        checks["theta_identity"] = _check(theta_gap <= 1e-12, estimate=theta_gap, tolerance=1e-12)
    return checks


def _scattering_check(traj: Trajectory, profile) -> dict:
    rows = scattering_residuals(traj, profile)[-3:]
    z = [r["z_residual"] for r in rows]
    u = [r["u_residual"] for r in rows]
    return _check(
        all(b < a for a, b in zip(z, z[1:])),
        z_residuals=z,
        u_residuals=u,
        u_decreasing=all(b < a for a, b in zip(u, u[1:])),
    )


def run_simulation(
    cfg: RunConfig,
    out_dir: str | Path | None = None,
    *,
    checkpoint: str | Path | None = None,
    plots: bool = False,
    write: bool = True,
) -> dict:
    """Evolve, analyse and write the verdict; returns the verdict dictionary.

    Nothing time- or host-dependent enters the verdict, so identical
    configurations give byte-identical files.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    phi0 = build_initial(cfg)
    params = cfg.params
    b = params.b
    traj = _evolve(cfg, phi0, checkpoint)
    log.info("b=%g: %d steps, %d snapshots", b, traj.steps, len(traj.snapshots))

    checks: dict[str, dict] = {}
    flags = list(traj.flags)
    summary: dict = {"steps": traj.steps, "snapshots": len(traj.snapshots)}
    norm_report = diagnostics = profile = None

    if params.lam == 0:
        checks.update(_linear_checks(cfg, phi0, traj))
    else:
        cascade = build_cascade(cfg.indices, params.alpha, cfg.sigma_bar)
        K = cfg.K
        if K is None:
            K = input_size_constant(
                phi0, cfg.indices, headroom=cfg.headroom, max_order=cfg.max_order, method=cfg.method, window=cfg.window
            )
        norm_report = functionals_phi_psi(
            traj, cascade, cfg.indices, K=K, max_order=cfg.max_order, method=cfg.method, window=cfg.window
        )
        until = (1.0 - cfg.monitor_until) / b
        psi_cols = norm_report.columns["psi"]
        psi_max = max(p for t, p in zip(norm_report.times, psi_cols) if t <= until + 1e-15 / b)
        checks["psi_bound"] = _check(
            norm_report.bound_holds_until(until + 1e-15 / b), psi_max=psi_max, four_K=4.0 * K, until_eps=cfg.monitor_until
        )
        summary["norms"] = norm_report.summary()
        summary["cascade"] = {"sigma_bar": cascade.sigma_bar, "sigma": list(cascade.sigma)}
        flags.extend(norm_report.flags)

        tol = cfg.tolerances
        profile = build_profile(
            traj, params, weight_power=cfg.indices.n, sigma3=cascade.sigma[3], window=cfg.window
        )
        flags.extend(profile.flags)
        if profile.w0 is None:
            checks["f0_positive"] = _check(False, reason="1 + f0 not positive inside the analysis window")
        else:
            diagnostics = residual_and_limits(
                traj,
                profile,
                weight_power=cfg.indices.n,
                window=cfg.window,
                fit_window=(tol["fit_lo"], tol["fit_hi"]),
                delta_min=tol["delta_min"],
                agree_tol=tol["agree_tol"],
                limit_tol=tol["limit_tol"],
                f_rate_min=tol["f_rate_min"],
                endpoint_eps=tol["endpoint_eps"],
            )
            checks.update(diagnostics.fits)
            checks.update(_profile_checks(cfg, profile, traj, K))
            if params.lam.imag == 0:
                checks["scattering_decreasing"] = _scattering_check(traj, profile)

    if cfg.frame_enabled:
        report = frame_equivalence(phi0, params, cfg.frame_t_values, window=cfg.window)
        fe = report.to_dict()
        fe.pop("seconds")
        checks["frame_equivalence"] = _check(report.max_error <= cfg.frame_tolerance, tolerance=cfg.frame_tolerance, **fe)

    verdict = {
        "config": cfg.resolved(),
        "params": params.to_dict(),
        "checks": checks,
        "failed": sorted(name for name, c in checks.items() if not c["pass"]),
        "pass": all(c["pass"] for c in checks.values()),
        "flags": flags,
        "summary": summary,
        "provenance": traj.provenance,
    }
    if write:
        _write_outputs(out, verdict, traj, norm_report, diagnostics, profile, plots)
    return verdict


def _write_outputs(out: Path, verdict, traj, norm_report, diagnostics, profile, plots: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "verdict.json", dump_json(verdict))
    if norm_report is not None:
        atomic_write_text(out / "norms.csv", norm_report.to_csv())
    if diagnostics is not None:
        names = list(diagnostics.rows[0])
        atomic_write_text(out / "residuals.csv", rows_csv(names, [[r[k] for k in names] for r in diagnostics.rows]))
        atomic_write_text(out / "fits.json", dump_json(diagnostics.fits))
    if profile is not None:
        b = traj.params.b
        save_field(profile.f0, out / "profile_f0", b=b)
        if profile.w0 is not None:
            save_field(profile.w0, out / "profile_w0", b=b)
    if plots and diagnostics is not None:
        from .plots import write_plots

        try:
            write_plots(out, diagnostics.rows)
        except Exception as exc:  # plotting never decides the outcome
            log.warning("plotting failed: %s", exc)


# --- sweeps ---------------------------------------------------------------------


def _sweep_one(args) -> dict:
    cfg, b, out = args
    return run_simulation(cfg.with_b(b), out, write=out is not None)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def sweep_b(cfg: RunConfig, b_values, out_dir: str | Path | None = None, workers: int | None = None) -> dict:
    """Run every ``b`` and tabulate the two threshold flags.

    ``b0_hat`` is the smallest ``b`` whose ``Psi`` stays below ``4K``;
    ``b1_hat`` the smallest where ``||f0||_inf <= 1/2`` holds as well.
    """
    b_values = [float(b) for b in b_values]
    if len(b_values) < 2:
        raise ValueError("a sweep needs at least two values of b")
    if any(b2 < b1 for b1, b2 in zip(b_values, b_values[1:])):
        raise ValueError("b values must be sorted")
    workers = workers or worker_count()
    outs = [None if out_dir is None else Path(out_dir) / f"b_{b!r}" for b in b_values]
    jobs = [(cfg, b, o) for b, o in zip(b_values, outs)]
    if workers == 1:
        verdicts = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            verdicts = list(pool.map(_sweep_one, jobs))

    rows = []
    for b, v in zip(b_values, verdicts):
        psi = v["checks"].get("psi_bound", {})
        f0 = v["checks"].get("f0_sup", {})
        rows.append(
            {
                "b": b,
                "psi_max": psi.get("psi_max"),
                "four_K": psi.get("four_K"),
                "psi_pass": bool(psi.get("pass", False)),
                "f0_sup": f0.get("estimate"),
                "f0_pass": bool(f0.get("pass", False)),
                "run_pass": v["pass"],
            }
        )
    b0 = next((r["b"] for r in rows if r["psi_pass"]), None)
    b1 = next((r["b"] for r in rows if r["psi_pass"] and r["f0_pass"]), None)
    flags = []
    for key in ("psi_pass", "f0_pass"):
        for i, r in enumerate(rows):
            if r[key] and any(not later[key] for later in rows[i + 1 :]):
                flags.append(f"{key} holds at b={r['b']!r} but fails at a larger b")
                break
    table = {
        "rows": rows,
        "b0_hat": b0,
        "b1_hat": b1,
        "K": rows[0]["four_K"] / 4.0 if rows[0]["four_K"] is not None else None,
        "flags": flags,
        "status": "threshold found" if b1 is not None else "no threshold in range",
        "verdicts": verdicts,
    }
    if out_dir is not None:
        out = Path(out_dir)
        atomic_write_text(out / "sweep.json", dump_json(table))
        names = [k for k in rows[0]]
        atomic_write_text(out / "sweep.csv", rows_csv(names, [[r[k] for k in names] for r in rows]))
    return table
