"""Command-line entry point: ``fuzzy-euler <subcommand> [--config FILE] [--out DIR]``.

Exit status: 0 success, 2 configuration error, 3 numerical-integrity abort,
4 acceptance-gate failure (only with ``--gate``).  Every output directory
receives ``manifest.json`` and the normalised ``config.toml`` needed to rerun.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np

from . import asymptotics as asy
from . import diagnostics as diag
from . import linear_modes as lm
from . import particles as pt
from .config import RunConfig, default_config, dump_config, load_config
from .errors import ConfigError, IntegrityError, PositivityError, StepSizeError
from .hydro import PressureLaw, SimState, prepare, run, run_porous
from .kernels import TriangleKernel, verify_hypotheses
from .littlewood_paley import besov_norm, functional_H, functional_X
from .spectral import SpectralField, inverse_array, write_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRITY, EXIT_GATE = 0, 2, 3, 4
SYSTEMS = ("fuzzy", "euler", "pme", "pmeps", "fuzzy-pp")


def build_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "unknown"


def resolve_jobs(flag: Optional[int]) -> int:
    if flag is not None:
        if flag < 1:
            raise ConfigError("--jobs must be at least 1")
        return flag
    env = os.environ.get("FUZZY_EULER_JOBS")
    if env is None or env == "":
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"FUZZY_EULER_JOBS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("FUZZY_EULER_JOBS must be at least 1")
    return n


class Outcome:
    """What a subcommand hands back: extra manifest entries and the gate verdict."""

    def __init__(self, summary: Optional[dict] = None, gate_ok: bool = True, gate_reason: str = ""):
        self.summary = summary or {}
        self.gate_ok = gate_ok
        self.gate_reason = gate_reason


def _write_csv(path: Path, header, rows) -> None:
    asy.write_rows(path, header, rows)


# --- subcommands ----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path, args) -> Outcome:
    system = args.system
    if system in ("pme", "pmeps"):
        return _simulate_porous(cfg, out, system)
    solver = cfg.solver
    if system == "euler":
        solver = replace(solver, kernel=None)
    elif system == "fuzzy-pp":
        solver = replace(solver, pressure=PressureLaw("general", cfg.solver.pressure.gamma))
    s0 = cfg.initial_data.build(cfg.grid)
    sigmas = cfg.diagnostics["sigma"]
    sigma = sigmas[0] if sigmas else None
    snap_dir = out / "snapshots"
    if cfg.diagnostics["write_snapshots"]:
        snap_dir.mkdir(exist_ok=True)
    count = [0]
    extra = []

    def on_snapshot(s: SimState):
        n = count[0]
        if cfg.diagnostics["write_snapshots"]:
            write_snapshot(snap_dir / f"a_{n:05d}.bin", s.a, s.t)
            write_snapshot(snap_dir / f"u_{n:05d}.bin", s.u, s.t)
        for sg in sigmas[1:]:
            extra.append(
                (s.t, sg, functional_X(s.a, s.u, sg, solver.kernel, solver.friction or 1.0),
                 functional_H(s.a, s.u, sg, solver.kernel, solver.friction or 1.0))
            )
        count[0] += 1

    ts = run(s0, solver, sigma=sigma, keep_states=False, on_snapshot=on_snapshot)
    diag.write_csv(out / "diagnostics.csv", ts.rows)
    if extra:
        _write_csv(out / "functionals.csv", ("t", "sigma", "X", "H"), extra)
    summary = {"system": system, "status": ts.status, "snapshots": count[0], "t_final": ts.states[-1].t}
    if not ts.ok:
        raise IntegrityError(ts.message)
    gate_ok, reason = True, ""
    if len(ts.rows) >= 2:
        try:
            rep = diag.estimate_constant(ts.rows)
            summary.update(C_est=rep.C_est, monotone_violations=rep.monotone_violations)
            gate_ok = math.isfinite(rep.C_est)
            reason = "" if gate_ok else "the global-bound ratio is not finite"
        except diag.DegenerateDataError as exc:
            summary["C_est"] = None
            reason = str(exc)
    return Outcome(summary, gate_ok, reason)


def _simulate_porous(cfg: RunConfig, out: Path, system: str) -> Outcome:
    g = cfg.grid
    s0 = prepare(cfg.initial_data.build(g))
    r0 = SpectralField(g, s0.a.coeffs.copy())
    r0.coeffs[(0,) * (g.dimension + 1)] += 1.0
    t_end = cfg.solver.t_end
    interval = cfg.solver.dt * cfg.diagnostics["snapshot_stride"]
    n = max(1, math.ceil(t_end / interval - 1e-9))
    times = [t_end * (i + 1) / n for i in range(n)]
    kernel = cfg.kernel if system == "pmeps" else None
    tt, R = run_porous(r0, kernel, t_end, regularized=system == "pmeps", dt=cfg.solver.dt, snapshot_times=times)
    rows = []
    snap_dir = out / "snapshots"
    if cfg.diagnostics["write_snapshots"]:
        snap_dir.mkdir(exist_ok=True)
    d = g.dimension
    for i, (t, r) in enumerate(zip(tt, R)):
        vals = inverse_array(g, r.coeffs[0])
        rows.append((float(t), float(np.mean(vals) * g.volume), float(vals.min()), besov_norm(r, d / 2).total))
        if cfg.diagnostics["write_snapshots"]:
            write_snapshot(snap_dir / f"r_{i:05d}.bin", r, t)
    _write_csv(out / "porous.csv", ("t", "mass", "min_r", "r_Bd2"), rows)
    ok = all(row[2] > 0 for row in rows)
    return Outcome({"system": system, "snapshots": len(rows)}, ok, "" if ok else "density touched zero")


def cmd_linear_modes(cfg: RunConfig, out: Path, args) -> Outcome:
    m = cfg.modes
    xi = np.geomspace(m["xi_min"], m["xi_max"], m["samples"])
    kernel = None if cfg.kernel.kind == "identity" else cfg.kernel
    _write_csv(out / "modes.csv", lm.CSV_HEADER, lm.mode_table(kernel, xi))
    return Outcome({"regime_boundaries": lm.regime_boundaries(kernel, xi)})


def _setup(cfg: RunConfig, jobs: int) -> asy.StudySetup:
    return asy.StudySetup(
        grid=cfg.grid,
        data=cfg.initial_data,
        kernel=cfg.kernel,
        friction=cfg.solver.friction,
        t_end=cfg.solver.t_end,
        dt=cfg.solver.dt,
        snapshots=cfg.study["snapshots"],
        jobs=jobs,
    )


def _in_band(x: float, lo: float, hi: float) -> bool:
    return lo <= x <= hi


def cmd_eps_limit(cfg: RunConfig, out: Path, args) -> Outcome:
    res = asy.eps_limit_study(_setup(cfg, args.jobs), cfg.study["eps_list"])
    _write_csv(out / "study.csv", asy.EPS_HEADER, res.rows())
    asy.write_fits(out / "fit.csv", {"err_a_Bd2": res.fit_a, "err_u_Bd2": res.fit_u})
    ok = _in_band(res.fit_a.slope, 0.7, 1.3) and not res.floor_saturated
    return Outcome(
        {"slope_a": res.fit_a.slope, "slope_u": res.fit_u.slope, "floor_saturated": res.floor_saturated},
        ok,
        "" if ok else f"density slope {res.fit_a.slope:.3f} outside [0.7, 1.3]",
    )


def cmd_friction_limit(cfg: RunConfig, out: Path, args) -> Outcome:
    res = asy.friction_limit_study(_setup(cfg, args.jobs), cfg.study["lambda_list"], cfg.study["eps_fixed"])
    _write_csv(out / "study.csv", asy.FRICTION_HEADER, res.rows())
    fits = {"err_rho_Bd2m1": res.fit_density, "int_damped_Bd2": res.fit_damped, "int_darcy_Bd2": res.fit_darcy}
    asy.write_fits(out / "fit.csv", fits)
    fd, fw = res.fit_density, res.fit_damped
    ok = _in_band(fd.slope, -1.3, -0.7) and fd.r_squared > 0.98 and _in_band(fw.slope, -1.3, -0.7)
    return Outcome(
        {"slope_density": fd.slope, "r2_density": fd.r_squared, "slope_damped": fw.slope},
        ok,
        "" if ok else f"density slope {fd.slope:.3f} (r2 {fd.r_squared:.3f}), damped slope {fw.slope:.3f}",
    )


def cmd_pme_limit(cfg: RunConfig, out: Path, args) -> Outcome:
    res = asy.pme_consistency_study(_setup(cfg, args.jobs), cfg.study["eps_list"])
    _write_csv(out / "study.csv", asy.PME_HEADER, res.rows())
    asy.write_fits(out / "fit.csv", {"err_r_Bd2": res.fit})
    ok = res.strictly_decreasing
    return Outcome({"slope_informational": res.fit.slope}, ok, "" if ok else "errors are not strictly decreasing")


def cmd_combined_limit(cfg: RunConfig, out: Path, args) -> Outcome:
    res = asy.combined_limit_study(_setup(cfg, args.jobs), [tuple(p) for p in cfg.study["pairs"]])
    _write_csv(out / "study.csv", asy.COMBINED_HEADER, res.rows())
    errs = [r.error_sum_space for r in res.rows_]
    fit = asy.fit_rate([r.friction for r in res.rows_], errs)
    asy.write_fits(out / "fit.csv", {"err_sum_space_vs_friction": fit})
    ok = res.strictly_decreasing
    return Outcome({"errors": errs}, ok, "" if ok else "errors are not strictly decreasing")


def cmd_particles(cfg: RunConfig, out: Path, args) -> Outcome:
    pc = cfg.particles
    g = cfg.grid
    kernel = TriangleKernel(pc["epsilon"], g.dimension)
    if kernel.support_radius >= g.length / 2:
        raise ConfigError("[particles].epsilon must be smaller than half the box length")
    if pc["bandwidth"] < g.spacing:
        raise ConfigError(f"[particles].bandwidth = {pc['bandwidth']} is below the grid spacing {g.spacing:.6g}")
    rng = np.random.default_rng(pc["seed"])
    e = pt.sample_monokinetic(prepare(cfg.initial_data.build(g)), pc["count"], rng)
    mass = e.volume / e.count
    law = cfg.solver.pressure if cfg.solver.pressure.kind == "general" else None

    def force(ens):
        return pt.pairwise_force(
            ens, kernel, pc["protocol"], particle_mass=mass, pressure=law, grid=g, bandwidth=pc["bandwidth"]
        )

    steps = max(1, math.ceil(pc["t_final"] / pc["dt"] - 1e-9)) if pc["t_final"] > 0 else 0
    h = pc["t_final"] / steps if steps else pc["dt"]
    snaps, times = [e], [0.0]
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    write_snapshot(snap_dir / "rho_00000.bin", pt.empirical_density(e, g, pc["bandwidth"]), 0.0)
    p0 = e.momentum()
    for i in range(1, steps + 1):
        e = pt.particle_step(e, pc["friction"], h, force)
        if not np.all(np.isfinite(e.velocities)):
            raise IntegrityError(f"non-finite particle velocities at t = {i * h:.6g}")
        if i % pc["snapshot_stride"] == 0 or i == steps:
            snaps.append(e)
            times.append(i * h)
            write_snapshot(snap_dir / f"rho_{len(snaps) - 1:05d}.bin", pt.empirical_density(e, g, pc["bandwidth"]), i * h)
    pt.write_trajectory(out / "trajectory.csv", snaps, times, pc["sample"])
    # pair forces cancel, so total momentum only feels the friction
    expected = p0 * math.exp(-pc["friction"] * steps * h)
    drift = float(np.max(np.abs(e.momentum() - expected)))
    return Outcome({"particles": e.count, "momentum_drift": drift, "particle_mass": mass})


def cmd_micro_macro(cfg: RunConfig, out: Path, args) -> Outcome:
    pc = cfg.particles
    mm = pt.MicroMacroConfig(
        grid=cfg.grid,
        data=cfg.initial_data,
        epsilon=pc["epsilon"],
        friction=pc["friction"],
        t_final=pc["t_final"],
        dt=pc["dt"],
        bandwidth=pc["bandwidth"],
        counts=pc["counts"],
        seed=pc["seed"],
    )
    try:
        res = pt.micro_macro_compare(mm)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_csv(out / "error_vs_N.csv", ("N", "l1_error"), res.rows())
    ok = res.strictly_decreasing
    return Outcome(
        {"errors": res.errors, "mollifier_floor": res.floor, **res.metadata},
        ok,
        "" if ok else "L1 error is not strictly decreasing in N",
    )


def cmd_verify_kernel(cfg: RunConfig, out: Path, args) -> Outcome:
    k = cfg.kernel
    xi = np.geomspace(1e-3, 1e3, 601) / k.epsilon
    if k.kind == "triangle":
        raise ConfigError("the tent kernel symbol changes sign and is not covered by the hypothesis check")
    rep = verify_hypotheses(k, xi)
    report = {
        "kind": k.kind,
        "range": rep.range_ok,
        "monotone": rep.monotone_ok,
        "doubling": rep.doubling_ok,
        "derivative_bound": rep.derivative_bound_ok,
        "kappa": rep.kappa,
        "min_doubling_ratio": rep.worst_ratio,
        "max_doubling_ratio": rep.upper_ratio,
        "derivative_constant": rep.derivative_constant,
    }
    with open(out / "kernel_check.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    for key in ("range", "monotone", "doubling", "derivative_bound"):
        print(f"{key:18s} {'ok' if report[key] else 'FAILED'}")
    return Outcome(report, rep.all_ok, "" if rep.all_ok else "kernel hypotheses fail on the sampled frequencies")


COMMANDS: Dict[str, Callable] = {
    "simulate": cmd_simulate,
    "linear-modes": cmd_linear_modes,
    "eps-limit": cmd_eps_limit,
    "friction-limit": cmd_friction_limit,
    "pme-limit": cmd_pme_limit,
    "combined-limit": cmd_combined_limit,
    "particles": cmd_particles,
    "micro-macro": cmd_micro_macro,
    "verify-kernel": cmd_verify_kernel,
}


# --- driver ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuzzy-euler", description="Damped Euler flows with nonlocal pressure.")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML run configuration (defaults are used when omitted)")
        sp.add_argument("--out", help="output directory (default: out/<subcommand>)")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (env FUZZY_EULER_JOBS)")
        sp.add_argument("--gate", action="store_true", help="exit 4 when the acceptance check fails")
        if name == "simulate":
            sp.add_argument("--system", choices=SYSTEMS, default="fuzzy")
    return p


def _write_manifest(out: Path, args, cfg: Optional[RunConfig], status: str, outcome: Optional[Outcome], reason: str):
    manifest = {
        "command": args.command,
        "system": getattr(args, "system", None),
        "status": status,
        "reason": reason,
        "build_version": build_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "jobs": getattr(args, "jobs", None),
        "config": cfg.normalized if cfg is not None else None,
        "seeds": {"initial_data": cfg.initial_data.seed, "particles": cfg.particles["seed"]} if cfg else None,
        "summary": outcome.summary if outcome else {},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
    if cfg is not None:
        (out / "config.toml").write_text(dump_config(cfg))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else Path("out") / args.command
    cfg = None
    outcome = None
    try:
        out.mkdir(parents=True, exist_ok=True)
        args.jobs = resolve_jobs(args.jobs)
        cfg = load_config(args.config) if args.config else default_config()
        outcome = COMMANDS[args.command](cfg, out, args)
    except (ConfigError, StepSizeError) as exc:
        return _fail(out, args, cfg, EXIT_CONFIG, "config-error", str(exc))
    except (IntegrityError, PositivityError, asy.StudyAborted) as exc:
        return _fail(out, args, cfg, EXIT_INTEGRITY, "integrity-abort", str(exc))
    if args.gate and not outcome.gate_ok:
        _write_manifest(out, args, cfg, "gate-failed", outcome, outcome.gate_reason)
        print(f"fuzzy-euler: gate failed: {outcome.gate_reason}", file=sys.stderr)
        return EXIT_GATE
    _write_manifest(out, args, cfg, "ok", outcome, "")
    return EXIT_OK


def _fail(out: Path, args, cfg, code: int, status: str, reason: str) -> int:
    reason = reason.splitlines()[0] if reason else status
    try:
        _write_manifest(out, args, cfg, status, None, reason)
    except OSError:
        pass
    print(f"fuzzy-euler: {reason}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
