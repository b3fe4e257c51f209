"""Drivers for the three asymptotic regimes: eps -> 0 (classical pressure),
lam -> infinity (relaxation to the regularised porous-media equation under the
diffusive rescaling), and the porous-media eps -> 0 and combined limits.

Every study is a pure function of its inputs.  Independent runs may execute
in a process pool; results are always gathered in parameter order.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .errors import FuzzyEulerError
from .hydro import SimState, SolverConfig, admissible_dt, advance, kernel_symbol, prepare, run_porous
from .initial_data import InitialData
from .kernels import KernelFamily
from .littlewood_paley import besov_norm, block_norms_from_energy, build_partition, class_mask
from .spectral import GridSpec, SpectralField


class StudyAborted(FuzzyEulerError):
    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class StudySetup:
    """Shared inputs of a study: grid, initial data and kernel template.

    ``kernel`` supplies m and nu0; each study overrides epsilon.  ``t_end``
    and ``dt`` are in the time variable natural to the study (diffusive time
    for the friction and porous-media studies).
    """

    grid: GridSpec
    data: InitialData
    kernel: KernelFamily = field(default_factory=lambda: KernelFamily.default(1))
    friction: float = 1.0
    t_end: float = 20.0
    dt: float = 0.01
    snapshots: int = 80
    jobs: int = 1

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.snapshots + 1)


@dataclass
class RateFit:
    parameter_values: List[float]
    errors: List[float]
    slope: float
    intercept: float
    r_squared: float
    degenerate: bool = False
    note: str = ""

    def row(self) -> Tuple:
        return (self.slope, self.intercept, self.r_squared, int(self.degenerate), self.note)


FIT_HEADER = ("slope", "intercept", "r_squared", "degenerate", "note")


def fit_rate(params: Sequence[float], errors: Sequence[float], floor: float = 1e-11) -> RateFit:
    """Least-squares slope of log(error) against log(parameter).

    Fits where every error sits at the numerical floor (or any error is not
    positive) are flagged degenerate and carry no slope.
    """
    p = np.asarray(params, dtype=float)
    e = np.asarray(errors, dtype=float)
    if p.shape != e.shape or p.size < 3:
        raise ValueError("a rate fit needs at least three (parameter, error) pairs")
    if np.any(p <= 0):
        raise ValueError("parameters must be positive")
    if np.any(~np.isfinite(e)) or np.any(e <= 0) or np.all(e < floor):
        return RateFit(list(p), list(e), math.nan, math.nan, math.nan, True, "errors at numerical floor")
    x, y = np.log(p), np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss if ss > 0 else 1.0
    note = "some errors at numerical floor" if np.any(e < floor) else ""
    return RateFit(list(p), list(e), float(slope), float(intercept), r2, False, note)


def _pool_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def _trajectory(s0: SimState, cfg: SolverConfig, times: Sequence[float], max_dt: float) -> List[SimState]:
    out = [s0]
    s = s0
    for t in times[1:]:
        s = advance(s, cfg, float(t), max_dt)
        out.append(s)
    return out


def _difference_norm(x: np.ndarray, y: np.ndarray, grid: GridSpec, sigma: float) -> float:
    return besov_norm(SpectralField(grid, x - y), sigma).total


# --- eps -> 0 ----------------------------------------------------------------


def _eps_worker(args):
    setup, eps = args
    s0 = prepare(setup.data.build(setup.grid))
    kernel = None if eps is None else replace(setup.kernel, epsilon=eps)
    cfg = SolverConfig(friction=setup.friction, dt=setup.dt, t_end=setup.t_end, kernel=kernel)
    dt = min(setup.dt, admissible_dt(s0, cfg))
    try:
        traj = _trajectory(s0, cfg, setup.times(), dt)
    except FuzzyEulerError as exc:
        return eps, str(exc), None
    return eps, "", [(s.a.coeffs, s.u.coeffs) for s in traj]


@dataclass
class EpsStudyResult:
    eps: List[float]
    errors_a: List[float]
    errors_u: List[float]
    fit_a: RateFit
    fit_u: RateFit
    horizon: float
    decay_factor: float
    floor_saturated: bool

    def rows(self):
        return [(e, ea, eu) for e, ea, eu in zip(self.eps, self.errors_a, self.errors_u)]


EPS_HEADER = ("epsilon", "err_a_Bd2", "err_u_Bd2")


def eps_limit_study(setup: StudySetup, eps_list: Sequence[float], force_identity: bool = False) -> EpsStudyResult:
    """sup_t ||a^eps - a||_{B^{d/2}} and the same for u, against the classical run.

    ``force_identity`` runs every "eps" with K^ == 1, a self-comparison that
    must come out degenerate.
    """
    eps = [float(e) for e in eps_list]
    if len(eps) < 3 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be strictly decreasing with at least three values")
    jobs = [(setup, None)] + [(setup, None if force_identity else e) for e in eps]
    results = _pool_map(_eps_worker, jobs, setup.jobs)
    failed = [(e, msg) for e, msg, tr in results if tr is None]
    if failed:
        raise StudyAborted(f"runs aborted: {failed}", partial=results)
    ref = results[0][2]
    g = setup.grid
    d = g.dimension
    ea, eu, peak_final = [], [], []
    for _, _, tr in results[1:]:
        da = [_difference_norm(x[0], r[0], g, d / 2) for x, r in zip(tr, ref)]
        du = [_difference_norm(x[1], r[1], g, d / 2) for x, r in zip(tr, ref)]
        ea.append(max(da))
        eu.append(max(du))
        peak_final.append(max(da) / da[-1] if da[-1] > 0 else math.inf)
    fa, fu = fit_rate(eps, ea), fit_rate(eps, eu)
    return EpsStudyResult(
        eps, ea, eu, fa, fu, setup.t_end, float(min(peak_final)), bool(fa.degenerate or min(ea) < 1e-11)
    )


# --- lam -> infinity ---------------------------------------------------------


@dataclass
class FrictionRun:
    friction: float
    density_error: float  # sup_t ||rho_check - r||_{B^{d/2-1}}
    density_error_d2: float  # same in B^{d/2}
    damped_integral: float  # int ||u_check + grad K rho_check||_{B^{d/2}} dt_check
    darcy_integral: float  # int ||u_check + grad K r||_{B^{d/2}} dt_check


@dataclass
class FrictionStudyResult:
    runs: List[FrictionRun]
    fit_density: RateFit
    fit_damped: RateFit
    fit_darcy: RateFit
    horizon: float

    def rows(self):
        return [astuple_run(r) for r in self.runs]


FRICTION_HEADER = ("friction", "err_rho_Bd2m1", "err_rho_Bd2", "int_damped_Bd2", "int_darcy_Bd2")


def astuple_run(r: FrictionRun):
    return (r.friction, r.density_error, r.density_error_d2, r.damped_integral, r.darcy_integral)


LAYER_WIDTH = 20.0  # initial layer resolved up to t = LAYER_WIDTH / lam (physical time)
LAYER_STEPS_PER_UNIT = 50.0  # lam * dt = 1/50 inside the layer


def _layer_time(lam: float) -> float:
    return LAYER_WIDTH / lam**2  # in diffusive time


def _porous_reference(setup: StudySetup, r0: SpectralField, kernel, times, regularized=True):
    tt, R = run_porous(r0, kernel, setup.t_end, regularized=regularized, dt=setup.dt / 4, snapshot_times=times[1:])
    return {round(float(t), 12): r for t, r in zip(tt, R)}


def _friction_worker(args):
    setup, lam, kernel, ref_times = args
    g = setup.grid
    s0 = prepare(setup.data.build(g))
    cfg = SolverConfig(friction=lam, dt=setup.dt * lam, t_end=setup.t_end * lam, kernel=kernel)
    coarse = min(setup.dt * lam, admissible_dt(s0, cfg))
    t_layer = _layer_time(lam) * lam
    try:
        states = advance(s0, cfg, t_layer, 1.0 / (LAYER_STEPS_PER_UNIT * lam), record=True)
        s = states[-1]
        for td in ref_times:
            if td * lam <= s.t + 1e-12:
                continue
            s = advance(s, cfg, td * lam, coarse)
            states.append(s)
    except FuzzyEulerError as exc:
        return lam, str(exc), None
    return lam, "", [(s.t / lam, s.a.coeffs, s.u.coeffs) for s in states]


def _interpolate(ts: np.ndarray, cs: list, t: float) -> np.ndarray:
    i = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
    w = (t - ts[i]) / (ts[i + 1] - ts[i])
    return (1 - w) * cs[i] + w * cs[i + 1]


def friction_limit_study(
    setup: StudySetup, lambda_list: Sequence[float], eps_fixed: float
) -> FrictionStudyResult:
    """Relaxation of the diffusively rescaled density to the regularised porous-media flow.

    ``setup.t_end`` and ``setup.dt`` are in diffusive time.  For each lam the
    hyperbolic run resolves the initial layer (|t| < 20/lam) with lam*dt = 1/50
    and then proceeds with the diffusive step dt (physical step lam*dt).  The
    porous-media reference uses dt/4.  The integrals over the rescaled damped
    mode use the trapezoid rule over all recorded states.
    """
    lams = [float(x) for x in lambda_list]
    if len(lams) < 3 or any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("lambda_list must be strictly increasing with at least three values")
    g = setup.grid
    d = g.dimension
    kernel = replace(setup.kernel, epsilon=eps_fixed)
    base_times = list(setup.times())
    all_times = sorted(set(base_times + [_layer_time(l) for l in lams]))
    s0 = prepare(setup.data.build(g))
    r0 = SpectralField(g, s0.a.coeffs.copy())
    r0.coeffs[(0,) * (d + 1)] += 1.0
    ref = _porous_reference(setup, r0, kernel, all_times)
    K = kernel_symbol(g, kernel)

    results = _pool_map(_friction_worker, [(setup, l, kernel, base_times[1:]) for l in lams], setup.jobs)
    failed = [(l, msg) for l, msg, tr in results if tr is None]
    if failed:
        raise StudyAborted(f"runs aborted: {failed}", partial=results)

    ref_t = np.array(sorted(ref))
    ref_c = [ref[t].coeffs for t in ref_t]
    runs = []
    zero = (0,) * d
    for lam, _, tr in results:
        e1 = e2 = 0.0
        damped, darcy, ts = [], [], []
        for td, ah, uh in tr:
            u_check = lam * uh
            damped.append(besov_norm(SpectralField(g, u_check + 1j * g.xi_deriv * (K * ah[0])), d / 2).total)
            ts.append(td)
            key = round(td, 12)
            r = ref.get(key)
            rc = r.coeffs if r is not None else _interpolate(ref_t, ref_c, td)
            darcy.append(besov_norm(SpectralField(g, u_check + 1j * g.xi_deriv * (K * rc[0])), d / 2).total)
            if r is None:
                continue
            diff = ah - r.coeffs
            diff[(0,) + zero] = 0.0
            e1 = max(e1, besov_norm(SpectralField(g, diff), d / 2 - 1).total)
            e2 = max(e2, besov_norm(SpectralField(g, diff), d / 2).total)
        runs.append(FrictionRun(lam, e1, e2, float(np.trapezoid(damped, ts)), float(np.trapezoid(darcy, ts))))
    return FrictionStudyResult(
        runs,
        fit_rate(lams, [r.density_error for r in runs]),
        fit_rate(lams, [r.damped_integral for r in runs]),
        fit_rate(lams, [r.darcy_integral for r in runs]),
        setup.t_end,
    )


# --- porous-media eps -> 0 ----------------------------------------------------


@dataclass
class PorousStudyResult:
    eps: List[float]
    errors: List[float]
    fit: RateFit
    strictly_decreasing: bool

    def rows(self):
        return list(zip(self.eps, self.errors))


PME_HEADER = ("epsilon", "err_r_Bd2")


def _density0(setup: StudySetup) -> SpectralField:
    s0 = prepare(setup.data.build(setup.grid))
    r0 = SpectralField(setup.grid, s0.a.coeffs.copy())
    r0.coeffs[(0,) * (setup.grid.dimension + 1)] += 1.0
    return r0


def _pme_worker(args):
    setup, eps = args
    r0 = _density0(setup)
    kernel = None if eps is None else replace(setup.kernel, epsilon=eps)
    tt, R = run_porous(r0, kernel, setup.t_end, regularized=eps is not None, dt_fraction=0.5, snapshot_times=setup.times()[1:])
    return eps, [r.coeffs for r in R]


def pme_consistency_study(setup: StudySetup, eps_list: Sequence[float]) -> PorousStudyResult:
    """sup_t ||r_eps - n||_{B^{d/2}}: regularised against classical porous media.

    No rate is claimed for this limit; the fitted slope is informational.
    """
    eps = [float(e) for e in eps_list]
    if len(eps) < 3 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be strictly decreasing with at least three values")
    res = _pool_map(_pme_worker, [(setup, None)] + [(setup, e) for e in eps], setup.jobs)
    ref = res[0][1]
    g = setup.grid
    errs = [max(_difference_norm(x, y, g, g.dimension / 2) for x, y in zip(tr, ref)) for _, tr in res[1:]]
    dec = all(b < a for a, b in zip(errs, errs[1:]))
    return PorousStudyResult(eps, errs, fit_rate(eps, errs), dec)


# --- combined limit ------------------------------------------------------------


def sum_space_norm(z: SpectralField, s_low: float, s_high: float) -> float:
    """Dyadic evaluation of the B^{s_low} + B^{s_high} norm (s_low < s_high).

    Each block is assigned to whichever space weighs it less, which is the
    infimum over decompositions made of whole dyadic blocks.
    """
    part = build_partition(z.grid)
    js = np.array(list(part.indices), dtype=float)
    b = block_norms_from_energy(z.grid, np.sum(np.abs(z.coeffs) ** 2, axis=0))
    return float(np.sum(np.minimum(2.0 ** (js * s_low), 2.0 ** (js * s_high)) * b))


def split_norm(z: SpectralField, kernel: KernelFamily, s_low: float, s_high: float) -> float:
    """Low-class blocks in B^{s_low}, high-class blocks in B^{s_high}."""
    part = build_partition(z.grid)
    js = np.array(list(part.indices), dtype=float)
    low = class_mask(z.grid, kernel)
    b = block_norms_from_energy(z.grid, np.sum(np.abs(z.coeffs) ** 2, axis=0))
    return float(np.sum(np.where(low, 2.0 ** (js * s_low), 2.0 ** (js * s_high)) * b))


@dataclass
class CombinedRow:
    friction: float
    epsilon: float
    error_sum_space: float
    error_split: float
    error_low_norm: float


@dataclass
class CombinedStudyResult:
    rows_: List[CombinedRow]
    strictly_decreasing: bool

    def rows(self):
        return [(r.friction, r.epsilon, r.error_sum_space, r.error_split, r.error_low_norm) for r in self.rows_]


COMBINED_HEADER = ("friction", "epsilon", "err_sum_space", "err_split_heuristic", "err_Bd2m1")


def combined_limit_study(setup: StudySetup, pairs: Sequence[Tuple[float, float]]) -> CombinedStudyResult:
    """Rescaled fuzzy-Euler density against the classical porous-media solution n."""
    pairs = [(float(l), float(e)) for l, e in pairs]
    if len(pairs) < 3:
        raise ValueError("need at least three (lam, eps) pairs")
    g = setup.grid
    d = g.dimension
    times = list(setup.times())
    r0 = _density0(setup)
    tt, N = run_porous(r0, None, setup.t_end, regularized=False, dt_fraction=0.5, snapshot_times=times[1:])
    ref = {round(float(t), 12): n for t, n in zip(tt, N)}
    out = []
    for lam, eps in pairs:
        kernel = replace(setup.kernel, epsilon=eps)
        _, msg, tr = _friction_worker((setup, lam, kernel, times[1:]))
        if tr is None:
            raise StudyAborted(f"run (lam={lam}, eps={eps}) aborted: {msg}")
        es = esp = el = 0.0
        for td, ah, _ in tr:
            n = ref.get(round(td, 12))
            if n is None:
                continue
            diff = ah - n.coeffs
            diff[(0,) * (d + 1)] = 0.0
            z = SpectralField(g, diff)
            es = max(es, sum_space_norm(z, d / 2 - 1, d / 2))
            esp = max(esp, split_norm(z, kernel, d / 2 - 1, d / 2))
            el = max(el, besov_norm(z, d / 2 - 1).total)
        out.append(CombinedRow(lam, eps, es, esp, el))
    dec = all(b.error_sum_space < a.error_sum_space for a, b in zip(out, out[1:]))
    return CombinedStudyResult(out, dec)


# --- output ----------------------------------------------------------------------


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])


def write_fits(path, fits: Dict[str, RateFit]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("quantity",) + FIT_HEADER)
        for name, f in fits.items():
            w.writerow((name,) + tuple(repr(x) if isinstance(x, float) else x for x in f.row()))
