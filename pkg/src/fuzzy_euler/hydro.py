"""Pseudo-spectral solvers for the damped Euler system with nonlocal pressure
and for the (regularised) porous-media equation.

Unknowns are the density perturbation ``a = rho - 1`` and the velocity ``u``:

    a_t = -div((1 + a) u)
    u_t = -u . grad u - lam u - N(K * rho) grad K * a

with ``N == 1`` for the plain law.  The friction term is the only stiff linear
part and it is scalar, so it is integrated exactly by exponential time
differencing (ETDRK4, default) or by an integrating factor (IF-RK4).  All
quadratic products are formed on the grid and dealiased by the 2/3 rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import IntegrityError, PositivityError, StepSizeError
from .kernels import KernelFamily, symbol_K
from .spectral import GridSpec, SpectralField, forward_array, inverse_array, resample

INTEGRATORS = ("etdrk4", "ifrk4")
ADVECTIVE_CFL = 0.5
ACOUSTIC_CFL = 2.0


@dataclass
class SimState:
    a: SpectralField
    u: SpectralField
    t: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.a.grid

    def density(self) -> np.ndarray:
        return 1.0 + inverse_array(self.grid, self.a.coeffs[0])

    def velocity(self) -> np.ndarray:
        return inverse_array(self.grid, self.u.coeffs)

    def copy(self) -> "SimState":
        return SimState(self.a.copy(), self.u.copy(), self.t)


@dataclass(frozen=True)
class PressureLaw:
    """Pressure closure: ``plain`` (N == 1) or ``general`` with N(s) = s^(gamma - 2).

    Both normalisations N(1) = 1 and N'(1) = gamma - 2 hold; gamma = 3 gives
    N'(1) = 1, and gamma = 2 reduces the general law to the plain one.
    """

    kind: str = "plain"
    gamma: float = 2.0

    def __post_init__(self):
        if self.kind not in ("plain", "general"):
            raise ValueError(f"pressure kind must be 'plain' or 'general', got {self.kind!r}")

    def n_function(self, s: np.ndarray) -> np.ndarray:
        if self.kind == "plain":
            return np.ones_like(s)
        return np.power(s, self.gamma - 2.0)


@dataclass
class SolverConfig:
    friction: float = 1.0
    dt: float = 1e-2
    t_end: float = 1.0
    kernel: Optional[KernelFamily] = None  # None: classical pressure (K^ == 1)
    pressure: PressureLaw = field(default_factory=PressureLaw)
    integrator: str = "etdrk4"
    snapshot_stride: int = 10
    adaptive: bool = False

    def __post_init__(self):
        if self.friction < 0:
            raise ValueError("friction must be nonnegative")
        if not self.dt > 0 or not self.t_end >= 0:
            raise ValueError("dt must be positive and t_end nonnegative")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.kernel is not None and self.kernel.kind == "identity":
            self.kernel = None


def kernel_symbol(grid: GridSpec, kernel: Optional[KernelFamily]) -> np.ndarray:
    if kernel is None:
        return np.ones(grid.spectral_shape)
    return symbol_K(kernel, grid.xi_abs)


# --- state checks -----------------------------------------------------------


def check_state(s: SimState) -> None:
    if not (np.all(np.isfinite(s.a.coeffs)) and np.all(np.isfinite(s.u.coeffs))):
        raise IntegrityError(f"non-finite values in state at t = {s.t:.6g}")
    rho_min = float(s.density().min())
    if rho_min <= 0:
        raise PositivityError(f"density lost positivity at t = {s.t:.6g} (min rho = {rho_min:.3g})")


# --- right-hand sides -------------------------------------------------------


class _Operators:
    """Grid-level arrays reused by every right-hand-side evaluation."""

    def __init__(self, grid: GridSpec, kernel: Optional[KernelFamily]):
        self.grid = grid
        self.ixi = 1j * grid.xi_deriv
        self.K = kernel_symbol(grid, kernel)
        self.mask = grid.dealias_mask

    def phys(self, c):
        return inverse_array(self.grid, c)

    def spec(self, v):
        return forward_array(self.grid, v) * self.mask


def _nonlinear(ops: _Operators, ah: np.ndarray, uh: np.ndarray, pressure: PressureLaw):
    """Everything but the friction term; ah has shape (1, ...), uh (d, ...)."""
    a = ops.phys(ah[0])
    u = ops.phys(uh)
    rho = 1.0 + a
    da = -np.sum(ops.ixi * ops.spec(rho * u), axis=0)

    grad_u = ops.phys(ops.ixi[None] * uh[:, None])  # (d, d, ...): d_j u_i at [i, j]
    adv = np.sum(u[None] * grad_u, axis=1)
    Ka = ops.K * ah[0]
    gKa = ops.ixi * Ka
    if pressure.kind == "plain":
        du = -ops.spec(adv) - gKa * ops.mask
    else:
        Krho = 1.0 + ops.phys(Ka)
        nfac = pressure.n_function(Krho)
        du = -ops.spec(adv + nfac * ops.phys(gKa))
    return da[None], du


def rhs_fuzzy_euler(s: SimState, cfg: SolverConfig):
    """(da/dt, du/dt) as SpectralFields, friction included."""
    check_state(s)
    ops = _Operators(s.grid, cfg.kernel)
    da, du = _nonlinear(ops, s.a.coeffs, s.u.coeffs, cfg.pressure)
    du = du - cfg.friction * s.u.coeffs
    return SpectralField(s.grid, da), SpectralField(s.grid, du)


def linear_rhs(s: SimState, cfg: SolverConfig):
    """Linearisation about (1, 0): (-div u, -lam u - grad K a)."""
    ops = _Operators(s.grid, cfg.kernel)
    da = -np.sum(ops.ixi * s.u.coeffs, axis=0, keepdims=True)
    du = -cfg.friction * s.u.coeffs - ops.ixi * (ops.K * s.a.coeffs[0])
    return SpectralField(s.grid, da), SpectralField(s.grid, du)


def rhs_porous(r: SpectralField, kernel: Optional[KernelFamily], regularized: bool = True) -> SpectralField:
    """div(r grad K*r), or div(r grad r) when ``regularized`` is False."""
    grid = r.grid
    rv = inverse_array(grid, r.coeffs[0])
    if np.any(rv < -1e-12 * max(1.0, float(np.abs(rv).max()))):
        raise PositivityError("porous-media density is negative")
    ops = _Operators(grid, kernel if regularized else None)
    flux = rv * ops.phys(ops.ixi * (ops.K * r.coeffs[0]))
    return SpectralField(grid, np.sum(ops.ixi * ops.spec(flux), axis=0, keepdims=True))


# --- time stepping ----------------------------------------------------------


def _phi_coefficients(z: float, h: float, contour_points: int = 64):
    """ETDRK4 weights for the scalar linear rate z = L h, by a contour mean."""
    roots = np.exp(1j * np.pi * (np.arange(1, contour_points + 1) - 0.5) / contour_points)
    w = z + roots
    ew = np.exp(w)
    Q = h * np.mean((np.exp(w / 2) - 1) / w).real
    f1 = h * np.mean((-4 - w + ew * (4 - 3 * w + w**2)) / w**3).real
    f2 = h * np.mean((2 + w + ew * (-2 + w)) / w**3).real
    f3 = h * np.mean((-4 - 3 * w - w**2 + ew * (4 - w)) / w**3).real
    return math.exp(z), math.exp(z / 2), Q, f1, f2, f3


def admissible_dt(s: SimState, cfg: SolverConfig) -> float:
    """Largest stable step: advective CFL and an acoustic bound for the explicit pressure."""
    grid = s.grid
    umax = float(np.max(np.abs(s.velocity()))) if s.u.coeffs.any() else 0.0
    K = kernel_symbol(grid, cfg.kernel)
    xi = grid.xi_abs[grid.dealias_mask]
    Kv = K[grid.dealias_mask]
    wave = xi * np.sqrt(Kv)  # |xi| sqrt(K^): frequency of the explicit pressure coupling
    rho_max = float(np.max(s.density()))
    if cfg.pressure.kind == "general":
        Krho = 1.0 + inverse_array(grid, K * s.a.coeffs[0])
        rho_max *= float(np.max(cfg.pressure.n_function(Krho)))
    c = float(np.max(wave)) * math.sqrt(max(rho_max, 1.0))
    bounds = [ACOUSTIC_CFL / c if c > 0 else math.inf]
    if umax > 0:
        bounds.append(ADVECTIVE_CFL * grid.length / (grid.points * umax))
    return min(bounds)


class Stepper:
    """Reusable one-step map for a fixed (grid, config, dt)."""

    def __init__(self, grid: GridSpec, cfg: SolverConfig, dt: float):
        self.grid = grid
        self.cfg = cfg
        self.dt = dt
        self.ops = _Operators(grid, cfg.kernel)
        lam = cfg.friction
        if cfg.integrator == "etdrk4":
            self.cu = _phi_coefficients(-lam * dt, dt)
            self.ca = _phi_coefficients(0.0, dt)
        else:
            self.eh = math.exp(-lam * dt / 2)

    def _N(self, ah, uh):
        return _nonlinear(self.ops, ah, uh, self.cfg.pressure)

    def __call__(self, ah: np.ndarray, uh: np.ndarray):
        if self.cfg.integrator == "etdrk4":
            return self._etdrk4(ah, uh)
        return self._ifrk4(ah, uh)

    def _etdrk4(self, ah, uh):
        Eu, E2u, Qu, f1u, f2u, f3u = self.cu
        Ea, E2a, Qa, f1a, f2a, f3a = self.ca
        Na, Nu = self._N(ah, uh)
        aa, au = E2a * ah + Qa * Na, E2u * uh + Qu * Nu
        Naa, Nau = self._N(aa, au)
        ba, bu = E2a * ah + Qa * Naa, E2u * uh + Qu * Nau
        Nba, Nbu = self._N(ba, bu)
        ca_, cu_ = E2a * aa + Qa * (2 * Nba - Na), E2u * au + Qu * (2 * Nbu - Nu)
        Nca, Ncu = self._N(ca_, cu_)
        a_new = Ea * ah + f1a * Na + 2 * f2a * (Naa + Nba) + f3a * Nca
        u_new = Eu * uh + f1u * Nu + 2 * f2u * (Nau + Nbu) + f3u * Ncu
        return a_new, u_new

    def _ifrk4(self, ah, uh):
        h, e = self.dt, self.eh
        k1a, k1u = self._N(ah, uh)
        k2a, k2u = self._N(ah + 0.5 * h * k1a, e * (uh + 0.5 * h * k1u))
        k3a, k3u = self._N(ah + 0.5 * h * k2a, e * uh + 0.5 * h * k2u)
        k4a, k4u = self._N(ah + h * k3a, e * e * uh + h * e * k3u)
        a_new = ah + h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        u_new = e * e * uh + h / 6 * (e * e * k1u + 2 * e * (k2u + k3u) + k4u)
        return a_new, u_new


def step(s: SimState, cfg: SolverConfig, dt: Optional[float] = None, check: bool = True) -> SimState:
    """Advance one step of size ``dt`` (default ``cfg.dt``)."""
    dt = cfg.dt if dt is None else dt
    if check:
        check_state(s)
        bound = admissible_dt(s, cfg)
        if dt > bound * (1 + 1e-12):
            raise StepSizeError(f"dt = {dt:.6g} violates the stability bound", bound)
    a, u = Stepper(s.grid, cfg, dt)(s.a.coeffs, s.u.coeffs)
    return SimState(SpectralField(s.grid, a), SpectralField(s.grid, u), s.t + dt)


@dataclass
class TimeSeries:
    states: List[SimState]
    rows: list
    status: str = "ok"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def prepare(s0: SimState) -> SimState:
    """Dealiased copy of the initial data."""
    m = s0.grid.dealias_mask
    return SimState(SpectralField(s0.grid, s0.a.coeffs * m), SpectralField(s0.grid, s0.u.coeffs * m), s0.t)


def run(
    s0: SimState,
    cfg: SolverConfig,
    diagnostics: bool = True,
    sigma: Optional[float] = None,
    keep_states: bool = True,
    on_snapshot: Optional[Callable[[SimState], None]] = None,
) -> TimeSeries:
    """Advance to ``cfg.t_end`` recording a snapshot every ``snapshot_stride`` steps.

    The nominal step is shrunk so that an integer number of steps lands on
    ``t_end``.  With ``cfg.adaptive`` each snapshot interval is subdivided
    further when the stability bound requires it; otherwise a violation raises
    :class:`StepSizeError`.  Positivity or integrity failures end the run with
    a nonzero status and the snapshots collected so far.
    """
    from .diagnostics import RunningIntegrals, assemble_row

    s = prepare(s0)
    n_steps = max(1, math.ceil(cfg.t_end / cfg.dt - 1e-9)) if cfg.t_end > 0 else 0
    dt = cfg.t_end / n_steps if n_steps else cfg.dt
    stride = cfg.snapshot_stride
    check_state(s)
    bound = admissible_dt(s, cfg)
    if dt > bound * (1 + 1e-12) and not cfg.adaptive:
        raise StepSizeError(f"dt = {dt:.6g} violates the stability bound", bound)

    integrals = RunningIntegrals()
    states, rows = [], []

    def record(state):
        if keep_states:
            states.append(state)
        else:
            states[:] = [state]
        if diagnostics:
            rows.append(assemble_row(state, cfg, integrals, sigma=sigma))
        if on_snapshot is not None:
            on_snapshot(state)

    record(s)
    steppers = {}
    done = 0
    t0 = s.t
    try:
        while done < n_steps:
            nint = min(stride, n_steps - done)
            interval = nint * dt
            bound = admissible_dt(s, cfg)
            sub = nint
            if interval / sub > bound * (1 + 1e-12):
                if not cfg.adaptive:
                    raise StepSizeError(f"dt = {dt:.6g} violates the stability bound at t = {s.t:.6g}", bound)
                sub = math.ceil(interval / bound)
            h = interval / sub
            if h not in steppers:
                steppers[h] = Stepper(s.grid, cfg, h)
            stp = steppers[h]
            ah, uh = s.a.coeffs, s.u.coeffs
            for _ in range(sub):
                ah, uh = stp(ah, uh)
            done += nint
            s = SimState(SpectralField(s.grid, ah), SpectralField(s.grid, uh), t0 + done * dt)
            check_state(s)
            record(s)
    except (IntegrityError, PositivityError) as exc:
        return TimeSeries(states, rows, status=type(exc).__name__, message=str(exc))
    return TimeSeries(states, rows)


def damped_mode(s: SimState, cfg: SolverConfig) -> SpectralField:
    """w = u + grad K*a / lam as an exact spectral identity (lam = 0 treated as 1)."""
    lam = cfg.friction if cfg.friction > 0 else 1.0
    K = kernel_symbol(s.grid, cfg.kernel)
    w = s.u.coeffs + 1j * s.grid.xi_deriv * (K * s.a.coeffs[0]) / lam
    return SpectralField(s.grid, w)


def rescale_hyperbolic(s: SimState, factor: int, inverse: bool = False) -> SimState:
    """(a, u)(t, x) -> (a, u)(t/lam, x/lam) on the torus dilated by lam.

    The state at time t for friction lam and width eps becomes the state at
    time lam*t of the problem with friction 1 and width lam*eps, on a torus of
    side lam*L sampled with lam*N points (same spacing).  Fourier coefficients
    keep their integer index, so the map is exact.  ``inverse`` undoes it.
    """
    f = int(factor)
    if f != factor or f < 1 or f & (f - 1):
        raise ValueError(f"hyperbolic rescaling needs a power-of-two factor, got {factor}")
    g = s.grid
    if inverse:
        if g.points % f:
            raise ValueError("grid too coarse to undo this rescaling")
        new = GridSpec(g.dimension, g.points // f, g.length / f)
        t = s.t / f
    else:
        new = GridSpec(g.dimension, g.points * f, g.length * f)
        t = s.t * f
    return SimState(resample(s.a, new), resample(s.u, new), t)


def rescale_diffusive(s: SimState, factor: float) -> SimState:
    """(rho, u)(t, x) -> (rho, lam u)(lam t, x): diffusive time t_check = t/lam."""
    if not factor > 0:
        raise ValueError("diffusive factor must be positive")
    return SimState(s.a.copy(), s.u * factor, s.t / factor)


def energy(s: SimState, cfg: SolverConfig):
    """(kinetic, potential, dissipation rate).

    Potential energy is measured relative to the uniform background, i.e.
    computed from the mean-free part of a.
    """
    g = s.grid
    rho = s.density()
    u = s.velocity()
    u2 = np.sum(u**2, axis=0) if u.ndim > g.dimension else u**2
    mass_u2 = g.volume * float(np.mean(rho * u2))
    K = kernel_symbol(g, cfg.kernel)
    ah = s.a.coeffs[0].copy()
    ah[(0,) * g.dimension] = 0.0
    pot = 0.5 * g.volume * float(np.sum(g.parseval_weights * K * np.abs(ah) ** 2))
    return 0.5 * mass_u2, pot, cfg.friction * mass_u2


# --- porous-media solver ----------------------------------------------------


def porous_dt(r: SpectralField, kernel: Optional[KernelFamily], regularized: bool = True) -> float:
    """Explicit RK4 bound dt <= 0.25 pi^2 / (max |xi|^2 K^ * max r)."""
    g = r.grid
    K = kernel_symbol(g, kernel if regularized else None)
    rate = float(np.max((g.xi_abs**2 * K)[g.dealias_mask]))
    rmax = float(np.max(inverse_array(g, r.coeffs[0])))
    return 0.25 * math.pi**2 / (rate * max(rmax, 1e-300))


def run_porous(
    r0: SpectralField,
    kernel: Optional[KernelFamily],
    t_end: float,
    regularized: bool = True,
    dt: Optional[float] = None,
    snapshot_times: Optional[Sequence[float]] = None,
    dt_fraction: float = 1.0,
):
    """Explicit RK4 for r_t = div(r grad K*r); returns (times, snapshots).

    The step is ``dt_fraction`` times the stability bound (or ``dt``) and is
    adjusted so that every requested snapshot time is hit exactly.
    """
    g = r0.grid
    r = SpectralField(g, r0.coeffs * g.dealias_mask)
    times = sorted(set([0.0] + ([t_end] if snapshot_times is None else [float(x) for x in snapshot_times])))
    out_t, out = [0.0], [r]
    base = dt if dt is not None else dt_fraction * porous_dt(r, kernel, regularized)
    ops = _Operators(g, kernel if regularized else None)

    def F(c):
        rv = ops.phys(c[0])
        flux = rv * ops.phys(ops.ixi * (ops.K * c[0]))
        return np.sum(ops.ixi * ops.spec(flux), axis=0, keepdims=True)

    c = r.coeffs
    t = 0.0
    for target in times[1:]:
        span = target - t
        n = max(1, math.ceil(span / base - 1e-9))
        h = span / n
        for _ in range(n):
            k1 = F(c)
            k2 = F(c + 0.5 * h * k1)
            k3 = F(c + 0.5 * h * k2)
            k4 = F(c + h * k3)
            c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(c)):
            raise IntegrityError(f"porous-media solution blew up before t = {target:.6g}")
        t = target
        out_t.append(t)
        out.append(SpectralField(g, c.copy()))
    return np.array(out_t), out


def advance(s: SimState, cfg: SolverConfig, t_target: float, max_dt: float, record: bool = False):
    """Step from ``s.t`` to ``t_target`` with equal steps no larger than ``max_dt``.

    Returns the final state, or the list of every intermediate state when
    ``record`` is set.  No stability check is made here; callers choose
    ``max_dt`` from :func:`admissible_dt`.
    """
    span = t_target - s.t
    if span < -1e-12:
        raise ValueError("cannot advance backwards in time")
    n = max(1, math.ceil(span / max_dt - 1e-9)) if span > 1e-15 else 0
    out = [s]
    if n == 0:
        return out if record else s
    h = span / n
    stp = Stepper(s.grid, cfg, h)
    ah, uh = s.a.coeffs, s.u.coeffs
    for i in range(1, n + 1):
        ah, uh = stp(ah, uh)
        if record:
            out.append(SimState(SpectralField(s.grid, ah), SpectralField(s.grid, uh), s.t + i * h))
    final = SimState(SpectralField(s.grid, ah), SpectralField(s.grid, uh), t_target)
    check_state(final)
    if record:
        out[-1] = final
        return out
    return final
