"""Per-snapshot monitored quantities of a hydrodynamic run."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import FuzzyEulerError
from .kernels import KernelFamily
from .littlewood_paley import besov_norm, functional_H, functional_X, lyapunov_blocks, lyapunov_summary
from .spectral import inverse_array


@dataclass
class DiagnosticsRow:
    t: float
    mass: float
    min_rho: float
    energy_kin: float
    energy_pot: float
    dissipation: float
    X_sigma: float
    H_sigma: float
    H_integral: float
    X_half: float
    H_half: float
    a_low: float
    a_high: float
    w_norm: float
    w_integral: float
    grad_u_inf: float
    grad_u_integral: float
    L_low: float
    L_high: float
    LH_low: float
    LH_high: float


COLUMNS = tuple(f.name for f in fields(DiagnosticsRow))


class RunningIntegrals:
    """Trapezoid-rule accumulators for the time integrals carried by the rows."""

    def __init__(self):
        self.last_t: Optional[float] = None
        self.last = {}
        self.total = {"H": 0.0, "w": 0.0, "grad_u": 0.0}

    def update(self, t: float, values: dict) -> dict:
        if self.last_t is not None:
            dt = t - self.last_t
            for k, v in values.items():
                self.total[k] += 0.5 * dt * (v + self.last[k])
        self.last_t = t
        self.last = dict(values)
        return dict(self.total)


def _lyapunov(state, kernel: KernelFamily, sigma: float):
    try:
        blocks = lyapunov_blocks(state.a, state.u, kernel)
    except ValueError:
        return dict(L_low=math.nan, L_high=math.nan, H_low=math.nan, H_high=math.nan)
    return lyapunov_summary(blocks, kernel, sigma)


def assemble_row(state, cfg, integrals: RunningIntegrals, sigma: Optional[float] = None, lyapunov: bool = True):
    """Fill every DiagnosticsRow field for one snapshot and advance the running integrals.

    ``sigma`` defaults to d/2 + 1; the d/2 functionals are always logged too.
    """
    from .hydro import damped_mode, energy

    g = state.grid
    d = g.dimension
    sigma = d / 2 + 1 if sigma is None else sigma
    kernel = cfg.kernel if cfg.kernel is not None else KernelFamily(kind="identity")
    lam = cfg.friction if cfg.friction > 0 else 1.0

    rho = state.density()
    kin, pot, diss = energy(state, cfg)
    X = functional_X(state.a, state.u, sigma, cfg.kernel, lam)
    H = functional_H(state.a, state.u, sigma, cfg.kernel, lam)
    Xh = functional_X(state.a, state.u, d / 2, cfg.kernel, lam)
    Hh = functional_H(state.a, state.u, d / 2, cfg.kernel, lam)
    a_rep = besov_norm(state.a, d / 2, kernel)
    w = damped_mode(state, cfg)
    wn = besov_norm(w, d / 2).total
    grad = inverse_array(g, 1j * g.xi_deriv[None] * state.u.coeffs[:, None])
    gmax = float(np.max(np.sqrt(np.sum(grad**2, axis=(0, 1))))) if d > 1 else float(np.max(np.abs(grad)))
    tot = integrals.update(state.t, {"H": H, "w": wn, "grad_u": gmax})
    ly = _lyapunov(state, kernel, sigma) if lyapunov else dict(L_low=math.nan, L_high=math.nan, H_low=math.nan, H_high=math.nan)
    return DiagnosticsRow(
        t=state.t,
        mass=float(g.volume * np.mean(rho)),
        min_rho=float(rho.min()),
        energy_kin=kin,
        energy_pot=pot,
        dissipation=diss,
        X_sigma=X,
        H_sigma=H,
        H_integral=tot["H"],
        X_half=Xh,
        H_half=Hh,
        a_low=a_rep.low_part,
        a_high=a_rep.high_part,
        w_norm=wn,
        w_integral=tot["w"],
        grad_u_inf=gmax,
        grad_u_integral=tot["grad_u"],
        L_low=ly["L_low"],
        L_high=ly["L_high"],
        LH_low=ly["H_low"],
        LH_high=ly["H_high"],
    )


def recompute_rows(states: Sequence, cfg, sigma: Optional[float] = None) -> List[DiagnosticsRow]:
    """Stateless recomputation of the rows of a stored trajectory."""
    integ = RunningIntegrals()
    return [assemble_row(s, cfg, integ, sigma) for s in states]


class DegenerateDataError(FuzzyEulerError):
    pass


@dataclass
class ConstantReport:
    C_est: float
    monotone_violations: int
    X0: float


def estimate_constant(rows: Sequence[DiagnosticsRow], transient: float = 0.1, rtol: float = 1e-9) -> ConstantReport:
    """C_est = max_t (X(t) + int_0^t H) / X(0).

    Growth of X(t) between consecutive rows after the first ``transient``
    fraction of the run is counted as a monotonicity violation.
    """
    if len(rows) < 2:
        raise ValueError("estimate_constant needs at least two rows")
    X = np.array([r.X_sigma for r in rows])
    I = np.array([r.H_integral for r in rows])
    if X[0] == 0:
        raise DegenerateDataError("X(0) = 0: the bound carries no information for trivial data")
    ratio = (X + I) / X[0]
    start = int(math.ceil(transient * (len(rows) - 1)))
    inc = np.diff(X[start:])
    viol = int(np.count_nonzero(inc > rtol * X[0]))
    return ConstantReport(float(ratio.max()), viol, float(X[0]))


def tail_fraction(times: np.ndarray, integral: np.ndarray, t_split: float) -> float:
    """(I(T) - I(t_split)) / I(T) for a running integral I sampled at ``times``."""
    total = float(integral[-1])
    mid = float(np.interp(t_split, times, integral))
    return (total - mid) / total if total > 0 else 0.0


def write_csv(path, rows: Iterable[DiagnosticsRow]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(COLUMNS)
        for r in rows:
            wr.writerow([repr(float(v)) for v in asdict(r).values()])
