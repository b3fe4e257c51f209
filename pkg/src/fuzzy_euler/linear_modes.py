"""Spectral analysis and exact propagation of the linearised damped system

    a_t + div u = 0,    u_t + lam u + grad K * a = 0.

For a frequency xi with r = |xi| the compressible part (a^, u^ . xi/r) obeys
d/dt x = -M x with M = [[0, i r], [i r K^, lam]]; the transverse part of u
just decays like exp(-lam t).  With lam = 1 the eigenvalues of M are

    lambda_pm = (1 +- sqrt(1 - 4 r^2 K^)) / 2.

A friction lam != 1 is reduced to lam = 1 by measuring time in units of
1/lam and frequency in units of lam (the symbol value K^ is kept).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .kernels import KernelFamily, symbol_K
from .spectral import SpectralField

CRITICAL_TOL = 1e-12


class Regime(str, enum.Enum):
    PARABOLIC = "parabolic"
    OSCILLATORY = "oscillatory"
    CRITICAL = "critical"


class RegimeError(ValueError):
    """Raised when an operation is asked for a mode in the wrong regime."""


def _K(kernel: Optional[KernelFamily], r):
    if kernel is None:
        return np.ones_like(np.asarray(r, dtype=float))
    return np.asarray(symbol_K(kernel, r), dtype=float)


@dataclass
class ModeAnalysis:
    xi: np.ndarray
    discriminant: float
    lambda_minus: complex
    lambda_plus: complex
    regime: Regime
    incompressible_rate: float = 1.0
    incompressible_multiplicity: int = 0

    def symbol_matrix(self, kernel: Optional[KernelFamily] = None) -> np.ndarray:
        r = float(np.linalg.norm(self.xi))
        return np.array([[0, 1j * r], [1j * r * float(_K(kernel, r)), 1.0]])


def _magnitude(xi) -> Tuple[np.ndarray, float]:
    v = np.atleast_1d(np.asarray(xi, dtype=float))
    if not np.all(np.isfinite(v)):
        raise ValueError("frequency must be finite")
    return v, float(np.linalg.norm(v))


def eigenvalues(q):
    """lambda_minus, lambda_plus (complex) as functions of q = |xi|^2 K^."""
    disc = 1.0 - 4.0 * np.asarray(q, dtype=float)
    s = np.sqrt(disc.astype(complex))
    return 0.5 * (1 - s), 0.5 * (1 + s), disc


def classify(disc: float) -> Regime:
    if abs(disc) < CRITICAL_TOL:
        return Regime.CRITICAL
    return Regime.PARABOLIC if disc > 0 else Regime.OSCILLATORY


def analyze_mode(kernel: Optional[KernelFamily], xi) -> ModeAnalysis:
    """Both branches of the compressible dispersion relation at xi (friction 1)."""
    v, r = _magnitude(xi)
    q = r * r * float(_K(kernel, r))
    lm, lp, disc = eigenvalues(q)
    disc = float(disc)
    reg = classify(disc)
    if reg is Regime.CRITICAL:
        lm = lp = 0.5 + 0j
    return ModeAnalysis(
        xi=v,
        discriminant=disc,
        lambda_minus=complex(lm),
        lambda_plus=complex(lp),
        regime=reg,
        incompressible_multiplicity=max(v.size - 1, 0),
    )


def degenerate_rate(kernel: Optional[KernelFamily], xi) -> float:
    """Slow parabolic rate |xi|^2 K^(xi), valid where 4|xi|^2 K^ <= 1/2."""
    _, r = _magnitude(xi)
    q = r * r * float(_K(kernel, r))
    if 4 * q > 0.5:
        raise RegimeError(f"4|xi|^2 K^ = {4 * q:.3g} exceeds 1/2; not in the degenerate parabolic regime")
    lm = analyze_mode(kernel, xi).lambda_minus.real
    assert abs(lm - q) <= 2 * q * q + 1e-15, "slow eigenvalue left its asymptotic band"
    return q


def regime_boundaries(kernel: Optional[KernelFamily], r_samples: Iterable[float]) -> int:
    """Number of sign changes of the discriminant along increasing |xi| samples."""
    r = np.sort(np.asarray(list(r_samples), dtype=float))
    disc = 1 - 4 * r**2 * _K(kernel, r)
    s = np.sign(disc)
    s = s[s != 0]
    return int(np.count_nonzero(np.diff(s)))


def propagator_entries(rho, kval, tau):
    """Entries of exp(-tau M) for M = [[0, i rho], [i rho k, 1]], elementwise.

    Written as exp(-tau/2) [cosh(tau s/2) I - sinh(tau s/2)/(s/2) (M - I/2)]
    with s = sqrt(1 - 4 rho^2 k); both terms are evaluated through decaying
    exponentials, and the Jordan (s = 0) case comes out of the series branch.
    """
    rho = np.asarray(rho, dtype=float)
    kval = np.asarray(kval, dtype=float)
    tau = float(tau)
    s = np.sqrt((1.0 - 4.0 * rho**2 * kval).astype(complex))
    z = 0.5 * tau * s
    ep = np.exp(-0.5 * tau * (1 - s))
    em = np.exp(-0.5 * tau * (1 + s))
    small = np.abs(z) < 1e-4
    ssafe = np.where(small, 1.0, s)
    # sh = sinh(tau s/2)/(s/2) * exp(-tau/2)
    sh = np.where(small, np.exp(-0.5 * tau) * tau * (1 + z**2 / 6 + z**4 / 120), (ep - em) / ssafe)
    ch = 0.5 * (ep + em)
    # exp(-tau M) = ch I - sh (M - I/2); the diagonal is regrouped per exponential
    # so that neither entry suffers cancellation when one branch dominates
    e11 = np.where(small, ch + 0.5 * sh, 0.5 * (ep * (ssafe + 1) + em * (ssafe - 1)) / ssafe)
    e22 = np.where(small, ch - 0.5 * sh, 0.5 * (ep * (ssafe - 1) + em * (ssafe + 1)) / ssafe)
    e12 = -sh * 1j * rho
    e21 = -sh * 1j * rho * kval
    return e11, e12, e21, e22


def linear_propagate(
    a0: SpectralField,
    u0: SpectralField,
    kernel: Optional[KernelFamily],
    friction: float,
    t: float,
) -> Tuple[SpectralField, SpectralField]:
    """Exact solution of the linearised system at time t, mode by mode.

    Frequencies are those of the spectral derivatives (Nyquist entries
    zeroed), so the result is the exact flow of the discretised linear
    operator used by the nonlinear solvers.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    grid = a0.grid
    lam = float(friction)
    xi = grid.xi_deriv
    r = np.sqrt(np.sum(xi**2, axis=0))
    kval = _K(kernel, grid.xi_abs)
    safe = np.where(r > 0, r, 1.0)
    nhat = np.where(r > 0, xi / safe, 0.0)

    ah = a0.coeffs[0]
    uh = u0.coeffs
    upar = np.sum(nhat * uh, axis=0)
    uperp = uh - nhat * upar

    e11, e12, e21, e22 = propagator_entries(r / lam, kval, lam * t)
    a_new = e11 * ah + e12 * upar
    upar_new = e21 * ah + e22 * upar
    decay = np.exp(-lam * t)
    # at r = 0 the compressible block decouples: a stays put, u decays
    upar_new = np.where(r > 0, upar_new, 0.0)
    u_new = uperp * decay + nhat * upar_new
    u_new = np.where(r > 0, u_new, uh * decay)
    a_new = np.where(r > 0, a_new, ah)
    return SpectralField(grid, a_new[None]), SpectralField(grid, u_new)


@dataclass
class DecayReport:
    xi: float
    lambda_minus: float
    lambda_plus: float
    a_rate: float
    w_rate: float
    window: Tuple[float, float]
    w_ok: bool
    a_ok: bool

    @property
    def ok(self) -> bool:
        return self.w_ok and self.a_ok


def fit_rate(t: np.ndarray, y: np.ndarray, secular: bool = False) -> float:
    """Decay exponent from a log-linear least-squares fit of |y| against t.

    With ``secular=True`` the fit also carries a ``log t`` regressor, which
    absorbs the polynomial prefactor of a (nearly) repeated eigenvalue,
    ``|y| ~ (A + B t) exp(-mu t)``.
    """
    t = np.asarray(t, dtype=float)
    logy = np.log(np.abs(y))
    if not secular:
        return float(-np.polyfit(t, logy, 1)[0])
    design = np.stack([np.ones_like(t), np.log(t), t], axis=1)
    coef = np.linalg.lstsq(design, logy, rcond=None)[0]
    return float(-coef[2])


def damped_mode_decay_check(
    kernel: Optional[KernelFamily], friction: float, xi: float, horizon: float, samples: int = 400
) -> DecayReport:
    """Propagate one parabolic mode and fit the decay of a^ and of w^ = u^ + i xi K^ a^/lam.

    The density decay is fitted over the second half of ``horizon``.  The
    damped mode is the sum of a fast part (rate lam*lambda_plus) and a tiny
    slow remainder, so its fit uses the second half of the window ending at
    half the time where the two parts have equal size.
    """
    lam = float(friction)
    r = abs(float(xi))
    kval = float(_K(kernel, r))
    rho = r / lam
    q = rho * rho * kval
    lm, lp, disc = eigenvalues(q)
    disc = float(disc)
    reg = classify(disc)
    if reg is Regime.OSCILLATORY:
        raise RegimeError(f"mode |xi| = {r} is oscillatory (discriminant {disc:.3g})")
    lm, lp = lam * float(lm.real), lam * float(lp.real)

    def traj(ts):
        out_a, out_w = [], []
        for t in ts:
            e11, e12, e21, e22 = propagator_entries(rho, kval, lam * t)
            a = e11 * 1.0 + e12 * 1.0
            u = e21 * 1.0 + e22 * 1.0
            out_a.append(a)
            out_w.append(u + 1j * r * kval * a / lam)
        return np.array(out_a), np.array(out_w)

    near_critical = reg is Regime.CRITICAL or (lp - lm) * horizon <= 2.0
    ts = np.linspace(0.5 * horizon, horizon, samples)
    a_series, _ = traj(ts)
    a_rate = fit_rate(ts, a_series, near_critical) if r > 0 else 0.0

    # window for the fast part of w
    t_end = horizon
    if reg is Regime.PARABOLIC and r > 0 and (lp - lm) * horizon > 2.0:
        M = np.array([[0, 1j * rho], [1j * rho * kval, 1.0]])
        vals, vecs = np.linalg.eig(M)
        order = np.argsort(vals.real)
        vals, vecs = vals[order], vecs[:, order]
        coef = np.linalg.solve(vecs, np.array([1.0, 1.0], dtype=complex))
        ell = np.array([1j * r * kval / lam, 1.0])
        amp_slow, amp_fast = np.abs(coef * (ell @ vecs))
        if amp_slow > 0:
            t_cross = np.log(amp_fast / amp_slow) / (lp - lm)
            if t_cross > 0:
                t_end = min(horizon, 0.5 * t_cross)
    tw = np.linspace(0.5 * t_end, t_end, samples)
    _, w_series = traj(tw)
    w_rate = fit_rate(tw, w_series, near_critical and r > 0)

    if near_critical:
        tol_ok = lambda got, want: abs(got - want) <= 0.05 * want + 1e-12
        w_ok = tol_ok(w_rate, lp)
        a_ok = tol_ok(a_rate, lm)
    else:
        w_ok = w_rate >= lp * 0.9
        a_ok = abs(a_rate - lm) <= 0.1 * lm + 1e-12
    return DecayReport(r, lm, lp, a_rate, w_rate, (0.5 * t_end, t_end), bool(w_ok), bool(a_ok))


CSV_HEADER = ("xi", "discriminant", "re_lambda_minus", "im_lambda_minus", "re_lambda_plus", "im_lambda_plus", "regime")


def mode_table(kernel: Optional[KernelFamily], xi_values: Iterable[float]) -> List[tuple]:
    rows = []
    for x in xi_values:
        m = analyze_mode(kernel, [x])
        rows.append(
            (
                float(x),
                m.discriminant,
                m.lambda_minus.real,
                m.lambda_minus.imag,
                m.lambda_plus.real,
                m.lambda_plus.imag,
                m.regime.value,
            )
        )
    return rows
