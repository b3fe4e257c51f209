"""Homogeneous Littlewood-Paley blocks and Besov B^sigma_{2,1} norms on the torus.

The dyadic profile is ``phi(r) = chi(r) - chi(2 r)`` where ``chi`` is a
C-infinity cutoff equal to 1 on [0, 1] and 0 on [2, inf).  Then phi is
nonnegative, supported in [1/2, 2], and ``sum_j phi(2^-j r) = 1`` for r > 0
by telescoping.  The zero mode is never part of any block: on the torus the
mean is tracked separately.

Norm conventions
----------------
* ``||f||_{L2}`` is the unnormalised torus norm ``(int_Omega |f|^2)^(1/2)``.
* A vector (or matrix) valued block is measured by the Euclidean norm of its
  component norms.
* A tuple such as ``(a, grad a)`` is measured by the sum of the entries' norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from .kernels import FrequencyClass, KernelFamily, frequency_class, symbol_L
from .spectral import GridSpec, SpectralField, inverse_array


def _g(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def cutoff(r):
    """Smooth nonincreasing cutoff: 1 on [0, 1], 0 on [2, inf)."""
    r = np.asarray(r, dtype=float)
    up = _g(2.0 - r)
    return up / (up + _g(r - 1.0))


def profile(r):
    """Dyadic bump phi(r) = chi(r) - chi(2r), supported in [1/2, 2]."""
    r = np.asarray(r, dtype=float)
    return cutoff(r) - cutoff(2.0 * r)


@dataclass(frozen=True)
class DyadicPartition:
    grid: GridSpec
    j_min: int
    j_max: int

    @property
    def indices(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def __len__(self):
        return self.j_max - self.j_min + 1

    def multipliers(self) -> np.ndarray:
        """phi(2^-j |xi|) for all active j, shape (nblocks, *spectral_shape)."""
        return _multipliers(self.grid)

    def partition_sum(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return sum(profile(r * 2.0**-j) for j in self.indices)


@lru_cache(maxsize=32)
def build_partition(grid: GridSpec) -> DyadicPartition:
    xi = grid.xi_abs
    lo = float(xi[xi > 0].min())
    hi = float(xi.max())
    return DyadicPartition(grid, int(math.floor(math.log2(lo))), int(math.ceil(math.log2(hi))))


@lru_cache(maxsize=32)
def _multipliers(grid: GridSpec) -> np.ndarray:
    part = build_partition(grid)
    xi = grid.xi_abs
    m = np.stack([profile(xi * 2.0**-j) for j in part.indices])
    m[(slice(None),) + (0,) * grid.dimension] = 0.0
    m.setflags(write=False)
    return m


def lp_block(z: SpectralField, j: int) -> SpectralField:
    """Delta_j z.  Outside the active range the block is the zero field."""
    part = build_partition(z.grid)
    if j < part.j_min or j > part.j_max:
        return SpectralField(z.grid, np.zeros_like(z.coeffs))
    return SpectralField(z.grid, z.coeffs * _multipliers(z.grid)[j - part.j_min])


def block_norms_from_energy(grid: GridSpec, energy: np.ndarray) -> np.ndarray:
    """L2 norms of all blocks given the per-mode energy sum_c |coef|^2.

    ``energy`` has shape ``grid.spectral_shape`` (or a leading batch axis).
    """
    phi2 = _multipliers(grid) ** 2
    w = grid.parseval_weights
    flat = (phi2 * w).reshape(phi2.shape[0], -1)
    e = np.asarray(energy).reshape(energy.shape[: energy.ndim - grid.dimension] + (-1,))
    sq = e @ flat.T * grid.volume
    return np.sqrt(np.maximum(sq, 0.0))


def class_mask(grid: GridSpec, kernel: Optional[KernelFamily]) -> np.ndarray:
    """Boolean array over active blocks: True where the block is low frequency."""
    part = build_partition(grid)
    if kernel is None:
        return np.zeros(len(part), dtype=bool)
    return np.array([frequency_class(kernel, j) is FrequencyClass.LOW for j in part.indices])


@dataclass
class BesovReport:
    sigma: float
    block_norms: Dict[int, float]
    total: float
    low_part: float
    high_part: float
    classes: Dict[int, str] = field(default_factory=dict)
    outside_mass: float = 0.0

    def rows(self, time: float) -> List[Tuple]:
        """CSV rows (time, sigma, j, block_norm, class)."""
        return [(time, self.sigma, j, v, self.classes.get(j, "")) for j, v in sorted(self.block_norms.items())]


CSV_HEADER = ("time", "sigma", "j", "block_norm", "class")


def besov_norm(z: SpectralField, sigma: float, kernel: Optional[KernelFamily] = None) -> BesovReport:
    """Homogeneous B^sigma_{2,1} norm with its per-block terms and low/high split."""
    grid = z.grid
    part = build_partition(grid)
    energy = np.sum(np.abs(z.coeffs) ** 2, axis=0)
    norms = block_norms_from_energy(grid, energy)
    js = np.array(list(part.indices))
    weighted = 2.0 ** (js * sigma) * norms
    low = class_mask(grid, kernel)
    blocks = {int(j): float(v) for j, v in zip(js, weighted)}
    classes = {int(j): ("low" if l else "high") for j, l in zip(js, low)}

    # mass the active blocks miss (zero up to rounding: the blocks cover the lattice)
    msum = _multipliers(grid).sum(axis=0)
    resid = z.coeffs * (1.0 - msum)
    resid[(slice(None),) + (0,) * grid.dimension] = 0.0
    outside = float(np.sqrt(grid.volume * np.sum(grid.parseval_weights * np.abs(resid) ** 2)))

    return BesovReport(
        sigma=sigma,
        block_norms=blocks,
        total=float(weighted.sum()),
        low_part=float(weighted[low].sum()),
        high_part=float(weighted[~low].sum()),
        classes=classes,
        outside_mass=outside,
    )


def frequency_split(z: SpectralField, kernel: KernelFamily) -> Tuple[SpectralField, SpectralField]:
    """(z^low, z^high): sums of the blocks in each class (mean excluded)."""
    low = class_mask(z.grid, kernel)
    m = _multipliers(z.grid)
    ml = m[low].sum(axis=0)
    mh = m[~low].sum(axis=0)
    return SpectralField(z.grid, z.coeffs * ml), SpectralField(z.grid, z.coeffs * mh)


# --- solution-space functionals --------------------------------------------


class _Weighted:
    """Evaluates Besov norms of multiplier images of a field from mode energies."""

    def __init__(self, grid: GridSpec, kernel: Optional[KernelFamily]):
        self.grid = grid
        part = build_partition(grid)
        self.js = np.array(list(part.indices), dtype=float)
        self.low = class_mask(grid, kernel)
        xi_d = grid.xi_deriv
        self.k2 = np.sum(xi_d**2, axis=0)
        if kernel is None:
            self.L2 = np.ones(grid.spectral_shape)
        else:
            self.L2 = symbol_L(kernel, grid.xi_abs) ** 2
        self.K2 = self.L2**2

    def norm(self, energy: np.ndarray, sigma: float, part: str = "all") -> float:
        b = 2.0 ** (self.js * sigma) * block_norms_from_energy(self.grid, energy)
        if part == "low":
            return float(b[self.low].sum())
        if part == "high":
            return float(b[~self.low].sum())
        return float(b.sum())


def _energies(a: SpectralField, u: SpectralField):
    if a.grid != u.grid:
        raise ValueError("a and u must live on the same grid")
    if a.components != 1 or u.components != a.grid.dimension:
        raise ValueError("a must be scalar and u a d-component vector field")
    return np.abs(a.coeffs[0]) ** 2, np.sum(np.abs(u.coeffs) ** 2, axis=0)


def functional_X(
    a: SpectralField, u: SpectralField, sigma: float, kernel: Optional[KernelFamily], friction: float = 1.0
) -> float:
    """Energy functional of the small-data theory.

    With friction 1:  ||(a, grad a, grad^2 L a)||_{B^{sigma-1}} + ||(u, grad u)||_{B^sigma}.
    For friction lam each derivative carries a factor 1/lam and the velocity
    part an extra 1/lam (the form obtained by undoing the hyperbolic scaling).
    """
    ea, eu = _energies(a, u)
    W = _Weighted(a.grid, kernel)
    il = 1.0 / friction
    s = sigma - 1.0
    X = W.norm(ea, s) + il * W.norm(ea * W.k2, s) + il**2 * W.norm(ea * W.k2**2 * W.L2, s)
    X += il * (W.norm(eu, sigma) + il * W.norm(eu * W.k2, sigma))
    return X


def functional_H(
    a: SpectralField, u: SpectralField, sigma: float, kernel: Optional[KernelFamily], friction: float = 1.0
) -> float:
    """Dissipation functional paired with :func:`functional_X`.

    With friction 1:
        ||(u, grad u)||_{B^sigma} + ||(grad K a, grad^2 K a)||^low_{B^sigma} + ||grad L a||^high_{B^sigma}.
    Otherwise:
        ||(u, grad u / lam)||_{B^sigma} + ||grad^2 K a||^low_{B^{sigma-1}} / lam
        + ||grad^2 K a||^low_{B^sigma} / lam^2 + ||(a, grad L a / lam)||^high_{B^sigma}.
    """
    ea, eu = _energies(a, u)
    W = _Weighted(a.grid, kernel)
    if friction == 1.0:
        H = W.norm(eu, sigma) + W.norm(eu * W.k2, sigma)
        H += W.norm(ea * W.k2 * W.K2, sigma, "low") + W.norm(ea * W.k2**2 * W.K2, sigma, "low")
        H += W.norm(ea * W.k2 * W.L2, sigma, "high")
        return H
    il = 1.0 / friction
    H = W.norm(eu, sigma) + il * W.norm(eu * W.k2, sigma)
    H += il * W.norm(ea * W.k2**2 * W.K2, sigma - 1.0, "low") + il**2 * W.norm(ea * W.k2**2 * W.K2, sigma, "low")
    H += W.norm(ea, sigma, "high") + il * W.norm(ea * W.k2 * W.L2, sigma, "high")
    return H


def _physical(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    return inverse_array(grid, coeffs)


def lyapunov_blocks(
    a: SpectralField,
    u: SpectralField,
    kernel: KernelFamily,
    pressure_c: Optional[SpectralField] = None,
) -> Dict[int, Tuple[float, float]]:
    """Per-block Lyapunov and dissipation functionals (L_j, H_j), with b = a.

    L_j^2 = ||(a_j, L a_j, u_j)||^2 - 2 int a_j div u_j + 2 int (1+c)|grad L a_j|^2
            + int |grad P u_j|^2 + 2 int (1+b)(div u_j)^2
    H_j^2 = ||u_j||^2 + ||grad P u_j||^2 + int (1+c)|grad L a_j|^2 + int (1+b)(div u_j)^2

    where P is the Leray projector.  Refuses when max(|b|, |c|) > 1/4, the
    range in which both quantities are equivalent to the natural block norms.
    """
    grid = a.grid
    ea, eu = _energies(a, u)  # validates shapes
    b = _physical(grid, a.coeffs[0])
    c = np.zeros(grid.shape) if pressure_c is None else _physical(grid, pressure_c.coeffs[0])
    if np.max(np.abs(b)) > 0.25 or np.max(np.abs(c)) > 0.25:
        raise ValueError(
            f"smallness violated: max|a| = {np.max(np.abs(b)):.3g}, max|c| = {np.max(np.abs(c)):.3g} (need <= 1/4)"
        )
    from .spectral import leray_coeffs

    part = build_partition(grid)
    mult = _multipliers(grid)
    xi = grid.xi_deriv
    Ls = symbol_L(kernel, grid.xi_abs)
    vol = grid.volume
    integ = lambda f: float(vol * np.mean(f))
    out = {}
    for idx, j in enumerate(part.indices):
        ph = mult[idx]
        ah = a.coeffs[0] * ph
        uh = u.coeffs * ph
        aj = _physical(grid, ah)
        Laj = _physical(grid, ah * Ls)
        uj = _physical(grid, uh)
        divu = _physical(grid, np.sum(1j * xi * uh, axis=0))
        gLa = _physical(grid, 1j * xi * (ah * Ls)[None])
        Pu = leray_coeffs(grid, uh)
        gPu = _physical(grid, (1j * xi[None] * Pu[:, None]).reshape((-1,) + grid.spectral_shape))
        gLa2 = np.sum(gLa**2, axis=0)
        base = integ(aj**2) + integ(Laj**2) + integ(np.sum(uj**2, axis=0))
        gP2 = integ(np.sum(gPu**2, axis=0))
        Lsq = base - 2 * integ(aj * divu) + 2 * integ((1 + c) * gLa2) + gP2 + 2 * integ((1 + b) * divu**2)
        Hsq = integ(np.sum(uj**2, axis=0)) + gP2 + integ((1 + c) * gLa2) + integ((1 + b) * divu**2)
        out[j] = (float(np.sqrt(max(Lsq, 0.0))), float(np.sqrt(max(Hsq, 0.0))))
    return out


def lyapunov_summary(blocks: Dict[int, Tuple[float, float]], kernel: KernelFamily, sigma: float) -> Dict[str, float]:
    """2^{j sigma}-weighted sums of L_j and H_j over the low and high classes."""
    s = {"L_low": 0.0, "L_high": 0.0, "H_low": 0.0, "H_high": 0.0}
    for j, (Lj, Hj) in blocks.items():
        tag = "low" if frequency_class(kernel, j) is FrequencyClass.LOW else "high"
        wgt = 2.0 ** (j * sigma)
        s["L_" + tag] += wgt * Lj
        s["H_" + tag] += wgt * Hj
    return s
