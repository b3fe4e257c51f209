"""Initial data library for the hydrodynamic runs.

Every builder returns mean-free, real (a, u) SpectralFields; ``amplitude`` is
the sup norm of the density perturbation before dealiasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .hydro import SimState
from .spectral import GridSpec, SpectralField, forward_array, transform_forward

KINDS = ("gaussian", "modes", "random", "power_law", "uniform")


def _scalar(grid: GridSpec, values: np.ndarray) -> SpectralField:
    c = forward_array(grid, values)[None]
    c[(0,) * (grid.dimension + 1)] = 0.0
    return SpectralField(grid, c)


def _normalise(values: np.ndarray, amplitude: float) -> np.ndarray:
    v = values - values.mean()
    peak = np.max(np.abs(v))
    return v * (amplitude / peak) if peak > 0 else v


def gaussian_bump(grid: GridSpec, width: float, center: Optional[Sequence[float]] = None) -> np.ndarray:
    """Periodised Gaussian exp(-|x - c|^2 / (2 w^2)) on the grid."""
    x = grid.coordinates()
    c = np.full(grid.dimension, grid.length / 2) if center is None else np.asarray(center, dtype=float)
    r2 = np.zeros(grid.shape)
    for i in range(grid.dimension):
        dx = x[i] - c[i]
        dx = dx - grid.length * np.round(dx / grid.length)
        r2 += dx**2
    return np.exp(-r2 / (2 * width**2))


def trig_modes(grid: GridSpec, modes: Sequence[Sequence[int]], phases: Optional[Sequence[float]] = None) -> np.ndarray:
    """Sum of cos(2 pi k . x / L + phase) over integer wave vectors k.

    Wave vectors shorter than the dimension are padded with zeros.
    """
    x = grid.coordinates()
    out = np.zeros(grid.shape)
    for n, k in enumerate(modes):
        k = np.atleast_1d(np.asarray(k, dtype=float))
        if k.size > grid.dimension:
            raise ValueError(f"wave vector {list(k)} has more than {grid.dimension} components")
        k = np.pad(k, (0, grid.dimension - k.size))
        ph = 0.0 if phases is None else phases[n]
        arg = sum(2 * np.pi * k[i] * x[i] / grid.length for i in range(grid.dimension))
        out += np.cos(arg + ph)
    return out


def random_band_limited(grid: GridSpec, kmax: int, rng: np.random.Generator, exponent: float = 0.0) -> np.ndarray:
    """Random field with Fourier support 1 <= |k| <= kmax and |c_k| ~ |k|^-exponent."""
    xi = grid.xi_abs * grid.length / (2 * np.pi)
    amp = np.where((xi >= 1) & (xi <= kmax), np.maximum(xi, 1.0) ** -exponent, 0.0)
    c = amp * (rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape))
    return np.fft.irfftn(c, s=grid.shape, axes=tuple(range(-grid.dimension, 0)), norm="forward")


@dataclass
class InitialData:
    """Descriptor of an initial state; ``build`` turns it into a SimState."""

    kind: str = "gaussian"
    amplitude: float = 1e-2
    width: float = 1.0
    modes: List[List[int]] = field(default_factory=lambda: [[1]])
    kmax: int = 8
    exponent: float = 0.0
    velocity_amplitude: float = 0.0
    velocity_kind: str = "gradient"  # gradient | shear | same
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"initial data kind must be one of {KINDS}, got {self.kind!r}")
        if self.amplitude < 0 or self.velocity_amplitude < 0:
            raise ValueError("amplitudes must be nonnegative")
        if self.width <= 0:
            raise ValueError("width must be positive")

    def density_profile(self, grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "gaussian":
            return gaussian_bump(grid, self.width)
        if self.kind == "modes":
            return trig_modes(grid, self.modes)
        if self.kind in ("random", "power_law"):
            return random_band_limited(grid, self.kmax, rng, self.exponent)
        return np.zeros(grid.shape)

    def build(self, grid: GridSpec) -> SimState:
        rng = np.random.default_rng(self.seed)
        prof = self.density_profile(grid, rng)
        a = _scalar(grid, _normalise(prof, self.amplitude))
        d = grid.dimension
        u = np.zeros((d,) + grid.shape)
        if self.velocity_amplitude > 0 and self.kind != "uniform":
            if self.velocity_kind == "gradient":
                ph = transform_forward(grid, prof)
                g = np.fft.irfftn(
                    1j * grid.xi_deriv * ph.coeffs[0], s=grid.shape, axes=tuple(range(-d, 0)), norm="forward"
                )
                u = g
            elif self.velocity_kind == "shear" and d == 2:
                x = grid.coordinates()
                u[0] = np.sin(2 * np.pi * x[1] / grid.length)
            else:
                u = np.broadcast_to(prof, (d,) + grid.shape).copy()
            peak = np.max(np.abs(u))
            if peak > 0:
                u = u - u.mean(axis=tuple(range(1, d + 1)), keepdims=True)
                u = u * (self.velocity_amplitude / np.max(np.abs(u)))
        us = transform_forward(grid, u)
        return SimState(a, us, 0.0)
