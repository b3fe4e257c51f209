"""Periodic grids and real fields stored as (real-FFT) Fourier coefficients.

Coefficients are normalised so that ``f(x) = sum_k c_k exp(i xi_k . x)``
with ``xi_k = 2 pi k / L``; the zero mode is therefore the mean of the field.
Only the non-redundant half of the lattice is stored (last axis of an
``rfftn``), which keeps Hermitian symmetry by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Union

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    dimension: int
    points: int
    length: float = 2 * np.pi

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        n = self.points
        if n < 16 or n & (n - 1):
            raise ValueError(f"points per axis must be a power of two >= 16, got {n}")
        if not self.length > 0:
            raise ValueError("domain length must be positive")

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dimension

    @property
    def spectral_shape(self) -> tuple:
        return (self.points,) * (self.dimension - 1) + (self.points // 2 + 1,)

    @property
    def spacing(self) -> float:
        return self.length / self.points

    @property
    def volume(self) -> float:
        return self.length**self.dimension

    def coordinates(self) -> np.ndarray:
        """Grid coordinates, shape (d, N, ..., N)."""
        x = np.arange(self.points) * self.spacing
        return np.array(np.meshgrid(*([x] * self.dimension), indexing="ij"))

    @property
    def xi(self) -> np.ndarray:
        """Frequency vectors, shape (d, *spectral_shape)."""
        return _lattice(self)[0]

    @property
    def xi_deriv(self) -> np.ndarray:
        """Frequency vectors with Nyquist entries zeroed (for odd derivatives)."""
        return _lattice(self)[1]

    @property
    def xi_abs(self) -> np.ndarray:
        return _lattice(self)[2]

    @property
    def dealias_mask(self) -> np.ndarray:
        return _lattice(self)[3]

    @property
    def parseval_weights(self) -> np.ndarray:
        return _lattice(self)[4]

    @property
    def max_frequency(self) -> float:
        """Largest |xi| retained after dealiasing."""
        return float(self.xi_abs[self.dealias_mask].max())


@lru_cache(maxsize=64)
def _lattice(grid: GridSpec):
    n = grid.points
    base = 2 * np.pi / grid.length
    full = np.fft.fftfreq(n, 1.0 / n)
    half = np.arange(n // 2 + 1, dtype=float)
    axes = [full] * (grid.dimension - 1) + [half]
    k = np.array(np.meshgrid(*axes, indexing="ij"))
    xi = base * k
    xi_d = np.where(np.abs(k) == n // 2, 0.0, xi)
    xi_abs = np.sqrt(np.sum(xi**2, axis=0))
    mask = np.all(np.abs(k) <= n / 3.0, axis=0)
    w = np.full(grid.spectral_shape, 2.0)
    w[..., 0] = 1.0
    w[..., -1] = 1.0
    for arr in (xi, xi_d, xi_abs, mask, w):
        arr.setflags(write=False)
    return xi, xi_d, xi_abs, mask, w


@dataclass
class SpectralField:
    grid: GridSpec
    coeffs: np.ndarray  # (components, *grid.spectral_shape), complex

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape[1:] != self.grid.spectral_shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}")

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    def values(self) -> np.ndarray:
        return transform_inverse(self)

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i : i + 1])

    def mean(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.dimension].real.copy()

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid or other.components != self.components:
            raise ValueError("fields live on different grids or have different component counts")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, s: float):
        return SpectralField(self.grid, self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)


def zeros(grid: GridSpec, components: int = 1) -> SpectralField:
    return SpectralField(grid, np.zeros((components,) + grid.spectral_shape, dtype=complex))


def forward_array(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    axes = tuple(range(-grid.dimension, 0))
    return np.fft.rfftn(values, axes=axes, norm="forward")


def inverse_array(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    axes = tuple(range(-grid.dimension, 0))
    return np.fft.irfftn(coeffs, s=grid.shape, axes=axes, norm="forward")


def transform_forward(grid: GridSpec, values) -> SpectralField:
    """Real samples (shape grid.shape, or (c, *grid.shape)) to a SpectralField."""
    v = np.asarray(values, dtype=float)
    if v.shape == grid.shape:
        v = v[None]
    if v.shape[1:] != grid.shape:
        raise ValueError(f"sample array of shape {np.shape(values)} does not match grid {grid.shape}")
    return SpectralField(grid, forward_array(grid, v))


def transform_inverse(f: SpectralField) -> np.ndarray:
    """Physical samples; scalar fields come back without the component axis."""
    v = inverse_array(f.grid, f.coeffs)
    return v[0] if f.components == 1 else v


Multiplier = Union[np.ndarray, float, Callable[[np.ndarray], np.ndarray]]


def apply_multiplier(f: SpectralField, sigma: Multiplier) -> SpectralField:
    """Coefficientwise product with sigma(xi); ``sigma`` may be an array or a callable of xi (d, ...)."""
    s = sigma(f.grid.xi) if callable(sigma) else sigma
    s = np.asarray(s)
    if not np.all(np.isfinite(s)):
        raise ValueError("multiplier is not finite on the lattice")
    return SpectralField(f.grid, f.coeffs * s)


def radial(fn: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Lift a function of |xi| to a multiplier of the frequency vector."""
    return lambda xi: fn(np.sqrt(np.sum(xi**2, axis=0)))


def gradient(f: SpectralField) -> SpectralField:
    """Gradient; for a c-component field the result has c*d components (i, j) -> i*d + j."""
    xi = f.grid.xi_deriv
    out = 1j * f.coeffs[:, None] * xi[None]
    return SpectralField(f.grid, out.reshape((-1,) + f.grid.spectral_shape))


def divergence(v: SpectralField) -> SpectralField:
    d = v.grid.dimension
    if v.components != d:
        raise ValueError(f"divergence needs a {d}-component field, got {v.components}")
    out = np.sum(1j * v.grid.xi_deriv * v.coeffs, axis=0, keepdims=True)
    return SpectralField(v.grid, out)


def leray_coeffs(grid: GridSpec, vhat: np.ndarray) -> np.ndarray:
    # same wavenumbers as gradient/divergence, so P grad = 0 and div P = 0 hold
    # on every mode, Nyquist ones included
    xi = grid.xi_deriv
    k2 = np.sum(xi**2, axis=0)
    safe = np.where(k2 > 0, k2, 1.0)
    proj = np.sum(xi * vhat, axis=0) / safe
    return vhat - np.where(k2 > 0, xi * proj, 0.0)


def leray_project(v: SpectralField) -> SpectralField:
    """Remove the gradient part; the xi = 0 mode passes through."""
    if v.components != v.grid.dimension:
        raise ValueError("Leray projection needs a vector field")
    return SpectralField(v.grid, leray_coeffs(v.grid, v.coeffs))


def dealias(f: SpectralField) -> SpectralField:
    """Two-thirds rule: zero every mode with some |k_i| > N/3."""
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


def l2_norm(f: SpectralField) -> float:
    """L2 norm over the torus (Euclidean across components), via Parseval."""
    return float(np.sqrt(f.grid.volume * np.sum(f.grid.parseval_weights * np.abs(f.coeffs) ** 2)))


def coeff_l2_norm(grid: GridSpec, coeffs: np.ndarray) -> float:
    return float(np.sqrt(grid.volume * np.sum(grid.parseval_weights * np.abs(coeffs) ** 2)))


def inner(f: SpectralField, g: SpectralField) -> float:
    f._check(g)
    return float(f.grid.volume * np.sum(f.grid.parseval_weights * (f.coeffs * np.conj(g.coeffs)).real))


def resample(f: SpectralField, grid: GridSpec) -> SpectralField:
    """Spectral zero-padding / truncation onto a grid with the same dimension.

    The coefficient lattice index k is preserved, so the domain length of
    ``grid`` is taken as given (no change of frequencies for equal lengths).
    """
    if grid.dimension != f.grid.dimension:
        raise ValueError("resample cannot change the dimension")
    n_old, n_new = f.grid.points, grid.points
    out = np.zeros((f.components,) + grid.spectral_shape, dtype=complex)
    m = min(n_old, n_new) // 2
    if f.grid.dimension == 1:
        out[:, :m] = f.coeffs[:, :m]
    else:
        out[:, :m, :m] = f.coeffs[:, :m, :m]
        out[:, -m + 1 :, :m] = f.coeffs[:, -m + 1 :, :m]
    return SpectralField(grid, out)


# --- snapshot files ---------------------------------------------------------

_HEADER = struct.Struct("<iidid")  # dimension, N, L, components, time


def write_snapshot(path, f: SpectralField, time: float) -> None:
    """Binary snapshot: header then row-major little-endian float64 samples."""
    vals = inverse_array(f.grid, f.coeffs)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(f.grid.dimension, f.grid.points, float(f.grid.length), f.components, float(time)))
        fh.write(np.ascontiguousarray(vals, dtype="<f8").tobytes())


def read_snapshot(path):
    """Returns (grid, samples of shape (components, *grid.shape), time)."""
    raw = Path(path).read_bytes()
    dim, n, length, comps, t = _HEADER.unpack_from(raw)
    grid = GridSpec(dim, n, length)
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape((comps,) + grid.shape)
    return grid, vals.copy(), t


def write_csv_1d(path, f: SpectralField, names=None) -> None:
    if f.grid.dimension != 1:
        raise ValueError("CSV export is only available for d = 1")
    vals = inverse_array(f.grid, f.coeffs)
    x = np.arange(f.grid.points) * f.grid.spacing
    names = names or [f"c{i}" for i in range(f.components)]
    with open(path, "w") as fh:
        fh.write(",".join(["x"] + list(names)) + "\n")
        for i in range(f.grid.points):
            fh.write(",".join(repr(float(v)) for v in [x[i], *vals[:, i]]) + "\n")
