"""Nonlocal interaction kernels K_eps = L_eps * L_eps, described by radial Fourier symbols.

Three kinds are supported:

``bessel``
    L^(xi) = (1 + (eps |xi|)^2)^(-m/2), the default family.
``identity``
    K^ == 1, i.e. the classical local pressure (no smoothing).
``triangle``
    The tent kernel c_d eps^-d (1 - |x|/eps)_+.  Its one-dimensional symbol
    sinc^2(eps xi / 2) has zeros, so it violates the two-sided doubling
    condition; it is meant for the particle model and the micro/macro comparison.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

KINDS = ("bessel", "identity", "triangle")


class FrequencyClass(str, enum.Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class KernelFamily:
    """Parameters of the kernel family (eps, m, nu0, kappa).

    ``kappa=None`` selects the sharp doubling constant of the kind
    (2^-m for ``bessel``, 1 for ``identity``).
    """

    epsilon: float = 0.1
    m: float = 2.0
    nu0: float = 0.05
    kappa: Optional[float] = None
    kind: str = "bessel"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.m < 0:
            raise ValueError(f"m must be nonnegative, got {self.m}")
        if not self.nu0 > 0:
            raise ValueError(f"nu0 must be positive, got {self.nu0}")
        if self.kappa is not None and not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")

    @classmethod
    def default(cls, dimension: int, epsilon: float = 0.1, **kw) -> "KernelFamily":
        """Bessel family with m = d + 1."""
        kw.setdefault("m", float(dimension + 1))
        return cls(epsilon=epsilon, **kw)

    @property
    def doubling_constant(self) -> float:
        if self.kappa is not None:
            return self.kappa
        if self.kind == "bessel":
            return 2.0 ** (-self.m)
        return 1.0

    def rescaled(self, factor: float) -> "KernelFamily":
        """Kernel with eps replaced by factor * eps (identity is unchanged)."""
        if self.kind == "identity":
            return self
        return replace(self, epsilon=self.epsilon * factor)

    def L(self, xi):
        return symbol_L(self, xi)

    def K(self, xi):
        return symbol_K(self, xi)


def _check_finite(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("kernel symbol evaluated at a non-finite frequency")
    return xi


def symbol_L(k: KernelFamily, xi):
    """L^_eps(|xi|).  Accepts scalars or arrays of frequency magnitudes."""
    xi = np.abs(_check_finite(xi))
    if k.kind == "identity":
        out = np.ones_like(xi)
    elif k.kind == "bessel":
        out = (1.0 + (k.epsilon * xi) ** 2) ** (-0.5 * k.m)
    else:
        # box of width eps: its square is the 1-D tent kernel
        out = np.sinc(k.epsilon * xi / (2.0 * np.pi))
    return out if out.ndim else float(out)


def symbol_K(k: KernelFamily, xi):
    """K^_eps = (L^_eps)^2."""
    out = np.asarray(symbol_L(k, xi)) ** 2
    return out if out.ndim else float(out)


def _symbol_derivative(k: KernelFamily, xi: np.ndarray) -> np.ndarray:
    if k.kind == "identity":
        return np.zeros_like(xi)
    if k.kind == "bessel":
        e2 = k.epsilon**2
        return -k.m * e2 * xi * (1.0 + e2 * xi**2) ** (-0.5 * k.m - 1.0)
    h = 1e-6 * np.maximum(xi, 1e-3)
    return (symbol_L(k, xi + h) - symbol_L(k, xi - h)) / (2 * h)


@dataclass
class HypothesisReport:
    range_ok: bool
    monotone_ok: bool
    doubling_ok: bool
    derivative_bound_ok: bool
    worst_ratio: float
    upper_ratio: float
    derivative_constant: float
    kappa: float

    @property
    def all_ok(self) -> bool:
        return self.range_ok and self.monotone_ok and self.doubling_ok and self.derivative_bound_ok


def verify_hypotheses(
    k: KernelFamily,
    xi_samples: Sequence[float],
    symbol: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> HypothesisReport:
    """Check range, monotonicity, two-sided doubling and |xi L'| <= C L on samples.

    ``symbol`` overrides the family's L^ (used to probe symbols outside the
    supported kinds); its derivative is then taken by central differences.
    """
    xi = np.sort(np.asarray(xi_samples, dtype=float).ravel())
    if xi.size < 2:
        raise ValueError("verify_hypotheses needs at least two frequency samples")
    if np.any(xi <= 0) or not np.all(np.isfinite(xi)):
        raise ValueError("frequency samples must be positive and finite")

    if symbol is None:
        Lf = lambda s: np.asarray(symbol_L(k, s), dtype=float)
        dL = _symbol_derivative(k, xi)
    else:
        Lf = lambda s: np.asarray(symbol(np.asarray(s, dtype=float)), dtype=float)
        h = 1e-6 * xi
        dL = (Lf(xi + h) - Lf(xi - h)) / (2 * h)

    kappa = k.doubling_constant
    L1 = Lf(xi)
    L2 = Lf(2 * xi)
    range_ok = bool(np.all((L1 >= 0) & (L1 <= 1)) and abs(float(Lf(np.array([0.0]))[0]) - 1) < 1e-14)
    monotone_ok = bool(np.all(np.diff(L1) <= 1e-15))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(L1 > 0, L2 / L1, 0.0)
        dconst = np.where(L1 > 0, np.abs(xi * dL) / L1, np.inf)
    worst = float(np.min(ratio))
    upper = float(np.max(ratio))
    tol = 1e-12
    doubling_ok = bool(
        np.all(L1 > 0) and np.all(kappa * L1 <= L2 * (1 + tol)) and np.all(L2 <= L1 / kappa * (1 + tol))
    )
    C = float(np.max(dconst))
    return HypothesisReport(
        range_ok=range_ok,
        monotone_ok=monotone_ok,
        doubling_ok=doubling_ok,
        derivative_bound_ok=bool(np.isfinite(C)),
        worst_ratio=worst,
        upper_ratio=upper,
        derivative_constant=C,
        kappa=kappa,
    )


def frequency_class(k: KernelFamily, j: int) -> FrequencyClass:
    """Low iff 2^j L^_eps(2^j) < nu0."""
    r = 2.0**j
    return FrequencyClass.LOW if r * symbol_L(k, r) < k.nu0 else FrequencyClass.HIGH


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class TriangleKernel:
    """K_eps(x) = c_d eps^-d (1 - |x|/eps) on the ball B(0, eps)."""

    epsilon: float
    dimension: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def c_d(self) -> float:
        # unit mass: c_d |S^{d-1}| / (d (d+1)) = 1
        d = self.dimension
        return d * (d + 1) / _sphere_area(d)

    @property
    def support_radius(self) -> float:
        return self.epsilon

    def value(self, x) -> np.ndarray:
        r = _radius(x, self.dimension)
        e = self.epsilon
        return np.where(r < e, self.c_d * e**-self.dimension * (1 - r / e), 0.0)

    def gradient(self, x) -> np.ndarray:
        return triangle_gradient(self, x)

    def symbol(self, xi):
        if self.dimension != 1:
            raise NotImplementedError("closed-form triangle symbol is only provided for d = 1")
        return symbol_K(KernelFamily(epsilon=self.epsilon, kind="triangle"), xi)


def _radius(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return np.abs(x)
    return np.sqrt(np.sum(x**2, axis=-1))


def triangle_gradient(k: TriangleKernel, x) -> np.ndarray:
    """Gradient of the tent kernel: -c_d eps^(-d-1) x/|x| inside the ball.

    Zero outside the support and at x = 0.  In d = 1 a plain array of
    displacements is accepted and an array of the same shape is returned;
    otherwise ``x`` has shape (..., d).
    """
    x = np.asarray(x, dtype=float)
    d = k.dimension
    e = k.epsilon
    scale = -k.c_d * e ** (-d - 1)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return np.where(np.abs(x) < e, scale * np.sign(x), 0.0)
    r = np.sqrt(np.sum(x**2, axis=-1, keepdims=True))
    inside = (r < e) & (r > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(inside, scale * x / np.where(r > 0, r, 1.0), 0.0)
    return g
