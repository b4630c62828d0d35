"""Base-function families for KAN edges, with analytic derivatives.

Four families are supported: cubic-by-default B-splines on a fixed uniform
grid, Chebyshev and Jacobi polynomials (input squashed to (-1, 1) by tanh),
raw Taylor monomials (input clamped to [-3, 3]) and Mexican-hat wavelets
with learnable translation/scale.  Every evaluator returns both the basis
values and their derivative w.r.t. the raw input, including the chain
factor of any squash/clamp, so layers can assemble exact gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError

POLY_FAMILIES = ("chebyshev", "jacobi", "taylor")


@dataclass(frozen=True)
class SplineGrid:
    """Uniform extended knot vector covering ``[lo, hi]``.

    ``degree`` extra knots are appended on each side, giving
    ``grid_size + degree`` basis functions.
    """

    knots: np.ndarray
    degree: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.degree < 1:
            raise ConfigError(f"spline degree must be >= 1, got {self.degree}")
        if not np.all(np.diff(self.knots) > 0):
            raise ConfigError("knot vector must be strictly increasing")

    @classmethod
    def uniform(cls, grid_size: int = 5, degree: int = 3,
                lo: float = -2.0, hi: float = 2.0) -> "SplineGrid":
        if grid_size < 1 or hi <= lo:
            raise ConfigError(f"bad grid spec: size={grid_size}, domain=[{lo}, {hi}]")
        h = (hi - lo) / grid_size
        knots = lo + h * np.arange(-degree, grid_size + degree + 1, dtype=np.float64)
        return cls(knots=knots, degree=degree, lo=float(lo), hi=float(hi))

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1


@dataclass
class BasisEval:
    """Basis values and their derivative w.r.t. the raw input."""

    values: np.ndarray    # [batch, n_basis]
    d_values: np.ndarray  # [batch, n_basis]


@dataclass
class WaveletBasisEval(BasisEval):
    d_translations: np.ndarray = field(default=None)  # [batch, n_basis]
    d_scales: np.ndarray = field(default=None)        # [batch, n_basis]


def bspline_basis(x: np.ndarray, grid: SplineGrid) -> BasisEval:
    """Cox-de Boor evaluation; inputs are clamped to the grid domain.

    The clamp's chain factor zeroes d_values outside ``[lo, hi]``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    clamped = np.clip(x, grid.lo, grid.hi)
    values, d_values = kernels.bspline_eval(
        np.ascontiguousarray(clamped), np.ascontiguousarray(grid.knots), grid.degree
    )
    inside = ((x >= grid.lo) & (x <= grid.hi))[:, None]
    return BasisEval(values=values, d_values=d_values * inside)


def _chebyshev(z: np.ndarray, order: int):
    n = z.shape[0]
    vals = np.empty((n, order + 1))
    ders = np.empty((n, order + 1))
    vals[:, 0] = 1.0
    ders[:, 0] = 0.0
    if order >= 1:
        vals[:, 1] = z
        ders[:, 1] = 1.0
    for d in range(1, order):
        vals[:, d + 1] = 2.0 * z * vals[:, d] - vals[:, d - 1]
        ders[:, d + 1] = 2.0 * vals[:, d] + 2.0 * z * ders[:, d] - ders[:, d - 1]
    return vals, ders


def _jacobi(z: np.ndarray, order: int, a: float, b: float):
    n = z.shape[0]
    vals = np.empty((n, order + 1))
    ders = np.empty((n, order + 1))
    vals[:, 0] = 1.0
    ders[:, 0] = 0.0
    if order >= 1:
        vals[:, 1] = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * z
        ders[:, 1] = 0.5 * (a + b + 2.0)
    for d in range(2, order + 1):
        c1 = 2.0 * d * (d + a + b) * (2.0 * d + a + b - 2.0)
        c2 = (2.0 * d + a + b - 1.0) * (a * a - b * b)
        c3 = (2.0 * d + a + b - 2.0) * (2.0 * d + a + b - 1.0) * (2.0 * d + a + b)
        c4 = 2.0 * (d + a - 1.0) * (d + b - 1.0) * (2.0 * d + a + b)
        lin = c2 + c3 * z
        vals[:, d] = (lin * vals[:, d - 1] - c4 * vals[:, d - 2]) / c1
        ders[:, d] = (c3 * vals[:, d - 1] + lin * ders[:, d - 1] - c4 * ders[:, d - 2]) / c1
    return vals, ders


def poly_basis(x: np.ndarray, family: str, order: int,
               jacobi_a: float = 1.0, jacobi_b: float = 1.0) -> BasisEval:
    """Polynomial families via three-term recurrences.

    Chebyshev/Jacobi squash the input through tanh (their natural domain is
    (-1, 1)); Taylor clamps to [-3, 3] and uses raw monomials.  Derivatives
    carry the squash/clamp chain factor.
    """
    if order < 0:
        raise DomainError(f"polynomial order must be >= 0, got {order}")
    if family not in POLY_FAMILIES:
        raise ConfigError(f"unknown polynomial family {family!r}")
    x = np.asarray(x, dtype=np.float64).ravel()
    if family == "taylor":
        z = np.clip(x, -3.0, 3.0)
        chain = ((x >= -3.0) & (x <= 3.0)).astype(np.float64)
        n = x.shape[0]
        vals = np.empty((n, order + 1))
        ders = np.empty((n, order + 1))
        vals[:, 0] = 1.0
        ders[:, 0] = 0.0
        for d in range(1, order + 1):
            vals[:, d] = vals[:, d - 1] * z
            ders[:, d] = d * vals[:, d - 1]
        return BasisEval(values=vals, d_values=ders * chain[:, None])
    z = np.tanh(x)
    chain = 1.0 - z * z
    if family == "chebyshev":
        vals, ders = _chebyshev(z, order)
    else:
        vals, ders = _jacobi(z, order, jacobi_a, jacobi_b)
    return BasisEval(values=vals, d_values=ders * chain[:, None])


def wavelet_basis(x: np.ndarray, translations: np.ndarray,
                  scales: np.ndarray) -> WaveletBasisEval:
    """Mexican-hat wavelets psi((x - t_j) / s_j) with all three partials.

    psi(z) = 2/(sqrt(3) pi^(1/4)) * (1 - z^2) * exp(-z^2 / 2)
    """
    scales = np.asarray(scales, dtype=np.float64)
    if np.any(scales <= 0):
        raise DomainError("wavelet scales must be strictly positive")
    x = np.asarray(x, dtype=np.float64).ravel()
    t = np.asarray(translations, dtype=np.float64)
    z = (x[:, None] - t[None, :]) / scales[None, :]
    e = np.exp(-0.5 * z * z)
    values = kernels.MEXICAN_HAT_NORM * (1.0 - z * z) * e
    dpsi_dz = kernels.MEXICAN_HAT_NORM * e * (z ** 3 - 3.0 * z)
    d_x = dpsi_dz / scales[None, :]
    return WaveletBasisEval(
        values=values,
        d_values=d_x,
        d_translations=-d_x,
        d_scales=-dpsi_dz * z / scales[None, :],
    )


def silu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """SiLU activation and its derivative: y = x * sigmoid(x)."""
    x = np.asarray(x, dtype=np.float64)
    # exp of the negative magnitude only: no overflow for extreme inputs
    e = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return x * sig, sig * (1.0 + x * (1.0 - sig))
