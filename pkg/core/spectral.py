"""
Periodic pseudospectral operators on GridSpec fields.

Fourier multipliers act exactly on the frequency lattice pi*n/L. Real fields
go through the real-to-complex transform; the multiplier tables are cached per
(grid, s, mass) and are read-only once built.
"""

from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import numpy as np
import scipy.fft as sfft

from core.models import FractionalOrder, GridSpec, RealField, SpectralField
from utils.exceptions import DataValidationError, GridMismatchError


class PointwiseOp(str, Enum):
    """Elementwise field operations."""

    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    POW = "pow"
    POSITIVE_PART = "positive_part"


@lru_cache(maxsize=32)
def _wavenumbers(grid: GridSpec, real: bool):
    """Per-axis broadcastable wavenumbers on the (r)fft lattice."""
    m, h, n = grid.points_per_axis, grid.spacing, grid.dimension
    full = 2.0 * np.pi * sfft.fftfreq(m, d=h)
    half = 2.0 * np.pi * sfft.rfftfreq(m, d=h)
    axes = []
    for ax in range(n):
        kx = half if (real and ax == n - 1) else full
        shape = [1] * n
        shape[ax] = kx.size
        axes.append(kx.reshape(shape))
    return tuple(axes)


@lru_cache(maxsize=32)
def _wavenumber_sq(grid: GridSpec, real: bool) -> np.ndarray:
    """Squared wavenumber magnitude |xi|^2 on the lattice.

    Args:
        grid: Grid the table is built for.
        real: Use the half lattice of rfftn when True, the full one otherwise.

    Returns:
        Read-only array broadcast to the transform shape.
    """
    total = 0.0
    for kx in _wavenumbers(grid, real):
        total = total + kx * kx
    table = np.asarray(total, dtype=float)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=64)
def symbol(grid: GridSpec, s: float, mass: float = 0.0) -> np.ndarray:
    """Fourier symbol |xi|^(2s) + mass on the rfft lattice.

    Args:
        grid: Grid the table is built for.
        s: Fractional order.
        mass: Constant added to every mode.

    Returns:
        Read-only table shared by all callers with the same arguments.
    """
    table = _wavenumber_sq(grid, True) ** s + mass
    table.setflags(write=False)
    return table


@lru_cache(maxsize=64)
def _inverse_symbol(grid: GridSpec, s: float, mass: float) -> np.ndarray:
    table = 1.0 / symbol(grid, s, mass)
    table.setflags(write=False)
    return table


def apply_multiplier(samples: np.ndarray, grid: GridSpec, multiplier: np.ndarray) -> np.ndarray:
    """Apply an rfft-lattice multiplier to a real array."""
    axes = tuple(range(grid.dimension))
    coeffs = sfft.rfftn(samples, axes=axes)
    return sfft.irfftn(coeffs * multiplier, s=grid.shape, axes=axes)


def frac_laplacian_array(samples: np.ndarray, grid: GridSpec, s: float) -> np.ndarray:
    """(-Delta)^s applied to raw samples.

    Args:
        samples: Real array of shape ``grid.shape``.
        grid: Grid the samples live on.
        s: Fractional order in (0, 1].

    Returns:
        Real array of the same shape.
    """
    return apply_multiplier(samples, grid, symbol(grid, s))


def resolvent_array(samples: np.ndarray, grid: GridSpec, s: float, mass: float = 1.0) -> np.ndarray:
    """((-Delta)^s + mass)^(-1) applied to raw samples; ``mass`` must be positive."""
    return apply_multiplier(samples, grid, _inverse_symbol(grid, s, mass))


def forward_transform(f: RealField) -> SpectralField:
    """Unnormalized N-dimensional DFT of a real field."""
    return SpectralField(f.grid, sfft.fftn(f.samples))


def inverse_transform(F: SpectralField) -> RealField:
    """Inverse of forward_transform; the imaginary round-off is dropped."""
    return RealField(F.grid, np.real(sfft.ifftn(F.coefficients)))


def frac_laplacian(f: RealField, s: Union[FractionalOrder, float]) -> RealField:
    """(-Delta)^s f through the multiplier |xi|^(2s)."""
    order = FractionalOrder.coerce(s)
    return f.with_samples(frac_laplacian_array(f.samples, f.grid, order.value))


def resolvent(g: RealField, s: Union[FractionalOrder, float], mass: float) -> RealField:
    """((-Delta)^s + mass)^(-1) g."""
    if not mass > 0:
        raise DataValidationError(f"resolvent mass must be positive, got {mass}")
    order = FractionalOrder.coerce(s)
    return g.with_samples(resolvent_array(g.samples, g.grid, order.value, float(mass)))


def derivative_array(samples: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    """Spectral d/dx_axis; the Nyquist mode of that axis is dropped."""
    kx = _wavenumbers(grid, True)[axis].copy()
    m = grid.points_per_axis
    nyquist = np.isclose(np.abs(kx), np.pi * m / (2.0 * grid.half_width))
    kx[nyquist] = 0.0
    return apply_multiplier(samples, grid, 1j * kx)


def partial_derivative(f: RealField, axis: int = 0) -> RealField:
    return f.with_samples(derivative_array(f.samples, f.grid, axis))


def integrate(f: Union[RealField, np.ndarray], grid: Optional[GridSpec] = None) -> float:
    """Trapezoidal rule on the periodic grid: cell_volume * sum."""
    if isinstance(f, RealField):
        return float(f.grid.cell_volume * np.sum(f.samples))
    return float(grid.cell_volume * np.sum(f))


def inner(f: RealField, g: RealField) -> float:
    """Integral of f*g."""
    _require_same_grid(f, g)
    return float(f.grid.cell_volume * np.sum(f.samples * g.samples))


def parseval_integral(F: SpectralField) -> float:
    """Integral of f^2 evaluated from the coefficients."""
    grid = F.grid
    return float(grid.cell_volume * np.sum(np.abs(F.coefficients) ** 2) / grid.size)


def _require_same_grid(f: RealField, g: RealField) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"grid mismatch: {f.grid} vs {g.grid}")


def pointwise(f: RealField, g: Union[RealField, float, None], op: Union[PointwiseOp, str]) -> RealField:
    """Elementwise f (op) g; positive_part ignores g."""
    op = PointwiseOp(op)
    if op is PointwiseOp.POSITIVE_PART:
        return f.with_samples(np.maximum(f.samples, 0.0))
    if isinstance(g, RealField):
        _require_same_grid(f, g)
        other = g.samples
    elif g is None:
        raise DataValidationError(f"operation {op.value} needs a second operand")
    else:
        other = float(g)
    if op is PointwiseOp.ADD:
        out = f.samples + other
    elif op is PointwiseOp.SUB:
        out = f.samples - other
    elif op is PointwiseOp.MUL:
        out = f.samples * other
    else:
        with np.errstate(invalid="ignore"):
            out = np.power(f.samples, other)
    return f.with_samples(out)


def positive_power_array(samples: np.ndarray, p: float, grid: Optional[GridSpec] = None,
                         pad: int = 1) -> np.ndarray:
    """u_+^p, formed on a grid zero-padded by ``pad`` when pad > 1."""
    if pad <= 1:
        return np.maximum(samples, 0.0) ** p
    axes = tuple(range(samples.ndim))
    m = samples.shape[0]
    extra = (pad - 1) * m // 2
    coeffs = sfft.fftshift(sfft.fftn(samples), axes=axes)
    padded = np.pad(coeffs, [(extra, extra)] * samples.ndim)
    scale = float(pad) ** samples.ndim
    fine = np.real(sfft.ifftn(sfft.ifftshift(padded, axes=axes))) * scale
    fine_coeffs = sfft.fftshift(sfft.fftn(np.maximum(fine, 0.0) ** p), axes=axes)
    window = tuple(slice(extra, extra + m) for _ in axes)
    back = sfft.ifftn(sfft.ifftshift(fine_coeffs[window], axes=axes)) / scale
    return np.real(back)


def power(f: RealField, p: float, pad: int = 1) -> RealField:
    """f_+^p with optional dealiasing by zero-padding."""
    return f.with_samples(positive_power_array(f.samples, p, f.grid, pad))


def truncation_estimate(grid: GridSpec, s: Union[FractionalOrder, float]) -> float:
    """Size L^-(N+2s-1) of the box-truncation error of tail-sensitive quantities."""
    order = FractionalOrder.coerce(s)
    return grid.half_width ** (-(grid.dimension + 2.0 * order.value - 1.0))
