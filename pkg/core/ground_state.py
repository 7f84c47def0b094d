"""
Ground state of (-Delta)^s w + w = w^p on the periodic box.

A Petviashvili stage with stabilizing factor M^(p/(p-1)) brings a positive
guess into the basin, a Newton stage (GMRES preconditioned by the resolvent)
polishes to the residual target. Every iterate is averaged over the
hyperoctahedral symmetries of the grid, which are exact grid maps; the
initial guess is also averaged over radial shells.

The tail law w ~ A/|x|^(N+2s) is fitted against the periodized kernel
sum_n |x - 2Ln|^-(N+2s) so that image contributions do not bias A.
"""

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres, lobpcg
from scipy.special import gamma as gamma_fn

from core.models import (
    FractionalOrder,
    GridSpec,
    GroundState,
    GroundStateIntegrals,
    NondegeneracyReport,
    RadialProfile,
    RealField,
    check_subcritical,
)
from core.spectral import (
    apply_multiplier,
    derivative_array,
    positive_power_array,
    resolvent_array,
    symbol,
)
from utils.artifacts import read_field, read_sidecar, write_field, write_sidecar
from utils.exceptions import (
    EigensolverStagnationError,
    FieldFormatError,
    GroundStateConvergenceError,
    TailFitError,
)
from utils.logging import get_logger

logger = get_logger(__name__)


@dataclass
class GroundStateOptions:
    """Knobs of the ground-state solver."""

    max_iter: int = 2000
    tol: float = 1e-9
    damping: float = 0.9
    newton_switch: float = 1e-6
    newton_max_iter: int = 30
    dealias: int = 1
    radial_oversampling: int = 8
    tail_images: int = 3
    tail_fit_threshold: float = 0.05


def reflect(samples: np.ndarray, axis: int) -> np.ndarray:
    """x_axis -> -x_axis on the periodic grid."""
    return np.roll(np.flip(samples, axis=axis), 1, axis=axis)


def group_symmetrize(samples: np.ndarray) -> np.ndarray:
    """Average over axis permutations and reflections."""
    n = samples.ndim
    acc = np.zeros_like(samples)
    count = 0
    for perm in itertools.permutations(range(n)):
        permuted = np.transpose(samples, perm)
        for flips in itertools.product((False, True), repeat=n):
            image = permuted
            for ax, flip in enumerate(flips):
                if flip:
                    image = reflect(image, ax)
            acc += image
            count += 1
    return acc / count


def shell_average(samples: np.ndarray, grid: GridSpec, radius: Optional[np.ndarray] = None) -> np.ndarray:
    """Average over radial shells of width h, linearly interpolated back."""
    if radius is None:
        radius = grid.radius()
    h = grid.spacing
    bins = np.floor(radius / h).astype(np.int64).ravel()
    counts = np.bincount(bins)
    filled = counts > 0
    means = np.bincount(bins, weights=samples.ravel())[filled] / counts[filled]
    centers = np.bincount(bins, weights=radius.ravel())[filled] / counts[filled]
    return np.interp(radius, centers, means)


def initial_profile(grid: GridSpec, p: float) -> np.ndarray:
    """Gaussian start of height ((p+1)/2)^(1/(p-1)), the 1D NLS peak."""
    amplitude = ((p + 1.0) / 2.0) ** (1.0 / (p - 1.0))
    return amplitude * np.exp(-0.5 * grid.radius() ** 2)


def ground_state_residual(profile: RealField, s: Union[FractionalOrder, float], p: float,
                          dealias: int = 1) -> float:
    """||(-Delta)^s w + w - w^p||_inf / ||w^p||_inf."""
    order = FractionalOrder.coerce(s)
    grid = profile.grid
    w = profile.samples
    wp = positive_power_array(w, p, grid, dealias)
    lw = apply_multiplier(w, grid, symbol(grid, order.value, 1.0))
    return float(np.max(np.abs(lw - wp)) / np.max(np.abs(wp)))


def _petviashvili(w: np.ndarray, grid: GridSpec, s: float, p: float,
                  opts: GroundStateOptions) -> Tuple[np.ndarray, float, int]:
    """Stabilized fixed-point iteration w <- M^gamma (L^-1 w^p).

    Args:
        w: Starting samples, already symmetrized.
        grid: Grid of the samples.
        s: Fractional order.
        p: Nonlinearity exponent.
        opts: Damping, iteration cap and the residual at which to stop.

    Returns:
        (samples, relative residual, iterations used)
    """
    lin = symbol(grid, s, 1.0)
    gamma = p / (p - 1.0)
    residual = math.inf
    iteration = 0
    for iteration in range(1, opts.max_iter + 1):
        wp = positive_power_array(w, p, grid, opts.dealias)
        lw = apply_multiplier(w, grid, lin)
        residual = float(np.max(np.abs(lw - wp)) / np.max(np.abs(wp)))
        if residual <= opts.newton_switch:
            break
        stabilizer = np.sum(w * lw) / np.sum(w * wp)
        update = stabilizer ** gamma * resolvent_array(wp, grid, s, 1.0)
        w = opts.damping * update + (1.0 - opts.damping) * w
        w = group_symmetrize(w)
        if iteration % 50 == 0:
            logger.debug("petviashvili progress", iteration=iteration, residual=residual,
                         stabilizer=float(stabilizer))
    return w, residual, iteration


def _newton(w: np.ndarray, grid: GridSpec, s: float, p: float,
            opts: GroundStateOptions) -> Tuple[np.ndarray, float, int]:
    """Newton-GMRES polish preconditioned by the resolvent.

    Returns:
        (samples, relative residual, Newton steps taken)

    Raises:
        GroundStateConvergenceError: If GMRES breaks down.
    """
    lin = symbol(grid, s, 1.0)
    shape, n = grid.shape, grid.size
    precond = LinearOperator((n, n), dtype=float,
                             matvec=lambda v: resolvent_array(v.reshape(shape), grid, s, 1.0).ravel())
    residual = math.inf
    step = 0
    for step in range(opts.newton_max_iter + 1):
        wp = positive_power_array(w, p, grid, opts.dealias)
        defect = apply_multiplier(w, grid, lin) - wp
        residual = float(np.max(np.abs(defect)) / np.max(np.abs(wp)))
        logger.debug("newton step", step=step, residual=residual)
        if residual <= opts.tol or step == opts.newton_max_iter:
            break
        potential = p * np.maximum(w, 0.0) ** (p - 1.0)

        def matvec(v, potential=potential):
            v = v.reshape(shape)
            return (apply_multiplier(v, grid, lin) - potential * v).ravel()

        jacobian = LinearOperator((n, n), matvec=matvec, dtype=float)
        delta, info = gmres(jacobian, -defect.ravel(), M=precond, rtol=1e-11, atol=0.0,
                            restart=80, maxiter=20)
        if info < 0:
            raise GroundStateConvergenceError("GMRES breakdown in Newton stage", iterations=step,
                                              residual=residual)
        w = group_symmetrize(w + delta.reshape(shape))
    return w, residual, step


def _image_shifts(dimension: int, images: int) -> np.ndarray:
    rng = range(-images, images + 1)
    shifts = [n for n in itertools.product(rng, repeat=dimension) if any(n)]
    return np.asarray(shifts, dtype=float).reshape(-1, dimension)


def _image_remainder(dimension: int, half_width: float, nu: float, images: int) -> float:
    """Integral estimate of the periodic images beyond the explicit shell."""
    sphere = 2.0 * math.pi ** (dimension / 2.0) / gamma_fn(dimension / 2.0)
    radius = images + 0.5
    return (2.0 * half_width) ** (-nu) * sphere * radius ** (dimension - nu) / (nu - dimension)


def image_kernel(points: np.ndarray, half_width: float, nu: float, images: int,
                 include_primary: bool = True) -> np.ndarray:
    """sum over the periodic images of |x - 2Ln|^-nu at the given points."""
    points = np.atleast_2d(points)
    dimension = points.shape[1]
    total = np.zeros(points.shape[0])
    if include_primary:
        total += np.linalg.norm(points, axis=1) ** (-nu)
    if images <= 0:
        return total
    for shift in _image_shifts(dimension, images):
        total += np.linalg.norm(points - 2.0 * half_width * shift, axis=1) ** (-nu)
    return total + _image_remainder(dimension, half_width, nu, images)


def _image_kernel_slope(t: np.ndarray, dimension: int, half_width: float, nu: float,
                        images: int) -> np.ndarray:
    """d/dt of the image part of the kernel along the x1 axis."""
    if images <= 0:
        return np.zeros_like(t)
    points = np.zeros((t.size, dimension))
    points[:, 0] = t
    total = np.zeros(t.size)
    for shift in _image_shifts(dimension, images):
        y = points - 2.0 * half_width * shift
        dist = np.linalg.norm(y, axis=1)
        total += -nu * dist ** (-nu - 2.0) * y[:, 0]
    return total


def _annulus(grid: GridSpec):
    radius = grid.radius()
    mask = (radius >= grid.half_width / 4.0) & (radius <= 0.45 * grid.half_width)
    points = np.stack([np.broadcast_to(x, grid.shape)[mask] for x in grid.coordinates()], axis=1)
    return mask, points, radius[mask]


def fit_tail_amplitude(profile: RealField, s: Union[FractionalOrder, float], images: int = 3,
                       threshold: float = 0.05) -> Tuple[float, float]:
    """Least-squares A of w ~ A|x|^-(N+2s) on the annulus L/4 <= |x| <= 0.45L.

    Returns (A, fitted decay exponent). ``images = 0`` fits the free-space law.
    """
    order = FractionalOrder.coerce(s)
    grid = profile.grid
    nu = grid.dimension + 2.0 * order.value
    mask, points, radii = _annulus(grid)
    values = profile.samples[mask]
    if values.size < 4:
        raise TailFitError("annulus holds too few samples for a tail fit")
    kernel = image_kernel(points, grid.half_width, nu, images)
    amplitude = float(np.dot(values, kernel) / np.dot(kernel, kernel))
    misfit = float(np.sqrt(np.mean((values - amplitude * kernel) ** 2) / np.mean(values ** 2)))
    if misfit > threshold or amplitude <= 0:
        raise TailFitError(
            f"tail fit residual {misfit:.3g} above {threshold}; tail under-resolved",
            details={"misfit": misfit, "amplitude": amplitude},
        )
    free_space = values * radii ** (-nu) / kernel
    slope = np.polyfit(np.log(radii), np.log(free_space), 1)[0]
    return amplitude, float(-slope)


def radial_profile(profile: RealField, s: Union[FractionalOrder, float], amplitude: float,
                   images: int = 3, oversampling: int = 8) -> RadialProfile:
    """Free-space radial table of w from its x1-axis slice.

    The slice is trigonometrically interpolated to spacing h/oversampling, the
    periodic images are removed with the fitted amplitude, and the power law
    (the exponential law when s = 1) takes over beyond 0.45L.
    """
    order = FractionalOrder.coerce(s)
    grid = profile.grid
    nu = grid.dimension + 2.0 * order.value
    m, L = grid.points_per_axis, grid.half_width
    index = (slice(None),) + grid.center_index[1:]
    line = np.asarray(profile.samples[index])

    coeffs = sfft.rfft(line)
    coeffs[-1] *= 0.5
    k = 2.0 * np.pi * sfft.rfftfreq(m, d=grid.spacing)
    slope_coeffs = 1j * k * coeffs
    slope_coeffs[-1] = 0.0
    fine_n = m * oversampling
    values = sfft.irfft(coeffs, n=fine_n) * oversampling
    slopes = sfft.irfft(slope_coeffs, n=fine_n) * oversampling

    start = (m // 2) * oversampling
    radii = grid.spacing / oversampling * np.arange(fine_n - start)
    values = values[start:]
    slopes = slopes[start:]
    keep = radii <= 0.5 * L
    radii, values, slopes = radii[keep], values[keep], slopes[keep]

    points = np.zeros((radii.size, grid.dimension))
    points[:, 0] = radii
    values = values - amplitude * image_kernel(points, L, nu, images, include_primary=False)
    slopes = slopes - amplitude * _image_kernel_slope(radii, grid.dimension, L, nu, images)
    slopes[0] = 0.0
    if order.classical:
        return _exponential_table(radii, values, slopes, grid.dimension, 0.45 * L)
    return RadialProfile(radii, values, slopes, amplitude, nu, cutoff=0.45 * L)


def _exponential_table(radii: np.ndarray, values: np.ndarray, slopes: np.ndarray, dimension: int,
                       cutoff: float) -> RadialProfile:
    """Table continued by A t^(-(N-1)/2) e^(-t), matched in value at the cutoff."""
    decay = 0.5 * (dimension - 1)
    edge = int(np.searchsorted(radii, cutoff, side="right")) - 1
    t = float(radii[edge])
    amplitude = max(float(values[edge]), 0.0) * t ** decay * math.exp(t)
    return RadialProfile(radii, values, slopes, amplitude, decay, cutoff=t, exponential=True)


def _half_max_radius(radial: RadialProfile) -> float:
    peak = radial.values[0]
    below = np.nonzero(radial.values <= 0.5 * peak)[0]
    return float(radial.radii[below[0]]) if below.size else float(radial.radii[-1])


def ground_state_integrals(profile: RealField, p: float) -> GroundStateIntegrals:
    """Grid quadratures of w^2, w_+^(p+1), w_+^p and (dw/dx1)^2.

    Args:
        profile: Converged ground state.
        p: Nonlinearity exponent.

    Returns:
        GroundStateIntegrals with the four values.
    """
    grid = profile.grid
    w = np.maximum(profile.samples, 0.0)
    dw = derivative_array(profile.samples, grid, 0)
    dv = grid.cell_volume
    return GroundStateIntegrals(
        Iw2=float(dv * np.sum(profile.samples ** 2)),
        Iwp1=float(dv * np.sum(w ** (p + 1.0))),
        Iwp=float(dv * np.sum(w ** p)),
        Idw2=float(dv * np.sum(dw ** 2)),
    )


def finalize_ground_state(profile: RealField, s: Union[FractionalOrder, float], p: float,
                          residual: float, iterations: int,
                          opts: Optional[GroundStateOptions] = None) -> GroundState:
    """Attach tail law, radial table and integrals to a converged profile.

    The classical mode decays exponentially; it gets no power-law tail, and
    its table is continued by the exponential law instead.
    """
    opts = opts or GroundStateOptions()
    order = FractionalOrder.coerce(s)
    if order.classical:
        amplitude, exponent = 0.0, math.nan
        radial = radial_profile(profile, order, 0.0, 0, opts.radial_oversampling)
    else:
        amplitude, exponent = fit_tail_amplitude(profile, order, opts.tail_images,
                                                 opts.tail_fit_threshold)
        radial = radial_profile(profile, order, amplitude, opts.tail_images, opts.radial_oversampling)
    return GroundState(
        profile=profile,
        s=order,
        p=float(p),
        tail_amplitude=amplitude,
        decay_exponent=exponent,
        integrals=ground_state_integrals(profile, p),
        residual=residual,
        iterations=iterations,
        radial=radial,
        width=_half_max_radius(radial),
    )


def compute_ground_state(grid: GridSpec, s: Union[FractionalOrder, float], p: float,
                         opts: Optional[GroundStateOptions] = None) -> GroundState:
    """Positive radial least-energy solution of (-Delta)^s w + w = w^p."""
    opts = opts or GroundStateOptions()
    order = FractionalOrder.coerce(s)
    check_subcritical(grid.dimension, order.value, p)
    logger.info("ground state solve", N=grid.dimension, L=grid.half_width,
                M=grid.points_per_axis, s=order.value, p=p)

    w = group_symmetrize(shell_average(initial_profile(grid, p), grid))
    w, residual, sweeps = _petviashvili(w, grid, order.value, p, opts)
    if residual > 1e-2:
        raise GroundStateConvergenceError(
            f"Petviashvili stage stalled at residual {residual:.3e}", iterations=sweeps,
            residual=residual,
        )
    w, residual, steps = _newton(w, grid, order.value, p, opts)
    if residual > opts.tol:
        raise GroundStateConvergenceError(
            f"ground state residual {residual:.3e} above tolerance {opts.tol:.1e}",
            iterations=sweeps + steps, residual=residual,
        )
    floor = float(np.min(w))
    if floor < -10.0 * opts.tol * float(np.max(w)):
        raise GroundStateConvergenceError("converged profile is not positive",
                                          iterations=sweeps + steps, residual=residual)
    if floor <= 0:
        logger.warning("profile touches zero at round-off level", min=floor)

    profile = RealField(grid, w)
    core_cells = int(np.count_nonzero(w >= 0.5 * np.max(w)))
    if core_cells < 16:
        logger.warning("bump core spans fewer than 16 cells", cells=core_cells)
    state = finalize_ground_state(profile, order, p, residual, sweeps + steps, opts)
    if not radial_monotonicity_check(profile):
        logger.warning("profile is not radially decreasing along sampled rays")
    logger.info("ground state converged", iterations=sweeps + steps, residual=residual,
                peak=state.peak, A=state.tail_amplitude, decay_exponent=state.decay_exponent)
    return state


def _rays(grid: GridSpec):
    n, half = grid.dimension, grid.points_per_axis // 2
    directions = []
    for ax in range(n):
        for sign in (1, -1):
            d = np.zeros(n, dtype=int)
            d[ax] = sign
            directions.append(d)
    if n >= 2:
        for signs in itertools.product((1, -1), repeat=n):
            directions.append(np.asarray(signs, dtype=int))
    steps = np.arange(half)
    for d in directions:
        yield tuple(half + steps * di for di in d)


def radial_monotonicity_check(w: Union[RealField, GroundState], slack: float = 1e-10) -> bool:
    """True iff w decreases along every axis and diagonal ray from the origin."""
    field = w.profile if isinstance(w, GroundState) else w
    for ray in _rays(field.grid):
        values = field.samples[ray]
        if np.any(np.diff(values) >= slack):
            return False
    return True


def linearization(state: GroundState):
    """Matrix-free L+ = (-Delta)^s + 1 - p w^(p-1) acting on arrays."""
    grid = state.grid
    lin = symbol(grid, state.s.value, 1.0)
    potential = state.p * np.maximum(state.profile.samples, 0.0) ** (state.p - 1.0)

    def apply(v: np.ndarray) -> np.ndarray:
        return apply_multiplier(v, grid, lin) - potential * v

    return apply


def apply_linearization(state: GroundState, v: RealField) -> RealField:
    return v.with_samples(linearization(state)(v.samples))


def smallest_eigenpairs(apply, precond, grid: GridSpec, block: np.ndarray, tol: float = 1e-7,
                        maxiter: int = 500, constraints: Optional[np.ndarray] = None):
    """Smallest algebraic eigenpairs of a matrix-free symmetric operator by LOBPCG.

    Returns the eigenvalues and the residual norm of each pair.
    """
    shape, n = grid.shape, grid.size

    def matmat(X):
        X = X.reshape(n, -1)
        return np.column_stack([apply(X[:, j].reshape(shape)).ravel() for j in range(X.shape[1])])

    def prematmat(X):
        X = X.reshape(n, -1)
        return np.column_stack([precond(X[:, j].reshape(shape)).ravel() for j in range(X.shape[1])])

    A = LinearOperator((n, n), matvec=lambda v: matmat(v).ravel(), matmat=matmat, dtype=float)
    T = LinearOperator((n, n), matvec=lambda v: prematmat(v).ravel(), matmat=prematmat, dtype=float)
    values, vectors = lobpcg(A, block, M=T, Y=constraints, tol=tol, maxiter=maxiter,
                            largest=False)
    residuals = np.linalg.norm(matmat(vectors) - vectors * values, axis=0)
    return values, residuals


def check_nondegeneracy(state: GroundState, count: int, threshold: float = 1e-4,
                        tol: float = 1e-7, maxiter: int = 500, seed: int = 0) -> NondegeneracyReport:
    """Smallest-magnitude eigenvalues of L+ and the gap of its even sector."""
    grid = state.grid
    s = state.s.value
    apply = linearization(state)
    rng = np.random.default_rng(seed)

    def precond(v):
        return resolvent_array(v, grid, s, 1.0)

    block = rng.standard_normal((grid.size, count + 1))
    values, residuals = smallest_eigenpairs(apply, precond, grid, block, tol, maxiter)
    if np.max(residuals) > 1e-4:
        raise EigensolverStagnationError(
            f"eigenpairs unconverged, largest residual {np.max(residuals):.3e}",
            iterations=maxiter, residual=float(np.max(residuals)),
        )
    by_magnitude = sorted(values.tolist(), key=abs)[:count]

    def sym_precond(v):
        return group_symmetrize(resolvent_array(v, grid, s, 1.0))

    sym_block = np.column_stack([
        group_symmetrize(rng.standard_normal(grid.shape)).ravel() for _ in range(3)
    ])
    sym_values, sym_residuals = smallest_eigenpairs(apply, sym_precond, grid, sym_block, tol, maxiter)
    if np.max(sym_residuals) > 1e-4:
        raise EigensolverStagnationError(
            f"symmetric-sector eigenpairs unconverged, residual {np.max(sym_residuals):.3e}",
            iterations=maxiter, residual=float(np.max(sym_residuals)),
        )

    near_zero = [v for v in by_magnitude if abs(v) < threshold]
    report = NondegeneracyReport(
        near_zero_count=len(near_zero),
        near_zero_eigenvalues=near_zero,
        symmetric_sector_gap=float(np.min(np.abs(sym_values))),
        eigenvalues=by_magnitude,
        symmetric_eigenvalues=sorted(sym_values.tolist()),
        threshold=threshold,
    )
    logger.info("nondegeneracy", near_zero_count=report.near_zero_count,
                symmetric_sector_gap=report.symmetric_sector_gap)
    return report


def save_ground_state(state: GroundState, out_dir: Union[str, Path],
                      stem: str = "ground_state") -> Tuple[Path, Path]:
    """Binary field plus key-value sidecar."""
    out_dir = Path(out_dir)
    field_path = write_field(out_dir / f"{stem}.fld", state.profile, state.s.value)
    sidecar_path = write_sidecar(out_dir / f"{stem}.meta", state.metadata())
    return field_path, sidecar_path


def load_ground_state(field_path: Union[str, Path], sidecar_path: Union[str, Path, None] = None,
                      opts: Optional[GroundStateOptions] = None) -> GroundState:
    """Rebuild a GroundState from its field file and sidecar."""
    field_path = Path(field_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else field_path.with_suffix(".meta")
    profile, s = read_field(field_path)
    meta = read_sidecar(sidecar_path)
    if "p" not in meta:
        raise FieldFormatError(f"sidecar {sidecar_path} does not record p")
    return finalize_ground_state(profile, s, float(meta["p"]), float(meta.get("residual", math.nan)),
                                 int(meta.get("iterations", 0)), opts)
