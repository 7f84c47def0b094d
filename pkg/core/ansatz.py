"""
Multi-bump ansatz on a ring of spikes.

Translated bumps are sampled from the dense radial table of the ground state
with free-space distances, so every copy carries the power-law tail of w
rather than a periodic image of it.
"""

import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import map_coordinates

from core.models import (
    ErrorBoundReport,
    GridSpec,
    GroundState,
    InteractionRegime,
    PotentialSpec,
    ProblemParams,
    RadiusInterval,
    RealField,
    SpikeRing,
    WeightRho,
)
from core.ground_state import reflect
from core.spectral import frac_laplacian_array, positive_power_array
from utils.exceptions import (
    AdmissibilityError,
    ConfigurationError,
    DataValidationError,
    GridMismatchError,
    SpikePlacementError,
)
from utils.logging import get_logger

logger = get_logger(__name__)


def spike_positions(k: int, r: float, N: int) -> SpikeRing:
    """q_j = (r cos(2(j-1)pi/k), r sin(2(j-1)pi/k), 0, ..., 0)."""
    if N < 2:
        raise ConfigurationError(f"a ring of spikes needs N >= 2, got N = {N}")
    if k < 1:
        raise ConfigurationError(f"spike count must be positive, got k = {k}")
    if not r >= 0:
        raise ConfigurationError(f"ring radius must be nonnegative, got r = {r}")
    angles = 2.0 * np.pi * np.arange(k) / k
    positions = np.zeros((k, N))
    positions[:, 0] = r * np.cos(angles)
    positions[:, 1] = r * np.sin(angles)
    return SpikeRing(k, float(r), N, positions)


def admissible_radius_interval(k: int, N: int, s: float, m: float, C0: float) -> RadiusInterval:
    """I0 = [k^tau / C0, C0 k^tau] with tau = (N+2s)/(N+2s-m)."""
    nu = N + 2.0 * s
    if not 0 < m < nu:
        raise AdmissibilityError(f"potential exponent m = {m} outside (0, N+2s)",
                                 inequality=f"0 < m < N+2s = {nu:.6g}")
    tau = nu / (nu - m)
    center = float(k) ** tau
    return RadiusInterval(center / C0, center * C0, tau, C0)


def check_spike_placement(state: GroundState, spikes: SpikeRing, grid: GridSpec,
                          widths: float = 5.0) -> None:
    """Every spike must sit at least ``widths`` bump-widths inside the box."""
    margin = grid.half_width - np.max(np.abs(spikes.positions))
    required = widths * state.width
    if margin < required:
        raise SpikePlacementError(
            f"spikes lie {margin:.3g} from the box boundary, need {required:.3g}",
            details={"margin": float(margin), "required": float(required), "r": spikes.r},
        )


def _distance(grid: GridSpec, center: np.ndarray) -> np.ndarray:
    d2 = np.zeros(grid.shape)
    for x, qi in zip(grid.coordinates(), center):
        d2 = d2 + (x - qi) ** 2
    return np.sqrt(d2)


def translated_bumps(state: GroundState, spikes: SpikeRing, grid: GridSpec) -> List[np.ndarray]:
    """W_j(x) = w(|x - q_j|) for every spike."""
    if grid.dimension != spikes.dimension:
        raise GridMismatchError(
            f"grid dimension {grid.dimension} does not match spikes in R^{spikes.dimension}"
        )
    return [state.radial.value(_distance(grid, q)) for q in spikes.positions]


def build_multibump(state: GroundState, spikes: SpikeRing, grid: Optional[GridSpec] = None,
                    check: bool = True) -> RealField:
    """W = sum_j w(x - q_j) on ``grid`` (defaults to the ground-state grid)."""
    grid = grid or state.grid
    if check:
        check_spike_placement(state, spikes, grid)
    total = np.sum(translated_bumps(state, spikes, grid), axis=0)
    return RealField(grid, total)


def evaluate_multibump_at(state: GroundState, spikes: SpikeRing, points: np.ndarray) -> np.ndarray:
    """Direct sum of the k bumps at arbitrary points."""
    points = np.atleast_2d(points)
    total = np.zeros(points.shape[0])
    for q in spikes.positions:
        total += state.radial.value(np.linalg.norm(points - q, axis=1))
    return total


def evaluate_potential(Vspec: PotentialSpec, grid: GridSpec) -> RealField:
    """V(|x|) on the grid; |x| is capped below at one cell width."""
    radius = np.maximum(grid.radius(), grid.spacing)
    values = Vspec.value(radius)
    if np.min(values) <= 0:
        raise DataValidationError("potential must be positive on the grid",
                                  details={"min": float(np.min(values))})
    return RealField(grid, values)


def error_field(W: RealField, Vfield: RealField, spikes: SpikeRing, w: GroundState,
                p: float) -> RealField:
    """E = (1 - V) W + W^p - sum_j W_j^p from the bump formula."""
    if W.grid != Vfield.grid:
        raise GridMismatchError("ansatz and potential live on different grids")
    bumps = translated_bumps(w, spikes, W.grid)
    single_powers = np.sum([np.maximum(b, 0.0) ** p for b in bumps], axis=0)
    E = (1.0 - Vfield.samples) * W.samples + np.maximum(W.samples, 0.0) ** p - single_powers
    return W.with_samples(E)


def ansatz_residual(W: RealField, Vfield: RealField, s: float, p: float, dealias: int = 1) -> RealField:
    """-[(-Delta)^s W + V W - W_+^p] with the discrete operator."""
    if W.grid != Vfield.grid:
        raise GridMismatchError("ansatz and potential live on different grids")
    grid = W.grid
    lhs = (frac_laplacian_array(W.samples, grid, float(s)) + Vfield.samples * W.samples
           - positive_power_array(W.samples, p, grid, dealias))
    return W.with_samples(-lhs)


def interpolation_floor(formula: RealField, discrete: RealField) -> float:
    """max |E_formula - E_discrete|: what the radial table cannot resolve."""
    return float(np.max(np.abs(formula.samples - discrete.samples)))


def star_norm(f: Union[RealField, np.ndarray], rho: Union[WeightRho, np.ndarray],
              grid: Optional[GridSpec] = None) -> float:
    """||f||_* = max |f| / rho over the grid."""
    if isinstance(f, RealField):
        grid = f.grid
        samples = f.samples
    else:
        samples = np.asarray(f)
    weight = rho.evaluate(grid) if isinstance(rho, WeightRho) else np.asarray(rho)
    return float(np.max(np.abs(samples) / weight))


def check_error_bound(E: RealField, spikes: SpikeRing, params: ProblemParams,
                      sigma: Optional[float] = None, constant: float = 1.0) -> ErrorBoundReport:
    """||E||_* against C(k/r)^min(nu, nu p - mu) + C r^-(nu - mu) + C r^-m."""
    rho = WeightRho.for_params(spikes, params, sigma)
    norm = star_norm(E, rho)
    k, r, nu, mu = spikes.k, spikes.r, params.nu, rho.mu
    interaction = constant * (k / r) ** min(nu, nu * params.p - mu) if k > 1 else 0.0
    report = ErrorBoundReport(
        k=k,
        r=r,
        sigma=rho.sigma,
        star_norm=norm,
        interaction_term=interaction,
        far_field_term=constant * r ** (-(nu - mu)),
        potential_term=constant * r ** (-params.m),
        ratio_rm2=norm * r ** (params.m / 2.0),
    )
    logger.debug("error bound", **report.to_dict())
    return report


def _rotate(samples: np.ndarray, grid: GridSpec, angle: float) -> np.ndarray:
    """f(R^-1 x) for the rotation R by ``angle`` in the (x1, x2) plane."""
    h, L = grid.spacing, grid.half_width
    index = np.indices(grid.shape, dtype=float)
    x1 = -L + h * index[0]
    x2 = -L + h * index[1]
    c, s = math.cos(angle), math.sin(angle)
    coords = index.copy()
    coords[0] = (c * x1 + s * x2 + L) / h
    coords[1] = (-s * x1 + c * x2 + L) / h
    return map_coordinates(samples, coords, order=1, mode="grid-wrap")


def symmetrize(f: RealField, k: int) -> RealField:
    """Average over the k-fold rotations, the x2 reflection and x3..xN reflections.

    Rotations that are not grid symmetries are resampled bilinearly.
    """
    grid = f.grid
    if grid.dimension < 2:
        raise DataValidationError("ring symmetry needs N >= 2")
    base = f.samples
    for ax in range(2, grid.dimension):
        base = 0.5 * (base + reflect(base, ax))
    base = 0.5 * (base + reflect(base, 1))
    acc = np.zeros_like(base)
    for j in range(k):
        acc += base if j == 0 else _rotate(base, grid, 2.0 * np.pi * j / k)
    return f.with_samples(acc / k)


def symmetry_defect(f: RealField, k: int) -> float:
    """max |f - symmetrize(f, k)|."""
    return float(np.max(np.abs(f.samples - symmetrize(f, k).samples)))


def interaction_sum(k: int, r: float, beta: float) -> float:
    """Exact S(beta) = sum_{j>=2} |q1 - qj|^-beta = (2r)^-beta sum sin((j-1)pi/k)^-beta."""
    if k < 2:
        return 0.0
    j = np.arange(1, k)
    return float((2.0 * r) ** (-beta) * np.sum(np.sin(j * np.pi / k) ** (-beta)))


def interaction_regime(beta: float, ks: Sequence[int], N: int, s: float, m: float,
                       prefactor: float = 1.0) -> InteractionRegime:
    """Growth exponent of S(beta) in k along r = prefactor * k^tau.

    The three regimes predict beta(1 - tau) for beta > 1, 1 - tau with a
    log k factor for beta = 1, and 1 - beta tau for beta < 1.
    """
    nu = N + 2.0 * s
    tau = nu / (nu - m)
    ks = [int(k) for k in ks]
    sums = [interaction_sum(k, prefactor * k ** tau, beta) for k in ks]
    logk = np.log(ks)
    if math.isclose(beta, 1.0):
        regime, predicted = "log", 1.0 - tau
        measured = np.polyfit(logk, np.log(np.asarray(sums) / logk), 1)[0]
    elif beta > 1.0:
        regime, predicted = "summable", beta * (1.0 - tau)
        measured = np.polyfit(logk, np.log(sums), 1)[0]
    else:
        regime, predicted = "divergent", 1.0 - beta * tau
        measured = np.polyfit(logk, np.log(sums), 1)[0]
    return InteractionRegime(beta, regime, predicted, float(measured), ks, sums)


def rho_upper_bound(rho: WeightRho) -> float:
    """2 + sum_{j>=2} |q1 - qj|^-mu, the uniform bound on rho."""
    distances = rho.spikes.distances_from_first()
    return 2.0 + float(np.sum(distances ** (-rho.mu)))


def bump_sum_bound(spikes: SpikeRing, alpha: float, grid: GridSpec) -> Tuple[float, float, float]:
    """(max_x sum_j (1+|x-qj|)^-alpha, 1 + S(alpha), their ratio)."""
    total = np.zeros(grid.shape)
    for q in spikes.positions:
        total += (1.0 + _distance(grid, q)) ** (-alpha)
    peak = float(np.max(total))
    reference = 1.0 + interaction_sum(spikes.k, spikes.r, alpha)
    return peak, reference, peak / reference


def sector_mask(spikes: SpikeRing, j: int, grid: GridSpec) -> np.ndarray:
    """Omega_j: points whose (x1, x2) direction is within pi/k of q_j."""
    coords = grid.coordinates()
    x1 = np.broadcast_to(coords[0], grid.shape)
    x2 = np.broadcast_to(coords[1], grid.shape)
    theta = 2.0 * np.pi * j / spikes.k
    planar = np.hypot(x1, x2)
    cosine = np.where(planar > 0, (x1 * math.cos(theta) + x2 * math.sin(theta)) / np.maximum(planar, 1e-300), 1.0)
    if spikes.k == 1:
        return np.ones(grid.shape, dtype=bool)
    return cosine >= math.cos(math.pi / spikes.k) - 1e-12


def sector_rho_l2(rho: WeightRho, grid: GridSpec, j: int = 0) -> float:
    """Integral of rho^2 over the sector of spike j."""
    mask = sector_mask(rho.spikes, j, grid)
    return float(grid.cell_volume * np.sum(rho.evaluate(grid)[mask] ** 2))
