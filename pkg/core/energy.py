"""
Energy of the ring construction.

J(u) = 1/2 int u (-Delta)^s u + V u^2 - 1/(p+1) int u_+^(p+1), its three-term
expansion k[A1 + B1/r^m - B2 k^(N+2s)/r^(N+2s)], the optimal radius, and the
golden-section search for the interior maximizer of the reduced energy.
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.ansatz import (
    admissible_radius_interval,
    build_multibump,
    evaluate_potential,
    interaction_sum,
    spike_positions,
)
from core.models import (
    EnergyReport,
    ExpansionCoeffs,
    GridSpec,
    GroundState,
    PotentialSpec,
    ProblemParams,
    RadiusInterval,
    RadiusSample,
    RadiusSearchResult,
    RealField,
)
from core.reduction import ReductionOptions, RingSolution, solve_ring
from core.spectral import frac_laplacian_array
from utils.exceptions import (
    AdmissibilityError,
    CoefficientError,
    DivergentSumError,
    EndpointMaximizerError,
)
from utils.logging import get_logger

logger = get_logger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0

RICHARDSON_LEVELS = (2 ** 10, 2 ** 12, 2 ** 14)


def energy(u: RealField, Vfield: RealField, s: float, p: float) -> float:
    """J(u) by trapezoidal quadrature, the quadratic form spectrally."""
    grid = u.grid
    samples = u.samples
    quadratic = np.sum(samples * frac_laplacian_array(samples, grid, float(s)))
    potential = np.sum(Vfield.samples * samples ** 2)
    nonlinear = np.sum(np.maximum(samples, 0.0) ** (p + 1.0))
    return float(grid.cell_volume * (0.5 * (quadratic + potential) - nonlinear / (p + 1.0)))


def circle_sum(k: int, r: float, ell: float) -> float:
    """sum_{j>=2} |q_j - q_1|^-ell, summed exactly."""
    return interaction_sum(k, r, ell)


def circle_sum_constant(ell: float, levels: Sequence[int] = RICHARDSON_LEVELS) -> Tuple[float, float]:
    """C_ell in S ~ C_ell (k/r)^ell by Richardson extrapolation of S(k, 1)/k^ell.

    Returns (C_ell, relative change between the last two extrapolants).
    """
    if ell <= 1.0:
        raise DivergentSumError(f"no finite circle-sum constant for ell = {ell} <= 1")
    order = min(ell - 1.0, 2.0)
    values = [circle_sum(k, 1.0, ell) / float(k) ** ell for k in levels]
    ratio = float(levels[1]) / float(levels[0])
    factor = ratio ** order
    extrapolants = [(factor * b - a) / (factor - 1.0) for a, b in zip(values, values[1:])]
    best = extrapolants[-1]
    stability = abs(extrapolants[-1] - extrapolants[0]) / abs(best) if len(extrapolants) > 1 else 0.0
    return float(best), float(stability)


def expansion_coeffs(gs: GroundState, a: float, m: float, N: int, s: float,
                     C_ell: Optional[float] = None) -> ExpansionCoeffs:
    """A1, B1, Btilde2, C_ell and B2 from the ground-state integrals."""
    nu = N + 2.0 * s
    if not 0 < m < nu:
        raise AdmissibilityError(f"potential exponent m = {m} outside (0, N+2s)",
                                 inequality=f"0 < m < N+2s = {nu:.6g}")
    integrals = gs.integrals
    p = gs.p
    A1 = (0.5 - 1.0 / (p + 1.0)) * integrals.Iwp1
    B1 = 0.5 * a * integrals.Iw2
    Btilde2 = gs.tail_amplitude * integrals.Iwp
    if C_ell is None:
        C_ell, _ = circle_sum_constant(nu)
    for name, value in (("A1", A1), ("Btilde2", Btilde2), ("C_ell", C_ell)):
        if not value > 0:
            raise CoefficientError(f"coefficient {name} = {value:.6g} is not positive",
                                   details={name: value})
    if B1 < 0:
        raise CoefficientError(f"coefficient B1 = {B1:.6g} is negative", details={"B1": B1})
    coeffs = ExpansionCoeffs(A1=A1, B1=B1, Btilde2=Btilde2, C_ell=C_ell,
                             B2=0.5 * Btilde2 * C_ell, degenerate=(B1 == 0.0))
    if coeffs.degenerate:
        logger.warning("potential amplitude is zero; B1 = 0 and no optimal radius exists")
    return coeffs


def optimal_radius(k: int, coeffs: ExpansionCoeffs, N: int, s: float, m: float) -> float:
    """r0 = ((N+2s) B2 / (m B1))^(1/(N+2s-m)) k^((N+2s)/(N+2s-m))."""
    nu = N + 2.0 * s
    if not 0 < m < nu:
        raise AdmissibilityError(f"potential exponent m = {m} outside (0, N+2s)",
                                 inequality=f"0 < m < N+2s = {nu:.6g}")
    if coeffs.degenerate or coeffs.B1 <= 0 or coeffs.B2 <= 0:
        raise CoefficientError("optimal radius needs B1 > 0 and B2 > 0",
                               details={"B1": coeffs.B1, "B2": coeffs.B2})
    return coeffs.r0_prefactor(N, s, m) * float(k) ** (nu / (nu - m))


def required_C0(coeffs: ExpansionCoeffs, N: int, s: float, m: float) -> float:
    """Smallest C0 with r0 inside I0."""
    prefactor = coeffs.r0_prefactor(N, s, m)
    return max(prefactor, 1.0 / prefactor)


def three_term_energy(k: int, r: float, coeffs: ExpansionCoeffs, N: int, s: float, m: float) -> float:
    """k [A1 + B1/r^m - B2 k^(N+2s)/r^(N+2s)]."""
    nu = N + 2.0 * s
    return k * (coeffs.A1 + coeffs.B1 * r ** (-m) - coeffs.B2 * (k / r) ** nu)


def theorem_endpoint_check(k: int, coeffs: ExpansionCoeffs, C0: float, N: int, s: float,
                           m: float) -> Dict[str, object]:
    """Predicted F(r0) and the two C0 conditions that put the maximum inside I0."""
    nu = N + 2.0 * s
    B1, B2 = coeffs.B1, coeffs.B2
    gain = B1 * (m * B1 / (nu * B2)) ** (m / (nu - m)) * (nu - m) / nu
    predicted = k * coeffs.A1 + k ** (1.0 - nu * m / (nu - m)) * gain
    interval = admissible_radius_interval(k, N, s, m, C0)
    r0 = optimal_radius(k, coeffs, N, s, m)
    lower_value = three_term_energy(k, interval.lower, coeffs, N, s, m)
    upper_value = three_term_energy(k, interval.upper, coeffs, N, s, m)
    center_value = three_term_energy(k, r0, coeffs, N, s, m)
    return {
        "k": k,
        "r0": r0,
        "F_r0_predicted": predicted,
        "F_r0_expansion": center_value,
        "F_lower": lower_value,
        "F_upper": upper_value,
        "lower_condition": bool(B1 * C0 ** m - B2 * C0 ** nu < 0),
        "upper_condition": bool(B1 / C0 ** m < gain / 4.0),
        "interior": bool(center_value > max(lower_value, upper_value)),
    }


def _default_coeffs(gs: GroundState, Vspec: PotentialSpec, N: int) -> ExpansionCoeffs:
    return expansion_coeffs(gs, Vspec.a, Vspec.m, N, gs.s.value)


def expansion_check(k: int, r: float, gs: GroundState, Vspec: PotentialSpec, grid: GridSpec,
                    coeffs: Optional[ExpansionCoeffs] = None,
                    W: Optional[RealField] = None) -> EnergyReport:
    """J(W) by quadrature against k[A1 + B1/r^m - Btilde2/2 S_exact(N+2s)]."""
    N, s, p = grid.dimension, gs.s.value, gs.p
    coeffs = coeffs or _default_coeffs(gs, Vspec, N)
    nu = N + 2.0 * s
    if W is None:
        W = build_multibump(gs, spike_positions(k, r, N), grid)
    V = evaluate_potential(Vspec, grid)
    J_direct = energy(W, V, s, p)

    leading = k * coeffs.A1
    potential = k * coeffs.B1 * r ** (-Vspec.m)
    interaction = -0.5 * k * coeffs.Btilde2 * circle_sum(k, r, nu)
    J_expansion = leading + potential + interaction
    gap = abs(J_direct - J_expansion)
    scale = abs(potential) + abs(interaction)
    report = EnergyReport(
        k=k,
        r=r,
        J_direct=J_direct,
        J_expansion=J_expansion,
        leading_term=leading,
        potential_term=potential,
        interaction_term=interaction,
        relative_gap=gap / scale if scale > 0 else math.nan,
        gap_vs_rm=gap / (k * r ** (-Vspec.m)),
        gap_vs_interaction=gap / (k * (k / r) ** nu) if k > 1 else math.nan,
    )
    logger.info("expansion check", k=k, r=r, J_direct=J_direct, J_expansion=J_expansion,
                relative_gap=report.relative_gap)
    return report


def single_bump_energy(gs: GroundState, Vspec: PotentialSpec, r: float, grid: GridSpec) -> Dict[str, float]:
    """J(W_1) for one bump at r e1 against J1(w) + 1/2 int (V-1) W_1^2 and A1 + B1/r^m."""
    N, s, p = grid.dimension, gs.s.value, gs.p
    coeffs = _default_coeffs(gs, Vspec, N) if Vspec.a > 0 else None
    W1 = build_multibump(gs, spike_positions(1, r, N), grid)
    V = evaluate_potential(Vspec, grid)
    J_direct = energy(W1, V, s, p)
    J_flat = energy(W1, RealField.constant(grid, 1.0), s, p)
    potential_exact = 0.5 * grid.cell_volume * float(np.sum((V.samples - 1.0) * W1.samples ** 2))
    A1 = (0.5 - 1.0 / (p + 1.0)) * gs.integrals.Iwp1
    record = {
        "r": r,
        "J_direct": J_direct,
        "J_quadrature": J_flat + potential_exact,
        "A1": A1,
        "correction": J_direct - A1,
    }
    if coeffs is not None:
        asymptote = coeffs.B1 * r ** (-Vspec.m)
        record["asymptote"] = A1 + asymptote
        record["correction_error"] = abs(record["correction"] - asymptote) / asymptote
    return record


def sample_reduced_energy(k: int, r: float, gs: GroundState, params: ProblemParams, grid: GridSpec,
                          opts: Optional[ReductionOptions] = None) -> Tuple[RadiusSample, RingSolution]:
    """F(r) = J(W + Phi(r)) with the multiplier c(r)."""
    ring = solve_ring(gs, params, k, r, grid, opts)
    F = energy(ring.u, ring.V, params.s, params.p)
    J_W = energy(ring.W, ring.V, params.s, params.p)
    sol = ring.solution
    sample = RadiusSample(
        k=k, r=r, F=F, c=sol.c, J_W=J_W, star_norm_phi=sol.star_norm_phi,
        multiplier_spread=sol.multiplier_spread,
        contraction_rate=sol.contraction_rate if sol.contraction_rate is not None else math.nan,
    )
    logger.debug("reduced energy sample", **sample.to_dict())
    return sample, ring


def reduced_energy(k: int, r: float, gs: GroundState, params: ProblemParams, grid: GridSpec,
                   opts: Optional[ReductionOptions] = None) -> Tuple[float, float]:
    """(F(r), c(r))."""
    sample, _ = sample_reduced_energy(k, r, gs, params, grid, opts)
    return sample.F, sample.c


def golden_section_maximize(func: Callable[[float], float], a: float, b: float,
                            rtol: float = 1e-3) -> Tuple[float, float, int]:
    """Maximize a unimodal func on [a, b] until the bracket is rtol * midpoint wide.

    Returns (argmax, max, evaluations).
    """
    a, b = min(a, b), max(a, b)
    c = a + INV_PHI_SQUARE * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    evaluations = 2
    while (b - a) > rtol * max(abs(0.5 * (a + b)), 1e-300):
        if fc > fd:
            b, d, fd = d, c, fc
            c = a + INV_PHI_SQUARE * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = func(d)
        evaluations += 1
    x = c if fc > fd else d
    return x, max(fc, fd), evaluations


def maximize_reduced_energy(k: int, interval: RadiusInterval,
                            evaluator: Callable[[float], Tuple[float, float]],
                            rtol: float = 1e-3, scan_points: int = 9,
                            delta_fraction: float = 1e-2) -> RadiusSearchResult:
    """Interior maximizer r1 of F over I0, with F'(r1), c(r1) and c at the endpoints.

    ``evaluator(r)`` returns (F(r), c(r)); a coarse scan brackets the maximum
    before the golden-section refinement. A maximum at either end of I0 raises
    EndpointMaximizerError.
    """
    cache: Dict[float, Tuple[float, float]] = {}

    def evaluate(r: float) -> Tuple[float, float]:
        if r not in cache:
            cache[r] = evaluator(r)
        return cache[r]

    radii = np.geomspace(interval.lower, interval.upper, scan_points)
    values = [evaluate(float(r))[0] for r in radii]
    best = int(np.argmax(values))
    logger.info("reduced energy scan", k=k, best_r=float(radii[best]), F=float(values[best]))
    if best == 0 or best == scan_points - 1:
        raise EndpointMaximizerError(
            f"reduced energy peaks at the endpoint r = {radii[best]:.4g} of I0",
            details={"k": k, "radii": radii.tolist(), "F": values},
        )
    r1, F1, evaluations = golden_section_maximize(
        lambda r: evaluate(r)[0], float(radii[best - 1]), float(radii[best + 1]), rtol
    )
    delta = delta_fraction * r1
    F_minus, c_minus = evaluate(r1 - delta)
    F_plus, c_plus = evaluate(r1 + delta)
    _, c1 = evaluate(r1)
    result = RadiusSearchResult(
        r1=r1,
        F_at_r1=F1,
        c_at_r1=c1,
        Fprime_at_r1=(F_plus - F_minus) / (2.0 * delta),
        endpoint_values=(values[0], values[-1]),
        c_minus=c_minus,
        c_plus=c_plus,
        endpoint_multipliers=(evaluate(float(radii[0]))[1], evaluate(float(radii[-1]))[1]),
        evaluations=len(cache),
    )
    logger.info("reduced energy maximizer", k=k, r1=r1, F=F1, c=c1, Fprime=result.Fprime_at_r1,
                golden_section_evaluations=evaluations)
    return result


def fprime_identity(Fprime: float, c: float, k: int, gs: GroundState) -> Dict[str, float]:
    """F'(r) against c k (1/N) int (w')^2."""
    predicted = c * k * gs.integrals.Idw2
    ratio = Fprime / predicted if predicted != 0 else math.nan
    return {
        "Fprime": Fprime,
        "predicted": predicted,
        "ratio": ratio,
        "same_sign": bool(np.sign(Fprime) == np.sign(predicted)),
    }


def fprime_at(k: int, r: float, gs: GroundState, params: ProblemParams, grid: GridSpec,
              opts: Optional[ReductionOptions] = None,
              delta_fraction: float = 1e-2) -> Tuple[float, float, float]:
    """Central-difference F'(r) at steps delta and delta/2, and c(r)."""
    def F(radius):
        return reduced_energy(k, radius, gs, params, grid, opts)[0]

    delta = delta_fraction * r
    full = (F(r + delta) - F(r - delta)) / (2.0 * delta)
    half = (F(r + delta / 2.0) - F(r - delta / 2.0)) / delta
    _, c = reduced_energy(k, r, gs, params, grid, opts)
    return full, half, c


def radius_table(ks: Sequence[int], coeffs: ExpansionCoeffs, N: int, s: float, m: float,
                 C0: float) -> List[Dict[str, float]]:
    """r0 and I0 for each k."""
    rows = []
    for k in ks:
        interval = admissible_radius_interval(k, N, s, m, C0)
        rows.append({
            "k": int(k),
            "r0": optimal_radius(k, coeffs, N, s, m),
            "I0_lower": interval.lower,
            "I0_upper": interval.upper,
        })
    return rows
