"""
Command implementations behind the ``fracbump`` entry point.

Each command takes a validated RunConfig, writes its artifacts into the
configured output directory and finishes with a manifest listing every file
it wrote together with its sha256.
"""

import math
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from core import __version__
from core.ansatz import (
    admissible_radius_interval,
    ansatz_residual,
    build_multibump,
    bump_sum_bound,
    check_error_bound,
    error_field,
    evaluate_potential,
    interaction_regime,
    interpolation_floor,
    rho_upper_bound,
    sector_rho_l2,
    spike_positions,
)
from core.energy import (
    circle_sum_constant,
    expansion_check,
    expansion_coeffs,
    fprime_identity,
    maximize_reduced_energy,
    optimal_radius,
    radius_table,
    required_C0,
    sample_reduced_energy,
    theorem_endpoint_check,
)
from core.ground_state import (
    GroundStateOptions,
    check_nondegeneracy,
    compute_ground_state,
    load_ground_state,
    radial_monotonicity_check,
    save_ground_state,
)
from core.models import (
    ExpansionCoeffs,
    GroundState,
    PotentialSpec,
    RadiusInterval,
    RadiusSample,
    WeightRho,
)
from core.reduction import (
    ReductionOptions,
    gram_offdiagonal_sum,
    multiplier_estimate,
    radial_derivative_of_correction,
    solve_ring,
)
from core.spectral import truncation_estimate
from utils.artifacts import RunManifest, write_csv, write_field, write_json
from utils.cache import cache_ground_state, cached_ground_state_path, get_cached_ground_state
from utils.config import RunConfig
from utils.logging import get_logger

logger = get_logger(__name__)

REDUCE_COLUMNS = ["k", "r", "c", "star_norm_phi", "residual", "orth_defect", "iterations",
                  "contraction_rate"]
SWEEP_COLUMNS = ["k", "r", "J_direct", "J_expansion", "relative_gap", "F", "c", "Fprime",
                 "F_over_k", "star_norm_E", "ratio_rm2", "star_norm_phi", "phi_ratio_rm2",
                 "solve_constant", "c_over_phi", "multiplier_ratio", "gram_diagonal",
                 "gram_offdiag", "orth_defect", "contraction_rate", "multiplier_spread",
                 "interpolation_floor"]
DIAGNOSTIC_COLUMNS = ["k", "r", "F", "c", "J_W", "star_norm_phi", "multiplier_spread",
                      "contraction_rate"]
SIGMAS = (0.02, 0.05, 0.1)


def ground_state_options(config: RunConfig) -> GroundStateOptions:
    return GroundStateOptions(max_iter=config.max_iter, tol=config.tol, damping=config.damping,
                              dealias=config.dealias)


def reduction_options(config: RunConfig) -> ReductionOptions:
    return ReductionOptions(krylov_tol=config.krylov_tol, fp_tol=config.fp_tol,
                            fp_max_iter=config.fp_max_iter, dealias=config.dealias)


def potential_spec(config: RunConfig) -> PotentialSpec:
    return PotentialSpec(a=config.a, m=config.m)


def _start(command: str, config: RunConfig) -> Tuple[Path, RunManifest]:
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir, RunManifest(command=command, config=config.to_dict(), tool_version=__version__)


def _finish(manifest: RunManifest, out_dir: Path, paths: List[Path]) -> List[Path]:
    for path in paths:
        manifest.add_file(path, out_dir)
    manifest_path = manifest.write(out_dir)
    logger.info("run complete", command=manifest.command, files=len(paths),
                stages=manifest.stages)
    return paths + [manifest_path]


def _record_pair(manifest: Optional[RunManifest], field_path: Path, role: str) -> None:
    if manifest is None:
        return
    for path in (field_path, field_path.with_suffix(".meta")):
        manifest.add_external(path, role)


def obtain_ground_state(config: RunConfig, field_path: Optional[Path] = None,
                        manifest: Optional[RunManifest] = None) -> GroundState:
    """Ground state from a field file, the cache, or a fresh solve (then cached).

    Files read from or written to outside the output directory are listed
    under ``external`` in the manifest.
    """
    opts = ground_state_options(config)
    if field_path is not None:
        state = load_ground_state(field_path, opts=opts)
        _record_pair(manifest, Path(field_path), "read")
        return state
    grid = config.ground_grid
    state = get_cached_ground_state(grid, config.s, config.p, config.tol, config.cache_dir, opts)
    if state is not None:
        logger.info("ground state from cache", N=grid.dimension, M=grid.points_per_axis)
        entry = cached_ground_state_path(grid, config.s, config.p, config.tol, config.cache_dir,
                                         config.dealias)
        _record_pair(manifest, entry, "read")
        return state
    state = compute_ground_state(grid, config.s, config.p, opts)
    entry = cache_ground_state(state, config.tol, config.cache_dir, config.dealias)
    _record_pair(manifest, entry, "written")
    return state


def obtain_coeffs(config: RunConfig, state: GroundState) -> Tuple[ExpansionCoeffs, float]:
    """Expansion coefficients and the stability of the extrapolated C_ell."""
    nu = config.N + 2.0 * config.s
    C_ell, stability = circle_sum_constant(nu)
    coeffs = expansion_coeffs(state, config.a, config.m, config.N, config.s, C_ell)
    return coeffs, stability


def ring_radius(config: RunConfig, k: int, coeffs: ExpansionCoeffs) -> float:
    if config.optimal_r:
        return optimal_radius(k, coeffs, config.N, config.s, config.m)
    return float(config.r)


def cmd_ground_state(config: RunConfig) -> List[Path]:
    """Ground-state field, its sidecar and the nondegeneracy report."""
    out_dir, manifest = _start("ground-state", config)
    with manifest.stage("ground_state"):
        state = obtain_ground_state(config, manifest=manifest)
    with manifest.stage("nondegeneracy"):
        report = check_nondegeneracy(state, count=config.N + 2, seed=config.seed)
    field_path, sidecar_path = save_ground_state(state, out_dir)
    summary = report.to_dict()
    summary["radially_decreasing"] = radial_monotonicity_check(state)
    summary["expected_near_zero_count"] = config.N
    summary["truncation_estimate"] = truncation_estimate(state.grid, config.s)
    report_path = write_json(out_dir / "nondegeneracy.json", summary)
    return _finish(manifest, out_dir, [field_path, sidecar_path, report_path])


def cmd_coeffs(config: RunConfig, field_path: Optional[Path] = None) -> List[Path]:
    """Expansion coefficients and the r0 table over k_list."""
    out_dir, manifest = _start("coeffs", config)
    with manifest.stage("ground_state"):
        state = obtain_ground_state(config, field_path, manifest)
    with manifest.stage("coefficients"):
        coeffs, stability = obtain_coeffs(config, state)
    record = coeffs.to_dict()
    record["C_ell_stability"] = stability
    record["truncation_estimate"] = truncation_estimate(state.grid, config.s)
    paths = []
    if coeffs.degenerate:
        logger.warning("B1 = 0: no r0 table for a flat potential")
        record["r0_prefactor"] = None
    else:
        record["r0_prefactor"] = coeffs.r0_prefactor(config.N, config.s, config.m)
        record["required_C0"] = required_C0(coeffs, config.N, config.s, config.m)
        rows = radius_table(config.k_list, coeffs, config.N, config.s, config.m, config.C0)
        record["endpoint_checks"] = [
            theorem_endpoint_check(k, coeffs, config.C0, config.N, config.s, config.m)
            for k in config.k_list
        ]
        paths.append(write_csv(out_dir / "r0.csv", rows, ["k", "r0", "I0_lower", "I0_upper"]))
    paths.insert(0, write_json(out_dir / "coeffs.json", record))
    return _finish(manifest, out_dir, paths)


def cmd_ansatz(config: RunConfig, k: Optional[int] = None) -> List[Path]:
    """W, E, the error-bound report at three sigmas and the energy expansion check."""
    k = k or config.k
    config.check_ring_radius(k)
    out_dir, manifest = _start("ansatz", config)
    params = config.params
    with manifest.stage("ground_state"):
        state = obtain_ground_state(config, manifest=manifest)
        coeffs, _ = obtain_coeffs(config, state)
    r = ring_radius(config, k, coeffs)
    grid = config.grid
    with manifest.stage("ansatz"):
        spikes = spike_positions(k, r, config.N)
        W = build_multibump(state, spikes, grid)
        V = evaluate_potential(potential_spec(config), grid)
        E = ansatz_residual(W, V, config.s, config.p, config.dealias)
        E_formula = error_field(W, V, spikes, state, config.p)
        bounds = [check_error_bound(E, spikes, params, sigma).to_dict() for sigma in SIGMAS]
        rho = WeightRho.for_params(spikes, params)
        peak, reference, sum_ratio = bump_sum_bound(spikes, rho.mu, grid)
    with manifest.stage("energy"):
        report = expansion_check(k, r, state, potential_spec(config), grid, coeffs, W)
    record = {
        "k": k,
        "r": r,
        "error_bounds": bounds,
        "interpolation_floor": interpolation_floor(E_formula, E),
        "rho_max": float(np.max(rho.evaluate(grid))),
        "rho_bound": rho_upper_bound(rho),
        "sector_rho_l2": sector_rho_l2(rho, grid),
        "bump_sum": {"max": peak, "one_plus_S": reference, "constant": sum_ratio},
        "energy": {**asdict(report), "breakdown": report.breakdown,
                   "dominance_ordering": report.dominance_ordering()},
    }
    paths = [
        write_field(out_dir / "W.fld", W, config.s),
        write_field(out_dir / "E.fld", E, config.s),
        write_json(out_dir / "ansatz.json", record),
    ]
    return _finish(manifest, out_dir, paths)


def cmd_reduce(config: RunConfig, k: Optional[int] = None) -> List[Path]:
    """Phi(r) and c(r) at one radius."""
    k = k or config.k
    config.check_ring_radius(k)
    out_dir, manifest = _start("reduce", config)
    with manifest.stage("ground_state"):
        state = obtain_ground_state(config, manifest=manifest)
        coeffs, _ = obtain_coeffs(config, state)
    r = ring_radius(config, k, coeffs)
    with manifest.stage("reduction"):
        ring = solve_ring(state, config.params, k, r, config.grid, reduction_options(config))
    sol = ring.solution
    estimate = multiplier_estimate(sol)
    record = {
        "k": k,
        "r": r,
        "c": sol.c,
        "multipliers": sol.multipliers,
        "multiplier_spread": sol.multiplier_spread,
        "multiplier_ratio": estimate.ratio,
        "tangential_multipliers": sol.tangential_multipliers,
        "tangential_size": sol.tangential_size,
        "symmetry_defect": sol.symmetry_defect,
        "c_over_phi": estimate.c_over_phi,
        "star_norm_phi": sol.star_norm_phi,
        "star_norm_E": sol.star_norm_g,
        "solve_constant": sol.solve_constant,
        "phi_ratio_rm2": sol.star_norm_phi * r ** (config.m / 2.0),
        "rates": sol.rates,
        "gram_diagonal": float(ring.basis.gram[0, 0]),
        "gram_offdiag": gram_offdiagonal_sum(ring.basis),
        "Idw2": state.integrals.Idw2,
        "pde_residual": ring.pde_residual(config.dealias),
        "interpolation_floor": ring.interpolation_floor,
    }
    paths = [
        write_field(out_dir / "phi.fld", sol.phi, config.s),
        write_csv(out_dir / "reduce.csv", [sol.summary_row(k, r)], REDUCE_COLUMNS),
        write_json(out_dir / "reduce.json", record),
    ]
    return _finish(manifest, out_dir, paths)


def _scan_interval(config: RunConfig, state: GroundState, k: int) -> RadiusInterval:
    """I0 clipped to radii whose spikes stay five widths inside the box."""
    interval = admissible_radius_interval(k, config.N, config.s, config.m, config.C0)
    limit = config.L - 5.0 * state.width
    if interval.upper > limit:
        logger.warning("I0 exceeds the box; scanning the part that fits",
                       upper=interval.upper, limit=limit)
        interval = RadiusInterval(interval.lower, limit, interval.exponent, interval.C0)
    return interval


def cmd_construct(config: RunConfig, k: Optional[int] = None) -> List[Path]:
    """Interior maximizer r1 of F over I0 and the solution u = W + Phi(r1)."""
    k = k or config.k
    config.check_ring_radius(k)
    out_dir, manifest = _start("construct", config)
    params = config.params
    opts = reduction_options(config)
    with manifest.stage("ground_state"):
        state = obtain_ground_state(config, manifest=manifest)
    flat = config.a == 0.0
    coeffs = None if flat else obtain_coeffs(config, state)[0]
    samples: Dict[float, RadiusSample] = {}

    def evaluator(r: float) -> Tuple[float, float]:
        sample, _ = sample_reduced_energy(k, r, state, params, config.grid, opts)
        samples[r] = sample
        return sample.F, sample.c

    record: Dict[str, object] = {"k": k}
    with manifest.stage("search"):
        if flat:
            r1 = float(config.r) if not config.optimal_r else 0.0
            F, c = evaluator(r1)
            record.update({"flat_potential": True, "F": F, "c": c})
        else:
            interval = _scan_interval(config, state, k)
            result = maximize_reduced_energy(k, interval, evaluator)
            r1 = result.r1
            record["search"] = result.to_dict()
            record["r0"] = optimal_radius(k, coeffs, config.N, config.s, config.m)
            record["r1_over_r0"] = r1 / record["r0"]
            record["fprime_identity"] = fprime_identity(result.Fprime_at_r1, result.c_at_r1, k, state)
            record["theorem"] = theorem_endpoint_check(k, coeffs, config.C0, config.N, config.s,
                                                       config.m)
    with manifest.stage("solution"):
        _, ring = sample_reduced_energy(k, r1, state, params, config.grid, opts)
    record["r1"] = r1
    record["pde_residual"] = ring.pde_residual(config.dealias)
    record["interpolation_floor"] = ring.interpolation_floor
    record["c_at_r1"] = ring.solution.c
    record["tangential_size"] = ring.solution.tangential_size
    record["symmetry_defect"] = ring.solution.symmetry_defect
    rows = [samples[r].to_dict() for r in sorted(samples)]
    paths = [
        write_field(out_dir / "u.fld", ring.u, config.s),
        write_json(out_dir / "construct.json", record),
        write_csv(out_dir / "diagnostics.csv", rows, DIAGNOSTIC_COLUMNS),
    ]
    return _finish(manifest, out_dir, paths)


def _fit_exponent(x: List[float], y: List[float]) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        return math.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _decreasing(values: List[float]) -> bool:
    return bool(np.all(np.diff(values) < 0))


def sweep_row(config: RunConfig, state: GroundState, coeffs: ExpansionCoeffs, k: int,
              opts: ReductionOptions) -> Tuple[Dict[str, float], Dict[str, float]]:
    """One CSV row at r = r0(k) plus the error-bound ratios at the three sigmas."""
    params = config.params
    grid = config.grid
    r = ring_radius(config, k, coeffs)
    sample, ring = sample_reduced_energy(k, r, state, params, grid, opts)
    delta = 1e-2 * r
    minus, ring_minus = sample_reduced_energy(k, r - delta, state, params, grid, opts)
    plus, ring_plus = sample_reduced_energy(k, r + delta, state, params, grid, opts)
    _, phi_prime_norm = radial_derivative_of_correction(ring_minus.solution.phi,
                                                       ring_plus.solution.phi, delta, ring.rho)
    report = expansion_check(k, r, state, potential_spec(config), grid, coeffs, ring.W)
    sol = ring.solution
    estimate = multiplier_estimate(sol)
    sigma_ratios = {
        f"ratio_rm2_sigma_{sigma}": check_error_bound(ring.E, ring.spikes, params, sigma).ratio_rm2
        for sigma in SIGMAS
    }
    row = {
        "k": k,
        "r": r,
        "J_direct": report.J_direct,
        "J_expansion": report.J_expansion,
        "relative_gap": report.relative_gap,
        "F": sample.F,
        "c": sample.c,
        "Fprime": (plus.F - minus.F) / (2.0 * delta),
        "F_over_k": sample.F / k,
        "star_norm_E": sol.star_norm_g,
        "ratio_rm2": sol.star_norm_g * r ** (config.m / 2.0),
        "star_norm_phi": sol.star_norm_phi,
        "phi_ratio_rm2": sol.star_norm_phi * r ** (config.m / 2.0),
        "solve_constant": sol.solve_constant,
        "c_over_phi": estimate.c_over_phi,
        "multiplier_ratio": estimate.ratio,
        "gram_diagonal": float(ring.basis.gram[0, 0]),
        "gram_offdiag": gram_offdiagonal_sum(ring.basis),
        "orth_defect": sol.orth_defect,
        "contraction_rate": sol.contraction_rate,
        "multiplier_spread": sol.multiplier_spread,
        "interpolation_floor": ring.interpolation_floor,
    }
    extras = dict(sigma_ratios)
    extras["phi_prime_star_norm"] = phi_prime_norm
    extras["pde_residual"] = ring.pde_residual(config.dealias)
    extras["tangential_size"] = sol.tangential_size
    extras["symmetry_defect"] = sol.symmetry_defect
    extras.update({f"fprime_{key}": value for key, value in
                   fprime_identity(row["Fprime"], row["c"], k, state).items()})
    return row, extras


def cmd_sweep(config: RunConfig) -> List[Path]:
    """Every diagnostic along r = r0(k) for k in k_list, and their trends."""
    out_dir, manifest = _start("sweep", config)
    opts = reduction_options(config)
    with manifest.stage("ground_state"):
        state = obtain_ground_state(config, manifest=manifest)
        coeffs, stability = obtain_coeffs(config, state)
    rows, extras = [], []
    for k in config.k_list:
        with manifest.stage(f"k={k}"):
            row, extra = sweep_row(config, state, coeffs, k, opts)
        rows.append(row)
        extras.append({"k": k, **extra})

    ks = [row["k"] for row in rows]
    ratios = [row["k"] / row["r"] for row in rows]
    nu = config.N + 2.0 * config.s
    solve_constants = [row["solve_constant"] for row in rows]
    positive_constants = [value for value in solve_constants if value > 0]
    summary = {
        "C_ell": coeffs.C_ell,
        "C_ell_stability": stability,
        "truncation_estimate": truncation_estimate(state.grid, config.s),
        "gram_offdiag_exponent": _fit_exponent(ratios, [row["gram_offdiag"] for row in rows]),
        "expected_gram_exponent": nu,
        "ratio_rm2_decreasing": _decreasing([row["ratio_rm2"] for row in rows]),
        "ratio_rm2_decreasing_by_sigma": {
            str(sigma): _decreasing([extra[f"ratio_rm2_sigma_{sigma}"] for extra in extras])
            for sigma in SIGMAS
        },
        "phi_ratio_rm2_decreasing": _decreasing([row["phi_ratio_rm2"] for row in rows]),
        "c_over_phi_decreasing": _decreasing([row["c_over_phi"] for row in rows]),
        "solve_constant_spread": (max(positive_constants) / min(positive_constants)
                                  if positive_constants else math.nan),
        "energy_growth_exponent": _fit_exponent(ks, [row["F"] for row in rows]),
        "min_F_over_k": min(row["F_over_k"] for row in rows),
        "regimes": [interaction_regime(beta, [64, 128, 256, 512, 1024], config.N, config.s,
                                       config.m).to_dict()
                    for beta in (0.5, 1.0, nu)],
        "per_k": extras,
    }
    paths = [
        write_csv(out_dir / "sweep.csv", rows, SWEEP_COLUMNS),
        write_json(out_dir / "sweep_summary.json", summary),
    ]
    return _finish(manifest, out_dir, paths)


COMMANDS: Dict[str, Callable[..., List[Path]]] = {
    "ground-state": cmd_ground_state,
    "coeffs": cmd_coeffs,
    "ansatz": cmd_ansatz,
    "reduce": cmd_reduce,
    "construct": cmd_construct,
    "sweep": cmd_sweep,
}
