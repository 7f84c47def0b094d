"""
Lyapunov-Schmidt reduction around the ring ansatz.

The projected problem

    (-Delta)^s phi + V phi - p W^(p-1) phi = g + sum_j c_j Z_j + sum_j d_j Y_j,
    int Z_j phi = int Y_j phi = 0,

is solved as one bordered system by GMRES with diag(T, I) as preconditioner,
T = ((-Delta)^s + 1)^-1. Z_j = dW_j/dr are the radial modes; Y_j are the
tangential translation modes of each bump, which the uniform grid does not
remove by symmetry. On ring-symmetric data the c_j agree and their mean is
the multiplier c.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from core.ansatz import (
    ansatz_residual,
    build_multibump,
    error_field,
    evaluate_potential,
    interpolation_floor,
    spike_positions,
    star_norm,
    symmetry_defect,
)
from core.ground_state import smallest_eigenpairs
from core.models import (
    GridSpec,
    GroundState,
    MultiplierReport,
    PotentialSpec,
    ProblemParams,
    ProjectionBasis,
    RealField,
    ReducedSolution,
    SpikeRing,
    WeightRho,
)
from core.spectral import apply_multiplier, resolvent_array, symbol
from utils.exceptions import (
    ContractionError,
    DataValidationError,
    GridMismatchError,
    KrylovStagnationError,
)
from utils.logging import get_logger

logger = get_logger(__name__)


@dataclass
class ReductionOptions:
    """Tolerances of the projected solve and the fixed point.

    ``relaxation`` is the starting step of phi <- phi + relax (T(phi) - phi); it is
    halved while the steps grow and doubled back once T contracts by
    ``contraction_target``.
    """

    krylov_tol: float = 1e-8
    krylov_rtol: float = 1e-10
    krylov_restart: int = 100
    krylov_maxiter: int = 10
    krylov_sweeps: int = 4
    fp_tol: float = 1e-8
    fp_max_iter: int = 50
    contraction_target: float = 0.5
    relaxation: float = 1.0
    min_relaxation: float = 1.0 / 16.0
    smallness: float = 0.1
    use_discrete_error: bool = True
    tangential: bool = True
    dealias: int = 1


def z_fields(w: GroundState, spikes: SpikeRing, grid: Optional[GridSpec] = None,
             tangential: bool = True) -> ProjectionBasis:
    """Z_j = dW_j/dr and the tangential modes Y_j from the radial derivative table."""
    grid = grid or w.grid
    coords = grid.coordinates()
    Z, Y = [], []
    for j, q in enumerate(spikes.positions):
        offsets = [x - qi for x, qi in zip(coords, q)]
        t = np.zeros(grid.shape)
        for d in offsets:
            t = t + d * d
        t = np.maximum(np.sqrt(t), 1e-12)
        ratio = w.radial.derivative(t) / t
        norm_q = np.linalg.norm(q)
        theta = 2.0 * np.pi * j / spikes.k
        radial_dir = q / norm_q if norm_q > 0 else np.eye(grid.dimension)[0]
        Z.append(RealField(grid, -ratio * sum(d * e for d, e in zip(offsets, radial_dir))))
        if tangential and grid.dimension >= 2:
            tangent = np.zeros(grid.dimension)
            tangent[0], tangent[1] = -math.sin(theta), math.cos(theta)
            Y.append(RealField(grid, -ratio * sum(d * e for d, e in zip(offsets, tangent))))
    stack = np.stack([z.samples.ravel() for z in Z])
    gram = grid.cell_volume * stack @ stack.T
    return ProjectionBasis(Z, gram, Y)


def gram_offdiagonal_sum(basis: ProjectionBasis) -> float:
    """|sum_{j>=2} int Z_j Z_1|."""
    return float(abs(np.sum(basis.gram[0, 1:])))


class ProjectedOperator:
    """A = (-Delta)^s + V - p W^(p-1) with its bordering by the constraint fields."""

    def __init__(self, W: RealField, Vfield: RealField, basis: ProjectionBasis, p: float, s: float):
        if W.grid != Vfield.grid:
            raise GridMismatchError("ansatz and potential live on different grids")
        self.grid = W.grid
        self.s = float(s)
        self.k = basis.k
        self.lin = symbol(self.grid, self.s)
        self.potential = Vfield.samples - p * np.maximum(W.samples, 0.0) ** (p - 1.0)
        fields = basis.constraint_fields()
        columns = np.stack([f.ravel() for f in fields], axis=1)
        self.norms = np.linalg.norm(columns, axis=0)
        self.B = columns / self.norms
        self.gram = self.B.T @ self.B
        if np.linalg.cond(self.gram) > 1e12:
            raise DataValidationError("constraint fields are linearly dependent; spikes coincide")
        self.applications = 0

    @property
    def n(self) -> int:
        return self.grid.size

    @property
    def constraints(self) -> int:
        return self.B.shape[1]

    def apply(self, phi: np.ndarray) -> np.ndarray:
        phi = phi.reshape(self.grid.shape)
        self.applications += 1
        return apply_multiplier(phi, self.grid, self.lin) + self.potential * phi

    def _bordered_matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.ravel(x)
        phi, lam = x[:self.n], x[self.n:]
        top = self.apply(phi).ravel() - self.B @ lam
        return np.concatenate([top, self.B.T @ phi])

    def _precond_matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.ravel(x)
        top = resolvent_array(x[:self.n].reshape(self.grid.shape), self.grid, self.s, 1.0).ravel()
        return np.concatenate([top, x[self.n:]])

    def bordered(self) -> LinearOperator:
        size = self.n + self.constraints
        return LinearOperator((size, size), matvec=self._bordered_matvec, dtype=float)

    def preconditioner(self) -> LinearOperator:
        size = self.n + self.constraints
        return LinearOperator((size, size), matvec=self._precond_matvec, dtype=float)

    def project_out(self, phi: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the complement of the constraint span."""
        flat = phi.ravel()
        coeffs = np.linalg.solve(self.gram, self.B.T @ flat)
        return (flat - self.B @ coeffs).reshape(self.grid.shape)

    def fit_multipliers(self, phi: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Least-squares multipliers of A phi - g and the remaining residual field."""
        defect = (self.apply(phi) - g).ravel()
        lam = np.linalg.solve(self.gram, self.B.T @ defect)
        return lam, (defect - self.B @ lam).reshape(self.grid.shape)


def _zero_solution(grid: GridSpec, k: int, iterations: int = 0) -> ReducedSolution:
    return ReducedSolution(
        phi=RealField.constant(grid, 0.0), c=0.0, star_norm_phi=0.0, residual=0.0,
        orth_defect=0.0, iterations=iterations, multipliers=np.zeros(k),
    )


def _norm(f: np.ndarray, rho: Optional[WeightRho], grid: GridSpec) -> float:
    if rho is None:
        return float(np.max(np.abs(f)))
    return star_norm(f, rho, grid)


def projected_linear_solve(W: RealField, Vfield: RealField, g: RealField, basis: ProjectionBasis,
                           p: float, s: float, opts: Optional[ReductionOptions] = None,
                           rho: Optional[WeightRho] = None,
                           x0: Optional[np.ndarray] = None,
                           operator: Optional[ProjectedOperator] = None) -> ReducedSolution:
    """Solve the bordered projected problem for (phi, c).

    Norms are starred when ``rho`` is given and plain sup norms otherwise.
    Raises KrylovStagnationError if the true residual misses krylov_tol * ||g||_inf.
    """
    opts = opts or ReductionOptions()
    if g.grid != W.grid:
        raise GridMismatchError("right-hand side and ansatz live on different grids")
    grid = W.grid
    g_sup = g.max_abs()
    if g_sup == 0.0:
        return _zero_solution(grid, basis.k)

    op = operator or ProjectedOperator(W, Vfield, basis, p, s)
    A, P = op.bordered(), op.preconditioner()
    rhs = np.concatenate([g.samples.ravel(), np.zeros(op.constraints)])
    x = np.zeros_like(rhs)
    if x0 is not None:
        x[:op.n] = op.project_out(np.asarray(x0)).ravel()
    target = opts.krylov_tol * g_sup
    start = op.applications

    residual = math.inf
    for sweep in range(opts.krylov_sweeps):
        defect = rhs - A.matvec(x)
        residual = float(np.max(np.abs(defect[:op.n])))
        if residual <= 0.1 * target:
            break
        dx, info = gmres(A, defect, M=P, rtol=opts.krylov_rtol, atol=0.0,
                         restart=opts.krylov_restart, maxiter=opts.krylov_maxiter)
        x = x + dx
        logger.debug("bordered gmres sweep", sweep=sweep, info=info, residual=residual)

    phi = op.project_out(x[:op.n])
    lam, leftover = op.fit_multipliers(phi, g.samples)
    residual = float(np.max(np.abs(leftover)))
    iterations = op.applications - start
    if residual > target:
        raise KrylovStagnationError(
            f"projected solve residual {residual:.3e} above target {target:.3e}",
            iterations=iterations, residual=residual,
        )

    weights = lam / op.norms
    radial = weights[:basis.k]
    c = float(np.mean(radial))
    dv = grid.cell_volume
    orth = max(abs(dv * float(np.sum(z.samples * phi))) for z in basis.Z)
    return ReducedSolution(
        phi=RealField(grid, phi),
        c=c,
        star_norm_phi=_norm(phi, rho, grid),
        residual=residual,
        orth_defect=orth,
        iterations=iterations,
        multipliers=radial,
        multiplier_spread=float(np.max(np.abs(radial - c))),
        star_norm_g=_norm(g.samples, rho, grid),
        tangential_multipliers=weights[basis.k:],
    )


def multiplier_estimate(sol: ReducedSolution, g: Optional[RealField] = None,
                        rho: Optional[WeightRho] = None) -> MultiplierReport:
    """|c| against ||phi||_* + ||g||_*."""
    g_norm = sol.star_norm_g
    if g is not None:
        g_norm = _norm(g.samples, rho, g.grid)
    return MultiplierReport(c=sol.c, star_norm_phi=sol.star_norm_phi, star_norm_g=g_norm)


def nonlinear_remainder(W: np.ndarray, phi: np.ndarray, p: float) -> np.ndarray:
    """N(phi) = (W + phi)_+^p - W^p - p W^(p-1) phi."""
    Wp = np.maximum(W, 0.0)
    return np.maximum(W + phi, 0.0) ** p - Wp ** p - p * Wp ** (p - 1.0) * phi


def hs_symmetry_defect(phi: RealField, k: int) -> Optional[float]:
    """max |phi - symmetrize(phi, k)| relative to max |phi|; None below N = 2."""
    if phi.grid.dimension < 2:
        return None
    scale = phi.max_abs()
    if scale == 0.0:
        return 0.0
    return symmetry_defect(phi, k) / scale


def nonlinear_fixed_point(W: RealField, Vfield: RealField, basis: ProjectionBasis, p: float,
                          s: float, opts: Optional[ReductionOptions] = None,
                          rho: Optional[WeightRho] = None,
                          E: Optional[RealField] = None) -> ReducedSolution:
    """phi = T(E + N(phi)) from phi = 0 with an adaptive relaxation.

    The reported rates are Lipschitz quotients of the unrelaxed map,
    ||T(phi_n) - T(phi_n-1)||_* / ||phi_n - phi_n-1||_*, so they do not depend
    on the relaxation in use. The relaxation is halved whenever the gap
    ||T(phi) - phi||_* fails to shrink and doubled back towards 1 once the
    quotient is within ``contraction_target``.

    Raises:
        ContractionError: the gap keeps growing at the smallest relaxation, or
            ``fp_max_iter`` is exhausted.
    """
    opts = opts or ReductionOptions()
    grid = W.grid
    if E is None:
        E = ansatz_residual(W, Vfield, s, p, opts.dealias)
    E_norm = _norm(E.samples, rho, grid)
    W_norm = _norm(W.samples, rho, grid)
    if E_norm > opts.smallness * W_norm:
        logger.warning("error field is not small against the ansatz",
                       E_norm=E_norm, W_norm=W_norm, smallness=opts.smallness)
    if E.max_abs() == 0.0:
        return _zero_solution(grid, basis.k)

    op = ProjectedOperator(W, Vfield, basis, p, s)
    noise = 100.0 * opts.krylov_tol * E_norm
    phi = np.zeros(grid.shape)
    relax = min(1.0, opts.relaxation)
    last_gap = None
    last_pair = None
    rates: List[float] = []
    sol = None
    for iteration in range(1, opts.fp_max_iter + 1):
        g = E.with_samples(E.samples + nonlinear_remainder(W.samples, phi, p))
        sol = projected_linear_solve(W, Vfield, g, basis, p, s, opts, rho, x0=phi, operator=op)
        image = sol.phi.samples
        if last_pair is not None:
            moved = _norm(phi - last_pair[0], rho, grid)
            if moved > noise:
                rates.append(_norm(image - last_pair[1], rho, grid) / moved)
        gap = _norm(image - phi, rho, grid)
        last_pair = (phi, image)
        phi = phi + relax * (image - phi)
        logger.debug("fixed point step", iteration=iteration, gap=gap, relax=relax,
                     rate=rates[-1] if rates else None)
        if gap <= opts.fp_tol * max(_norm(phi, rho, grid), E_norm) or gap <= 0.01 * noise:
            break
        if last_gap is not None and last_gap > noise and gap >= last_gap:
            rate = rates[-1] if rates else gap / last_gap
            if relax / 2.0 < opts.min_relaxation:
                raise ContractionError(
                    f"fixed point does not contract, rate {rate:.3f}", rate=rate,
                    iterations=iteration, residual=gap,
                )
            relax /= 2.0
            logger.info("halving fixed-point relaxation", rate=rate, relax=relax)
        elif relax < 1.0 and rates and rates[-1] <= opts.contraction_target:
            relax = min(1.0, 2.0 * relax)
        last_gap = gap
    else:
        rate = rates[-1] if rates else math.nan
        raise ContractionError(
            f"fixed point not converged after {opts.fp_max_iter} iterations",
            rate=rate, iterations=opts.fp_max_iter,
        )

    terminal = rates[-3:]
    rate = float(max(terminal)) if terminal else 0.0
    if rate > opts.contraction_target:
        logger.warning("fixed point converged above the contraction target", rate=rate,
                       target=opts.contraction_target, relax=relax)
    phi_field = RealField(grid, sol.phi.samples)
    result = ReducedSolution(
        phi=phi_field,
        c=sol.c,
        star_norm_phi=_norm(phi_field.samples, rho, grid),
        residual=sol.residual,
        orth_defect=sol.orth_defect,
        iterations=iteration,
        contraction_rate=rate,
        multipliers=sol.multipliers,
        multiplier_spread=sol.multiplier_spread,
        star_norm_g=E_norm,
        rates=rates,
        tangential_multipliers=sol.tangential_multipliers,
        symmetry_defect=hs_symmetry_defect(phi_field, basis.k),
    )
    if result.tangential_size > 0.0:
        logger.debug("tangential multipliers", size=result.tangential_size,
                     symmetry_defect=result.symmetry_defect)
    logger.info("fixed point converged", iterations=iteration, c=result.c,
                star_norm_phi=result.star_norm_phi, rate=rate)
    return result


def radial_derivative_of_correction(phi_minus: RealField, phi_plus: RealField, delta: float,
                                    rho: Optional[WeightRho] = None) -> Tuple[RealField, float]:
    """Central difference (Phi(r+delta) - Phi(r-delta)) / (2 delta) and its norm."""
    if phi_minus.grid != phi_plus.grid:
        raise GridMismatchError("corrections live on different grids")
    grid = phi_minus.grid
    if delta < 1e-3 * grid.spacing:
        raise DataValidationError(
            f"step {delta:.3g} is below the grid sensitivity {1e-3 * grid.spacing:.3g}"
        )
    derivative = (phi_plus.samples - phi_minus.samples) / (2.0 * delta)
    field_out = RealField(grid, derivative)
    return field_out, _norm(derivative, rho, grid)


def reduced_operator_gap(W: RealField, Vfield: RealField, basis: ProjectionBasis, p: float,
                         s: float, count: int = 3, seed: int = 0, tol: float = 1e-6,
                         maxiter: int = 400) -> float:
    """Smallest |Ritz value| of A on the complement of the constraint span."""
    op = ProjectedOperator(W, Vfield, basis, p, s)
    grid = W.grid
    rng = np.random.default_rng(seed)
    block = rng.standard_normal((grid.size, basis.k + count))

    def precond(v):
        return resolvent_array(v, grid, op.s, 1.0)

    values, _ = smallest_eigenpairs(op.apply, precond, grid, block, tol, maxiter, constraints=op.B)
    gap = float(np.min(np.abs(values)))
    logger.info("reduced operator gap", gap=gap, k=basis.k)
    return gap


@dataclass(eq=False)
class RingSolution:
    """Everything the reduction produces at one (k, r)."""

    spikes: SpikeRing
    W: RealField
    V: RealField
    E: RealField
    E_formula: RealField
    basis: ProjectionBasis
    rho: WeightRho
    solution: ReducedSolution
    s: float
    p: float
    interpolation_floor: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def u(self) -> RealField:
        return self.W.with_samples(self.W.samples + self.solution.phi.samples)

    def pde_residual(self, dealias: int = 1) -> float:
        """max |(-Delta)^s u + V u - u_+^p|."""
        u = self.u
        lhs = ansatz_residual(u, self.V, self.s, self.p, dealias)
        return float(np.max(np.abs(lhs.samples)))


def solve_ring(state: GroundState, params: ProblemParams, k: int, r: float, grid: GridSpec,
               opts: Optional[ReductionOptions] = None, sigma: Optional[float] = None) -> RingSolution:
    """Build W at (k, r) on ``grid`` and run the fixed point for Phi(r)."""
    opts = opts or ReductionOptions()
    spikes = spike_positions(k, r, params.N)
    W = build_multibump(state, spikes, grid)
    V = evaluate_potential(PotentialSpec(params.a, params.m), grid)
    E_discrete = ansatz_residual(W, V, params.s, params.p, opts.dealias)
    E_formula = error_field(W, V, spikes, state, params.p)
    basis = z_fields(state, spikes, grid, opts.tangential)
    rho = WeightRho.for_params(spikes, params, sigma)
    E = E_discrete if opts.use_discrete_error else E_formula
    solution = nonlinear_fixed_point(W, V, basis, params.p, params.s, opts, rho, E)
    return RingSolution(
        spikes=spikes, W=W, V=V, E=E_discrete, E_formula=E_formula, basis=basis, rho=rho,
        solution=solution, s=params.s, p=params.p,
        interpolation_floor=interpolation_floor(E_formula, E_discrete),
    )
