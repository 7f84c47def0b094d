"""
Tests for the projected linear theory and the nonlinear fixed point.

The classical planar ground state keeps the grids small; the algebra is
the same for every s.
"""

from unittest.mock import patch

import numpy as np
import pytest

from core.ansatz import ansatz_residual, build_multibump, evaluate_potential, spike_positions
from core.models import (
    PotentialSpec,
    ProblemParams,
    RealField,
    ReducedSolution,
    SpikeRing,
    WeightRho,
)
from core.reduction import (
    ProjectedOperator,
    ReductionOptions,
    gram_offdiagonal_sum,
    multiplier_estimate,
    nonlinear_fixed_point,
    nonlinear_remainder,
    projected_linear_solve,
    radial_derivative_of_correction,
    reduced_operator_gap,
    solve_ring,
    z_fields,
)
from utils.exceptions import ContractionError, DataValidationError, GridMismatchError

PLANAR_PARAMS = ProblemParams(N=2, s=1.0, p=2.0, a=0.2, m=1.0)


@pytest.fixture
def ring_problem(planar_state):
    """W, V, E and the projection basis for two spikes at r = 8."""
    grid = planar_state.grid
    spikes = spike_positions(2, 8.0, 2)
    W = build_multibump(planar_state, spikes, grid)
    V = evaluate_potential(PotentialSpec(a=0.2, m=1.0), grid)
    E = ansatz_residual(W, V, 1.0, 2.0)
    basis = z_fields(planar_state, spikes, grid)
    rho = WeightRho.for_params(spikes, PLANAR_PARAMS)
    return W, V, E, basis, rho


def affine_solver(center, slope):
    """A projected solve replaced by T(phi) = center + slope (phi - center)."""
    def solve(W, Vfield, g, basis, p, s, opts=None, rho=None, x0=None, operator=None):
        image = center + slope * (np.asarray(x0) - center)
        return ReducedSolution(phi=RealField(W.grid, image), c=0.0, star_norm_phi=0.0,
                               residual=0.0, orth_defect=0.0, iterations=1)

    return solve


class TestProjectionBasis:
    """Test suite for Z_j and their Gram matrix."""

    def test_gram_diagonal_matches_derivative_integral(self, planar_state):
        """int Z_j^2 = (1/N) int |grad w|^2."""
        spikes = spike_positions(4, 8.0, 2)

        basis = z_fields(planar_state, spikes, planar_state.grid)

        np.testing.assert_allclose(np.diag(basis.gram), planar_state.integrals.Idw2, rtol=1e-3)
        np.testing.assert_allclose(basis.gram, basis.gram.T, atol=1e-14)

    def test_offdiagonal_is_small_for_separated_bumps(self, planar_state):
        """Distant bumps are nearly orthogonal."""
        basis = z_fields(planar_state, spike_positions(4, 8.0, 2), planar_state.grid)

        assert gram_offdiagonal_sum(basis) < 1e-3 * basis.gram[0, 0]

    def test_coincident_spikes_rejected(self, planar_state):
        """k spikes stacked at the origin give dependent constraint fields."""
        W = RealField.constant(planar_state.grid, 0.0)
        V = RealField.constant(planar_state.grid, 1.0)
        basis = z_fields(planar_state, spike_positions(8, 0.0, 2), planar_state.grid)

        with pytest.raises(DataValidationError, match="linearly dependent"):
            ProjectedOperator(W, V, basis, 2.0, 1.0)

    def test_tangential_modes(self, planar_state):
        """One tangential mode per spike unless disabled."""
        spikes = spike_positions(3, 8.0, 2)

        with_modes = z_fields(planar_state, spikes, planar_state.grid)
        without = z_fields(planar_state, spikes, planar_state.grid, tangential=False)

        assert len(with_modes.tangential) == 3
        assert without.tangential == []
        assert len(with_modes.constraint_fields()) == 6


class TestProjectedOperator:
    """Test suite for the bordered operator helpers."""

    def test_projection_removes_constraints(self, ring_problem):
        """project_out leaves nothing along the constraint fields."""
        W, V, _, basis, _ = ring_problem
        op = ProjectedOperator(W, V, basis, 2.0, 1.0)
        rng = np.random.default_rng(0)

        phi = op.project_out(rng.standard_normal(W.grid.shape))

        assert np.max(np.abs(op.B.T @ phi.ravel())) < 1e-10

    def test_multipliers_of_pure_constraint_data(self, ring_problem):
        """Data in the constraint span is absorbed by the multipliers."""
        W, V, _, basis, _ = ring_problem
        op = ProjectedOperator(W, V, basis, 2.0, 1.0)
        lam = np.arange(1.0, op.constraints + 1.0)
        g = (op.B @ lam).reshape(W.grid.shape)

        fitted, leftover = op.fit_multipliers(np.zeros(W.grid.shape), g)

        np.testing.assert_allclose(fitted, -lam, atol=1e-10)
        assert np.max(np.abs(leftover)) < 1e-10

    def test_grid_mismatch(self, ring_problem, planar_state):
        """W and V must share a grid."""
        W, _, _, basis, _ = ring_problem
        other = RealField.constant(planar_state.grid.refined(), 1.0)

        with pytest.raises(GridMismatchError):
            ProjectedOperator(W, other, basis, 2.0, 1.0)


class TestProjectedLinearSolve:
    """Test suite for the linear theory."""

    def test_zero_data_gives_zero_solution(self, ring_problem):
        """g = 0 returns phi = 0, c = 0 without iterating."""
        W, V, _, basis, _ = ring_problem

        sol = projected_linear_solve(W, V, RealField.constant(W.grid, 0.0), basis, 2.0, 1.0)

        assert sol.c == 0.0
        assert sol.phi.max_abs() == 0.0
        assert sol.iterations == 0

    def test_solution_is_orthogonal(self, ring_problem):
        """phi is orthogonal to every Z_j to round-off."""
        W, V, E, basis, rho = ring_problem

        sol = projected_linear_solve(W, V, E, basis, 2.0, 1.0, rho=rho)

        assert sol.orth_defect <= 1e-10
        assert sol.residual <= ReductionOptions().krylov_tol * E.max_abs()
        assert sol.solve_constant > 0

    def test_linearity(self, ring_problem):
        """Doubling g doubles phi and c."""
        W, V, E, basis, rho = ring_problem
        doubled = E.with_samples(2.0 * E.samples)

        one = projected_linear_solve(W, V, E, basis, 2.0, 1.0, rho=rho)
        two = projected_linear_solve(W, V, doubled, basis, 2.0, 1.0, rho=rho)

        scale = one.phi.max_abs()
        assert np.max(np.abs(two.phi.samples - 2.0 * one.phi.samples)) <= 1e-6 * scale
        assert two.c == pytest.approx(2.0 * one.c, rel=1e-5, abs=1e-12)

    def test_symmetric_data_has_no_tangential_multipliers(self, ring_problem):
        """On ring-symmetric data every d_j vanishes to solver tolerance."""
        W, V, E, basis, rho = ring_problem

        sol = projected_linear_solve(W, V, E, basis, 2.0, 1.0, rho=rho)

        assert sol.tangential_multipliers.shape == (2,)
        assert sol.tangential_size <= 1e-6 * E.max_abs()

    def test_asymmetric_data_reports_tangential_multipliers(self, ring_problem):
        """Data odd in x2 is absorbed partly by the tangential modes."""
        W, V, E, basis, rho = ring_problem
        x2 = np.broadcast_to(W.grid.coordinates()[1], W.grid.shape)
        tilted = E.with_samples(E.samples * (1.0 + 0.5 * np.tanh(x2)))

        sym = projected_linear_solve(W, V, E, basis, 2.0, 1.0, rho=rho)
        asym = projected_linear_solve(W, V, tilted, basis, 2.0, 1.0, rho=rho)

        assert asym.tangential_size > 1e3 * sym.tangential_size + 1e-12

    def test_antipodal_multipliers_agree(self, ring_problem):
        """The half-turn is a grid symmetry, so both radial multipliers coincide."""
        W, V, E, basis, rho = ring_problem

        sol = projected_linear_solve(W, V, E, basis, 2.0, 1.0, rho=rho)

        assert sol.multiplier_spread <= 1e-6 * abs(sol.c) + 1e-10

    def test_multiplier_estimate(self, ring_problem):
        """The report mirrors the solution norms."""
        W, V, E, basis, rho = ring_problem
        sol = projected_linear_solve(W, V, E, basis, 2.0, 1.0, rho=rho)

        report = multiplier_estimate(sol)

        assert report.star_norm_phi == sol.star_norm_phi
        assert report.star_norm_g == sol.star_norm_g
        assert report.ratio >= 0


class TestNonlinearTerms:
    """Test suite for N(phi) and the radial derivative of Phi."""

    def test_quadratic_remainder(self):
        """For p = 2 and W + phi >= 0, N(phi) = phi^2."""
        W = np.full(5, 1.0)
        phi = np.linspace(-0.5, 0.5, 5)

        np.testing.assert_allclose(nonlinear_remainder(W, phi, 2.0), phi ** 2, atol=1e-15)

    def test_remainder_vanishes_at_zero(self):
        """N(0) = 0."""
        W = np.linspace(0.0, 2.0, 7)

        np.testing.assert_array_equal(nonlinear_remainder(W, np.zeros(7), 3.0), np.zeros(7))

    def test_central_difference(self, planar_state):
        """(Phi(r+d) - Phi(r-d)) / 2d."""
        grid = planar_state.grid
        minus = RealField.constant(grid, 1.0)
        plus = RealField.constant(grid, 3.0)

        field, norm = radial_derivative_of_correction(minus, plus, 0.5)

        np.testing.assert_allclose(field.samples, 2.0)
        assert norm == pytest.approx(2.0)

    def test_step_below_grid_sensitivity(self, planar_state):
        """A step far below h is rejected."""
        grid = planar_state.grid
        f = RealField.constant(grid, 0.0)

        with pytest.raises(DataValidationError):
            radial_derivative_of_correction(f, f, 1e-6 * grid.spacing)


class TestFixedPoint:
    """Test suite for Phi(r) and the end-to-end ring solve."""

    def test_fixed_point_contracts(self, ring_problem):
        """The terminal contraction rate stays below 1/2."""
        W, V, E, basis, rho = ring_problem

        sol = nonlinear_fixed_point(W, V, basis, 2.0, 1.0, rho=rho, E=E)

        assert sol.contraction_rate <= 0.5
        assert sol.orth_defect <= 1e-10
        assert sol.star_norm_g > 0

    def test_solution_in_symmetry_class(self, ring_problem):
        """phi keeps the half-turn and x2-reflection symmetry of the data."""
        W, V, E, basis, rho = ring_problem

        sol = nonlinear_fixed_point(W, V, basis, 2.0, 1.0, rho=rho, E=E)

        assert sol.symmetry_defect is not None
        assert sol.symmetry_defect <= 1e-6
        assert sol.tangential_size <= 1e-6 * E.max_abs()

    def test_relaxed_start_recovers(self, ring_problem):
        """Starting at relaxation 1/8 reaches the same phi with the same rate bound."""
        W, V, E, basis, rho = ring_problem

        plain = nonlinear_fixed_point(W, V, basis, 2.0, 1.0, rho=rho, E=E)
        relaxed = nonlinear_fixed_point(W, V, basis, 2.0, 1.0, ReductionOptions(relaxation=0.125),
                                        rho=rho, E=E)

        assert relaxed.contraction_rate <= 0.5
        assert relaxed.c == pytest.approx(plain.c, rel=1e-5, abs=1e-12)
        scale = plain.phi.max_abs()
        assert np.max(np.abs(relaxed.phi.samples - plain.phi.samples)) <= 1e-5 * scale

    def test_flat_single_bump_recovers_ground_state(self, planar_state):
        """k = 1 at the origin with V = 1: u = w, c = 0."""
        params = ProblemParams(N=2, s=1.0, p=2.0, a=0.0, m=1.0)

        ring = solve_ring(planar_state, params, 1, 0.0, planar_state.grid)

        assert abs(ring.solution.c) < 1e-8
        assert ring.pde_residual() < 1e-5
        assert np.max(np.abs(ring.u.samples - planar_state.profile.samples)) < 1e-4

    def test_ring_solution_fields(self, planar_state):
        """solve_ring returns u = W + Phi and the interpolation floor."""
        ring = solve_ring(planar_state, PLANAR_PARAMS, 2, 8.0, planar_state.grid)

        np.testing.assert_allclose(ring.u.samples, ring.W.samples + ring.solution.phi.samples)
        assert ring.interpolation_floor >= 0
        assert ring.spikes.k == 2

    @pytest.mark.slow
    def test_reduced_operator_gap(self, ring_problem):
        """The operator is invertible on the complement of the constraints."""
        W, V, _, basis, _ = ring_problem

        gap = reduced_operator_gap(W, V, basis, 2.0, 1.0)

        assert gap > 1e-3


class TestSingleSpikeHelpers:
    """Test suite for degenerate ring inputs."""

    def test_single_spike_basis_at_origin(self, planar_state):
        """A spike at the origin uses e1 as its radial direction."""
        basis = z_fields(planar_state, SpikeRing.single(2), planar_state.grid)

        assert basis.k == 1
        assert basis.gram[0, 0] == pytest.approx(planar_state.integrals.Idw2, rel=1e-3)


class TestRelaxation:
    """Test suite for the adaptive relaxation of the fixed point."""

    def setup_method(self):
        """Set up the iteration limits of the fixed point."""
        self.opts = ReductionOptions(fp_max_iter=50)

    def test_overshooting_map_converges_after_halving(self, ring_problem):
        """T with slope -2 diverges plainly but converges once relaxed."""
        W, V, E, basis, _ = ring_problem
        center = E.samples

        with patch("core.reduction.projected_linear_solve", side_effect=affine_solver(center, -2.0)):
            sol = nonlinear_fixed_point(W, V, basis, 2.0, 1.0, self.opts, E=E)

        assert np.max(np.abs(sol.phi.samples - center)) <= 1e-6 * np.max(np.abs(center))
        assert sol.contraction_rate == pytest.approx(2.0, rel=1e-6)

    def test_expanding_map_raises_with_rate(self, ring_problem):
        """T with slope 2 cannot be rescued by relaxation."""
        W, V, E, basis, _ = ring_problem

        with patch("core.reduction.projected_linear_solve", side_effect=affine_solver(E.samples, 2.0)):
            with pytest.raises(ContractionError) as info:
                nonlinear_fixed_point(W, V, basis, 2.0, 1.0, self.opts, E=E)

        assert info.value.details["rate"] == pytest.approx(2.0, rel=1e-6)
        assert info.value.exit_code == 3

    def test_rate_ignores_relaxation(self, ring_problem):
        """A contracting map reports its own slope whatever the starting relaxation."""
        W, V, E, basis, _ = ring_problem
        opts = ReductionOptions(relaxation=0.25)

        with patch("core.reduction.projected_linear_solve", side_effect=affine_solver(E.samples, 0.3)):
            sol = nonlinear_fixed_point(W, V, basis, 2.0, 1.0, opts, E=E)

        assert sol.contraction_rate == pytest.approx(0.3, rel=1e-6)
        assert all(rate == pytest.approx(0.3, rel=1e-6) for rate in sol.rates)
