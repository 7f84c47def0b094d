"""
Tests for the energy functional, its expansion and the radius search.
"""

import math
from unittest.mock import Mock

import numpy as np
import pytest

from core.energy import (
    circle_sum,
    circle_sum_constant,
    energy,
    expansion_coeffs,
    fprime_identity,
    golden_section_maximize,
    maximize_reduced_energy,
    optimal_radius,
    radius_table,
    required_C0,
    single_bump_energy,
    theorem_endpoint_check,
    three_term_energy,
)
from core.models import GridSpec, GroundStateIntegrals, PotentialSpec, RadiusInterval, RealField
from utils.exceptions import (
    AdmissibilityError,
    CoefficientError,
    DivergentSumError,
    EndpointMaximizerError,
)

ZETA_3 = 1.2020569031595942


def fake_ground_state(tail_amplitude=0.5, p=2.0):
    """A stand-in carrying only what the coefficient formulas read."""
    gs = Mock()
    gs.integrals = GroundStateIntegrals(Iw2=2.0, Iwp1=3.0, Iwp=4.0, Idw2=1.0)
    gs.p = p
    gs.tail_amplitude = tail_amplitude
    return gs


class TestEnergyFunctional:
    """Test suite for J by quadrature."""

    def test_zero_field(self):
        """J(0) = 0."""
        grid = GridSpec(2, 4.0, 32)
        zero = RealField.constant(grid, 0.0)

        assert energy(zero, RealField.constant(grid, 1.0), 0.5, 2.0) == 0.0

    def test_constant_field(self):
        """For u = 1 and V = 1 only the mass and power terms survive."""
        grid = GridSpec(2, 4.0, 32)
        one = RealField.constant(grid, 1.0)

        value = energy(one, one, 0.5, 2.0)

        assert value == pytest.approx(64.0 * (0.5 - 1.0 / 3.0), rel=1e-12)

    def test_single_bump_energy_is_leading_coefficient(self, planar_state):
        """With V = 1, J(w) = (1/2 - 1/(p+1)) int w^(p+1)."""
        record = single_bump_energy(planar_state, PotentialSpec(a=0.0, m=1.0), 0.0, planar_state.grid)

        assert record["J_direct"] == pytest.approx(record["A1"], rel=1e-3)
        assert record["J_quadrature"] == pytest.approx(record["J_direct"], rel=1e-12)
        assert "asymptote" not in record


class TestCircleSums:
    """Test suite for the circle-sum constant."""

    def test_cubic_constant(self):
        """C_3 = 2 zeta(3) / (2 pi)^3."""
        C, stability = circle_sum_constant(3.0)

        assert C == pytest.approx(2.0 * ZETA_3 / (2.0 * math.pi) ** 3, rel=1e-4)
        assert stability < 1e-3

    @pytest.mark.parametrize("k", [64, 128])
    def test_finite_sums_approach_constant(self, k):
        """S_k(3) at r = 1 is close to C_3 k^3."""
        C, _ = circle_sum_constant(3.0)

        assert circle_sum(k, 1.0, 3.0) / k ** 3 == pytest.approx(C, rel=0.05)

    @pytest.mark.parametrize("ell", [1.0, 0.5])
    def test_divergent_exponent(self, ell):
        """ell <= 1 has no finite constant."""
        with pytest.raises(DivergentSumError):
            circle_sum_constant(ell)


class TestExpansionCoefficients:
    """Test suite for A1, B1, Btilde2 and B2."""

    def setup_method(self):
        """Set up the stand-in ground state."""
        self.gs = fake_ground_state()

    def test_values(self):
        """Coefficients follow from the integrals."""
        coeffs = expansion_coeffs(self.gs, 1.0, 1.0, 2, 0.5, C_ell=0.01)

        assert coeffs.A1 == pytest.approx(0.5)
        assert coeffs.B1 == pytest.approx(1.0)
        assert coeffs.Btilde2 == pytest.approx(2.0)
        assert coeffs.B2 == pytest.approx(0.01)
        assert not coeffs.degenerate

    def test_flat_potential_is_degenerate(self):
        """a = 0 gives B1 = 0 and no optimal radius."""
        coeffs = expansion_coeffs(self.gs, 0.0, 1.0, 2, 0.5, C_ell=0.01)

        assert coeffs.degenerate
        with pytest.raises(CoefficientError):
            optimal_radius(8, coeffs, 2, 0.5, 1.0)

    def test_missing_tail_rejected(self):
        """Without an algebraic tail Btilde2 = 0."""
        with pytest.raises(CoefficientError):
            expansion_coeffs(fake_ground_state(tail_amplitude=0.0), 1.0, 1.0, 2, 0.5, C_ell=0.01)

    def test_classical_ground_state_rejected(self, planar_state):
        """The exponentially decaying profile has no interaction coefficient."""
        with pytest.raises(CoefficientError):
            expansion_coeffs(planar_state, 0.2, 1.0, 2, 1.0)

    def test_exponent_out_of_range(self):
        """m >= N+2s is refused."""
        with pytest.raises(AdmissibilityError):
            expansion_coeffs(self.gs, 1.0, 3.0, 2, 0.5, C_ell=0.01)


class TestOptimalRadius:
    """Test suite for r0 and the three-term energy."""

    def setup_method(self):
        """Set up coefficients at N = 2, s = 1/2, m = 1."""
        self.coeffs = expansion_coeffs(fake_ground_state(), 1.0, 1.0, 2, 0.5, C_ell=0.01)

    def test_growth_in_k(self):
        """r0 grows like k^((N+2s)/(N+2s-m)) = k^1.5."""
        r8 = optimal_radius(8, self.coeffs, 2, 0.5, 1.0)
        r16 = optimal_radius(16, self.coeffs, 2, 0.5, 1.0)

        assert r16 / r8 == pytest.approx(2.0 ** 1.5, rel=1e-12)

    def test_r0_maximizes_expansion(self):
        """The three-term energy peaks at r0."""
        r0 = optimal_radius(8, self.coeffs, 2, 0.5, 1.0)
        peak = three_term_energy(8, r0, self.coeffs, 2, 0.5, 1.0)

        for factor in (0.9, 0.99, 1.01, 1.1):
            assert three_term_energy(8, factor * r0, self.coeffs, 2, 0.5, 1.0) < peak

    def test_required_C0(self):
        """r0 lies in I0 exactly when C0 reaches the required value."""
        prefactor = self.coeffs.r0_prefactor(2, 0.5, 1.0)

        assert required_C0(self.coeffs, 2, 0.5, 1.0) == pytest.approx(max(prefactor, 1.0 / prefactor))
        assert required_C0(self.coeffs, 2, 0.5, 1.0) >= 1.0

    def test_endpoint_check(self):
        """The closed-form maximum equals the expansion at r0."""
        C0 = 2.0 * required_C0(self.coeffs, 2, 0.5, 1.0)

        check = theorem_endpoint_check(8, self.coeffs, C0, 2, 0.5, 1.0)

        assert check["F_r0_predicted"] == pytest.approx(check["F_r0_expansion"], rel=1e-12)
        assert check["interior"]

    def test_radius_table(self):
        """One row per k with r0 and the interval bounds."""
        rows = radius_table([6, 8, 12], self.coeffs, 2, 0.5, 1.0, 4.0)

        assert [row["k"] for row in rows] == [6, 8, 12]
        assert rows[1]["I0_lower"] == pytest.approx(8 ** 1.5 / 4.0)
        assert rows[1]["I0_upper"] == pytest.approx(8 ** 1.5 * 4.0)
        assert rows[0]["r0"] < rows[1]["r0"] < rows[2]["r0"]


class TestRadiusSearch:
    """Test suite for the golden-section search and the maximizer of F."""

    def test_golden_section_on_parabola(self):
        """The maximizer of -(x-2)^2 on [0, 5]."""
        x, fx, evaluations = golden_section_maximize(lambda x: -(x - 2.0) ** 2, 0.0, 5.0, rtol=1e-6)

        assert x == pytest.approx(2.0, abs=1e-5)
        assert fx == pytest.approx(0.0, abs=1e-9)
        assert evaluations > 2

    def test_interior_maximizer(self):
        """F = -(r-10)^2 with c = -(r-10) peaks at 10 where c changes sign."""
        interval = RadiusInterval(lower=5.0, upper=20.0, exponent=1.5, C0=2.0)

        result = maximize_reduced_energy(4, interval, lambda r: (-(r - 10.0) ** 2, -(r - 10.0)))

        assert result.r1 == pytest.approx(10.0, rel=2e-3)
        assert result.c_changes_sign
        assert abs(result.Fprime_at_r1) < 0.1
        assert result.endpoint_values[0] == pytest.approx(-25.0)
        assert result.endpoint_values[1] == pytest.approx(-100.0)

    def test_endpoint_maximum_raises(self):
        """An increasing F peaks at the upper end of I0."""
        interval = RadiusInterval(lower=5.0, upper=20.0, exponent=1.5, C0=2.0)

        with pytest.raises(EndpointMaximizerError):
            maximize_reduced_energy(4, interval, lambda r: (r, 1.0))

    def test_evaluator_results_are_reused(self):
        """Each radius is evaluated once."""
        interval = RadiusInterval(lower=5.0, upper=20.0, exponent=1.5, C0=2.0)
        evaluator = Mock(side_effect=lambda r: (-(r - 10.0) ** 2, -(r - 10.0)))

        result = maximize_reduced_energy(4, interval, evaluator)

        radii = [call.args[0] for call in evaluator.call_args_list]
        assert len(radii) == len(set(radii))
        assert result.evaluations == evaluator.call_count

    def test_fprime_identity(self):
        """F'(r) = c k (1/N) int (w')^2."""
        check = fprime_identity(2.0, 0.5, 4, fake_ground_state())

        assert check["predicted"] == pytest.approx(2.0)
        assert check["ratio"] == pytest.approx(1.0)
        assert check["same_sign"]


@pytest.mark.slow
class TestDeskPoint:
    """Test suite for the s = 1/2 planar ground state."""

    def test_tail_exponent(self, desk_state):
        """w decays like |x|^-(N+2s) = |x|^-3."""
        assert desk_state.decay_exponent == pytest.approx(3.0, abs=0.1)
        assert desk_state.tail_amplitude > 0

    def test_coefficients_positive(self, desk_state):
        """Every expansion coefficient is positive at a = m = 1."""
        coeffs = expansion_coeffs(desk_state, 1.0, 1.0, 2, 0.5)

        assert min(coeffs.A1, coeffs.B1, coeffs.Btilde2, coeffs.C_ell, coeffs.B2) > 0
        assert np.isfinite(optimal_radius(8, coeffs, 2, 0.5, 1.0))
