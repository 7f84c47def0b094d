"""
Unit tests for the domain models and the parameter admissibility checks.
"""

import math

import numpy as np
import pytest

from core.ansatz import spike_positions
from core.models import (
    EnergyReport,
    ErrorBoundReport,
    ExpansionCoeffs,
    FractionalOrder,
    GridSpec,
    InteractionRegime,
    MultiplierReport,
    ProblemParams,
    RadialProfile,
    RadiusInterval,
    RadiusSearchResult,
    RealField,
    SpikeRing,
    WeightRho,
    admissible_m_range,
    check_admissible,
    check_subcritical,
    critical_exponent,
)
from utils.exceptions import (
    AdmissibilityError,
    DataValidationError,
    NonFiniteFieldError,
    SupercriticalExponentError,
)


class TestExponents:
    """Test suite for the exponent conditions."""

    def test_critical_exponent(self):
        """(N+2s)/(N-2s), infinite when N <= 2s."""
        assert critical_exponent(2, 0.5) == pytest.approx(3.0)
        assert critical_exponent(1, 0.5) == math.inf

    def test_supercritical_rejected(self):
        """p = 5 at N = 2, s = 1/2 is supercritical."""
        with pytest.raises(SupercriticalExponentError, match="supercritical exponent"):
            check_subcritical(2, 0.5, 5.0)

    def test_p_must_exceed_one(self):
        """p <= 1 is rejected."""
        with pytest.raises(SupercriticalExponentError):
            check_subcritical(2, 0.5, 1.0)

    def test_desk_m_range(self):
        """At the desk point the lower bound is 0 and the upper N+2s."""
        lower, upper = admissible_m_range(2, 0.5, 2.0)

        assert lower == 0.0
        assert upper == pytest.approx(3.0)

    def test_upper_violation_quotes_inequality(self):
        """m >= N+2s names the violated half."""
        with pytest.raises(AdmissibilityError) as info:
            check_admissible(2, 0.5, 2.0, 3.5)

        assert "m < N+2s" in info.value.inequality

    def test_lower_violation_quotes_inequality(self):
        """m <= 0 names the lower half."""
        with pytest.raises(AdmissibilityError) as info:
            check_admissible(2, 0.5, 2.0, 0.0)

        assert info.value.inequality.startswith("m > max")
        assert info.value.details["inequality"] == info.value.inequality

    def test_fractional_order_range(self):
        """s must lie in (0, 1]."""
        assert FractionalOrder(1.0).classical
        with pytest.raises(DataValidationError):
            FractionalOrder(0.0)
        with pytest.raises(DataValidationError):
            FractionalOrder(1.5)


class TestProblemParams:
    """Test suite for ProblemParams."""

    def test_desk_parameters_validate(self):
        """The desk tuple is admissible."""
        ProblemParams.desk().validate()

    def test_derived_exponents(self):
        """nu = 3, mu = N/2 - m/nu + 1 + sigma, tau = 3/2."""
        params = ProblemParams.desk()

        assert params.nu == pytest.approx(3.0)
        assert params.mu == pytest.approx(1.0 - 1.0 / 3.0 + 1.0 + 0.05)
        assert params.radius_exponent == pytest.approx(1.5)

    def test_c0_must_exceed_one(self):
        """C0 <= 1 is rejected."""
        with pytest.raises(AdmissibilityError):
            ProblemParams(2, 0.5, 2.0, 1.0, 1.0, 0.05, 1.0).validate()

    def test_negative_amplitude_rejected(self):
        """a < 0 is rejected."""
        with pytest.raises(AdmissibilityError):
            ProblemParams(2, 0.5, 2.0, -1.0, 1.0).validate()

    def test_with_sigma(self):
        """Only sigma changes."""
        params = ProblemParams.desk().with_sigma(0.1)

        assert params.sigma == 0.1
        assert params.m == 1.0


class TestFields:
    """Test suite for RealField."""

    def test_samples_are_read_only_copies(self):
        """The field owns a frozen copy of its samples."""
        grid = GridSpec(1, 1.0, 8)
        data = np.zeros(8)
        f = RealField(grid, data)
        data[0] = 1.0

        assert f.samples[0] == 0.0
        with pytest.raises(ValueError):
            f.samples[0] = 2.0

    def test_size_mismatch(self):
        """Sample count must match the grid."""
        with pytest.raises(DataValidationError):
            RealField(GridSpec(1, 1.0, 8), np.zeros(10))

    def test_non_finite_rejected(self):
        """NaN samples are rejected."""
        data = np.zeros(8)
        data[3] = np.nan

        with pytest.raises(NonFiniteFieldError):
            RealField(GridSpec(1, 1.0, 8), data)


class TestRingModels:
    """Test suite for spikes, weights and radial tables."""

    def test_nearest_neighbor_of_square(self):
        """Four spikes on radius r are r*sqrt(2) apart."""
        ring = spike_positions(4, 3.0, 2)

        assert ring.nearest_neighbor_distance() == pytest.approx(3.0 * math.sqrt(2.0))
        assert SpikeRing.single(2).nearest_neighbor_distance() == math.inf

    def test_weight_is_cached_and_frozen(self):
        """rho is evaluated once per grid."""
        grid = GridSpec(2, 8.0, 32)
        rho = WeightRho.for_params(spike_positions(2, 3.0, 2), ProblemParams.desk())

        first = rho.evaluate(grid)

        assert rho.evaluate(grid) is first
        assert not first.flags.writeable

    def test_weight_exponent_range(self):
        """A sigma that pushes mu above N+2s is rejected."""
        with pytest.raises(AdmissibilityError):
            WeightRho.for_params(spike_positions(2, 3.0, 2), ProblemParams.desk(), sigma=5.0)

    def test_weight_peaks_at_spikes(self):
        """Each term is 1 at its spike."""
        grid = GridSpec(2, 8.0, 32)
        ring = SpikeRing.single(2)
        rho = WeightRho.for_params(ring, ProblemParams.desk())

        assert rho.evaluate(grid)[grid.center_index] == pytest.approx(1.0)

    def test_radial_profile_tail(self):
        """Beyond the cutoff the table is exactly A t^-nu."""
        radii = np.linspace(0.0, 10.0, 101)
        values = 1.0 / (1.0 + radii ** 2)
        slopes = -2.0 * radii / (1.0 + radii ** 2) ** 2
        table = RadialProfile(radii, values, slopes, tail_amplitude=1.0, nu=2.0, cutoff=9.0)

        assert table.value(np.array([20.0]))[0] == pytest.approx(20.0 ** -2)
        assert table.derivative(np.array([20.0]))[0] == pytest.approx(-2.0 * 20.0 ** -3)
        assert table.value(np.array([0.5]))[0] == pytest.approx(0.8, rel=1e-3)


class TestReports:
    """Test suite for report records."""

    def test_error_bound_sum(self):
        """The bound is the sum of its three terms."""
        report = ErrorBoundReport(8, 5.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.2)

        assert report.bound == pytest.approx(0.9)
        assert report.to_dict()["bound"] == pytest.approx(0.9)

    def test_multiplier_ratio(self):
        """|c| against the two norms."""
        report = MultiplierReport(c=-0.5, star_norm_phi=1.0, star_norm_g=1.5)

        assert report.ratio == pytest.approx(0.2)
        assert report.c_over_phi == pytest.approx(0.5)
        assert MultiplierReport(0.0, 0.0, 0.0).ratio == 0.0

    def test_r0_prefactor(self):
        """((N+2s) B2 / (m B1))^(1/(N+2s-m))."""
        coeffs = ExpansionCoeffs(A1=1.0, B1=2.0, Btilde2=1.0, C_ell=0.5, B2=0.25)

        assert coeffs.r0_prefactor(2, 0.5, 1.0) == pytest.approx((3.0 * 0.25 / 2.0) ** 0.5)
        assert ExpansionCoeffs(1.0, 0.0, 1.0, 0.5, 0.25, True).r0_prefactor(2, 0.5, 1.0) == math.inf

    def test_dominance_ordering(self):
        """Leading term above corrections above discrepancy."""
        report = EnergyReport(8, 5.0, 10.01, 10.0, 9.0, 0.6, -0.5, 0.01, 0.0, 0.0)

        assert report.dominance_ordering()
        assert report.discrepancy == pytest.approx(0.01)
        assert set(report.breakdown) == {"kA1", "kB1/r^m", "interaction"}

    def test_sign_change_of_multiplier(self):
        """c changes sign across r1 when c_minus * c_plus < 0."""
        result = RadiusSearchResult(10.0, 1.0, 0.0, 0.0, (0.5, 0.4), c_minus=0.1, c_plus=-0.1)

        assert result.c_changes_sign
        assert result.to_dict()["endpoint_values"] == [0.5, 0.4]

    def test_interaction_regime_agreement(self):
        """Agreement within the tolerance."""
        regime = InteractionRegime(3.0, "summable", -1.5, -1.45)

        assert regime.agrees()
        assert not regime.agrees(tol=0.01)

    def test_radius_interval(self):
        """Containment and ratio."""
        interval = RadiusInterval(2.0, 32.0, 1.5, 4.0)

        assert interval.contains(10.0)
        assert not interval.contains(40.0)
        assert interval.ratio == pytest.approx(16.0)
