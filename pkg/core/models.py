"""
Data models for fracbump.

This module contains the dataclasses shared by the spectral, ground-state,
ansatz, reduction and energy layers: the periodic grid, real and spectral
fields, the ground state and its radial table, the spike ring, the potential,
the weight of the starred norm, and the report records every stage emits.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline

from utils.exceptions import (
    AdmissibilityError,
    DataValidationError,
    GridSpecError,
    NonFiniteFieldError,
    SupercriticalExponentError,
)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the box [-L, L)^N."""

    dimension: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise GridSpecError(f"dimension must be >= 1, got {self.dimension}")
        if not self.half_width > 0:
            raise GridSpecError(f"half_width must be positive, got {self.half_width}")
        if self.points_per_axis < 8 or self.points_per_axis % 2:
            raise GridSpecError(
                f"points_per_axis must be even and >= 8, got {self.points_per_axis}"
            )
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "points_per_axis", int(self.points_per_axis))

    @property
    def spacing(self) -> float:
        """Grid step 2L/M."""
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        """Volume (2L/M)^N of one cell."""
        return self.spacing ** self.dimension

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dimension

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dimension

    @property
    def center_index(self) -> Tuple[int, ...]:
        """Index of the sample at the origin."""
        return (self.points_per_axis // 2,) * self.dimension

    def axis(self) -> np.ndarray:
        """Sample coordinates along one axis."""
        return -self.half_width + self.spacing * np.arange(self.points_per_axis)

    def coordinates(self) -> List[np.ndarray]:
        """Sparse, broadcastable coordinate arrays (ij indexing)."""
        ax = self.axis()
        return np.meshgrid(*([ax] * self.dimension), indexing="ij", sparse=True)

    def radius(self) -> np.ndarray:
        """|x| at every sample."""
        r2 = np.zeros(self.shape)
        for x in self.coordinates():
            r2 = r2 + x * x
        return np.sqrt(r2)

    def frequencies(self) -> np.ndarray:
        """Frequency lattice pi*n/L, n in [-M/2, M/2), in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)

    def refined(self, factor: int = 2) -> "GridSpec":
        """Same box, factor times more points per axis."""
        return GridSpec(self.dimension, self.half_width, self.points_per_axis * factor)

    def enlarged(self, factor: int = 2) -> "GridSpec":
        """Box factor times larger at the same spacing."""
        return GridSpec(self.dimension, self.half_width * factor, self.points_per_axis * factor)


@dataclass(frozen=True)
class FractionalOrder:
    """Order s of (-Delta)^s; s = 1 is the classical validation mode."""

    value: float

    def __post_init__(self):
        if not 0.0 < float(self.value) <= 1.0:
            raise DataValidationError(f"fractional order must lie in (0, 1], got {self.value}")
        object.__setattr__(self, "value", float(self.value))

    @property
    def classical(self) -> bool:
        return self.value == 1.0

    @staticmethod
    def coerce(s: Union["FractionalOrder", float]) -> "FractionalOrder":
        return s if isinstance(s, FractionalOrder) else FractionalOrder(float(s))

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples of a function on a GridSpec, row-major."""

    grid: GridSpec
    samples: np.ndarray

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64, copy=True)
        if data.size != self.grid.size:
            raise DataValidationError(
                f"sample count {data.size} does not match grid size {self.grid.size}"
            )
        data = data.reshape(self.grid.shape)
        if not np.all(np.isfinite(data)):
            raise NonFiniteFieldError("field contains non-finite samples")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)

    def with_samples(self, samples: np.ndarray) -> "RealField":
        """New field on the same grid."""
        return RealField(self.grid, samples)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.samples)))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "RealField":
        return cls(grid, np.full(grid.shape, float(value)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients of a field on the frequency lattice (unnormalized FFT)."""

    grid: GridSpec
    coefficients: np.ndarray

    def __post_init__(self):
        data = np.array(self.coefficients, dtype=np.complex128, copy=True)
        if data.size != self.grid.size:
            raise DataValidationError(
                f"coefficient count {data.size} does not match grid size {self.grid.size}"
            )
        data = data.reshape(self.grid.shape)
        data.setflags(write=False)
        object.__setattr__(self, "coefficients", data)

    def conjugate_symmetry_defect(self) -> float:
        """max |F(-n) - conj(F(n))|; zero for a real field."""
        c = self.coefficients
        mirrored = c
        for ax in range(c.ndim):
            mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
        return float(np.max(np.abs(mirrored - np.conj(c))))


def critical_exponent(dimension: int, s: float) -> float:
    """(N+2s)/(N-2s), or infinity when N <= 2s."""
    if dimension <= 2.0 * s:
        return math.inf
    return (dimension + 2.0 * s) / (dimension - 2.0 * s)


def check_subcritical(dimension: int, s: float, p: float) -> None:
    """Reject p outside (1, (N+2s)/(N-2s))."""
    if not p > 1.0:
        raise SupercriticalExponentError(f"exponent p must exceed 1, got {p}")
    pc = critical_exponent(dimension, s)
    if not p < pc:
        raise SupercriticalExponentError(
            f"supercritical exponent: p = {p} must be below (N+2s)/(N-2s) = {pc:.6g}",
            details={"p": p, "critical": pc},
        )


def admissible_m_range(dimension: int, s: float, p: float) -> Tuple[float, float]:
    """Open interval of potential exponents m allowed for N, s and the ring construction."""
    nu = dimension + 2.0 * s
    inner = 1.0 - (p - 1.0) * dimension - 2.0 * p * s + max(s, p - dimension / 2.0)
    return max(0.0, nu * inner), nu


def check_admissible(dimension: int, s: float, p: float, m: float) -> None:
    """Raise AdmissibilityError naming the violated half of the admissible range."""
    lower, upper = admissible_m_range(dimension, s, p)
    if not m > lower:
        raise AdmissibilityError(
            f"potential exponent m = {m} lies outside the admissible range",
            inequality=(
                f"m > max{{0, (N+2s)[1-(p-1)N-2ps+max{{s, p-N/2}}]}} = {lower:.6g}"
            ),
        )
    if not m < upper:
        raise AdmissibilityError(
            f"potential exponent m = {m} lies outside the admissible range",
            inequality=f"m < N+2s = {upper:.6g}",
        )


@dataclass(frozen=True)
class ProblemParams:
    """Parameter tuple (N, s, p, a, m, sigma, C0) of one construction."""

    N: int
    s: float
    p: float
    a: float
    m: float
    sigma: float = 0.05
    C0: float = 4.0

    @property
    def nu(self) -> float:
        """Decay exponent N+2s of the ground state."""
        return self.N + 2.0 * self.s

    @property
    def mu(self) -> float:
        """Weight exponent N/2 - m/(N+2s) + 1 + sigma."""
        return self.N / 2.0 - self.m / self.nu + 1.0 + self.sigma

    @property
    def radius_exponent(self) -> float:
        """(N+2s)/(N+2s-m), the growth of r0 in k."""
        return self.nu / (self.nu - self.m)

    def validate(self) -> None:
        FractionalOrder(self.s)
        check_subcritical(self.N, self.s, self.p)
        if self.a < 0:
            raise AdmissibilityError(f"potential amplitude a = {self.a} must be >= 0",
                                     inequality="a >= 0")
        check_admissible(self.N, self.s, self.p, self.m)
        if not self.sigma > 0:
            raise AdmissibilityError(f"sigma = {self.sigma} must be positive", inequality="sigma > 0")
        if not self.N / 2.0 < self.mu < self.nu:
            raise AdmissibilityError(
                f"weight exponent mu = {self.mu:.6g} out of range",
                inequality=f"N/2 < mu < N+2s = {self.nu:.6g}",
            )
        if not self.C0 > 1:
            raise AdmissibilityError(f"C0 = {self.C0} must exceed 1", inequality="C0 > 1")

    def with_sigma(self, sigma: float) -> "ProblemParams":
        return ProblemParams(self.N, self.s, self.p, self.a, self.m, sigma, self.C0)

    @classmethod
    def desk(cls) -> "ProblemParams":
        """N = 2, s = 1/2, p = 2, a = 1, m = 1, sigma = 0.05, C0 = 4."""
        return cls(N=2, s=0.5, p=2.0, a=1.0, m=1.0, sigma=0.05, C0=4.0)


@dataclass
class GroundStateIntegrals:
    """The four integrals of w every energy coefficient is built from."""

    Iw2: float
    Iwp1: float
    Iwp: float
    Idw2: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class RadialProfile:
    """Dense radial table of a bump with its far-field continuation.

    Values beyond ``cutoff`` follow A t^(-nu) exactly, or A t^(-nu) e^(-t)
    when ``exponential`` is set (the classical mode).
    """

    radii: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    tail_amplitude: float
    nu: float
    cutoff: float
    exponential: bool = False
    _value_spline: CubicSpline = field(init=False, repr=False)
    _slope_spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        self._value_spline = CubicSpline(self.radii, self.values, bc_type=((1, 0.0), "not-a-knot"))
        self._slope_spline = CubicSpline(self.radii, self.derivatives)

    def _tail(self, t: np.ndarray) -> np.ndarray:
        out = self.tail_amplitude * t ** (-self.nu)
        return out * np.exp(-t) if self.exponential else out

    def value(self, t: np.ndarray) -> np.ndarray:
        """w(t) for t >= 0."""
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        inner = flat <= self.cutoff
        out = np.empty_like(flat)
        out[inner] = self._value_spline(flat[inner])
        out[~inner] = self._tail(flat[~inner])
        return out.reshape(t.shape)

    def derivative(self, t: np.ndarray) -> np.ndarray:
        """w'(t) for t >= 0."""
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        inner = flat <= self.cutoff
        out = np.empty_like(flat)
        out[inner] = self._slope_spline(flat[inner])
        outer = flat[~inner]
        rate = self.nu / outer + (1.0 if self.exponential else 0.0)
        out[~inner] = -rate * self._tail(outer)
        return out.reshape(t.shape)


@dataclass
class GroundState:
    """Positive radial solution w of (-Delta)^s w + w = w^p with its tail law."""

    profile: RealField
    s: FractionalOrder
    p: float
    tail_amplitude: float
    decay_exponent: float
    integrals: GroundStateIntegrals
    residual: float
    iterations: int
    radial: RadialProfile
    width: float

    @property
    def grid(self) -> GridSpec:
        return self.profile.grid

    @property
    def nu(self) -> float:
        return self.grid.dimension + 2.0 * self.s.value

    @property
    def peak(self) -> float:
        return float(self.profile.samples[self.grid.center_index])

    def metadata(self) -> Dict[str, float]:
        """Sidecar record."""
        record = {
            "N": self.grid.dimension,
            "L": self.grid.half_width,
            "M": self.grid.points_per_axis,
            "s": self.s.value,
            "p": self.p,
            "A": self.tail_amplitude,
            "decay_exponent": self.decay_exponent,
            "residual": self.residual,
            "iterations": self.iterations,
            "width": self.width,
        }
        record.update(self.integrals.to_dict())
        return record


@dataclass
class NondegeneracyReport:
    """Smallest eigenvalues of the linearization at w."""

    near_zero_count: int
    near_zero_eigenvalues: List[float]
    symmetric_sector_gap: float
    eigenvalues: List[float] = field(default_factory=list)
    symmetric_eigenvalues: List[float] = field(default_factory=list)
    threshold: float = 1e-4

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass(eq=False)
class SpikeRing:
    """k spike centres on a circle of radius r in the (x1, x2) plane."""

    k: int
    r: float
    dimension: int
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(self.k, self.dimension)

    @classmethod
    def single(cls, dimension: int, r: float = 0.0) -> "SpikeRing":
        """One spike at r*e1 (the origin for r = 0)."""
        q = np.zeros((1, dimension))
        q[0, 0] = r
        return cls(1, float(r), dimension, q)

    def distances_from_first(self) -> np.ndarray:
        """|q1 - qj| for j = 2..k."""
        return np.linalg.norm(self.positions[1:] - self.positions[0], axis=1)

    def nearest_neighbor_distance(self) -> float:
        if self.k < 2:
            return math.inf
        return float(np.min(self.distances_from_first()))


@dataclass
class PotentialSpec:
    """Radial potential V(|x|) = V0 + a/|x|^m + remainder(|x|)."""

    a: float
    m: float
    V0: float = 1.0
    remainder: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def value(self, radius: np.ndarray) -> np.ndarray:
        radius = np.asarray(radius, dtype=float)
        out = self.V0 + self.a * radius ** (-self.m)
        if self.remainder is not None:
            out = out + self.remainder(radius)
        return out

    def check_admissible(self, dimension: int, s: float, p: float) -> None:
        check_admissible(dimension, s, p, self.m)

    @property
    def is_flat(self) -> bool:
        return self.a == 0.0 and self.remainder is None


@dataclass(eq=False)
class WeightRho:
    """Weight rho(x) = sum_j (1 + |x - q_j|)^(-mu) of the starred norm."""

    spikes: SpikeRing
    mu: float
    sigma: float
    _cache: Dict[GridSpec, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    @classmethod
    def for_params(cls, spikes: SpikeRing, params: ProblemParams,
                   sigma: Optional[float] = None) -> "WeightRho":
        sigma = params.sigma if sigma is None else sigma
        mu = params.with_sigma(sigma).mu
        if not params.N / 2.0 < mu < params.nu:
            raise AdmissibilityError(
                f"weight exponent mu = {mu:.6g} out of range",
                inequality=f"N/2 < mu < N+2s = {params.nu:.6g}",
            )
        return cls(spikes, mu, sigma)

    def evaluate(self, grid: GridSpec) -> np.ndarray:
        if grid in self._cache:
            return self._cache[grid]
        coords = grid.coordinates()
        rho = np.zeros(grid.shape)
        for q in self.spikes.positions:
            d2 = np.zeros(grid.shape)
            for x, qi in zip(coords, q):
                d2 = d2 + (x - qi) ** 2
            rho += (1.0 + np.sqrt(d2)) ** (-self.mu)
        rho.setflags(write=False)
        self._cache[grid] = rho
        return rho


@dataclass
class RadiusInterval:
    """I0 = [C0^-1 k^tau, C0 k^tau]."""

    lower: float
    upper: float
    exponent: float
    C0: float

    def contains(self, r: float) -> bool:
        return self.lower <= r <= self.upper

    @property
    def ratio(self) -> float:
        return self.upper / self.lower


@dataclass
class ErrorBoundReport:
    """Starred norm of E against the three terms of its bound."""

    k: int
    r: float
    sigma: float
    star_norm: float
    interaction_term: float
    far_field_term: float
    potential_term: float
    ratio_rm2: float

    @property
    def bound(self) -> float:
        return self.interaction_term + self.far_field_term + self.potential_term

    def to_dict(self) -> Dict[str, float]:
        record = asdict(self)
        record["bound"] = self.bound
        return record


@dataclass(eq=False)
class ProjectionBasis:
    """Z_j = dW_j/dr, their Gram matrix, and the tangential modes Y_j."""

    Z: List[RealField]
    gram: np.ndarray
    tangential: List[RealField] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.Z)

    def z_sum(self) -> np.ndarray:
        return np.sum([z.samples for z in self.Z], axis=0)

    def constraint_fields(self) -> List[np.ndarray]:
        """All directions the projected solve keeps phi orthogonal to."""
        return [z.samples for z in self.Z] + [y.samples for y in self.tangential]


@dataclass(eq=False)
class ReducedSolution:
    """(phi, c) of the projected problem with its diagnostics."""

    phi: RealField
    c: float
    star_norm_phi: float
    residual: float
    orth_defect: float
    iterations: int
    contraction_rate: Optional[float] = None
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multiplier_spread: float = 0.0
    star_norm_g: float = 0.0
    rates: List[float] = field(default_factory=list)
    tangential_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    symmetry_defect: Optional[float] = None

    @property
    def tangential_size(self) -> float:
        """max |d_j| of the tangential multipliers."""
        if self.tangential_multipliers.size == 0:
            return 0.0
        return float(np.max(np.abs(self.tangential_multipliers)))

    @property
    def solve_constant(self) -> float:
        """||phi||_* / ||g||_*."""
        return self.star_norm_phi / self.star_norm_g if self.star_norm_g > 0 else 0.0

    def summary_row(self, k: int, r: float) -> Dict[str, float]:
        return {
            "k": k,
            "r": r,
            "c": self.c,
            "star_norm_phi": self.star_norm_phi,
            "residual": self.residual,
            "orth_defect": self.orth_defect,
            "iterations": self.iterations,
            "contraction_rate": self.contraction_rate if self.contraction_rate is not None else float("nan"),
        }


@dataclass
class MultiplierReport:
    """Size of c against ||phi||_* and ||g||_*."""

    c: float
    star_norm_phi: float
    star_norm_g: float

    @property
    def ratio(self) -> float:
        denom = self.star_norm_phi + self.star_norm_g
        return abs(self.c) / denom if denom > 0 else 0.0

    @property
    def c_over_phi(self) -> float:
        return abs(self.c) / self.star_norm_phi if self.star_norm_phi > 0 else 0.0


@dataclass
class ExpansionCoeffs:
    """Coefficients of the energy expansion of W."""

    A1: float
    B1: float
    Btilde2: float
    C_ell: float
    B2: float
    degenerate: bool = False

    def r0_prefactor(self, dimension: int, s: float, m: float) -> float:
        """((N+2s)B2/(m B1))^(1/(N+2s-m))."""
        nu = dimension + 2.0 * s
        if self.B1 <= 0:
            return math.inf
        return ((nu * self.B2) / (m * self.B1)) ** (1.0 / (nu - m))

    def to_dict(self, dimension: int = None, s: float = None, m: float = None) -> Dict[str, float]:
        record = {
            "A1": self.A1,
            "B1": self.B1,
            "Btilde2": self.Btilde2,
            "C_ell": self.C_ell,
            "B2": self.B2,
            "degenerate": self.degenerate,
        }
        if dimension is not None:
            record["r0_prefactor"] = self.r0_prefactor(dimension, s, m)
        return record


@dataclass
class EnergyReport:
    """J(W) by quadrature against the three-term expansion."""

    k: int
    r: float
    J_direct: float
    J_expansion: float
    leading_term: float
    potential_term: float
    interaction_term: float
    relative_gap: float
    gap_vs_rm: float
    gap_vs_interaction: float

    @property
    def breakdown(self) -> Dict[str, float]:
        return {
            "kA1": self.leading_term,
            "kB1/r^m": self.potential_term,
            "interaction": self.interaction_term,
        }

    @property
    def discrepancy(self) -> float:
        return abs(self.J_direct - self.J_expansion)

    def dominance_ordering(self) -> bool:
        """kA1 >> potential ~ interaction >> discrepancy."""
        correction = max(abs(self.potential_term), abs(self.interaction_term))
        return abs(self.leading_term) > correction > self.discrepancy


@dataclass
class RadiusSearchResult:
    """Interior maximizer of the reduced energy over I0."""

    r1: float
    F_at_r1: float
    c_at_r1: float
    Fprime_at_r1: float
    endpoint_values: Tuple[float, float]
    c_minus: float = float("nan")
    c_plus: float = float("nan")
    endpoint_multipliers: Tuple[float, float] = (float("nan"), float("nan"))
    evaluations: int = 0

    @property
    def c_changes_sign(self) -> bool:
        return self.c_minus * self.c_plus < 0

    def to_dict(self) -> Dict[str, object]:
        record = asdict(self)
        record["endpoint_values"] = list(self.endpoint_values)
        record["endpoint_multipliers"] = list(self.endpoint_multipliers)
        record["c_changes_sign"] = self.c_changes_sign
        return record


@dataclass
class InteractionRegime:
    """Measured growth in k of S(beta) along r proportional to k^tau."""

    beta: float
    regime: str
    predicted_exponent: float
    measured_exponent: float
    ks: List[int] = field(default_factory=list)
    sums: List[float] = field(default_factory=list)

    def agrees(self, tol: float = 0.1) -> bool:
        return abs(self.measured_exponent - self.predicted_exponent) <= tol

    def to_dict(self) -> Dict[str, object]:
        record = asdict(self)
        record["agrees"] = self.agrees()
        return record


@dataclass
class RadiusSample:
    """Reduced energy and multiplier at one radius."""

    k: int
    r: float
    F: float
    c: float
    J_W: float
    star_norm_phi: float
    multiplier_spread: float = 0.0
    contraction_rate: float = float("nan")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)
