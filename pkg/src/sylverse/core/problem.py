"""Problem model module.

This module contains the MatrixODEProblem and TimeDepProblem classes describing
one instance of dX/dt = A†X + XB + C with X(0) = D, together with the instance
generators used by tests, benchmarks and the command line.

Bounds stored on a problem are inputs of the access model: they are verified on
construction against measured norms but never replaced by them.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Tuple

import numpy as np

from .errors import DimensionError, DomainError, ValidationError
from .matcore import as_cmatrix, as_cvector, log_norm, require_square, round_up_sig, spectral_norm

logger = logging.getLogger(__name__)

NORM_SLACK_REL = 1e-10
NORM_SLACK_ABS = 1e-12
LOG_NORM_SLACK = 1e-10
UNIT_SLACK = 1e-12
DEFAULT_EPS = 1e-8


class Side(Enum):
    """Which generator of the equation a construction refers to."""

    A = "A"
    B = "B"


class LogNormSign(Enum):
    """Log-norm regime of a random instance."""

    NEGATIVE = "negative"
    ZERO = "zero"
    POSITIVE = "positive"


@dataclass(frozen=True)
class SideData:
    """Generator, norm bound, log-norm bound and initial vector of one side."""

    generator: np.ndarray
    norm_bound: float
    log_norm_bound: float
    vector: np.ndarray


@dataclass(frozen=True)
class TimeDepSide:
    """Sampled generator data of one side of a time-dependent problem."""

    samples: np.ndarray
    generator_at: Callable[[float], np.ndarray]
    norm_bound: float
    log_norm_bounds: np.ndarray
    deriv_bound: float
    vector: np.ndarray


def _frozen_matrix(value: object, name: str) -> np.ndarray:
    matrix = as_cmatrix(value, name).copy()
    matrix.setflags(write=False)
    return matrix


def _unit_vector(value: object, name: str, n: int) -> np.ndarray:
    vector = as_cvector(value, name).copy()
    if vector.shape[0] != n:
        raise DimensionError(f"{name} has length {vector.shape[0]}, expected {n}", field=name)
    if abs(float(np.linalg.norm(vector)) - 1.0) > UNIT_SLACK:
        raise ValidationError(f"{name} must be a unit vector", field=name)
    vector.setflags(write=False)
    return vector


def _check_norm(value: float, bound: float, name: str) -> None:
    if bound < 0 or not math.isfinite(bound):
        raise ValidationError(f"Bound {name} must be a finite nonnegative number, got {bound}", field=name)
    if value > bound * (1.0 + NORM_SLACK_REL) + NORM_SLACK_ABS:
        raise ValidationError(f"Norm {value:.6g} exceeds bound {name} = {bound:.6g}", field=name)


def _check_log_norm(value: float, bound: float, name: str) -> None:
    if not math.isfinite(bound):
        raise ValidationError(f"Bound {name} must be finite, got {bound}", field=name)
    if value > bound + LOG_NORM_SLACK:
        raise ValidationError(f"Log-norm {value:.6g} exceeds bound {name} = {bound:.6g}", field=name)


def _check_scalars(t: float, eps: float) -> None:
    if not math.isfinite(t) or t < 0:
        raise DomainError(f"Evolution time must be nonnegative, got {t}", field="t")
    if not math.isfinite(eps) or eps <= 0:
        raise DomainError(f"Target error must be positive, got {eps}", field="eps")


@dataclass(frozen=True, eq=False)
class MatrixODEProblem:
    """One static instance of dX/dt = A†X + XB + C, X(0) = D.

    The task is to estimate ⟨φ|X(t)|ψ⟩ to additive error ``eps``.

    Parameters
    ----------
    A, B, C, D : array_like
        Square complex matrices of a common dimension n.
    t : float
        Evolution time, t ≥ 0.
    phi, psi : array_like
        Unit vectors selecting the requested entry.
    eps : float
        Target additive error.
    a, b, c, d : float
        Upper bounds on ‖A‖, ‖B‖, ‖C‖ and ‖D‖.
    xiA, xiB : float
        Upper bounds on the log-norms of A and B.

    Raises
    ------
    DimensionError
        If shapes are inconsistent.
    ValidationError
        If a stored bound is violated or φ, ψ are not unit vectors.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    t: float
    phi: np.ndarray
    psi: np.ndarray
    eps: float
    a: float
    b: float
    c: float
    d: float
    xiA: float
    xiB: float

    def __post_init__(self) -> None:
        matrices = {}
        for name in ("A", "B", "C", "D"):
            matrix = _frozen_matrix(getattr(self, name), name)
            require_square(matrix, name)
            matrices[name] = matrix
        n = matrices["A"].shape[0]
        for name, matrix in matrices.items():
            if matrix.shape[0] != n:
                raise DimensionError(f"Matrix {name} has dimension {matrix.shape[0]}, expected {n}", field=name)
            object.__setattr__(self, name, matrix)
        object.__setattr__(self, "phi", _unit_vector(self.phi, "phi", n))
        object.__setattr__(self, "psi", _unit_vector(self.psi, "psi", n))
        for name in ("t", "eps", "a", "b", "c", "d", "xiA", "xiB"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_scalars(self.t, self.eps)
        _check_norm(spectral_norm(self.A), self.a, "a")
        _check_norm(spectral_norm(self.B), self.b, "b")
        _check_norm(spectral_norm(self.C), self.c, "c")
        _check_norm(spectral_norm(self.D), self.d, "d")
        _check_log_norm(log_norm(self.A), self.xiA, "xiA")
        _check_log_norm(log_norm(self.B), self.xiB, "xiB")

    @property
    def n(self) -> int:
        """System dimension."""
        return int(self.A.shape[0])

    @property
    def mu(self) -> float:
        """max(a, b), the scale that sets the step size."""
        return max(self.a, self.b)

    def side(self, which: Side) -> SideData:
        """Return the generator data for side A (with φ) or side B (with ψ)."""
        if which is Side.A:
            return SideData(self.A, self.a, self.xiA, self.phi)
        return SideData(self.B, self.b, self.xiB, self.psi)


@dataclass(frozen=True, eq=False)
class TimeDepProblem:
    """Time-dependent instance sampled on a uniform time grid.

    Generators are known at the J grid points τ_j = j·t/(J−1), j = 0..J−1, and
    interpolated linearly between them.

    Parameters
    ----------
    A_seq, B_seq, C_seq : array_like
        Arrays of shape (J, n, n) holding the grid samples.
    D : array_like
        Initial condition.
    t, phi, psi, eps, a, b, c, d : as for MatrixODEProblem
        Norm bounds hold uniformly over the grid.
    xiA_seq, xiB_seq : array_like
        Per-sample log-norm bounds.
    derivA, derivB, derivC : float
        Upper bounds on max_s ‖Y′(s)‖ of the interpolated generators.
    """

    A_seq: np.ndarray
    B_seq: np.ndarray
    C_seq: np.ndarray
    D: np.ndarray
    t: float
    phi: np.ndarray
    psi: np.ndarray
    eps: float
    a: float
    b: float
    c: float
    d: float
    xiA_seq: np.ndarray
    xiB_seq: np.ndarray
    derivA: float
    derivB: float
    derivC: float
    grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        D = _frozen_matrix(self.D, "D")
        require_square(D, "D")
        n = D.shape[0]
        object.__setattr__(self, "D", D)
        for name in ("t", "eps", "a", "b", "c", "d", "derivA", "derivB", "derivC"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_scalars(self.t, self.eps)
        grid_j = -1
        for name in ("A_seq", "B_seq", "C_seq"):
            samples = np.array(getattr(self, name), dtype=np.complex128)
            if samples.ndim != 3 or samples.shape[1:] != (n, n):
                raise DimensionError(f"{name} must have shape (J, {n}, {n}), got {samples.shape}", field=name)
            if grid_j < 0:
                grid_j = samples.shape[0]
            if samples.shape[0] != grid_j:
                raise DimensionError(f"{name} has {samples.shape[0]} samples, expected {grid_j}", field=name)
            if not np.all(np.isfinite(samples)):
                raise ValidationError(f"{name} has non-finite entries", field=name)
            samples.setflags(write=False)
            object.__setattr__(self, name, samples)
        if grid_j < 2:
            raise ValidationError(f"Time grid needs at least 2 samples, got {grid_j}", field="gridJ")
        for name in ("xiA_seq", "xiB_seq"):
            bounds = np.array(getattr(self, name), dtype=float).reshape(-1)
            if bounds.shape[0] != grid_j:
                raise DimensionError(f"{name} has {bounds.shape[0]} entries, expected {grid_j}", field=name)
            bounds.setflags(write=False)
            object.__setattr__(self, name, bounds)
        object.__setattr__(self, "phi", _unit_vector(self.phi, "phi", n))
        object.__setattr__(self, "psi", _unit_vector(self.psi, "psi", n))
        grid = np.linspace(0.0, self.t, grid_j)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        for j in range(grid_j):
            _check_norm(spectral_norm(self.A_seq[j]), self.a, "a")
            _check_norm(spectral_norm(self.B_seq[j]), self.b, "b")
            _check_norm(spectral_norm(self.C_seq[j]), self.c, "c")
            _check_log_norm(log_norm(self.A_seq[j]), float(self.xiA_seq[j]), "xiA")
            _check_log_norm(log_norm(self.B_seq[j]), float(self.xiB_seq[j]), "xiB")
        _check_norm(spectral_norm(D), self.d, "d")
        for name, samples in (("derivA", self.A_seq), ("derivB", self.B_seq), ("derivC", self.C_seq)):
            _check_norm(sample_slope(samples, self.t), getattr(self, name), name)

    @property
    def n(self) -> int:
        """System dimension."""
        return int(self.D.shape[0])

    @property
    def grid_j(self) -> int:
        """Number of grid samples J."""
        return int(self.A_seq.shape[0])

    @property
    def mu(self) -> float:
        """max(a, b)."""
        return max(self.a, self.b)

    @property
    def xiA(self) -> float:
        """Largest sampled log-norm bound of A."""
        return float(np.max(self.xiA_seq))

    @property
    def xiB(self) -> float:
        """Largest sampled log-norm bound of B."""
        return float(np.max(self.xiB_seq))

    def _interpolate(self, samples: np.ndarray, s: float) -> np.ndarray:
        if self.t == 0.0:
            return np.asarray(samples[0])
        position = min(max(s / self.t, 0.0), 1.0) * (self.grid_j - 1)
        j = min(int(math.floor(position)), self.grid_j - 2)
        weight = position - j
        return np.asarray((1.0 - weight) * samples[j] + weight * samples[j + 1])

    def A_at(self, s: float) -> np.ndarray:
        """A(s) by linear interpolation of the grid samples."""
        return self._interpolate(self.A_seq, s)

    def B_at(self, s: float) -> np.ndarray:
        """B(s) by linear interpolation of the grid samples."""
        return self._interpolate(self.B_seq, s)

    def C_at(self, s: float) -> np.ndarray:
        """C(s) by linear interpolation of the grid samples."""
        return self._interpolate(self.C_seq, s)

    def side(self, which: Side) -> TimeDepSide:
        """Return the sampled generator data for side A or side B."""
        if which is Side.A:
            return TimeDepSide(self.A_seq, self.A_at, self.a, self.xiA_seq, self.derivA, self.phi)
        return TimeDepSide(self.B_seq, self.B_at, self.b, self.xiB_seq, self.derivB, self.psi)


def sample_slope(samples: np.ndarray, t: float) -> float:
    """Largest ‖Y_{j+1} − Y_j‖/Δτ, the exact derivative bound of the interpolant."""
    if t == 0.0:
        return 0.0
    spacing = t / (samples.shape[0] - 1)
    return max(spectral_norm(samples[j + 1] - samples[j]) / spacing for j in range(samples.shape[0] - 1))


def basis_vector(n: int, index: int = 0) -> np.ndarray:
    """Return the computational basis vector |index⟩ of dimension n."""
    vector = np.zeros(n, dtype=np.complex128)
    vector[index] = 1.0
    return vector


def make_lower_bound_instance(n: int, theta: float, t: float, eps: float = DEFAULT_EPS) -> MatrixODEProblem:
    """Build the diagonal contraction instance with a closed-form entry.

    A = −sinθ|0⟩⟨0| − Σ_{k>0}|k⟩⟨k|, B = 0, C = I, D = 0 and φ = ψ = |0⟩, so that
    ⟨0|X(t)|0⟩ = (1 − e^{−t sinθ})/sinθ.

    Parameters
    ----------
    n : int
        Dimension, at least 1.
    theta : float
        Angle in (0, π/2].
    t : float
        Positive evolution time.
    eps : float
        Target additive error.

    Returns
    -------
    MatrixODEProblem
        The instance with a = b = c = 1, d = 0, ξ_A = −sinθ and ξ_B = 0.

    Raises
    ------
    DomainError
        If ``theta``, ``t`` or ``n`` is outside its domain.

    Examples
    --------
    >>> p = make_lower_bound_instance(2, math.pi / 2, 1.0)
    >>> p.A.real.diagonal().tolist()
    [-1.0, -1.0]
    """
    if n < 1:
        raise DomainError(f"Dimension must be at least 1, got {n}", field="n")
    if not 0.0 < theta <= math.pi / 2:
        raise DomainError(f"Angle must lie in (0, pi/2], got {theta}", field="theta")
    if not t > 0:
        raise DomainError(f"Evolution time must be positive, got {t}", field="t")
    sin_theta = math.sin(theta)
    diagonal = -np.ones(n)
    diagonal[0] = -sin_theta
    zero = np.zeros((n, n), dtype=np.complex128)
    e0 = basis_vector(n)
    return MatrixODEProblem(
        A=np.diag(diagonal).astype(np.complex128),
        B=zero,
        C=np.eye(n, dtype=np.complex128),
        D=zero,
        t=t,
        phi=e0,
        psi=e0,
        eps=eps,
        a=1.0,
        b=1.0,
        c=1.0,
        d=0.0,
        xiA=-sin_theta,
        xiB=0.0,
    )


def lower_bound_entry(theta: float, t: float) -> float:
    """Closed-form ⟨0|X(t)|0⟩ of the lower-bound instance."""
    sin_theta = math.sin(theta)
    return -math.expm1(-t * sin_theta) / sin_theta


def _random_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    gaussian = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return np.asarray(gaussian / spectral_norm(gaussian))


def _random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    vector = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return np.asarray(vector / np.linalg.norm(vector))


def _generator_in_regime(rng: np.random.Generator, n: int, sign: LogNormSign) -> Tuple[np.ndarray, float]:
    base = _random_matrix(rng, n)
    identity = np.eye(n, dtype=np.complex128)
    if sign is LogNormSign.ZERO:
        skew = 0.5 * (base - base.conj().T)
        norm = spectral_norm(skew)
        return (skew / norm if norm > 0 else skew), 0.0
    target = -0.1 if sign is LogNormSign.NEGATIVE else 0.2
    shifted = base - (log_norm(base) - target) * identity
    return shifted, round_up_sig(log_norm(shifted))


def make_random_instance(
    n: int,
    seed: int,
    log_norm_sign: LogNormSign = LogNormSign.NEGATIVE,
    t: float = 1.0,
    eps: float = DEFAULT_EPS,
) -> MatrixODEProblem:
    """Build a seeded random instance in the requested log-norm regime.

    A and B are normalized complex Gaussian matrices shifted so their log-norm is
    −0.1 (negative), made skew-Hermitian (zero), or shifted to +0.2 (positive).
    C and D are normalized Gaussian matrices; φ, ψ are random unit vectors. The
    bounds a, b, c, d, ξ_A, ξ_B are the measured values rounded up to three
    significant figures.

    Examples
    --------
    >>> p = make_random_instance(3, seed=7)
    >>> p.xiA <= -0.0999
    True
    """
    if not 1 <= n <= 256:
        raise DomainError(f"Random instances need 1 <= n <= 256, got {n}", field="n")
    rng = np.random.default_rng(seed)
    A, xiA = _generator_in_regime(rng, n, log_norm_sign)
    B, xiB = _generator_in_regime(rng, n, log_norm_sign)
    C = _random_matrix(rng, n)
    D = _random_matrix(rng, n)
    phi = _random_unit(rng, n)
    psi = _random_unit(rng, n)
    logger.debug("Random instance n=%d seed=%d regime=%s", n, seed, log_norm_sign.value)
    return MatrixODEProblem(
        A=A,
        B=B,
        C=C,
        D=D,
        t=t,
        phi=phi,
        psi=psi,
        eps=eps,
        a=round_up_sig(spectral_norm(A)),
        b=round_up_sig(spectral_norm(B)),
        c=round_up_sig(spectral_norm(C)),
        d=round_up_sig(spectral_norm(D)),
        xiA=xiA,
        xiB=xiB,
    )


def from_static(problem: MatrixODEProblem, grid_j: int = 2) -> TimeDepProblem:
    """Wrap a static problem as a time-dependent one with constant samples."""
    if grid_j < 2:
        raise ValidationError(f"Time grid needs at least 2 samples, got {grid_j}", field="gridJ")

    def repeat(matrix: np.ndarray) -> np.ndarray:
        return np.repeat(matrix[np.newaxis, :, :], grid_j, axis=0)

    return TimeDepProblem(
        A_seq=repeat(problem.A),
        B_seq=repeat(problem.B),
        C_seq=repeat(problem.C),
        D=problem.D,
        t=problem.t,
        phi=problem.phi,
        psi=problem.psi,
        eps=problem.eps,
        a=problem.a,
        b=problem.b,
        c=problem.c,
        d=problem.d,
        xiA_seq=np.full(grid_j, problem.xiA),
        xiB_seq=np.full(grid_j, problem.xiB),
        derivA=0.0,
        derivB=0.0,
        derivC=0.0,
    )


def envelope_a(s: float, t: float) -> float:
    """Scalar envelope of the A-side generator."""
    return 1.0 + 0.5 * math.sin(2.0 * math.pi * s / t)


def make_envelope_instance(
    n: int, seed: int, grid_j: int = 33, t: float = 1.0, eps: float = DEFAULT_EPS
) -> TimeDepProblem:
    """Build a seeded time-dependent instance from smooth scalar envelopes.

    A(s) = f(s)·A₀ with f(s) = 1 + ½sin(2πs/t), so all A samples commute;
    B(s) = B₀ + ¼sin(πs/t)·B₁ does not commute with itself in general and
    C(s) = cos(πs/(2t))·C₀. A₀ and B₀ are drawn from the negative log-norm regime.
    Norm, log-norm and derivative bounds are measured on the samples and rounded
    up to three significant figures.
    """
    if not t > 0:
        raise DomainError(f"Evolution time must be positive, got {t}", field="t")
    rng = np.random.default_rng(seed)
    A0, _ = _generator_in_regime(rng, n, LogNormSign.NEGATIVE)
    B0, _ = _generator_in_regime(rng, n, LogNormSign.NEGATIVE)
    B1 = _random_matrix(rng, n)
    C0 = _random_matrix(rng, n)
    D = _random_matrix(rng, n)
    phi = _random_unit(rng, n)
    psi = _random_unit(rng, n)
    grid = np.linspace(0.0, t, grid_j)
    A_seq = np.stack([envelope_a(float(s), t) * A0 for s in grid])
    B_seq = np.stack([B0 + 0.25 * math.sin(math.pi * s / t) * B1 for s in grid])
    C_seq = np.stack([math.cos(0.5 * math.pi * s / t) * C0 for s in grid])
    return TimeDepProblem(
        A_seq=A_seq,
        B_seq=B_seq,
        C_seq=C_seq,
        D=D,
        t=t,
        phi=phi,
        psi=psi,
        eps=eps,
        a=round_up_sig(max(spectral_norm(m) for m in A_seq)),
        b=round_up_sig(max(spectral_norm(m) for m in B_seq)),
        c=round_up_sig(max(spectral_norm(m) for m in C_seq)),
        d=round_up_sig(spectral_norm(D)),
        xiA_seq=[round_up_sig(log_norm(m)) for m in A_seq],
        xiB_seq=[round_up_sig(log_norm(m)) for m in B_seq],
        derivA=round_up_sig(sample_slope(A_seq, t)),
        derivB=round_up_sig(sample_slope(B_seq, t)),
        derivC=round_up_sig(sample_slope(C_seq, t)),
    )
