"""History-state linear systems.

This module builds the lower block-bidiagonal system 𝓐𝓧 = 𝓑 whose solution is the
history state of a linear evolution, solves it, checks the structure of 𝓐⁻¹ and
emits condition-number certificates. It also implements preconditioning by a
log-norm shift of the generator.

Clock indices 0..M−1 hold the evolution steps and indices M..M+R−1 the padding
steps, which all carry the final-time vector.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, PreconditionError, ValidationError
from .matcore import as_cvector, expm, max_expm_norm, quad_integrate, solve_dense, spectral_norm
from .problem import MatrixODEProblem, Side
from .settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)

STEP_SLACK = 1e-12
MAX_ORDER = 40
NORM_A_BOUND = 1.0 + math.e


class Ordering(Enum):
    """Clock ordering of a history state."""

    STANDARD = "standard"
    REVERSED = "reversed"


@dataclass(frozen=True, eq=False)
class HistoryState:
    """Clock-indexed stack of system vectors.

    Attributes
    ----------
    M, R : int
        Number of evolution steps and of padding steps.
    blocks : numpy.ndarray
        Array of shape (M+R, N); row m is the vector at clock index m.
    norm_sq : float
        Squared normalization constant 𝓝.
    ordering : Ordering
        Standard (initial time first) or reversed (final time first).
    """

    M: int
    R: int
    blocks: np.ndarray
    norm_sq: float
    ordering: Ordering = Ordering.STANDARD

    @classmethod
    def from_blocks(cls, M: int, R: int, blocks: np.ndarray, ordering: Ordering = Ordering.STANDARD) -> "HistoryState":
        """Build a history state whose 𝓝 is the squared norm of its blocks."""
        stacked = np.asarray(blocks, dtype=np.complex128)
        if stacked.ndim != 2 or stacked.shape[0] != M + R:
            raise DimensionError(f"History needs {M + R} blocks, got shape {stacked.shape}", field="blocks")
        return cls(M, R, stacked, float(np.sum(np.abs(stacked) ** 2)), ordering)

    @property
    def vector(self) -> np.ndarray:
        """The history state as one vector of length (M+R)·N."""
        return np.asarray(self.blocks.reshape(-1))

    def reversed(self) -> "HistoryState":
        """Return the same state with the clock index reversed."""
        flipped = Ordering.REVERSED if self.ordering is Ordering.STANDARD else Ordering.STANDARD
        return replace(self, blocks=self.blocks[::-1].copy(), ordering=flipped)


@dataclass(frozen=True, eq=False)
class BlockLinearSystem:
    """The system 𝓐𝓧 = 𝓑 of one side.

    Attributes
    ----------
    M, R, N : int
        Steps, padding steps and system dimension.
    h : float
        Step size t/M.
    K : int
        Truncation order of the steppers.
    steppers : tuple of numpy.ndarray
        One shared V, or V_1..V_M for time-dependent generators.
    rhs : numpy.ndarray
        𝓑, with the initial vector in block 0.
    shift : float
        Log-norm shift subtracted from the generator.
    assembled : numpy.ndarray or None
        Dense 𝓐, or None when (M+R)·N exceeds the dense cap.
    """

    M: int
    R: int
    N: int
    h: float
    K: int
    steppers: Tuple[np.ndarray, ...]
    rhs: np.ndarray
    shift: float = 0.0
    assembled: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        """Dimension (M+R)·N of the assembled system."""
        return (self.M + self.R) * self.N

    def stepper(self, m: int) -> np.ndarray:
        """V_m for 1 ≤ m ≤ M."""
        if not 1 <= m <= self.M:
            raise ValidationError(f"Stepper index must lie in 1..{self.M}, got {m}", field="m")
        return self.steppers[0] if len(self.steppers) == 1 else self.steppers[m - 1]

    def subdiagonal(self, m: int) -> np.ndarray:
        """Negated subdiagonal block of row m: V_m for m ≤ M, I afterwards."""
        return self.stepper(m) if m <= self.M else np.eye(self.N, dtype=np.complex128)


@dataclass(frozen=True)
class ConditionCertificate:
    """Measured conditioning of 𝓐 against its analytic bound."""

    M: int
    R: int
    K: int
    norm_A: float
    norm_A_inv: float
    kappa: float
    row_sum_bound: float
    col_sum_bound: float
    analytic_bound: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        """Return the certificate JSON."""
        return {
            "M": self.M,
            "R": self.R,
            "K": self.K,
            "normA": self.norm_A,
            "normAinv": self.norm_A_inv,
            "kappa": self.kappa,
            "rowSumBound": self.row_sum_bound,
            "colSumBound": self.col_sum_bound,
            "paperBound": self.analytic_bound,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class SequenceError:
    """Measured ‖V^m − e^{hmY}‖ and its bound for m = 1..M."""

    measured: Tuple[float, ...]
    bounds: Tuple[float, ...]

    @property
    def holds(self) -> bool:
        """True when every measured error is within its bound."""
        return all(err <= bound * (1.0 + 1e-8) + 1e-15 for err, bound in zip(self.measured, self.bounds))


def default_steps(p: MatrixODEProblem) -> Tuple[int, int]:
    """Default (M, R): M = ⌈t·max(a,b)⌉ and R = ⌈max(a,b)·d/c⌉, both at least 1.

    Examples
    --------
    >>> from sylverse.core.problem import make_lower_bound_instance
    >>> default_steps(make_lower_bound_instance(2, 0.5, 6.0))
    (6, 1)
    """
    mu = p.mu
    M = max(1, math.ceil(p.t * mu))
    R = 1 if p.c == 0 else max(1, math.ceil(mu * p.d / p.c))
    return M, R


def default_order(p: MatrixODEProblem, M: int, R: int) -> int:
    """Smallest K whose integral and stepper remainders are below ε/(10(M+R))."""
    h = p.t / M
    target = p.eps / (10.0 * (M + R))
    for K in range(MAX_ORDER + 1):
        factorial = math.factorial(K + 1)
        if 2.0 * math.e**2 * p.c * h / factorial <= target and math.e / factorial <= target:
            return K
    return MAX_ORDER


def taylor_stepper(generator: np.ndarray, h: float, K: int) -> np.ndarray:
    """V = Σ_{k≤K} (hY)^k/k!."""
    if K < 0:
        raise ValidationError(f"Truncation order must be nonnegative, got {K}", field="K")
    step = h * np.asarray(generator, dtype=np.complex128)
    term = np.eye(step.shape[0], dtype=np.complex128)
    total = term.copy()
    for k in range(1, K + 1):
        term = term @ step / k
        total = total + term
    return total


def check_step_rule(bound: float, h: float, t: float) -> None:
    """Raise ``PreconditionError`` unless bound·h ≤ 1."""
    if bound * h > 1.0 + STEP_SLACK:
        suggested = max(1, math.ceil(t * bound))
        raise PreconditionError(
            f"Step-size rule violated: norm bound times step is {bound * h:.6g} > 1; use M >= {suggested}",
            field="M",
        )


def _check_sizes(M: int, R: int) -> None:
    if M < 1:
        raise ValidationError(f"Number of steps M must be at least 1, got {M}", field="M")
    if R < 1:
        raise ValidationError(f"Number of padding steps R must be at least 1, got {R}", field="R")


def assemble(M: int, R: int, steppers: Sequence[np.ndarray]) -> np.ndarray:
    """Dense 𝓐 with identity diagonal blocks and −V_m / −I subdiagonal blocks."""
    N = steppers[0].shape[0]
    size = (M + R) * N
    matrix = np.eye(size, dtype=np.complex128)
    identity = np.eye(N, dtype=np.complex128)
    for m in range(1, M + R):
        if m <= M:
            block = steppers[0] if len(steppers) == 1 else steppers[m - 1]
        else:
            block = identity
        matrix[m * N : (m + 1) * N, (m - 1) * N : m * N] = -block
    return matrix


def system_from_steppers(
    M: int, R: int, h: float, K: int, steppers: Sequence[np.ndarray], x_in: np.ndarray, shift: float = 0.0
) -> BlockLinearSystem:
    """Assemble a block system from explicit steppers and the initial vector."""
    _check_sizes(M, R)
    N = steppers[0].shape[0]
    if len(steppers) not in (1, M):
        raise DimensionError(f"Expected 1 or {M} steppers, got {len(steppers)}", field="steppers")
    rhs = np.zeros((M + R) * N, dtype=np.complex128)
    rhs[:N] = x_in
    assembled: Optional[np.ndarray] = None
    if (M + R) * N <= DEFAULT_SETTINGS.dense_cap:
        assembled = assemble(M, R, steppers)
    else:
        logger.warning("Block system of size %d exceeds the dense cap; using forward recursion", (M + R) * N)
    return BlockLinearSystem(M, R, N, h, K, tuple(steppers), rhs, shift, assembled)


def build_system(p: MatrixODEProblem, which: Side, M: int, R: int, K: int, shift: float = 0.0) -> BlockLinearSystem:
    """Build 𝓐𝓧 = 𝓑 for side A (initial vector φ) or side B (initial vector ψ).

    Parameters
    ----------
    p : MatrixODEProblem
        Static problem.
    which : Side
        Generator to evolve.
    M, R : int
        Number of steps and padding steps, both at least 1.
    K : int
        Taylor truncation order of V.
    shift : float
        Amount subtracted from the generator's diagonal.

    Returns
    -------
    BlockLinearSystem
        The system with V = Σ_{k≤K}((Y − shift·I)h)^k/k!.

    Raises
    ------
    PreconditionError
        If (bound + |shift|)·h > 1.
    """
    _check_sizes(M, R)
    side = p.side(which)
    h = p.t / M
    check_step_rule(side.norm_bound + abs(shift), h, p.t)
    generator = side.generator - shift * np.eye(p.n, dtype=np.complex128)
    V = taylor_stepper(generator, h, K)
    logger.debug("Block system side=%s M=%d R=%d K=%d h=%.6g", which.value, M, R, K, h)
    return system_from_steppers(M, R, h, K, [V], side.vector, shift)


def solve_history(system: BlockLinearSystem, x_in: object) -> HistoryState:
    """Solve the block system for initial vector ``x_in``.

    The dense system is factorized when assembled; otherwise the forward
    recursion blocks[m] = V_m·blocks[m−1] is used.

    Raises
    ------
    SingularMatrixError
        If the dense system is singular to working precision.
    """
    x = as_cvector(x_in, "x_in")
    if x.shape[0] != system.N:
        raise DimensionError(f"Initial vector has length {x.shape[0]}, expected {system.N}", field="x_in")
    M, R, N = system.M, system.R, system.N
    if system.assembled is not None:
        rhs = np.zeros(system.size, dtype=np.complex128)
        rhs[:N] = x
        blocks = solve_dense(system.assembled, rhs).reshape(M + R, N)
    else:
        blocks = np.empty((M + R, N), dtype=np.complex128)
        blocks[0] = x
        for m in range(1, M + R):
            blocks[m] = system.subdiagonal(m) @ blocks[m - 1]
    return HistoryState.from_blocks(M, R, blocks)


def _require_dense(system: BlockLinearSystem) -> np.ndarray:
    if system.assembled is None:
        raise PreconditionError(
            f"Block system of size {system.size} exceeds the dense cap {DEFAULT_SETTINGS.dense_cap}; reduce M, R or N",
            field="M",
        )
    return system.assembled


def invert_blocks(system: BlockLinearSystem) -> np.ndarray:
    """All blocks of 𝓐⁻¹ by dense inversion, as an array of shape (M+R, M+R, N, N)."""
    inverse = np.linalg.inv(_require_dense(system))
    count = system.M + system.R
    return np.asarray(inverse.reshape(count, system.N, count, system.N).transpose(0, 2, 1, 3))


def closed_form_block(system: BlockLinearSystem, m: int, n: int) -> np.ndarray:
    """Block (m, n) of 𝓐⁻¹: V_{min(m,M)}···V_{n+1}, the identity, or zero above the diagonal."""
    N = system.N
    if m < n:
        return np.zeros((N, N), dtype=np.complex128)
    product = np.eye(N, dtype=np.complex128)
    for index in range(n + 1, min(m, system.M) + 1):
        product = system.stepper(index) @ product
    return product


def block_norm_bound(blocks: object) -> Tuple[float, float]:
    """Return (‖𝓑‖, ‖B‖) where B holds the spectral norms of the blocks of 𝓑.

    Examples
    --------
    >>> import numpy as np
    >>> grid = np.zeros((2, 2, 1, 1)); grid[0, 0] = 2.0; grid[1, 1] = 3.0
    >>> [round(x, 12) for x in block_norm_bound(grid)]
    [3.0, 3.0]
    """
    grid = np.asarray(blocks, dtype=np.complex128)
    if grid.ndim != 4:
        raise DimensionError(f"Expected a grid of blocks with 4 dimensions, got {grid.ndim}", field="blocks")
    rows, cols = grid.shape[:2]
    assembled = grid.transpose(0, 2, 1, 3).reshape(rows * grid.shape[2], cols * grid.shape[3])
    compressed = np.array([[spectral_norm(grid[i, j]) for j in range(cols)] for i in range(rows)])
    return spectral_norm(assembled), spectral_norm(compressed)


def sequence_bound(max_exp: float, delta_norm: float, m: int) -> float:
    """Bound on ‖V^m − e^{hmY}‖ given ‖V − e^{hY}‖ = ``delta_norm``."""
    growth = max(1.0, max_exp)
    return max_exp * delta_norm * m * growth * math.exp(delta_norm * m * growth)


def _shifted_generator(p: MatrixODEProblem, which: Side, shift: float) -> np.ndarray:
    return np.asarray(p.side(which).generator - shift * np.eye(p.n, dtype=np.complex128))


def inverse_norms(system: BlockLinearSystem) -> Tuple[float, float, float, float]:
    """Return (‖𝓐‖, ‖𝓐⁻¹‖, max row sum, max column sum) of the block-norm matrix of 𝓐⁻¹."""
    assembled = _require_dense(system)
    blocks = invert_blocks(system)
    count = system.M + system.R
    norms = np.array([[spectral_norm(blocks[i, j]) for j in range(count)] for i in range(count)])
    inverse = blocks.transpose(0, 2, 1, 3).reshape(system.size, system.size)
    return (
        spectral_norm(assembled),
        spectral_norm(inverse),
        float(norms.sum(axis=1).max()),
        float(norms.sum(axis=0).max()),
    )


def certify_condition(system: BlockLinearSystem, p: MatrixODEProblem, which: Side) -> ConditionCertificate:
    """Compare the measured ‖𝓐⁻¹‖ and ‖𝓐‖ with their analytic bounds.

    The bound on ‖𝓐⁻¹‖ is 1 + Σ_{m=1}^M‖e^{hmY}‖ + R·max_s‖e^{sY}‖ + (M+R)·ε_trunc,
    where ε_trunc bounds ‖V^m − e^{hmY}‖ for m ≤ M and Y includes the system's
    shift. The certificate passes iff ‖𝓐⁻¹‖ is within that bound and ‖𝓐‖ ≤ 1 + e.
    """
    norm_A, norm_A_inv, row_sum, col_sum = inverse_norms(system)
    generator = _shifted_generator(p, which, system.shift)
    M, R, h = system.M, system.R, system.h
    step_norms = [spectral_norm(expm(h * m * generator)) for m in range(1, M + 1)]
    max_exp = max([max_expm_norm(generator, p.t), 1.0, *step_norms])
    delta = spectral_norm(system.stepper(1) - expm(h * generator))
    eps_trunc = sequence_bound(max_exp, delta, M)
    bound = 1.0 + sum(step_norms) + R * max_exp + (M + R) * eps_trunc
    passed = norm_A_inv <= bound * (1.0 + 1e-10) and norm_A <= NORM_A_BOUND * (1.0 + 1e-10)
    if not passed:
        logger.warning("Condition certificate failed: normAinv=%.6g bound=%.6g normA=%.6g", norm_A_inv, bound, norm_A)
    kappa = norm_A * norm_A_inv
    return ConditionCertificate(M, R, system.K, norm_A, norm_A_inv, kappa, row_sum, col_sum, bound, passed)


def history_norm_bound(p: MatrixODEProblem, which: Side, M: int, R: int, tol: float = 1e-9) -> float:
    """(e²M/t)∫₀ᵗ‖e^{sY}x‖²ds + R‖e^{tY}x‖², which bounds 𝓝 when ‖Y‖h ≤ 1."""
    side = p.side(which)
    x = side.vector
    if p.t == 0.0:
        weight = float(np.linalg.norm(x)) ** 2
        return math.e**2 * M * weight + R * weight

    def squared(s: float) -> float:
        return float(np.linalg.norm(expm(s * side.generator) @ x)) ** 2

    integral = float(np.real(quad_integrate(squared, 0.0, p.t, tol)))
    return math.e**2 * M / p.t * integral + R * squared(p.t)


def sequence_error(p: MatrixODEProblem, which: Side, M: int, K: int) -> SequenceError:
    """Measured ‖V^m − e^{hmY}‖ for m = 1..M with the bound from δ = V − e^{hY}."""
    generator = p.side(which).generator
    h = p.t / M
    V = taylor_stepper(generator, h, K)
    delta_norm = spectral_norm(V - expm(h * generator))
    max_exp = max(max_expm_norm(generator, p.t), 1.0)
    power = np.eye(p.n, dtype=np.complex128)
    measured: List[float] = []
    bounds: List[float] = []
    for m in range(1, M + 1):
        power = V @ power
        measured.append(spectral_norm(power - expm(h * m * generator)))
        bounds.append(sequence_bound(max_exp, delta_norm, m))
    return SequenceError(tuple(measured), tuple(bounds))


def shift_weights(t: float, xi: float, M: int, R: int) -> np.ndarray:
    """Diagonal of 𝓓: e^{tmξ/M} for m < M and e^{tξ} on the padding steps."""
    exponents = np.concatenate([t * xi * np.arange(M) / M, np.full(R, t * xi)])
    return np.asarray(np.exp(exponents))


def rescale_history(history: HistoryState, weights: object) -> HistoryState:
    """Multiply block m by weights[m] and recompute 𝓝."""
    scale = np.asarray(weights, dtype=float).reshape(-1)
    if scale.shape[0] != history.M + history.R:
        raise DimensionError(f"Expected {history.M + history.R} weights, got {scale.shape[0]}", field="weights")
    return HistoryState.from_blocks(history.M, history.R, history.blocks * scale[:, np.newaxis], history.ordering)


def precondition(p: MatrixODEProblem, which: Side, M: int, R: int, K: int) -> Tuple[HistoryState, np.ndarray]:
    """Solve the system of the shifted generator Y − ξI.

    Returns the shifted history and the weights of 𝓓 such that
    ``rescale_history(shifted, weights)`` reproduces the unshifted history up to
    truncation. The shifted system itself is ``build_system(..., shift=ξ)``.
    """
    side = p.side(which)
    if not math.isfinite(side.log_norm_bound):
        raise ValidationError("Log-norm bound must be finite to precondition", field="xi")
    xi = side.log_norm_bound
    system = build_system(p, which, M, R, K, shift=xi)
    shifted = solve_history(system, side.vector)
    return shifted, shift_weights(p.t, xi, M, R)


def preconditioned_steps(p: MatrixODEProblem, which: Side) -> int:
    """Smallest M satisfying the step rule of the shifted generator."""
    side = p.side(which)
    default, _ = default_steps(p)
    return max(default, math.ceil(p.t * (side.norm_bound + abs(side.log_norm_bound))))
