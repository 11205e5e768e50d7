"""Entry estimation by the overlap identity.

⟨φ|X(t)|ψ⟩ = Σ_{m<M} φ_m† I_C ψ_m + Σ_{padding} φ_m† (D/R) ψ_m, where φ_m, ψ_m are
the blocks of the A-side and B-side history states and
I_C = ∫₀ʰ e^{τA†} C e^{τB} dτ. The identity is exact; the only approximations are
the Taylor truncations of the steppers and of I_C.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import DimensionError, PreconditionError
from .histsolve import (
    HistoryState,
    build_system,
    default_order,
    default_steps,
    history_norm_bound,
    solve_history,
)
from .lchsmodel import compute_L_functionals, lchs_history
from .matcore import expm, quad_integrate
from .persistence import encode_complex
from .problem import MatrixODEProblem, Side
from .settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)


class Route(Enum):
    """How the history states are prepared."""

    LINEAR_SYSTEMS = "ls"
    LCHS = "lchs"


@dataclass(frozen=True, eq=False)
class ClockBlockOperator:
    """Block-diagonal operator 𝓘 = Σ_{m<M}|m⟩⟨m|⊗I_C + Σ_{padding}|m⟩⟨m|⊗D/R.

    Attributes
    ----------
    M, R : int
        Clock steps and padding steps.
    per_step_block : numpy.ndarray
        I_C or its truncation Ĩ_C.
    padding_block : numpy.ndarray
        D/R.
    lam : float
        Normalization constant max(c·h·e², d/R).
    """

    M: int
    R: int
    per_step_block: np.ndarray
    padding_block: np.ndarray
    lam: float

    def contract(self, left: HistoryState, right: HistoryState) -> complex:
        """⟨left|𝓘|right⟩ for standard-ordered history states."""
        for history in (left, right):
            if (history.M, history.R) != (self.M, self.R):
                raise DimensionError(
                    f"History has (M, R) = ({history.M}, {history.R}), operator has ({self.M}, {self.R})",
                    field="history",
                )
        M = self.M
        steps = np.einsum("mi,ij,mj->", left.blocks[:M].conj(), self.per_step_block, right.blocks[:M])
        padding = np.einsum("mi,ij,mj->", left.blocks[M:].conj(), self.padding_block, right.blocks[M:])
        return complex(steps + padding)


def exact_IC(p: MatrixODEProblem, h: float, tol: float = 1e-12) -> np.ndarray:
    """I_C = ∫₀ʰ e^{τA†} C e^{τB} dτ by adaptive quadrature."""
    a_dag = p.A.conj().T

    def kernel(tau: float) -> np.ndarray:
        return np.asarray(expm(tau * a_dag) @ p.C @ expm(tau * p.B))

    return quad_integrate(kernel, 0.0, h, tol)


def _scaled_powers(matrix: np.ndarray, K: int) -> List[np.ndarray]:
    powers = [np.eye(matrix.shape[0], dtype=np.complex128)]
    for k in range(1, K + 1):
        powers.append(powers[-1] @ matrix / k)
    return powers


def taylor_IC(p: MatrixODEProblem, h: float, K: int) -> np.ndarray:
    """Ĩ_C = Σ_{p,q≤K} (hA†)^p/p! · C · (hB)^q/q! · h/(p+q+1).

    Raises
    ------
    PreconditionError
        If h > min(1/a, 1/b).
    """
    if h * p.mu > 1.0 + 1e-12:
        raise PreconditionError(f"Step {h:.6g} exceeds 1/max(a, b) = {1.0 / p.mu:.6g}; increase M", field="M")
    left = [power @ p.C for power in _scaled_powers(h * p.A.conj().T, K)]
    right = _scaled_powers(h * p.B, K)
    total = np.zeros((p.n, p.n), dtype=np.complex128)
    for q in range(K + 1):
        for k in range(K + 1):
            total = total + left[k] @ right[q] / (k + q + 1)
    return h * total


def taylor_ic_lambda(a: float, b: float, c: float, h: float, K: int) -> float:
    """λ_{Ĩ_C} = Σ_{p,q≤K} a^p c b^q h^{p+q+1}/(p! q! (p+q+1)), at most c·h·e² when ah, bh ≤ 1."""
    total = 0.0
    for k in range(K + 1):
        for q in range(K + 1):
            total += (a * h) ** k * (b * h) ** q / (math.factorial(k) * math.factorial(q) * (k + q + 1))
    return c * h * total


def ic_truncation_bound(c: float, h: float, K: int) -> float:
    """2e²·c·h/(K+1)!, the bound on ‖I_C − Ĩ_C‖."""
    return 2.0 * math.e**2 * c * h / math.factorial(K + 1)


def build_clock_operator(p: MatrixODEProblem, M: int, R: int, K: int) -> ClockBlockOperator:
    """𝓘 with Ĩ_C on the clock steps and D/R on the padding steps."""
    h = p.t / M
    lam = max(p.c * h * math.e**2, p.d / R)
    return ClockBlockOperator(M, R, taylor_IC(p, h, K), p.D / R, lam)


def _resolve(p: MatrixODEProblem, M: Optional[int], R: Optional[int], K: Optional[int]) -> Tuple[int, int, int]:
    default_M, default_R = default_steps(p)
    M = default_M if M is None else M
    R = default_R if R is None else R
    K = default_order(p, M, R) if K is None else K
    return M, R, K


def histories(p: MatrixODEProblem, M: int, R: int, K: int, route: Route) -> Tuple[HistoryState, HistoryState]:
    """A-side and B-side history states prepared along ``route``."""
    if route is Route.LCHS:
        return lchs_history(p, Side.A, M, R), lchs_history(p, Side.B, M, R)
    states = []
    for which, vector in ((Side.A, p.phi), (Side.B, p.psi)):
        states.append(solve_history(build_system(p, which, M, R, K), vector))
    return states[0], states[1]


def estimate_entry(
    p: MatrixODEProblem,
    M: Optional[int] = None,
    R: Optional[int] = None,
    K: Optional[int] = None,
    route: Route = Route.LINEAR_SYSTEMS,
) -> complex:
    """Estimate ⟨φ|X(t)|ψ⟩ by contracting two history states through 𝓘.

    Parameters
    ----------
    p : MatrixODEProblem
        Static problem.
    M, R, K : int, optional
        Steps, padding steps and truncation order; defaults follow
        ``default_steps`` and ``default_order``.
    route : Route
        Linear-systems histories (Taylor steppers) or LCHS histories.

    Returns
    -------
    complex
        The estimated entry.

    Examples
    --------
    >>> import numpy as np
    >>> from sylverse.core.problem import MatrixODEProblem
    >>> Z, I = np.zeros((2, 2)), np.eye(2)
    >>> e0 = np.array([1.0, 0.0])
    >>> p = MatrixODEProblem(Z, Z, I, Z, 2.0, e0, e0, 1e-8, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)
    >>> round(estimate_entry(p).real, 9)
    2.0
    """
    M, R, K = _resolve(p, M, R, K)
    left, right = histories(p, M, R, K, route)
    operator = build_clock_operator(p, M, R, K)
    entry = operator.contract(left, right)
    logger.debug("estimate_entry route=%s M=%d R=%d K=%d entry=%s", route.value, M, R, K, entry)
    return entry


def exponential_history(p: MatrixODEProblem, which: Side, M: int, R: int) -> HistoryState:
    """History state built from exact exponentials e^{(tm/M)Y}x."""
    side = p.side(which)
    h = p.t / M
    step = expm(h * side.generator)
    blocks = np.empty((M + R, p.n), dtype=np.complex128)
    blocks[0] = side.vector
    for m in range(1, M + 1):
        blocks[m] = step @ blocks[m - 1] if m < M else expm(p.t * side.generator) @ side.vector
    blocks[M:] = blocks[M]
    return HistoryState.from_blocks(M, R, blocks)


def exact_overlap(p: MatrixODEProblem, M: int, R: int, tol: float = 1e-12) -> complex:
    """The overlap identity evaluated with exact exponentials and exact I_C."""
    left = exponential_history(p, Side.A, M, R)
    right = exponential_history(p, Side.B, M, R)
    operator = ClockBlockOperator(M, R, exact_IC(p, p.t / M, tol), p.D / R, max(p.c * p.t / M * math.e**2, p.d / R))
    return operator.contract(left, right)


def error_budget(p: MatrixODEProblem, M: int, R: int) -> Dict[str, float]:
    """Split ε into equal thirds for the histories, the I_C truncation and the overlap.

    Each third is divided by the normalization that multiplies the corresponding
    error: c·𝓛̃₂ for the histories and sqrt(𝓝_A𝓝_B) for the truncation.
    """
    functionals = compute_L_functionals(p)
    scale_hist = max(1.0, p.c * functionals.Ltilde2)
    history_norm = math.sqrt(history_norm_bound(p, Side.A, M, R) * history_norm_bound(p, Side.B, M, R))
    third = p.eps / 3.0
    return {
        "eps": p.eps,
        "history": third / scale_hist,
        "truncation": third / max(1.0, history_norm),
        "overlap": third,
        "cLtilde2": p.c * functionals.Ltilde2,
        "historyNorm": history_norm,
    }


def entry_report(
    p: MatrixODEProblem,
    M: Optional[int] = None,
    R: Optional[int] = None,
    K: Optional[int] = None,
    route: Route = Route.LINEAR_SYSTEMS,
) -> Dict[str, Any]:
    """Entry estimate with its error budget and step parameters as result JSON."""
    M, R, K = _resolve(p, M, R, K)
    if (M + R) * p.n > DEFAULT_SETTINGS.dense_cap:
        logger.info("History systems exceed the dense cap; forward recursion is used")
    entry = estimate_entry(p, M, R, K, route)
    return {
        "entry": encode_complex(entry),
        "budget": error_budget(p, M, R),
        "M": M,
        "R": R,
        "K": K,
        "route": route.value,
        "lambda": max(p.c * p.t / M * math.e**2, p.d / R),
        "lambdaTaylorIC": taylor_ic_lambda(p.a, p.b, p.c, p.t / M, K),
    }
