"""Reference solvers for X(t) and ⟨φ|X(t)|ψ⟩.

Two independent routes are provided: quadrature of the closed-form solution
X(t) = ∫₀ᵗ e^{sA†} C e^{sB} ds + e^{tA†} D e^{tB}, and adaptive Runge–Kutta
integration of the vectorized equation. Downstream checks compare against both.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, StiffnessError
from .matcore import as_cmatrix, expm, quad_integrate, spectral_norm
from .persistence import encode_array, encode_complex
from .problem import MatrixODEProblem, TimeDepProblem

logger = logging.getLogger(__name__)

Problem = Union[MatrixODEProblem, TimeDepProblem]
Coefficients = Tuple[np.ndarray, np.ndarray, np.ndarray]


class SolutionMethod(Enum):
    """How a solution sample was obtained."""

    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"
    ODE_VECTORIZED = "ode_vectorized"
    DYSON = "dyson"


@dataclass(frozen=True, eq=False)
class SolutionSample:
    """Solution X(t) at one time together with the requested entry."""

    t: float
    X: np.ndarray
    entry: complex
    method: SolutionMethod

    def to_dict(self, include_matrix: bool = False) -> Dict[str, Any]:
        """Return the JSON form of the sample."""
        data: Dict[str, Any] = {"t": self.t, "entry": encode_complex(self.entry), "method": self.method.value}
        if include_matrix:
            data["X"] = encode_array(self.X)
        return data


def entry_of(X: np.ndarray, phi: np.ndarray, psi: np.ndarray) -> complex:
    """⟨φ|X|ψ⟩."""
    return complex(np.vdot(phi, X @ psi))


def inner_expm_tol(tol: float) -> float:
    """Tolerance handed to expm when the caller asks for ``tol`` overall."""
    return min(max(tol / 10.0, 2e-15), 1e-3)


def solve_quadrature(p: MatrixODEProblem, tol: float = 1e-10) -> SolutionSample:
    """Evaluate the closed-form solution with adaptive quadrature.

    Parameters
    ----------
    p : MatrixODEProblem
        Static problem.
    tol : float
        Quadrature tolerance; exponentials use ``tol/10``.

    Returns
    -------
    SolutionSample
        X(t) and ⟨φ|X(t)|ψ⟩.

    Raises
    ------
    AccuracyError
        If the quadrature does not converge.
    """
    if not isinstance(p, MatrixODEProblem):
        raise DomainError("Quadrature oracle requires a static problem", field="problem")
    etol = inner_expm_tol(tol)
    a_dag = p.A.conj().T

    def kernel(s: float) -> np.ndarray:
        return np.asarray(expm(s * a_dag, etol) @ p.C @ expm(s * p.B, etol))

    X = quad_integrate(kernel, 0.0, p.t, tol) + expm(p.t * a_dag, etol) @ p.D @ expm(p.t * p.B, etol)
    return SolutionSample(p.t, X, entry_of(X, p.phi, p.psi), SolutionMethod.QUADRATURE)


def _coefficients(p: Problem) -> Callable[[float], Coefficients]:
    if isinstance(p, MatrixODEProblem):
        constant = (p.A.conj().T, p.B, p.C)
        return lambda s: constant
    return lambda s: (p.A_at(s).conj().T, p.B_at(s), p.C_at(s))


def _integrate(p: Problem, times: Sequence[float], tol: float) -> List[np.ndarray]:
    n = p.n
    coefficients = _coefficients(p)
    end = float(max(times))
    if end == 0.0:
        return [np.array(p.D) for _ in times]

    def rhs(s: float, y: np.ndarray) -> np.ndarray:
        a_dag, b, c = coefficients(s)
        X = y.reshape(n, n)
        return np.asarray((a_dag @ X + X @ b + c).reshape(-1))

    rtol = max(tol, 1e-13)
    solution = solve_ivp(
        rhs,
        (0.0, end),
        np.array(p.D, dtype=np.complex128).reshape(-1),
        method="RK45",
        t_eval=np.asarray(times, dtype=float),
        rtol=rtol,
        atol=rtol * 1e-2,
    )
    if not solution.success:
        raise StiffnessError(f"ODE integration failed ({solution.message}); use the quadrature route instead")
    logger.debug("solve_ivp: %d right-hand side evaluations", solution.nfev)
    return [solution.y[:, k].reshape(n, n) for k in range(len(times))]


def solve_ode(p: Problem, tol: float = 1e-10) -> SolutionSample:
    """Integrate dX/dt = A†X + XB + C from X(0) = D with embedded RK4(5).

    Time-dependent coefficients are interpolated from the grid samples.

    Raises
    ------
    StiffnessError
        If the integrator fails, for example by step-size underflow.
    """
    (X,) = _integrate(p, [p.t], tol)
    return SolutionSample(p.t, X, entry_of(X, p.phi, p.psi), SolutionMethod.ODE_VECTORIZED)


def solve_ode_trajectory(p: Problem, times: Sequence[float], tol: float = 1e-10) -> List[SolutionSample]:
    """Dense trajectory of the same integration at ascending nonnegative ``times``."""
    grid = [float(s) for s in times]
    if not grid:
        return []
    if grid[0] < 0 or any(later < earlier for earlier, later in zip(grid, grid[1:])):
        raise DomainError("Trajectory times must be nonnegative and ascending", field="times")
    matrices = _integrate(p, grid, tol)
    return [
        SolutionSample(s, X, entry_of(X, p.phi, p.psi), SolutionMethod.ODE_VECTORIZED)
        for s, X in zip(grid, matrices)
    ]


def fixed_point_residual(p: MatrixODEProblem, candidate: object) -> float:
    """Spectral norm of A†X + XB + C at X = ``candidate``."""
    X = as_cmatrix(candidate, "X")
    return spectral_norm(p.A.conj().T @ X + X @ p.B + p.C)
