"""Dissipative free-fermion covariance dynamics.

This module contains the covariance model of a number-conserving quadratic
fermion system coupled to local baths. After the bath is eliminated the
covariance obeys dX/dt = B†X + XB + C with B = −iA − Γ and C = X_βΓ + ΓX_β,
and relaxes to the Fermi–Dirac matrix X_β = (I + e^{βA})^{−1}.

The model is turned into a ``MatrixODEProblem`` for the entry pipeline and
integrated by the RK45 oracle for trajectories.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import AccuracyError, DimensionError, DomainError, ValidationError
from .krylov import lattice_hamiltonian
from .matcore import as_cmatrix, require_square, round_up_sig, spectral_norm
from .oracle import SolutionSample, entry_of, fixed_point_residual, solve_ode_trajectory
from .problem import DEFAULT_EPS, MatrixODEProblem, basis_vector

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
PHYSICAL_TOL = 1e-7
TRAJECTORY_COLUMNS = ("t", "entry_re", "entry_im", "dist_to_fixed_point", "min_eig", "max_eig")


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Covariance dynamics of Ns fermionic modes.

    Attributes
    ----------
    Ns : int
        Number of modes.
    Aherm : numpy.ndarray
        Hermitian single-particle Hamiltonian.
    Gamma : numpy.ndarray
        Positive semidefinite dissipation rates.
    beta : float
        Inverse bath temperature.
    Bgen : numpy.ndarray
        −iA − Γ.
    Cnoise : numpy.ndarray
        X_βΓ + ΓX_β.
    Xbeta : numpy.ndarray
        Fermi–Dirac fixed point (I + e^{βA})^{−1}.
    X0 : numpy.ndarray
        Initial covariance.
    """

    Ns: int
    Aherm: np.ndarray
    Gamma: np.ndarray
    beta: float
    Bgen: np.ndarray
    Cnoise: np.ndarray
    Xbeta: np.ndarray
    X0: np.ndarray

    @property
    def gamma(self) -> float:
        """Dissipation scale ‖Γ‖."""
        return spectral_norm(self.Gamma)

    @property
    def gamma_min(self) -> float:
        """Smallest eigenvalue of Γ."""
        return float(np.linalg.eigvalsh(self.Gamma)[0])


def _hermitian(value: object, name: str, n: Optional[int] = None) -> np.ndarray:
    matrix = as_cmatrix(value, name)
    require_square(matrix, name)
    if n is not None and matrix.shape[0] != n:
        raise DimensionError(f"{name} has dimension {matrix.shape[0]}, expected {n}", field=name)
    scale = max(1.0, spectral_norm(matrix))
    if spectral_norm(matrix - matrix.conj().T) > HERMITIAN_TOL * scale:
        raise ValidationError(f"{name} must be Hermitian", field=name)
    return np.asarray(0.5 * (matrix + matrix.conj().T))


def fermi_dirac(Aherm: object, beta: float) -> np.ndarray:
    """(I + e^{βA})^{−1} from the eigendecomposition of A.

    Examples
    --------
    >>> bool(np.allclose(fermi_dirac(np.diag([1.0, -1.0]), 0.0), np.eye(2) / 2))
    True
    """
    if not math.isfinite(beta) or beta < 0:
        raise DomainError(f"Inverse temperature must be finite and nonnegative, got {beta}", field="beta")
    energies, modes = np.linalg.eigh(_hermitian(Aherm, "Aherm"))
    occupations = expit(-beta * energies)
    return np.asarray((modes * occupations) @ modes.conj().T)


def build_model(Aherm: object, Gamma: object, beta: float, X0: Optional[object] = None) -> CovarianceModel:
    """Assemble the covariance model and its fixed point.

    Parameters
    ----------
    Aherm : array_like
        Hermitian Hamiltonian matrix.
    Gamma : array_like
        Hermitian dissipation matrix with smallest eigenvalue ≥ −1e-10.
    beta : float
        Inverse temperature, β ≥ 0.
    X0 : array_like, optional
        Initial covariance, Hermitian with spectrum in [0, 1]; defaults to I/2.

    Returns
    -------
    CovarianceModel
        The model with B, C and X_β populated.

    Raises
    ------
    ValidationError
        If A or Γ is not Hermitian, Γ is indefinite or X0 is not a covariance.
    """
    A = _hermitian(Aherm, "Aherm")
    n = A.shape[0]
    G = _hermitian(Gamma, "Gamma", n)
    if float(np.linalg.eigvalsh(G)[0]) < -PSD_TOL:
        raise ValidationError("Gamma must be positive semidefinite", field="Gamma")
    initial = np.eye(n, dtype=np.complex128) / 2 if X0 is None else _hermitian(X0, "X0", n)
    spectrum = np.linalg.eigvalsh(initial)
    if spectrum[0] < -PSD_TOL or spectrum[-1] > 1.0 + PSD_TOL:
        raise ValidationError("X0 must have its spectrum in [0, 1]", field="X0")
    Xbeta = fermi_dirac(A, beta)
    return CovarianceModel(
        Ns=n,
        Aherm=A,
        Gamma=G,
        beta=float(beta),
        Bgen=-1j * A - G,
        Cnoise=Xbeta @ G + G @ Xbeta,
        Xbeta=Xbeta,
        X0=initial,
    )


def chain_model(
    ns: int,
    hopping: float = 1.0,
    gamma: float = 0.1,
    beta: float = 1.0,
    boundary_only: bool = False,
    X0: Optional[object] = None,
) -> CovarianceModel:
    """Open 1-D tight-binding chain with uniform or boundary-site dissipation γ."""
    if ns < 1:
        raise DomainError(f"Chain needs at least one mode, got {ns}", field="ns")
    if gamma < 0:
        raise DomainError(f"Dissipation must be nonnegative, got {gamma}", field="gamma")
    A = lattice_hamiltonian(1, ns, hopping).toarray()
    if boundary_only:
        rates = np.zeros(ns)
        rates[[0, ns - 1]] = gamma
    else:
        rates = np.full(ns, gamma)
    return build_model(A, np.diag(rates).astype(np.complex128), beta, X0)


def to_ode_problem(
    model: CovarianceModel,
    t: float,
    eps: float = DEFAULT_EPS,
    phi: Optional[object] = None,
    psi: Optional[object] = None,
) -> MatrixODEProblem:
    """The covariance equation as a ``MatrixODEProblem`` with A = B = −iA − Γ.

    Norm bounds are measured and rounded up; ξ = −λ_min(Γ) when Γ is positive
    definite and 0 otherwise. φ and ψ default to |0⟩.
    """
    generator = model.Bgen
    lowest = model.gamma_min
    xi = round_up_sig(-lowest) if lowest > 0 else 0.0
    a = round_up_sig(spectral_norm(generator))
    e0 = basis_vector(model.Ns)
    return MatrixODEProblem(
        A=generator,
        B=generator,
        C=model.Cnoise,
        D=model.X0,
        t=t,
        phi=e0 if phi is None else phi,
        psi=e0 if psi is None else psi,
        eps=eps,
        a=a,
        b=a,
        c=round_up_sig(spectral_norm(model.Cnoise)),
        d=round_up_sig(spectral_norm(model.X0)),
        xiA=xi,
        xiB=xi,
    )


def stationary_residual(model: CovarianceModel) -> float:
    """‖B†X_β + X_βB + C‖, zero for a consistent model."""
    return fixed_point_residual(to_ode_problem(model, 0.0), model.Xbeta)


def _spectrum(X: np.ndarray) -> np.ndarray:
    return np.asarray(np.linalg.eigvalsh(0.5 * (X + X.conj().T)))


def relax(model: CovarianceModel, t_grid: Sequence[float], tol: float = 1e-10) -> List[SolutionSample]:
    """Covariance trajectory at ascending times by the RK45 oracle.

    Raises
    ------
    AccuracyError
        If a sample is not Hermitian or leaves the spectrum range
        [−1e-7 − tol, 1 + 1e-7 + tol].
    """
    times = [float(s) for s in t_grid]
    if not times:
        return []
    problem = to_ode_problem(model, max(times))
    samples = solve_ode_trajectory(problem, times, tol)
    slack = PHYSICAL_TOL + tol
    for sample in samples:
        X = sample.X
        skew = spectral_norm(X - X.conj().T)
        spectrum = _spectrum(X)
        if skew > slack or spectrum[0] < -slack or spectrum[-1] > 1.0 + slack:
            raise AccuracyError(
                f"Covariance at t={sample.t:.6g} is unphysical (spectrum [{spectrum[0]:.3g}, {spectrum[-1]:.3g}])",
                estimate=sample,
                error_estimate=max(skew, -spectrum[0], spectrum[-1] - 1.0),
            )
    logger.debug("relax: %d samples up to t=%.6g", len(samples), times[-1])
    return samples


def trajectory_rows(
    model: CovarianceModel,
    samples: Sequence[SolutionSample],
    phi: Optional[object] = None,
    psi: Optional[object] = None,
) -> List[Dict[str, Any]]:
    """One row per sample with the ``TRAJECTORY_COLUMNS`` fields."""
    e0 = basis_vector(model.Ns)
    left = e0 if phi is None else np.asarray(phi, dtype=np.complex128)
    right = e0 if psi is None else np.asarray(psi, dtype=np.complex128)
    rows = []
    for sample in samples:
        entry = entry_of(sample.X, left, right)
        spectrum = _spectrum(sample.X)
        rows.append(
            {
                "t": sample.t,
                "entry_re": entry.real,
                "entry_im": entry.imag,
                "dist_to_fixed_point": spectral_norm(sample.X - model.Xbeta),
                "min_eig": float(spectrum[0]),
                "max_eig": float(spectrum[-1]),
            }
        )
    return rows
