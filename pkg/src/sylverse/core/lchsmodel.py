"""Classical model of the shifted-generator (LCHS) history states.

The LCHS route prepares the same history vectors as the linear-systems route but
with a different normalization constant 𝓝_ξ that depends only on the log-norm
bound. This module computes those constants and the 𝓛-functionals entering the
cost formulas.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy.integrate import simpson

from .errors import AccuracyError, DomainError, ValidationError
from .histsolve import HistoryState
from .matcore import expm, max_expm_norm, spectral_norm
from .problem import MatrixODEProblem, Side
from .settings import ordered_map

logger = logging.getLogger(__name__)

BASE_POINTS = 65
MAX_POINTS = 16_385


@dataclass(frozen=True)
class LFunctionals:
    """The 𝓛-functionals of one problem instance.

    Attributes
    ----------
    Lcal : float
        max_Y ∫₀ᵗ e^{2sξ_Y}ds + (d/c)e^{2tξ_Y}.
    L2 : float
        Square root of the product over Y of the same expression.
    Ltilde1 : float
        max_Y ∫₀ᵗ‖e^{sY}‖ds + (d/c)·max_s‖e^{sY}‖.
    Ltilde2 : float
        sqrt(Π_Y ∫₀ᵗ‖e^{sY}x_Y‖²ds + (d/c)‖e^{tY}x_Y‖²).
    maxExp : float
        max over Y and s of ‖e^{sY}‖.
    quadTol : float
        Relative tolerance of the norm integrals.
    M, R : int, optional
        Clock and padding steps the LCHS normalization was evaluated at.
    Nxi : float, optional
        max_Y 𝓝_{ξ_Y} at those steps.
    """

    Lcal: float
    L2: float
    Ltilde1: float
    Ltilde2: float
    maxExp: float
    quadTol: float
    M: Optional[int] = None
    R: Optional[int] = None
    Nxi: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        """Return the functional report JSON."""
        data: Dict[str, Any] = {
            "Lcal": self.Lcal,
            "L2": self.L2,
            "Ltilde1": self.Ltilde1,
            "Ltilde2": self.Ltilde2,
            "maxExp": self.maxExp,
            "quadTol": self.quadTol,
        }
        if self.Nxi is not None:
            data.update({"M": self.M, "R": self.R, "Nxi": self.Nxi})
        return data


def exp_integral(xi: float, t: float) -> float:
    """∫₀ᵗ e^{2sξ}ds in closed form."""
    if xi == 0.0:
        return t
    return math.expm1(2.0 * t * xi) / (2.0 * xi)


def lchs_normalization(t: float, xi: float, M: int, R: int) -> float:
    """𝓝_ξ = Σ_{m<M} e^{2tξm/M} + R·e^{2tξ}.

    Examples
    --------
    >>> lchs_normalization(3.0, 0.0, 4, 2)
    6.0
    """
    if M < 1 or R < 0:
        raise ValidationError(f"Need M >= 1 and R >= 0, got M={M}, R={R}", field="M")
    if xi == 0.0 or t == 0.0:
        return float(M + R)
    return math.expm1(2.0 * t * xi) / math.expm1(2.0 * t * xi / M) + R * math.exp(2.0 * t * xi)


def lchs_normalization_bound(t: float, xi: float, M: int, R: int) -> float:
    """(e²M/t)∫₀ᵗe^{2sξ}ds + R·e^{2tξ}, an upper bound on 𝓝_ξ when |ξ|t/M ≤ 1."""
    if t == 0.0:
        return math.e**2 * M + R
    return math.e**2 * M / t * exp_integral(xi, t) + R * math.exp(2.0 * t * xi)


def lchs_history(p: MatrixODEProblem, which: Side, M: int, R: int) -> HistoryState:
    """History of the shifted generator reweighted by e^{sξ}, normalized by 𝓝_ξ.

    Block m < M is e^{(tm/M)ξ}·e^{(tm/M)(Y−ξI)}x and each padding block is
    e^{tξ}·e^{t(Y−ξI)}x, so the vectors coincide with the unshifted history while
    the normalization constant is the LCHS one.
    """
    if M < 1 or R < 0:
        raise ValidationError(f"Need M >= 1 and R >= 0, got M={M}, R={R}", field="M")
    side = p.side(which)
    xi = side.log_norm_bound
    shifted = side.generator - xi * np.eye(p.n, dtype=np.complex128)
    times = [p.t * m / M for m in range(M)] + [p.t] * R
    blocks = np.stack([math.exp(s * xi) * (expm(s * shifted) @ side.vector) for s in times])
    scale = float(np.linalg.norm(side.vector)) ** 2
    return HistoryState(M, R, blocks, lchs_normalization(p.t, xi, M, R) * scale)


def norm_integral(fn: Callable[[float], float], t: float, tol: float = 1e-8) -> float:
    """∫₀ᵗ fn(s)ds for a nonnegative, possibly kinked integrand.

    Composite Simpson on 65 equispaced points is compared with the 33-point rule
    on every other point; the Richardson-extrapolated value is returned once the
    difference is below ``tol`` relative to the integral, doubling the point count
    otherwise.

    Raises
    ------
    AccuracyError
        If 16385 points are not enough.
    """
    if t == 0.0:
        return 0.0
    grid = np.linspace(0.0, t, BASE_POINTS)
    values = np.array(ordered_map(fn, [float(s) for s in grid]))
    while True:
        fine = float(simpson(values, x=grid))
        coarse = float(simpson(values[::2], x=grid[::2]))
        error = abs(fine - coarse) / 15.0
        if error <= tol * max(1.0, abs(fine)):
            logger.debug("norm_integral converged with %d points", grid.shape[0])
            return fine + (fine - coarse) / 15.0
        if grid.shape[0] >= MAX_POINTS:
            raise AccuracyError(
                f"Norm integral did not converge with {grid.shape[0]} points", estimate=fine, error_estimate=error
            )
        midpoints = 0.5 * (grid[:-1] + grid[1:])
        refined = np.empty(2 * values.shape[0] - 1)
        refined[::2] = values
        refined[1::2] = ordered_map(fn, [float(s) for s in midpoints])
        values = refined
        grid = np.linspace(0.0, t, values.shape[0])


def noise_ratio(c: float, d: float) -> float:
    """d/c, taken as zero when d = 0."""
    if d == 0.0:
        return 0.0
    if c == 0.0:
        raise DomainError("Functionals need c > 0 when d > 0", field="c")
    return d / c


def compute_L_functionals(
    p: MatrixODEProblem, M: Optional[int] = None, R: Optional[int] = None, quad_tol: float = 1e-8
) -> LFunctionals:
    """Evaluate the 𝓛-functionals of a static problem.

    𝓛 and 𝓛₂ use the closed-form integral of e^{2sξ}; 𝓛̃₁ and 𝓛̃₂ integrate
    norms of exact exponentials. When M and R are given, the LCHS
    normalization max_Y 𝓝_{ξ_Y} at those steps is recorded as well.

    Raises
    ------
    ValidationError
        If only one of M and R is given.
    AccuracyError
        If a norm integral does not converge.
    """
    if (M is None) != (R is None):
        raise ValidationError("M and R must be given together", field="M")
    ratio = noise_ratio(p.c, p.d)
    analytic = []
    norm_terms = []
    state_terms = []
    max_exps = []
    for which in (Side.A, Side.B):
        side = p.side(which)
        xi = side.log_norm_bound
        analytic.append(exp_integral(xi, p.t) + ratio * math.exp(2.0 * p.t * xi))
        generator = side.generator
        max_exp = max(max_expm_norm(generator, p.t), 1.0)
        max_exps.append(max_exp)
        norm_terms.append(
            norm_integral(lambda s, g=generator: spectral_norm(expm(s * g)), p.t, quad_tol) + ratio * max_exp
        )

        def state_norm_sq(s: float, g: np.ndarray = generator, x: np.ndarray = side.vector) -> float:
            return float(np.linalg.norm(expm(s * g) @ x)) ** 2

        state_terms.append(norm_integral(state_norm_sq, p.t, quad_tol) + ratio * state_norm_sq(p.t))
    nxi: Optional[float] = None
    if M is not None and R is not None:
        nxi = max(lchs_normalization(p.t, p.side(which).log_norm_bound, M, R) for which in (Side.A, Side.B))
    return LFunctionals(
        Lcal=max(analytic),
        L2=math.sqrt(analytic[0] * analytic[1]),
        Ltilde1=max(norm_terms),
        Ltilde2=math.sqrt(state_terms[0] * state_terms[1]),
        maxExp=max(max_exps),
        quadTol=quad_tol,
        M=M,
        R=R,
        Nxi=nxi,
    )
