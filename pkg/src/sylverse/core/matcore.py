"""Dense complex linear-algebra kernel.

This module contains the numerical substrate used by every other module: the
matrix exponential, spectral norms and log-norms, pivoted dense solves and adaptive
Gauss–Legendre quadrature of matrix-valued functions.

Matrices are ``numpy.ndarray`` objects of dtype ``complex128``; all functions are
pure and leave their inputs untouched.
"""

import logging
import math
import warnings
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
from numpy.polynomial import legendre
from scipy.linalg import LinAlgWarning

from .errors import AccuracyError, DimensionError, DomainError, SingularMatrixError, ValidationError
from .settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)

MAX_SERIES_ORDER = 60
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def as_cmatrix(value: object, name: str = "matrix") -> np.ndarray:
    """Coerce ``value`` to a finite 2-D complex array.

    Parameters
    ----------
    value : array_like
        Matrix entries.
    name : str
        Name used in error messages.

    Returns
    -------
    numpy.ndarray
        Complex128 array with ``ndim == 2``.

    Raises
    ------
    DimensionError
        If the input is not two-dimensional or has an empty axis.
    ValidationError
        If an entry is NaN or infinite.
    """
    matrix = np.asarray(value, dtype=np.complex128)
    if matrix.ndim != 2 or 0 in matrix.shape:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {matrix.shape}", field=name)
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"{name} has non-finite entries", field=name)
    return matrix


def as_cvector(value: object, name: str = "vector") -> np.ndarray:
    """Coerce ``value`` to a finite 1-D complex array."""
    vector = np.asarray(value, dtype=np.complex128)
    if vector.ndim != 1 or vector.shape[0] == 0:
        raise DimensionError(f"{name} must be a non-empty vector, got shape {vector.shape}", field=name)
    if not np.all(np.isfinite(vector)):
        raise ValidationError(f"{name} has non-finite entries", field=name)
    return vector


def require_square(matrix: np.ndarray, name: str = "matrix") -> None:
    """Raise ``DimensionError`` unless ``matrix`` is square."""
    if matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {matrix.shape}", field=name)


def norm_upper_bound(matrix: np.ndarray) -> float:
    """Return sqrt(‖M‖₁‖M‖∞), a cheap upper bound on the spectral norm."""
    abs_m = np.abs(matrix)
    return math.sqrt(float(abs_m.sum(axis=0).max()) * float(abs_m.sum(axis=1).max()))


def series_order(x_norm: float, target: float) -> int:
    """Smallest Taylor order whose remainder for e^X with ‖X‖ ≤ x_norm ≤ 1 is below target."""
    order = 0
    term = x_norm
    while order < MAX_SERIES_ORDER:
        # term == x^{q+1}/(q+1)!; the tail is bounded by a geometric series
        remainder = term / (1.0 - x_norm / (order + 2))
        if remainder <= target:
            return order
        order += 1
        term *= x_norm / (order + 1)
    return MAX_SERIES_ORDER


def expm(matrix: object, tol: float = DEFAULT_SETTINGS.expm_tol) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    The matrix is scaled by 2^-s so that its norm is at most one, the series is
    truncated at the smallest order whose remainder is below ``tol / 2**s`` and the
    result is squared s times.

    Parameters
    ----------
    matrix : array_like
        Square complex matrix M.
    tol : float
        Target accuracy relative to max(1, ‖e^M‖); must lie in (1e-15, 1e-2).

    Returns
    -------
    numpy.ndarray
        Approximation of e^M.

    Raises
    ------
    DimensionError
        If ``matrix`` is not square.
    DomainError
        If ``tol`` is outside (1e-15, 1e-2).

    Examples
    --------
    >>> import numpy as np
    >>> bool(np.allclose(expm(np.zeros((2, 2))), np.eye(2)))
    True
    """
    m = as_cmatrix(matrix, "M")
    require_square(m, "M")
    if not 1e-15 < tol < 1e-2:
        raise DomainError(f"expm tolerance must lie in (1e-15, 1e-2), got {tol}", field="tol")
    bound = norm_upper_bound(m)
    squarings = 0 if bound <= 1.0 else math.ceil(math.log2(bound))
    scale = 2.0**squarings
    x = m / scale
    order = series_order(bound / scale, tol / scale)
    identity = np.eye(m.shape[0], dtype=np.complex128)
    result = identity.copy()
    for k in range(order, 0, -1):
        result = identity + (x @ result) / k
    for _ in range(squarings):
        result = result @ result
    return result


def spectral_norm(matrix: object) -> float:
    """Largest singular value of a matrix.

    A full SVD is used up to ``svd_cap`` rows or columns; larger inputs use power
    iteration on M†M started from the all-ones vector, so results are reproducible.

    Parameters
    ----------
    matrix : array_like
        Complex matrix, not necessarily square.

    Returns
    -------
    float
        ‖M‖₂.
    """
    m = as_cmatrix(matrix)
    if max(m.shape) <= DEFAULT_SETTINGS.svd_cap:
        return float(np.linalg.norm(m, 2))
    vector = np.ones(m.shape[1], dtype=np.complex128) / math.sqrt(m.shape[1])
    value = 0.0
    for _ in range(10_000):
        w = m.conj().T @ (m @ vector)
        estimate = float(np.linalg.norm(w))
        if estimate == 0.0:
            return 0.0
        vector = w / estimate
        if abs(estimate - value) <= 1e-14 * estimate:
            value = estimate
            break
        value = estimate
    return math.sqrt(value)


def log_norm(matrix: object) -> float:
    """Largest eigenvalue of the Hermitian part (M + M†)/2.

    Examples
    --------
    >>> import numpy as np
    >>> log_norm(-np.eye(4))
    -1.0
    """
    m = as_cmatrix(matrix, "M")
    require_square(m, "M")
    hermitian_part = 0.5 * (m + m.conj().T)
    return float(np.linalg.eigvalsh(hermitian_part)[-1])


def solve_dense(matrix: object, rhs: object) -> np.ndarray:
    """Solve Mx = b by LU factorization with partial pivoting.

    Parameters
    ----------
    matrix : array_like
        Square nonsingular matrix M.
    rhs : array_like
        Right-hand side b, a vector of matching length.

    Returns
    -------
    numpy.ndarray
        Solution vector x.

    Raises
    ------
    DimensionError
        If shapes are inconsistent.
    SingularMatrixError
        If a pivot is negligible relative to the largest pivot.
    """
    m = as_cmatrix(matrix, "M")
    require_square(m, "M")
    b = as_cvector(rhs, "b")
    if b.shape[0] != m.shape[0]:
        raise DimensionError(f"Right-hand side has length {b.shape[0]}, expected {m.shape[0]}", field="b")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m)
    pivots = np.abs(np.diag(lu))
    threshold = m.shape[0] * np.finfo(float).eps * max(float(pivots.max()), np.finfo(float).tiny)
    negligible = np.flatnonzero(pivots <= threshold)
    if negligible.size:
        pivot = int(negligible[0])
        raise SingularMatrixError(f"Matrix is singular to working precision at pivot {pivot}", pivot=pivot)
    return np.asarray(scipy.linalg.lu_solve((lu, piv), b), dtype=np.complex128)


@lru_cache(maxsize=32)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights on [-1, 1]."""
    nodes, weights = legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _panel(f: Callable[[float], object], lo: float, hi: float, order: int) -> Tuple[np.ndarray, np.ndarray]:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    estimates: List[np.ndarray] = []
    for count in (order, 2 * order):
        nodes, weights = gauss_legendre(count)
        values = np.stack([np.asarray(f(mid + half * x), dtype=np.complex128) for x in nodes])
        estimates.append(half * np.tensordot(weights, values, axes=1))
    return estimates[0], estimates[1]


def quad_integrate(
    f: Callable[[float], object],
    lo: float,
    hi: float,
    tol: float = DEFAULT_SETTINGS.quad_tol,
    order: int = 7,
    node_budget: Optional[int] = None,
) -> np.ndarray:
    """Adaptive composite Gauss–Legendre integral of a matrix-valued function.

    Each panel is integrated with ``order`` and ``2*order`` nodes; the difference is
    the panel error estimate. Panels whose estimate exceeds their share of ``tol``
    (proportional to width) are bisected. Accepted panels are summed in ascending
    order of their left endpoint.

    Parameters
    ----------
    f : callable
        Function of a real argument returning a scalar, vector or matrix.
    lo, hi : float
        Integration limits with lo ≤ hi.
    tol : float
        Absolute entrywise error target.
    order : int
        Base number of Gauss nodes per panel.
    node_budget : int, optional
        Maximum number of evaluations of ``f``.

    Returns
    -------
    numpy.ndarray
        Complex integral with the shape of ``f``'s values.

    Raises
    ------
    DomainError
        If ``hi < lo`` or ``tol`` is not positive.
    AccuracyError
        If the node budget is exhausted; carries the partial estimate.
    """
    if hi < lo:
        raise DomainError(f"Integration limits must satisfy lo <= hi, got [{lo}, {hi}]", field="hi")
    if tol <= 0:
        raise DomainError(f"Quadrature tolerance must be positive, got {tol}", field="tol")
    if hi == lo:
        return np.zeros_like(np.asarray(f(lo), dtype=np.complex128))
    budget = DEFAULT_SETTINGS.quad_node_budget if node_budget is None else node_budget
    length = hi - lo
    stack = [(lo, hi)]
    accepted: List[Tuple[float, np.ndarray, float]] = []
    evaluations = 0
    while stack:
        a, b = stack.pop()
        coarse, fine = _panel(f, a, b, order)
        evaluations += 3 * order
        error = float(np.max(np.abs(fine - coarse)))
        if error <= tol * (b - a) / length:
            accepted.append((a, fine, error))
            continue
        if evaluations >= budget:
            partial = sum((item[1] for item in accepted), fine)
            spent = sum(item[2] for item in accepted) + error
            raise AccuracyError(
                f"Quadrature did not reach tolerance {tol} within {budget} evaluations",
                estimate=partial,
                error_estimate=spent,
            )
        middle = 0.5 * (a + b)
        stack.append((middle, b))
        stack.append((a, middle))
    accepted.sort(key=lambda item: item[0])
    total = accepted[0][1].copy()
    for _, value, _ in accepted[1:]:
        total = total + value
    logger.debug("quad_integrate: %d panels, %d evaluations", len(accepted), evaluations)
    return total


def max_expm_norm(generator: object, t: float, samples: int = 65) -> float:
    """Maximum of ‖e^{sY}‖ over s ∈ [0, t].

    The norm is sampled on a uniform grid containing 0 and t; the best sample is
    refined by golden-section search on its two neighbouring intervals.
    """
    y = as_cmatrix(generator, "Y")
    if t <= 0:
        return 1.0
    grid = np.linspace(0.0, t, samples)

    def norm_at(s: float) -> float:
        return spectral_norm(expm(s * y))

    values = [norm_at(float(s)) for s in grid]
    best = int(np.argmax(values))
    left = float(grid[max(best - 1, 0)])
    right = float(grid[min(best + 1, samples - 1)])
    return max(max(values), _golden_max(norm_at, left, right))


def _golden_max(f: Callable[[float], float], lo: float, hi: float, iterations: int = 40) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return max(fc, fd)


def round_up_sig(value: float, digits: int = 3) -> float:
    """Round ``value`` toward +inf to ``digits`` significant figures.

    Examples
    --------
    >>> round_up_sig(1.2341)
    1.24
    >>> round_up_sig(-0.10049)
    -0.1
    """
    if value == 0.0 or not math.isfinite(value):
        return value
    if value < 0:
        return -_round_down_sig(-value, digits)
    scale = 10.0 ** (math.floor(math.log10(value)) - (digits - 1))
    rounded = math.ceil(value / scale) * scale
    while rounded < value:
        rounded = math.nextafter(rounded, math.inf)
    return rounded


def _round_down_sig(value: float, digits: int) -> float:
    scale = 10.0 ** (math.floor(math.log10(value)) - (digits - 1))
    rounded = math.floor(value / scale) * scale
    while rounded > value:
        rounded = math.nextafter(rounded, -math.inf)
    return rounded
