"""Time-dependent generators.

This module contains the Propagator class evaluating transition matrices
W(t, s), defined by dW(t, s)/dt = W(t, s)A(t) with W(s, s) = I, through a
truncated Dyson series, together with the time-dependent history states, the
step integrals I_C(t_m) and the resulting entry estimate

    X(t) = W_A(t,0)† D W_B(t,0) + ∫₀ᵗ W_A(t,s)† C(s) W_B(t,s) ds.

Transition matrices compose as W(τ, s)·W(t, τ) = W(t, s) for s ≤ τ ≤ t.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre

from .errors import DomainError, PreconditionError
from .histsolve import (
    BlockLinearSystem,
    ConditionCertificate,
    HistoryState,
    NORM_A_BOUND,
    check_step_rule,
    inverse_norms,
    sequence_bound,
    solve_history,
    system_from_steppers,
)
from .lchsmodel import LFunctionals, exp_integral, noise_ratio, norm_integral
from .matcore import gauss_legendre, spectral_norm
from .problem import Side, TimeDepProblem
from .settings import DEFAULT_SETTINGS, ordered_map

logger = logging.getLogger(__name__)

TIME_SLACK = 1e-12
MAX_RIEMANN_POINTS = 100_000


class IntegrationRule(Enum):
    """Quadrature rule for the step integrals I_C(t_m)."""

    RIEMANN = "riemann"
    GAUSS = "gauss"


@lru_cache(maxsize=16)
def spectral_integration_matrix(q: int) -> np.ndarray:
    """Matrix S on [-1, 1] with (S f)_i ≈ ∫_{-1}^{x_i} f for Gauss–Legendre nodes x_i.

    The node values are interpolated by a Legendre series of degree q−1 which is
    integrated exactly.
    """
    nodes, _ = gauss_legendre(q)
    vandermonde = legendre.legvander(nodes, q - 1)
    integrals = np.empty((q, q))
    for k in range(q):
        unit = np.zeros(q)
        unit[k] = 1.0
        integrals[:, k] = legendre.legval(nodes, legendre.legint(unit, lbnd=-1))
    matrix = integrals @ np.linalg.inv(vandermonde)
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True, eq=False)
class Propagator:
    """Transition matrices of one side of a time-dependent problem.

    Attributes
    ----------
    problem : TimeDepProblem
        Problem providing the interpolated generator.
    side : Side
        Which generator to propagate.
    K : int
        Dyson truncation order (Picard iterations per substep).
    inner_grid : int
        Gauss–Legendre nodes per substep.
    """

    problem: TimeDepProblem
    side: Side
    K: int = DEFAULT_SETTINGS.dyson_order
    inner_grid: int = DEFAULT_SETTINGS.inner_grid
    generator_at: Callable[[float], np.ndarray] = field(init=False, repr=False)
    norm_bound: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        data = self.problem.side(self.side)
        object.__setattr__(self, "generator_at", data.generator_at)
        object.__setattr__(self, "norm_bound", data.norm_bound)

    def __call__(self, t1: float, t0: float) -> np.ndarray:
        return propagate(self, t1, t0)


def _substep(prop: Propagator, lo: float, hi: float) -> np.ndarray:
    n = prop.problem.n
    identity = np.eye(n, dtype=np.complex128)
    half = 0.5 * (hi - lo)
    nodes, weights = gauss_legendre(prop.inner_grid)
    generators = np.stack([prop.generator_at(lo + half * (x + 1.0)) for x in nodes])
    integration = half * spectral_integration_matrix(prop.inner_grid)
    values = np.broadcast_to(identity, generators.shape).copy()
    for _ in range(prop.K):
        products = np.einsum("jab,jbc->jac", values, generators)
        values = identity + np.einsum("ij,jac->iac", integration, products)
    products = np.einsum("jab,jbc->jac", values, generators)
    return np.asarray(identity + half * np.einsum("j,jac->ac", weights, products))


def breakpoints(problem: TimeDepProblem, t0: float, t1: float) -> List[float]:
    """t0, the grid points strictly inside (t0, t1), and t1."""
    inner = [float(s) for s in problem.grid if t0 + TIME_SLACK < s < t1 - TIME_SLACK]
    return [t0, *inner, t1]


def propagate(prop: Propagator, t1: float, t0: float) -> np.ndarray:
    """W(t1, t0) by truncated Dyson series.

    [t0, t1] is split at grid points and into substeps of length at most 1/a; on
    each substep the integral equation W(τ) = I + ∫ W(σ)A(σ)dσ is iterated K times
    on Gauss–Legendre nodes, and the substep results are multiplied with the
    earliest on the left.

    Raises
    ------
    DomainError
        If t0 > t1 or the interval leaves [0, t].
    """
    t_end = prop.problem.t
    if t0 > t1 + TIME_SLACK or t0 < -TIME_SLACK or t1 > t_end + TIME_SLACK:
        raise DomainError(f"Need 0 <= t0 <= t1 <= {t_end}, got t0={t0}, t1={t1}", field="t0")
    t0 = min(max(t0, 0.0), t_end)
    t1 = min(max(t1, t0), t_end)
    result = np.eye(prop.problem.n, dtype=np.complex128)
    if t1 == t0:
        return result
    points = breakpoints(prop.problem, t0, t1)
    for lo, hi in zip(points, points[1:]):
        pieces = max(1, math.ceil((hi - lo) * prop.norm_bound - TIME_SLACK))
        edges = np.linspace(lo, hi, pieces + 1)
        for a, b in zip(edges, edges[1:]):
            result = result @ _substep(prop, float(a), float(b))
    return result


def clock_times(t: float, M: int) -> np.ndarray:
    """t_m = m·t/M for m = 0..M."""
    return np.linspace(0.0, t, M + 1)


def _resolve(p: TimeDepProblem, M: Optional[int], R: Optional[int]) -> Tuple[int, int]:
    mu = p.mu
    M = max(1, math.ceil(p.t * mu)) if M is None else M
    if R is None:
        R = 1 if p.c == 0 else max(1, math.ceil(mu * p.d / p.c))
    return M, R


def step_transitions(prop: Propagator, M: int) -> List[np.ndarray]:
    """V_m = W(t_{M−m+1}, t_{M−m}) for m = 1..M."""
    times = clock_times(prop.problem.t, M)
    return ordered_map(lambda m: propagate(prop, float(times[M - m + 1]), float(times[M - m])), range(1, M + 1))


def standard_history(prop: Propagator, M: int, R: int, x: object) -> HistoryState:
    """Blocks W(t, t_{M−m})x for m < M followed by R copies of W(t, 0)x."""
    steps = step_transitions(prop, M)
    vector = np.asarray(x, dtype=np.complex128)
    blocks = np.empty((M + R, vector.shape[0]), dtype=np.complex128)
    blocks[0] = vector
    for m in range(1, M + 1):
        blocks[m] = steps[m - 1] @ blocks[m - 1]
    blocks[M:] = blocks[M]
    return HistoryState.from_blocks(M, R, blocks)


def build_timedep_system(
    p: TimeDepProblem, which: Side, M: int, R: int, K: int = DEFAULT_SETTINGS.dyson_order
) -> BlockLinearSystem:
    """Block system whose steppers are the truncated Dyson steps V_m.

    Raises
    ------
    PreconditionError
        If the step-size rule a·h ≤ 1 is violated.
    """
    prop = Propagator(p, which, K)
    h = p.t / M
    check_step_rule(prop.norm_bound, h, p.t)
    return system_from_steppers(M, R, h, K, step_transitions(prop, M), p.side(which).vector)


def riemann_points(p: TimeDepProblem, M: int, eps_be: float) -> int:
    """G = ⌈h²e²(a·c + b·c + ‖C′‖)/ε_be⌉, at least 1."""
    if eps_be <= 0:
        raise DomainError(f"Riemann tolerance must be positive, got {eps_be}", field="eps_be")
    h = p.t / M
    return max(1, math.ceil(h**2 * math.e**2 * (p.a * p.c + p.b * p.c + p.derivC) / eps_be))


def _sample_points(
    p: TimeDepProblem, lo: float, hi: float, rule: IntegrationRule, points: int
) -> Tuple[np.ndarray, np.ndarray]:
    if rule is IntegrationRule.RIEMANN:
        nodes = lo + (hi - lo) * np.arange(points) / points
        return nodes, np.full(points, (hi - lo) / points)
    gl_nodes, gl_weights = gauss_legendre(points)
    all_nodes: List[np.ndarray] = []
    all_weights: List[np.ndarray] = []
    edges = breakpoints(p, lo, hi)
    for a, b in zip(edges, edges[1:]):
        half = 0.5 * (b - a)
        all_nodes.append(a + half * (gl_nodes + 1.0))
        all_weights.append(half * gl_weights)
    return np.concatenate(all_nodes), np.concatenate(all_weights)


def _transitions_to(prop: Propagator, nodes: Sequence[float], end: float) -> List[np.ndarray]:
    """W(end, s) for ascending nodes s, accumulated from the right end."""
    result: List[np.ndarray] = [np.empty(0)] * len(nodes)
    later = end
    current = np.eye(prop.problem.n, dtype=np.complex128)
    for i in range(len(nodes) - 1, -1, -1):
        current = propagate(prop, later, float(nodes[i])) @ current
        result[i] = current
        later = float(nodes[i])
    return result


def step_integral(
    p: TimeDepProblem,
    m: int,
    M: int,
    K: int = DEFAULT_SETTINGS.dyson_order,
    rule: IntegrationRule = IntegrationRule.RIEMANN,
    points: int = 12,
) -> np.ndarray:
    """I_C(t_m) = ∫₀ʰ W_A(t_{m+1}, t_m+τ)† C(t_m+τ) W_B(t_{m+1}, t_m+τ) dτ.

    Parameters
    ----------
    p : TimeDepProblem
        Problem.
    m : int
        Clock step, 0 ≤ m < M.
    M : int
        Number of clock steps.
    K : int
        Dyson order of the transition matrices.
    rule : IntegrationRule
        RIEMANN evaluates the left sum on ``points`` = G equidistant points;
        GAUSS uses ``points`` Gauss–Legendre nodes on each piece between grid points.
    points : int
        G or the number of Gauss nodes per piece.
    """
    if not 0 <= m < M:
        raise DomainError(f"Clock step must lie in 0..{M - 1}, got {m}", field="m")
    times = clock_times(p.t, M)
    lo, hi = float(times[m]), float(times[m + 1])
    nodes, weights = _sample_points(p, lo, hi, rule, points)
    left = _transitions_to(Propagator(p, Side.A, K), nodes, hi)
    right = _transitions_to(Propagator(p, Side.B, K), nodes, hi)
    total = np.zeros((p.n, p.n), dtype=np.complex128)
    for weight, s, w_a, w_b in zip(weights, nodes, left, right):
        total = total + weight * (w_a.conj().T @ p.C_at(float(s)) @ w_b)
    return total


def solve_timedep_entry(
    p: TimeDepProblem,
    M: Optional[int] = None,
    R: Optional[int] = None,
    K: int = DEFAULT_SETTINGS.dyson_order,
    rule: IntegrationRule = IntegrationRule.RIEMANN,
    eps_be: Optional[float] = None,
    nodes: int = 12,
) -> complex:
    """Estimate ⟨φ|X(t)|ψ⟩ from reverse-order history states.

    The reversed histories carry W(t,0)x on their first R blocks and
    W(t, t_{k+1})x on block R+k; they are contracted with D/R on the padding
    blocks and with I_C(t_k) on the others.

    Parameters
    ----------
    p : TimeDepProblem
        Problem.
    M, R : int, optional
        Clock and padding steps; default ⌈t·max(a,b)⌉ and ⌈max(a,b)·d/c⌉.
    K : int
        Dyson order.
    rule : IntegrationRule
        Quadrature of the step integrals. The RIEMANN rule needs
        ``riemann_points`` samples per step, which grows like h²/ε_be; it is
        only feasible for loose tolerances (around 1e-4 and above on unit-scale
        envelopes). Use GAUSS for tighter ones.
    eps_be : float, optional
        Riemann tolerance; defaults to ``p.eps``.
    nodes : int
        Gauss nodes per piece for the GAUSS rule.

    Raises
    ------
    PreconditionError
        If the RIEMANN rule needs more than ``MAX_RIEMANN_POINTS`` samples per step.
    """
    M, R = _resolve(p, M, R)
    histories = []
    for which in (Side.A, Side.B):
        system = build_timedep_system(p, which, M, R, K)
        histories.append(solve_history(system, p.side(which).vector).reversed())
    left, right = histories
    if rule is IntegrationRule.RIEMANN:
        points = riemann_points(p, M, p.eps if eps_be is None else eps_be)
        if points > MAX_RIEMANN_POINTS:
            raise PreconditionError(
                f"Riemann rule needs {points} points per step; use the gauss rule or a larger eps_be", field="eps_be"
            )
    else:
        points = nodes
    logger.debug("solve_timedep_entry M=%d R=%d K=%d rule=%s points=%d", M, R, K, rule.value, points)
    integrals = ordered_map(lambda k: step_integral(p, k, M, K, rule, points), range(M))
    padding = np.einsum("mi,ij,mj->", left.blocks[:R].conj(), p.D / R, right.blocks[:R])
    steps = np.einsum("mi,mij,mj->", left.blocks[R:].conj(), np.stack(integrals), right.blocks[R:])
    return complex(padding + steps)


def _pair_norms(prop: Propagator, M: int) -> np.ndarray:
    """‖W(t_i, t_j)‖ for clock points j ≤ i (zero elsewhere)."""
    times = clock_times(prop.problem.t, M)
    steps = [propagate(prop, float(times[j + 1]), float(times[j])) for j in range(M)]
    norms = np.zeros((M + 1, M + 1))
    for i in range(M + 1):
        current = np.eye(prop.problem.n, dtype=np.complex128)
        norms[i, i] = 1.0
        for j in range(i - 1, -1, -1):
            current = steps[j] @ current
            norms[i, j] = spectral_norm(current)
    return norms


def l1_norm(prop: Propagator, M: int, tol: float = 1e-6) -> float:
    """‖W‖_{L¹}: the larger of max_{t₁}∫₀^{t₁}‖W(t₁,s)‖ds and max_{t₀}∫_{t₀}^t‖W(s,t₀)‖ds.

    Both maxima run over the clock points.
    """
    t = prop.problem.t
    values = [0.0]
    for point in clock_times(t, M):
        u = float(point)
        if u > 0.0:
            values.append(norm_integral(lambda s, u=u: spectral_norm(propagate(prop, u, s)), u, tol))
        if t - u > 0.0:
            values.append(norm_integral(lambda s, u=u: spectral_norm(propagate(prop, u + s, u)), t - u, tol))
    return max(values)


def certify_condition_timedep(
    p: TimeDepProblem,
    M: Optional[int] = None,
    R: Optional[int] = None,
    K: int = DEFAULT_SETTINGS.dyson_order,
    which: Side = Side.A,
    tol: float = 1e-6,
) -> ConditionCertificate:
    """Certificate for the time-dependent block system of one side.

    The bound on ‖𝓐⁻¹‖ is 1 + (e/h)‖W‖_{L¹} + R·max_m‖W(t_m, 0)‖ plus the
    truncation slack (M+R)·ε_trunc, where ε_trunc is derived from the largest
    difference between a Dyson step and its higher-order reference.
    """
    M, R = _resolve(p, M, R)
    system = build_timedep_system(p, which, M, R, K)
    norm_A, norm_A_inv, row_sum, col_sum = inverse_norms(system)
    reference = Propagator(p, which, K + 6, DEFAULT_SETTINGS.inner_grid + 4)
    times = clock_times(p.t, M)
    pair_norms = _pair_norms(reference, M)
    max_from_zero = float(pair_norms[:, 0].max())
    max_pair = max(1.0, float(pair_norms.max()))
    delta = max(
        spectral_norm(system.stepper(m) - propagate(reference, float(times[M - m + 1]), float(times[M - m])))
        for m in range(1, M + 1)
    )
    slack = (M + R) * sequence_bound(max_pair, delta, M)
    bound = 1.0 + math.e / system.h * l1_norm(reference, M, tol) + R * max_from_zero + slack
    passed = norm_A_inv <= bound * (1.0 + 1e-6) and norm_A <= NORM_A_BOUND * (1.0 + 1e-10)
    if not passed:
        logger.warning("Time-dependent certificate failed: normAinv=%.6g bound=%.6g", norm_A_inv, bound)
    return ConditionCertificate(M, R, K, norm_A, norm_A_inv, norm_A * norm_A_inv, row_sum, col_sum, bound, passed)


def timedep_history_norm_bound(prop: Propagator, M: int, R: int, x: object, tol: float = 1e-8) -> float:
    """(e²/h)∫₀ᵗ‖W(t,s)x‖²ds + R‖W(t,0)x‖²."""
    t = prop.problem.t
    vector = np.asarray(x, dtype=np.complex128)
    final = float(np.linalg.norm(propagate(prop, t, 0.0) @ vector)) ** 2
    if t == 0.0:
        return math.e**2 * M * float(np.linalg.norm(vector)) ** 2 + R * final
    integral = norm_integral(lambda s: float(np.linalg.norm(propagate(prop, t, s) @ vector)) ** 2, t, tol)
    return math.e**2 * M / t * integral + R * final


def compute_timedep_functionals(
    p: TimeDepProblem, quad_tol: float = 1e-6, K: int = DEFAULT_SETTINGS.dyson_order
) -> LFunctionals:
    """𝓛-functionals with W(t, s) in place of e^{(t−s)Y} and ξ the largest sampled bound."""
    ratio = noise_ratio(p.c, p.d)
    t = p.t
    analytic = []
    norm_terms = []
    state_terms = []
    max_exps = []
    for which in (Side.A, Side.B):
        prop = Propagator(p, which, K)
        xi = p.xiA if which is Side.A else p.xiB
        analytic.append(exp_integral(xi, t) + ratio * math.exp(2.0 * t * xi))
        samples = ordered_map(lambda s, prop=prop: spectral_norm(propagate(prop, t, s)), np.linspace(0.0, t, 65))
        max_exp = max(1.0, *samples)
        max_exps.append(max_exp)
        transition_norm = norm_integral(lambda s, prop=prop: spectral_norm(propagate(prop, t, s)), t, quad_tol)
        norm_terms.append(transition_norm + ratio * max_exp)
        x = p.side(which).vector

        def state_norm_sq(s: float, prop: Propagator = prop, x: np.ndarray = x) -> float:
            return float(np.linalg.norm(propagate(prop, t, s) @ x)) ** 2

        state_terms.append(norm_integral(state_norm_sq, t, quad_tol) + ratio * state_norm_sq(0.0))
    return LFunctionals(
        Lcal=max(analytic),
        L2=math.sqrt(analytic[0] * analytic[1]),
        Ltilde1=max(norm_terms),
        Ltilde2=math.sqrt(state_terms[0] * state_terms[1]),
        maxExp=max(max_exps),
        quadTol=quad_tol,
    )
