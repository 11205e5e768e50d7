"""Query and gate cost model.

This module evaluates the complexity formulas of both history-state routes with
every hidden constant set to one and logarithms taken base two (floored at one),
so the results are comparable model values rather than resource estimates. It
also checks the separating-gap arithmetic behind the lower bound on entry
estimation.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .errors import DomainError
from .lchsmodel import LFunctionals, compute_L_functionals, exp_integral
from .overlap import Route
from .problem import MatrixODEProblem, TimeDepProblem, lower_bound_entry
from .timedep import compute_timedep_functionals

logger = logging.getLogger(__name__)

Problem = Union[MatrixODEProblem, TimeDepProblem]

MODEL_LABEL = "model values"
MAX_GAP_DELTA = math.pi / 16
MIN_GAP_TIME = 6.0
CHAIN_SLACK = 1e-12

STATE_PREP_ROW = "# queries to U_phi and U_psi"
AB_ROW = "# queries to U_A and U_B"
CD_ROW = "# queries to U_C and U_D"
GATES_ROW = "# additional primitive gates"
MAIN_ROW = "main bound c L/eps x t mu"
LOWER_ROW = "lower bound L t/eps"
RATIO_ROW = "ratio upper/lower"
COST_COLUMNS = ("regime", "quantity", "Linear systems approach", "LCHS approach")


class Regime(Enum):
    """Whether the generators depend on time."""

    STATIC = "static"
    TIMEDEP = "timedep"


@dataclass(frozen=True)
class CostReport:
    """Formula values of one route in one regime.

    Attributes
    ----------
    route, regime : Route, Regime
        Which table column and which table.
    queries_state_prep, queries_AB, queries_CD, gates_extra : float
        The four rows of the cost table.
    functionals : LFunctionals
        The 𝓛-functionals plugged into the formulas.
    lower_bound : float
        𝓛_A·t/ε with 𝓛_A = ∫₀ᵗe^{2sξ_A}ds.
    ratio_upper_to_lower : float
        queries_AB / lower_bound.
    main_bound : float
        c𝓛/ε × tμ.
    """

    route: Route
    regime: Regime
    queries_state_prep: float
    queries_AB: float
    queries_CD: float
    gates_extra: float
    functionals: LFunctionals
    lower_bound: float
    ratio_upper_to_lower: float
    main_bound: float
    label: str = field(default=MODEL_LABEL)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "route": self.route.value,
            "regime": self.regime.value,
            "label": self.label,
            "queriesStatePrep": self.queries_state_prep,
            "queriesAB": self.queries_AB,
            "queriesCD": self.queries_CD,
            "gatesExtra": self.gates_extra,
            "functionals": self.functionals.to_dict(),
            "lowerBound": self.lower_bound,
            "ratioUpperToLower": self.ratio_upper_to_lower,
            "mainBound": self.main_bound,
        }


def lg(x: float) -> float:
    """max(1, log₂ x)."""
    return max(1.0, math.log2(x)) if x > 0 else 1.0


def _regime_of(p: Problem) -> Regime:
    return Regime.TIMEDEP if isinstance(p, TimeDepProblem) else Regime.STATIC


def _check_cost_domain(p: Problem) -> None:
    if not p.t > 0:
        raise DomainError(f"Cost formulas need t > 0, got {p.t}", field="t")
    if not p.c > 0:
        raise DomainError(f"Cost formulas need c > 0, got {p.c}", field="c")


def main_bound(p: Problem, functionals: LFunctionals) -> float:
    """c𝓛/ε × tμ."""
    return p.c * functionals.Lcal / p.eps * max(1.0, p.t * p.mu)


def lower_bound(p: Problem) -> float:
    """𝓛_A·t/ε with 𝓛_A the closed-form ∫₀ᵗe^{2sξ_A}ds."""
    return exp_integral(p.xiA, p.t) * p.t / p.eps


def _linear_systems_rows(p: Problem, f: LFunctionals, regime: Regime) -> Tuple[float, float, float, float]:
    x = p.c * f.Ltilde2 / p.eps
    condition = max(1.0, p.mu * f.Ltilde1)
    state_prep = x * condition * lg(x)
    d_scale = p.d if p.d > 0 else p.c
    queries_ab = state_prep * lg(p.mu * p.t * p.c**2 * f.Ltilde2 * f.Ltilde1 / (d_scale * p.eps))
    gates = x * condition * lg(p.t * p.mu) ** 2
    return state_prep, queries_ab, x, gates


def _lchs_rows(p: Problem, f: LFunctionals, regime: Regime) -> Tuple[float, float, float, float]:
    y = p.c * f.L2 / p.eps
    tmu = max(1.0, p.t * p.mu)
    queries_ab = y * tmu * lg(y)
    if regime is Regime.TIMEDEP:
        queries_ab *= lg(p.t * p.mu * p.c * f.L2 * lg(y) / p.eps)
    gates = y * (p.t * p.mu + p.mu * p.d / p.c)
    return y, queries_ab, y, gates


def evaluate_costs(
    p: Problem,
    route: Route,
    regime: Optional[Regime] = None,
    functionals: Optional[LFunctionals] = None,
) -> CostReport:
    """Plug the instance into the cost formulas of ``route``.

    Parameters
    ----------
    p : MatrixODEProblem or TimeDepProblem
        Instance with t > 0 and c > 0.
    route : Route
        Linear-systems or LCHS column.
    regime : Regime, optional
        Must match the problem type; inferred when omitted.
    functionals : LFunctionals, optional
        Precomputed functionals; computed from ``p`` when omitted.

    Returns
    -------
    CostReport
        Model values of the four table rows with the main and lower bounds.

    Raises
    ------
    DomainError
        If t or c is zero or the regime does not match the problem.

    Examples
    --------
    >>> from sylverse.core.problem import make_lower_bound_instance
    >>> p = make_lower_bound_instance(2, math.pi / 16, 6.0)
    >>> report = evaluate_costs(p, Route.LCHS)
    >>> report.queries_CD == report.queries_state_prep
    True
    """
    _check_cost_domain(p)
    inferred = _regime_of(p)
    if regime is not None and regime is not inferred:
        raise DomainError(f"Regime {regime.value} does not match a {inferred.value} problem", field="regime")
    if functionals is None:
        if isinstance(p, TimeDepProblem):
            functionals = compute_timedep_functionals(p)
        else:
            functionals = compute_L_functionals(p)
    rows = _lchs_rows if route is Route.LCHS else _linear_systems_rows
    state_prep, queries_ab, queries_cd, gates = rows(p, functionals, inferred)
    lower = lower_bound(p)
    logger.debug("evaluate_costs route=%s regime=%s AB=%.6g", route.value, inferred.value, queries_ab)
    return CostReport(
        route=route,
        regime=inferred,
        queries_state_prep=state_prep,
        queries_AB=queries_ab,
        queries_CD=queries_cd,
        gates_extra=gates,
        functionals=functionals,
        lower_bound=lower,
        ratio_upper_to_lower=queries_ab / lower,
        main_bound=main_bound(p, functionals),
    )


def evaluate_both_routes(p: Problem) -> List[CostReport]:
    """Reports for both routes sharing one functional evaluation."""
    _check_cost_domain(p)
    functionals = compute_timedep_functionals(p) if isinstance(p, TimeDepProblem) else compute_L_functionals(p)
    return [evaluate_costs(p, route, functionals=functionals) for route in (Route.LINEAR_SYSTEMS, Route.LCHS)]


def preconditioned_queries(p: MatrixODEProblem) -> float:
    """Linear-systems query count after shift preconditioning.

    ((c/μ)(tμ + μd/c)·max{1, e^{tξ_A}}·max{1, e^{tξ_B}}/ε)·(tμ + μd/c)
    """
    _check_cost_domain(p)
    span = p.t * p.mu + p.mu * p.d / p.c
    growth = max(1.0, math.exp(p.t * p.xiA)) * max(1.0, math.exp(p.t * p.xiB))
    return (p.c / p.mu) * span * growth / p.eps * span


def fermi_dirac_encoding_cost(beta: float, a: float, eps_prime: float) -> float:
    """βa·log(βa/ε′) queries to encode X_β to accuracy ε′.

    Examples
    --------
    >>> fermi_dirac_encoding_cost(2.0, 4.0, 1.0)
    24.0
    """
    if beta < 0 or a < 0 or not eps_prime > 0:
        raise DomainError("Encoding cost needs beta, a >= 0 and eps_prime > 0", field="eps_prime")
    scale = beta * a
    return scale * lg(scale / eps_prime)


@dataclass(frozen=True)
class GapCheck:
    """Separating-gap arithmetic at one (t, δ)."""

    t: float
    delta: float
    L_delta: float
    L_2delta: float
    eps_delta: float
    gap: float
    holds: bool
    feasible: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "delta": self.delta,
            "L_delta": self.L_delta,
            "L_2delta": self.L_2delta,
            "eps_delta": self.eps_delta,
            "gap": self.gap,
            "holds": self.holds,
            "feasible": self.feasible,
        }


@dataclass(frozen=True)
class CaseChain:
    """One chain of inequalities gap ≥ v₁ ≥ … ≥ 2ε_δ with its side conditions."""

    case: str
    applies: bool
    steps: List[Tuple[str, float]]
    side_conditions: Dict[str, bool]

    @property
    def holds(self) -> bool:
        values = [value for _, value in self.steps]
        ordered = all(later <= earlier + CHAIN_SLACK * abs(earlier) for earlier, later in zip(values, values[1:]))
        return ordered and all(self.side_conditions.values())


def _check_gap_domain(t: float, delta: float) -> None:
    if not 0.0 < delta <= MAX_GAP_DELTA:
        raise DomainError(f"delta must lie in (0, pi/16], got {delta}", field="delta")
    if not t >= MIN_GAP_TIME:
        raise DomainError(f"t must be at least 6, got {t}", field="t")


def _gap_terms(t: float, delta: float) -> Tuple[float, float, float]:
    L_delta = lower_bound_entry(delta, t)
    L_2delta = lower_bound_entry(2.0 * delta, t)
    return L_delta, L_2delta, 3.0 * L_delta**2 * math.sin(delta) / 100.0


def gap_case_bounds(t: float, delta: float) -> Dict[str, CaseChain]:
    """Evaluate both case chains of the separating-gap argument.

    The short-time chain applies when t·sin 2δ ≤ 1 and the long-time chain when
    t·sin 2δ ≥ 1; at t = 1/sin 2δ both apply.

    Raises
    ------
    DomainError
        If δ ∉ (0, π/16] or t < 6.
    """
    _check_gap_domain(t, delta)
    L_delta, L_2delta, eps_delta = _gap_terms(t, delta)
    s1, s2 = math.sin(delta), math.sin(2.0 * delta)
    gap = L_delta - L_2delta
    x = t * s2
    short = CaseChain(
        case="short",
        applies=x <= 1.0 + CHAIN_SLACK,
        steps=[
            ("gap", gap),
            ("t^2 (sin 2d/e - sin d/2)", t**2 * (s2 / math.e - s1 / 2.0)),
            ("L_d^2 (sin 2d/e - sin d/2)", L_delta**2 * (s2 / math.e - s1 / 2.0)),
            ("L_d^2 sin d/5", L_delta**2 * s1 / 5.0),
            ("2 eps_d", 2.0 * eps_delta),
        ],
        side_conditions={"t >= L_d": t >= L_delta},
    )
    long = CaseChain(
        case="long",
        applies=x >= 1.0 - CHAIN_SLACK,
        steps=[
            ("gap", gap),
            ("L_2d/5", L_2delta / 5.0),
            ("0.31/5 L_d^2 sin d", 0.31 / 5.0 * L_delta**2 * s1),
            ("2 eps_d", 2.0 * eps_delta),
        ],
        side_conditions={"L_2d <= 0.82 L_d": L_2delta <= 0.82 * L_delta},
    )
    return {"short": short, "long": long}


def verify_lower_bound_gap(t_grid: Sequence[float], delta_grid: Sequence[float]) -> List[GapCheck]:
    """Check 𝓛_δ − 𝓛_{2δ} ≥ 2ε_δ with ε_δ = 3𝓛_δ² sin δ/100 on a grid.

    𝓛_θ = (1 − e^{−t sin θ})/sin θ. Feasibility ε_δ ≤ t/100 is reported
    alongside.

    Raises
    ------
    DomainError
        If any δ ∉ (0, π/16] or t < 6.

    Examples
    --------
    >>> [check.holds for check in verify_lower_bound_gap([6.0], [math.pi / 16])]
    [True]
    """
    checks = []
    for t in t_grid:
        for delta in delta_grid:
            _check_gap_domain(t, delta)
            L_delta, L_2delta, eps_delta = _gap_terms(t, delta)
            gap = L_delta - L_2delta
            checks.append(
                GapCheck(
                    t=float(t),
                    delta=float(delta),
                    L_delta=L_delta,
                    L_2delta=L_2delta,
                    eps_delta=eps_delta,
                    gap=gap,
                    holds=gap >= 2.0 * eps_delta,
                    feasible=eps_delta <= t / 100.0,
                )
            )
    return checks


def cost_rows(reports: Sequence[CostReport]) -> List[Dict[str, Any]]:
    """Cost-table rows, one per quantity and regime, with a column per route.

    The time-dependent table carries no gate row.
    """
    by_regime: Dict[Regime, Dict[Route, CostReport]] = {}
    for report in reports:
        by_regime.setdefault(report.regime, {})[report.route] = report
    columns = {Route.LINEAR_SYSTEMS: COST_COLUMNS[2], Route.LCHS: COST_COLUMNS[3]}
    rows = []
    for regime in (Regime.STATIC, Regime.TIMEDEP):
        if regime not in by_regime:
            continue
        quantities = [
            (STATE_PREP_ROW, "queries_state_prep"),
            (AB_ROW, "queries_AB"),
            (CD_ROW, "queries_CD"),
        ]
        if regime is Regime.STATIC:
            quantities.append((GATES_ROW, "gates_extra"))
        quantities += [(MAIN_ROW, "main_bound"), (LOWER_ROW, "lower_bound"), (RATIO_ROW, "ratio_upper_to_lower")]
        for label, attribute in quantities:
            row: Dict[str, Any] = {"regime": regime.value, "quantity": label}
            for route, column in columns.items():
                report = by_regime[regime].get(route)
                row[column] = "" if report is None else getattr(report, attribute)
            rows.append(row)
    return rows
