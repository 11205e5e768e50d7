"""Unit tests for the costmodel module.

This module contains unit tests for the cost-table formulas of both routes,
the preconditioned and encoding costs, and the separating-gap arithmetic.
"""

import dataclasses
import math

import numpy as np
import pytest

from sylverse.core.costmodel import (
    COST_COLUMNS,
    GATES_ROW,
    LOWER_ROW,
    RATIO_ROW,
    Regime,
    cost_rows,
    evaluate_both_routes,
    evaluate_costs,
    fermi_dirac_encoding_cost,
    gap_case_bounds,
    lg,
    preconditioned_queries,
    verify_lower_bound_gap,
)
from sylverse.core.errors import DomainError
from sylverse.core.lchsmodel import compute_L_functionals, exp_integral
from sylverse.core.overlap import Route
from sylverse.core.problem import LogNormSign, from_static, make_lower_bound_instance, make_random_instance


class TestFormulas:
    """Test suite for evaluate_costs function."""

    def test_lg_floor(self) -> None:
        """Test that lg never drops below one."""
        assert lg(8.0) == 3.0
        assert lg(0.5) == 1.0
        assert lg(0.0) == 1.0

    def test_lchs_rows(self) -> None:
        """Test the LCHS column on the diagonal instance."""
        p = make_lower_bound_instance(2, math.pi / 16, 6.0)
        report = evaluate_costs(p, Route.LCHS)
        y = report.functionals.L2 / p.eps
        assert report.queries_state_prep == pytest.approx(y)
        assert report.queries_CD == report.queries_state_prep
        assert report.queries_AB == pytest.approx(y * 6.0 * math.log2(y))
        assert report.lower_bound == pytest.approx(exp_integral(-math.sin(math.pi / 16), 6.0) * 6.0 / p.eps)
        assert report.ratio_upper_to_lower == pytest.approx(report.queries_AB / report.lower_bound)
        assert report.main_bound == pytest.approx(report.functionals.Lcal / p.eps * 6.0)
        assert report.regime is Regime.STATIC

    def test_linear_systems_state_prep_dominates_lchs(self) -> None:
        """Test that LCHS needs fewer state preparations for unitary dynamics."""
        p = make_random_instance(3, seed=71, log_norm_sign=LogNormSign.ZERO, t=2.0)
        linear, lchs = evaluate_both_routes(p)
        assert linear.route is Route.LINEAR_SYSTEMS
        assert lchs.queries_state_prep <= linear.queries_state_prep

    def test_ratio_grows_sublinearly(self) -> None:
        """Test the growth of upper/lower between t = 6 and t = 600."""
        ratios = []
        for t in (6.0, 600.0):
            p = make_lower_bound_instance(2, math.pi / 16, t)
            ratios.append(evaluate_costs(p, Route.LCHS).ratio_upper_to_lower)
        assert 5.0 < ratios[1] / ratios[0] < 20.0

    def test_rejects_zero_time(self) -> None:
        """Test that t = 0 is outside the cost domain."""
        p = make_random_instance(2, seed=72, t=0.0)
        with pytest.raises(DomainError, match="t > 0"):
            evaluate_costs(p, Route.LCHS)

    def test_rejects_zero_inhomogeneity(self) -> None:
        """Test that c = 0 is outside the cost domain."""
        p = make_lower_bound_instance(2, math.pi / 16, 6.0)
        homogeneous = dataclasses.replace(p, C=np.zeros((2, 2)), c=0.0)
        with pytest.raises(DomainError, match="c > 0"):
            evaluate_both_routes(homogeneous)

    def test_rejects_mismatched_regime(self) -> None:
        """Test that an explicit regime must match the problem type."""
        p = make_lower_bound_instance(2, math.pi / 16, 6.0)
        with pytest.raises(DomainError, match="does not match"):
            evaluate_costs(p, Route.LCHS, regime=Regime.TIMEDEP)

    def test_timedep_lchs_pays_extra_log(self) -> None:
        """Test that the time-dependent LCHS query count carries an extra log factor."""
        static = make_random_instance(2, seed=73, t=2.0)
        functionals = compute_L_functionals(static)
        fixed = evaluate_costs(static, Route.LCHS, functionals=functionals)
        moving = evaluate_costs(from_static(static), Route.LCHS, functionals=functionals)
        assert moving.regime is Regime.TIMEDEP
        assert moving.queries_AB >= fixed.queries_AB
        assert moving.queries_state_prep == pytest.approx(fixed.queries_state_prep)

    def test_report_dict(self) -> None:
        """Test the camelCase keys of a report."""
        report = evaluate_costs(make_lower_bound_instance(2, math.pi / 16, 6.0), Route.LINEAR_SYSTEMS)
        data = report.to_dict()
        assert data["route"] == "ls"
        assert data["label"] == "model values"
        assert data["queriesAB"] == report.queries_AB


class TestCostRows:
    """Test suite for cost_rows function."""

    def test_static_and_timedep_tables(self) -> None:
        """Test that only the static table has a gate row."""
        static = make_random_instance(2, seed=74, t=2.0)
        functionals = compute_L_functionals(static)
        reports = [
            evaluate_costs(problem, route, functionals=functionals)
            for problem in (static, from_static(static))
            for route in Route
        ]
        rows = cost_rows(reports)
        assert len(rows) == 13
        assert all(tuple(row) == COST_COLUMNS for row in rows)
        static_rows = [row["quantity"] for row in rows if row["regime"] == "static"]
        timedep_rows = [row["quantity"] for row in rows if row["regime"] == "timedep"]
        assert GATES_ROW in static_rows
        assert GATES_ROW not in timedep_rows
        assert timedep_rows[-2:] == [LOWER_ROW, RATIO_ROW]

    def test_missing_route_left_blank(self) -> None:
        """Test that a route without a report leaves its column empty."""
        report = evaluate_costs(make_lower_bound_instance(2, math.pi / 16, 6.0), Route.LCHS)
        rows = cost_rows([report])
        assert len(rows) == 7
        assert all(row[COST_COLUMNS[2]] == "" for row in rows)


class TestAuxiliaryCosts:
    """Test suite for preconditioned_queries and fermi_dirac_encoding_cost functions."""

    def test_preconditioned_queries(self) -> None:
        """Test the shifted query count on the diagonal instance."""
        p = make_lower_bound_instance(2, math.pi / 16, 6.0)
        assert preconditioned_queries(p) == pytest.approx(36.0 / p.eps)

    def test_preconditioned_growth(self) -> None:
        """Test that growing dynamics pay e^{tξ} per side."""
        p = make_random_instance(2, seed=75, log_norm_sign=LogNormSign.POSITIVE, t=3.0)
        span = p.t * p.mu + p.mu * p.d / p.c
        growth = math.exp(p.t * p.xiA) * math.exp(p.t * p.xiB)
        assert preconditioned_queries(p) == pytest.approx(p.c / p.mu * span**2 * growth / p.eps)

    def test_encoding_cost(self) -> None:
        """Test βa·lg(βa/ε′)."""
        assert fermi_dirac_encoding_cost(2.0, 4.0, 1.0) == 24.0
        assert fermi_dirac_encoding_cost(0.0, 4.0, 1.0) == 0.0

    @pytest.mark.parametrize(("beta", "a", "eps_prime"), [(-1.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
    def test_encoding_domain(self, beta: float, a: float, eps_prime: float) -> None:
        """Test the encoding cost arguments."""
        with pytest.raises(DomainError, match="Encoding cost"):
            fermi_dirac_encoding_cost(beta, a, eps_prime)


class TestSeparatingGap:
    """Test suite for gap_case_bounds and verify_lower_bound_gap functions."""

    def test_long_time_chain(self) -> None:
        """Test the long-time chain at the largest angle."""
        chains = gap_case_bounds(6.0, math.pi / 16)
        assert chains["long"].applies
        assert not chains["short"].applies
        assert chains["long"].holds

    def test_short_time_chain(self) -> None:
        """Test the short-time chain at a small angle."""
        chains = gap_case_bounds(6.0, 1e-4)
        assert chains["short"].applies
        assert not chains["long"].applies
        assert chains["short"].holds

    def test_both_chains_at_the_boundary(self) -> None:
        """Test t·sin 2δ = 1, where both cases apply."""
        delta = math.pi / 64
        chains = gap_case_bounds(1.0 / math.sin(2.0 * delta), delta)
        assert chains["short"].applies and chains["long"].applies
        assert chains["short"].holds and chains["long"].holds

    def test_grid(self) -> None:
        """Test that the gap separates the two angles across a grid."""
        checks = verify_lower_bound_gap([6.0, 60.0, 600.0], [1e-3, math.pi / 32, math.pi / 16])
        assert len(checks) == 9
        assert all(check.holds for check in checks)
        assert all(check.feasible for check in checks if check.t == 60.0)
        assert not checks[2].feasible
        assert checks[0].to_dict()["t"] == 6.0

    @pytest.mark.parametrize(("t", "delta", "message"), [(6.0, 0.3, "delta"), (6.0, 0.0, "delta"), (5.0, 0.1, "t must")])
    def test_domain(self, t: float, delta: float, message: str) -> None:
        """Test the (t, δ) domain."""
        with pytest.raises(DomainError, match=message):
            gap_case_bounds(t, delta)
        with pytest.raises(DomainError, match=message):
            verify_lower_bound_gap([t], [delta])
