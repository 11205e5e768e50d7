"""Unit tests for the overlap module.

This module contains unit tests for the clock block operator, the I_C
integrals and the entry estimate along both history routes.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from sylverse.core.errors import DimensionError, PreconditionError
from sylverse.core.histsolve import HistoryState, default_steps
from sylverse.core.matcore import spectral_norm
from sylverse.core.oracle import solve_quadrature
from sylverse.core.overlap import (
    ClockBlockOperator,
    Route,
    build_clock_operator,
    entry_report,
    error_budget,
    estimate_entry,
    exact_IC,
    exact_overlap,
    exponential_history,
    ic_truncation_bound,
    taylor_IC,
    taylor_ic_lambda,
)
from sylverse.core.problem import (
    LogNormSign,
    Side,
    lower_bound_entry,
    make_lower_bound_instance,
    make_random_instance,
)


class TestIntegrals:
    """Test suite for the step integral I_C."""

    def test_taylor_ic_within_truncation_bound(self) -> None:
        """Test ‖I_C − Ĩ_C‖ ≤ 2e²ch/(K+1)!."""
        p = make_random_instance(3, seed=31)
        h = 1.0 / p.mu
        for K in (2, 4, 8):
            error = np.linalg.norm(exact_IC(p, h) - taylor_IC(p, h, K), 2)
            assert error <= ic_truncation_bound(p.c, h, K)

    def test_taylor_ic_rejects_long_step(self) -> None:
        """Test the step-size precondition of Ĩ_C."""
        p = make_random_instance(3, seed=31)
        with pytest.raises(PreconditionError, match="increase M"):
            taylor_IC(p, 2.0 / p.mu, 4)

    def test_lambda_bound(self) -> None:
        """Test λ_{Ĩ_C} ≤ c·h·e² when ah, bh ≤ 1."""
        assert taylor_ic_lambda(1.0, 1.0, 2.0, 1.0, 30) <= 2.0 * math.e**2
        assert taylor_ic_lambda(0.0, 0.0, 1.0, 0.5, 3) == pytest.approx(0.5)


class TestOverlapIdentity:
    """Test suite for the overlap identity."""

    @pytest.mark.parametrize("sign", list(LogNormSign))
    def test_exact_overlap_equals_entry(self, sign: LogNormSign) -> None:
        """Test that exact histories reproduce the entry for any M and R."""
        p = make_random_instance(3, seed=41, log_norm_sign=sign, t=1.5)
        reference = solve_quadrature(p, 1e-12).entry
        for M, R in ((2, 1), (4, 3)):
            assert abs(exact_overlap(p, M, R) - reference) < 1e-9

    @pytest.mark.parametrize("route", list(Route))
    @pytest.mark.parametrize("t", [0.5, 2.0, 8.0])
    @pytest.mark.parametrize("sign", list(LogNormSign))
    @pytest.mark.parametrize("n", [2, 4, 8, 16])
    def test_estimate_meets_target(self, n: int, sign: LogNormSign, t: float, route: Route) -> None:
        """Test that the default parameters reach the target error."""
        p = make_random_instance(n, seed=1000 + 10 * n + int(2 * t), log_norm_sign=sign, t=t, eps=1e-7)
        reference = solve_quadrature(p, 1e-12).entry
        assert abs(estimate_entry(p, route=route) - reference) <= max(1e-7, p.eps)

    @pytest.mark.parametrize("route", list(Route))
    def test_estimate_is_linear_in_inhomogeneity(self, route: Route) -> None:
        """Test superposition of the estimate in C and D."""
        p = make_random_instance(3, seed=44, t=1.5)
        rng = np.random.default_rng(45)
        C2 = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        D2 = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        alpha, beta = 0.7 - 0.2j, -1.3 + 0.5j
        C3, D3 = alpha * p.C + beta * C2, alpha * p.D + beta * D2
        q = replace(p, C=C2, c=spectral_norm(C2), D=D2, d=spectral_norm(D2))
        combined = replace(p, C=C3, c=spectral_norm(C3), D=D3, d=spectral_norm(D3))
        M, R = default_steps(p)
        K = 12
        expected = alpha * estimate_entry(p, M, R, K, route) + beta * estimate_entry(q, M, R, K, route)
        assert abs(estimate_entry(combined, M, R, K, route) - expected) < 1e-10 * (1.0 + abs(expected))

    @pytest.mark.parametrize("K", [2, 4, 6])
    def test_taylor_ic_swap_within_bound(self, K: int) -> None:
        """Test that replacing I_C by its truncation moves the overlap by at most the weighted bound."""
        p = make_random_instance(3, seed=46, log_norm_sign=LogNormSign.POSITIVE, t=2.0)
        M, R = default_steps(p)
        left = exponential_history(p, Side.A, M, R)
        right = exponential_history(p, Side.B, M, R)
        swapped = build_clock_operator(p, M, R, K).contract(left, right)
        predicted = ic_truncation_bound(p.c, p.t / M, K) * math.sqrt(left.norm_sq * right.norm_sq)
        assert abs(swapped - exact_overlap(p, M, R)) <= predicted + 1e-10

    def test_lower_bound_instance(self) -> None:
        """Test the closed-form entry of the diagonal instance."""
        theta = math.pi / 12
        p = make_lower_bound_instance(2, theta, 6.0)
        assert estimate_entry(p).real == pytest.approx(lower_bound_entry(theta, 6.0), abs=1e-8)

    def test_contract_rejects_mismatched_history(self) -> None:
        """Test that clock sizes must agree."""
        operator = ClockBlockOperator(2, 1, np.eye(1), np.eye(1), 1.0)
        state = HistoryState.from_blocks(1, 1, np.ones((2, 1)))
        with pytest.raises(DimensionError, match="operator has"):
            operator.contract(state, state)


class TestEntryReport:
    """Test suite for entry_report and error_budget functions."""

    def test_report_fields(self) -> None:
        """Test the keys and defaults of the result JSON."""
        p = make_random_instance(2, seed=43)
        report = entry_report(p, route=Route.LCHS)
        M, R = default_steps(p)
        assert (report["M"], report["R"]) == (M, R)
        assert report["route"] == "lchs"
        assert len(report["entry"]) == 2
        assert report["lambdaTaylorIC"] <= p.c * p.t / M * math.e**2 * (1 + 1e-12)

    def test_budget_splits_into_thirds(self) -> None:
        """Test the equal split of ε."""
        p = make_random_instance(2, seed=43)
        budget = error_budget(p, *default_steps(p))
        assert budget["overlap"] == pytest.approx(p.eps / 3)
        assert budget["history"] <= p.eps / 3
        assert budget["truncation"] <= p.eps / 3
