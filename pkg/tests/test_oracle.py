"""Unit tests for the oracle module."""

import math

import numpy as np
import pytest

from sylverse.core.errors import DomainError
from sylverse.core.oracle import (
    SolutionMethod,
    entry_of,
    fixed_point_residual,
    solve_ode,
    solve_ode_trajectory,
    solve_quadrature,
)
from sylverse.core.problem import (
    LogNormSign,
    from_static,
    lower_bound_entry,
    make_lower_bound_instance,
    make_random_instance,
)


class TestSolveQuadrature:
    """Test suite for solve_quadrature function."""

    def test_lower_bound_closed_form(self) -> None:
        """Test the entry of the diagonal instance against its closed form."""
        theta = math.pi / 8
        sample = solve_quadrature(make_lower_bound_instance(2, theta, 3.0))
        assert sample.entry.real == pytest.approx(lower_bound_entry(theta, 3.0), abs=1e-9)
        assert sample.method is SolutionMethod.QUADRATURE

    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("sign", list(LogNormSign))
    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_agrees_with_ode(self, n: int, sign: LogNormSign, seed: int) -> None:
        """Test that both oracles agree on a batch of seeded instances."""
        p = make_random_instance(n, seed=200 + 10 * n + seed, log_norm_sign=sign, t=1.5)
        quad = solve_quadrature(p, 1e-11)
        ode = solve_ode(p, 1e-11)
        assert np.allclose(quad.X, ode.X, atol=1e-7)
        assert abs(quad.entry - ode.entry) < 1e-7
        assert abs(quad.entry - entry_of(quad.X, p.phi, p.psi)) < 1e-14

    def test_rejects_time_dependent_problem(self) -> None:
        """Test that the quadrature route needs a static problem."""
        with pytest.raises(DomainError, match="static"):
            solve_quadrature(from_static(make_random_instance(2, seed=1)))  # type: ignore[arg-type]

    def test_sample_json(self) -> None:
        """Test the serialized form of a sample."""
        sample = solve_quadrature(make_lower_bound_instance(2, math.pi / 2, 1.0))
        data = sample.to_dict(include_matrix=True)
        assert data["method"] == "quadrature"
        assert len(data["entry"]) == 2
        assert np.asarray(data["X"]).shape == (2, 2, 2)


class TestSolveOde:
    """Test suite for solve_ode and solve_ode_trajectory functions."""

    def test_constant_time_dependent_problem(self) -> None:
        """Test that a constant time-dependent problem matches the static one."""
        p = make_random_instance(3, seed=8)
        static = solve_ode(p)
        wrapped = solve_ode(from_static(p, grid_j=4))
        assert abs(static.entry - wrapped.entry) < 1e-9

    def test_trajectory_starts_at_initial_condition(self) -> None:
        """Test that t = 0 returns D."""
        p = make_random_instance(2, seed=3)
        samples = solve_ode_trajectory(p, [0.0, 0.5, 1.0])
        assert [s.t for s in samples] == [0.0, 0.5, 1.0]
        assert np.allclose(samples[0].X, p.D)

    def test_trajectory_rejects_descending_times(self) -> None:
        """Test that times must be ascending."""
        with pytest.raises(DomainError, match="ascending"):
            solve_ode_trajectory(make_random_instance(2, seed=3), [1.0, 0.5])

    def test_empty_trajectory(self) -> None:
        """Test that no times give no samples."""
        assert solve_ode_trajectory(make_random_instance(2, seed=3), []) == []


class TestFixedPointResidual:
    """Test suite for fixed_point_residual function."""

    def test_stationary_solution(self) -> None:
        """Test that the Sylvester solution has zero residual."""
        p = make_lower_bound_instance(2, math.pi / 2, 1.0)
        assert fixed_point_residual(p, np.eye(2)) == pytest.approx(0.0, abs=1e-15)
        assert fixed_point_residual(p, np.zeros((2, 2))) == pytest.approx(1.0)
