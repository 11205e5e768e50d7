"""Unit tests for the histsolve module.

This module contains unit tests for the history-state block systems, their
inverse structure, condition certificates and log-norm preconditioning.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

from sylverse.core.errors import DimensionError, PreconditionError, ValidationError
from sylverse.core.histsolve import (
    HistoryState,
    Ordering,
    assemble,
    block_norm_bound,
    build_system,
    certify_condition,
    closed_form_block,
    default_order,
    default_steps,
    history_norm_bound,
    invert_blocks,
    precondition,
    preconditioned_steps,
    rescale_history,
    sequence_error,
    solve_history,
    taylor_stepper,
)
from sylverse.core.matcore import expm
from sylverse.core.problem import LogNormSign, Side, make_lower_bound_instance, make_random_instance
from sylverse.core.settings import SolverSettings


class TestDefaults:
    """Test suite for default_steps and default_order functions."""

    def test_default_steps(self) -> None:
        """Test M = ⌈tμ⌉ and R = ⌈μd/c⌉."""
        p = make_random_instance(3, seed=1, t=2.5)
        M, R = default_steps(p)
        assert M == math.ceil(2.5 * p.mu)
        assert R == max(1, math.ceil(p.mu * p.d / p.c))

    def test_default_order_meets_target(self) -> None:
        """Test that the chosen K makes both remainders small enough."""
        p = make_random_instance(3, seed=1)
        M, R = default_steps(p)
        K = default_order(p, M, R)
        target = p.eps / (10 * (M + R))
        h = p.t / M
        assert math.e / math.factorial(K + 1) <= target
        assert 2 * math.e**2 * p.c * h / math.factorial(K + 1) <= target
        assert K == 0 or max(math.e, 2 * math.e**2 * p.c * h) / math.factorial(K) > target


class TestBlockSystem:
    """Test suite for build_system and solve_history functions."""

    def test_history_blocks_follow_powers(self) -> None:
        """Test blocks V^m x on the clock steps and V^M x on the padding."""
        p = make_random_instance(3, seed=2, t=2.0)
        M, K = default_steps(p)[0], 12
        R = 2
        system = build_system(p, Side.A, M, R, K)
        history = solve_history(system, p.phi)
        V = taylor_stepper(p.A, p.t / M, K)
        expected = p.phi.copy()
        for m in range(M + 1):
            assert np.allclose(history.blocks[m], expected, atol=1e-11)
            expected = V @ expected
        assert np.allclose(history.blocks[M + 1], history.blocks[M])
        assert history.norm_sq == pytest.approx(float(np.sum(np.abs(history.blocks) ** 2)))

    def test_history_approximates_exponential(self) -> None:
        """Test that the final block is close to e^{tY}x."""
        p = make_random_instance(3, seed=2, t=2.0)
        M, R = default_steps(p)
        history = solve_history(build_system(p, Side.B, M, R, 14), p.psi)
        assert np.allclose(history.blocks[-1], expm(p.t * p.B) @ p.psi, atol=1e-10)

    def test_forward_recursion_matches_dense(self) -> None:
        """Test the recursion used above the dense cap."""
        p = make_random_instance(2, seed=4)
        M, R = default_steps(p)
        dense = solve_history(build_system(p, Side.A, M, R, 10), p.phi)
        with patch("sylverse.core.histsolve.DEFAULT_SETTINGS", SolverSettings(dense_cap=1)):
            system = build_system(p, Side.A, M, R, 10)
            recursive = solve_history(system, p.phi)
        assert system.assembled is None
        assert np.allclose(dense.blocks, recursive.blocks, atol=1e-13)

    def test_step_rule_violation(self) -> None:
        """Test that a too coarse clock is rejected with a remedy."""
        p = make_random_instance(2, seed=4, t=5.0)
        with pytest.raises(PreconditionError, match="use M >="):
            build_system(p, Side.A, 1, 1, 8)

    @pytest.mark.parametrize(("M", "R"), [(0, 1), (1, 0)])
    def test_sizes_must_be_positive(self, M: int, R: int) -> None:
        """Test the lower limits on M and R."""
        with pytest.raises(ValidationError):
            build_system(make_random_instance(2, seed=4), Side.A, M, R, 4)

    def test_wrong_initial_vector(self) -> None:
        """Test that the initial vector must match N."""
        p = make_random_instance(2, seed=4)
        system = build_system(p, Side.A, *default_steps(p), 4)
        with pytest.raises(DimensionError, match="Initial vector"):
            solve_history(system, np.ones(3))

    def test_negative_order(self) -> None:
        """Test that K must be nonnegative."""
        with pytest.raises(ValidationError, match="nonnegative"):
            taylor_stepper(np.eye(2), 0.1, -1)


class TestInverseStructure:
    """Test suite for the block structure of the inverse."""

    def test_inverse_blocks_have_closed_form(self) -> None:
        """Test every block of the inverse against its product formula."""
        p = make_random_instance(2, seed=6, t=2.0)
        M = default_steps(p)[0]
        system = build_system(p, Side.A, M, 2, 10)
        blocks = invert_blocks(system)
        for m in range(M + 2):
            for n in range(M + 2):
                assert np.allclose(blocks[m, n], closed_form_block(system, m, n), atol=1e-12)

    def test_assemble_layout(self) -> None:
        """Test the identity diagonal and negated subdiagonal."""
        V = 2.0 * np.eye(1)
        matrix = assemble(1, 2, [V])
        assert matrix.real.tolist() == [[1.0, 0.0, 0.0], [-2.0, 1.0, 0.0], [0.0, -1.0, 1.0]]

    def test_block_norm_bound_dominates(self) -> None:
        """Test ‖𝓑‖ ≤ ‖B‖ for a random block grid."""
        rng = np.random.default_rng(0)
        grid = rng.standard_normal((3, 3, 2, 2))
        full, compressed = block_norm_bound(grid)
        assert full <= compressed + 1e-12

    def test_block_norm_bound_rank(self) -> None:
        """Test that the grid must be four-dimensional."""
        with pytest.raises(DimensionError, match="4 dimensions"):
            block_norm_bound(np.zeros((2, 2)))


class TestCertificates:
    """Test suite for certify_condition and related bounds."""

    @pytest.mark.parametrize("sign", [LogNormSign.NEGATIVE, LogNormSign.ZERO])
    def test_certificate_passes(self, sign: LogNormSign) -> None:
        """Test that measured norms respect the analytic bounds."""
        p = make_random_instance(3, seed=12, log_norm_sign=sign, t=2.0)
        M, R = default_steps(p)
        certificate = certify_condition(build_system(p, Side.A, M, R, 14), p, Side.A)
        assert certificate.passed
        assert certificate.norm_A <= 1.0 + math.e
        assert certificate.kappa == pytest.approx(certificate.norm_A * certificate.norm_A_inv)
        assert certificate.to_dict()["pass"] is True

    def test_certificate_json_fields(self) -> None:
        """Test the key set of the certificate JSON."""
        p = make_random_instance(2, seed=15, t=1.0)
        M, R = default_steps(p)
        data = certify_condition(build_system(p, Side.B, M, R, 10), p, Side.B).to_dict()
        assert set(data) == {
            "M",
            "R",
            "K",
            "normA",
            "normAinv",
            "kappa",
            "rowSumBound",
            "colSumBound",
            "paperBound",
            "pass",
        }
        assert data["paperBound"] >= data["normAinv"]

    def test_history_norm_bound_covers_normalization(self) -> None:
        """Test 𝓝 ≤ (e²M/t)∫‖e^{sY}x‖² + R‖e^{tY}x‖²."""
        p = make_random_instance(3, seed=13, log_norm_sign=LogNormSign.POSITIVE, t=3.0)
        M, R = default_steps(p)
        history = solve_history(build_system(p, Side.A, M, R, 14), p.phi)
        assert history.norm_sq <= history_norm_bound(p, Side.A, M, R)

    def test_sequence_error_within_bound(self) -> None:
        """Test ‖V^m − e^{hmY}‖ against its bound for a low order."""
        p = make_random_instance(3, seed=14, t=2.0)
        M, _ = default_steps(p)
        assert sequence_error(p, Side.B, M, 3).holds


class TestPreconditioning:
    """Test suite for log-norm preconditioning."""

    def test_rescaled_history_matches_unshifted(self) -> None:
        """Test that 𝓓 maps the shifted history back to the original one."""
        p = make_lower_bound_instance(2, math.pi / 6, 2.0)
        M = preconditioned_steps(p, Side.A)
        shifted, weights = precondition(p, Side.A, M, 1, 16)
        original = solve_history(build_system(p, Side.A, M, 1, 16), p.phi)
        restored = rescale_history(shifted, weights)
        assert np.allclose(restored.blocks, original.blocks, atol=1e-12)

    def test_shifted_normalization_is_smaller_for_contractions(self) -> None:
        """Test that removing the decay raises the normalization."""
        p = make_lower_bound_instance(2, math.pi / 6, 8.0)
        M = preconditioned_steps(p, Side.A)
        shifted, _ = precondition(p, Side.A, M, 1, 16)
        original = solve_history(build_system(p, Side.A, M, 1, 16), p.phi)
        assert shifted.norm_sq > original.norm_sq

    def test_rescale_weight_count(self) -> None:
        """Test that the weight vector must cover every block."""
        state = HistoryState.from_blocks(1, 1, np.ones((2, 1)))
        with pytest.raises(DimensionError, match="weights"):
            rescale_history(state, [1.0])

    def test_reversed_ordering(self) -> None:
        """Test that reversing flips the blocks and the ordering flag."""
        state = HistoryState.from_blocks(2, 1, np.arange(3.0).reshape(3, 1))
        flipped = state.reversed()
        assert flipped.ordering is Ordering.REVERSED
        assert flipped.blocks[:, 0].real.tolist() == [2.0, 1.0, 0.0]
        assert flipped.norm_sq == state.norm_sq
