"""Unit tests for the krylov module.

This module contains unit tests for the sparse operator wrapper, the Arnoldi
process, the projected and restarted Krylov entry estimates, the lattice
instances and the benchmark rows.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from sylverse.core.errors import DimensionError, DomainError, ValidationError
from sylverse.core.krylov import (
    BENCHMARK_COLUMNS,
    OperationCounter,
    SparseMatrix,
    build_krylov,
    dense_entry,
    krylov_entry,
    lattice_center,
    lattice_generator,
    lattice_hamiltonian,
    lattice_side,
    restarted_entry,
    run_benchmark,
    taylor_advance,
)
from sylverse.core.matcore import expm, log_norm, spectral_norm


def chain(n: int, gamma: float = 0.1) -> SparseMatrix:
    return lattice_generator(1, n, 1.0, gamma)


def identity(n: int) -> SparseMatrix:
    return SparseMatrix(sp.identity(n, format="csr"))


class TestSparseMatrix:
    """Test suite for SparseMatrix class."""

    def test_canonical_form(self) -> None:
        """Test that duplicates are summed and explicit zeros dropped."""
        coo = sp.coo_matrix(([1.0, 2.0, 0.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
        op = SparseMatrix(coo)
        assert op.nnz == 1
        assert op.row(0) == [(1, 3.0 + 0.0j)]
        assert op.row(1) == []

    def test_input_is_copied(self) -> None:
        """Test that later changes to the input do not leak in."""
        source = sp.csr_matrix(np.eye(2))
        op = SparseMatrix(source)
        source.data[:] = 5.0
        assert np.array_equal(op.toarray(), np.eye(2))

    def test_rejects_rectangular(self) -> None:
        """Test that only square operators are accepted."""
        with pytest.raises(DimensionError, match="square"):
            SparseMatrix(sp.csr_matrix((2, 3)))

    def test_rejects_non_finite(self) -> None:
        """Test that NaN entries are rejected."""
        with pytest.raises(ValidationError, match="non-finite"):
            SparseMatrix(sp.csr_matrix(np.array([[np.nan]])))

    def test_norm_bound_dominates_spectral_norm(self) -> None:
        """Test sqrt(‖M‖₁‖M‖∞) ≥ ‖M‖₂."""
        op = lattice_generator(2, 4, 1.0, 0.3)
        assert op.norm_bound >= spectral_norm(op.toarray()) - 1e-12
        assert op.sparsity == 5

    def test_matvec_counts_work(self) -> None:
        """Test that a product records the operator's nonzeros."""
        op = chain(5)
        counter = OperationCounter()
        op.matvec(np.ones(5), counter)
        assert (counter.matvecs, counter.matvec_work) == (1, op.nnz)


class TestArnoldi:
    """Test suite for build_krylov function."""

    def test_orthonormal_basis_and_projection(self) -> None:
        """Test V†V = I and H = V†·Op·V."""
        op = chain(20)
        basis = build_krylov(op, np.arange(20.0) + 1.0, 6)
        V = basis.columns
        assert np.allclose(V.conj().T @ V, np.eye(6), atol=1e-12)
        assert np.allclose(basis.projected, V.conj().T @ op.toarray() @ V, atol=1e-12)
        assert basis.start_norm == pytest.approx(float(np.linalg.norm(np.arange(20.0) + 1.0)))

    def test_operation_counts(self) -> None:
        """Test m products and m(m+2) inner products per basis."""
        counter = OperationCounter()
        build_krylov(chain(30), np.eye(30)[15], 7, counter)
        assert counter.matvecs == 7
        assert counter.inner_products == 7 * 9
        assert counter.memory == 7 * 30
        assert counter.mem_highwater == 8 * 30

    def test_breakdown_on_invariant_subspace(self) -> None:
        """Test that an eigenvector start stops after one step."""
        counter = OperationCounter()
        basis = build_krylov(identity(4), np.eye(4)[0], 3, counter)
        assert basis.m == 1
        assert basis.projected.shape == (1, 1)
        assert counter.memory == 4

    def test_evolve_matches_exponential(self) -> None:
        """Test V·e^{sH}e₁‖v‖ ≈ e^{s·Op}v for a full basis."""
        op = chain(8)
        v = np.eye(8)[3]
        basis = build_krylov(op, v, 8)
        approx = basis.columns @ basis.evolve(0.7)
        assert np.allclose(approx, expm(0.7 * op.toarray()) @ v, atol=1e-10)

    @pytest.mark.parametrize("m", [0, 9])
    def test_dimension_range(self, m: int) -> None:
        """Test that m must lie in [1, n]."""
        with pytest.raises(DomainError, match="Krylov dimension"):
            build_krylov(chain(8), np.ones(8), m)

    def test_zero_start(self) -> None:
        """Test that a zero start vector is rejected."""
        with pytest.raises(DomainError, match="zero"):
            build_krylov(chain(4), np.zeros(4), 2)

    def test_start_length(self) -> None:
        """Test that the start vector must have length n."""
        with pytest.raises(DimensionError, match="length 4"):
            build_krylov(chain(4), np.ones(3), 2)


class TestKrylovEntry:
    """Test suite for krylov_entry and restarted_entry functions."""

    def test_matches_dense_oracle(self) -> None:
        """Test the projected estimate against the dense quadrature."""
        n, center = 64, 32
        op, eye = chain(n), identity(n)
        value = krylov_entry(op, op, eye, eye, center, center, 1.0, 16)
        assert abs(value - dense_entry(op, op, eye, eye, center, center, 1.0)) < 1e-8

    def test_operation_counts(self) -> None:
        """Test the tallies of one projected estimate with a D-term."""
        n, m = 64, 10
        op, eye = chain(n), identity(n)
        counter = OperationCounter()
        krylov_entry(op, op, eye, eye, 32, 32, 1.0, m, Rquad=11, counter=counter)
        assert counter.matvecs == 4 * m
        assert counter.inner_products == 2 * m * (m + 2) + 2 * m * m
        assert counter.small_expms == 2 * 11 + 2
        assert counter.mem_highwater == (2 * m + 1) * n
        assert counter.memory == 0

    def test_without_initial_condition(self) -> None:
        """Test that D = None drops the final-time term."""
        n = 16
        op, eye = chain(n), identity(n)
        zero = SparseMatrix(sp.csr_matrix((n, n)))
        assert krylov_entry(op, op, eye, None, 8, 8, 1.0, 8) == pytest.approx(
            krylov_entry(op, op, eye, zero, 8, 8, 1.0, 8), abs=1e-15
        )

    def test_index_range(self) -> None:
        """Test that entry indices must lie in [0, n)."""
        op = chain(8)
        with pytest.raises(DomainError, match="Index j"):
            krylov_entry(op, op, identity(8), None, 8, 0, 1.0, 4)

    def test_operand_dimensions(self) -> None:
        """Test that all operators must share one dimension."""
        with pytest.raises(DimensionError, match="Operator C"):
            krylov_entry(chain(8), chain(8), identity(4), None, 0, 0, 1.0, 4)

    def test_single_segment_equals_projected(self) -> None:
        """Test that one restart segment reproduces the projected estimate."""
        n = 32
        op, eye = chain(n), identity(n)
        restarted = restarted_entry(op, op, eye, 16, 16, 1.0, 10, 2.0)
        projected = krylov_entry(op, op, eye, None, 16, 16, 1.0, 10)
        assert restarted == pytest.approx(projected, abs=1e-14)

    def test_restarted_accuracy_and_memory(self) -> None:
        """Test several segments against the oracle and the memory high-water mark."""
        n, m = 48, 10
        op, eye = chain(n), identity(n)
        counter = OperationCounter()
        value = restarted_entry(op, op, eye, 24, 24, 2.0, m, 0.5, D=eye, counter=counter)
        assert abs(value - dense_entry(op, op, eye, eye, 24, 24, 2.0)) < 1e-7
        assert counter.mem_highwater == (2 * m + 3) * n
        assert counter.memory == 0

    def test_restart_length_must_be_positive(self) -> None:
        """Test that r must be positive."""
        op = chain(4)
        with pytest.raises(DomainError, match="Segment length"):
            restarted_entry(op, op, identity(4), 0, 0, 1.0, 2, 0.0)

    def test_taylor_advance(self) -> None:
        """Test the seed advance against the dense exponential."""
        op = chain(10)
        v = np.eye(10)[4]
        assert np.allclose(taylor_advance(op, v, 1.3), expm(1.3 * op.toarray()) @ v, atol=1e-12)

    def test_work_is_linear_in_dimension(self) -> None:
        """Test that doubling n roughly doubles the matrix-vector work."""
        work = []
        for n in (64, 128):
            op, eye = chain(n), identity(n)
            counter = OperationCounter()
            krylov_entry(op, op, eye, eye, n // 2, n // 2, 1.0, 12, counter=counter)
            work.append(counter.matvec_work)
        assert 1.9 < work[1] / work[0] < 2.1


class TestLattice:
    """Test suite for the lattice instances."""

    def test_hamiltonian_is_hermitian(self) -> None:
        """Test the structure of a 2-D lattice Hamiltonian."""
        H = lattice_hamiltonian(2, 3).toarray()
        assert np.allclose(H, H.conj().T)
        assert np.count_nonzero(H) == 24

    def test_single_site(self) -> None:
        """Test the degenerate one-site lattice."""
        assert lattice_hamiltonian(3, 1).toarray().tolist() == [[0j]]

    def test_generator_log_norm(self) -> None:
        """Test that −iH − γI has log-norm −γ."""
        assert log_norm(lattice_generator(2, 4, 1.0, 0.25).toarray()) == pytest.approx(-0.25)

    def test_negative_dissipation(self) -> None:
        """Test that γ must be nonnegative."""
        with pytest.raises(DomainError, match="Dissipation"):
            lattice_generator(1, 4, 1.0, -0.1)

    def test_side_and_center(self) -> None:
        """Test the side length and central index."""
        assert lattice_side(2, 64) == 8
        assert lattice_side(3, 27) == 3
        assert lattice_center(1, 5) == 2
        assert lattice_center(2, 4) == 10

    def test_side_of_non_cube(self) -> None:
        """Test that n must be a perfect power."""
        with pytest.raises(DomainError, match="cubic lattice"):
            lattice_side(3, 10)

    def test_dimension_range(self) -> None:
        """Test that only 1, 2 and 3 dimensions are supported."""
        with pytest.raises(DomainError, match="Lattice dimension"):
            lattice_hamiltonian(4, 2)


class TestBenchmark:
    """Test suite for run_benchmark function."""

    def test_rows(self) -> None:
        """Test the rows of a benchmark with restarts."""
        rows = run_benchmark(1, 32, 12, t=1.0, restart_r=0.5)
        assert [row["method"] for row in rows] == ["dense", "krylov", "restarted"]
        assert all(tuple(row) == BENCHMARK_COLUMNS for row in rows)
        assert rows[0]["abs_err"] == 0.0
        assert rows[2]["L"] == 2
        assert max(row["abs_err"] for row in rows) < 1e-6

    def test_counter_dict(self) -> None:
        """Test the serialized counter keys."""
        assert set(OperationCounter().to_dict()) == {
            "matvecs",
            "matvec_work",
            "inner_products",
            "small_expms",
            "mem_highwater",
        }
