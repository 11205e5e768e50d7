"""Krylov baselines for single entries of X(t).

This module contains the classical comparison methods: projected-Krylov
estimation of ⟨j|X(t)|k⟩ from two Arnoldi bases, the restarted variant that
splits [0, t] into short segments and keeps only O(m·n) vectors alive, the
nearest-neighbour lattice generators used as benchmark instances and the
operation counter behind the benchmark CSV.

Operators are ``scipy.sparse`` CSR matrices wrapped in ``SparseMatrix``. Memory is
counted in complex entries of length-n work vectors; the m×m projected matrices
are not counted.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, DomainError, ValidationError
from .matcore import expm, gauss_legendre, log_norm, round_up_sig, spectral_norm
from .oracle import solve_quadrature
from .problem import MatrixODEProblem, basis_vector

logger = logging.getLogger(__name__)

BREAKDOWN_TOL = 1e-12
SEED_ORDER = 16
EXTRA_NODES = 8
BENCHMARK_COLUMNS = (
    "method",
    "n",
    "D_lattice",
    "m",
    "L",
    "wall_ns",
    "matvecs",
    "inner_products",
    "mem_highwater",
    "abs_err",
)


@dataclass
class OperationCounter:
    """Work and memory tallies of one Krylov run.

    Attributes
    ----------
    matvecs : int
        Sparse matrix-vector products.
    matvec_work : int
        Nonzeros touched by those products.
    inner_products : int
        Length-n inner products, norms included.
    small_expms : int
        Exponentials of projected m×m matrices.
    memory : int
        Complex entries currently held in length-n work vectors.
    mem_highwater : int
        Largest value ``memory`` has reached.
    """

    matvecs: int = 0
    matvec_work: int = 0
    inner_products: int = 0
    small_expms: int = 0
    memory: int = 0
    mem_highwater: int = 0

    def record_matvec(self, nnz: int) -> None:
        self.matvecs += 1
        self.matvec_work += nnz

    def record_inner(self, count: int = 1) -> None:
        self.inner_products += count

    def record_expm(self, count: int = 1) -> None:
        self.small_expms += count

    def allocate(self, entries: int) -> None:
        self.memory += entries
        self.mem_highwater = max(self.mem_highwater, self.memory)

    def release(self, entries: int) -> None:
        self.memory -= entries

    def to_dict(self) -> Dict[str, int]:
        return {
            "matvecs": self.matvecs,
            "matvec_work": self.matvec_work,
            "inner_products": self.inner_products,
            "small_expms": self.small_expms,
            "mem_highwater": self.mem_highwater,
        }


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Square sparse operator in CSR form with sorted, unique column indices.

    Parameters
    ----------
    matrix : array_like or scipy.sparse matrix
        Square operator; converted to complex CSR.

    Raises
    ------
    DimensionError
        If the operator is not square.
    ValidationError
        If an entry is NaN or infinite.
    """

    matrix: sp.csr_matrix

    def __post_init__(self) -> None:
        csr = sp.csr_matrix(self.matrix, dtype=np.complex128, copy=True)
        if csr.shape[0] != csr.shape[1] or csr.shape[0] == 0:
            raise DimensionError(f"Sparse operator must be square, got shape {csr.shape}", field="matrix")
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        if not np.all(np.isfinite(csr.data)):
            raise ValidationError("Sparse operator has non-finite entries", field="matrix")
        object.__setattr__(self, "matrix", csr)

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def sparsity(self) -> int:
        """Maximum number of nonzeros in a row."""
        return int(np.diff(self.matrix.indptr).max())

    @property
    def norm_bound(self) -> float:
        """sqrt(‖M‖₁‖M‖∞), an upper bound on the spectral norm."""
        magnitudes = abs(self.matrix)
        col_sums = float(np.asarray(magnitudes.sum(axis=0)).max())
        row_sums = float(np.asarray(magnitudes.sum(axis=1)).max())
        return math.sqrt(col_sums * row_sums)

    def row(self, i: int) -> List[Tuple[int, complex]]:
        """(column, value) pairs of row i in increasing column order."""
        lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return [(int(col), complex(val)) for col, val in zip(self.matrix.indices[lo:hi], self.matrix.data[lo:hi])]

    def matvec(self, vector: np.ndarray, counter: Optional[OperationCounter] = None) -> np.ndarray:
        if counter is not None:
            counter.record_matvec(self.nnz)
        return np.asarray(self.matrix @ vector, dtype=np.complex128)

    def toarray(self) -> np.ndarray:
        return np.asarray(self.matrix.toarray(), dtype=np.complex128)


@dataclass(frozen=True, eq=False)
class KrylovBasis:
    """Orthonormal basis of span{v, Op v, …, Op^{m−1} v} with the compressed operator.

    Attributes
    ----------
    m : int
        Achieved dimension; smaller than requested after a breakdown.
    columns : numpy.ndarray
        n×m matrix V with orthonormal columns, V[:, 0] = v/‖v‖.
    projected : numpy.ndarray
        m×m upper Hessenberg matrix V†·Op·V.
    start_norm : float
        ‖v‖.
    """

    m: int
    columns: np.ndarray
    projected: np.ndarray
    start_norm: float

    def evolve(self, s: float, counter: Optional[OperationCounter] = None) -> np.ndarray:
        """Coordinates of e^{s·Op}v in the basis, ‖v‖·e^{s·H}e₁."""
        if counter is not None:
            counter.record_expm()
        return np.asarray(expm(s * self.projected)[:, 0] * self.start_norm)


def build_krylov(
    op: SparseMatrix, start: object, m: int, counter: Optional[OperationCounter] = None
) -> KrylovBasis:
    """Arnoldi process with modified Gram–Schmidt and one reorthogonalization pass.

    Parameters
    ----------
    op : SparseMatrix
        Operator.
    start : array_like
        Nonzero start vector.
    m : int
        Requested dimension, 1 ≤ m ≤ n.
    counter : OperationCounter, optional
        Receives m matrix-vector products and m(m+2) inner products when no
        breakdown occurs.

    Returns
    -------
    KrylovBasis
        The basis; its dimension is smaller than ``m`` when the residual of
        some step falls below 1e-12 (an invariant subspace was found).

    Raises
    ------
    DomainError
        If ``start`` is zero or ``m`` is outside [1, n].
    """
    tally = OperationCounter() if counter is None else counter
    v = np.asarray(start, dtype=np.complex128)
    n = op.n
    if v.shape != (n,):
        raise DimensionError(f"Start vector must have length {n}, got shape {v.shape}", field="start")
    if not 1 <= m <= n:
        raise DomainError(f"Krylov dimension must lie in [1, {n}], got {m}", field="m")
    start_norm = float(np.linalg.norm(v))
    tally.record_inner()
    if start_norm == 0.0:
        raise DomainError("Krylov start vector is zero", field="start")

    tally.allocate((m + 1) * n)
    V = np.zeros((n, m), dtype=np.complex128)
    H = np.zeros((m, m), dtype=np.complex128)
    V[:, 0] = v / start_norm
    k = m
    for j in range(m):
        w = op.matvec(V[:, j], tally)
        for _ in range(2):
            for i in range(j + 1):
                coefficient = np.vdot(V[:, i], w)
                w = w - coefficient * V[:, i]
                H[i, j] += coefficient
            tally.record_inner(j + 1)
        if j + 1 == m:
            break
        beta = float(np.linalg.norm(w))
        tally.record_inner()
        if beta < BREAKDOWN_TOL:
            k = j + 1
            logger.warning("Krylov breakdown at dimension %d of %d requested", k, m)
            break
        H[j + 1, j] = beta
        V[:, j + 1] = w / beta
    tally.release((m + 1 - k) * n)
    logger.debug("build_krylov: dimension %d, %d inner products", k, tally.inner_products)
    return KrylovBasis(k, V[:, :k].copy(), H[:k, :k].copy(), start_norm)


def _project(
    op: SparseMatrix, left: KrylovBasis, right: KrylovBasis, counter: OperationCounter
) -> np.ndarray:
    """V_left†·Op·V_right one column at a time."""
    n = op.n
    counter.allocate(n)
    compressed = np.empty((left.m, right.m), dtype=np.complex128)
    for col in range(right.m):
        w = op.matvec(right.columns[:, col], counter)
        compressed[:, col] = left.columns.conj().T @ w
        counter.record_inner(left.m)
    counter.release(n)
    return compressed


def _index(n: int, index: int, name: str) -> np.ndarray:
    if not 0 <= index < n:
        raise DomainError(f"Index {name} must lie in [0, {n}), got {index}", field=name)
    return basis_vector(n, index)


def _check_operands(pA: SparseMatrix, pB: SparseMatrix, C: SparseMatrix, D: Optional[SparseMatrix]) -> int:
    n = pA.n
    for name, op in (("pB", pB), ("C", C), ("D", D)):
        if op is not None and op.n != n:
            raise DimensionError(f"Operator {name} has dimension {op.n}, expected {n}", field=name)
    return n


def default_nodes(length: float, mu: float) -> int:
    """⌈length·μ⌉ + 8 Gauss–Legendre nodes."""
    return math.ceil(length * mu) + EXTRA_NODES


def _segment_integral(
    left: KrylovBasis,
    right: KrylovBasis,
    compressed: np.ndarray,
    length: float,
    nodes: int,
    counter: OperationCounter,
) -> complex:
    """∫₀^length (e^{sÃ}e₁)†·C̃·(e^{sB̃}e₁) ds on ``nodes`` Gauss–Legendre points."""
    if length == 0.0:
        return 0.0j
    x, w = gauss_legendre(nodes)
    total = 0.0j
    for node, weight in zip(0.5 * length * (x + 1.0), 0.5 * length * w):
        total += weight * np.vdot(left.evolve(float(node), counter), compressed @ right.evolve(float(node), counter))
    return complex(total)


def krylov_entry(
    pA: SparseMatrix,
    pB: SparseMatrix,
    C: SparseMatrix,
    D: Optional[SparseMatrix],
    j: int,
    k: int,
    t: float,
    m: int,
    Rquad: Optional[int] = None,
    counter: Optional[OperationCounter] = None,
) -> complex:
    """Estimate ⟨j|X(t)|k⟩ from Krylov bases of A at |j⟩ and B at |k⟩.

    ⟨j|e^{sA†} is replaced by (V_A e^{sÃ}e₁)† and e^{sB}|k⟩ by V_B e^{sB̃}e₁, the
    integral is evaluated with ``Rquad`` Gauss–Legendre nodes and the D-term at
    s = t.

    Parameters
    ----------
    pA, pB, C : SparseMatrix
        Generators and inhomogeneity.
    D : SparseMatrix or None
        Initial condition; None drops the D-term.
    j, k : int
        Requested entry.
    t : float
        Evolution time, t ≥ 0.
    m : int
        Krylov dimension for both bases.
    Rquad : int, optional
        Quadrature nodes; defaults to ⌈t·max(a, b)⌉ + 8 with a, b the norm bounds.
    counter : OperationCounter, optional
        Receives the operation tallies.

    Returns
    -------
    complex
        The estimated entry.
    """
    if not t >= 0.0:
        raise DomainError(f"Evolution time must be nonnegative, got {t}", field="t")
    n = _check_operands(pA, pB, C, D)
    tally = OperationCounter() if counter is None else counter
    nodes = default_nodes(t, max(pA.norm_bound, pB.norm_bound)) if Rquad is None else Rquad
    if nodes < 1:
        raise DomainError(f"Quadrature needs at least one node, got {nodes}", field="Rquad")
    left = build_krylov(pA, _index(n, j, "j"), m, tally)
    right = build_krylov(pB, _index(n, k, "k"), m, tally)
    entry = _segment_integral(left, right, _project(C, left, right, tally), t, nodes, tally)
    if D is not None:
        entry += complex(np.vdot(left.evolve(t, tally), _project(D, left, right, tally) @ right.evolve(t, tally)))
    tally.release((left.m + right.m) * n)
    logger.debug("krylov_entry m=%d nodes=%d counts=%s", m, nodes, tally.to_dict())
    return entry


def taylor_advance(
    op: SparseMatrix, vector: np.ndarray, h: float, counter: Optional[OperationCounter] = None
) -> np.ndarray:
    """e^{h·Op}v by order-16 Taylor series in substeps of norm at most one."""
    tally = OperationCounter() if counter is None else counter
    substeps = max(1, math.ceil(h * op.norm_bound))
    dt = h / substeps
    tally.allocate(2 * op.n)
    result = np.asarray(vector, dtype=np.complex128)
    for _ in range(substeps):
        term = result
        total = result.copy()
        for order in range(1, SEED_ORDER + 1):
            term = op.matvec(term, tally) * (dt / order)
            total += term
        result = total
    tally.release(2 * op.n)
    return result


def restarted_entry(
    pA: SparseMatrix,
    pB: SparseMatrix,
    C: SparseMatrix,
    j: int,
    k: int,
    t: float,
    mPrime: int,
    r: float,
    D: Optional[SparseMatrix] = None,
    counter: Optional[OperationCounter] = None,
) -> complex:
    """Estimate ⟨j|X(t)|k⟩ by splitting [0, t] into L = ⌈t/r⌉ segments.

    Segment l integrates from seeds e^{s_l A}|j⟩ and e^{s_l B}|k⟩ with fresh
    Krylov bases of dimension ``mPrime`` and ⌈r_l·μ⌉ + 8 nodes; the bases are
    freed before the seeds are advanced by ``taylor_advance``. The D-term, when
    given, uses the final seeds. Length-n work vectors are counted as they are
    allocated; the high-water mark is max(2·mPrime + 3, 4)·n.

    Raises
    ------
    DomainError
        If ``r`` is not positive or ``t`` is negative.
    """
    if not r > 0.0:
        raise DomainError(f"Segment length must be positive, got {r}", field="r")
    if not t >= 0.0:
        raise DomainError(f"Evolution time must be nonnegative, got {t}", field="t")
    n = _check_operands(pA, pB, C, D)
    tally = OperationCounter() if counter is None else counter
    mu = max(pA.norm_bound, pB.norm_bound)
    segments = max(1, math.ceil(t / r - 1e-12))
    tally.allocate(2 * n)
    seed_a = _index(n, j, "j")
    seed_b = _index(n, k, "k")
    entry = 0.0j
    for segment in range(segments):
        start = segment * r
        length = r if segment + 1 < segments else t - start
        left = build_krylov(pA, seed_a, mPrime, tally)
        right = build_krylov(pB, seed_b, mPrime, tally)
        compressed = _project(C, left, right, tally)
        entry += _segment_integral(left, right, compressed, length, default_nodes(length, mu), tally)
        tally.release((left.m + right.m) * n)
        if segment + 1 < segments or D is not None:
            seed_a = taylor_advance(pA, seed_a, length, tally)
            seed_b = taylor_advance(pB, seed_b, length, tally)
    if D is not None:
        tally.allocate(n)
        entry += complex(np.vdot(seed_a, D.matvec(seed_b, tally)))
        tally.record_inner()
        tally.release(n)
    tally.release(2 * n)
    logger.debug("restarted_entry L=%d mPrime=%d counts=%s", segments, mPrime, tally.to_dict())
    return entry


def lattice_hamiltonian(dim: int, side: int, hopping: float = 1.0) -> SparseMatrix:
    """−hopping × adjacency of the open-boundary cubic lattice with ``side``^``dim`` sites.

    Examples
    --------
    >>> lattice_hamiltonian(1, 3).toarray().real.tolist()
    [[0.0, -1.0, 0.0], [-1.0, 0.0, -1.0], [0.0, -1.0, 0.0]]
    """
    if dim not in (1, 2, 3):
        raise DomainError(f"Lattice dimension must be 1, 2 or 3, got {dim}", field="dim")
    if side < 1:
        raise DomainError(f"Lattice side must be positive, got {side}", field="side")
    if side == 1:
        chain = sp.csr_matrix((1, 1))
    else:
        chain = sp.diags([np.ones(side - 1), np.ones(side - 1)], [-1, 1], shape=(side, side), format="csr")
    identity = sp.identity(side, format="csr")
    adjacency = sp.csr_matrix((side**dim, side**dim))
    for axis in range(dim):
        term = sp.identity(1, format="csr")
        for position in range(dim):
            term = sp.kron(term, chain if position == axis else identity, format="csr")
        adjacency = adjacency + term
    return SparseMatrix(-hopping * adjacency)


def lattice_generator(dim: int, side: int, hopping: float = 1.0, dissipation: float = 0.0) -> SparseMatrix:
    """−iH − γI with H from ``lattice_hamiltonian``; its log-norm is −γ."""
    if dissipation < 0.0:
        raise DomainError(f"Dissipation must be nonnegative, got {dissipation}", field="dissipation")
    hamiltonian = lattice_hamiltonian(dim, side, hopping).matrix
    return SparseMatrix(-1j * hamiltonian - dissipation * sp.identity(side**dim, format="csr"))


def lattice_side(dim: int, n: int) -> int:
    """Side length of a ``dim``-dimensional lattice with n sites."""
    side = round(n ** (1.0 / dim))
    if side < 1 or side**dim != n:
        raise DomainError(f"{n} sites do not form a {dim}-D cubic lattice", field="n")
    return side


def lattice_center(dim: int, side: int) -> int:
    """Flat index of the central site."""
    return sum((side // 2) * side**axis for axis in range(dim))


def dense_entry(
    pA: SparseMatrix,
    pB: SparseMatrix,
    C: SparseMatrix,
    D: Optional[SparseMatrix],
    j: int,
    k: int,
    t: float,
    tol: float = 1e-10,
) -> complex:
    """Reference ⟨j|X(t)|k⟩ from the dense quadrature oracle."""
    n = _check_operands(pA, pB, C, D)
    A, B, C_dense = pA.toarray(), pB.toarray(), C.toarray()
    D_dense = np.zeros((n, n), dtype=np.complex128) if D is None else D.toarray()
    problem = MatrixODEProblem(
        A=A,
        B=B,
        C=C_dense,
        D=D_dense,
        t=t,
        phi=_index(n, j, "j"),
        psi=_index(n, k, "k"),
        eps=tol,
        a=round_up_sig(spectral_norm(A)),
        b=round_up_sig(spectral_norm(B)),
        c=round_up_sig(spectral_norm(C_dense)),
        d=round_up_sig(spectral_norm(D_dense)),
        xiA=round_up_sig(log_norm(A)),
        xiB=round_up_sig(log_norm(B)),
    )
    return solve_quadrature(problem, tol).entry


@dataclass
class _Timed:
    counter: OperationCounter = field(default_factory=OperationCounter)
    wall_ns: int = 0


def run_benchmark(
    dim: int,
    n: int,
    m: int,
    t: float = 1.0,
    hopping: float = 1.0,
    gamma: float = 0.1,
    restart_r: Optional[float] = None,
    tol: float = 1e-10,
) -> List[Dict[str, Any]]:
    """Benchmark rows for the dense oracle, projected Krylov and, optionally, restarted Krylov.

    The instance is A = B = −iH − γI on the ``dim``-dimensional lattice with n
    sites, C = D = I and j = k the central site. Rows follow ``BENCHMARK_COLUMNS``.
    """
    side = lattice_side(dim, n)
    generator = lattice_generator(dim, side, hopping, gamma)
    identity = SparseMatrix(sp.identity(n, format="csr"))
    center = lattice_center(dim, side)

    def row(
        method: str, m_used: int, segments: int, timed: _Timed, value: complex, reference: complex
    ) -> Dict[str, Any]:
        return {
            "method": method,
            "n": n,
            "D_lattice": dim,
            "m": m_used,
            "L": segments,
            "wall_ns": timed.wall_ns,
            "matvecs": timed.counter.matvecs,
            "inner_products": timed.counter.inner_products,
            "mem_highwater": timed.counter.mem_highwater,
            "abs_err": abs(value - reference),
        }

    dense = _Timed()
    started = time.perf_counter_ns()
    reference = dense_entry(generator, generator, identity, identity, center, center, t, tol)
    dense.wall_ns = time.perf_counter_ns() - started
    rows = [row("dense", n, 1, dense, reference, reference)]

    projected = _Timed()
    started = time.perf_counter_ns()
    value = krylov_entry(generator, generator, identity, identity, center, center, t, m, counter=projected.counter)
    projected.wall_ns = time.perf_counter_ns() - started
    rows.append(row("krylov", m, 1, projected, value, reference))

    if restart_r is not None:
        restarted = _Timed()
        started = time.perf_counter_ns()
        value = restarted_entry(
            generator, generator, identity, center, center, t, m, restart_r, D=identity, counter=restarted.counter
        )
        restarted.wall_ns = time.perf_counter_ns() - started
        segments = max(1, math.ceil(t / restart_r - 1e-12))
        rows.append(row("restarted", m, segments, restarted, value, reference))
    logger.info("Benchmark dim=%d n=%d m=%d finished", dim, n, m)
    return rows
