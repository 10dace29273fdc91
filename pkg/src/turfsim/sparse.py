"""CSR matrices on a shared, immutable sparsity pattern.

All system matrices of one simulation (mass, transport, artificial
diffusion) live on the same structurally symmetric pattern with explicit
diagonal, so pattern bookkeeping (transpose permutation, per-entry row
indices) is computed once.  Factorizations and products are delegated to
scipy; the contract layer on top (residual-checked solves, singularity
threshold, matrix predicates) is ours.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SINGULARITY_RTOL = 1e-14
DIRECT_SIZE_LIMIT = 50_000


class SingularMatrixError(RuntimeError):
    pass


class SolveFailure(RuntimeError):
    pass


class SparsityPattern:
    """Immutable CSR skeleton shared by many matrices.

    Column indices are sorted within each row; every diagonal position is
    present and the pattern is structurally symmetric.
    """

    def __init__(self, indptr: np.ndarray, indices: np.ndarray, n: int):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.n = int(n)
        if self.indptr.shape != (self.n + 1,) or self.indptr[0] != 0:
            raise ValueError("malformed row pointer array")
        if self.indptr[-1] != self.indices.shape[0]:
            raise ValueError("row pointers do not cover the index array")
        if self.indices.size > 1:
            increasing = self.indices[1:] > self.indices[:-1]
            row_break = np.zeros(self.indices.size - 1, dtype=bool)
            inner = self.indptr[1:-1]
            row_break[inner[(inner > 0) & (inner < self.indices.size)] - 1] = True
            if np.any(~increasing & ~row_break):
                raise ValueError("column indices must be strictly increasing within each row")
        # Per-entry row index, used by edge-based kernels.
        self.entry_row = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        self.entry_col = self.indices
        # Entry position of (j, i) for each entry (i, j); requires structural
        # symmetry, which this construction also verifies.
        struct = sp.csr_matrix(
            (np.arange(self.nnz, dtype=np.int64), self.indices, self.indptr),
            shape=(self.n, self.n),
        )
        transposed = struct.T.tocsr()
        transposed.sort_indices()
        if not (
            np.array_equal(transposed.indptr, self.indptr)
            and np.array_equal(transposed.indices, self.indices)
        ):
            raise ValueError("pattern is not structurally symmetric")
        self.transpose_entry = transposed.data.copy()
        self.diagonal_entries = np.flatnonzero(self.entry_row == self.entry_col)
        if self.diagonal_entries.shape[0] != self.n:
            raise ValueError("every diagonal position must be stored")
        # Entries strictly above the diagonal; each unordered pair appears once.
        self.upper_entries = np.flatnonzero(self.entry_row < self.entry_col)

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    @classmethod
    def from_adjacency(cls, neighbor_lists) -> "SparsityPattern":
        """Pattern with row i holding i itself plus its neighbors."""
        n = len(neighbor_lists)
        rows = [np.asarray(sorted(set(nbrs) | {i}), dtype=np.int64) for i, nbrs in enumerate(neighbor_lists)]
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([r.size for r in rows])
        return cls(indptr, np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64), n)

    @classmethod
    def dense(cls, n: int) -> "SparsityPattern":
        indptr = np.arange(n + 1, dtype=np.int64) * n
        indices = np.tile(np.arange(n, dtype=np.int64), n)
        return cls(indptr, indices, n)

    def entry_of(self, i: int, j: int) -> int:
        """Flat entry index of (i, j); raises if the position is not stored."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        k = lo + np.searchsorted(self.indices[lo:hi], j)
        if k >= hi or self.indices[k] != j:
            raise KeyError(f"position ({i}, {j}) not in pattern")
        return int(k)


class SparseMatrix:
    """Values over a shared SparsityPattern."""

    def __init__(self, pattern: SparsityPattern, values: np.ndarray | None = None):
        self.pattern = pattern
        if values is None:
            values = np.zeros(pattern.nnz)
        values = np.asarray(values, dtype=float)
        if values.shape != (pattern.nnz,):
            raise ValueError("value array does not match pattern")
        self.values = values

    @classmethod
    def from_dense(cls, arr, pattern: SparsityPattern | None = None) -> "SparseMatrix":
        arr = np.asarray(arr, dtype=float)
        n = arr.shape[0]
        if arr.shape != (n, n):
            raise ValueError("square arrays only")
        if pattern is None:
            pattern = SparsityPattern.dense(n)
        vals = arr[pattern.entry_row, pattern.entry_col]
        if np.count_nonzero(arr) > np.count_nonzero(vals):
            raise ValueError("dense array has entries outside the pattern")
        return cls(pattern, vals)

    def copy(self) -> "SparseMatrix":
        return SparseMatrix(self.pattern, self.values.copy())

    def to_csr(self) -> sp.csr_matrix:
        """scipy view sharing this matrix's buffers."""
        return sp.csr_matrix(
            (self.values, self.pattern.indices, self.pattern.indptr),
            shape=(self.pattern.n, self.pattern.n),
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.pattern.n, self.pattern.n))
        out[self.pattern.entry_row, self.pattern.entry_col] = self.values
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_csr() @ x

    def diagonal(self) -> np.ndarray:
        return self.values[self.pattern.diagonal_entries]

    def row_sum(self, i: int) -> float:
        lo, hi = self.pattern.indptr[i], self.pattern.indptr[i + 1]
        return float(self.values[lo:hi].sum())

    def row_sums(self) -> np.ndarray:
        return np.add.reduceat(self.values, self.pattern.indptr[:-1])

    def column_sums(self) -> np.ndarray:
        return np.bincount(self.pattern.entry_col, weights=self.values, minlength=self.pattern.n)

    def scaled_add(self, alpha: float, other: "SparseMatrix") -> "SparseMatrix":
        if other.pattern is not self.pattern:
            raise ValueError("matrices must share a pattern")
        return SparseMatrix(self.pattern, self.values + alpha * other.values)


def is_z_matrix(a: SparseMatrix, tol: float = 1e-14) -> bool:
    """All stored off-diagonal entries <= tol."""
    off = np.ones(a.pattern.nnz, dtype=bool)
    off[a.pattern.diagonal_entries] = False
    return bool(np.all(a.values[off] <= tol))


def is_diagonally_dominant(a: SparseMatrix, strict: bool = False) -> bool:
    """Row-wise |a_ii| >= sum of off-diagonal magnitudes (> if strict)."""
    absvals = np.abs(a.values.copy())
    diag = absvals[a.pattern.diagonal_entries].copy()
    absvals[a.pattern.diagonal_entries] = 0.0
    off = np.add.reduceat(absvals, a.pattern.indptr[:-1])
    return bool(np.all(diag > off) if strict else np.all(diag >= off))


def solve(
    a: SparseMatrix,
    b: np.ndarray,
    tol: float = 1e-12,
    method: str = "auto",
    max_iter: int = 2000,
) -> np.ndarray:
    """Solve a x = b with a residual guarantee.

    method "direct" uses sparse LU; "iterative" uses BiCGStab with Jacobi
    preconditioning; "auto" picks direct up to 50k unknowns.  The returned x
    satisfies ||a x - b||_2 <= tol * max(||b||_2, 1e-300), else SolveFailure.
    """
    b = np.asarray(b, dtype=float)
    n = a.pattern.n
    if b.shape != (n,):
        raise ValueError("right-hand side length mismatch")
    if not np.all(np.isfinite(a.values)):
        raise ValueError("matrix contains non-finite entries")
    if method == "auto":
        method = "direct" if n <= DIRECT_SIZE_LIMIT else "iterative"

    scale = np.max(np.abs(a.values)) if a.pattern.nnz else 0.0
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")

    if method == "direct":
        try:
            # Every matrix here has a structurally symmetric stencil, where
            # minimum degree on A + A^T beats the default column ordering.
            lu = spla.splu(a.to_csr().tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        pivots = np.abs(lu.U.diagonal())
        if np.min(pivots) < SINGULARITY_RTOL * scale:
            raise SingularMatrixError(
                f"pivot {np.min(pivots):.3e} below threshold {SINGULARITY_RTOL * scale:.3e}"
            )
        x = lu.solve(b)
    elif method == "iterative":
        diag = a.diagonal()
        if np.any(np.abs(diag) < SINGULARITY_RTOL * scale):
            raise SingularMatrixError("vanishing diagonal defeats Jacobi preconditioning")
        precond = spla.LinearOperator((n, n), matvec=lambda r: r / diag)
        x, info = spla.bicgstab(a.to_csr(), b, rtol=min(tol, 1e-10), atol=0.0, maxiter=max_iter, M=precond)
        if info != 0:
            raise SolveFailure(f"BiCGStab did not converge (info={info})")
    else:
        raise ValueError(f"unknown solve method {method!r}")

    residual = np.linalg.norm(a.matvec(x) - b)
    if not residual <= tol * max(np.linalg.norm(b), 1e-300):
        raise SolveFailure(f"residual {residual:.3e} exceeds tolerance")
    return x


class DirectFactor:
    """Reusable LU factorization for solves against a fixed matrix."""

    def __init__(self, a: SparseMatrix):
        self.matrix = a
        scale = np.max(np.abs(a.values))
        if scale == 0.0:
            raise SingularMatrixError("zero matrix")
        try:
            self._lu = spla.splu(a.to_csr().tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        pivots = np.abs(self._lu.U.diagonal())
        if np.min(pivots) < SINGULARITY_RTOL * scale:
            raise SingularMatrixError("factorization pivot below threshold")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))


def dump_coordinate(a: SparseMatrix, path) -> None:
    """Write stored entries as 'row col value' lines (debugging aid)."""
    with open(path, "w") as fh:
        fh.write(f"{a.pattern.n} {a.pattern.n} {a.pattern.nnz}\n")
        for e in range(a.pattern.nnz):
            fh.write(f"{a.pattern.entry_row[e]} {a.pattern.entry_col[e]} {a.values[e]:.17g}\n")
