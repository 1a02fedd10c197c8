"""Sparse CSR matrices and small dense kernels.

Everything downstream (assembly, transfer, AMG, Krylov) works with
:class:`CsrMatrix`.  Kernels are deterministic: entries are stored with
strictly increasing column indices per row and summations run in that
order, so repeated runs on one machine are bit-identical.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse


class NotPositiveDefiniteError(ValueError):
    """Raised when a Cholesky pivot is not positive.

    ``pivot`` is the 0-based index of the offending leading minor.
    """

    def __init__(self, pivot: int):
        self.pivot = int(pivot)
        super().__init__(f"matrix is not positive definite (pivot {pivot})")


class CsrMatrix:
    """Immutable compressed-sparse-row matrix.

    Parameters
    ----------
    nrows, ncols : int
    row_ptr : (nrows+1,) int array, nondecreasing, row_ptr[0] == 0
    col_idx : (nnz,) int array, strictly increasing within each row
    values : (nnz,) float array

    Explicitly stored zeros are kept; the sparsity pattern is structural.
    """

    __slots__ = ("nrows", "ncols", "row_ptr", "col_idx", "values", "_scipy")

    def __init__(self, nrows, ncols, row_ptr, col_idx, values, check=True):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self._scipy = None
        if check:
            self._validate()
        for arr in (self.row_ptr, self.col_idx, self.values):
            arr.flags.writeable = False

    def _validate(self):
        if self.nrows < 0 or self.ncols < 0:
            raise ValueError("negative matrix dimension")
        if self.row_ptr.shape != (self.nrows + 1,):
            raise ValueError("row_ptr must have length nrows+1")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.col_idx):
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if len(self.col_idx) != len(self.values):
            raise ValueError("col_idx and values length mismatch")
        if len(self.col_idx):
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.ncols:
                raise ValueError("column index out of range")
            # strictly increasing inside each row (no duplicates)
            d = np.diff(self.col_idx)
            starts = self.row_ptr[1:-1]
            interior = np.ones(len(d), dtype=bool)
            interior[starts[(starts > 0) & (starts < len(self.col_idx))] - 1] = False
            if np.any(d[interior] <= 0):
                raise ValueError("column indices must be strictly increasing per row")

    # -- constructors ---------------------------------------------------

    @staticmethod
    def from_coo(nrows, ncols, rows, cols, vals):
        """Build from triplets, summing duplicates in (row, col, insertion) order."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))  # stable: ties keep insertion order
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new = np.empty(len(rows), dtype=bool)
            new[0] = True
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        row_ptr = np.zeros(nrows + 1, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        np.cumsum(row_ptr, out=row_ptr)
        return CsrMatrix(nrows, ncols, row_ptr, cols, vals, check=False)

    @staticmethod
    def from_dense(arr):
        arr = np.asarray(arr, dtype=np.float64)
        rows, cols = np.nonzero(arr)
        return CsrMatrix.from_coo(arr.shape[0], arr.shape[1], rows, cols, arr[rows, cols])

    @staticmethod
    def from_scipy(S):
        S = S.tocsr()
        S.sort_indices()
        return CsrMatrix(S.shape[0], S.shape[1], S.indptr, S.indices, S.data)

    @staticmethod
    def identity(n):
        idx = np.arange(n, dtype=np.int64)
        return CsrMatrix(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n), check=False)

    # -- views and conversions ------------------------------------------

    @property
    def nnz(self):
        return len(self.values)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def to_scipy(self):
        if self._scipy is None:
            self._scipy = scipy.sparse.csr_matrix(
                (self.values, self.col_idx, self.row_ptr), shape=self.shape
            )
        return self._scipy

    def to_dense(self):
        return self.to_scipy().toarray()

    def transpose(self):
        return CsrMatrix.from_scipy(self.to_scipy().T.tocsr())

    def diagonal(self):
        return self.to_scipy().diagonal()

    def tril(self):
        """Lower triangle including the diagonal."""
        return CsrMatrix.from_scipy(scipy.sparse.tril(self.to_scipy(), format="csr"))

    def triu(self):
        """Upper triangle including the diagonal."""
        return CsrMatrix.from_scipy(scipy.sparse.triu(self.to_scipy(), format="csr"))

    def submatrix(self, row_idx, col_idx):
        S = self.to_scipy()[np.asarray(row_idx)][:, np.asarray(col_idx)]
        return CsrMatrix.from_scipy(S)

    def is_symmetric(self, tol=1e-12):
        """Entrywise check |a_ij - a_ji| <= tol * max(1, |a_ij|)."""
        if self.nrows != self.ncols:
            return False
        S = self.to_scipy()
        D = (S - S.T).tocoo()
        if D.nnz == 0:
            return True
        ref = np.abs(np.asarray(S[D.row, D.col])).ravel()
        return bool(np.all(np.abs(D.data) <= tol * np.maximum(1.0, ref)))

    def __repr__(self):
        return f"CsrMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"


# -- sparse kernels ------------------------------------------------------


def spmv(A: CsrMatrix, x):
    """y = A x with ascending-column summation per row."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != A.ncols:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has length {x.shape[0]}")
    return A.to_scipy() @ x


def triple_product(R: CsrMatrix, A: CsrMatrix, P: CsrMatrix) -> CsrMatrix:
    """Galerkin product R A P.

    Rows of the result are sorted and merged; entries that come out
    exactly zero through cancellation are dropped.
    """
    if R.ncols != A.nrows:
        raise ValueError(f"dimension mismatch: R is {R.shape}, A is {A.shape}")
    if A.ncols != P.nrows:
        raise ValueError(f"dimension mismatch: A is {A.shape}, P is {P.shape}")
    S = R.to_scipy() @ A.to_scipy() @ P.to_scipy()
    S = S.tocsr()
    S.sort_indices()
    S.eliminate_zeros()
    return CsrMatrix.from_scipy(S)


def matmul(A: CsrMatrix, B: CsrMatrix) -> CsrMatrix:
    """Sparse product A B with sorted, merged rows."""
    if A.ncols != B.nrows:
        raise ValueError(f"dimension mismatch: A is {A.shape}, B is {B.shape}")
    S = (A.to_scipy() @ B.to_scipy()).tocsr()
    S.sort_indices()
    S.eliminate_zeros()
    return CsrMatrix.from_scipy(S)


def galerkin_symmetric(A: CsrMatrix, P: CsrMatrix) -> CsrMatrix:
    """P^T A P."""
    return triple_product(P.transpose(), A, P)


# -- dense kernels -------------------------------------------------------


def dense_sym_eigen(M, tol=1e-12):
    """Eigendecomposition of a symmetric dense matrix.

    Returns (eigenvalues ascending, eigenvectors as columns).  Raises
    ValueError if M is not symmetric to ``tol`` (entrywise, relative).
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    asym = np.abs(M - M.T)
    if np.any(asym > tol * np.maximum(1.0, np.abs(M))):
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(M)
    return w, V


def cholesky_factor(M):
    """Lower Cholesky factor of a dense SPD matrix.

    Raises :class:`NotPositiveDefiniteError` naming the first
    nonpositive pivot.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if M.ndim != 2 or M.shape[1] != n:
        raise ValueError("expected a square matrix")
    L = np.array(M, dtype=np.float64, order="C")
    for j in range(n):
        d = L[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0:
            raise NotPositiveDefiniteError(j)
        d = np.sqrt(d)
        L[j, j] = d
        if j + 1 < n:
            L[j + 1 :, j] = (L[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / d
    return np.tril(L)


def cholesky_solve(M, b, factor=None):
    """Solve M x = b for dense SPD M (optionally with a precomputed factor)."""
    b = np.asarray(b, dtype=np.float64)
    L = cholesky_factor(M) if factor is None else factor
    y = scipy.linalg.solve_triangular(L, b, lower=True)
    return scipy.linalg.solve_triangular(L.T, y, lower=False)


def tri_lower_solve(L: CsrMatrix, b):
    """x = L^{-1} b for sparse lower-triangular L (diagonal included)."""
    return scipy.sparse.linalg.spsolve_triangular(L.to_scipy(), np.asarray(b, dtype=np.float64), lower=True)


def tri_upper_solve(U: CsrMatrix, b):
    """x = U^{-1} b for sparse upper-triangular U (diagonal included)."""
    return scipy.sparse.linalg.spsolve_triangular(U.to_scipy(), np.asarray(b, dtype=np.float64), lower=False)


# -- Matrix Market I/O ---------------------------------------------------


def write_matrix_market(A: CsrMatrix, path, symmetric=None):
    """Write coordinate Matrix Market (1-based, 17 significant digits).

    ``symmetric=None`` auto-detects; symmetric files store the lower
    triangle only.
    """
    if symmetric is None:
        symmetric = A.is_symmetric()
    S = A.to_scipy().tocoo()
    if symmetric:
        keep = S.row >= S.col
        rows, cols, vals = S.row[keep], S.col[keep], S.data[keep]
        qualifier = "symmetric"
    else:
        rows, cols, vals = S.row, S.col, S.data
        qualifier = "general"
    order = np.lexsort((rows, cols))  # column-major, the conventional MM layout
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {qualifier}\n")
        fh.write(f"{A.nrows} {A.ncols} {len(vals)}\n")
        for t in order:
            fh.write(f"{rows[t] + 1} {cols[t] + 1} {vals[t]:.16e}\n")


def read_matrix_market(path) -> CsrMatrix:
    """Read a coordinate Matrix Market file written by :func:`write_matrix_market`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0] != "%%MatrixMarket" or header[2] != "coordinate":
            raise ValueError(f"unsupported Matrix Market header in {path}")
        qualifier = header[4]
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        nrows, ncols, nnz = (int(t) for t in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for i in range(nnz):
            r, c, v = fh.readline().split()
            rows[i], cols[i], vals[i] = int(r) - 1, int(c) - 1, float(v)
    if qualifier == "symmetric":
        off = rows != cols
        rows, cols = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
        )
        vals = np.concatenate([vals, vals[off]])
    elif qualifier != "general":
        raise ValueError(f"unsupported qualifier {qualifier!r}")
    return CsrMatrix.from_coo(nrows, ncols, rows, cols, vals)
