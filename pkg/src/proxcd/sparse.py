"""Sparse matrix storage with eager dual layout.

Both a row-major and a column-major layout of the same entry set are built at
construction, so full matrix-vector products run linear in nnz off the
row-major arrays while single-column scans run linear in the column's nonzero
count off the column-major arrays.  Instances are immutable after
construction and safe to share between threads.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

__all__ = ["SparseMatrix", "from_triplets", "identity", "read_matrix_market", "write_matrix_market"]

_MM_HEADER = "%%MatrixMarket matrix coordinate real general"


class SparseMatrix:
    """Immutable m x n sparse matrix stored in CSR and CSC order.

    Attributes
    ----------
    m, n : int       matrix shape
    nnz : int        number of stored (nonzero) entries
    indptr, indices, data : CSR arrays (column indices sorted within rows)
    cindptr, cindices, cdata : CSC arrays (row indices sorted within columns)
    rows : int64 array, row id of each CSR entry (for vectorized products)
    """

    __slots__ = (
        "m",
        "n",
        "nnz",
        "indptr",
        "indices",
        "data",
        "cindptr",
        "cindices",
        "cdata",
        "rows",
        "_row_sqnorm_max",
        "_col_sq_max",
    )

    def __init__(self, m, n, indptr, indices, data, cindptr, cindices, cdata):
        self.m = int(m)
        self.n = int(n)
        self.nnz = int(data.size)
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self.cindptr = cindptr
        self.cindices = cindices
        self.cdata = cdata
        self.rows = np.repeat(np.arange(self.m, dtype=np.int64), np.diff(indptr))
        self._row_sqnorm_max = None
        self._col_sq_max = None

    @property
    def shape(self):
        return (self.m, self.n)

    def matvec(self, x) -> np.ndarray:
        """A @ x, cost O(nnz)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"matvec expects a vector of length {self.n}, got shape {x.shape}")
        return _kernels.csr_matvec(self.rows, self.indices, self.data, x, self.m)

    def rmatvec(self, p) -> np.ndarray:
        """A.T @ p, cost O(nnz)."""
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.m,):
            raise ValueError(f"rmatvec expects a vector of length {self.m}, got shape {p.shape}")
        return _kernels.csr_rmatvec(self.rows, self.indices, self.data, p, self.n)

    def column_nonzeros(self, i):
        """Nonzeros of column i as (row_indices, values) views, in row order."""
        if not 0 <= i < self.n:
            raise IndexError(f"column index {i} out of range [0, {self.n})")
        lo, hi = self.cindptr[i], self.cindptr[i + 1]
        return self.cindices[lo:hi], self.cdata[lo:hi]

    def row_sqnorm_max(self) -> float:
        """max_j ||A_j||_2^2 over rows."""
        if self._row_sqnorm_max is None:
            if self.nnz == 0:
                self._row_sqnorm_max = 0.0
            else:
                sq = np.bincount(self.rows, weights=self.data**2, minlength=self.m)
                self._row_sqnorm_max = float(sq.max())
        return self._row_sqnorm_max

    def col_sq_max(self) -> np.ndarray:
        """Vector of max_j A[j,i]^2 per column (0 for empty columns)."""
        if self._col_sq_max is None:
            out = np.zeros(self.n)
            if self.nnz > 0:
                col_of_entry = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.cindptr))
                np.maximum.at(out, col_of_entry, self.cdata**2)
            self._col_sq_max = out
        return self._col_sq_max

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.m, self.n))
        out[self.rows, self.indices] = self.data
        return out

    def triplets(self):
        """Stored entries as (row, col, value) arrays in row-major order."""
        return self.rows.copy(), self.indices.copy(), self.data.copy()


def from_triplets(m, n, triplets) -> SparseMatrix:
    """Build a SparseMatrix from (row, col, value) triplets.

    Duplicate (row, col) entries are summed; entries that sum to exactly zero
    are dropped.  Raises ValueError on out-of-range indices or non-finite
    values.
    """
    m = int(m)
    n = int(n)
    if m <= 0 or n <= 0:
        raise ValueError("matrix dimensions must be positive")
    if isinstance(triplets, tuple) and len(triplets) == 3:
        r, c, v = triplets
        r = np.asarray(r, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        v = np.asarray(v, dtype=np.float64)
    else:
        trip = list(triplets)
        if trip:
            r = np.array([t[0] for t in trip], dtype=np.int64)
            c = np.array([t[1] for t in trip], dtype=np.int64)
            v = np.array([t[2] for t in trip], dtype=np.float64)
        else:
            r = np.empty(0, dtype=np.int64)
            c = np.empty(0, dtype=np.int64)
            v = np.empty(0, dtype=np.float64)
    if r.size:
        if r.min() < 0 or r.max() >= m:
            raise ValueError("row index out of range")
        if c.min() < 0 or c.max() >= n:
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(v)):
            raise ValueError("matrix values must be finite")
        # accumulate duplicates on the flattened key (sequentially, in input
        # order within each duplicate group), then drop exact zeros
        key = r * n + c
        order = np.argsort(key, kind="stable")
        key = key[order]
        v = v[order]
        new_group = np.concatenate(([True], np.diff(key) != 0))
        group = np.cumsum(new_group) - 1
        sums = np.zeros(int(group[-1]) + 1)
        np.add.at(sums, group, v)
        v = sums
        key = key[new_group]
        keep = v != 0.0
        key = key[keep]
        v = v[keep]
        r = key // n
        c = key % n
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    indptr = np.cumsum(indptr)
    # column-major layout of the same entries
    corder = np.lexsort((r, c))
    cr, cc, cv = r[corder], c[corder], v[corder]
    cindptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(cindptr, cc + 1, 1)
    cindptr = np.cumsum(cindptr)
    return SparseMatrix(m, n, indptr, c.astype(np.int64), v, cindptr, cr.astype(np.int64), cv)


def identity(n) -> SparseMatrix:
    i = np.arange(n, dtype=np.int64)
    return from_triplets(n, n, (i, i, np.ones(n)))


def write_matrix_market(A: SparseMatrix, path) -> None:
    """Write in Matrix Market coordinate format (1-based, real general)."""
    lines = [_MM_HEADER, f"{A.m} {A.n} {A.nnz}"]
    for r, c, v in zip(A.rows, A.indices, A.data):
        lines.append(f"{r + 1} {c + 1} {v:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_market(path) -> SparseMatrix:
    """Read a Matrix Market coordinate real general file."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("%%MatrixMarket"):
            raise ValueError(f"{path}: missing MatrixMarket header")
        tokens = header.lower().split()
        if tokens[1:3] != ["matrix", "coordinate"] or "general" not in tokens:
            raise ValueError(f"{path}: unsupported MatrixMarket layout {header!r}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        m, n, nnz = (int(t) for t in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line in fh:
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            a, b, c = line.split()
            rows[k] = int(a) - 1
            cols[k] = int(b) - 1
            vals[k] = float(c)
            k += 1
        if k != nnz:
            raise ValueError(f"{path}: expected {nnz} entries, found {k}")
    return from_triplets(m, n, (rows, cols, vals))
