"""Sparse complex matrices and direct factorization.

Thin canonical-CSR wrapper plus an LU front end used for the shifted
resolvent solves. Storage is row-compressed, entries are kept sorted and
deduplicated, and explicitly stored zeros are dropped on construction.
"""

import threading

import numpy as np
import scipy.sparse as _sp
import scipy.sparse.linalg as _spla


class SparseError(Exception):
    """Base class for errors raised by this module."""


class ArgumentError(SparseError):
    """Invalid shapes, dtypes or parameter values."""


class StructuralSingularityError(SparseError):
    """The sparsity pattern alone makes the matrix singular."""


class NumericalSingularityError(SparseError):
    """The factorization hit an exactly singular pivot."""


class SparseComplex:
    """Square complex sparse matrix in canonical CSR form.

    Canonical means: column indices sorted within each row, duplicates
    summed, no explicitly stored zeros.
    """

    def __init__(self, matrix):
        if matrix.shape[0] != matrix.shape[1]:
            raise ArgumentError(f"matrix must be square, got {matrix.shape}")
        m = _sp.csr_matrix(matrix)
        if np.issubdtype(m.dtype, np.floating):
            m = m.astype(np.float64)
        elif m.dtype != np.complex128:
            m = m.astype(np.complex128)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        self._m = m

    @classmethod
    def from_triplets(cls, n, rows, cols, values):
        """Build from COO triplets; duplicate entries are summed."""
        coo = _sp.coo_matrix((values, (rows, cols)), shape=(n, n))
        return cls(coo)

    @classmethod
    def identity(cls, n):
        return cls(_sp.identity(n, dtype=float, format="csr"))

    @property
    def n(self):
        return self._m.shape[0]

    @property
    def indptr(self):
        return self._m.indptr

    @property
    def indices(self):
        return self._m.indices

    @property
    def data(self):
        return self._m.data

    @property
    def nnz(self):
        return self._m.nnz

    @property
    def csr(self):
        return self._m

    def matvec(self, x):
        return self._m @ x

    def to_dense(self):
        return self._m.toarray()

    def conjugate_transpose(self):
        return SparseComplex(self._m.conjugate().transpose().tocsr())

    def __repr__(self):
        return f"SparseComplex(n={self.n}, nnz={self.nnz})"


def shift_combine(mass, stiff, s):
    """Return mass + s * stiff as a canonical SparseComplex.

    The result pattern is the union of both patterns minus entries that
    cancel exactly; with s = 0 this is just the mass matrix.
    """
    if mass.n != stiff.n:
        raise ArgumentError(f"size mismatch: {mass.n} vs {stiff.n}")
    if s == 0:
        return SparseComplex(mass.csr.copy())
    return SparseComplex(mass.csr + s * stiff.csr)


class Factorization:
    """LU factorization of a SparseComplex, safe for concurrent solves.

    Real-valued data is detected and factored in real arithmetic; a
    complex right-hand side is then solved by parts, which keeps exact
    zero imaginary components on real problems.
    """

    def __init__(self, lu, n, real):
        self._lu = lu
        self._n = n
        self._real = real
        self._lock = threading.Lock()

    @property
    def n(self):
        return self._n

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self._n:
            raise ArgumentError(f"rhs has length {b.shape[0]}, expected {self._n}")
        if self._real and np.iscomplexobj(b):
            with self._lock:
                xr = self._lu.solve(np.ascontiguousarray(b.real))
                xi = self._lu.solve(np.ascontiguousarray(b.imag))
            return xr + 1j * xi
        if self._real:
            b = b.astype(np.float64, copy=False)
        else:
            b = b.astype(np.complex128, copy=False)
        with self._lock:
            return self._lu.solve(b)


def factorize(a):
    """LU-factor a SparseComplex for repeated solves.

    Raises StructuralSingularityError for empty rows or columns and
    NumericalSingularityError when elimination meets a zero pivot.
    """
    csr = a.csr
    n = a.n
    if n == 0:
        raise ArgumentError("cannot factorize an empty matrix")
    row_counts = np.diff(csr.indptr)
    if np.any(row_counts == 0):
        raise StructuralSingularityError(
            f"row {int(np.argmin(row_counts))} has no entries"
        )
    col_hit = np.zeros(n, dtype=bool)
    col_hit[csr.indices] = True
    if not col_hit.all():
        raise StructuralSingularityError(
            f"column {int(np.argmin(col_hit))} has no entries"
        )
    real = not np.iscomplexobj(csr.data) or not np.any(csr.data.imag)
    csc = csr.tocsc()
    if real and np.iscomplexobj(csc.data):
        csc = csc.astype(np.float64)
    try:
        lu = _spla.splu(csc, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        if "singular" in str(exc).lower():
            raise NumericalSingularityError(str(exc)) from exc
        raise
    return Factorization(lu, n, real)
