"""Direct factorisations reused across many right-hand sides, and a dense
symmetric eigensolver.

Sparse matrices are factorised with SuperLU (minimum degree on A^T + A,
symmetric mode with threshold pivoting); dense ones
with LAPACK getrf. Every call to :func:`factorize` and :func:`solve_many`
is tallied in :data:`counters` so the time steppers can report
factorisations per step.
"""
from __future__ import annotations

import threading
import warnings
import time
from collections import Counter

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import Asymmetric, SingularMatrix

SOLVER_TOL = 1e-10

counters = Counter()
timers = Counter()
_lock = threading.Lock()


def reset_counters():
    with _lock:
        counters.clear()
        timers.clear()


def _tally(key, n=1, seconds=0.0):
    with _lock:
        counters[key] += n
        timers[key] += seconds


class Factorization:
    """Immutable LU factors of a square matrix; ``solve`` is thread-safe."""

    def __init__(self, matrix, _lu, kind):
        self.shape = matrix.shape
        self.kind = kind
        self._lu = _lu
        self._matrix = matrix

    @property
    def n(self):
        return self.shape[0]

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.n,):
            raise ValueError(f"right-hand side has shape {b.shape}, expected ({self.n},)")
        if self.kind == "sparse":
            return self._lu.solve(b)
        return la.lu_solve(self._lu, b, check_finite=False)

    def residual(self, x, b):
        """Relative residual ||A x - b|| / (||A|| ||x|| + ||b||) (inf-norms)."""
        A = self._matrix
        r = A @ x - b
        if sp.issparse(A):
            anorm = spla.norm(A, np.inf)
        else:
            anorm = np.linalg.norm(A, np.inf)
        denom = anorm * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)
        return float(np.linalg.norm(r, np.inf) / denom) if denom > 0 else 0.0


def _zero_line(A):
    """Index of the first all-zero row or column, or None."""
    A = sp.csr_matrix(A)
    rows = np.flatnonzero(np.diff(A.indptr) == 0)
    nzcol = np.zeros(A.shape[1], dtype=bool)
    nzcol[A.indices[A.data != 0]] = True
    nzrow = np.zeros(A.shape[0], dtype=bool)
    nzrow[np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))[A.data != 0]] = True
    bad = np.flatnonzero(~nzrow | ~nzcol)
    if len(bad):
        return int(bad[0])
    if len(rows):
        return int(rows[0])
    return None


def factorize(matrix):
    """LU-factorise a square sparse or dense matrix.

    Raises
    ------
    SingularMatrix
        When a zero pivot is met. ``pivot`` is the index of the offending
        row/column when it can be identified.
    """
    t0 = time.perf_counter()
    if sp.issparse(matrix):
        A = sp.csc_matrix(matrix, dtype=np.float64)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        try:
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.01,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise SingularMatrix(str(exc), pivot=_zero_line(A)) from None
        diag = lu.U.diagonal()
        if not np.all(np.isfinite(diag)) or np.any(diag == 0):
            raise SingularMatrix("zero pivot", pivot=int(lu.perm_c[np.flatnonzero(diag == 0)[0]]))
        fact = Factorization(A.tocsr(), lu, "sparse")
    else:
        A = np.array(matrix, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            lu, piv = la.lu_factor(A, check_finite=False)
        d = np.diag(lu)
        if np.any(d == 0) or not np.all(np.isfinite(d)):
            raise SingularMatrix("zero pivot", pivot=int(np.flatnonzero(~(d != 0))[0]))
        fact = Factorization(A, (lu, piv), "dense")
    _tally("factorize", seconds=time.perf_counter() - t0)
    return fact


def solve_many(fact: Factorization, rhs_block):
    """Solve with every right-hand side in ``rhs_block``.

    Each column is solved on its own so the result for a vector does not
    depend on which other vectors share the batch.
    """
    t0 = time.perf_counter()
    out = []
    for b in rhs_block:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (fact.n,):
            raise ValueError(f"right-hand side has shape {b.shape}, expected ({fact.n},)")
        out.append(fact.solve(b))
    _tally("solve", n=len(out), seconds=time.perf_counter() - t0)
    return out


def sym_eig(C, tol=1e-15, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns.

    Raises
    ------
    Asymmetric
        If ``max|C - C^T| > 1e-12 max|C|``.
    """
    C = np.array(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("matrix must be square")
    scale = np.max(np.abs(C)) if C.size else 0.0
    if C.size and np.max(np.abs(C - C.T)) > 1e-12 * scale:
        raise Asymmetric("matrix is not symmetric")
    C = 0.5 * (C + C.T)
    if C.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    # power-of-two rescaling (exact) keeps the sums of squares in range
    e = int(np.frexp(scale)[1]) if scale > 0 else 0
    lam, V, _ = _kernels.jacobi_eig(np.ldexp(C, -e), tol, max_sweeps)
    lam = np.ldexp(lam, e)
    order = np.argsort(-lam, kind="stable")
    return lam[order], np.ascontiguousarray(V[:, order])


def operator_2norm(S):
    """Spectral norm of a symmetric positive semidefinite matrix."""
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    lam, _ = sym_eig(S)
    return float(max(lam[0], 0.0)) if len(lam) else 0.0
