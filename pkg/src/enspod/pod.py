"""Proper orthogonal decomposition by the method of snapshots and the
reduced (Galerkin) operators built on the resulting basis."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem, linsolve
from .errors import ParseError, RankDeficient

RANK_TOL = 1e-12


def correlation_matrix(snapshots, M):
    """C = A^T M A for the snapshot matrix A (columns are snapshots)."""
    A = snapshots.matrix if hasattr(snapshots, "matrix") else np.asarray(snapshots)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.ndim == 2 and A.shape[1] == 0:
        raise ValueError("no snapshots")
    C = A.T @ (M @ A)
    return 0.5 * (C + C.T)


@dataclass
class PODBasis:
    """M-orthonormal POD modes.

    ``eigenvalues`` holds every eigenvalue of the correlation matrix in
    descending order (tiny negative round-off values are clipped to zero);
    ``coefficients[:, i]`` is the matching unit eigenvector of C.
    """

    modes: np.ndarray
    eigenvalues: np.ndarray
    coefficients: np.ndarray | None = None
    M: object = field(default=None, repr=False)

    @property
    def R(self):
        return self.modes.shape[1]

    @property
    def K(self):
        return self.modes.shape[0]

    def reconstruct(self, a):
        return self.modes @ np.asarray(a, dtype=np.float64)

    def projector(self):
        """Matrix Phi^T M mapping full-order vectors to reduced coordinates."""
        return np.asarray((self.M.T @ self.modes).T)


def _m_gram_schmidt(Phi, M):
    Phi = np.array(Phi, dtype=np.float64, copy=True)
    for i in range(Phi.shape[1]):
        v = Phi[:, i]
        for k in range(i):
            v -= (Phi[:, k] @ (M @ v)) * Phi[:, k]
        v /= np.sqrt(v @ (M @ v))
        Phi[:, i] = v
    return Phi


def _fix_signs(Phi):
    idx = np.argmax(np.abs(Phi), axis=0)
    signs = np.sign(Phi[idx, np.arange(Phi.shape[1])])
    signs[signs == 0] = 1.0
    return Phi * signs


def numerical_rank(eigenvalues, rank_tol=RANK_TOL):
    lam = np.asarray(eigenvalues)
    if len(lam) == 0 or lam[0] <= 0:
        return 0
    return int(np.sum(lam > rank_tol * lam[0]))


def compute_pod_basis(snapshots, M, R, rank_tol=RANK_TOL):
    """POD modes phi_i = A a_i / sqrt(lambda_i), i = 1..R.

    The scaled modes are re-orthonormalised by modified Gram-Schmidt in the
    M inner product, and each mode's largest-magnitude entry is made
    positive.

    Raises
    ------
    RankDeficient
        If R exceeds the numerical rank (eigenvalues above
        ``rank_tol * lambda_1``).
    """
    A = snapshots.matrix if hasattr(snapshots, "matrix") else np.asarray(snapshots)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    C = correlation_matrix(A, M)
    lam, vec = linsolve.sym_eig(C)
    rank = numerical_rank(lam, rank_tol)
    if R > rank or R < 0:
        raise RankDeficient(R, rank)
    Phi = A @ vec[:, :R] / np.sqrt(lam[:R])
    Phi = _fix_signs(_m_gram_schmidt(Phi, M))
    return PODBasis(
        modes=Phi,
        eigenvalues=np.maximum(lam, 0.0),
        coefficients=vec,
        M=M,
    )


def truncate(basis: PODBasis, R):
    return PODBasis(basis.modes[:, :R].copy(), basis.eigenvalues, basis.coefficients, basis.M)


def project_l2(basis: PODBasis, u, M=None):
    """Reduced coordinates Phi^T M u of the L2 projection onto the POD space."""
    M = basis.M if M is None else M
    u = np.asarray(u.values if isinstance(u, fem.FieldFunction) else u, dtype=np.float64)
    return basis.modes.T @ (M @ u)


def projection_error_identity(snapshots, basis: PODBasis, A, M=None):
    """Both sides of the snapshot projection-error identities.

    Returns (lhs_L2, rhs_L2, lhs_H1, rhs_H1) with

        lhs_L2 = sum_k ||u_k - P_R u_k||^2,     rhs_L2 = sum_{i>R} lambda_i
        lhs_H1 = sum_k ||grad(u_k - P_R u_k)||^2,
        rhs_H1 = sum_{i>R} lambda_i ||grad phi_i||^2

    No 1/(number of snapshots) prefactor is applied on either side. In the
    last sum lambda_i ||grad phi_i||^2 is evaluated as ||grad(A a_i)||^2,
    which is the same quantity without dividing by tiny eigenvalues.
    """
    M = basis.M if M is None else M
    S = snapshots.matrix if hasattr(snapshots, "matrix") else np.asarray(snapshots)
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    R = basis.R
    coords = basis.modes.T @ (M @ S)
    resid = S - basis.modes @ coords
    lhs_l2 = float(np.sum(resid * (M @ resid)))
    lhs_h1 = float(np.sum(resid * (A @ resid)))
    lam = basis.eigenvalues
    rhs_l2 = float(np.sum(lam[R:]))
    tail = S @ basis.coefficients[:, R:]
    rhs_h1 = float(np.sum(tail * (A @ tail)))
    return lhs_l2, rhs_l2, lhs_h1, rhs_h1


# --------------------------------------------------------------------------
# reduced operators


@dataclass
class ReducedOperators:
    """Galerkin operators on the POD space.

    S[i, j] = (grad phi_j, grad phi_i); T[k, i, j] = b*(phi_k, phi_j, phi_i);
    P = Phi^T M.
    """

    S: np.ndarray
    S_norm: float
    T: np.ndarray
    P: np.ndarray
    basis: PODBasis
    flow: object = field(default=None, repr=False)
    _force_cache: dict = field(default_factory=dict, repr=False)

    @property
    def R(self):
        return self.S.shape[0]

    def convection(self, g):
        """B_R(g)[i, j] = sum_k g_k T[k, i, j]."""
        return np.tensordot(np.asarray(g, dtype=np.float64), self.T, axes=1)

    def force(self, f, t):
        """Reduced load (f(., t), phi_i)."""
        key = (f, float(t))
        if key not in self._force_cache:
            if len(self._force_cache) > 64:
                self._force_cache.clear()
            self._force_cache[key] = self.basis.modes.T @ self.flow.load(f, t)
        return self._force_cache[key]


def build_reduced_operators(basis: PODBasis, flow):
    """Assemble S_R, ||S_R||_2, the convection tensor and the projector.

    ``flow`` is a :class:`enspod.fom.FlowOperators` on the basis' space.
    Each tensor slice is assembled from the full-order convection matrix of
    mode k and then made exactly skew by taking its skew part.
    """
    Phi = basis.modes
    S = Phi.T @ (flow.A @ Phi)
    S = 0.5 * (S + S.T)
    R = basis.R
    T = np.empty((R, R, R))
    for k in range(R):
        N = fem.assemble_convection(flow.space, Phi[:, k])
        X = Phi.T @ (N @ Phi)
        T[k] = 0.5 * (X - X.T)
    P = np.asarray((flow.M.T @ Phi).T)
    return ReducedOperators(
        S=S,
        S_norm=linsolve.operator_2norm(S) if R else 0.0,
        T=T,
        P=P,
        basis=basis,
        flow=flow,
    )


# --------------------------------------------------------------------------
# text format


def save_basis(basis: PODBasis) -> str:
    lines = [f"podbasis {basis.K} {basis.R}"]
    lines.append(" ".join(repr(float(x)) for x in basis.eigenvalues))
    for i in range(basis.R):
        lines.append(" ".join(repr(float(x)) for x in basis.modes[:, i]))
    return "\n".join(lines) + "\n"


def load_basis(text: str, M=None) -> PODBasis:
    lines = [ln for ln in text.splitlines()]
    head = lines[0].split() if lines else []
    if len(head) != 3 or head[0] != "podbasis":
        raise ParseError("expected header 'podbasis <K> <R>'", 1)
    K, R = int(head[1]), int(head[2])
    if len(lines) < 2 + R:
        raise ParseError(f"expected {R} mode lines", len(lines))
    eig = np.array([float(x) for x in lines[1].split()])
    modes = np.empty((K, R))
    for i in range(R):
        vals = lines[2 + i].split()
        if len(vals) != K:
            raise ParseError(f"mode has {len(vals)} values, expected {K}", 3 + i)
        modes[:, i] = [float(x) for x in vals]
    return PODBasis(modes=modes, eigenvalues=eig, coefficients=None, M=M)


def eigenvalue_csv(basis: PODBasis) -> str:
    lines = ["index,eigenvalue"]
    for i, lam in enumerate(basis.eigenvalues, start=1):
        lines.append(f"{i},{float(lam)!r}")
    return "\n".join(lines) + "\n"
