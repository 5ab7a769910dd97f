"""Taylor-Hood P2-P1 spaces and finite element assembly.

Velocity unknowns are stored component-blocked: entries ``[0, n_nodes)``
hold the x component at every quadratic node, ``[n_nodes, 2 n_nodes)`` the
y component. Quadratic nodes are the mesh vertices followed by the edge
midpoints; pressure unknowns are the vertex values of a continuous P1
field.

All integrals use the 7-point degree-5 triangle rule, which is exact for
every bilinear and trilinear form below on straight elements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .mesh import Mesh, boundary_dofs

# --------------------------------------------------------------------------
# quadrature

_s15 = math.sqrt(15.0)
_a1 = (6.0 - _s15) / 21.0
_a2 = (6.0 + _s15) / 21.0
_w1 = (155.0 - _s15) / 1200.0
_w2 = (155.0 + _s15) / 1200.0

#: barycentric coordinates of the quadrature points, shape (7, 3)
QUAD_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_a1, _a1, 1 - 2 * _a1],
        [_a1, 1 - 2 * _a1, _a1],
        [1 - 2 * _a1, _a1, _a1],
        [_a2, _a2, 1 - 2 * _a2],
        [_a2, 1 - 2 * _a2, _a2],
        [1 - 2 * _a2, _a2, _a2],
    ]
)
#: weights normalised to sum to one (multiply by the triangle area)
QUAD_WEIGHTS = np.array([9 / 40, _w1, _w1, _w1, _w2, _w2, _w2])
QUAD_DEGREE = 5


def p2_values(bary):
    """P2 basis values at barycentric points, shape (Q, 6).

    Local order: vertices 0, 1, 2 then midpoints of edges (0,1), (1,2), (2,0).
    """
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    return np.column_stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
         4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0]
    )


def p2_bary_derivs(bary):
    """d(phi_a)/d(lambda_k) at the points, shape (Q, 6, 3)."""
    q = len(bary)
    d = np.zeros((q, 6, 3))
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    d[:, 0, 0] = 4 * l0 - 1
    d[:, 1, 1] = 4 * l1 - 1
    d[:, 2, 2] = 4 * l2 - 1
    d[:, 3, 0], d[:, 3, 1] = 4 * l1, 4 * l0
    d[:, 4, 1], d[:, 4, 2] = 4 * l2, 4 * l1
    d[:, 5, 2], d[:, 5, 0] = 4 * l0, 4 * l2
    return d


def bary_gradients(vertices, triangles):
    """Gradients of the barycentric coordinates and triangle areas.

    Returns (grad (F, 3, 2), area (F,)).
    """
    p = vertices[triangles]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    g = np.empty((len(triangles), 3, 2))
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        g[:, k, 0] = (y[:, i] - y[:, j]) / det
        g[:, k, 1] = (x[:, j] - x[:, i]) / det
    return g, 0.5 * det


@dataclass
class FieldFunction:
    """Coefficient vector tagged as a velocity or pressure field."""

    values: np.ndarray
    kind: str = "velocity"

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _vec(u):
    return np.asarray(u.values if isinstance(u, FieldFunction) else u, dtype=np.float64)


@dataclass(eq=False)
class TaylorHoodSpace:
    """P2 velocity / P1 pressure degrees of freedom over a mesh."""

    mesh: Mesh
    n_nodes: int = field(init=False)
    n_vel: int = field(init=False)
    n_pr: int = field(init=False)
    p2_dofs: np.ndarray = field(init=False, repr=False)
    p1_dofs: np.ndarray = field(init=False, repr=False)
    constrained: np.ndarray = field(init=False, repr=False)
    area: np.ndarray = field(init=False, repr=False)
    quad_points: np.ndarray = field(init=False, repr=False)
    phi: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)
    wdet: np.ndarray = field(init=False, repr=False)
    quadrature: str = "7-point degree-5 triangle rule"

    def __post_init__(self):
        m = self.mesh
        self.n_nodes = m.n_vertices + m.n_edges
        self.n_vel = 2 * self.n_nodes
        self.n_pr = m.n_vertices
        self.p1_dofs = np.array(m.triangles)
        self.p2_dofs = np.hstack([m.triangles, m.n_vertices + m.tri_edges])
        nodes = boundary_dofs(m)
        self.constrained = np.concatenate([nodes, nodes + self.n_nodes])
        gl, self.area = bary_gradients(m.vertices, m.triangles)
        self.phi = p2_values(QUAD_BARY)
        dphi = p2_bary_derivs(QUAD_BARY)
        self.grads = np.ascontiguousarray(np.einsum("qak,fkc->fqac", dphi, gl))
        self.wdet = np.ascontiguousarray(self.area[:, None] * QUAD_WEIGHTS[None, :])
        pv = m.vertices[m.triangles]
        self.quad_points = np.einsum("qk,fkc->fqc", QUAD_BARY, pv)
        self._bary_grads = gl
        self._pattern = _Pattern(self.p2_dofs, self.n_nodes)

    @property
    def free(self):
        mask = np.ones(self.n_vel, dtype=bool)
        mask[self.constrained] = False
        return mask

    def node_coordinates(self):
        return np.vstack([self.mesh.vertices, self.mesh.edge_midpoints()])

    def interpolate(self, func, t=0.0):
        """Nodal interpolant of a vector function ``func(x, y, t) -> (fx, fy)``."""
        xy = self.node_coordinates()
        fx, fy = func(xy[:, 0], xy[:, 1], t)
        out = np.empty(self.n_vel)
        out[: self.n_nodes] = fx
        out[self.n_nodes:] = fy
        return out

    def interpolate_scalar_p1(self, func):
        v = self.mesh.vertices
        return np.asarray(func(v[:, 0], v[:, 1]), dtype=np.float64) * np.ones(self.n_pr)

    def split(self, u):
        u = _vec(u)
        return u[: self.n_nodes], u[self.n_nodes:]

    def element_values(self, u):
        """Local nodal values of a velocity vector, shape (F, 6, 2)."""
        ux, uy = self.split(u)
        return np.ascontiguousarray(np.stack([ux[self.p2_dofs], uy[self.p2_dofs]], axis=-1))


class _Pattern:
    """Scalar P2 x P2 sparsity pattern with a scatter map into CSR data.

    Summation through ``np.bincount`` follows element order, so assembly is
    deterministic and (i, j) / (j, i) entries of a skew local matrix
    accumulate to exact negatives of each other.
    """

    def __init__(self, dofs, n):
        rows = np.repeat(dofs, 6, axis=1).ravel()
        cols = np.tile(dofs, (1, 6)).ravel()
        key = rows * n + cols
        uniq, self.scatter = np.unique(key, return_inverse=True)
        self.indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int64)
        self.indices = (uniq % n).astype(np.int64)
        self.n = n
        self.nnz = len(uniq)

    def build(self, local):
        data = np.bincount(self.scatter, weights=np.ravel(local), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


def _blockdiag(s):
    return sp.block_diag([s, s], format="csr")


# --------------------------------------------------------------------------
# operators


def _sym(local):
    # einsum does not guarantee bitwise-symmetric local matrices
    return 0.5 * (local + local.transpose(0, 2, 1))


def assemble_scalar_mass(space):
    local = np.einsum("fq,qa,qb->fab", space.wdet, space.phi, space.phi)
    return space._pattern.build(_sym(local))


def assemble_scalar_stiffness(space):
    local = np.einsum("fq,fqac,fqbc->fab", space.wdet, space.grads, space.grads)
    return space._pattern.build(_sym(local))


def assemble_mass(space):
    """Velocity mass matrix M (both components)."""
    return _blockdiag(assemble_scalar_mass(space))


def assemble_stiffness(space):
    """Vector Laplacian A with A[i, j] = (grad phi_j, grad phi_i), unscaled."""
    return _blockdiag(assemble_scalar_stiffness(space))


def assemble_divergence(space):
    """B with B[k, i] = (div phi_i, psi_k); shape (n_pr, n_vel)."""
    lam = QUAD_BARY  # P1 basis values at the quadrature points
    # local[f, k, a, c] = sum_q wdet * lam_k * d_c phi_a
    local = np.einsum("fq,qk,fqac->fkac", space.wdet, lam, space.grads)
    rows = np.broadcast_to(space.p1_dofs[:, :, None, None], local.shape)
    cols = np.empty(local.shape, dtype=np.int64)
    cols[..., 0] = space.p2_dofs[:, None, :]
    cols[..., 1] = space.p2_dofs[:, None, :] + space.n_nodes
    B = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(space.n_pr, space.n_vel)
    ).tocsr()
    B.sum_duplicates()
    return B


def pressure_mass_vector(space):
    """Integrals of the P1 basis functions (row of the zero-mean constraint)."""
    out = np.zeros(space.n_pr)
    np.add.at(out, space.p1_dofs.ravel(), np.repeat(space.area / 3.0, 3))
    return out


def assemble_scalar_convection(space, w):
    wnod = space.element_values(w)
    local = _kernels.convection_local(wnod, space.phi, space.grads, space.wdet)
    return space._pattern.build(local)


def assemble_convection(space, w):
    """N(w)[i, j] = b*(w, phi_j, phi_i) for the skew-symmetric form
    b*(w, u, v) = 1/2 (w . grad u, v) - 1/2 (w . grad v, u).

    The matrix is exactly skew: N + N^T == 0 entrywise.
    """
    return _blockdiag(assemble_scalar_convection(space, w))


def assemble_load(space, f, t=0.0):
    """Load vector with entries (f(., t), phi_i)."""
    qp = space.quad_points
    fx, fy = f(qp[..., 0], qp[..., 1], t)
    fx = np.broadcast_to(np.asarray(fx, dtype=np.float64), qp.shape[:2])
    fy = np.broadcast_to(np.asarray(fy, dtype=np.float64), qp.shape[:2])
    lx = np.einsum("fq,qa->fa", space.wdet * fx, space.phi)
    ly = np.einsum("fq,qa->fa", space.wdet * fy, space.phi)
    out = np.zeros(space.n_vel)
    np.add.at(out, space.p2_dofs.ravel(), lx.ravel())
    np.add.at(out, space.p2_dofs.ravel() + space.n_nodes, ly.ravel())
    return out


def apply_dirichlet(matrix, rhs, constrained):
    """Symmetric elimination of homogeneous Dirichlet unknowns.

    Constrained rows and columns are zeroed, their diagonal set to one and
    their right-hand side entries set to zero. ``rhs`` may be None, a vector
    or a list of vectors.
    """
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    keep = np.ones(n)
    keep[np.asarray(constrained, dtype=np.int64)] = 0.0
    D = sp.diags(keep)
    out = (D @ A @ D + sp.diags(1.0 - keep)).tocsr()
    out.eliminate_zeros()
    out.sort_indices()

    def fix(b):
        b = np.array(b, dtype=np.float64, copy=True)
        b[np.asarray(constrained, dtype=np.int64)] = 0.0
        return b

    if rhs is None:
        return out, None
    if isinstance(rhs, (list, tuple)):
        return out, [fix(b) for b in rhs]
    return out, fix(rhs)


def saddle_matrix(space, K, B=None, mp=None):
    """Constrained saddle-point matrix for velocity block K.

    Unknown ordering: velocity, pressure, one Lagrange multiplier enforcing
    zero-mean pressure. Rows read
        K u - B^T p          = rhs
       -B u          + mp l  = 0
             mp^T p          = 0
    which is symmetric whenever K is.
    """
    if B is None:
        B = assemble_divergence(space)
    if mp is None:
        mp = pressure_mass_vector(space)
    mcol = sp.csr_matrix(mp.reshape(-1, 1))
    S = sp.bmat(
        [[K, -B.T, None], [-B, None, mcol], [None, mcol.T, None]], format="csr"
    )
    S, _ = apply_dirichlet(S, None, space.constrained)
    return S


def split_solution(space, x):
    return x[: space.n_vel], x[space.n_vel: space.n_vel + space.n_pr]


def l2_norm(M, u):
    u = _vec(u)
    return float(np.sqrt(max(u @ (M @ u), 0.0)))


def h1_seminorm(A, u):
    u = _vec(u)
    return float(np.sqrt(max(u @ (A @ u), 0.0)))
