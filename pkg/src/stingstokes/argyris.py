"""Clamped C1 Argyris quintic stream functions and the divergence-free P4 velocity.

Local functionals per triangle (21): for each vertex the value, gradient
``(d/dx, d/dy)`` and Hessian ``(xx, xy, yy)``; then the normal derivative at
the midpoint of the edge opposite vertex 0, 1, 2 along the mesh-wide edge
normal (:attr:`Mesh.edge_normals`).  Because every functional is defined in
physical terms, the locally dual bases glue into a C1 space without any
orientation fix-ups.

Clamping (stream function and gradient zero on the boundary) removes value
and gradient at boundary vertices and the boundary-edge normal derivatives.
At a boundary vertex with boundary tangent ``t`` the Hessian must satisfy
``H t = 0``; its free part is parametrized by an orthonormal null-space basis,
which is empty at corners.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import (
    batch_jacobians,
    coeffs_from_vector,
    dx_dy,
    gauss_rule,
    gram_tensor,
    monomial_indices,
    pad,
    vandermonde,
)
from .linalg import chol_solve, relative_residual
from .mesh import Mesh

__all__ = [
    "StreamSpace",
    "StreamField",
    "VelocityField",
    "build_stream_space",
    "assemble_velocity_system",
    "solve_stream",
    "stream_to_velocity",
    "hermite_interpolate_stream",
    "LOAD_DEGREE",
]

LOAD_DEGREE = 14
_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_REF_MIDS = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])  # opposite vertex 0, 1, 2


def _monomial_jets():
    """Reference values of each degree-5 monomial and its derivatives."""
    idx = monomial_indices(5)
    n = len(idx)
    val = np.zeros((3, n))
    grad = np.zeros((3, n, 2))
    hess = np.zeros((3, n, 2, 2))
    mid_grad = np.zeros((3, n, 2))

    def d(p, a, b, s, t):
        # derivative d^a/ds^a d^b/dt^b of s^i t^j at (s, t)
        i, j = p
        if a > i or b > j:
            return 0.0
        ci = np.prod(np.arange(i - a + 1, i + 1)) if a else 1.0
        cj = np.prod(np.arange(j - b + 1, j + 1)) if b else 1.0
        return ci * cj * s ** (i - a) * t ** (j - b)

    for m, p in enumerate(idx):
        for v, (s, t) in enumerate(_REF_VERTS):
            val[v, m] = d(p, 0, 0, s, t)
            grad[v, m] = d(p, 1, 0, s, t), d(p, 0, 1, s, t)
            hess[v, m] = [[d(p, 2, 0, s, t), d(p, 1, 1, s, t)], [d(p, 1, 1, s, t), d(p, 0, 2, s, t)]]
        for e, (s, t) in enumerate(_REF_MIDS):
            mid_grad[e, m] = d(p, 1, 0, s, t), d(p, 0, 1, s, t)
    return val, grad, hess, mid_grad


_JETS = _monomial_jets()


def local_functional_matrix(Ainv: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """``L[t, k, m]``: functional k applied to monomial m on each triangle.

    ``normals[t, e]`` is the unit normal used for the edge opposite vertex e.
    """
    val, grad, hess, mid_grad = _JETS
    T = len(Ainv)
    L = np.zeros((T, 21, 21))
    # physical gradient: g_a = sum_r Ainv[r, a] g_ref_r
    pg = np.einsum("vmr,tra->tvma", grad, Ainv)
    ph = np.einsum("vmrq,tra,tqb->tvmab", hess, Ainv, Ainv)
    for v in range(3):
        L[:, 6 * v + 0] = val[v]
        L[:, 6 * v + 1] = pg[:, v, :, 0]
        L[:, 6 * v + 2] = pg[:, v, :, 1]
        L[:, 6 * v + 3] = ph[:, v, :, 0, 0]
        L[:, 6 * v + 4] = ph[:, v, :, 0, 1]
        L[:, 6 * v + 5] = ph[:, v, :, 1, 1]
    mg = np.einsum("emr,tra->tema", mid_grad, Ainv)
    L[:, 18:21] = np.einsum("tema,tea->tem", mg, normals)
    return L


def local_bases(mesh: Mesh, normals: np.ndarray | None = None) -> np.ndarray:
    """Dual Argyris bases as coefficient arrays ``(T, 21, 6, 6)``."""
    _, _, Ainv = batch_jacobians(mesh.coords)
    if normals is None:
        normals = mesh.edge_normals[mesh.tri_edges]
    L = local_functional_matrix(Ainv, normals)
    h = mesh.diameters
    scale = np.ones((len(h), 21))
    for v in range(3):
        scale[:, 6 * v + 1 : 6 * v + 3] = h[:, None]
        scale[:, 6 * v + 3 : 6 * v + 6] = h[:, None] ** 2
    scale[:, 18:] = h[:, None]
    Cs = np.linalg.inv(L * scale[:, :, None])
    C = Cs * scale[:, None, :]  # columns are the dual basis functions
    return coeffs_from_vector(np.swapaxes(C, 1, 2), 5)


@dataclass
class StreamSpace:
    """Global Argyris space on a mesh.

    ``P`` maps global unknowns to the stacked local functional values
    (``21 * T`` rows, row ``21 t + k`` is functional ``k`` of triangle ``t``).
    ``dof_kind[g]`` is ``("vertex", v, weights6)`` or ``("edge", e, None)``.
    """

    mesh: Mesh
    bases: np.ndarray
    P: sp.csr_matrix
    dof_kind: list
    clamped: bool
    n_constrained: int

    @property
    def ndof(self) -> int:
        return self.P.shape[1]

    def local_values(self, coef: np.ndarray) -> np.ndarray:
        return (self.P @ coef).reshape(-1, 21)

    def local_polys(self, coef: np.ndarray) -> np.ndarray:
        """Stream function on each triangle, ``(T, 6, 6)``."""
        return np.einsum("tk,tkij->tij", self.local_values(coef), self.bases)


@dataclass
class StreamField:
    space: StreamSpace
    coef: np.ndarray
    residual: float = 0.0
    info: dict = field(default_factory=dict)

    def polys(self) -> np.ndarray:
        return self.space.local_polys(self.coef)


def _hessian_nullspace(tangents) -> np.ndarray:
    if not tangents:
        return np.eye(3)
    rows = []
    for tx, ty in tangents:
        rows += [[tx, ty, 0.0], [0.0, tx, ty]]
    _, s, Vt = np.linalg.svd(np.array(rows))
    rank = int(np.sum(s > 1e-10 * s[0]))
    return Vt[rank:].T


def build_stream_space(m: Mesh, clamped: bool = True) -> StreamSpace:
    """Global DOF numbering and the local-to-global map.

    With ``clamped=False`` no boundary functional is removed (patch tests).
    """
    dof_kind = []
    vertex_map = []  # per vertex: (list of global ids, 6 x r weight matrix)
    n_constrained = 0
    for v in range(m.n_vertices):
        if clamped and m.boundary_vertex[v]:
            B = _hessian_nullspace(m.boundary_tangents(v))
            W = np.zeros((6, B.shape[1]))
            W[3:, :] = B
            n_constrained += 6 - B.shape[1]
        else:
            W = np.eye(6)
        ids = list(range(len(dof_kind), len(dof_kind) + W.shape[1]))
        for c in range(W.shape[1]):
            dof_kind.append(("vertex", v, W[:, c].copy()))
        vertex_map.append((ids, W))
    edge_map = np.full(m.n_edges, -1)
    for e in range(m.n_edges):
        if clamped and m.boundary_edge[e]:
            n_constrained += 1
            continue
        edge_map[e] = len(dof_kind)
        dof_kind.append(("edge", e, None))

    rows, cols, vals = [], [], []
    for t, tri in enumerate(m.triangles):
        for lv, v in enumerate(tri):
            ids, W = vertex_map[v]
            for k in range(6):
                for c, g in enumerate(ids):
                    if W[k, c] != 0.0:
                        rows.append(21 * t + 6 * lv + k)
                        cols.append(g)
                        vals.append(W[k, c])
        for le in range(3):
            g = edge_map[m.tri_edges[t, le]]
            if g >= 0:
                rows.append(21 * t + 18 + le)
                cols.append(g)
                vals.append(1.0)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(21 * m.n_triangles, len(dof_kind)))
    return StreamSpace(m, local_bases(m), P, dof_kind, clamped, n_constrained)


def _second_derivatives(bases: np.ndarray, Ainv: np.ndarray):
    gx, gy = dx_dy(bases, Ainv[:, None])
    xx, xy = dx_dy(gx, Ainv[:, None])
    _, yy = dx_dy(gy, Ainv[:, None])
    return pad(xx, 4), pad(xy, 4), pad(yy, 4)


def element_stiffness(space: StreamSpace) -> np.ndarray:
    """``a(phi, psi) = int phi_xx psi_xx + 2 phi_xy psi_xy + phi_yy psi_yy`` per triangle."""
    _, det, Ainv = batch_jacobians(space.mesh.coords)
    G = gram_tensor(4, 4)
    xx, xy, yy = _second_derivatives(space.bases, Ainv)
    K = np.zeros((len(det), 21, 21))
    for arr, w in ((xx, 1.0), (xy, 2.0), (yy, 1.0)):
        tmp = np.einsum("tmij,ijkl->tmkl", arr, G)
        K += w * np.einsum("tmkl,tnkl->tmn", tmp, arr)
    return K * np.abs(det)[:, None, None]


def _curl_at_points(space: StreamSpace, rule):
    """Values of ``(psi_y, -psi_x)`` for every local basis function at quadrature points."""
    _, det, Ainv = batch_jacobians(space.mesh.coords)
    gx, gy = dx_dy(space.bases, Ainv[:, None])
    st = rule.ref_points
    V = vandermonde(st[:, 0], st[:, 1], 6)
    return np.einsum("qij,tkij->tkq", V, gy), -np.einsum("qij,tkij->tkq", V, gx), np.abs(det)


def assemble_velocity_system(space: StreamSpace, f=None):
    """Stiffness matrix and load ``(f, curl psi)`` for the stream unknowns.

    ``f(x, y)`` returns an array of shape ``(2, ...)``; ``None`` means zero load.
    """
    K = element_stiffness(space)
    T = len(K)
    Kb = sp.block_diag(list(K), format="csr") if T < 64 else _block_diag(K)
    A = (space.P.T @ Kb @ space.P).tocsr()
    A = 0.5 * (A + A.T)
    if f is None:
        F_local = np.zeros(21 * T)
    else:
        rule = gauss_rule(LOAD_DEGREE)
        c1, c2, adet = _curl_at_points(space, rule)
        xy = rule.physical_points(space.mesh.coords)
        fv = np.asarray(f(xy[..., 0], xy[..., 1]))
        F_local = (
            np.einsum("tkq,tq,q->tk", c1, fv[0], rule.weights)
            + np.einsum("tkq,tq,q->tk", c2, fv[1], rule.weights)
        ) * (0.5 * adet)[:, None]
        F_local = F_local.ravel()
    return A, space.P.T @ F_local


def _block_diag(K: np.ndarray) -> sp.csr_matrix:
    T, n, _ = K.shape
    base = (np.arange(T) * n)[:, None, None]
    r = base + np.arange(n)[None, :, None] + np.zeros((1, 1, n), dtype=int)
    c = base + np.arange(n)[None, None, :] + np.zeros((1, n, 1), dtype=int)
    return sp.csr_matrix((K.ravel(), (r.ravel(), c.ravel())), shape=(T * n, T * n))


def solve_stream(system, space: StreamSpace | None = None) -> StreamField:
    A, b = system
    t0 = time.perf_counter()
    if np.linalg.norm(b) == 0:
        x, res = np.zeros(A.shape[0]), 0.0
    else:
        x, res = chol_solve(A, b, return_residual=True)
    info = {"ndof": int(A.shape[0]), "nnz": int(A.nnz), "solve_s": time.perf_counter() - t0}
    return StreamField(space, x, res, info)


@dataclass
class VelocityField:
    """Piecewise P4 velocity ``(u1, u2)`` as ``(T, 5, 5)`` coefficient arrays."""

    mesh: Mesh
    u1: np.ndarray
    u2: np.ndarray

    @classmethod
    def zero(cls, mesh: Mesh) -> "VelocityField":
        z = np.zeros((mesh.n_triangles, 5, 5))
        return cls(mesh, z, z.copy())

    def gradients(self):
        """``(du1/dx, du1/dy, du2/dx, du2/dy)``, each ``(T, 5, 5)``."""
        _, _, Ainv = batch_jacobians(self.mesh.coords)
        a, b = dx_dy(self.u1, Ainv)
        c, d = dx_dy(self.u2, Ainv)
        return a, b, c, d

    def divergence(self) -> np.ndarray:
        a, _, _, d = self.gradients()
        return a + d

    def divergence_ratio(self) -> float:
        """Largest per-triangle divergence coefficient norm relative to the velocity scale."""
        scale = max(np.abs(self.u1).max(), np.abs(self.u2).max())
        div = self.divergence()
        h = self.mesh.diameters[:, None, None]
        worst = np.linalg.norm((div * h).reshape(len(h), -1), axis=1).max()
        return float(worst / scale) if scale > 0 else float(worst)

    def evaluate(self, t: int, x, y) -> np.ndarray:
        A, _, Ainv = batch_jacobians(self.mesh.coords[t : t + 1])
        xy = np.column_stack([np.atleast_1d(x), np.atleast_1d(y)]) - self.mesh.coords[t, 0]
        st = xy @ Ainv[0].T
        V = vandermonde(st[:, 0], st[:, 1], 5)
        return np.stack([np.einsum("pij,ij->p", V, self.u1[t]), np.einsum("pij,ij->p", V, self.u2[t])])


def stream_to_velocity(space: StreamSpace, phi) -> VelocityField:
    """``u = (phi_y, -phi_x)`` on every triangle."""
    coef = phi.coef if isinstance(phi, StreamField) else np.asarray(phi)
    polys = space.local_polys(coef)
    _, _, Ainv = batch_jacobians(space.mesh.coords)
    gx, gy = dx_dy(polys, Ainv)
    return VelocityField(space.mesh, pad(gy, 5), pad(-gx, 5))


def hermite_interpolate_stream(space: StreamSpace, jet) -> StreamField:
    """Evaluate the global Argyris functionals of an analytic stream function.

    ``jet(x, y)`` returns ``(6, n)``: value, ``phi_x``, ``phi_y``, ``phi_xx``,
    ``phi_xy``, ``phi_yy``.
    """
    m = space.mesh
    vj = np.asarray(jet(m.vertices[:, 0], m.vertices[:, 1]))
    mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    ej = np.asarray(jet(mids[:, 0], mids[:, 1]))
    normals = m.edge_normals
    coef = np.zeros(space.ndof)
    for g, (kind, ent, w) in enumerate(space.dof_kind):
        if kind == "vertex":
            coef[g] = w @ vj[:, ent]
        else:
            coef[g] = normals[ent] @ ej[1:3, ent]
    return StreamField(space, coef)
