"""Piecewise-constant pressure part from a Bernardi-Raugel / P0 Stokes solve.

Velocities are vector P1 hats at interior vertices plus quadratic edge
bubbles ``4 l_a l_b n_e`` on interior edges; pressures are piecewise
constant with zero mean, enforced by one Lagrange multiplier.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .argyris import VelocityField
from .basis import P3Field
from .geometry import batch_jacobians, dx_dy, gauss_rule, gram_tensor, poly_mul, ref_integrate, vandermonde
from .linalg import SolverError, sym_indef_solve
from .mesh import Mesh

__all__ = ["BRSpace", "SaddleSystem", "build_br_space", "assemble_saddle", "solve_step5", "finalize_pressure"]

RHS_DEGREE = 14


def _scalar_shapes() -> np.ndarray:
    """Hats ``l_0, l_1, l_2`` and bubbles ``4 l_a l_b`` (opposite vertex k), as ``(6, 3, 3)``."""
    lam = [np.array([[1.0, -1.0], [-1.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[0.0, 1.0], [0.0, 0.0]])]
    out = np.zeros((6, 3, 3))
    for k in range(3):
        out[k, :2, :2] = lam[k]
        a, b = (k + 1) % 3, (k + 2) % 3
        out[3 + k] = 4.0 * poly_mul(lam[a], lam[b])
    return out


SHAPES = _scalar_shapes()


@dataclass
class BRSpace:
    """Local-to-global map of the Bernardi-Raugel velocity space.

    ``dofs[t, alpha]`` is the global index of local function ``alpha`` on
    triangle ``t`` (``-1`` when it is removed by the boundary condition);
    locals 0-5 are ``l_k e_c`` ordered ``(k, c)``, locals 6-8 the edge bubbles
    opposite vertex 0, 1, 2.  ``C[t, alpha, c, i]`` expands local function
    ``alpha`` in the scalar shapes: ``psi = sum_c e_c sum_i C[alpha, c, i] g_i``.
    """

    mesh: Mesh
    dofs: np.ndarray
    C: np.ndarray
    n_vertex_dofs: int
    n_edge_dofs: int

    @property
    def ndof(self) -> int:
        return self.n_vertex_dofs + self.n_edge_dofs


def build_br_space(m: Mesh) -> BRSpace:
    T = m.n_triangles
    ivert = -np.ones(m.n_vertices, dtype=np.int64)
    inner = np.flatnonzero(~m.boundary_vertex)
    ivert[inner] = np.arange(len(inner))
    iedge = -np.ones(m.n_edges, dtype=np.int64)
    ie = np.flatnonzero(m.interior_edge)
    nv = 2 * len(inner)
    iedge[ie] = nv + np.arange(len(ie))
    dofs = -np.ones((T, 9), dtype=np.int64)
    C = np.zeros((T, 9, 2, 6))
    normals = m.edge_normals
    for k in range(3):
        gv = ivert[m.triangles[:, k]]
        for c in range(2):
            dofs[:, 2 * k + c] = np.where(gv >= 0, 2 * gv + c, -1)
            C[:, 2 * k + c, c, k] = 1.0
        e = m.tri_edges[:, k]
        dofs[:, 6 + k] = iedge[e]
        C[:, 6 + k, :, 3 + k] = normals[e]
    return BRSpace(m, dofs, C, nv, len(ie))


@dataclass
class SaddleSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_velocity: int
    n_pressure: int


def _local_data(space: BRSpace):
    m = space.mesh
    _, _, Ainv = batch_jacobians(m.coords)
    gx, gy = dx_dy(SHAPES[None], Ainv[:, None])  # (T, 6, 3, 3)
    G33 = gram_tensor(3, 3)
    two_area = 2.0 * m.areas
    Ks = (np.einsum("taij,ijkl,tbkl->tab", gx, G33, gx) + np.einsum("taij,ijkl,tbkl->tab", gy, G33, gy)) * two_area[:, None, None]
    A_loc = np.einsum("tpci,tij,tqcj->tpq", space.C, Ks, space.C)
    dint = np.stack([ref_integrate(gx), ref_integrate(gy)], axis=-1) * two_area[:, None, None]  # (T, 6, 2)
    B_loc = np.einsum("tpci,tic->tp", space.C, dint)
    return gx, gy, A_loc, B_loc


def assemble_saddle(space: BRSpace, u_h: VelocityField, p3: P3Field, f) -> SaddleSystem:
    m = space.mesh
    T = m.n_triangles
    gx, gy, A_loc, B_loc = _local_data(space)
    two_area = 2.0 * m.areas
    # right-hand side on the scalar shapes: (f_c, g_i) - (grad u_c, grad g_i) - (p3, d_c g_i)
    G53, G43 = gram_tensor(5, 3), gram_tensor(4, 3)
    ux, uy, vx, vy = u_h.gradients()
    r = np.zeros((T, 2, 6))
    for c, (a, b) in enumerate(((ux, uy), (vx, vy))):
        r[:, c] -= (np.einsum("tij,ijkl,tpkl->tp", a, G53, gx) + np.einsum("tij,ijkl,tpkl->tp", b, G53, gy)) * two_area[:, None]
    r[:, 0] -= np.einsum("tij,ijkl,tpkl->tp", p3.coeffs, G43, gx) * two_area[:, None]
    r[:, 1] -= np.einsum("tij,ijkl,tpkl->tp", p3.coeffs, G43, gy) * two_area[:, None]
    if f is not None:
        rule = gauss_rule(RHS_DEGREE)
        xy = rule.physical_points(m.coords)
        fv = np.asarray(f(xy[..., 0], xy[..., 1]), dtype=float)
        st = rule.ref_points
        gq = np.einsum("qij,pij->pq", vandermonde(st[:, 0], st[:, 1], 3), SHAPES)
        r += np.einsum("q,ctq,pq->tcp", rule.weights, fv, gq) * m.areas[:, None, None]
    r_loc = np.einsum("tpci,tci->tp", space.C, r)

    n_u, n_p = space.ndof, T
    keep = space.dofs >= 0
    rows_a = np.broadcast_to(space.dofs[:, :, None], A_loc.shape)
    cols_a = np.broadcast_to(space.dofs[:, None, :], A_loc.shape)
    mask_a = (rows_a >= 0) & (cols_a >= 0)
    tri = np.broadcast_to(np.arange(T)[:, None], B_loc.shape)
    lag = n_u + n_p
    rows = np.concatenate([rows_a[mask_a], n_u + tri[keep], space.dofs[keep], n_u + np.arange(T), np.full(T, lag)])
    cols = np.concatenate([cols_a[mask_a], space.dofs[keep], n_u + tri[keep], np.full(T, lag), n_u + np.arange(T)])
    vals = np.concatenate([A_loc[mask_a], B_loc[keep], B_loc[keep], m.areas, m.areas])
    n = n_u + n_p + 1
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    rhs = np.zeros(n)
    np.add.at(rhs, space.dofs[keep], r_loc[keep])
    return SaddleSystem(K, rhs, n_u, n_p)


@dataclass
class CoarseSolution:
    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: float
    residual: float
    divergence: np.ndarray


def solve_step5(m: Mesh, u_h: VelocityField, p3: P3Field, f, space: BRSpace | None = None) -> CoarseSolution:
    """Solve for the piecewise-constant pressure ``p^c`` (zero mean)."""
    if space is None:
        space = build_br_space(m)
    S = assemble_saddle(space, u_h, p3, f)
    if not np.any(S.rhs):
        x, res = np.zeros(len(S.rhs)), 0.0
    else:
        try:
            x, res = sym_indef_solve(S.matrix, S.rhs, return_residual=True)
        except SolverError as exc:
            raise SolverError(f"coarse Stokes solve failed: {exc}") from exc
    w = x[: S.n_velocity]
    pc = x[S.n_velocity : S.n_velocity + S.n_pressure]
    div = (S.matrix[S.n_velocity : S.n_velocity + S.n_pressure, : S.n_velocity] @ w)
    return CoarseSolution(w, pc, float(x[-1]), float(res), np.asarray(div))


def finalize_pressure(p3: P3Field, pc: np.ndarray) -> tuple[P3Field, float]:
    """``p_h = p3 + p^c - mean(p3)``; returns the field and the subtracted mean."""
    mu = p3.mean()
    out = p3.coeffs.copy()
    out[:, 0, 0] += np.asarray(pc) - mu
    return P3Field(p3.mesh, out), mu


