"""Sting / non-sting / constant basis of cubic pressures and local test functions.

On a triangle ``K`` the sting function of vertex ``V`` is the cubic ``S`` with
``int_K S q = |K| q(V)`` for every cubic ``q``; in barycentric coordinates it
is ``560 l^3 - 630 l^2 + 180 l - 10`` with ``l`` the coordinate of ``V``.
Non-sting functions are fixed by value and gradient conditions at the
centroid ``G_0`` and the median centers ``G_1, G_2, G_3``.

Per-triangle arrays use the reference coordinates of :mod:`geometry`; the
basis order on a triangle is ``S_1, S_2, S_3, N_1^1, N_1^2, N_2^1, N_2^2,
N_3^1, N_3^2, 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    TriPoly,
    affine_map,
    barycentric_poly,
    batch_jacobians,
    coeffs_from_vector,
    ds,
    dt,
    dx_dy,
    gram_tensor,
    monomial_indices,
    pad,
    poly_mul,
    ref_integrate,
    vandermonde,
)
from .mesh import Mesh

__all__ = [
    "StingFn",
    "NonStingFn",
    "LocalTestFn",
    "P3Field",
    "PressureDecomposition",
    "BasisError",
    "STING_PROFILE",
    "sting",
    "nonsting",
    "nonsting_batch",
    "unisolvence_matrix",
    "interior_bubble",
    "edge_pair_test",
    "edge_half_reference",
    "triangle_bases",
    "decompose",
    "recompose",
    "hermite_p3",
]

STING_PROFILE = (-10.0, 180.0, -630.0, 560.0)  # coefficients of l^0 .. l^3

_REF_G = np.array([[1 / 3, 1 / 3], [0.25, 0.25], [0.5, 0.25], [0.25, 0.5]])
_REF_V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_P3 = monomial_indices(3)


class BasisError(RuntimeError):
    pass


def _sting_ref() -> np.ndarray:
    return np.stack([barycentric_poly(STING_PROFILE, v) for v in range(3)])


STING_REF = _sting_ref()
STING_REF.setflags(write=False)


def _as_map(K):
    return K if hasattr(K, "forward") else affine_map(K)


@dataclass
class StingFn:
    vertex: int
    triangle: int | None
    poly: TriPoly


def sting(K, V, triangle: int | None = None, vertex_id: int | None = None) -> StingFn:
    """Sting function of vertex ``V`` on ``K``.

    ``V`` is a local index (0, 1, 2) or the coordinates of one of the vertices.
    """
    fmap = _as_map(K)
    if np.ndim(V) == 0:
        loc = int(V)
    else:
        d = np.linalg.norm(fmap.vertices - np.asarray(V, dtype=float), axis=1)
        loc = int(np.argmin(d))
        if d[loc] > 1e-12 * (1 + np.abs(fmap.vertices).max()):
            raise ValueError("V is not a vertex of K")
    return StingFn(loc if vertex_id is None else vertex_id, triangle, TriPoly(STING_REF[loc].copy(), fmap, triangle))


# ---------------------------------------------------------------------------
# non-sting functions


def _p3_jets(Ainv: np.ndarray):
    """Values and physical gradients of the 10 cubic monomials at G_0..G_3."""
    T = len(Ainv)
    E = coeffs_from_vector(np.eye(10), 3)  # (10, 4, 4)
    V = vandermonde(_REF_G[:, 0], _REF_G[:, 1], 4)
    val = np.einsum("pij,mij->pm", V, E)
    gs = np.einsum("pij,mij->pm", V, ds(E))
    gt = np.einsum("pij,mij->pm", V, dt(E))
    gx = Ainv[:, 0, 0, None, None] * gs + Ainv[:, 1, 0, None, None] * gt
    gy = Ainv[:, 0, 1, None, None] * gs + Ainv[:, 1, 1, None, None] * gt
    return np.broadcast_to(val, (T,) + val.shape), gx, gy


def unisolvence_matrix(vertices, k: int = 1) -> np.ndarray:
    """The 10 x 10 matrix of the conditions ``q(G_0), q(G_k), grad q(G_0..G_3)``
    applied to the cubic monomials of ``K``."""
    fmap = _as_map(vertices)
    return _condition_matrices(fmap.inverse_linear[None])[0, k - 1]


def _condition_matrices(Ainv: np.ndarray) -> np.ndarray:
    val, gx, gy = _p3_jets(Ainv)
    T = len(Ainv)
    out = np.zeros((T, 3, 10, 10))
    for k in range(1, 4):
        out[:, k - 1, 0] = val[:, 0]
        out[:, k - 1, 1] = val[:, k]
        out[:, k - 1, 2:6] = gx
        out[:, k - 1, 6:10] = gy
    return out


def nonsting_batch(coords: np.ndarray) -> np.ndarray:
    """Non-sting functions ``(T, 6, 4, 4)`` ordered ``(k, i) = (1,1), (1,2), ..., (3,2)``."""
    _, _, Ainv = batch_jacobians(coords)
    M = _condition_matrices(Ainv)
    rhs = np.zeros((10, 6))
    for k in range(3):
        rhs[2 + (k + 1), 2 * k] = 1.0  # d/dx at G_k
        rhs[6 + (k + 1), 2 * k + 1] = 1.0  # d/dy at G_k
    out = np.zeros((len(coords), 6, 10))
    for k in range(3):
        try:
            sol = np.linalg.solve(M[:, k], np.broadcast_to(rhs[:, 2 * k : 2 * k + 2], (len(coords), 10, 2)))
        except np.linalg.LinAlgError as exc:
            raise BasisError(f"non-sting conditions are singular: {exc}") from exc
        out[:, 2 * k : 2 * k + 2] = np.swapaxes(sol, 1, 2)
    return coeffs_from_vector(out, 3)


@dataclass
class NonStingFn:
    triangle: int | None
    k: int
    i: int
    poly: TriPoly


def nonsting(K, k: int, i: int, triangle: int | None = None) -> NonStingFn:
    """Non-sting function for median center ``k`` (1..3) and component ``i`` (1, 2)."""
    if k not in (1, 2, 3) or i not in (1, 2):
        raise ValueError("k must be 1..3 and i must be 1 or 2")
    fmap = _as_map(K)
    c = nonsting_batch(fmap.vertices[None])[0, 2 * (k - 1) + (i - 1)]
    return NonStingFn(triangle, k, i, TriPoly(c, fmap, triangle))


# ---------------------------------------------------------------------------
# local test functions


def _bubble_ref() -> np.ndarray:
    """``v_k = l1 l2 l3 (a + b s + c t)`` with ``v_k(G_j) = delta_kj``."""
    l1 = np.array([[1.0, -1.0], [-1.0, 0.0]])
    s = np.array([[0.0, 0.0], [1.0, 0.0]])
    t = np.array([[0.0, 1.0], [0.0, 0.0]])
    cubic = poly_mul(poly_mul(l1, s), t)  # (4, 4)
    G = _REF_G[1:]
    b = (1 - G[:, 0] - G[:, 1]) * G[:, 0] * G[:, 1]
    A = b[:, None] * np.column_stack([np.ones(3), G[:, 0], G[:, 1]])
    coef = np.linalg.solve(A, np.eye(3))  # column k: affine factor of v_k
    out = []
    for k in range(3):
        aff = np.array([[coef[0, k], coef[2, k]], [coef[1, k], 0.0]])
        out.append(pad(poly_mul(cubic, aff), 5))
    return np.stack(out)


BUBBLE_REF = _bubble_ref()
BUBBLE_REF.setflags(write=False)


def _edge_trace_profile() -> np.ndarray:
    """Quadratic ``r`` with ``g(tau) = tau (1 - tau) r(tau)`` satisfying
    ``g'(0) = 1``, ``g'(1) = 0``, ``int_0^1 g = 0``."""
    # g'(0) = r(0), g'(1) = -r(1); rows of int tau (1 - tau) tau^n
    mom = [1 / 6, 1 / 12, 1 / 20]
    A = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 1.0], mom])
    return np.linalg.solve(A, np.array([1.0, 0.0, 0.0]))


EDGE_TRACE = _edge_trace_profile()


def _edge_half_ref(a: int, b: int) -> np.ndarray:
    """Reference half of an edge-pair test function on a triangle.

    Unit tangential derivative (per unit edge length) at vertex ``a``, zero at
    ``b``, zero mean along edge ``ab``, zero on the two other edges, and zero
    value and gradient at the centroid.  Multiply by the physical edge length.
    """
    la = barycentric_poly((0.0, 1.0), a)
    lb = barycentric_poly((0.0, 1.0), b)
    lab = poly_mul(la, lb)  # (3, 3)
    E = coeffs_from_vector(np.eye(6), 2)  # (6, 3, 3)
    W = np.stack([pad(poly_mul(lab, e), 5) for e in E])  # (6, 5, 5)
    rows, rhs = [], []
    # q on the edge equals r(tau) at tau = 0, 1/2, 1
    for tau in (0.0, 0.5, 1.0):
        p = (1 - tau) * _REF_V[a] + tau * _REF_V[b]
        V = vandermonde([p[0]], [p[1]], 3)[0]
        rows.append(np.einsum("ij,mij->m", V, E))
        rhs.append(EDGE_TRACE @ [1.0, tau, tau * tau])
    g = _REF_G[0]
    V5 = vandermonde([g[0]], [g[1]], 5)[0]
    rows.append(np.einsum("ij,mij->m", V5, W))
    rows.append(np.einsum("ij,mij->m", V5, ds(W)))
    rows.append(np.einsum("ij,mij->m", V5, dt(W)))
    rhs += [0.0, 0.0, 0.0]
    qc = np.linalg.solve(np.array(rows), np.array(rhs))
    return np.einsum("m,mij->ij", qc, W)


EDGE_HALF_REF = np.zeros((3, 3, 5, 5))
for _a in range(3):
    for _b in range(3):
        if _a != _b:
            EDGE_HALF_REF[_a, _b] = _edge_half_ref(_a, _b)
EDGE_HALF_REF.setflags(write=False)


def edge_half_reference(a: int, b: int) -> np.ndarray:
    return EDGE_HALF_REF[a, b].copy()


@dataclass
class LocalTestFn:
    """Scalar P4 test function supported on one or two triangles."""

    kind: str
    triangles: tuple
    polys: tuple

    def restrict(self, triangle: int) -> TriPoly:
        return self.polys[self.triangles.index(triangle)]


def interior_bubble(K, k: int, triangle: int | None = None) -> LocalTestFn:
    """``v_k``: P4, zero on the boundary of ``K``, ``v_k(G_j) = delta_kj``."""
    fmap = _as_map(K)
    return LocalTestFn("interior-bubble", (triangle,), (TriPoly(BUBBLE_REF[k - 1].copy(), fmap, triangle),))


def edge_pair_test(m: Mesh, patch, j: int) -> LocalTestFn:
    """``w_j`` on ``K_j`` and ``K_{j+1}`` of a vertex patch (0-based ``j``)."""
    if j >= patch.n_edges:
        raise ValueError(f"edge {j} of the patch is not interior")
    V, Vj, ell = patch.center, int(patch.edge_vertices[j]), float(patch.lengths[j])
    polys, tris = [], []
    for pos in patch.edge_triangles(j):
        t = int(patch.triangles[pos])
        loc = list(m.triangles[t])
        a, b = loc.index(V), loc.index(Vj)
        polys.append(TriPoly(ell * EDGE_HALF_REF[a, b], affine_map(m.coords[t]), t))
        tris.append(t)
    return LocalTestFn("edge-pair", tuple(tris), tuple(polys))


# ---------------------------------------------------------------------------
# fields and decomposition


def triangle_bases(coords: np.ndarray) -> np.ndarray:
    """All ten basis cubics per triangle, ``(T, 10, 4, 4)``."""
    T = len(coords)
    out = np.zeros((T, 10, 4, 4))
    out[:, 0:3] = STING_REF
    out[:, 3:9] = nonsting_batch(coords)
    out[:, 9, 0, 0] = 1.0
    return out


@dataclass
class P3Field:
    """Discontinuous piecewise cubic field, ``coeffs`` of shape ``(T, 4, 4)``."""

    mesh: Mesh
    coeffs: np.ndarray

    @classmethod
    def zeros(cls, mesh: Mesh) -> "P3Field":
        return cls(mesh, np.zeros((mesh.n_triangles, 4, 4)))

    def __add__(self, other: "P3Field") -> "P3Field":
        return P3Field(self.mesh, self.coeffs + other.coeffs)

    def __sub__(self, other: "P3Field") -> "P3Field":
        return P3Field(self.mesh, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "P3Field":
        return P3Field(self.mesh, self.coeffs * a)

    __rmul__ = __mul__

    def integral(self) -> float:
        return float(np.sum(2 * self.mesh.areas * ref_integrate(self.coeffs)))

    def mean(self) -> float:
        return self.integral() / float(self.mesh.areas.sum())

    def l2_norm(self) -> float:
        sq = np.einsum("tij,ijkl,tkl->t", self.coeffs, gram_tensor(4, 4), self.coeffs)
        return float(np.sqrt(np.sum(2 * self.mesh.areas * sq)))

    def shifted(self, c: float) -> "P3Field":
        out = self.coeffs.copy()
        out[:, 0, 0] += c
        return P3Field(self.mesh, out)

    def on(self, t: int) -> TriPoly:
        return TriPoly(self.coeffs[t], affine_map(self.mesh.coords[t]), t)

    def gradient_at_vertex(self, t: int, local: int) -> np.ndarray:
        _, _, Ainv = batch_jacobians(self.mesh.coords[t : t + 1])
        gx, gy = dx_dy(self.coeffs[t], Ainv[0])
        s, tt = _REF_V[local]
        V = vandermonde([s], [tt], 4)[0]
        return np.array([np.sum(V * gx), np.sum(V * gy)])

    def values_ref(self, st: np.ndarray) -> np.ndarray:
        """Values at reference points ``(Q, 2)`` on every triangle, ``(T, Q)``."""
        V = vandermonde(st[:, 0], st[:, 1], 4)
        return np.einsum("qij,tij->tq", V, self.coeffs)


@dataclass
class PressureDecomposition:
    """Coefficients of a piecewise cubic in the sting / non-sting / constant basis.

    ``sting[t, a]`` multiplies the sting function of local vertex ``a`` on
    triangle ``t``; the sting pressure of a vertex is the sum over all
    ``(t, a)`` with ``triangles[t, a] == vertex``.
    """

    mesh: Mesh
    nonsting: np.ndarray
    sting: np.ndarray
    const: np.ndarray

    @classmethod
    def zeros(cls, mesh: Mesh) -> "PressureDecomposition":
        T = mesh.n_triangles
        return cls(mesh, np.zeros((T, 6)), np.zeros((T, 3)), np.zeros(T))

    def copy(self) -> "PressureDecomposition":
        return PressureDecomposition(self.mesh, self.nonsting.copy(), self.sting.copy(), self.const.copy())

    def vertex_sting(self, v: int) -> dict[int, float]:
        t, a = np.nonzero(self.mesh.triangles == v)
        return {int(tt): float(self.sting[tt, aa]) for tt, aa in zip(t, a)}

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.sting, self.nonsting, self.const[:, None]], axis=1)


def recompose(d: PressureDecomposition, bases: np.ndarray | None = None) -> P3Field:
    if bases is None:
        bases = triangle_bases(d.mesh.coords)
    return P3Field(d.mesh, np.einsum("tb,tbij->tij", d.as_vector(), bases))


def decompose(field: P3Field, bases: np.ndarray | None = None) -> PressureDecomposition:
    """Split each triangle's cubic into sting, non-sting and constant parts."""
    m = field.mesh
    if bases is None:
        bases = triangle_bases(m.coords)
    idx = _P3
    B = np.stack([bases[:, :, i, j] for i, j in idx], axis=2)  # (T, 10 basis, 10 mon)
    rhs = np.stack([field.coeffs[:, i, j] for i, j in idx], axis=1)
    if np.any(field.coeffs[:, np.add.outer(np.arange(4), np.arange(4)) > 3]):
        raise ValueError("field is not piecewise cubic")
    try:
        c = np.linalg.solve(np.swapaxes(B, 1, 2), rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise BasisError(f"basis matrix singular: {exc}") from exc
    return PressureDecomposition(m, c[:, 3:9].copy(), c[:, 0:3].copy(), c[:, 9].copy())


def hermite_p3(p, grad_p, m: Mesh) -> P3Field:
    """Piecewise cubic interpolant matching ``p`` and ``grad p`` at vertices and
    ``p`` at centroids."""
    _, _, Ainv = batch_jacobians(m.coords)
    E = coeffs_from_vector(np.eye(10), 3)
    pts = np.vstack([_REF_V, _REF_G[:1]])
    V = vandermonde(pts[:, 0], pts[:, 1], 4)
    val = np.einsum("pij,mij->pm", V, E)
    gs = np.einsum("pij,mij->pm", V[:3], ds(E))
    gt = np.einsum("pij,mij->pm", V[:3], dt(E))
    T = m.n_triangles
    M = np.zeros((T, 10, 10))
    M[:, 0:3] = val[:3]
    M[:, 3:6] = Ainv[:, 0, 0, None, None] * gs + Ainv[:, 1, 0, None, None] * gt
    M[:, 6:9] = Ainv[:, 0, 1, None, None] * gs + Ainv[:, 1, 1, None, None] * gt
    M[:, 9] = val[3]
    X = m.coords
    cen = X.mean(axis=1)
    pv = np.asarray(p(X[..., 0], X[..., 1]), dtype=float) * np.ones((T, 3))
    gv = np.asarray(grad_p(X[..., 0], X[..., 1]), dtype=float) * np.ones((2, T, 3))
    pc = np.asarray(p(cen[:, 0], cen[:, 1]), dtype=float) * np.ones(T)
    rhs = np.concatenate([pv, gv[0], gv[1], pc[:, None]], axis=1)
    c = np.linalg.solve(M, rhs[..., None])[..., 0]
    return P3Field(m, coeffs_from_vector(c, 3))
