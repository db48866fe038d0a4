"""Triangulations, crisscross meshes and vertex singularity classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "Mesh",
    "VertexClass",
    "VertexClassification",
    "VertexPatch",
    "StructureReport",
    "generate_crisscross",
    "classify_vertices",
    "check_structure",
    "vertex_patch",
    "read_mesh",
    "write_mesh",
]

CORNER_TOL = 1e-9


class MeshError(ValueError):
    pass


def _triangle_angles(coords: np.ndarray) -> np.ndarray:
    """Interior angles ``(T, 3)``; column i is the angle at local vertex i."""
    out = np.empty(coords.shape[:2])
    for i in range(3):
        a = coords[:, (i + 1) % 3] - coords[:, i]
        b = coords[:, (i + 2) % 3] - coords[:, i]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        out[:, i] = np.arctan2(np.abs(cross), np.einsum("td,td->t", a, b))
    return out


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with counterclockwise triangles.

    ``tri_edges[t, i]`` is the edge opposite local vertex ``i`` of triangle ``t``;
    ``edge_tris[e]`` holds the incident triangles (``-1`` pads boundary edges).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    extra_corners: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if v.ndim != 2 or v.shape[1] != 2 or t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("vertices must be (n, 2) and triangles (m, 3)")
        if len(t) == 0:
            raise MeshError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle references a missing vertex")
        if np.any(t[:, 0] == t[:, 1]) or np.any(t[:, 1] == t[:, 2]) or np.any(t[:, 0] == t[:, 2]):
            raise MeshError("triangle with repeated vertex")
        keys = np.sort(t, axis=1)
        _, first, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
        if np.any(counts > 1):
            raise MeshError(f"duplicate triangle {t[first[counts > 1][0]].tolist()}")
        if np.any(self.signed_areas <= 0):
            bad = int(np.flatnonzero(self.signed_areas <= 0)[0])
            raise MeshError(f"triangle {bad} is not counterclockwise (or degenerate)")
        self._build_edges()
        self._check_conforming()
        for c in self.extra_corners:
            if not self.boundary_vertex[c]:
                raise MeshError(f"corner {c} is not a boundary vertex")

    # -- construction helpers -------------------------------------------------

    def _build_edges(self):
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)  # (T, 3, 2)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            e = edges[np.flatnonzero(counts > 2)[0]]
            raise MeshError(f"non-manifold edge {e.tolist()}")
        tri_edges = inverse.reshape(-1, 3)
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        tri_of = order // 3
        pos = np.zeros(len(edges), dtype=np.int64)
        for k, e in zip(tri_of, inverse[order]):
            edge_tris[e, pos[e]] = k
            pos[e] += 1
        bedge = edge_tris[:, 1] < 0
        bvert = np.zeros(len(self.vertices), dtype=bool)
        bvert[edges[bedge].ravel()] = True
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "tri_edges", tri_edges)
        object.__setattr__(self, "edge_tris", edge_tris)
        object.__setattr__(self, "boundary_edge", bedge)
        object.__setattr__(self, "boundary_vertex", bvert)

    def _check_conforming(self):
        used = np.zeros(len(self.vertices), dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no triangle")
        v = self.vertices
        scale = np.ptp(v, axis=0).max()
        for a, b in self.edges[self.boundary_edge]:
            p, q = v[a], v[b]
            d = q - p
            L2 = d @ d
            r = v - p
            s = r @ d / L2
            dist = np.abs(r[:, 0] * d[1] - r[:, 1] * d[0]) / math.sqrt(L2)
            inside = (s > 1e-9) & (s < 1 - 1e-9) & (dist < 1e-10 * scale)
            if np.any(inside):
                raise MeshError(
                    f"non-conforming: vertex {int(np.flatnonzero(inside)[0])} hangs on edge {a}-{b}"
                )

    # -- geometry -------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def coords(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        c = self.vertices[self.triangles]
        a = c[:, 1] - c[:, 0]
        b = c[:, 2] - c[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def angles(self) -> np.ndarray:
        return _triangle_angles(self.coords)

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.coords
        return np.max(np.linalg.norm(c - np.roll(c, 1, axis=1), axis=2), axis=1)

    @cached_property
    def vertex_triangles(self) -> list[np.ndarray]:
        order = np.argsort(self.triangles.ravel(), kind="stable")
        verts = self.triangles.ravel()[order]
        split = np.searchsorted(verts, np.arange(self.n_vertices + 1))
        return [order[split[i] : split[i + 1]] // 3 for i in range(self.n_vertices)]

    @cached_property
    def interior_edge(self) -> np.ndarray:
        return ~self.boundary_edge

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit edge normals: outward on the boundary, otherwise from the
        lower-id incident triangle into the higher-id one."""
        v = self.vertices
        d = v[self.edges[:, 1]] - v[self.edges[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]
        t0 = self.edge_tris[:, 0]
        cen = self.coords[t0].mean(axis=1)
        mid = 0.5 * (v[self.edges[:, 0]] + v[self.edges[:, 1]])
        flip = np.einsum("ed,ed->e", n, mid - cen) < 0
        n[flip] *= -1
        return n

    @cached_property
    def corners(self) -> frozenset:
        """Boundary vertices whose two boundary edges are not collinear."""
        v = self.vertices
        out = set(self.extra_corners)
        bedges = self.edges[self.boundary_edge]
        nbrs: dict[int, list[int]] = {}
        for a, b in bedges:
            nbrs.setdefault(int(a), []).append(int(b))
            nbrs.setdefault(int(b), []).append(int(a))
        for c, ns in nbrs.items():
            if len(ns) != 2:
                out.add(c)  # pinch point: treat as a corner
                continue
            d1 = v[ns[0]] - v[c]
            d2 = v[ns[1]] - v[c]
            cross = d1[0] * d2[1] - d1[1] * d2[0]
            ang = math.atan2(abs(cross), float(d1 @ d2))
            if abs(math.pi - ang) > CORNER_TOL:
                out.add(c)
        return frozenset(out)

    def boundary_tangents(self, vtx: int) -> list[np.ndarray]:
        """Unit tangents of the boundary edges at a boundary vertex."""
        out = []
        for e in np.flatnonzero(self.boundary_edge & np.any(self.edges == vtx, axis=1)):
            a, b = self.edges[e]
            d = self.vertices[b] - self.vertices[a]
            out.append(d / np.linalg.norm(d))
        return out

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    def edge_index(self, a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        lo = np.searchsorted(self.edges[:, 0], key[0], side="left")
        hi = np.searchsorted(self.edges[:, 0], key[0], side="right")
        for e in range(lo, hi):
            if self.edges[e, 1] == key[1]:
                return int(e)
        raise KeyError(f"no edge {a}-{b}")


# ---------------------------------------------------------------------------


def generate_crisscross(N: int, perturbation: float = 0.0, seed: int = 0) -> Mesh:
    """Unit square split into ``N x N`` squares, each cut into 4 triangles
    through an added center vertex.

    ``perturbation`` moves every center by up to ``perturbation * h / 2`` in
    each coordinate (``h = 1/N``), drawn from a seeded generator.
    """
    if N < 2:
        raise MeshError("crisscross meshes need N >= 2")
    if not 0.0 <= perturbation < 1.0:
        raise MeshError("perturbation must lie in [0, 1)")
    h = 1.0 / N
    g = np.linspace(0.0, 1.0, N + 1)
    X, Y = np.meshgrid(g, g)
    grid = np.column_stack([X.ravel(), Y.ravel()])
    c = (np.arange(N) + 0.5) * h
    CX, CY = np.meshgrid(c, c)
    centers = np.column_stack([CX.ravel(), CY.ravel()])
    if perturbation > 0:
        rng = np.random.default_rng(seed)
        centers = centers + perturbation * 0.5 * h * rng.uniform(-1.0, 1.0, centers.shape)
    verts = np.vstack([grid, centers])
    tris = []
    for j in range(N):
        for i in range(N):
            a = j * (N + 1) + i
            b = a + 1
            cc = a + N + 2
            d = a + N + 1
            m = (N + 1) ** 2 + j * N + i
            tris += [(a, b, m), (b, cc, m), (cc, d, m), (d, a, m)]
    return Mesh(verts, np.array(tris))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VertexPatch:
    """Triangles around ``center`` in counterclockwise order.

    Triangle ``K_m`` spans the angle from ``center -> first[m]`` to
    ``center -> second[m]``.  Edge ``j`` is ``K_j cap K_{j+1}`` and joins the
    center to ``edge_vertices[j] = second[j]``; an interior patch has ``J``
    such edges (cyclically), a boundary patch ``J - 1``.
    """

    center: int
    triangles: np.ndarray
    local_index: np.ndarray
    first: np.ndarray
    second: np.ndarray
    edge_vertices: np.ndarray
    tangents: np.ndarray
    lengths: np.ndarray
    angles: np.ndarray
    is_boundary: bool

    @property
    def J(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    def edge_triangles(self, j: int) -> tuple[int, int]:
        """Positions (in ``triangles``) of ``K_j`` and ``K_{j+1}``."""
        return j, (j + 1) % self.J

    @property
    def upsilon(self) -> np.ndarray:
        """Sums of the center angles of triangle pairs sharing an edge."""
        return np.array([self.angles[a] + self.angles[b] for a, b in map(self.edge_triangles, range(self.n_edges))])


def vertex_patch(m: Mesh, v: int) -> VertexPatch:
    tris = m.vertex_triangles[v]
    if len(tris) == 0:
        raise MeshError(f"vertex {v} belongs to no triangle")
    loc = np.array([int(np.flatnonzero(m.triangles[t] == v)[0]) for t in tris])
    first = m.triangles[tris, (loc + 1) % 3]
    second = m.triangles[tris, (loc + 2) % 3]
    by_first = {int(a): k for k, a in enumerate(first)}
    if len(by_first) != len(tris):
        raise MeshError(f"non-manifold patch at vertex {v}")
    boundary = bool(m.boundary_vertex[v])
    if boundary:
        starts = [k for k in range(len(tris)) if int(first[k]) not in set(second.tolist())]
        if len(starts) != 1:
            raise MeshError(f"non-manifold patch at boundary vertex {v}")
        k = starts[0]
    else:
        k = 0
    order = [k]
    while len(order) < len(tris):
        nxt = by_first.get(int(second[order[-1]]))
        if nxt is None or nxt in order:
            raise MeshError(f"non-manifold patch at vertex {v}")
        order.append(nxt)
    if not boundary and int(second[order[-1]]) != int(first[order[0]]):
        raise MeshError(f"patch of interior vertex {v} does not close")
    order = np.array(order)
    tris, loc, first, second = tris[order], loc[order], first[order], second[order]
    n_edges = len(tris) - 1 if boundary else len(tris)
    ev = second[:n_edges]
    d = m.vertices[ev] - m.vertices[v]
    lengths = np.linalg.norm(d, axis=1)
    return VertexPatch(
        center=int(v),
        triangles=tris,
        local_index=loc,
        first=first,
        second=second,
        edge_vertices=ev,
        tangents=d / lengths[:, None] if n_edges else np.zeros((0, 2)),
        lengths=lengths,
        angles=m.angles[tris, loc],
        is_boundary=boundary,
    )


# ---------------------------------------------------------------------------


class VertexClass:
    REGULAR = "regular"
    SINGULAR_INTERIOR = "nearly-singular-interior"
    SINGULAR_BOUNDARY = "nearly-singular-boundary"
    SINGULAR_CORNER = "nearly-singular-corner"


@dataclass
class VertexClassification:
    theta_sigma: float
    classes: list[str]
    upsilon: list[np.ndarray]
    exactly_singular: np.ndarray

    def nearly_singular(self) -> np.ndarray:
        return np.array([c != VertexClass.REGULAR for c in self.classes])

    def vertices_of(self, cls: str) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.classes) if c == cls], dtype=np.int64)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.classes:
            out[c] = out.get(c, 0) + 1
        return out


def classify_vertices(m: Mesh, theta_sigma: float | None = None) -> VertexClassification:
    """Label each vertex regular or nearly singular.

    A vertex is nearly singular when no pair of edge-adjacent triangles meets
    at it, or every such pair has angle sum within ``theta_sigma`` of pi.
    ``theta_sigma`` defaults to ``min(smallest mesh angle, pi/6)``.
    """
    min_angle = float(m.angles.min())
    if min_angle <= 1e-12:
        raise MeshError("degenerate angle in mesh")
    ts = min(min_angle, math.pi / 6) if theta_sigma is None else float(theta_sigma)
    classes, ups, exact = [], [], []
    corners = m.corners
    for v in range(m.n_vertices):
        p = vertex_patch(m, v)
        U = p.upsilon
        ups.append(U)
        near = len(U) == 0 or bool(np.all(np.abs(U - math.pi) < ts))
        exact.append(len(U) == 0 or bool(np.all(np.abs(U - math.pi) < 1e-12)))
        if not near:
            classes.append(VertexClass.REGULAR)
        elif v in corners:
            classes.append(VertexClass.SINGULAR_CORNER)
        elif p.is_boundary:
            classes.append(VertexClass.SINGULAR_BOUNDARY)
        else:
            classes.append(VertexClass.SINGULAR_INTERIOR)
    return VertexClassification(ts, classes, ups, np.array(exact))


@dataclass
class StructureReport:
    isolated_singular_ok: bool
    adjacent_singular_edges: list[tuple[int, int]]
    corner_pairs_ok: bool
    corner_pair_triangles: list[tuple[int, int]]

    @property
    def ok(self) -> bool:
        return self.isolated_singular_ok and self.corner_pairs_ok

    def describe(self) -> str:
        lines = [
            f"isolated nearly singular vertices: {'pass' if self.isolated_singular_ok else 'FAIL'}",
            f"no adjacent triangle pair holding two corners: {'pass' if self.corner_pairs_ok else 'FAIL'}",
        ]
        if self.adjacent_singular_edges:
            lines.append(f"  interior edges joining nearly singular vertices: {self.adjacent_singular_edges[:10]}")
        if self.corner_pair_triangles:
            lines.append(f"  triangle pairs with two corners: {self.corner_pair_triangles[:10]}")
        return "\n".join(lines)


def check_structure(m: Mesh, c: VertexClassification) -> StructureReport:
    ns = c.nearly_singular()
    bad_edges = [
        (int(a), int(b))
        for (a, b), interior in zip(m.edges, m.interior_edge)
        if interior and ns[a] and ns[b]
    ]
    corner = np.zeros(m.n_vertices, dtype=bool)
    corner[list(m.corners)] = True
    bad_pairs = []
    for e in np.flatnonzero(m.interior_edge):
        t1, t2 = m.edge_tris[e]
        verts = np.union1d(m.triangles[t1], m.triangles[t2])
        if corner[verts].sum() >= 2:
            bad_pairs.append((int(t1), int(t2)))
    return StructureReport(not bad_edges, bad_edges, not bad_pairs, bad_pairs)


# ---------------------------------------------------------------------------


def write_mesh(m: Mesh, path) -> None:
    lines = [f"# {m.n_vertices} vertices, {m.n_triangles} triangles"]
    lines += [f"v {x!r} {y!r}" for x, y in m.vertices.tolist()]
    lines += [f"t {a} {b} {c}" for a, b, c in m.triangles.tolist()]
    lines += [f"corner {c}" for c in sorted(m.extra_corners)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    verts, tris, corners = [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "v" and len(tok) == 3:
                verts.append((float(tok[1]), float(tok[2])))
            elif tok[0] == "t" and len(tok) == 4:
                tris.append(tuple(int(x) for x in tok[1:]))
            elif tok[0] == "corner" and len(tok) == 2:
                corners.append(int(tok[1]))
            else:
                raise ValueError(f"unknown record {tok[0]!r}")
        except ValueError as exc:
            raise MeshError(f"{path}:{lineno}: {exc}") from None
    if not verts or not tris:
        raise MeshError(f"{path}: no vertices or triangles")
    tri_arr = np.array(tris)
    if tri_arr.max() >= len(verts) or tri_arr.min() < 0:
        raise MeshError(f"{path}: triangle references a missing vertex")
    return Mesh(np.array(verts), tri_arr, frozenset(corners))
