import numpy as np
import pytest

from stingstokes.mesh import Mesh, generate_crisscross


def random_triangle(rng, min_angle=0.35):
    """Counterclockwise triangle with all angles above ``min_angle`` (radians)."""
    while True:
        v = rng.uniform(-1.0, 1.0, (3, 2)) * rng.uniform(0.05, 3.0)
        d1, d2 = v[1] - v[0], v[2] - v[0]
        if d1[0] * d2[1] - d1[1] * d2[0] < 0:
            v = v[[0, 2, 1]]
        a = []
        for k in range(3):
            p, q = v[(k + 1) % 3] - v[k], v[(k + 2) % 3] - v[k]
            a.append(np.arccos(np.clip(p @ q / np.linalg.norm(p) / np.linalg.norm(q), -1, 1)))
        if min(a) > min_angle:
            return v


def _compact(verts, tris, corners=()):
    used = np.unique(np.asarray(tris))
    remap = -np.ones(len(verts), dtype=int)
    remap[used] = np.arange(len(used))
    return Mesh(np.asarray(verts)[used], remap[np.asarray(tris)], frozenset(int(remap[c]) for c in corners))


def split_bottom_mesh(N=4):
    """Crisscross mesh whose bottom boundary triangles are halved at the edge midpoints.

    Each new midpoint is a boundary vertex with exactly two triangles, so it is
    exactly singular; the square centers on the bottom row become regular.
    """
    m = generate_crisscross(N)
    verts = [tuple(p) for p in m.vertices]
    tris = []
    for t in m.triangles:
        a, b, c = (int(x) for x in t)
        pa, pb = m.vertices[a], m.vertices[b]
        if abs(pa[1]) < 1e-14 and abs(pb[1]) < 1e-14:
            verts.append(tuple(0.5 * (pa + pb)))
            mid = len(verts) - 1
            tris += [(a, mid, c), (mid, b, c)]
        else:
            tris.append((a, b, c))
    return Mesh(np.array(verts), np.array(tris))


def corner_split_mesh(N=4):
    """Crisscross mesh whose four corner squares are cut by the diagonal that
    avoids the corner, so every corner meets a single triangle."""
    m = generate_crisscross(N)
    h = 1.0 / N
    X = m.vertices
    drop, tris = set(), []
    idx = {tuple(np.round(p / h * 2).astype(int)): k for k, p in enumerate(X)}

    def v(i, j):
        return idx[(2 * i, 2 * j)]

    squares = {(0, 0): ((1, 0), (0, 1)), (N - 1, 0): ((0, 0), (1, 1)), (N - 1, N - 1): ((1, 0), (0, 1)), (0, N - 1): ((0, 0), (1, 1))}
    for (i, j), diag in squares.items():
        drop.add(idx[(2 * i + 1, 2 * j + 1)])
        a, b, c, d = v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)
        if diag == ((1, 0), (0, 1)):  # diagonal b-d
            tris += [(a, b, d), (b, c, d)]
        else:  # diagonal a-c
            tris += [(a, b, c), (a, c, d)]
    for t in m.triangles:
        if not drop.intersection(int(x) for x in t):
            tris.append(tuple(int(x) for x in t))
    return _compact(X, tris)


def extra_corner_mesh(N=4):
    """Split-bottom mesh with one boundary midpoint declared a corner (J = 2)."""
    m = split_bottom_mesh(N)
    mids = [k for k, p in enumerate(m.vertices) if abs(p[1]) < 1e-14 and abs(p[0] * N * 2 % 2 - 1) < 1e-9]
    target = min(mids, key=lambda k: abs(m.vertices[k, 0] - 0.5 + 0.5 / N))
    return Mesh(m.vertices, m.triangles, frozenset({target}))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def crisscross4():
    return generate_crisscross(4)


@pytest.fixture(scope="session")
def perturbed4():
    return generate_crisscross(4, 0.05, seed=7)
