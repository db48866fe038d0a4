"""Polynomial algebra and quadrature on triangles.

Every triangle ``K`` is the image of the reference triangle with vertices
(0,0), (1,0), (0,1) under an affine map ``F(s, t) = V1 + A (s, t)``.  Local
polynomials are stored as coefficient arrays ``c[i, j]`` of the monomials
``s**i * t**j`` in these reference coordinates; the reference coordinates
coincide with the barycentric coordinates ``(lambda_2, lambda_3)`` of ``K``,
which keeps the local systems well conditioned at every mesh size.

Arrays of many polynomials are stacked along leading axes, so most helpers
here operate on ``(..., n, n)`` coefficient arrays.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import fftconvolve
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "DegenerateTriangleError",
    "AffineMap",
    "TriPoly",
    "QuadratureRule",
    "affine_map",
    "integrate_exact",
    "gauss_rule",
    "lyness16",
    "median_centers",
    "reference_moments",
]

MAX_MOMENT_DEGREE = 24


class DegenerateTriangleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# affine maps


@dataclass(frozen=True)
class AffineMap:
    """``x = linear @ (s, t) + translation``."""

    linear: np.ndarray
    translation: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.linear))

    @property
    def area(self) -> float:
        return 0.5 * abs(self.det)

    @property
    def inverse_linear(self) -> np.ndarray:
        return np.linalg.inv(self.linear)

    def forward(self, st) -> np.ndarray:
        st = np.asarray(st, dtype=float)
        return st @ self.linear.T + self.translation

    def inverse(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (xy - self.translation) @ self.inverse_linear.T

    @property
    def vertices(self) -> np.ndarray:
        return self.forward(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))


def affine_map(vertices) -> AffineMap:
    """Affine map sending the reference vertices to ``vertices`` in order."""
    v = np.asarray(vertices, dtype=float).reshape(3, 2)
    if not np.all(np.isfinite(v)):
        raise DegenerateTriangleError("non-finite vertex coordinates")
    linear = np.column_stack([v[1] - v[0], v[2] - v[0]])
    scale = np.ptp(v, axis=0).max()
    if scale == 0.0 or abs(np.linalg.det(linear)) < 1e-14 * scale**2:
        raise DegenerateTriangleError(f"degenerate triangle {v.tolist()}")
    return AffineMap(linear, v[0].copy())


def batch_jacobians(coords: np.ndarray):
    """Linear parts, determinants and inverses for stacked ``(T, 3, 2)`` vertices."""
    A = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=-1)
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    Ainv = np.empty_like(A)
    Ainv[:, 0, 0] = A[:, 1, 1] / det
    Ainv[:, 1, 1] = A[:, 0, 0] / det
    Ainv[:, 0, 1] = -A[:, 0, 1] / det
    Ainv[:, 1, 0] = -A[:, 1, 0] / det
    return A, det, Ainv


def median_centers(vertices) -> np.ndarray:
    """Centroid followed by the three median centers ``G_k = V_k/2 + (V_{k+1} + V_{k+2})/4``."""
    v = np.asarray(vertices, dtype=float)
    g0 = v.mean(axis=0)
    gs = [0.5 * v[k] + 0.25 * v[(k + 1) % 3] + 0.25 * v[(k + 2) % 3] for k in range(3)]
    return np.vstack([g0] + gs)


# ---------------------------------------------------------------------------
# coefficient-array algebra


@functools.lru_cache(maxsize=None)
def reference_moments(size: int = MAX_MOMENT_DEGREE + 1) -> np.ndarray:
    """``M[i, j] = int_ref s**i t**j = i! j! / (i + j + 2)!``."""
    M = np.zeros((size, size))
    for i in range(size):
        for j in range(size - i):
            M[i, j] = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
    M.setflags(write=False)
    return M


@functools.lru_cache(maxsize=None)
def gram_tensor(a: int, b: int) -> np.ndarray:
    """``G[i, j, k, l] = M[i + k, j + l]`` for coefficient arrays of sizes a and b."""
    M = reference_moments()
    i = np.arange(a)[:, None, None, None]
    j = np.arange(a)[None, :, None, None]
    k = np.arange(b)[None, None, :, None]
    l = np.arange(b)[None, None, None, :]
    G = M[i + k, j + l]
    G.setflags(write=False)
    return G


def ref_integrate(c: np.ndarray) -> np.ndarray:
    """Integral over the reference triangle of stacked coefficient arrays."""
    n = c.shape[-1]
    return np.einsum("...ij,ij->...", c, reference_moments()[:n, :n])


def ds(c: np.ndarray) -> np.ndarray:
    out = np.zeros_like(c)
    n = c.shape[-2]
    out[..., : n - 1, :] = c[..., 1:, :] * np.arange(1, n)[:, None]
    return out


def dt(c: np.ndarray) -> np.ndarray:
    out = np.zeros_like(c)
    n = c.shape[-1]
    out[..., :, : n - 1] = c[..., :, 1:] * np.arange(1, n)[None, :]
    return out


def dx_dy(c: np.ndarray, Ainv: np.ndarray):
    """Physical derivatives.  ``Ainv`` broadcasts against the leading axes of ``c``."""
    cs, ct = ds(c), dt(c)
    a00 = Ainv[..., 0, 0, None, None]
    a01 = Ainv[..., 0, 1, None, None]
    a10 = Ainv[..., 1, 0, None, None]
    a11 = Ainv[..., 1, 1, None, None]
    return a00 * cs + a10 * ct, a01 * cs + a11 * ct


def poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two (unstacked) coefficient arrays."""
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for (i, j), v in np.ndenumerate(a):
        if v != 0.0:
            out[i : i + b.shape[0], j : j + b.shape[1]] += v * b
    return out


def pad(c: np.ndarray, n: int) -> np.ndarray:
    m = c.shape[-1]
    if m == n:
        return c
    if m > n:
        if np.any(c[..., n:, :]) or np.any(c[..., :, n:]):
            raise ValueError("cannot truncate a nonzero coefficient array")
        return c[..., :n, :n].copy()
    out = np.zeros(c.shape[:-2] + (n, n))
    out[..., :m, :m] = c
    return out


def vandermonde(s, t, n: int) -> np.ndarray:
    """``V[p, i, j] = s_p**i t_p**j``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sp = s[:, None] ** np.arange(n)[None, :]
    tp = t[:, None] ** np.arange(n)[None, :]
    return sp[:, :, None] * tp[:, None, :]


def linear_power_table(coef: np.ndarray, n: int) -> list[np.ndarray]:
    """Powers 0..n-1 of the affine polynomial ``coef[0] + coef[1] s + coef[2] t``."""
    base = np.zeros((2, 2))
    base[0, 0], base[1, 0], base[0, 1] = coef
    out = [np.ones((1, 1))]
    for _ in range(1, n):
        out.append(poly_mul(out[-1], base))
    return out


def barycentric_poly(coeffs_1d, vertex: int) -> np.ndarray:
    """Coefficient array of ``sum_k coeffs_1d[k] * lambda_vertex**k``."""
    lam = {0: (1.0, -1.0, -1.0), 1: (0.0, 1.0, 0.0), 2: (0.0, 0.0, 1.0)}[vertex]
    n = len(coeffs_1d)
    powers = linear_power_table(np.array(lam), n)
    out = np.zeros((n, n))
    for k, ck in enumerate(coeffs_1d):
        out += ck * pad(powers[k], n)
    return out


def monomial_indices(degree: int) -> list[tuple[int, int]]:
    return [(i, d - i) for d in range(degree + 1) for i in range(d, -1, -1)]


def coeffs_from_vector(vec: np.ndarray, degree: int) -> np.ndarray:
    """Scatter ``(..., nmon)`` vectors ordered by :func:`monomial_indices` into arrays."""
    idx = monomial_indices(degree)
    out = np.zeros(vec.shape[:-1] + (degree + 1, degree + 1))
    for m, (i, j) in enumerate(idx):
        out[..., i, j] = vec[..., m]
    return out


# ---------------------------------------------------------------------------
# TriPoly


class TriPoly:
    """A polynomial living on a single triangle.

    Parameters
    ----------
    coeffs : array (n, n)
        Coefficients of ``s**i t**j`` in the reference coordinates of ``fmap``.
    fmap : AffineMap
    triangle : int, optional
        Owning triangle id (bookkeeping only).
    """

    def __init__(self, coeffs, fmap: AffineMap, triangle: int | None = None):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("coefficients must be a square array")
        self.coeffs = c
        self.fmap = fmap
        self.triangle = triangle

    @classmethod
    def from_vertices(cls, coeffs, vertices, triangle=None):
        return cls(coeffs, affine_map(vertices), triangle)

    @classmethod
    def from_physical(cls, func, degree: int, fmap: AffineMap, triangle=None):
        """Interpolate a callable ``func(x, y)`` known to lie in ``P^degree``."""
        idx = monomial_indices(degree)
        pts = np.array([(i / degree, j / degree) for i, j in idx]) if degree else np.array([[1 / 3, 1 / 3]])
        V = vandermonde(pts[:, 0], pts[:, 1], degree + 1)
        mat = np.stack([V[:, i, j] for i, j in idx], axis=1)
        xy = fmap.forward(pts)
        vals = np.asarray(func(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(len(pts))
        return cls(coeffs_from_vector(np.linalg.solve(mat, vals), degree), fmap, triangle)

    @property
    def degree(self) -> int:
        nz = np.argwhere(np.abs(self.coeffs) > 0)
        return int(nz.sum(axis=1).max()) if len(nz) else 0

    def _like(self, c):
        return TriPoly(c, self.fmap, self.triangle)

    def __call__(self, x, y):
        xy = np.column_stack([np.atleast_1d(x), np.atleast_1d(y)]).astype(float)
        st = self.fmap.inverse(xy)
        return self.eval_ref(st[:, 0], st[:, 1])

    def eval_ref(self, s, t):
        V = vandermonde(s, t, self.coeffs.shape[0])
        return np.einsum("pij,ij->p", V, self.coeffs)

    def dx(self) -> "TriPoly":
        return self._like(dx_dy(self.coeffs, self.fmap.inverse_linear)[0])

    def dy(self) -> "TriPoly":
        return self._like(dx_dy(self.coeffs, self.fmap.inverse_linear)[1])

    def directional(self, direction) -> "TriPoly":
        d = np.asarray(direction, dtype=float)
        gx, gy = dx_dy(self.coeffs, self.fmap.inverse_linear)
        return self._like(d[0] * gx + d[1] * gy)

    def _check(self, other):
        if other.fmap is not self.fmap and not np.allclose(
            other.fmap.vertices, self.fmap.vertices, rtol=0, atol=1e-15
        ):
            raise ValueError("polynomials live on different triangles")

    def __add__(self, other):
        if isinstance(other, TriPoly):
            self._check(other)
            n = max(self.coeffs.shape[0], other.coeffs.shape[0])
            return self._like(pad(self.coeffs, n) + pad(other.coeffs, n))
        c = self.coeffs.copy()
        c[0, 0] += other
        return self._like(c)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, TriPoly):
            self._check(other)
            return self._like(poly_mul(self.coeffs, other.coeffs))
        return self._like(self.coeffs * other)

    __rmul__ = __mul__

    def integrate(self) -> float:
        return integrate_exact(self)

    def __repr__(self):
        return f"TriPoly(degree={self.degree}, triangle={self.triangle})"


def integrate_exact(p: TriPoly, K=None) -> float:
    """Exact integral of ``p`` over its triangle via ``int s^i t^j = i! j!/(i+j+2)!``."""
    if K is not None:
        fmap = K if isinstance(K, AffineMap) else affine_map(K)
        if not np.allclose(fmap.vertices, p.fmap.vertices):
            raise ValueError("polynomial is not attached to the given triangle")
    if p.coeffs.shape[0] > MAX_MOMENT_DEGREE + 1:
        raise ValueError("degree too high for the moment table")
    return float(abs(p.fmap.det) * ref_integrate(p.coeffs))


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points ``(n, 3)`` and weights summing to one.

    ``int_K f  ~=  |K| * sum_i weights[i] * f(points_i)``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def ref_points(self) -> np.ndarray:
        """Points in reference (s, t) coordinates."""
        return self.points[:, 1:]

    def physical_points(self, vertices) -> np.ndarray:
        """Points mapped into one ``(3, 2)`` triangle or stacked ``(T, 3, 2)`` triangles."""
        v = np.asarray(vertices, dtype=float)
        return np.einsum("qk,...kd->...qd", self.points, v)

    def integrate(self, func, vertices) -> float:
        v = np.asarray(vertices, dtype=float)
        xy = self.physical_points(v)
        area = 0.5 * abs(np.linalg.det(np.column_stack([v[1] - v[0], v[2] - v[0]])))
        return float(area * np.dot(self.weights, func(xy[:, 0], xy[:, 1])))


def _to_bary(st: np.ndarray) -> np.ndarray:
    return np.column_stack([1.0 - st[:, 0] - st[:, 1], st[:, 0], st[:, 1]])


@functools.lru_cache(maxsize=None)
def gauss_rule(degree: int) -> QuadratureRule:
    """Triangle rule exact for polynomials of total degree ``degree``.

    Degrees 1 and 2 use the centroid and three-point interior rules; higher
    degrees use the collapsed (Stroud conical) product of Gauss-Jacobi and
    Gauss-Legendre points, which has positive weights.
    """
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= 20:
        raise ValueError(f"unsupported quadrature degree {degree!r}")
    if degree == 1:
        return QuadratureRule(np.full((1, 3), 1.0 / 3.0), np.ones(1), 1)
    if degree == 2:
        pts = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        return QuadratureRule(pts, np.full(3, 1.0 / 3.0), 2)
    n = (degree + 2) // 2
    # int_0^1 int_0^{1-s} f ds dt with s = u, t = (1-u) v
    xu, wu = roots_jacobi(n, 1.0, 0.0)  # weight (1-x) on [-1, 1]
    xv, wv = roots_legendre(n)
    u = 0.5 * (xu + 1.0)
    wu = wu / 4.0
    v = 0.5 * (xv + 1.0)
    wv = wv / 2.0
    S = np.repeat(u, n)
    T = np.outer(1.0 - u, v).ravel()
    W = np.outer(wu, wv).ravel()
    st = np.column_stack([S, T])
    return QuadratureRule(_to_bary(st), W / W.sum(), degree)


def _lyness_orbits(a: float) -> list[list[tuple[float, float, float]]]:
    return [
        [(1 / 3, 1 / 3, 1 / 3)],
        [(0.5, 0.25, 0.25), (0.25, 0.5, 0.25), (0.25, 0.25, 0.5)],
        [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)],
        [(0.5, 0.5, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5)],
        sorted(set(itertools.permutations((a, 1.0 - a, 0.0)))),
    ]


class LynessUnavailable(RuntimeError):
    pass


@functools.lru_cache(maxsize=None)
def _lyness_reference() -> tuple[np.ndarray, np.ndarray, float]:
    mons = monomial_indices(6)
    M = reference_moments()
    target = np.array([2.0 * M[i, j] for i, j in mons])  # barycentric normalization

    def residual(z):
        orbits = _lyness_orbits(z[5])
        rows = []
        for i, j in mons:
            rows.append([sum(p[1] ** i * p[2] ** j for p in orb) for orb in orbits])
        return np.array(rows) @ z[:5] - target

    best = None
    for a0 in np.linspace(0.02, 0.48, 24):
        sol = least_squares(residual, np.r_[np.full(5, 0.05), a0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or np.max(np.abs(residual(best.x))) > 1e-13 or np.any(np.abs(best.x[:5]) < 1e-8):
        raise LynessUnavailable("no 16-point rule with the assumed orbits")
    # a and 1 - a describe the same orbit
    w, a = best.x[:5], float(min(best.x[5], 1.0 - best.x[5]))
    orbits = _lyness_orbits(a)
    pts = np.array([p for orb in orbits for p in orb])
    weights = np.concatenate([np.full(len(orb), wk) for orb, wk in zip(orbits, w)])
    return pts, weights, a


def lyness16(K=None) -> QuadratureRule:
    """16-point rule exact on ``P^6``: centroid, median centers, 12 boundary points.

    Point order: ``G_0`` (centroid), ``G_1..G_3`` (median centers), then the
    boundary orbits (vertices, edge midpoints, six edge points).  The weights
    are obtained by solving the symmetric moment equations; ``K`` only
    validates the triangle, the barycentric rule itself is affine invariant.
    """
    if K is not None:
        affine_map(K)
    pts, w, _ = _lyness_reference()
    return QuadratureRule(pts.copy(), w.copy(), 6)


def lyness_median_weight() -> float:
    """The common weight ``g_1 = g_2 = g_3`` at the median centers."""
    return float(lyness16().weights[1])
