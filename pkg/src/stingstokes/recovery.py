"""Successive recovery of the piecewise-cubic pressure (non-sting and sting parts).

Given a divergence-free velocity ``u_h`` the discrete pressure is fixed by

    (p_h, div v) = (f, v) - (grad u_h, grad v)

for every continuous P4 velocity ``v`` vanishing on the boundary.  The
pressure is assembled piece by piece from local test functions:

* ``ns``   non-sting parts, one 6 x 6 diagonal system per triangle (interior
  bubbles ``v_k e_i``);
* ``dot1`` sting parts at regular vertices, least squares over edge-pair test
  functions ``w_j t_j`` and ``w_j t_j^perp``;
* ``dot2`` sting parts at nearly singular non-corner vertices, where the
  normal rows are replaced by derivative-jump equations;
* ``dot3`` sting parts at nearly singular corners;
* ``final`` the piecewise-constant part, set by :mod:`stingstokes.coarse`.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .argyris import VelocityField
from .basis import (
    BUBBLE_REF,
    EDGE_HALF_REF,
    STING_REF,
    P3Field,
    PressureDecomposition,
    recompose,
    triangle_bases,
)
from .geometry import LynessUnavailable, batch_jacobians, dx_dy, gauss_rule, gram_tensor, lyness_median_weight, vandermonde
from .linalg import min_norm_lstsq
from .mesh import Mesh, VertexClass, VertexClassification, VertexPatch, classify_vertices, vertex_patch

log = logging.getLogger(__name__)

__all__ = [
    "RecoveryError",
    "LocalPairings",
    "VertexSolution",
    "RecoveryReport",
    "RecoveryState",
    "STAGES",
    "HALF_PAIRS",
    "local_pairings",
    "start_recovery",
    "step1_nonsting",
    "nonsting_by_formula",
    "regular_system",
    "jump_system",
    "step2_regular",
    "step3_nearly_singular",
    "step4_corner",
    "superpose",
    "jump_tangential",
    "jump_normal",
    "vertex_gradients",
    "recover_pressure",
]

STAGES = ("init", "ns", "dot1", "dot2", "dot3", "final")
HALF_PAIRS = ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))
RHS_DEGREE = 14
SV_ALARM = 1e-3

_REF_V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class RecoveryError(RuntimeError):
    pass


def _half(a: int, b: int) -> int:
    return 3 + HALF_PAIRS.index((a, b))


def _rot(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


# ---------------------------------------------------------------------------
# per-triangle pairings with the reference test functions


@dataclass
class LocalPairings:
    """Per-triangle integrals against the nine reference test functions.

    Test function ``phi`` runs over the three interior bubbles and the six
    edge halves of :data:`HALF_PAIRS` (unit edge length; scale by ``l``).

    ``load[t, phi, c] = (f_c, phi) - (grad u_c, grad phi)`` and
    ``pair[t, b, phi, c] = (B_b, d phi / d x_c)`` with ``B_b`` the ten basis
    cubics of :func:`stingstokes.basis.triangle_bases`.
    """

    mesh: Mesh
    bases: np.ndarray
    load: np.ndarray
    pair: np.ndarray


def _test_functions() -> np.ndarray:
    return np.concatenate([BUBBLE_REF, np.stack([EDGE_HALF_REF[a, b] for a, b in HALF_PAIRS])])


def local_pairings(m: Mesh, u_h: VelocityField, f, bases: np.ndarray | None = None) -> LocalPairings:
    if bases is None:
        bases = triangle_bases(m.coords)
    _, _, Ainv = batch_jacobians(m.coords)
    phi = _test_functions()  # (9, 5, 5)
    px, py = dx_dy(phi[None], Ainv[:, None])  # (T, 9, 5, 5)
    two_area = 2.0 * m.areas
    G45, G55 = gram_tensor(4, 5), gram_tensor(5, 5)
    pair = np.stack(
        [np.einsum("tbij,ijkl,tpkl->tbp", bases, G45, d) for d in (px, py)], axis=-1
    ) * two_area[:, None, None, None]
    ux, uy, vx, vy = u_h.gradients()
    grad_term = np.stack(
        [
            np.einsum("tij,ijkl,tpkl->tp", gx, G55, px) + np.einsum("tij,ijkl,tpkl->tp", gy, G55, py)
            for gx, gy in ((ux, uy), (vx, vy))
        ],
        axis=-1,
    ) * two_area[:, None, None]
    load = -grad_term
    if f is not None:
        rule = gauss_rule(RHS_DEGREE)
        xy = rule.physical_points(m.coords)  # (T, Q, 2)
        fv = np.asarray(f(xy[..., 0], xy[..., 1]), dtype=float)  # (2, T, Q)
        st = rule.ref_points
        phiq = np.einsum("qij,pij->pq", vandermonde(st[:, 0], st[:, 1], 5), phi)
        load = load + np.einsum("q,ctq,pq->tpc", rule.weights, fv, phiq) * m.areas[:, None, None]
    return LocalPairings(m, bases, load, pair)


# ---------------------------------------------------------------------------
# jumps


def vertex_gradients(coeffs: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Physical gradients of per-triangle polynomials at their three vertices, ``(T, 3, 2)``."""
    _, _, Ainv = batch_jacobians(coords)
    gx, gy = dx_dy(coeffs, Ainv)
    n = coeffs.shape[-1]
    V = vandermonde(_REF_V[:, 0], _REF_V[:, 1], n)
    return np.stack([np.einsum("vij,tij->tv", V, gx), np.einsum("vij,tij->tv", V, gy)], axis=-1)


def _field_coeffs(q) -> np.ndarray:
    return q.coeffs if isinstance(q, P3Field) else np.asarray(q)


def jump_tangential(q, patch: VertexPatch, j: int, m: Mesh | None = None, grads: np.ndarray | None = None) -> float:
    """``l^3 (d_t q|K_j (V) - d_t q|K_{j+1} (V))`` across edge ``j`` of the patch."""
    if j >= patch.n_edges:
        raise ValueError(f"edge {j} of the patch is not interior")
    if grads is None:
        mesh = m if m is not None else q.mesh
        grads = vertex_gradients(_field_coeffs(q), mesh.coords)
    a, b = patch.edge_triangles(j)
    ta, tb = patch.triangles[a], patch.triangles[b]
    t = patch.tangents[j]
    da = grads[ta, patch.local_index[a]] @ t
    db = grads[tb, patch.local_index[b]] @ t
    return float(patch.lengths[j] ** 3 * (da - db))


def jump_normal(q, m: Mesh, t1: int, t2: int, at: int, ell: float, normal: np.ndarray, grads=None) -> float:
    """``l^3 (d_n q|K_1 (W) - d_n q|K (W))`` at the shared vertex ``W = at``."""
    if grads is None:
        grads = vertex_gradients(_field_coeffs(q), m.coords)
    la = int(np.flatnonzero(m.triangles[t1] == at)[0])
    lb = int(np.flatnonzero(m.triangles[t2] == at)[0])
    return float(ell**3 * ((grads[t1, la] - grads[t2, lb]) @ normal))


# ---------------------------------------------------------------------------
# state and report


@dataclass
class VertexSolution:
    vertex: int
    step: int
    vertex_class: str
    triangles: np.ndarray
    local_index: np.ndarray
    coefficients: np.ndarray
    row_kinds: list
    singular_values: np.ndarray
    residual: float
    closed_form_gap: float = 0.0
    note: str = ""

    @property
    def smallest_singular_value(self) -> float:
        return float(self.singular_values[-1]) if len(self.singular_values) else 0.0

    def summary(self) -> dict:
        return {
            "vertex": self.vertex,
            "step": self.step,
            "class": self.vertex_class,
            "J": int(len(self.triangles)),
            "rows": len(self.row_kinds),
            "sigma_min": self.smallest_singular_value,
            "residual": self.residual,
            "closed_form_gap": self.closed_form_gap,
            "note": self.note,
        }


@dataclass
class RecoveryReport:
    nonsting_offdiag: float = 0.0
    nonsting_lyness_gap: float | None = None
    vertex_solutions: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    coarse_residual: float | None = None
    mean_correction: float | None = None
    final_mean: float | None = None

    def min_singular_value(self, step: int | None = None) -> float:
        s = [v.smallest_singular_value for v in self.vertex_solutions if step is None or v.step == step]
        return float(min(s)) if s else float("nan")

    def min_relative_singular_value(self, m: Mesh, step: int = 2) -> float:
        """Smallest ``sigma_min / patch area`` over the vertex solves of one step."""
        vals = [
            v.smallest_singular_value / float(m.areas[v.triangles].sum())
            for v in self.vertex_solutions
            if v.step == step
        ]
        return float(min(vals)) if vals else float("nan")

    def max_closed_form_gap(self) -> float:
        return max((v.closed_form_gap for v in self.vertex_solutions), default=0.0)

    def to_dict(self) -> dict:
        by_step: dict = {}
        for v in self.vertex_solutions:
            d = by_step.setdefault(str(v.step), {"count": 0, "sigma_min": math.inf, "max_residual": 0.0})
            d["count"] += 1
            d["sigma_min"] = min(d["sigma_min"], v.smallest_singular_value)
            d["max_residual"] = max(d["max_residual"], v.residual)
        return {
            "nonsting_offdiag": self.nonsting_offdiag,
            "nonsting_lyness_gap": self.nonsting_lyness_gap,
            "closed_form_gap": self.max_closed_form_gap(),
            "vertex_steps": by_step,
            "notes": sorted({v.note for v in self.vertex_solutions if v.note}),
            "warnings": list(self.warnings),
            "timings_ms": dict(self.timings),
            "coarse_residual": self.coarse_residual,
            "mean_correction": self.mean_correction,
            "final_mean": self.final_mean,
        }


@dataclass
class RecoveryState:
    mesh: Mesh
    velocity: VelocityField
    classification: VertexClassification
    pairings: LocalPairings
    decomposition: PressureDecomposition
    stage: str = "init"
    report: RecoveryReport = field(default_factory=RecoveryReport)
    snapshots: dict = field(default_factory=dict)
    patches: dict = field(default_factory=dict)

    def patch(self, v: int) -> VertexPatch:
        if v not in self.patches:
            self.patches[v] = vertex_patch(self.mesh, v)
        return self.patches[v]

    def field(self, stage: str | None = None) -> P3Field:
        d = self.decomposition if stage is None else self.snapshots[stage]
        return recompose(d, self.pairings.bases)


def start_recovery(
    m: Mesh,
    u_h: VelocityField,
    f,
    classification: VertexClassification | None = None,
) -> RecoveryState:
    t0 = time.perf_counter()
    if classification is None:
        classification = classify_vertices(m)
    pairings = local_pairings(m, u_h, f)
    state = RecoveryState(m, u_h, classification, pairings, PressureDecomposition.zeros(m))
    state.report.timings["pairings"] = 1e3 * (time.perf_counter() - t0)
    return state


# ---------------------------------------------------------------------------
# step 1


@dataclass
class NonStingResult:
    coefficients: np.ndarray
    matrices: np.ndarray
    step: int = 1


def step1_nonsting(state: RecoveryState) -> NonStingResult:
    """Solve the 6 x 6 bubble system on every triangle."""
    P = state.pairings
    # rows: test v_l e_j (l bubble, j component); columns: N_{k,i}
    M = np.zeros((state.mesh.n_triangles, 6, 6))
    rhs = np.zeros((state.mesh.n_triangles, 6))
    for l in range(3):
        for j in range(2):
            M[:, 2 * l + j, :] = P.pair[:, 3:9, l, j]
            rhs[:, 2 * l + j] = P.load[:, l, j]
    diag = np.einsum("tii->ti", M)
    if np.any(np.abs(diag) <= 1e-14 * np.abs(M).max(axis=(1, 2))[:, None]):
        raise RecoveryError("vanishing diagonal in a non-sting system (degenerate triangle)")
    off = M - diag[..., None] * np.eye(6)
    state.report.nonsting_offdiag = float(np.max(np.abs(off).max(axis=(1, 2)) / np.abs(diag).max(axis=1)))
    coef = np.linalg.solve(M, rhs[..., None])[..., 0]
    try:
        alt = nonsting_by_formula(state, lyness_median_weight())
        state.report.nonsting_lyness_gap = float(np.abs(alt - coef).max() / max(np.abs(coef).max(), 1e-300))
    except LynessUnavailable:
        state.report.nonsting_lyness_gap = None
    return NonStingResult(coef, M)


def nonsting_by_formula(state: RecoveryState, median_weight: float) -> np.ndarray:
    """Explicit non-sting coefficients ``-(rhs) / (|K| g_1)`` from the 16-point rule weight."""
    rhs = np.stack([state.pairings.load[:, l, j] for l in range(3) for j in range(2)], axis=1)
    return -rhs / (state.mesh.areas[:, None] * median_weight)


# ---------------------------------------------------------------------------
# sting systems


def _tangent_rows(state: RecoveryState, patch: VertexPatch, edges, perp: bool, nonsting: np.ndarray):
    """Rows ``(S_{V,K_m}, div(w_j xi))`` and right-hand sides for the listed edges."""
    P = state.pairings
    m = state.mesh
    J = patch.J
    rows, rhs, closed = [], [], []
    for j in edges:
        t_j = patch.tangents[j]
        xi = _rot(t_j) if perp else t_j
        ell = patch.lengths[j]
        row = np.zeros(J)
        b = 0.0
        for pos in patch.edge_triangles(j):
            t = int(patch.triangles[pos])
            a = int(patch.local_index[pos])
            c = int(np.flatnonzero(m.triangles[t] == patch.edge_vertices[j])[0])
            h = _half(a, c)
            row[pos] += ell * (P.pair[t, a, h] @ xi)
            b += ell * ((P.load[t, h] - nonsting[t] @ P.pair[t, 3:9, h]) @ xi)
        rows.append(row)
        rhs.append(b)
        closed.append(_closed_form_row(m, patch, j, perp))
    return np.array(rows), np.array(rhs), np.array(closed)


def _closed_form_row(m: Mesh, patch: VertexPatch, j: int, perp: bool) -> np.ndarray:
    """Trigonometric form of the same row: areas for ``t``, cotangent terms for ``t^perp``."""
    row = np.zeros(patch.J)
    a, b = patch.edge_triangles(j)
    ell = patch.lengths[j]
    X = m.vertices
    V = X[patch.center]
    la = np.linalg.norm(X[patch.first[a]] - V)
    lb = np.linalg.norm(X[patch.second[b]] - V)
    ta, tb = patch.angles[a], patch.angles[b]
    if perp:
        row[a] += ell * la * math.cos(ta) / 2
        row[b] -= ell * lb * math.cos(tb) / 2
    else:
        row[a] += ell * la * math.sin(ta) / 2
        row[b] += ell * lb * math.sin(tb) / 2
    return row


def _sting_vertex_gradients(state: RecoveryState) -> np.ndarray:
    """``g[t, a, w] = grad S_{a,t}`` at local vertex ``w``, ``(T, 3, 3, 2)``."""
    coords = state.mesh.coords
    T = len(coords)
    c = np.broadcast_to(STING_REF, (T, 3, 4, 4)).reshape(T * 3, 4, 4)
    return vertex_gradients(c, np.repeat(coords, 3, axis=0)).reshape(T, 3, 3, 2)


def _jump_rows(state: RecoveryState, patch: VertexPatch, edges, field_grads: np.ndarray, sgrads: np.ndarray):
    """Jump rows for the sting unknowns and right-hand sides ``-J(field)``."""
    J = patch.J
    rows, rhs, closed = [], [], []
    for j in edges:
        a, b = patch.edge_triangles(j)
        ell, t = patch.lengths[j], patch.tangents[j]
        row = np.zeros(J)
        for pos, sign in ((a, 1.0), (b, -1.0)):
            tri, loc = patch.triangles[pos], patch.local_index[pos]
            row[pos] += sign * ell**3 * (sgrads[tri, loc, loc] @ t)
        rows.append(row)
        crow = np.zeros(J)
        crow[a], crow[b] = -600 * ell**2, 600 * ell**2
        closed.append(crow)
        rhs.append(-jump_tangential(None, patch, j, grads=field_grads))
    return np.array(rows), np.array(rhs), np.array(closed)


def _lstsq_solution(state, patch, step, cls, rows, rhs, kinds, closed, note="") -> VertexSolution:
    res = min_norm_lstsq(rows, rhs)
    scale = max(np.abs(rows).max(), 1e-300)
    gap = float(np.abs(rows - closed).max() / scale)
    return VertexSolution(
        patch.center, step, cls, patch.triangles.copy(), patch.local_index.copy(),
        res.x, kinds, res.singular_values, res.residual, gap, note,
    )


def regular_system(state: RecoveryState, v: int):
    """Rows, right-hand sides, closed-form rows and row kinds of the ``t`` / ``t^perp`` system at ``v``."""
    patch = state.patch(int(v))
    if patch.n_edges == 0:
        raise RecoveryError(f"vertex {v} has no interior edge")
    ns = state.decomposition.nonsting
    edges = range(patch.n_edges)
    rt, bt, ct = _tangent_rows(state, patch, edges, False, ns)
    rn, bn, cn = _tangent_rows(state, patch, edges, True, ns)
    kinds = ["t"] * len(bt) + ["t-perp"] * len(bn)
    return np.vstack([rt, rn]), np.concatenate([bt, bn]), np.vstack([ct, cn]), kinds


def jump_system(state: RecoveryState, v: int, q: P3Field):
    """Rows of the ``t`` / jump system at ``v`` with jump data ``-J(q)``."""
    patch = state.patch(int(v))
    ns = state.decomposition.nonsting
    fgrads = vertex_gradients(q.coeffs, state.mesh.coords)
    sgrads = _sting_vertex_gradients(state)
    edges = range(patch.n_edges)
    rt, bt, ct = _tangent_rows(state, patch, edges, False, ns)
    rj, bj, cj = _jump_rows(state, patch, edges, fgrads, sgrads)
    kinds = ["t"] * len(bt) + ["jump"] * len(bj)
    return np.vstack([rt, rj]), np.concatenate([bt, bj]), np.vstack([ct, cj]), kinds


def step2_regular(state: RecoveryState) -> list[VertexSolution]:
    """Sting coefficients at regular vertices from ``2J`` (or ``2(J-1)``) edge rows."""
    _require(state, "ns")
    out = []
    for v in state.classification.vertices_of(VertexClass.REGULAR):
        patch = state.patch(int(v))
        rows, rhs, closed, kinds = regular_system(state, int(v))
        sol = _lstsq_solution(state, patch, 2, VertexClass.REGULAR, rows, rhs, kinds, closed)
        area = float(state.mesh.areas[patch.triangles].sum())
        if sol.smallest_singular_value < SV_ALARM * area:
            msg = f"vertex {int(v)}: smallest singular value {sol.smallest_singular_value:.3e} below {SV_ALARM:g} x patch area"
            log.warning(msg)
            state.report.warnings.append(msg)
        out.append(sol)
    return out


def step3_nearly_singular(state: RecoveryState) -> list[VertexSolution]:
    """Nearly singular non-corner vertices: tangential rows plus jump rows of the ``dot1`` field."""
    _require(state, "dot1")
    ns = state.decomposition.nonsting
    fgrads = vertex_gradients(state.field().coeffs, state.mesh.coords)
    sgrads = _sting_vertex_gradients(state)
    out = []
    for cls in (VertexClass.SINGULAR_BOUNDARY, VertexClass.SINGULAR_INTERIOR):
        for v in state.classification.vertices_of(cls):
            patch = state.patch(int(v))
            if cls == VertexClass.SINGULAR_BOUNDARY and patch.J != 2:
                raise RecoveryError(
                    f"nearly singular boundary vertex {int(v)} meets {patch.J} triangles; exactly 2 are required"
                )
            edges = range(patch.n_edges)
            rt, bt, ct = _tangent_rows(state, patch, edges, False, ns)
            rj, bj, cj = _jump_rows(state, patch, edges, fgrads, sgrads)
            rows, rhs = np.vstack([rt, rj]), np.concatenate([bt, bj])
            kinds = ["t"] * len(bt) + ["jump"] * len(bj)
            if cls == VertexClass.SINGULAR_BOUNDARY:
                try:
                    x = np.linalg.solve(rows, rhs)
                except np.linalg.LinAlgError as exc:
                    raise RecoveryError(f"singular 2 x 2 system at boundary vertex {int(v)}") from exc
                sv = np.linalg.svd(rows, compute_uv=False)
                gap = float(np.abs(rows - np.vstack([ct, cj])).max() / np.abs(rows).max())
                out.append(
                    VertexSolution(int(v), 3, cls, patch.triangles.copy(), patch.local_index.copy(), x, kinds, sv,
                                   float(np.linalg.norm(rows @ x - rhs)), gap)
                )
            else:
                out.append(_lstsq_solution(state, patch, 3, cls, rows, rhs, kinds, np.vstack([ct, cj])))
    return out


def step4_corner(state: RecoveryState) -> list[VertexSolution]:
    """Nearly singular corners, using the ``dot2`` field."""
    _require(state, "dot2")
    m = state.mesh
    ns = state.decomposition.nonsting
    fgrads = vertex_gradients(state.field().coeffs, m.coords)
    sgrads = _sting_vertex_gradients(state)
    out = []
    for v in state.classification.vertices_of(VertexClass.SINGULAR_CORNER):
        patch = state.patch(int(v))
        if patch.J >= 2:
            edges = range(patch.n_edges)
            rt, bt, ct = _tangent_rows(state, patch, edges, False, ns)
            rj, bj, cj = _jump_rows(state, patch, edges, fgrads, sgrads)
            kinds = ["t"] * len(bt) + ["jump"] * len(bj)
            out.append(
                _lstsq_solution(
                    state, patch, 4, VertexClass.SINGULAR_CORNER, np.vstack([rt, rj]), np.concatenate([bt, bj]),
                    kinds, np.vstack([ct, cj]), note="corner with J>=2: interior-edge tangential and jump rows",
                )
            )
            continue
        t1 = int(patch.triangles[0])
        a = int(patch.local_index[0])
        w1, w2 = int(patch.first[0]), int(patch.second[0])
        e = m.edge_index(w1, w2)
        nb = [int(t) for t in m.edge_tris[e] if t >= 0 and t != t1]
        if not nb:
            raise RecoveryError(f"corner {int(v)}: no triangle shares two vertices with its only triangle")
        K = nb[0]
        X = m.vertices
        d = X[w2] - X[w1]
        ell_e = float(np.linalg.norm(d))
        normal = np.array([d[1], -d[0]]) / ell_e  # outward from the ccw triangle (V, w1, w2)
        ell = 2.0 * float(m.areas[t1]) / ell_e
        b1 = int(np.flatnonzero(m.triangles[t1] == w1)[0])
        js = ell**3 * (sgrads[t1, a, b1] @ normal)
        jq = jump_normal(None, m, t1, K, w1, ell, normal, grads=fgrads)
        alpha = -jq / js
        gap = abs(js - (-180 * ell**2)) / (180 * ell**2)
        out.append(
            VertexSolution(int(v), 4, VertexClass.SINGULAR_CORNER, patch.triangles.copy(), patch.local_index.copy(),
                           np.array([alpha]), ["normal-jump"], np.array([abs(js)]), 0.0, float(gap),
                           note="corner with J=1: normal jump at the vertex following the corner")
        )
    return out


# ---------------------------------------------------------------------------
# superposition


_NEXT = {1: ("init", "ns"), 2: ("ns", "dot1"), 3: ("dot1", "dot2"), 4: ("dot2", "dot3")}


def _require(state: RecoveryState, stage: str) -> None:
    if state.stage != stage:
        raise RecoveryError(f"stage {state.stage!r} reached, {stage!r} required")


def superpose(state: RecoveryState, result, step: int | None = None) -> RecoveryState:
    """Merge the output of one step into the accumulated decomposition."""
    if isinstance(result, NonStingResult):
        step = 1
    elif step is None:
        steps = {r.step for r in result}
        if len(steps) > 1:
            raise RecoveryError("mixed steps in one superposition")
        step = steps.pop() if steps else None
        if step is None:
            step = {"ns": 2, "dot1": 3, "dot2": 4}.get(state.stage)
    if step not in _NEXT:
        raise RecoveryError(f"unknown step {step!r}")
    before, after = _NEXT[step]
    _require(state, before)
    d = state.decomposition
    if step == 1:
        d.nonsting[:] = result.coefficients
    else:
        for sol in result:
            d.sting[sol.triangles, sol.local_index] += sol.coefficients
        state.report.vertex_solutions.extend(result)
    state.stage = after
    state.snapshots[after] = d.copy()
    return state


def recover_pressure(
    m: Mesh,
    u_h: VelocityField,
    f,
    classification: VertexClassification | None = None,
) -> RecoveryState:
    """Steps 1-4; returns the state at stage ``dot3``."""
    state = start_recovery(m, u_h, f, classification)
    for k, fn in enumerate((step1_nonsting, step2_regular, step3_nearly_singular, step4_corner), start=1):
        t0 = time.perf_counter()
        superpose(state, fn(state), step=k)
        state.report.timings[f"step{k}"] = 1e3 * (time.perf_counter() - t0)
    return state
