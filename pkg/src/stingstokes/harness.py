"""Error norms and convergence studies on crisscross meshes."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .argyris import VelocityField
from .basis import P3Field
from .geometry import gauss_rule, vandermonde
from .manufactured import ManufacturedCase, manufactured_case
from .mesh import Mesh, generate_crisscross
from .solver import StokesSolution, solve_stokes

__all__ = [
    "ConvergenceRow",
    "ConvergenceResult",
    "CSV_COLUMNS",
    "error_norms",
    "velocity_h1_error",
    "pressure_l2_error",
    "observed_orders",
    "run_convergence",
    "TABLE1",
]

ERROR_DEGREE = 14
CSV_COLUMNS = ("N", "h", "vel_h1_err", "vel_order", "prs_l2_err", "prs_order", "min_patch_sv", "wall_ms")

# published reference errors for N = 4, 8, 16, 32
TABLE1 = {
    "N": (4, 8, 16, 32),
    "vel_h1_err": (1.1264e-2, 6.1498e-4, 3.5942e-5, 2.2002e-6),
    "vel_order": (None, 4.1950, 4.0968, 4.0299),
    "prs_l2_err": (5.8000e-2, 2.7012e-3, 1.6760e-4, 1.0454e-5),
    "prs_order": (None, 4.4244, 4.0105, 4.0029),
}


def _ref_vandermonde(degree: int, n: int):
    rule = gauss_rule(degree)
    st = rule.ref_points
    return rule, vandermonde(st[:, 0], st[:, 1], n)


def velocity_h1_error(case: ManufacturedCase, u_h: VelocityField, degree: int = ERROR_DEGREE) -> float:
    """``|u - u_h|_1`` by per-triangle quadrature."""
    m = u_h.mesh
    rule, V = _ref_vandermonde(degree, 5)
    xy = rule.physical_points(m.coords)
    gu = case.grad_u(xy[..., 0], xy[..., 1])
    total = 0.0
    for g, (c, d) in zip(u_h.gradients(), ((0, 0), (0, 1), (1, 0), (1, 1))):
        vals = np.einsum("qij,tij->tq", V, g)
        total += np.einsum("tq,q,t->", (vals - gu[c, d]) ** 2, rule.weights, m.areas)
    return float(np.sqrt(total))


def pressure_l2_error(case: ManufacturedCase, p_h: P3Field, degree: int = ERROR_DEGREE, mean: float = 0.0) -> float:
    """``||(p - mean) - p_h||_0`` by per-triangle quadrature."""
    m = p_h.mesh
    rule, V = _ref_vandermonde(degree, p_h.coeffs.shape[-1])
    xy = rule.physical_points(m.coords)
    pv = case.p(xy[..., 0], xy[..., 1]) - mean
    vals = np.einsum("qij,tij->tq", V, p_h.coeffs)
    return float(np.sqrt(np.einsum("tq,q,t->", (vals - pv) ** 2, rule.weights, m.areas)))


def error_norms(case: ManufacturedCase, u_h: VelocityField, p_h: P3Field, degree: int = ERROR_DEGREE):
    return velocity_h1_error(case, u_h, degree), pressure_l2_error(case, p_h, degree, case.pressure_mean)


def observed_orders(errors, hs) -> list:
    out = [None]
    for k in range(1, len(errors)):
        e0, e1 = errors[k - 1], errors[k]
        out.append(math.log(e0 / e1) / math.log(hs[k - 1] / hs[k]) if e0 > 0 and e1 > 0 else None)
    return out


@dataclass
class ConvergenceRow:
    label: str
    N: int | None
    h: float
    vel_h1_err: float
    vel_order: float | None
    prs_l2_err: float
    prs_order: float | None
    min_patch_sv: float
    wall_ms: float
    diagnostics: dict = field(default_factory=dict)

    def csv_values(self) -> list:
        def fmt(x):
            return "" if x is None else f"{x:.6e}" if isinstance(x, float) else str(x)

        return [fmt(self.N if self.N is not None else self.label), fmt(self.h), fmt(self.vel_h1_err), fmt(self.vel_order),
                fmt(self.prs_l2_err), fmt(self.prs_order), fmt(self.min_patch_sv), f"{self.wall_ms:.1f}"]


@dataclass
class ConvergenceResult:
    rows: list
    solutions: list
    case: ManufacturedCase

    def to_csv(self, include_timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = CSV_COLUMNS if include_timing else CSV_COLUMNS[:-1]
        w.writerow(cols)
        for r in self.rows:
            w.writerow(r.csv_values()[: len(cols)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"case": self.case.description, "rows": [asdict(r) for r in self.rows]}, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _diagnostics(sol: StokesSolution) -> dict:
    rep = sol.recovery.report
    cls = sol.recovery.classification.counts()
    p = sol.pressure
    return {
        "n_triangles": sol.mesh.n_triangles,
        "n_vertices": sol.mesh.n_vertices,
        "velocity_dofs": sol.stream.space.ndof,
        "velocity_residual": sol.stream.residual,
        "divergence_ratio": sol.velocity.divergence_ratio(),
        "pressure_mean_ratio": abs(p.mean()) / max(p.l2_norm(), 1e-300),
        "vertex_classes": cls,
        "min_regular_sv_over_area": rep.min_relative_singular_value(sol.mesh, 2),
        "recovery": rep.to_dict(),
    }


def run_convergence(
    meshes,
    case: ManufacturedCase | None = None,
    theta_sigma: float | None = None,
) -> ConvergenceResult:
    """Solve on each mesh (an int ``N`` means the crisscross mesh) and tabulate errors."""
    case = manufactured_case() if case is None else case
    rows, sols = [], []
    for item in meshes:
        if isinstance(item, Mesh):
            m, N, label = item, None, "mesh"
        elif isinstance(item, tuple):
            label, m = item
            N = None
        else:
            N = int(item)
            m, label = generate_crisscross(N), f"crisscross:{N}"
        t0 = time.perf_counter()
        sol = solve_stokes(m, case.f, theta_sigma)
        ev, ep = error_norms(case, sol.velocity, sol.pressure)
        wall = 1e3 * (time.perf_counter() - t0)
        rows.append(
            ConvergenceRow(label, N, float(m.h), ev, None, ep, None, sol.recovery.report.min_singular_value(), wall, _diagnostics(sol))
        )
        sols.append(sol)
    hs = [r.h for r in rows]
    for r, o in zip(rows, observed_orders([r.vel_h1_err for r in rows], hs)):
        r.vel_order = o
    for r, o in zip(rows, observed_orders([r.prs_l2_err for r in rows], hs)):
        r.prs_order = o
    return ConvergenceResult(rows, sols, case)
