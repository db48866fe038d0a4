"""End-to-end Stokes solve: stream function, velocity, five-step pressure."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .argyris import (
    StreamField,
    VelocityField,
    assemble_velocity_system,
    build_stream_space,
    solve_stream,
    stream_to_velocity,
)
from .basis import P3Field
from .coarse import CoarseSolution, build_br_space, finalize_pressure, solve_step5
from .mesh import Mesh, MeshError, check_structure, classify_vertices
from .recovery import RecoveryState, recover_pressure

__all__ = ["StokesSolution", "StructureError", "solve_stokes"]


class StructureError(MeshError):
    """The mesh violates the vertex-structure conditions the recovery relies on."""


@dataclass
class StokesSolution:
    mesh: Mesh
    stream: StreamField
    velocity: VelocityField
    pressure: P3Field
    recovery: RecoveryState
    coarse: CoarseSolution
    coarse_field: P3Field
    timings: dict = field(default_factory=dict)

    def stage_fields(self) -> dict[str, P3Field]:
        """Intermediate pressures ``ns, dot1, dot2, dot3``, the constant part and ``p_h``."""
        out = {s: self.recovery.field(s) for s in ("ns", "dot1", "dot2", "dot3")}
        out["const"] = self.coarse_field
        out["final"] = self.pressure
        return out


def solve_stokes(m: Mesh, f, theta_sigma: float | None = None, check: bool = True) -> StokesSolution:
    """Solve ``-Laplace(u) - grad(p) = f``, ``div u = 0``, ``u = 0`` on the boundary."""
    timings = {}
    t0 = time.perf_counter()
    cls = classify_vertices(m, theta_sigma)
    if check:
        rep = check_structure(m, cls)
        if not rep.ok:
            raise StructureError(rep.describe())
    space = build_stream_space(m)
    phi = solve_stream(assemble_velocity_system(space, f), space)
    u_h = stream_to_velocity(space, phi)
    t1 = time.perf_counter()
    timings["velocity"] = 1e3 * (t1 - t0)
    state = recover_pressure(m, u_h, f, cls)
    p3 = state.field()
    t2 = time.perf_counter()
    timings["steps1-4"] = 1e3 * (t2 - t1)
    coarse = solve_step5(m, u_h, p3, f, build_br_space(m))
    p_h, mu = finalize_pressure(p3, coarse.pressure)
    timings["step5"] = 1e3 * (time.perf_counter() - t2)
    state.report.coarse_residual = coarse.residual
    state.report.mean_correction = mu
    state.report.final_mean = p_h.mean()
    state.stage = "final"
    const = np.zeros((m.n_triangles, 4, 4))
    const[:, 0, 0] = coarse.pressure - mu
    state.report.timings.update(timings)
    return StokesSolution(m, phi, u_h, p_h, state, coarse, P3Field(m, const), timings)
