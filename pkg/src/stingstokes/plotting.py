"""SVG figures: pressure stages, meshes with vertex classes, convergence."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.tri import Triangulation  # noqa: E402

from .basis import P3Field  # noqa: E402
from .mesh import Mesh, VertexClass, VertexClassification  # noqa: E402

__all__ = ["subdivide", "plot_pressure_stages", "plot_mesh", "plot_convergence", "STAGE_TITLES"]

STAGE_TITLES = {
    "ns": "non-sting part",
    "dot1": "+ regular stings",
    "dot3": "+ singular stings",
    "const": "constant part",
    "final": "final pressure",
}


def _ref_lattice(level: int):
    pts = [(i / level, j / level) for j in range(level + 1) for i in range(level + 1 - j)]
    idx = {p: k for k, p in enumerate(pts)}
    tris = []
    for j in range(level):
        for i in range(level - j):
            a, b, c = idx[(i / level, j / level)], idx[((i + 1) / level, j / level)], idx[(i / level, (j + 1) / level)]
            tris.append((a, b, c))
            if i + j < level - 1:
                d = idx[((i + 1) / level, (j + 1) / level)]
                tris.append((b, d, c))
    return np.array(pts), np.array(tris)


def subdivide(field: P3Field, level: int = 3):
    """Discontinuous sampling: per-triangle lattice points, values and sub-triangles."""
    m = field.mesh
    st, sub = _ref_lattice(level)
    X = m.coords
    xy = X[:, :1, :] + st[None, :, :1] * (X[:, 1:2] - X[:, :1]) + st[None, :, 1:] * (X[:, 2:3] - X[:, :1])
    vals = field.values_ref(st)
    n = len(st)
    tris = (np.arange(m.n_triangles)[:, None, None] * n + sub[None]).reshape(-1, 3)
    return xy.reshape(-1, 2), vals.reshape(-1), tris


def plot_pressure_stages(fields: dict, path, level: int = 3, title: str | None = None) -> None:
    """One panel per stage field, each with its own color range annotated."""
    keys = [k for k in STAGE_TITLES if k in fields]
    fig, axes = plt.subplots(1, len(keys), figsize=(3.2 * len(keys), 3.4), squeeze=False)
    for ax, k in zip(axes[0], keys):
        xy, v, tris = subdivide(fields[k], level)
        tri = Triangulation(xy[:, 0], xy[:, 1], tris)
        lo, hi = float(v.min()), float(v.max())
        if hi - lo < 1e-14:
            lo, hi = lo - 1.0, hi + 1.0
        pc = ax.tripcolor(tri, v, shading="gouraud", cmap="viridis", vmin=lo, vmax=hi, rasterized=True)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(STAGE_TITLES[k], fontsize=9)
        ax.text(0.5, -0.06, f"min {v.min():.3g}  max {v.max():.3g}", transform=ax.transAxes, ha="center", va="top", fontsize=7)
        fig.colorbar(pc, ax=ax, fraction=0.046, pad=0.03)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_mesh(m: Mesh, path, classification: VertexClassification | None = None) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.triplot(Triangulation(m.vertices[:, 0], m.vertices[:, 1], m.triangles), lw=0.5, color="0.4")
    if classification is not None:
        styles = {
            VertexClass.SINGULAR_INTERIOR: ("o", "tab:red", "nearly singular (interior)"),
            VertexClass.SINGULAR_BOUNDARY: ("s", "tab:orange", "nearly singular (boundary)"),
            VertexClass.SINGULAR_CORNER: ("^", "tab:purple", "nearly singular (corner)"),
        }
        for cls, (mk, col, lab) in styles.items():
            v = classification.vertices_of(cls)
            if len(v):
                ax.plot(m.vertices[v, 0], m.vertices[v, 1], mk, color=col, ms=4, ls="none", label=lab)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=7, loc="upper center", bbox_to_anchor=(0.5, -0.04), frameon=False)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_convergence(rows, path, reference: dict | None = None) -> None:
    """Log-log errors against ``h`` with an ``h^4`` guide."""
    h = np.array([r.h for r in rows])
    ev = np.array([r.vel_h1_err for r in rows])
    ep = np.array([r.prs_l2_err for r in rows])
    fig, ax = plt.subplots(figsize=(4.8, 3.8))
    ax.loglog(h, ev, "o-", label="|u - u_h|_1")
    ax.loglog(h, ep, "s-", label="||p - p_h||_0")
    if reference is not None:
        n = min(len(h), len(reference["vel_h1_err"]))
        ax.loglog(h[:n], reference["vel_h1_err"][:n], "o", mfc="none", color="tab:blue", label="reference |u - u_h|_1")
        ax.loglog(h[:n], reference["prs_l2_err"][:n], "s", mfc="none", color="tab:orange", label="reference ||p - p_h||_0")
    if len(h) > 1:
        g = ep[0] * (h / h[0]) ** 4
        ax.loglog(h, g, "k--", lw=0.8, label="h^4")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.legend(fontsize=7)
    ax.grid(True, which="both", lw=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
