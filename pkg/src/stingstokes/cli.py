"""Command line: ``stingstokes solve --mesh crisscross:4,8 --out results --svg``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .basis import BasisError
from .geometry import DegenerateTriangleError
from .harness import TABLE1, ConvergenceResult, run_convergence
from .linalg import SolverError
from .mesh import MeshError, check_structure, classify_vertices, generate_crisscross, read_mesh
from .recovery import RecoveryError

EXIT_OK, EXIT_STRUCTURE, EXIT_SOLVER = 0, 2, 3
DEFAULT_N = (4, 8, 16, 32)
QUICK_N = (4, 8)


def _parse_mesh_spec(spec: str) -> list[int]:
    kind, _, rest = spec.partition(":")
    if kind != "crisscross" or not rest:
        raise argparse.ArgumentTypeError(f"expected crisscross:<N>[,<N>...], got {spec!r}")
    try:
        ns = [int(x) for x in rest.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mesh size list {rest!r}") from None
    if any(n < 1 for n in ns):
        raise argparse.ArgumentTypeError("mesh sizes must be positive")
    return ns


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stingstokes", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve the manufactured Stokes problem and tabulate errors")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--mesh", type=_parse_mesh_spec, help="crisscross:<N>[,<N>...] (default 4,8,16,32)")
    src.add_argument("--mesh-file", type=Path, help="mesh file with 'v x y', 't i j k', 'corner i' records")
    s.add_argument("--perturb", type=float, default=0.0, help="random shift of square centers, fraction of h/2")
    s.add_argument("--seed", type=int, default=0, help="seed for --perturb")
    s.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    s.add_argument("--table", choices=("csv", "json"), default="csv", help="format of the error table")
    s.add_argument("--svg", action="store_true", help="write SVG figures")
    s.add_argument("--quick", action="store_true", help="run N = 4, 8 only")
    s.add_argument("--no-timings", action="store_true", help="leave wall_ms empty (byte-reproducible table)")
    s.add_argument("-v", "--verbose", action="store_true")
    return p


def _meshes(args):
    if args.mesh_file is not None:
        return [(str(args.mesh_file), read_mesh(args.mesh_file))]
    ns = QUICK_N if args.quick and args.mesh is None else (args.mesh or DEFAULT_N)
    if args.perturb:
        return [(f"crisscross:{n}", generate_crisscross(n, args.perturb, args.seed)) for n in ns]
    return list(ns)


def _label_N(result: ConvergenceResult, meshes) -> None:
    for row, item in zip(result.rows, meshes):
        if isinstance(item, tuple) and item[0].startswith("crisscross:"):
            row.N = int(item[0].split(":")[1])


def _write_outputs(result: ConvergenceResult, args) -> list[Path]:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.table == "csv":
        path = out / "convergence.csv"
        text = result.to_csv()
        if args.no_timings:
            text = "\n".join(line.rsplit(",", 1)[0] + "," if i else line for i, line in enumerate(text.splitlines())) + "\n"
        path.write_text(text)
    else:
        path = out / "convergence.json"
        path.write_text(result.to_json() + "\n")
    written.append(path)
    diag = out / "diagnostics.json"
    diag.write_text(json.dumps({r.label: r.diagnostics for r in result.rows}, indent=2, default=str) + "\n")
    written.append(diag)
    if args.svg:
        from .plotting import plot_convergence, plot_mesh, plot_pressure_stages

        for row, sol in zip(result.rows, result.solutions):
            tag = row.label.replace(":", "_").replace("/", "_")
            p = out / f"pressure_stages_{tag}.svg"
            plot_pressure_stages(sol.stage_fields(), p, title=row.label)
            written.append(p)
            p = out / f"mesh_{tag}.svg"
            plot_mesh(sol.mesh, p, sol.recovery.classification)
            written.append(p)
        if len(result.rows) > 1:
            p = out / "convergence.svg"
            ref = TABLE1 if all(r.N in TABLE1["N"] for r in result.rows) and args.perturb == 0 else None
            if ref is not None:
                idx = [TABLE1["N"].index(r.N) for r in result.rows]
                ref = {k: [TABLE1[k][i] for i in idx] for k in ("vel_h1_err", "prs_l2_err")}
            plot_convergence(result.rows, p, ref)
            written.append(p)
    return written


def _print_table(result: ConvergenceResult) -> None:
    print(f"{'mesh':>16} {'h':>10} {'|u-u_h|_1':>12} {'order':>7} {'||p-p_h||_0':>12} {'order':>7} {'ms':>9}")
    for r in result.rows:
        vo = f"{r.vel_order:7.4f}" if r.vel_order is not None else " " * 7
        po = f"{r.prs_order:7.4f}" if r.prs_order is not None else " " * 7
        print(f"{r.label:>16} {r.h:10.4e} {r.vel_h1_err:12.4e} {vo} {r.prs_l2_err:12.4e} {po} {r.wall_ms:9.1f}")


def cmd_solve(args) -> int:
    try:
        meshes = _meshes(args)
        for item in meshes:
            m = item[1] if isinstance(item, tuple) else generate_crisscross(item)
            rep = check_structure(m, classify_vertices(m))
            if not rep.ok:
                print(f"structure check failed for {item[0] if isinstance(item, tuple) else f'crisscross:{item}'}:", file=sys.stderr)
                print(rep.describe(), file=sys.stderr)
                return EXIT_STRUCTURE
    except (MeshError, DegenerateTriangleError, OSError) as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    try:
        result = run_convergence(meshes)
    except MeshError as exc:
        print(f"structure check failed: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except (SolverError, RecoveryError, BasisError, DegenerateTriangleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _label_N(result, meshes)
    _print_table(result)
    for p in _write_outputs(result, args):
        print(f"wrote {p}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        return cmd_solve(args)
    return EXIT_SOLVER  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
