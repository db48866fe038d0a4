"""Acceptance criteria; each test prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

from conftest import random_triangle
from stingstokes.argyris import build_stream_space, hermite_interpolate_stream, stream_to_velocity
from stingstokes.basis import (
    P3Field,
    decompose,
    hermite_p3,
    nonsting,
    recompose,
    sting,
    unisolvence_matrix,
)
from stingstokes.geometry import (
    TriPoly,
    affine_map,
    batch_jacobians,
    coeffs_from_vector,
    dx_dy,
    gauss_rule,
    integrate_exact,
    median_centers,
    vandermonde,
)
from stingstokes.harness import TABLE1, pressure_l2_error, run_convergence
from stingstokes.manufactured import cubic_pressure_case, manufactured_case, s_jet
from stingstokes.mesh import check_structure, classify_vertices, generate_crisscross
from stingstokes.recovery import start_recovery, step1_nonsting
from stingstokes.solver import solve_stokes


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}")


@pytest.fixture(scope="module")
def table_run():
    return run_convergence([4, 8, 16, 32])


@pytest.fixture(scope="module")
def cubic_runs():
    t0 = time.perf_counter()
    out = []
    for N in (4, 8):
        for pert in (0.0, 0.05):
            case = cubic_pressure_case(seed=10 * N + int(100 * pert))
            m = generate_crisscross(N, pert, seed=N)
            sol = solve_stokes(m, case.f)
            exact = hermite_p3(case.p, case.grad_p, m)
            out.append((N, pert, sol, (sol.pressure - exact).l2_norm() / exact.l2_norm()))
    return out, time.perf_counter() - t0


def test_criterion1_table_reproduction(table_run, capsys):
    rows = table_run.rows
    vo = [r.vel_order for r in rows[1:]]
    po = [r.prs_order for r in rows[1:]]
    ve = [r.vel_h1_err for r in rows]
    pe = [r.prs_l2_err for r in rows]
    ok_orders = np.all(np.abs(np.array(vo) - TABLE1["vel_order"][1:]) <= 0.3) and np.all(
        np.abs(np.array(po) - TABLE1["prs_order"][1:]) <= 0.3
    )
    ratios = np.concatenate([np.array(ve) / TABLE1["vel_h1_err"], np.array(pe) / TABLE1["prs_l2_err"]])
    ok_errors = np.all((ratios <= 3) & (ratios >= 1 / 3))
    ok = bool(ok_orders and ok_errors)
    report(
        capsys, 1, ok,
        "velocity orders " + ", ".join(f"{o:.4f}" for o in vo)
        + "; pressure orders " + ", ".join(f"{o:.4f}" for o in po)
        + f"; error ratios to table in [{ratios.min():.3f}, {ratios.max():.3f}]",
    )
    assert ok


def test_criterion2_cubic_exactness(cubic_runs, capsys):
    runs, seconds = cubic_runs
    worst = max(r[3] for r in runs)
    ok = worst <= 1e-8 and seconds <= 30
    report(capsys, 2, ok, f"max relative pressure error {worst:.2e} over N=4,8 x perturbation 0,0.05 in {seconds:.1f} s")
    assert ok


def _identity_suite(rng):
    out = {}
    tris = [random_triangle(rng) for _ in range(100)]
    # (a) sting quadrature identity
    worst = 0.0
    for K in tris:
        F = affine_map(K)
        S = [sting(F, v).poly for v in range(3)]
        for _ in range(5):
            q = TriPoly(coeffs_from_vector(rng.normal(size=10), 3), F)
            for v in range(3):
                rhs = F.area * q(*K[v])[0]
                scale = F.area * max(1.0, np.abs(q(K[:, 0], K[:, 1])).max())
                worst = max(worst, abs(integrate_exact(S[v] * q) - rhs) / scale)
    out["a"] = worst
    # (b) non-sting defining conditions
    worst = 0.0
    for K in tris[:20]:
        G = median_centers(K)
        for k in (1, 2, 3):
            for i in (1, 2):
                N = nonsting(K, k, i).poly
                Nx, Ny = N.dx(), N.dy()
                expected = np.zeros((4, 2))
                expected[k, i - 1] = 1.0
                got = np.array([[Nx(*g)[0], Ny(*g)[0]] for g in G])
                worst = max(worst, abs(N(*G[0])[0]), abs(N(*G[k])[0]), np.abs(got - expected).max())
    out["b"] = worst
    # (c) diagonality of the local non-sting matrices
    worst = 0.0
    for pert, seed in ((0.0, 0), (0.05, 1), (0.1, 2)):
        m = generate_crisscross(4, pert, seed=seed)
        space = build_stream_space(m)
        zero = stream_to_velocity(space, np.zeros(space.ndof))
        st = start_recovery(m, zero, cubic_pressure_case(seed=seed).f)
        step1_nonsting(st)
        worst = max(worst, st.report.nonsting_offdiag)
    out["c"] = worst
    # (d) jump constants of sting functions
    worst = 0.0
    for K in tris:
        F = affine_map(K)
        for v in range(3):
            S = sting(F, v).poly
            Sx, Sy = S.dx(), S.dy()
            w1, w2 = (v + 1) % 3, (v + 2) % 3
            for w in (w1, w2):
                d = K[w] - K[v]
                ell = np.linalg.norm(d)
                gt = np.array([Sx(*K[v])[0], Sy(*K[v])[0]]) @ (d / ell)
                worst = max(worst, abs(ell**3 * gt + 600 * ell**2) / (600 * ell**2))
            e = K[w2] - K[w1]
            n = np.array([e[1], -e[0]]) / np.linalg.norm(e)
            if n @ (K[v] - K[w1]) > 0:
                n = -n
            ell = 2 * F.area / np.linalg.norm(e)
            gn = np.array([Sx(*K[w1])[0], Sy(*K[w1])[0]]) @ n
            worst = max(worst, abs(ell**3 * gn + 180 * ell**2) / (180 * ell**2))
    out["d"] = worst
    # (e) condition matrices are nonsingular
    worst = np.inf
    for K in tris:
        for k in (1, 2, 3):
            s = np.linalg.svd(unisolvence_matrix(K, k), compute_uv=False)
            worst = min(worst, s[-1] / s[0])
    out["e"] = worst
    # (f) decompose / recompose round trip
    worst = 0.0
    for seed in range(3):
        m = generate_crisscross(4, 0.05 * seed, seed=seed)
        field = P3Field(m, coeffs_from_vector(rng.normal(size=(m.n_triangles, 10)), 3))
        back = recompose(decompose(field))
        worst = max(worst, np.abs(back.coeffs - field.coeffs).max() / np.abs(field.coeffs).max())
    out["f"] = worst
    return out


def test_criterion3_identity_suite(capsys):
    t0 = time.perf_counter()
    r = _identity_suite(np.random.default_rng(123))
    seconds = time.perf_counter() - t0
    tol = {"a": 1e-11, "b": 1e-11, "c": 1e-11, "d": 1e-10, "f": 1e-10}
    ok = all(r[k] <= t for k, t in tol.items()) and r["e"] > 1e-10 and seconds < 10
    detail = ", ".join(f"({k}) {v:.1e}" for k, v in r.items()) + f" in {seconds:.1f} s"
    report(capsys, 3, ok, detail)
    assert ok


def test_criterion4_divergence_and_mean(table_run, cubic_runs, capsys):
    div = [r.diagnostics["divergence_ratio"] for r in table_run.rows]
    mean = [r.diagnostics["pressure_mean_ratio"] for r in table_run.rows]
    for _, _, sol, _ in cubic_runs[0]:
        div.append(sol.velocity.divergence_ratio())
        mean.append(abs(sol.pressure.mean()) / sol.pressure.l2_norm())
    ok = max(div) <= 1e-11 and max(mean) <= 1e-11
    report(capsys, 4, ok, f"max divergence ratio {max(div):.1e}, max mean ratio {max(mean):.1e} over {len(div)} solves")
    assert ok


def test_criterion5_structure(capsys):
    ok, details = True, []
    for N in (2, 4, 8, 16, 32):
        m = generate_crisscross(N)
        c = classify_vertices(m)
        rep = check_structure(m, c)
        ns = np.flatnonzero(c.nearly_singular())
        centers = np.arange((N + 1) ** 2, (N + 1) ** 2 + N * N)
        good = rep.ok and np.array_equal(ns, centers)
        ok &= bool(good)
        details.append(f"N={N}: {len(ns)} nearly singular")
    report(capsys, 5, ok, "; ".join(details))
    assert ok


def _stream_h2_interp_error(N):
    m = generate_crisscross(N)
    space = build_stream_space(m)

    def jet(x, y):
        sx, sy = s_jet(x), s_jet(y)
        return np.stack([sx[0] * sy[0], sx[1] * sy[0], sx[0] * sy[1], sx[2] * sy[0], sx[1] * sy[1], sx[0] * sy[2]])

    polys = hermite_interpolate_stream(space, jet).polys()
    _, _, Ainv = batch_jacobians(m.coords)
    gx, gy = dx_dy(polys, Ainv)
    hxx, hxy = dx_dy(gx, Ainv)
    _, hyy = dx_dy(gy, Ainv)
    rule = gauss_rule(14)
    V = vandermonde(rule.ref_points[:, 0], rule.ref_points[:, 1], polys.shape[-1])
    pts = rule.physical_points(m.coords)
    ex = jet(pts[..., 0], pts[..., 1])
    err = 0.0
    for arr, k, w in ((hxx, 3, 1.0), (hxy, 4, 2.0), (hyy, 5, 1.0)):
        diff = np.einsum("qij,tij->tq", V, arr) - ex[k]
        err += w * np.einsum("tq,q,t->", diff**2, rule.weights, m.areas)
    return np.sqrt(err)


def test_criterion6_interpolation_rates(capsys):
    case = manufactured_case()
    Ns = (4, 8, 16)
    es = np.array([_stream_h2_interp_error(N) for N in Ns])
    ep = []
    for N in Ns:
        m = generate_crisscross(N)
        ep.append(pressure_l2_error(case, hermite_p3(case.p, case.grad_p, m)))
    ep = np.array(ep)
    os_, op = np.log2(es[:-1] / es[1:]), np.log2(ep[:-1] / ep[1:])
    ok = bool(np.all(os_ >= 3.7) and np.all(op >= 3.7))
    report(
        capsys, 6, ok,
        "stream |.|_2 orders " + ", ".join(f"{o:.3f}" for o in os_) + "; pressure L2 orders " + ", ".join(f"{o:.3f}" for o in op),
    )
    assert ok
