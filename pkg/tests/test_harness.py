import numpy as np
import pytest

from stingstokes.harness import (
    CSV_COLUMNS,
    TABLE1,
    error_norms,
    observed_orders,
    pressure_l2_error,
    run_convergence,
)
from stingstokes.manufactured import manufactured_case
from stingstokes.mesh import generate_crisscross
from stingstokes.solver import StructureError, solve_stokes


@pytest.fixture(scope="module")
def case():
    return manufactured_case()


def test_manufactured_velocity_divergence_free_and_clamped(case):
    x, y = np.random.default_rng(0).random((2, 50))
    g = case.grad_u(x, y)
    np.testing.assert_allclose(g[0, 0] + g[1, 1], 0.0, atol=1e-12)
    t = np.linspace(0, 1, 11)
    for bx, by in ((t, 0 * t), (t, 1 + 0 * t), (0 * t, t), (1 + 0 * t, t)):
        np.testing.assert_allclose(case.u(bx, by), 0.0, atol=1e-14)


def test_manufactured_forcing_matches_finite_differences(case):
    # f = -lap u - grad p
    x0, y0, h = 0.37, 0.61, 1e-4
    lap = (
        case.u(x0 + h, y0) + case.u(x0 - h, y0) + case.u(x0, y0 + h) + case.u(x0, y0 - h) - 4 * case.u(x0, y0)
    ) / h**2
    f = -lap - case.grad_p(x0, y0)
    np.testing.assert_allclose(case.f(x0, y0), f, rtol=1e-5, atol=1e-5)


def test_manufactured_gradients_consistent(case):
    x0, y0, h = 0.23, 0.71, 1e-6
    gp = np.array([(case.p(x0 + h, y0) - case.p(x0 - h, y0)) / (2 * h), (case.p(x0, y0 + h) - case.p(x0, y0 - h)) / (2 * h)])
    np.testing.assert_allclose(case.grad_p(x0, y0), gp, rtol=1e-7)
    gu = (case.u(x0 + h, y0) - case.u(x0 - h, y0)) / (2 * h)
    np.testing.assert_allclose(case.grad_u(x0, y0)[:, 0], gu, rtol=1e-6, atol=1e-9)


def test_error_rule_is_converged(case):
    m = generate_crisscross(4)
    sol = solve_stokes(m, case.f)
    ev14, ep14 = error_norms(case, sol.velocity, sol.pressure, degree=14)
    ev16, ep16 = error_norms(case, sol.velocity, sol.pressure, degree=16)
    # far below the four digits reported in the table
    assert ev14 == pytest.approx(ev16, rel=1e-6)
    assert ep14 == pytest.approx(ep16, rel=1e-6)
    assert pressure_l2_error(case, sol.pressure) == pytest.approx(ep14)


def test_observed_orders():
    o = observed_orders([1.0, 1 / 16, 1 / 256], [0.5, 0.25, 0.125])
    assert o[0] is None
    assert o[1] == pytest.approx(4.0) and o[2] == pytest.approx(4.0)


def test_run_convergence_small(case):
    res = run_convergence([4, 8])
    r4, r8 = res.rows
    assert r4.vel_h1_err == pytest.approx(TABLE1["vel_h1_err"][0], rel=5e-4)
    assert r8.prs_l2_err == pytest.approx(TABLE1["prs_l2_err"][1], rel=5e-3)
    assert 3.7 < r8.vel_order < 4.7 and 3.7 < r8.prs_order < 4.7
    d = r8.diagnostics
    assert d["divergence_ratio"] <= 1e-11
    assert d["pressure_mean_ratio"] <= 1e-11
    assert d["vertex_classes"]
    # the timing column is the only non-deterministic one
    a = res.to_csv(include_timing=False)
    b = run_convergence([4, 8]).to_csv(include_timing=False)
    assert a == b
    assert a.splitlines()[0].split(",") == list(CSV_COLUMNS[:-1])
    assert '"rows"' in res.to_json()


def test_solver_refuses_bad_structure():
    m = generate_crisscross(4)
    with pytest.raises(StructureError):
        solve_stokes(m, manufactured_case().f, theta_sigma=1.6)


def test_stage_fields(case):
    sol = solve_stokes(generate_crisscross(4), case.f)
    f = sol.stage_fields()
    assert list(f) == ["ns", "dot1", "dot2", "dot3", "const", "final"]
    assert (f["final"] - sol.pressure).l2_norm() == 0.0


def test_exact_norms_stable_across_rules(case):
    from stingstokes.argyris import build_stream_space, stream_to_velocity
    from stingstokes.basis import P3Field

    m = generate_crisscross(8)
    space = build_stream_space(m)
    u0 = stream_to_velocity(space, np.zeros(space.ndof))
    p0 = P3Field.zeros(m)
    ev14, ep14 = error_norms(case, u0, p0, degree=14)
    ev16, ep16 = error_norms(case, u0, p0, degree=16)
    assert ev14 == pytest.approx(ev16, rel=1e-10)
    assert ep14 == pytest.approx(ep16, rel=1e-10)
    # ||p||_0 of sin(4 pi x) exp(pi y) is known in closed form
    assert ep14 == pytest.approx(np.sqrt(0.5 * (np.exp(2 * np.pi) - 1) / (2 * np.pi)), rel=1e-12)
