import numpy as np
import pytest
from pydantic import ValidationError

from tocflow.constraints import CoordinateEquality, CorridorConstraint, LinearConstraint, SpectrumConstraint
from tocflow.fields import Affine1DField, GaussianMixtureField, LinearField, Lookahead, ZeroField
from tocflow.guidance import (GuidanceConfig, WeightSchedule, control_gradient, gd_solve, gn_approx_step, gn_solve,
                              stretched_time, terminal_project, toc_solve)
from tocflow.numcore import RngStream, simpson_quad


def _random_problem(rng):
    d = 3
    chols = [np.diag(rng.uniform(0.5, 1.5, d)) for _ in range(2)]
    field = GaussianMixtureField([0.5, 0.5], [rng.normal(d), rng.normal(d)], chols)
    con = LinearConstraint(rng.normal((1, d)), rng.normal(1))
    return field, con


def test_toc_equals_gn_for_scalar_constraints():
    rng = RngStream(31, 0)
    worst = 0.0
    for _ in range(100):
        field, con = _random_problem(rng)
        x = rng.normal(3)
        t = float(rng.uniform(0.0, 0.9))
        s = float(rng.uniform(0.01, 5.0))
        a = toc_solve(field, con, x, t, s)
        b = gn_solve(field, con, x, t, s, cg_tol=1e-14)
        worst = max(worst, np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
    assert worst <= 1e-9


def test_gn_with_zero_budget_is_gd():
    rng = RngStream(32, 0)
    for _ in range(20):
        field, _ = _random_problem(rng)
        con = LinearConstraint(rng.normal((2, 3)), rng.normal(2))
        x = rng.normal(3)
        assert np.array_equal(gn_solve(field, con, x, 0.4, 0.0), gd_solve(field, con, x, 0.4))


def test_gn_dense_formula_zero_field():
    rng = RngStream(33, 0)
    A, c = rng.normal((2, 2)), rng.normal(2)
    con = LinearConstraint(A, c)
    x, s = rng.normal(2), 0.7
    h = A @ x - c
    dense = A.T @ np.linalg.solve(np.eye(2) + s * A @ A.T, h)
    assert np.max(np.abs(gn_solve(ZeroField(2), con, x, 0.2, s, cg_tol=1e-14) - dense)) <= 1e-8


def test_toc_tau_closed_form():
    f = Affine1DField(2.0, 1.0)
    con = CoordinateEquality([0], [0.0], 1)
    x, t, s = np.array([0.5]), 0.3, 0.8
    la = Lookahead(f, x, t, 4)
    y = la.terminal
    g = la.reverse(y)
    out, tau = toc_solve(f, con, x, t, s, return_tau=True)
    assert abs(tau - 1.0 / (1.0 + s * g[0] ** 2 / y[0] ** 2)) <= 1e-15
    assert np.allclose(out, tau * g)


def test_toc_zero_residual_gives_zero_control():
    con = CoordinateEquality([0], [0.0], 2)
    out = toc_solve(ZeroField(2), con, np.array([0.0, 3.0]), 0.5, 1.0)
    assert np.array_equal(out, np.zeros(2))


def test_stretched_time_closed_forms():
    sch = WeightSchedule(lambda0=2.0, gamma=0.5)
    assert abs(stretched_time(sch, 0.36, 1e-3) - 0.8**1 / (2.0 * 0.5)) <= 1e-12
    flat = WeightSchedule(lambda0=4.0)
    assert stretched_time(flat, 0.25, 1e-3) == pytest.approx(0.1875)


def test_stretched_time_truncated_quadrature():
    sch = WeightSchedule(lambda0=1e10, gamma=10.0)
    eps, t = 0.005, 0.9
    ref = simpson_quad(lambda u: 1.0 / sch.lam(u), t, 1 - eps, 200_000)
    assert abs(stretched_time(sch, t, eps) / ref - 1) <= 1e-9
    assert stretched_time(sch, 1 - eps / 2, eps) == 0.0


def test_constant_schedule_rejects_gamma():
    with pytest.raises(ValidationError):
        WeightSchedule(kind="constant", gamma=1.0)


def test_terminal_projection_clamps_corridor():
    con = CorridorConstraint([([1], -1.0, 1.0)], 3)
    z = terminal_project(con, np.array([0.2, -1.3, 4.0]))
    assert abs(z[1] + 1.0) <= 1e-10
    assert z[0] == 0.2 and z[2] == 4.0


def test_gn_approx_step_zero_field():
    con = CoordinateEquality([0], [1.0], 2)
    x0, xt = np.array([0.2, 0.5]), np.array([0.6, -0.4])
    out = gn_approx_step(ZeroField(2), con, x0, xt, 0.3, 0.1)
    target = np.array([1.0, -0.4])
    assert np.allclose(out, 0.6 * x0 + 0.4 * target, atol=1e-10)


def test_control_gradient_dispatch():
    f = Affine1DField(2.0, 1.0)
    con = CoordinateEquality([0], [0.0], 1)
    X = np.array([[0.1], [0.4]])
    g_gd, _ = control_gradient(GuidanceConfig(method="gd"), f, con, X, 0.2, 0.5)
    assert np.allclose(g_gd, gd_solve(f, con, X, 0.2))
    _, info = control_gradient(GuidanceConfig(method="tocflow"), f, con, X, 0.2, 0.5)
    assert info["tau"].shape == (2,)
    _, info = control_gradient(GuidanceConfig(method="gn"), f, con, X, 0.2, 0.5)
    assert np.all(info["cg_converged"])
    with pytest.raises(ValueError):
        control_gradient(GuidanceConfig(method="vanilla"), f, con, X, 0.2, 0.5)


def test_gn_spectrum_batched_rows_match_single():
    n = 8
    con = SpectrumConstraint(n, band=(1, 3))
    field = LinearField(-0.3 * np.eye(n * n))
    X = RngStream(34, 0).normal((2, n * n))
    batch = gn_solve(field, con, X, 0.1, 0.5)
    assert np.allclose(batch[1], gn_solve(field, con, X[1], 0.1, 0.5))
