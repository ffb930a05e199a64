import math

import numpy as np
import pytest

from oracles import dense_solve_small
from problems import CONST, sphere_system, uniform_system
from stericpb.assembly import (StencilOperator, apply_Lh, build_rhs, dense_matrix,
                               jacobian_diag, mms_source, residual)
from stericpb.closure import StericClosure
from stericpb.dielectric import build_dielectric, harmonic_average, sphere_levelset
from stericpb.errors import UnsupportedConfiguration
from stericpb.mesh import GridFunction, build_grid


def test_constant_field_in_kernel():
    system, *_ = sphere_system()
    U = np.full(system.grid.shape, 3.7)
    np.testing.assert_allclose(apply_Lh(system.operator, U), 0.0, atol=1e-10)


def test_quadratic_second_difference():
    g = build_grid(3.0, 5)
    d = build_dielectric(GridFunction(g, np.full(g.shape, 50.0)), 1.0, 1.0, 1.5)
    op = StencilOperator(g, d.faces)
    X, _, _ = g.mesh()
    np.testing.assert_allclose(apply_Lh(op, X ** 2), -2.0, rtol=1e-12)


def test_operator_symmetric_on_small_grid():
    system, *_ = sphere_system(n=3)
    A = dense_matrix(system)
    np.testing.assert_array_equal(A, A.T)
    rng = np.random.default_rng(2)
    u, v = rng.normal(size=27), rng.normal(size=27)
    op = system.operator
    assert op.matvec(u) @ v == pytest.approx(u @ op.matvec(v), rel=1e-12)
    np.testing.assert_allclose(A @ u, op.matvec(u), rtol=1e-12)
    assert np.all(np.linalg.eigvalsh(A) > 0)


def test_rhs_without_contrast_or_data():
    g = build_grid(2.0, 3)
    d = build_dielectric(sphere_levelset(g, 1.0), 2.0, 2.0, 1.0)
    uf = np.random.default_rng(0).normal(size=g.shape)
    assert not build_rhs(g, d, uf, g.zeros()).any()
    d2 = build_dielectric(sphere_levelset(g, 1.0), 1.0, 78.0, 1.0)
    assert not build_rhs(g, d2, g.zeros(), g.zeros()).any()


def test_rhs_matches_brute_force():
    system, d, uf, bd = sphere_system(n=5)
    g = system.grid
    h2 = g.h ** 2
    eps = d.eps
    ref = np.zeros(g.num_unknowns)
    for i in range(1, g.n + 1):
        for j in range(1, g.n + 1):
            for k in range(1, g.n + 1):
                total = 0.0
                for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
                                   (0, 0, 1), (0, 0, -1)):
                    a, b, c = i + di, j + dj, k + dk
                    w = harmonic_average(eps[i, j, k], eps[a, b, c])
                    if a in (0, g.n + 1) or b in (0, g.n + 1) or c in (0, g.n + 1):
                        total += w / h2 * bd[a, b, c]
                    total -= (w - d.eps_m) / h2 * (uf[i, j, k] - uf[a, b, c])
                ref[g.interior_index(i, j, k)] = total
    np.testing.assert_allclose(system.b, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())


def test_pure_dielectric_problem_is_linear(paper_bulk):
    system = uniform_system(n=4, boundary=1.5)
    closure = StericClosure(paper_bulk)
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(2, 64))
    F = lambda p: residual(system, p, closure)  # noqa: E731
    np.testing.assert_allclose(F(x + y) - F(y), F(x) - F(np.zeros(64)), atol=1e-9)
    assert not jacobian_diag(system, x, closure).any()
    psi = dense_solve_small(system.matrix, system.b).value
    assert np.max(np.abs(F(psi))) < 1e-9


def test_jacobian_diag_sign_and_finite_differences(paper_bulk):
    # even n keeps grid nodes off the point charge, so the residual stays O(1e3)
    system, *_ = sphere_system(n=6)
    closure = StericClosure(paper_bulk)
    rng = np.random.default_rng(4)
    for _ in range(3):
        psi = rng.normal(scale=5.0, size=system.grid.num_unknowns)
        dg = jacobian_diag(system, psi, closure)
        # g' <= 0, so the Jacobian A - diag(g') is A plus a nonnegative diagonal
        assert np.all(dg <= 0)
        assert not dg[system.chi == 0].any()
        step = 1e-6
        e = np.zeros_like(psi)
        for m in rng.choice(system.solvent, 8, replace=False):
            e[:] = 0
            e[m] = step
            col = (residual(system, psi + e, closure) - residual(system, psi - e, closure)) / (2 * step)
            exact = dense_matrix(system, psi, closure)[:, m]
            np.testing.assert_allclose(col, exact, rtol=1e-5, atol=1e-6 * np.abs(exact).max())


def test_mms_exact_field_values(paper_bulk):
    g = build_grid(10.0, 9)
    d = build_dielectric(sphere_levelset(g, 5.0), 1.0, 78.0, 1.5)
    mp = mms_source(g, d, CONST, StericClosure(paper_bulk), 5.0, -5.0)
    c = g.n // 2 + 1
    assert mp.exact[c, c, c] == pytest.approx(1000.0)
    assert mp.exact[c, c, -1] == pytest.approx(1000.0 / math.e)
    with pytest.raises(UnsupportedConfiguration):
        mms_source(g, d, CONST, StericClosure(paper_bulk), 5.0, -5.0, geometry="pqr")
