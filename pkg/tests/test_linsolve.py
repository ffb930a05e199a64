import numpy as np
import pytest
import scipy.sparse as sp

from oracles import dense_solve_small
from problems import sphere_system, uniform_system
from stericpb.errors import InvalidArgument, NumericalFailure
from stericpb.linsolve import LinearSolveConfig, interpolation_1d, pcg, JacobiPreconditioner, \
    solve_spd

METHODS = ["cg", "mg"]


@pytest.mark.parametrize("method", METHODS)
def test_zero_rhs(method):
    system, *_ = sphere_system(n=3)
    x, stats = solve_spd(system.matrix, np.zeros(27), LinearSolveConfig(method))
    assert not x.any() and stats.iterations == 0


@pytest.mark.parametrize("method", METHODS)
def test_matches_dense_oracle(method):
    system, *_ = sphere_system(n=3)
    cfg = LinearSolveConfig(method, rtol=1e-12)
    x, _ = solve_spd(system.matrix, system.b, cfg)
    ref = dense_solve_small(system.matrix, system.b).value
    np.testing.assert_allclose(x, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


@pytest.mark.parametrize("method", METHODS)
def test_random_shifted_systems(method):
    rng = np.random.default_rng(5)
    system, *_ = sphere_system(n=5)
    for _ in range(3):
        shift = rng.uniform(0, 50, size=125)
        rhs = rng.normal(size=125)
        x, _ = solve_spd(system.matrix, rhs, LinearSolveConfig(method, rtol=1e-12), shift=shift)
        ref = dense_solve_small(system.matrix, rhs, shift).value
        np.testing.assert_allclose(x, ref, rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("method", METHODS)
def test_shift_dominant_converges_fast(method):
    system = uniform_system(n=7)
    rhs = np.ones(343)
    x, stats = solve_spd(system.matrix, rhs, LinearSolveConfig(method, rtol=1e-10),
                         shift=np.full(343, 1e6))
    assert stats.iterations <= 4
    np.testing.assert_allclose(x, rhs / (1e6 + system.matrix.diagonal()), rtol=1e-4)


def test_identity_shift_reproduces_rhs():
    rhs = np.arange(1.0, 9.0)
    ref = dense_solve_small(np.zeros((8, 8)), rhs, np.ones(8)).value
    np.testing.assert_array_equal(ref, rhs)


def test_stiff_diagonal_is_rescaled():
    system, *_ = sphere_system(n=5)
    rng = np.random.default_rng(6)
    shift = 10.0 ** rng.uniform(-2, 14, size=125)
    rhs = rng.normal(size=125)
    x, stats = solve_spd(system.matrix, rhs, LinearSolveConfig("mg", rtol=1e-12), shift=shift)
    ref = dense_solve_small(system.matrix, rhs, shift).value
    np.testing.assert_allclose(x, ref, rtol=1e-7, atol=1e-14)


def test_multigrid_beats_jacobi_on_larger_grid():
    system = uniform_system(n=31, L=10.0, phi=100.0)
    rhs = np.random.default_rng(7).normal(size=31 ** 3)
    _, mg = solve_spd(system.matrix, rhs, LinearSolveConfig("mg", rtol=1e-8))
    _, cg = solve_spd(system.matrix, rhs, LinearSolveConfig("cg", rtol=1e-8))
    assert mg.iterations < 20 < cg.iterations


def test_interpolation_preserves_linear_functions():
    P = interpolation_1d(7, 3)
    xc = np.arange(1, 4) / 4
    xf = np.arange(1, 8) / 8
    # Dirichlet prolongation: the last fine node also sees the zero boundary value
    np.testing.assert_allclose((P @ xc)[:-1], xf[:-1])
    assert (P @ xc)[-1] == pytest.approx(0.5 * xc[-1])
    np.testing.assert_allclose(P.sum(axis=1).A1[1:-1], 1.0)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        LinearSolveConfig("gmres")
    with pytest.raises(InvalidArgument):
        LinearSolveConfig(rtol=0)
    with pytest.raises(InvalidArgument):
        solve_spd(sp.identity(8, format="csr"), np.ones(8), shift=-np.ones(8))


def test_non_finite_rhs_fails():
    A = sp.identity(8, format="csr")
    with pytest.raises(NumericalFailure):
        pcg(A, np.full(8, np.inf), JacobiPreconditioner(A), 1e-8, 10)
