import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import scalar_newton_reference
from problems import sphere_system, uniform_system
from stericpb.closure import BulkState, ClassicalClosure, IonSpecies, StericClosure
from stericpb.errors import InvalidArgument, NumericalFailure
from stericpb.newton import Bounds, compute_bounds, discrete_energy, newton_solve, truncate


def test_bounds_equal_on_harmonic_data(paper_bulk):
    system = uniform_system(n=5, boundary=2.5)
    b = compute_bounds(system, StericClosure(paper_bulk))
    np.testing.assert_allclose(b.upper, 2.5, atol=1e-6)
    np.testing.assert_allclose(b.lower, 2.5, atol=1e-6)
    assert np.all(b.upper >= b.lower)


def test_bounds_single_sign_electrolyte():
    bulk = BulkState([IonSpecies(2, 30.0, 1e-3)], 27.0)
    system, *_ = sphere_system(n=5)
    b = compute_bounds(system, StericClosure(bulk))
    # charge range [0, z/v]: the upper problem carries the saturated charge
    assert np.all(b.upper >= b.lower)
    assert np.any(b.upper - b.lower > 1.0)


def test_pure_dielectric_converges_in_one_step(paper_bulk):
    system = uniform_system(n=5, boundary=-1.0)
    closure = StericClosure(paper_bulk)
    state = newton_solve(system, closure, compute_bounds(system, closure), tol=1e-9)
    assert state.steps == 1
    assert state.omegas == [1.0]


def test_single_unknown_matches_bisection(paper_bulk):
    system = uniform_system(n=1, L=1.0, phi=50.0, boundary=-3.0)
    closure = StericClosure(paper_bulk)
    state = newton_solve(system, closure, compute_bounds(system, closure), tol=1e-12)
    f = lambda p: float(system.residual(np.array([p]), closure)[0])  # noqa: E731
    ref = scalar_newton_reference(f, -50.0, 50.0)
    assert state.psi[0] == pytest.approx(ref.value, abs=1e-10)


def test_truncate_examples():
    b = Bounds(np.full(4, 2.0), np.full(4, -1.0))
    inside = np.array([0.0, 1.5, -0.5, 2.0])
    out, nu, nl = truncate(inside, b)
    np.testing.assert_array_equal(out, inside)
    assert nu == nl == 0
    out, nu, _ = truncate(b.upper + 1, b)
    np.testing.assert_array_equal(out, b.upper)
    assert nu == 4


@given(st.integers(0, 2 ** 31))
def test_truncation_contracts_error(seed):
    rng = np.random.default_rng(seed)
    lo = rng.normal(size=50)
    up = lo + rng.uniform(0, 3, size=50)
    star = lo + rng.uniform(0, 1, size=50) * (up - lo)
    bar = rng.normal(scale=4, size=50)
    out, _, _ = truncate(bar, Bounds(up, lo))
    assert np.all(np.abs(out - star) <= np.abs(bar - star))


def test_energy_zero_at_origin(paper_bulk):
    system, *_ = sphere_system(n=4)
    assert discrete_energy(system, StericClosure(paper_bulk), np.zeros(64)) == 0.0


@pytest.mark.parametrize("closure_cls", [StericClosure, ClassicalClosure])
def test_energy_gradient_is_residual(paper_bulk, closure_cls):
    system, *_ = sphere_system(n=4)
    closure = closure_cls(paper_bulk)
    rng = np.random.default_rng(8)
    psi = rng.normal(scale=2.0, size=64)
    F = system.residual(psi, closure)
    step = 1e-5
    for m in range(0, 64, 7):
        e = np.zeros(64)
        e[m] = step
        fd = (discrete_energy(system, closure, psi + e)
              - discrete_energy(system, closure, psi - e)) / (2 * step)
        assert fd == pytest.approx(F[m], rel=1e-5, abs=1e-6 * np.abs(F).max())


def test_sphere_solve_energy_decreases_and_stays_bounded(paper_bulk):
    system, *_ = sphere_system(n=7, L=6.0, radius=3.0, charge=-3.0)
    closure = StericClosure(paper_bulk)
    bounds = compute_bounds(system, closure)
    state = newton_solve(system, closure, bounds, tol=1e-8, track_energy=True)
    assert state.converged and state.residual_norm <= 1e-8
    assert np.all(state.psi <= bounds.upper) and np.all(state.psi >= bounds.lower)
    for rec in state.records:
        assert rec.energy_after_truncation <= rec.energy_before_truncation + 1e-9
        assert "|F|inf" in rec.log_line()


def test_classical_energy_line_search(paper_bulk):
    from stericpb.pipeline import linear_guess

    system, *_ = sphere_system(n=6, charge=-0.5)
    state = newton_solve(system, ClassicalClosure(paper_bulk), None, tol=1e-8,
                         psi0=linear_guess(system, None), line_search="energy",
                         max_steps=200, track_energy=True)
    assert state.converged


def test_failures(paper_bulk):
    system, *_ = sphere_system(n=4)
    closure = StericClosure(paper_bulk)
    with pytest.raises(InvalidArgument):
        newton_solve(system, closure, line_search="wolfe")
    with pytest.raises(NumericalFailure) as err:
        newton_solve(system, closure, compute_bounds(system, closure), tol=1e-14, max_steps=1)
    assert err.value.exit_code == 3
