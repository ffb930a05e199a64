import numpy as np
import pytest

from stericpb.config import RunConfig
from stericpb.errors import ConfigError
from stericpb.pipeline import (format_mms, run_bounds, run_mms, run_solve, run_table_dump)
from stericpb.closure import StericTable, packing_gap
from stericpb.solute import MOLAR

SMALL = dict(n=19)   # h = 1


def test_solve_sphere_small(tmp_path):
    cfg = RunConfig(**SMALL, report=tmp_path / "r.txt", vtk=tmp_path / "f.vtk",
                    profile_start=(0, 0, 0), profile_end=(9, 0, 0),
                    profile_csv=tmp_path / "p.csv", iso_level=0.8, iso_csv=tmp_path / "i.csv")
    res = run_solve(cfg)
    rep = res.report
    assert rep.residual <= cfg.tol
    assert rep.energy < 0
    # the maximum rounds to 1/v exactly; the packing gap shows it stays strictly below
    assert rep.max_concentration["cation"] <= 1 / (2.76 ** 3 * MOLAR) * (1 + 1e-12)
    u = res.potential.values[res.problem.dielectric.chi > 0]
    assert np.all(packing_gap(u, cfg.bulk()) > 0)
    for name in ("r.txt", "f.vtk", "p.csv", "i.csv"):
        assert (tmp_path / name).stat().st_size > 0
    assert "steric (table)" in (tmp_path / "r.txt").read_text()


def test_table_on_off_agree():
    a = run_solve(RunConfig(**SMALL, tol=1e-9))
    b = run_solve(RunConfig(**SMALL, tol=1e-9, table_enabled=False))
    assert np.max(np.abs(a.state.psi - b.state.psi)) <= 1e-8


def test_classical_solve_small():
    res = run_solve(RunConfig(**SMALL, mode="classical"))
    assert res.bounds is None
    assert res.report.closure == "classical"


def test_mms_two_levels():
    rows = run_mms(RunConfig(), spacings=(2.0, 1.0))[0]
    assert rows[0].order is None and rows[1].order > 1.0
    assert rows[1].error < rows[0].error
    assert "order" in format_mms(rows)


def test_table_dump_and_bounds(tmp_path):
    cfg = RunConfig(**SMALL)
    tab = run_table_dump(cfg, tmp_path / "t.npz")
    back = StericTable.load(tmp_path / "t.npz", cfg.bulk())
    np.testing.assert_array_equal(back.log_gamma, tab.log_gamma)
    assert tab.psi_L < 0 < tab.psi_R
    ext = run_bounds(cfg)
    assert ext["lower_min"] <= ext["upper_min"] and ext["lower_max"] <= ext["upper_max"]
    with pytest.raises(ConfigError):
        run_bounds(cfg.with_overrides(mode="classical"))


def test_bounds_for_pure_dielectric_constant_boundary():
    from stericpb.closure import StericClosure
    from stericpb.newton import compute_bounds
    from problems import uniform_system

    system = uniform_system(n=9, L=5.0, boundary=0.75)
    b = compute_bounds(system, StericClosure(RunConfig().bulk()))
    np.testing.assert_allclose(b.upper, 0.75, atol=1e-6)
    np.testing.assert_allclose(b.lower, 0.75, atol=1e-6)


def test_atoms_outside_box_rejected(tmp_path):
    pqr = tmp_path / "a.pqr"
    pqr.write_text("ATOM 1 C X 1 50.0 0.0 0.0 -1.0 2.0\n")
    with pytest.raises(ConfigError):
        run_solve(RunConfig(**SMALL, geometry="pqr", pqr=pqr))


def test_pqr_geometry(tmp_path):
    pqr = tmp_path / "two.pqr"
    pqr.write_text("ATOM 1 C X 1 -1.5 0.0 0.0 -1.0 2.0\nATOM 2 C X 1 1.5 0.0 0.0 -1.0 2.0\n")
    res = run_solve(RunConfig(**SMALL, geometry="pqr", pqr=pqr))
    assert res.report.residual <= 1e-6
    assert res.report.energy < 0
