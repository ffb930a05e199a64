import csv
import math

import numpy as np
import pytest

from problems import CONST
from stericpb.closure import ClassicalClosure, StericClosure
from stericpb.dielectric import load_levelset, sphere_levelset
from stericpb.errors import InvalidArgument
from stericpb.mesh import GridFunction, build_grid
from stericpb.postproc import (SolveReport, concentration_fields, convergence_report,
                               export_csv_profile, export_vtk, iso_band, line_profile,
                               radial_profile, reaction_field_energy, surface_mask, trilinear)
from stericpb.solute import MOLAR, Atom


def test_energy_without_atoms_is_zero():
    g = build_grid(1.0, 1)
    assert reaction_field_energy([], GridFunction(g, np.ones(g.shape))) == 0.0


def test_energy_of_linear_field():
    g = build_grid(2.0, 3)
    X, Y, Z = g.mesh()
    f = GridFunction(g, 2 * X - Y + 0.5 * Z + 1, "potential")
    atoms = [Atom((0.3, -0.7, 1.1), 2.0), Atom((-1.2, 0.4, 0.0), -1.0)]
    expected = 0.5 * (2.0 * (0.6 + 0.7 + 0.55 + 1) - (-2.4 - 0.4 + 1))
    assert reaction_field_energy(atoms, f) == pytest.approx(expected)


def test_trilinear_outside_raises():
    g = build_grid(1.0, 1)
    with pytest.raises(InvalidArgument):
        trilinear(g, g.zeros(), [[2.0, 0.0, 0.0]])


def test_concentration_fields(paper_bulk):
    g = build_grid(10.0, 9)
    phi = sphere_levelset(g, 5.0)
    u = GridFunction(g, np.where(phi.values > 0, 0.0, -30.0), "potential")
    mask = phi.values > 0
    st = concentration_fields(u, StericClosure(paper_bulk), mask)
    assert [f.name for f in st] == ["cation", "anion"]
    np.testing.assert_allclose(st[0].values[mask], 0.1, rtol=1e-12)
    assert not st[0].values[~mask].any()
    deep = GridFunction(g, np.full(g.shape, -40.0), "potential")
    c = concentration_fields(deep, StericClosure(paper_bulk), np.ones(g.shape, bool))
    assert np.all(c[0].values * MOLAR * 2.76 ** 3 <= 1 + 1e-12)
    cl = concentration_fields(deep, ClassicalClosure(paper_bulk), np.ones(g.shape, bool))
    assert cl[0].values.max() > 1e3 / (2.76 ** 3 * MOLAR)


def test_vtk_zero_field_layout(tmp_path):
    g = build_grid(1.0, 1)
    p = tmp_path / "z.vtk"
    export_vtk([GridFunction(g, g.zeros(), name="zeros")], p)
    lines = p.read_text().splitlines()
    assert "DIMENSIONS 3 3 3" in lines
    assert "POINT_DATA 27" in lines
    data = lines[lines.index("LOOKUP_TABLE default") + 1:]
    assert data == ["0"] * 27


def test_vtk_x_fastest_roundtrip(tmp_path):
    g = build_grid(1.0, 1)
    vals = np.arange(27.0).reshape(g.shape, order="F")
    p = tmp_path / "a.vtk"
    export_vtk([GridFunction(g, vals, name="levelset")], p)
    data = p.read_text().splitlines()[-27:]
    assert [float(v) for v in data] == list(range(27))
    np.testing.assert_array_equal(load_levelset(p, g).values, vals)


def test_vtk_rejects_mixed_grids(tmp_path):
    a, b = build_grid(1.0, 1), build_grid(1.0, 3)
    with pytest.raises(InvalidArgument):
        export_vtk([GridFunction(a, a.zeros()), GridFunction(b, b.zeros())], tmp_path / "x.vtk")
    with pytest.raises(InvalidArgument):
        export_vtk([], tmp_path / "x.vtk")


def test_iso_band_nonempty_for_sphere():
    g = build_grid(10.0, 49)
    phi = sphere_levelset(g, 5.0)
    pts, vals, cols = iso_band([phi], phi, 0.8)
    assert len(pts) > 0
    assert np.all(np.abs(vals - 0.8) <= g.h / 2)
    r = np.linalg.norm(pts, axis=1)
    np.testing.assert_allclose(r, 5.8, atol=g.h / 2 + 1e-12)


def test_csv_profiles(tmp_path):
    g = build_grid(10.0, 9)
    phi = sphere_levelset(g, 5.0)
    p = tmp_path / "line.csv"
    n = export_csv_profile([phi], p, start=(0, 0, 0), end=(8, 0, 0), samples=5)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["s", "x", "y", "z", "levelset"]
    assert n == 5 and float(rows[-1][0]) == 8.0
    assert float(rows[4][4]) == pytest.approx(1.0)   # s = 6 on the x axis
    q = tmp_path / "iso.csv"
    assert export_csv_profile([phi], q, levelset=phi, level=0.8) > 0
    with pytest.raises(InvalidArgument):
        export_csv_profile([phi], q)
    with pytest.raises(InvalidArgument):
        line_profile([phi], (0, 0, 0), (1, 0, 0), samples=1)


def test_radial_profile_of_radius():
    g = build_grid(10.0, 19)
    phi = sphere_levelset(g, 0.0)
    r, mean = radial_profile(phi, bin_width=1.0)
    assert np.all(np.abs(mean - r) <= 0.5)


def test_surface_mask():
    g = build_grid(10.0, 19)
    phi = sphere_levelset(g, 5.0)
    chi = (phi.values > 0).astype(float)
    m = surface_mask(phi, chi, 1.5)
    assert m.any() and np.all(phi.values[m] > 0) and np.all(phi.values[m] <= 1.5)


def test_convergence_report():
    orders = convergence_report([(0.4, 0.0348), (0.2, 0.0108)])
    assert orders[0] is None
    assert orders[1] == pytest.approx(1.69, abs=0.005)
    assert convergence_report([(0.4, 1e-2), (0.2, 1e-2)])[1] == 0.0
    assert convergence_report([(0.1, 0.0030), (0.05, 0.0008)])[1] == pytest.approx(1.91, abs=0.05)
    assert convergence_report([(0.4, 0.0), (0.2, 1e-3)])[1] is None
    with pytest.raises(InvalidArgument):
        convergence_report([(0.4, 1.0)])


def test_report_text(tmp_path):
    rep = SolveReport(-1.5, -2.0, 3.0, {"cation": 1.2}, 6, 1e-7, extra={"note": "x"})
    text = rep.as_text()
    assert "reaction_field_energy_kT: -1.5" in text
    assert "max_concentration_M[cation]: 1.2" in text
    rep.write(tmp_path / "r.txt")
    assert (tmp_path / "r.txt").read_text() == text


def test_no_contrast_reaction_energy_vanishes():
    from stericpb.assembly import assemble_system
    from stericpb.dielectric import build_dielectric
    from stericpb.linsolve import solve_spd
    from stericpb.solute import eval_psi_f

    g = build_grid(6.0, 23)
    d = build_dielectric(sphere_levelset(g, 3.0), 4.0, 4.0, 1.0)
    atoms = [Atom((0.1, 0.2, 0.0), 1.0, 3.0)]
    uf = eval_psi_f(atoms, CONST, g.points(), 4.0)
    system = assemble_system(g, d, uf, g.zeros(), CONST)
    psi, _ = solve_spd(system.matrix, system.b)
    assert not psi.any()
    assert reaction_field_energy(atoms, GridFunction(g, system.full_field(psi))) == 0.0
