"""Derived quantities and exports: energies, concentrations, VTK/CSV files."""
import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .mesh import GridFunction, UniformGrid3
from .solute import MOLAR


@dataclass
class SolveReport:
    """Summary of one solve; energies in k_BT, concentrations in M."""

    energy: float
    potential_min: float
    potential_max: float
    max_concentration: dict
    newton_steps: int
    residual: float
    residual_history: list = field(default_factory=list)
    saturated: int = 0
    closure: str = "steric"
    extra: dict = field(default_factory=dict)

    def as_text(self) -> str:
        lines = [
            f"closure: {self.closure}",
            f"reaction_field_energy_kT: {self.energy:.10g}",
            f"potential_min: {self.potential_min:.10g}",
            f"potential_max: {self.potential_max:.10g}",
        ]
        for name, value in self.max_concentration.items():
            lines.append(f"max_concentration_M[{name}]: {value:.10g}")
        lines += [
            f"newton_steps: {self.newton_steps}",
            f"final_residual: {self.residual:.3e}",
            f"saturation_count: {self.saturated}",
        ]
        lines += [f"{k}: {v}" for k, v in self.extra.items()]
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.as_text())


def trilinear(grid: UniformGrid3, values: np.ndarray, points) -> np.ndarray:
    """Trilinear interpolation of a full-grid array at arbitrary points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = (pts + grid.L) / grid.h
    last = grid.n + 1
    if np.any(s < -1e-9) or np.any(s > last + 1e-9):
        raise InvalidArgument("interpolation point outside the grid box")
    s = np.clip(s, 0.0, last)
    i0 = np.minimum(np.floor(s).astype(int), last - 1)
    f = s - i0
    out = np.zeros(len(pts))
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1 - f[:, 2]
                out += wx * wy * wz * values[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return out


def reaction_field_energy(atoms, reaction: GridFunction) -> float:
    """``0.5 sum_i Q_i psi^r(x_i)`` in k_BT (``reaction`` is dimensionless)."""
    atoms = list(atoms)
    if not atoms:
        return 0.0
    pos = np.array([a.position for a in atoms], dtype=float)
    q = np.array([a.charge for a in atoms], dtype=float)
    vals = trilinear(reaction.grid, reaction.values, pos)
    return 0.5 * float(q @ vals)


def concentration_fields(potential: GridFunction, closure, mask, names=None):
    """One concentration GridFunction (M) per species; zero where ``mask`` is false.

    ``potential`` is the total dimensionless potential ``u_f + psi``.
    """
    mask = np.asarray(mask, dtype=bool)
    bulk = closure.bulk
    names = names or [sp.name or f"ion{l + 1}" for l, sp in enumerate(bulk.species)]
    out = []
    conc = np.zeros((bulk.M,) + potential.values.shape)
    if mask.any():
        c, _ = closure.evaluate(potential.values[mask])
        conc[:, mask] = c / MOLAR
    for l in range(bulk.M):
        out.append(GridFunction(potential.grid, conc[l], "concentration", names[l]))
    return out


def surface_mask(levelset: GridFunction, chi: np.ndarray, tau: float) -> np.ndarray:
    """Grid points with ``chi >= 0.5`` lying within ``tau`` of the zero level set."""
    return (np.asarray(chi) >= 0.5) & (np.abs(levelset.values) <= tau)


def export_vtk(fields: Sequence[GridFunction], path, title: str = "stericpb fields"):
    """Write fields on one grid as a legacy ASCII STRUCTURED_POINTS file."""
    fields = list(fields)
    if not fields:
        raise InvalidArgument("nothing to export")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise InvalidArgument("all exported fields must share one grid")
    npts = grid.points_per_axis
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {npts} {npts} {npts}\n")
        fh.write(f"ORIGIN {-grid.L!r} {-grid.L!r} {-grid.L!r}\n")
        fh.write(f"SPACING {grid.h!r} {grid.h!r} {grid.h!r}\n")
        fh.write(f"POINT_DATA {npts ** 3}\n")
        for f in fields:
            fh.write(f"SCALARS {f.name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, f.values.ravel(order="F"), fmt="%.17g")


def line_profile(fields: Sequence[GridFunction], start, end, samples: int = 101):
    """Sample fields along a segment; returns (distance, xyz, values by name)."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if samples < 2:
        raise InvalidArgument("a line profile needs at least two samples")
    t = np.linspace(0.0, 1.0, samples)
    pts = start + t[:, None] * (end - start)
    dist = t * float(np.linalg.norm(end - start))
    cols = {f.name: trilinear(f.grid, f.values, pts) for f in fields}
    return dist, pts, cols


def iso_band(fields: Sequence[GridFunction], levelset: GridFunction, level: float,
             halfwidth: Optional[float] = None):
    """Grid points whose level-set value lies within ``halfwidth`` of ``level``."""
    grid = levelset.grid
    if halfwidth is None:
        halfwidth = 0.5 * grid.h
    sel = np.abs(levelset.values - level) <= halfwidth
    X, Y, Z = grid.mesh()
    pts = np.stack([X[sel], Y[sel], Z[sel]], axis=1)
    cols = {f.name: f.values[sel] for f in fields}
    return pts, levelset.values[sel], cols


def export_csv_profile(fields: Sequence[GridFunction], path, *, start=None, end=None,
                       samples: int = 101, levelset: GridFunction = None,
                       level: float = None, halfwidth: float = None):
    """Write a line profile (``start``/``end``) or an iso-band sample set as CSV."""
    fields = list(fields)
    if start is not None and end is not None:
        dist, pts, cols = line_profile(fields, start, end, samples)
        header = ["s", "x", "y", "z"] + list(cols)
        rows = np.column_stack([dist, pts] + list(cols.values()))
    elif levelset is not None and level is not None:
        pts, phi, cols = iso_band(fields, levelset, level, halfwidth)
        header = ["x", "y", "z", "levelset"] + list(cols)
        rows = np.column_stack([pts, phi] + list(cols.values())) if len(pts) else \
            np.empty((0, len(header)))
    else:
        raise InvalidArgument("give either start/end or levelset/level")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([[repr(float(v)) for v in row] for row in rows])
    return len(rows)


def radial_profile(field: GridFunction, center=(0.0, 0.0, 0.0), bin_width: float = None,
                   mask=None):
    """Shell averages of a field; returns (bin centers, means), empty bins dropped."""
    grid = field.grid
    bin_width = bin_width or grid.h
    X, Y, Z = grid.mesh()
    r = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
    sel = np.ones(r.shape, bool) if mask is None else np.asarray(mask, bool)
    idx = np.floor(r[sel] / bin_width).astype(int)
    sums = np.bincount(idx, weights=field.values[sel])
    counts = np.bincount(idx)
    keep = counts > 0
    centers = (np.arange(len(counts)) + 0.5) * bin_width
    return centers[keep], sums[keep] / counts[keep]


def convergence_report(levels):
    """Observed orders between consecutive ``(h, error)`` levels.

    Returns one entry per level; the first is ``None`` and levels with a zero
    error also report ``None`` (order not applicable).
    """
    levels = list(levels)
    if len(levels) < 2:
        raise InvalidArgument("need at least two grid levels")
    orders = [None]
    for (h1, e1), (h2, e2) in zip(levels, levels[1:]):
        if e1 == 0 or e2 == 0:
            orders.append(None)
        else:
            orders.append(math.log(e1 / e2) / math.log(h1 / h2))
    return orders
