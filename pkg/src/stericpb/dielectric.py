"""Level-set field, smeared solvent indicator and smoothed dielectric."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidArgument
from .mesh import GridFunction, UniformGrid3

DEFAULT_TAU = 1.5
# stand-in for "infinitely far from any atom"
FAR_FIELD = 1e6


def _check_tau(tau):
    if not tau > 0:
        raise InvalidArgument(f"transition width tau must be positive, got {tau}")


def smeared_heaviside(s, tau: float):
    """C^1 ramp from 0 (s <= -tau) to 1 (s >= tau)."""
    _check_tau(tau)
    s = np.asarray(s, dtype=float)
    mid = 0.5 + s / (2 * tau) + np.sin(np.pi * s / tau) / (2 * np.pi)
    out = np.where(s > tau, 1.0, np.where(s < -tau, 0.0, mid))
    return out if out.ndim else float(out)


def smeared_heaviside_prime(s, tau: float):
    _check_tau(tau)
    s = np.asarray(s, dtype=float)
    mid = (1.0 + np.cos(np.pi * s / tau)) / (2 * tau)
    out = np.where(np.abs(s) > tau, 0.0, mid)
    return out if out.ndim else float(out)


def harmonic_average(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise InvalidArgument("harmonic average needs positive arguments")
    out = 2 * a * b / (a + b)
    return out if out.ndim else float(out)


def sphere_union_levelset(atoms, grid: UniformGrid3) -> GridFunction:
    """Signed distance to the union of atomic balls (negative inside)."""
    phi = np.full(grid.shape, FAR_FIELD)
    X, Y, Z = grid.mesh()
    for a in atoms:
        x0, y0, z0 = a.position
        d = np.sqrt((X - x0) ** 2 + (Y - y0) ** 2 + (Z - z0) ** 2) - a.radius
        np.minimum(phi, d, out=phi)
    return GridFunction(grid, phi, "field", "levelset")


def sphere_levelset(grid: UniformGrid3, radius: float, center=(0.0, 0.0, 0.0)) -> GridFunction:
    X, Y, Z = grid.mesh()
    r = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
    return GridFunction(grid, r - radius, "field", "levelset")


def _read_vtk_scalars(lines):
    """Parse a legacy ASCII STRUCTURED_POINTS file; return header and arrays."""
    it = iter(lines)
    header = {}
    arrays = {}
    tokens = []
    for line in it:
        parts = line.split()
        if not parts:
            continue
        key = parts[0].upper()
        if key == "DIMENSIONS":
            header["dims"] = tuple(int(p) for p in parts[1:4])
        elif key == "ORIGIN":
            header["origin"] = tuple(float(p) for p in parts[1:4])
        elif key == "SPACING":
            header["spacing"] = tuple(float(p) for p in parts[1:4])
        elif key == "POINT_DATA":
            header["npoints"] = int(parts[1])
        elif key == "SCALARS":
            name = parts[1]
            next(it)  # LOOKUP_TABLE line
            count = header["npoints"]
            vals = []
            while len(vals) < count:
                vals.extend(next(it).split())
            arrays[name] = np.array(vals, dtype=float)
    return header, arrays


def load_levelset(path, grid: UniformGrid3, field_name: str = None) -> GridFunction:
    """Load a level-set sampled on exactly ``grid``.

    Two layouts are accepted: a plain text file whose first line is
    ``N_h L h`` followed by values in x-fastest order, or the legacy VTK
    structured-points file written by :func:`stericpb.postproc.export_vtk`.
    """
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    npts = grid.points_per_axis
    if lines and lines[0].startswith("# vtk"):
        header, arrays = _read_vtk_scalars(lines)
        dims = header.get("dims")
        if dims != (npts,) * 3:
            raise ConfigError(f"level-set dimensions {dims} do not match grid {(npts,) * 3}")
        spacing = header.get("spacing", (0.0,) * 3)
        origin = header.get("origin", (0.0,) * 3)
        if not np.allclose(spacing, grid.h, rtol=1e-9) or not np.allclose(origin, -grid.L, rtol=1e-9):
            raise ConfigError(f"level-set spacing/origin {spacing}/{origin} do not match grid")
        if not arrays:
            raise ConfigError("VTK file carries no scalar arrays")
        name = field_name or ("levelset" if "levelset" in arrays else next(iter(arrays)))
        values = arrays[name]
    else:
        head = lines[0].split()
        try:
            n, L, h = int(head[0]), float(head[1]), float(head[2])
        except (IndexError, ValueError):
            raise ConfigError(f"bad level-set header {lines[0]!r}")
        if n != grid.n or not math.isclose(L, grid.L, rel_tol=1e-9) \
                or not math.isclose(h, grid.h, rel_tol=1e-9):
            raise ConfigError(
                f"level-set grid (N_h={n}, L={L}, h={h}) does not match run grid "
                f"(N_h={grid.n}, L={grid.L}, h={grid.h})")
        values = np.array(" ".join(lines[1:]).split(), dtype=float)
    if values.size != npts ** 3:
        raise ConfigError(f"expected {npts ** 3} level-set values, found {values.size}")
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ConfigError(f"non-finite level-set value at flat index {bad[0]}")
    phi = values.reshape((npts,) * 3, order="F")
    return GridFunction(grid, phi, "field", "levelset")


def write_levelset_text(path, levelset: GridFunction):
    g = levelset.grid
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.L!r} {g.h!r}\n")
        np.savetxt(fh, levelset.values.ravel(order="F"), fmt="%.17g")


@dataclass
class DielectricModel:
    """Smoothed dielectric on a grid plus harmonic face coefficients.

    ``faces[a]`` holds coefficients between neighbours along axis ``a``:
    entry ``[..., i, ...]`` couples grid points ``i`` and ``i + 1``.
    ``source_faces`` hold ``HA(eps) - eps_m`` for the Coulomb source term.
    """

    eps_m: float
    eps_w: float
    tau: float
    chi: np.ndarray
    eps: np.ndarray
    faces: tuple
    source_faces: tuple


def _face_pairs(arr, axis):
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return arr[tuple(lo)], arr[tuple(hi)]


def build_dielectric(levelset: GridFunction, eps_m: float = 1.0, eps_w: float = 78.0,
                     tau: float = DEFAULT_TAU) -> DielectricModel:
    if not (eps_m > 0 and eps_w > 0):
        raise InvalidArgument("dielectric constants must be positive")
    _check_tau(tau)
    chi = smeared_heaviside(levelset.values, tau)
    eps = (1 - chi) * eps_m + chi * eps_w
    faces = []
    source_faces = []
    for axis in range(3):
        a, b = _face_pairs(eps, axis)
        faces.append(2 * a * b / (a + b))
        # HA(a, b) - eps_m written so that it is exactly zero when a = b = eps_m
        da, db = _face_pairs(chi * (eps_w - eps_m), axis)
        source_faces.append((eps_m * (da + db) + 2 * da * db) / (a + b))
    return DielectricModel(eps_m, eps_w, tau, chi, eps, tuple(faces), tuple(source_faces))
