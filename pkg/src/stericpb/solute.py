"""Solute atoms, PQR ingestion and the Coulomb / Yukawa potentials.

Potentials are returned in dimensionless form ``u = beta e psi`` (units of
k_B T / e).  Charges are in units of e and lengths in Angstrom.
"""
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy import constants as sc

from .errors import InvalidArgument, PQRParseError

log = logging.getLogger(__name__)

# ions per cubic Angstrom in a 1 mol/L solution
MOLAR = sc.Avogadro * 1e-27
# smallest distance used when evaluating 1/r at an atom center
DELTA_MIN = 1e-6


@dataclass(frozen=True)
class PhysicalConstants:
    temperature: float = 298.15

    def __post_init__(self):
        if not self.temperature > 0:
            raise InvalidArgument("temperature must be positive")

    @property
    def coupling(self) -> float:
        """Vacuum Bjerrum length ``beta e^2 / (4 pi eps0)`` in Angstrom."""
        kT = sc.k * self.temperature
        return sc.e ** 2 / (4 * math.pi * sc.epsilon_0 * kT) * 1e10

    @property
    def thermal_voltage_mV(self) -> float:
        return sc.k * self.temperature / sc.e * 1e3


@dataclass(frozen=True)
class Atom:
    position: tuple
    charge: float
    radius: float = 0.0

    def __post_init__(self):
        pos = tuple(float(p) for p in self.position)
        if len(pos) != 3 or not all(math.isfinite(p) for p in pos):
            raise InvalidArgument(f"bad atom position {self.position}")
        if self.radius < 0:
            raise InvalidArgument(f"negative atom radius {self.radius}")
        object.__setattr__(self, "position", pos)


@dataclass
class SoluteModel:
    atoms: List[Atom] = field(default_factory=list)
    levelset: Optional[np.ndarray] = None

    @property
    def positions(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms], dtype=float).reshape(-1, 3)

    @property
    def charges(self) -> np.ndarray:
        return np.array([a.charge for a in self.atoms], dtype=float)

    @property
    def radii(self) -> np.ndarray:
        return np.array([a.radius for a in self.atoms], dtype=float)


def parse_pqr(source) -> SoluteModel:
    """Read ATOM/HETATM records from PQR text.

    ``source`` may be a path, or any iterable of lines (an open file or a
    ``StringIO``).  The last five whitespace-separated fields of each record
    are taken as ``x y z charge radius``; everything else is ignored.
    """
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        with open(source) as fh:
            return parse_pqr(fh)
    if isinstance(source, str):
        source = io.StringIO(source)

    atoms = []
    for lineno, line in enumerate(source, start=1):
        fields = line.split()
        if not fields or fields[0] not in ("ATOM", "HETATM"):
            continue
        if len(fields) < 6:
            raise PQRParseError(f"too few fields in record: {line.rstrip()!r}", lineno)
        try:
            x, y, z, q, r = (float(v) for v in fields[-5:])
        except ValueError:
            raise PQRParseError(f"malformed numeric field in {line.rstrip()!r}", lineno)
        try:
            atoms.append(Atom((x, y, z), q, r))
        except InvalidArgument as exc:
            raise PQRParseError(str(exc), lineno)
    if not atoms:
        log.warning("PQR input contains no ATOM/HETATM records")
    return SoluteModel(atoms)


def _distances(positions, points):
    points = np.asarray(points, dtype=float)
    diff = points[..., None, :] - positions
    return np.sqrt(np.einsum("...ij,...ij->...i", diff, diff))


def _pointwise_sum(atoms, points, kernel):
    """Sum ``Q_i * kernel(r_i)`` over atoms, looping over atom chunks."""
    points = np.asarray(points, dtype=float)
    out = np.zeros(points.shape[:-1])
    if not atoms:
        return out
    # keep the (points x atoms x 3) temporary around 4M entries
    chunk = max(1, 4_000_000 // max(out.size, 1))
    pos = np.array([a.position for a in atoms])
    q = np.array([a.charge for a in atoms])
    for start in range(0, len(atoms), chunk):
        r = _distances(pos[start:start + chunk], points)
        out += np.sum(q[start:start + chunk] * kernel(r), axis=-1)
    return out


def eval_psi_f(atoms, constants: PhysicalConstants, points, eps_m: float = 1.0):
    """Dimensionless vacuum-solute Coulomb potential at ``points`` (..., 3)."""
    lam = constants.coupling / eps_m
    return _pointwise_sum(atoms, points, lambda r: lam / np.maximum(r, DELTA_MIN))


def debye_kappa(constants: PhysicalConstants, valences, concentrations, eps_w: float):
    """Inverse Debye length (1/Angstrom) for concentrations in ions/Angstrom^3."""
    z = np.asarray(valences, dtype=float)
    c = np.asarray(concentrations, dtype=float)
    return math.sqrt(4 * math.pi * constants.coupling * float(np.sum(z * z * c)) / eps_w)


def eval_yukawa_boundary(atoms, constants: PhysicalConstants, points, eps_w: float = 78.0,
                         valences=(), concentrations=()):
    """Screened Coulomb potential used as Dirichlet data on the box surface."""
    kappa = debye_kappa(constants, valences, concentrations, eps_w) if len(valences) else 0.0
    lam = constants.coupling / eps_w

    def kernel(r):
        r = np.maximum(r, DELTA_MIN)
        return lam * np.exp(-kappa * r) / r

    return _pointwise_sum(atoms, points, kernel)
