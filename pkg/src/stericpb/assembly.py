"""Finite-difference operator, right-hand side and nonlinear residual.

The discrete equation for the reaction potential is scaled by
``beta e / eps0`` so that potentials are dimensionless, lengths are in
Angstrom and concentrations in ions/Angstrom^3::

    A psi = coupling * chi * sum_l z_l c_l(u_f + psi) + b,   coupling = 4 pi lambda

where ``A`` is the 7-point operator ``-div_h eps grad_h`` (units 1/Angstrom^2)
and ``b`` collects Dirichlet data, the Coulomb flux-difference source and any
manufactured source.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .dielectric import DielectricModel, smeared_heaviside, smeared_heaviside_prime
from .errors import UnsupportedConfiguration
from .mesh import UniformGrid3
from .solute import DELTA_MIN, PhysicalConstants


class StencilOperator:
    """Symmetric 7-point operator ``-div_h k grad_h`` with face coefficients ``k``."""

    def __init__(self, grid: UniformGrid3, faces):
        h2 = grid.h ** 2
        fx, fy, fz = faces
        self.grid = grid
        # wx[a] couples full-grid points a and a + 1 along x on interior rows
        self.wx = fx[:, 1:-1, 1:-1] / h2
        self.wy = fy[1:-1, :, 1:-1] / h2
        self.wz = fz[1:-1, 1:-1, :] / h2
        self.diag = (self.wx[:-1] + self.wx[1:] + self.wy[:, :-1] + self.wy[:, 1:]
                     + self.wz[:, :, :-1] + self.wz[:, :, 1:])
        self._matrix = None

    def apply_full(self, U: np.ndarray) -> np.ndarray:
        """``L_h U`` at interior points for a full grid array (boundary included)."""
        c = U[1:-1, 1:-1, 1:-1]
        return (self.diag * c
                - self.wx[1:] * U[2:, 1:-1, 1:-1] - self.wx[:-1] * U[:-2, 1:-1, 1:-1]
                - self.wy[:, 1:] * U[1:-1, 2:, 1:-1] - self.wy[:, :-1] * U[1:-1, :-2, 1:-1]
                - self.wz[:, :, 1:] * U[1:-1, 1:-1, 2:] - self.wz[:, :, :-1] * U[1:-1, 1:-1, :-2])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """``A x`` for an interior vector (homogeneous boundary)."""
        n = self.grid.n
        X = np.zeros((n + 2,) * 3)
        X[1:-1, 1:-1, 1:-1] = np.reshape(x, (n, n, n), order="F")
        return self.apply_full(X).ravel(order="F")

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            self._matrix = self.to_sparse()
        return self._matrix

    def to_sparse(self) -> sp.csr_matrix:
        n = self.grid.n
        idx = np.arange(n ** 3).reshape((n, n, n), order="F")
        rows = [idx.ravel(order="F")]
        cols = [idx.ravel(order="F")]
        vals = [self.diag.ravel(order="F")]
        pairs = (
            (idx[:-1], idx[1:], self.wx[1:-1]),
            (idx[:, :-1], idx[:, 1:], self.wy[:, 1:-1]),
            (idx[:, :, :-1], idx[:, :, 1:], self.wz[:, :, 1:-1]),
        )
        for a, b, w in pairs:
            a, b, w = a.ravel(order="F"), b.ravel(order="F"), -w.ravel(order="F")
            rows += [a, b]
            cols += [b, a]
            vals += [w, w]
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n ** 3, n ** 3))
        return A.tocsr()


def apply_Lh(operator: StencilOperator, U: np.ndarray) -> np.ndarray:
    return operator.apply_full(U)


def build_rhs(grid: UniformGrid3, dielectric: DielectricModel, uf: np.ndarray,
              boundary: np.ndarray, operator: Optional[StencilOperator] = None) -> np.ndarray:
    """Fixed right-hand side: Dirichlet contributions plus the Coulomb source.

    ``uf`` is the dimensionless Coulomb potential on the full grid and
    ``boundary`` a full array whose boundary layer carries the reaction
    potential data (interior entries are ignored).
    """
    if operator is None:
        operator = StencilOperator(grid, dielectric.faces)
    Ub = np.array(boundary, dtype=float)
    Ub[1:-1, 1:-1, 1:-1] = 0.0
    b = -operator.apply_full(Ub)
    source_op = StencilOperator(grid, dielectric.source_faces)
    b -= source_op.apply_full(uf)
    return b.ravel(order="F")


@dataclass
class AssembledSystem:
    grid: UniformGrid3
    operator: StencilOperator
    b: np.ndarray
    chi: np.ndarray
    uf: np.ndarray
    coupling: float
    boundary: np.ndarray

    def __post_init__(self):
        self.solvent = np.flatnonzero(self.chi > 0)
        self._last = None
        if not np.all(np.isfinite(self.b)):
            raise ValueError("right-hand side has non-finite entries")

    @property
    def matrix(self):
        return self.operator.matrix

    def nonlinear_term(self, psi, closure):
        """``g(psi)`` and ``g'(psi)`` as interior vectors."""
        # the Newton loop asks for the residual and the Jacobian at the same iterate
        last = self._last
        if last is not None and last[0] is closure and np.array_equal(last[1], psi):
            return last[2], last[3]
        g = np.zeros_like(psi)
        dg = np.zeros_like(psi)
        s = self.solvent
        if s.size:
            rho, drho = closure.charge(self.uf[s] + psi[s])
            scale = self.coupling * self.chi[s]
            g[s] = scale * rho
            dg[s] = scale * drho
        self._last = (closure, np.array(psi, copy=True), g, dg)
        return g, dg

    def residual(self, psi, closure):
        g, _ = self.nonlinear_term(psi, closure)
        return self.operator.matvec(psi) - g - self.b

    def jacobian_diag(self, psi, closure):
        return self.nonlinear_term(psi, closure)[1]

    def full_field(self, psi) -> np.ndarray:
        return self.grid.to_full(psi, self.boundary)


def assemble_system(grid: UniformGrid3, dielectric: DielectricModel, uf: np.ndarray,
                    boundary: np.ndarray, constants: PhysicalConstants,
                    extra_source: Optional[np.ndarray] = None) -> AssembledSystem:
    op = StencilOperator(grid, dielectric.faces)
    b = build_rhs(grid, dielectric, uf, boundary, op)
    if extra_source is not None:
        b = b + extra_source
    Ub = np.array(boundary, dtype=float)
    Ub[1:-1, 1:-1, 1:-1] = 0.0
    return AssembledSystem(grid, op, b, grid.interior(dielectric.chi), grid.interior(uf),
                           4 * math.pi * constants.coupling, Ub)


def residual(system: AssembledSystem, psi, closure):
    return system.residual(psi, closure)


def jacobian_diag(system: AssembledSystem, psi, closure):
    return system.jacobian_diag(psi, closure)


def dense_matrix(system: AssembledSystem, psi=None, closure=None) -> np.ndarray:
    """Dense ``A - G'(psi)`` for small grids (``A`` alone without ``psi``)."""
    A = system.matrix.toarray()
    if psi is not None:
        A -= np.diag(system.jacobian_diag(psi, closure))
    return A


# ---------------------------------------------------------------------------
# Manufactured solution for the sphere test

@dataclass
class ManufacturedProblem:
    exact: np.ndarray      # full grid, exact reaction potential
    source: np.ndarray     # interior vector added to b
    amplitude: float
    length: float


def mms_source(grid: UniformGrid3, dielectric: DielectricModel, constants: PhysicalConstants,
               closure, radius: float, charge: float, center=(0.0, 0.0, 0.0),
               amplitude: float = 1000.0, length: Optional[float] = None,
               geometry: str = "sphere") -> ManufacturedProblem:
    """Source making ``amplitude * exp(-r^2/length^2)`` the exact reaction potential.

    The source is the residual of the continuous equation at the exact
    solution, so the discrete error measures truncation error.  Requires a
    single charge at the center of a sphere of the given radius.
    """
    if geometry != "sphere":
        raise UnsupportedConfiguration("manufactured source is only available for the sphere")
    if length is None:
        length = grid.L
    eps_m, eps_w, tau = dielectric.eps_m, dielectric.eps_w, dielectric.tau
    X, Y, Z = grid.mesh()
    r = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
    psi = amplitude * np.exp(-(r / length) ** 2)
    dpsi = -2 * r / length ** 2 * psi
    lap = (-6 / length ** 2 + 4 * r ** 2 / length ** 4) * psi
    H = smeared_heaviside(r - radius, tau)
    eps = eps_m + (eps_w - eps_m) * H
    deps = (eps_w - eps_m) * smeared_heaviside_prime(r - radius, tau)
    div_term = -(deps * dpsi + eps * lap)

    lam = constants.coupling
    rs = np.maximum(r, DELTA_MIN)
    uf = lam * charge / (eps_m * rs)
    flux_term = -(lam * charge / eps_m) * deps / rs ** 2

    ion_term = np.zeros_like(r)
    mask = H > 0
    rho, _ = closure.charge(uf[mask] + psi[mask])
    ion_term[mask] = 4 * math.pi * lam * H[mask] * rho

    source = div_term - ion_term - flux_term
    return ManufacturedProblem(psi, grid.interior(source), amplitude, length)
