"""SPD linear solves for the bounds problems and the Newton correction.

Two methods share one preconditioned conjugate-gradient loop: ``"cg"``
(Jacobi-preconditioned) and ``"mg"`` (one symmetric geometric multigrid
V-cycle per application).  The multigrid hierarchy uses trilinear
prolongation on the cubic lattice and Galerkin coarse operators, so it
handles the variable dielectric and the diagonal Newton shift alike.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, NumericalFailure

log = logging.getLogger(__name__)

METHODS = ("cg", "mg")
# diagonal spread beyond which solves are Jacobi-scaled first
STIFF_RATIO = 1e8


@dataclass
class LinearSolveConfig:
    method: str = "mg"
    rtol: float = 1e-10
    maxiter: int = 500
    smoother_sweeps: int = 2

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown linear method {self.method!r}; choose from {METHODS}")
        if not 0 < self.rtol < 1:
            raise InvalidArgument("linear tolerance must lie in (0, 1)")
        if self.maxiter < 1:
            raise InvalidArgument("linear maxiter must be >= 1")
        if self.smoother_sweeps < 1:
            raise InvalidArgument("smoother_sweeps must be >= 1")


@dataclass
class SolveStats:
    iterations: int
    residual: float
    rhs_norm: float
    history: list = field(default_factory=list)


def interpolation_1d(n_fine: int, n_coarse: int) -> sp.csr_matrix:
    """Linear interpolation from ``n_coarse`` to ``n_fine`` interior nodes on [0, 1]."""
    xf = np.arange(1, n_fine + 1) / (n_fine + 1)
    pos = xf * (n_coarse + 1)  # position in coarse index units, boundary at 0 and n_c + 1
    left = np.floor(pos).astype(int)
    frac = pos - left
    rows, cols, vals = [], [], []
    for offset, w in ((0, 1 - frac), (1, frac)):
        J = left + offset
        keep = (J >= 1) & (J <= n_coarse) & (w > 1e-14)
        rows.append(np.flatnonzero(keep))
        cols.append(J[keep] - 1)
        vals.append(w[keep])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n_fine, n_coarse))


class MultigridPreconditioner:
    """Symmetric V-cycle on a hierarchy of cubic lattices."""

    coarsest = 7

    def __init__(self, matrix: sp.spmatrix, n: int, sweeps: int = 2, omega: float = 2.0 / 3.0):
        if matrix.shape[0] != n ** 3:
            raise InvalidArgument(f"matrix of size {matrix.shape[0]} is not a {n}^3 lattice")
        self.sweeps = sweeps
        self.omega = omega
        self.levels = []
        A = sp.csr_matrix(matrix)
        while n > self.coarsest:
            nc = (n + 1) // 2 - 1
            P1 = interpolation_1d(n, nc)
            P = sp.kron(P1, sp.kron(P1, P1, format="csr"), format="csr")
            self.levels.append((A, 1.0 / A.diagonal(), P))
            A = (P.T @ A @ P).tocsr()
            n = nc
        self.coarse_solve = spla.factorized(sp.csc_matrix(A))

    def _smooth(self, A, dinv, x, r_rhs, sweeps):
        for _ in range(sweeps):
            x = x + self.omega * dinv * (r_rhs - A @ x)
        return x

    def _cycle(self, level, rhs):
        if level == len(self.levels):
            return self.coarse_solve(rhs)
        A, dinv, P = self.levels[level]
        # first sweep from a zero guess needs no matvec
        x = self._smooth(A, dinv, self.omega * dinv * rhs, rhs, self.sweeps - 1)
        x = x + P @ self._cycle(level + 1, P.T @ (rhs - A @ x))
        return self._smooth(A, dinv, x, rhs, self.sweeps)

    def __call__(self, r):
        return self._cycle(0, r)


class JacobiPreconditioner:
    def __init__(self, matrix):
        self.dinv = 1.0 / matrix.diagonal()

    def __call__(self, r):
        return self.dinv * r


def pcg(matrix, rhs, precond, rtol, maxiter, x0=None):
    """Preconditioned conjugate gradients; stops on ``||r||_2 <= rtol ||rhs||_2``."""
    bnorm = float(np.linalg.norm(rhs))
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros_like(rhs), SolveStats(0, 0.0, 0.0)
    if not np.isfinite(bnorm):
        raise NumericalFailure("right-hand side norm is not finite", rhs_norm=bnorm)
    r = rhs - matrix @ x if x0 is not None else rhs.copy()
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    target = rtol * bnorm
    best = rnorm
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while rnorm > target:
        if it >= maxiter:
            raise NumericalFailure("linear solve did not converge", iterations=it,
                                   residual=rnorm, rhs_norm=bnorm)
        Ap = matrix @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        it += 1
        if not np.isfinite(rnorm) or rnorm > 10 * best:
            raise NumericalFailure("linear solve diverged", iterations=it, residual=rnorm,
                                   rhs_norm=bnorm)
        best = min(best, rnorm)
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_res = float(np.linalg.norm(rhs - matrix @ x))
    return x, SolveStats(it, true_res, bnorm, history)


def shifted(matrix, shift=None):
    if shift is None:
        return sp.csr_matrix(matrix)
    shift = np.asarray(shift, dtype=float)
    if np.any(shift < 0):
        raise InvalidArgument("diagonal shift must be nonnegative to keep the system SPD")
    return (matrix + sp.diags(shift)).tocsr()


def solve_spd(matrix, rhs, config: LinearSolveConfig = None, shift=None, n=None, x0=None,
              rtol=None):
    """Solve ``(matrix + diag(shift)) x = rhs`` for an SPD lattice operator.

    ``n`` is the interior points per axis, needed by the multigrid method; it
    is inferred from the matrix size when omitted.  When the diagonal spans
    many orders of magnitude (stiff Newton shifts) the system is solved in
    symmetrically Jacobi-scaled form.
    """
    config = config or LinearSolveConfig()
    M = shifted(matrix, shift)
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return np.zeros_like(rhs), SolveStats(0, 0.0, 0.0)
    rtol = config.rtol if rtol is None else rtol
    d = M.diagonal()
    scale = None
    if d.min() > 0 and d.max() > STIFF_RATIO * d.min():
        scale = 1.0 / np.sqrt(d)
        S = sp.diags(scale)
        M = (S @ M @ S).tocsr()
        rhs = scale * rhs
        if x0 is not None:
            x0 = np.asarray(x0) / scale
    if config.method == "mg":
        if n is None:
            n = int(round(M.shape[0] ** (1.0 / 3.0)))
        precond = MultigridPreconditioner(M, n, config.smoother_sweeps)
    else:
        precond = JacobiPreconditioner(M)
    x, stats = pcg(M, rhs, precond, rtol, config.maxiter, x0)
    return (x if scale is None else scale * x), stats
