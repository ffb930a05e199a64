"""Truncation bounds and the Newton iteration with truncation."""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import AssembledSystem
from .errors import InvalidArgument, NumericalFailure
from .linsolve import LinearSolveConfig, solve_spd

log = logging.getLogger(__name__)

OMEGA_MIN = 2.0 ** -30


@dataclass
class Bounds:
    upper: np.ndarray
    lower: np.ndarray
    stats: tuple = ()


@dataclass
class NewtonStep:
    step: int
    residual: float
    omega: float
    halvings: int
    clamped_upper: int
    clamped_lower: int
    linear_iterations: int
    energy_before_truncation: Optional[float] = None
    energy_after_truncation: Optional[float] = None

    def log_line(self) -> str:
        return (f"step {self.step:3d}  |F|inf={self.residual:.3e}  omega={self.omega:g}  "
                f"halvings={self.halvings}  clamp+={self.clamped_upper}  "
                f"clamp-={self.clamped_lower}  lin_its={self.linear_iterations}")


@dataclass
class NewtonState:
    psi: np.ndarray
    residual: np.ndarray
    residual_norm: float
    steps: int = 0
    history: list = field(default_factory=list)   # |F|inf, starting with the initial guess
    records: list = field(default_factory=list)   # NewtonStep per iteration
    converged: bool = False

    @property
    def omegas(self):
        return [r.omega for r in self.records]


def compute_bounds(system: AssembledSystem, closure, config: LinearSolveConfig = None) -> Bounds:
    """Solve the two comparison problems with saturated charge densities.

    The charge density range includes zero so the bounds stay valid for
    electrolytes whose species all carry the same sign.
    """
    config = config or LinearSolveConfig()
    qmin, qmax = closure.bulk.charge_density_range()
    A = system.matrix
    n = system.grid.n
    rtol = min(config.rtol, 1e-12)
    up, st_up = solve_spd(A, system.coupling * system.chi * qmax + system.b, config, n=n,
                          rtol=rtol)
    lo, st_lo = solve_spd(A, system.coupling * system.chi * qmin + system.b, config, n=n,
                          rtol=rtol)
    gap = float(np.min(up - lo))
    # linear-solver error may blur exact ties, e.g. where chi vanishes everywhere
    slack = 1e-8 * max(1.0, float(np.max(np.abs(up))), float(np.max(np.abs(lo))))
    if gap < -slack:
        raise NumericalFailure("lower bound exceeds upper bound", min_gap=gap)
    # where ions saturate the solution touches a bound; widen by the solve error
    return Bounds(np.maximum(up, lo) + slack, np.minimum(up, lo) - slack, (st_up, st_lo))


def truncate(psi_bar, bounds: Bounds):
    """Clamp componentwise into ``[lower, upper]``; returns (psi, n_upper, n_lower)."""
    above = psi_bar > bounds.upper
    below = psi_bar < bounds.lower
    psi = np.where(above, bounds.upper, np.where(below, bounds.lower, psi_bar))
    return psi, int(above.sum()), int(below.sum())


def discrete_energy(system: AssembledSystem, closure, psi) -> float:
    """``0.5 psi.A psi - sum_m int_0^{psi_m} g - b.psi`` (convex in psi)."""
    quad = 0.5 * float(psi @ system.operator.matvec(psi))
    s = system.solvent
    nonlinear = 0.0
    if s.size:
        uf = system.uf[s]
        G = closure.charge_integral(uf + psi[s]) - closure.charge_integral(uf)
        nonlinear = float(np.sum(system.coupling * system.chi[s] * G))
    return quad - nonlinear - float(system.b @ psi)


def _max_norm(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def newton_solve(system: AssembledSystem, closure, bounds: Optional[Bounds] = None,
                 tol: float = 1e-6, psi0=None, config: LinearSolveConfig = None,
                 max_steps: int = 50, track_energy: bool = False, callback=None,
                 line_search: str = "residual") -> NewtonState:
    """Newton iteration with backtracking and truncation into ``bounds``.

    Pass ``bounds=None`` to skip truncation (classical closure).  The step
    length is halved until the max-norm residual does not increase
    (``line_search="residual"``) or until the convex energy satisfies the
    Armijo condition (``line_search="energy"``).
    """
    if line_search not in ("residual", "energy"):
        raise InvalidArgument(f"unknown line search {line_search!r}")
    config = config or LinearSolveConfig()
    n = system.grid.n
    psi = np.zeros(n ** 3) if psi0 is None else np.array(psi0, dtype=float)
    if bounds is not None:
        psi, _, _ = truncate(psi, bounds)
    F = system.residual(psi, closure)
    fnorm = _max_norm(F)
    state = NewtonState(psi, F, fnorm, history=[fnorm])
    log.info("newton start |F|inf=%.3e", fnorm)
    while fnorm > tol:
        if not np.isfinite(fnorm):
            raise NumericalFailure("residual is not finite; try a better initial guess",
                                   steps=state.steps, history=state.history)
        if state.steps >= max_steps:
            raise NumericalFailure("Newton iteration did not converge", steps=state.steps,
                                   residual=fnorm, history=state.history)
        shift = -system.jacobian_diag(psi, closure)
        # keep inner error well below the outer tolerance near convergence
        f2 = float(np.linalg.norm(F))
        rtol = max(1e-12, min(config.rtol, 0.1 * tol / f2)) if f2 > 0 else config.rtol
        delta, lin = solve_spd(system.matrix, -F, config, shift=np.maximum(shift, 0.0),
                               n=n, rtol=rtol)
        omega = 1.0
        halvings = 0
        if line_search == "energy":
            e0 = discrete_energy(system, closure, psi)
            slope = float(F @ delta)
        while True:
            psi_bar = psi + omega * delta
            F_bar = system.residual(psi_bar, closure)
            if line_search == "residual":
                if _max_norm(F_bar) <= fnorm:
                    break
            elif discrete_energy(system, closure, psi_bar) <= e0 + 1e-4 * omega * slope:
                break
            omega *= 0.5
            halvings += 1
            if omega < OMEGA_MIN:
                raise NumericalFailure("backtracking stagnated", steps=state.steps,
                                       residual=fnorm, history=state.history)
        e_bar = e_new = None
        if bounds is not None:
            psi_new, n_up, n_lo = truncate(psi_bar, bounds)
            if track_energy:
                e_bar = discrete_energy(system, closure, psi_bar)
                e_new = discrete_energy(system, closure, psi_new)
            F = system.residual(psi_new, closure) if (n_up or n_lo) else F_bar
        else:
            psi_new, n_up, n_lo = psi_bar, 0, 0
            F = F_bar
        psi = psi_new
        fnorm = _max_norm(F)
        state.steps += 1
        rec = NewtonStep(state.steps, fnorm, omega, halvings, n_up, n_lo, lin.iterations,
                         e_bar, e_new)
        state.records.append(rec)
        state.history.append(fnorm)
        log.info(rec.log_line())
        if callback is not None:
            callback(rec)
    state.psi = psi
    state.residual = F
    state.residual_norm = fnorm
    state.converged = True
    return state
