"""Generalized Boltzmann distributions for the lattice-gas steric model.

Everything is written for the dimensionless potential ``u = beta e psi``.
For a given ``u`` the solvent volume fraction ``gamma`` is the unique root in
(0, 1) of

    f(gamma) = gamma - 1 + sum_j v_j c_j^inf (gamma / gamma^inf)^(v_j/v_0) exp(-z_j u)

and the concentrations follow as
``c_l = c_l^inf (gamma / gamma^inf)^(v_l/v_0) exp(-z_l u)``.

The root is found with Newton's method applied in ``t = ln gamma``; the
function is convex and increasing in ``t`` which makes the iteration
monotone from the right, and keeps every power ``gamma^(v/v0)`` finite even
when ``gamma`` underflows double precision at large ``|u|``.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidArgument, NumericalFailure

log = logging.getLogger(__name__)

TOL_GAMMA = 1e-14
MAXITER_GAMMA = 100
# |exponent| cap for the classical Boltzmann factor
EXP_CAP = 700.0


@dataclass(frozen=True)
class IonSpecies:
    valence: int
    volume: float
    bulk: float
    name: str = ""

    def __post_init__(self):
        if not self.volume > 0:
            raise InvalidArgument(f"ion volume must be positive, got {self.volume}")
        if not self.bulk > 0:
            raise InvalidArgument(f"bulk concentration must be positive, got {self.bulk}")


class BulkState:
    """Ionic species, solvent molecule volume and derived bulk quantities."""

    def __init__(self, species: Sequence[IonSpecies], solvent_volume: float):
        if not species:
            raise InvalidArgument("at least one ionic species is required")
        if not solvent_volume > 0:
            raise InvalidArgument("solvent volume must be positive")
        self.species = tuple(species)
        self.v0 = float(solvent_volume)
        self.z = np.array([s.valence for s in species], dtype=float)
        self.v = np.array([s.volume for s in species], dtype=float)
        self.c = np.array([s.bulk for s in species], dtype=float)
        self.gamma_inf = 1.0 - float(np.sum(self.v * self.c))
        if not 0 < self.gamma_inf < 1:
            raise ConfigError(
                f"bulk solvent volume fraction gamma_inf = {self.gamma_inf:.6g} is not in (0, 1)")
        self.s = self.v / self.v0
        self.log_c = np.log(self.c)
        self.log_gamma_inf = math.log(self.gamma_inf)
        # log of v_j c_j^inf / gamma_inf^(v_j/v0)
        self.log_a = np.log(self.v * self.c) - self.s * self.log_gamma_inf

    @property
    def M(self) -> int:
        return len(self.species)

    def signature(self) -> np.ndarray:
        return np.concatenate([self.z, self.v, self.c, [self.v0]])

    def charge_density_range(self):
        """Bounds on ``sum_l z_l c_l`` implied by ``0 < v_l c_l, sum v_l c_l < 1``."""
        ratios = self.z / self.v
        return min(0.0, float(ratios.min())), max(0.0, float(ratios.max()))


def _col(a):
    return np.asarray(a, dtype=float).reshape((-1,) + (1,))


def f_gamma(gamma, u, bulk: BulkState):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise InvalidArgument("gamma must be positive")
    u = np.asarray(u, dtype=float)
    shape = (bulk.M,) + (1,) * np.broadcast(gamma, u).ndim
    la, s, z = (a.reshape(shape) for a in (bulk.log_a, bulk.s, bulk.z))
    terms = np.exp(la + s * np.log(gamma) - z * u)
    out = gamma - 1.0 + terms.sum(axis=0)
    return out if out.ndim else float(out)


def f_gamma_prime(gamma, u, bulk: BulkState):
    """Derivative of :func:`f_gamma` with respect to gamma."""
    gamma = np.asarray(gamma, dtype=float)
    u = np.asarray(u, dtype=float)
    shape = (bulk.M,) + (1,) * np.broadcast(gamma, u).ndim
    la, s, z = (a.reshape(shape) for a in (bulk.log_a, bulk.s, bulk.z))
    terms = np.exp(la + (s - 1) * np.log(gamma) - z * u)
    out = 1.0 + (s * terms).sum(axis=0)
    return out if out.ndim else float(out)


def _log_gamma_bracket(u, bulk):
    """Interval ``[t_lo, t_hi]`` of ``ln gamma`` guaranteed to contain the root."""
    shape = (bulk.M,) + (1,) * u.ndim
    la, s, z = (a.reshape(shape) for a in (bulk.log_a, bulk.s, bulk.z))
    tj = (z * u - la) / s
    lm = math.log(bulk.M + 1)
    t_hi = np.minimum(0.0, tj.min(axis=0))
    t_lo = np.minimum(-lm, (tj - lm / s).min(axis=0))
    return t_lo, t_hi


def solve_log_gamma(u, bulk: BulkState, t0=None, tol=TOL_GAMMA, maxiter=MAXITER_GAMMA):
    """Vectorized root of ``f`` in ``t = ln gamma``; returns ``(t, iterations)``.

    Newton steps that would leave the current bracket are replaced by
    bisection of the bracket.
    """
    u = np.asarray(u, dtype=float)
    shape = (bulk.M,) + (1,) * u.ndim
    la, s, z = (a.reshape(shape) for a in (bulk.log_a, bulk.s, bulk.z))
    lo, hi = _log_gamma_bracket(u, bulk)
    if t0 is None:
        t = hi.copy()
    else:
        t = np.broadcast_to(np.asarray(t0, dtype=float), u.shape).copy()
        t = np.where(np.isfinite(t), np.clip(t, lo, hi), hi)
    t = np.array(t, dtype=float)
    iters = np.zeros(u.shape, dtype=int)
    active = np.ones(u.shape, dtype=bool)
    f = None
    for _ in range(maxiter + 1):
        terms = np.exp(la + s * t - z * u)
        et = np.exp(t)
        f = et - 1.0 + terms.sum(axis=0)
        active &= ~(np.abs(f) <= tol)
        if not active.any():
            return t, iters
        fp = et + (s * terms).sum(axis=0)
        hi = np.where(active & (f > 0), t, hi)
        lo = np.where(active & (f < 0), t, lo)
        step = f / fp
        tn = t - step
        outside = ~((tn > lo) & (tn < hi))
        tn = np.where(outside, 0.5 * (lo + hi), tn)
        # step below the resolution of t: accept if f is at rounding level
        stalled = active & (tn == t) & (np.abs(f) <= 1e3 * tol)
        active &= ~stalled
        t = np.where(active, tn, t)
        iters += active
        if not active.any():
            return t, iters
    worst = float(np.max(np.abs(np.where(active, f, 0.0))))
    raise NumericalFailure("gamma Newton iteration did not converge",
                           residual=worst, unconverged=int(active.sum()))


def solve_gamma(u, bulk: BulkState, init_guess=None, tol=TOL_GAMMA, maxiter=MAXITER_GAMMA):
    """Solvent volume fraction at potential ``u`` (scalar or array)."""
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    if init_guess is None:
        init_guess = bulk.gamma_inf
    init = np.asarray(init_guess, dtype=float)
    if np.any(init <= 0) or np.any(init >= 1):
        raise InvalidArgument("initial guess must lie in (0, 1)")
    t0 = np.log(init)
    t, _ = solve_log_gamma(u, bulk, t0, tol, maxiter)
    # an untouched start is returned as given, not as exp(log(guess))
    gamma = np.where(t == t0, np.broadcast_to(init, np.shape(t)), np.exp(t))
    return gamma if gamma.ndim else float(gamma)


def concentrations_from_log_gamma(t, u, bulk: BulkState):
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    shape = (bulk.M,) + (1,) * np.broadcast(t, u).ndim
    lc, s, z = (a.reshape(shape) for a in (bulk.log_c, bulk.s, bulk.z))
    return np.exp(lc + s * (t - bulk.log_gamma_inf) - z * u)


def concentrations_from_gamma(gamma, u, bulk: BulkState):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise InvalidArgument("gamma must be positive")
    return concentrations_from_log_gamma(np.log(gamma), u, bulk)


def log_gamma_prime(gamma, c, bulk: BulkState):
    """``d ln(gamma) / du``; finite even where gamma underflows."""
    c = np.asarray(c, dtype=float)
    shape = (bulk.M,) + (1,) * (c.ndim - 1)
    z, v = bulk.z.reshape(shape), bulk.v.reshape(shape)
    return bulk.v0 * np.sum(z * v * c, axis=0) / (bulk.v0 * gamma + np.sum(v * v * c, axis=0))


def gamma_prime(gamma, c, bulk: BulkState):
    return gamma * log_gamma_prime(gamma, c, bulk)


def concentration_prime(gamma, gprime, c, bulk: BulkState):
    """``dc_l/du = (v_l gamma' / (v0 gamma) - z_l) c_l``."""
    c = np.asarray(c, dtype=float)
    shape = (bulk.M,) + (1,) * (c.ndim - 1)
    s, z = bulk.s.reshape(shape), bulk.z.reshape(shape)
    return (s * (np.asarray(gprime) / np.asarray(gamma)) - z) * c


def _concentration_prime_log(dlng, c, bulk):
    shape = (bulk.M,) + (1,) * (c.ndim - 1)
    s, z = bulk.s.reshape(shape), bulk.z.reshape(shape)
    return (s * dlng - z) * c


def packing_gap(u, bulk: BulkState, tol=TOL_GAMMA):
    """``1 - v_l c_l(u)`` per species, evaluated without cancellation.

    Uses ``1 - v_l c_l = gamma + sum_{j != l} v_j c_j``, which stays positive
    where ``v_l c_l`` itself rounds to 1.
    """
    u = np.asarray(u, dtype=float)
    t, _ = solve_log_gamma(u, bulk, tol=tol)
    c = concentrations_from_log_gamma(t, u, bulk)
    vc = bulk.v.reshape((-1,) + (1,) * u.ndim) * c
    return np.exp(t) + (np.sum(vc, axis=0) - vc)


def steric_charge_integral(gamma, log_gamma, c, bulk: BulkState):
    """Closed form of ``int_0^u sum_l z_l c_l(s) ds`` for the lattice gas.

    This is minus the change of the lattice-gas osmotic pressure
    ``sum_l c_l + (gamma - ln gamma) / v0`` relative to the bulk.
    """
    csum = np.sum(c, axis=0)
    return (np.sum(bulk.c) - csum
            + (bulk.gamma_inf - bulk.log_gamma_inf - gamma + log_gamma) / bulk.v0)


# ---------------------------------------------------------------------------
# Closures: c(u), dc/du and int sum z c behind one interface


class Closure:
    """Interface used by the assembly and Newton modules.

    ``evaluate(u)`` returns concentrations and their derivatives with shape
    ``(M,) + u.shape``; ``charge`` returns ``sum z c`` and its derivative;
    ``charge_integral`` returns ``int_0^u sum z c``.
    """

    bounded = True

    def __init__(self, bulk: BulkState):
        self.bulk = bulk
        self.saturated = 0

    def evaluate(self, u):
        raise NotImplementedError

    def charge_integral(self, u):
        raise NotImplementedError

    def charge(self, u):
        c, dc = self.evaluate(u)
        z = self.bulk.z.reshape((-1,) + (1,) * (c.ndim - 1))
        # the slope is <= 0 (Cauchy-Schwarz); at saturation its two terms cancel and
        # rounding can leave a tiny positive value
        return np.sum(z * c, axis=0), np.minimum(np.sum(z * dc, axis=0), 0.0)


class StericClosure(Closure):
    """Lattice-gas closure evaluated by solving for gamma at every query."""

    def __init__(self, bulk: BulkState, tol=TOL_GAMMA):
        super().__init__(bulk)
        self.tol = tol

    def state(self, u):
        u = np.asarray(u, dtype=float)
        t, _ = solve_log_gamma(u, self.bulk, tol=self.tol)
        gamma = np.exp(t)
        c = concentrations_from_log_gamma(t, u, self.bulk)
        dlng = log_gamma_prime(gamma, c, self.bulk)
        return t, gamma, c, dlng

    def evaluate(self, u):
        _, _, c, dlng = self.state(u)
        return c, _concentration_prime_log(dlng, c, self.bulk)

    def charge(self, u):
        """``sum z c`` and its slope, the slope as a sum of nonnegative terms.

        ``sum z dc = -(v0 gamma sum z^2 c + 1/2 sum_ij c_i c_j (z_i v_j - z_j v_i)^2) / D``
        with ``D = v0 gamma + sum v^2 c`` (Lagrange identity), so it is never positive.
        """
        _, gamma, c, _ = self.state(u)
        b = self.bulk
        shape = (-1,) + (1,) * (c.ndim - 1)
        z, v = b.z.reshape(shape), b.v.reshape(shape)
        cross = 0.0
        for i in range(b.M):
            for j in range(i + 1, b.M):
                cross = cross + c[i] * c[j] * (b.z[i] * b.v[j] - b.z[j] * b.v[i]) ** 2
        num = b.v0 * gamma * np.sum(z * z * c, axis=0) + cross
        return np.sum(z * c, axis=0), -num / (b.v0 * gamma + np.sum(v * v * c, axis=0))

    def charge_integral(self, u):
        t, gamma, c, _ = self.state(u)
        return steric_charge_integral(gamma, t, c, self.bulk)


class ClassicalClosure(Closure):
    """Boltzmann distributions ``c_l = c_l^inf exp(-z_l u)``; unbounded."""

    bounded = False

    def _exponent(self, u):
        u = np.asarray(u, dtype=float)
        z = self.bulk.z.reshape((-1,) + (1,) * u.ndim)
        arg = -z * u
        clipped = np.clip(arg, -EXP_CAP, EXP_CAP)
        self.saturated += int(np.count_nonzero(clipped != arg))
        return clipped

    def evaluate(self, u):
        shape = (-1,) + (1,) * np.ndim(u)
        c = self.bulk.c.reshape(shape) * np.exp(self._exponent(u))
        return c, -self.bulk.z.reshape(shape) * c

    def charge_integral(self, u):
        shape = (-1,) + (1,) * np.ndim(u)
        terms = self.bulk.c.reshape(shape) * (1.0 - np.exp(self._exponent(u)))
        return np.sum(terms, axis=0)


def classical_closure(u, bulk: BulkState):
    return ClassicalClosure(bulk).evaluate(u)


# ---------------------------------------------------------------------------
# Precomputed table

def _lagrange4(x):
    """Cubic Lagrange weights for nodes 0, 1, 2, 3 at local coordinate x."""
    xm1, xm2, xm3 = x - 1, x - 2, x - 3
    return (-xm1 * xm2 * xm3 / 6, x * xm2 * xm3 / 2, -x * xm1 * xm3 / 2, x * xm1 * xm2 / 6)


def _lagrange4_antideriv(x):
    x2 = x * x
    x3 = x2 * x
    x4 = x3 * x
    return (-(x4 / 4 - 2 * x3 + 5.5 * x2 - 6 * x) / 6,
            (x4 / 4 - 5 * x3 / 3 + 3 * x2) / 2,
            -(x4 / 4 - 4 * x3 / 3 + 1.5 * x2) / 2,
            (x4 / 4 - x3 + x2) / 6)


@dataclass
class StericTable:
    """``ln gamma`` and its derivative sampled on a uniform potential mesh.

    ``charge`` and ``charge_cumulative`` hold ``sum z c`` at the nodes and the
    running integral of its piecewise-cubic interpolant from ``p_0``.
    """

    bulk: BulkState
    psi_L: float
    psi_R: float
    n: int
    log_gamma: np.ndarray
    dlog_gamma: np.ndarray
    charge: np.ndarray
    charge_cumulative: np.ndarray
    saturated: int = 0

    @property
    def h(self) -> float:
        return (self.psi_R - self.psi_L) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.psi_L + np.arange(self.n + 1) * self.h

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma)

    @property
    def gamma_prime(self) -> np.ndarray:
        return self.gamma * self.dlog_gamma

    def stencil_deviation(self) -> float:
        """Max deviation between stored gamma' and a 5-point difference of gamma."""
        g = self.gamma
        fd = (-g[4:] + 8 * g[3:-1] - 8 * g[1:-3] + g[:-4]) / (12 * self.h)
        return float(np.max(np.abs(fd - self.gamma_prime[2:-2])))

    def _locate(self, u):
        u = np.asarray(u, dtype=float)
        outside = (u < self.psi_L) | (u > self.psi_R)
        self.saturated += int(np.count_nonzero(outside))
        uc = np.clip(u, self.psi_L, self.psi_R)
        q = (uc - self.psi_L) / self.h
        cell = np.clip(np.floor(q).astype(int), 0, self.n - 1)
        start = np.clip(cell - 1, 0, self.n - 3)
        x = q - start
        # exact node hits reproduce stored values bit for bit
        r = np.clip(np.rint(q).astype(int), 0, self.n)
        hit = self.nodes[r] == uc
        x = np.where(hit, r - start, x)
        return uc, cell, start, x

    def _interp(self, arr, start, x):
        w = _lagrange4(x)
        return sum(wk * arr[start + k] for k, wk in enumerate(w))

    def _integral(self, cell, start, x):
        a = _lagrange4_antideriv(x)
        a0 = _lagrange4_antideriv(cell - start)
        part = sum((ak - bk) * self.charge[start + k] for k, (ak, bk) in enumerate(zip(a, a0)))
        return self.charge_cumulative[cell] + self.h * part

    def concentrations(self, u):
        """Interpolated ``(c, dc/du)``; the fast path used inside Newton."""
        uc, _, start, x = self._locate(u)
        w = _lagrange4(x)
        lng = w[0] * self.log_gamma[start]
        dlng = w[0] * self.dlog_gamma[start]
        for k in (1, 2, 3):
            lng += w[k] * self.log_gamma[start + k]
            dlng += w[k] * self.dlog_gamma[start + k]
        c = concentrations_from_log_gamma(lng, uc, self.bulk)
        return c, _concentration_prime_log(dlng, c, self.bulk)

    def eval(self, u):
        """Interpolated ``(gamma, gamma', c, dc/du, int_{p_0}^u sum z c)``."""
        uc, cell, start, x = self._locate(u)
        lng = self._interp(self.log_gamma, start, x)
        dlng = self._interp(self.dlog_gamma, start, x)
        c = concentrations_from_log_gamma(lng, uc, self.bulk)
        dc = _concentration_prime_log(dlng, c, self.bulk)
        gamma = np.exp(lng)
        return gamma, gamma * dlng, c, dc, self._integral(cell, start, x)

    def save(self, path):
        np.savez(path, signature=self.bulk.signature(),
                 header=np.array([self.psi_L, self.psi_R, self.n], dtype=float),
                 log_gamma=self.log_gamma, dlog_gamma=self.dlog_gamma,
                 charge=self.charge, charge_cumulative=self.charge_cumulative)

    @classmethod
    def load(cls, path, bulk: BulkState) -> "StericTable":
        with np.load(path) as data:
            sig = data["signature"]
            if sig.shape != bulk.signature().shape or not np.allclose(sig, bulk.signature(), rtol=1e-12):
                raise ConfigError(f"table {path} was built for different bulk parameters")
            psi_L, psi_R, n = data["header"]
            return cls(bulk, float(psi_L), float(psi_R), int(n), data["log_gamma"],
                       data["dlog_gamma"], data["charge"], data["charge_cumulative"])


def _cell_integrals(g, h):
    """Integrals over each cell of the 4-point interpolant used by ``eval``."""
    n = g.size - 1
    out = np.empty(n)
    out[1:-1] = (-g[:-3] + 13 * g[1:-2] + 13 * g[2:-1] - g[3:]) / 24
    out[0] = (9 * g[0] + 19 * g[1] - 5 * g[2] + g[3]) / 24
    out[-1] = (g[-4] - 5 * g[-3] + 19 * g[-2] + 9 * g[-1]) / 24
    return h * out


def _scalar_log_gamma(u, z, s, la, t, lo, hi, tol, maxiter):
    """Scalar version of :func:`solve_log_gamma` used by the table sweep."""
    for _ in range(maxiter + 1):
        terms = [math.exp(la[j] + s[j] * t - z[j] * u) for j in range(len(z))]
        et = math.exp(t)
        f = et - 1.0 + math.fsum(terms)
        if abs(f) <= tol:
            return t
        if f > 0:
            hi = t
        else:
            lo = t
        fp = et + sum(s[j] * terms[j] for j in range(len(z)))
        tn = t - f / fp
        if not lo < tn < hi:
            tn = 0.5 * (lo + hi)
        if tn == t:
            if abs(f) <= 1e3 * tol:
                return t
            break
        t = tn
    raise NumericalFailure(f"gamma iteration failed at u = {u!r}", residual=f)


def build_table(bulk: BulkState, psi_L: float, psi_R: float, n_psi: int,
                tol=TOL_GAMMA, maxiter=MAXITER_GAMMA) -> StericTable:
    """Sweep the potential mesh left to right, continuing gamma from node to node."""
    if not psi_L < psi_R:
        raise InvalidArgument(f"need psi_L < psi_R, got [{psi_L}, {psi_R}]")
    if n_psi < 4:
        raise InvalidArgument("table needs at least 4 intervals")
    h = (psi_R - psi_L) / n_psi
    nodes = psi_L + np.arange(n_psi + 1) * h
    lo_all, hi_all = _log_gamma_bracket(nodes, bulk)
    z, s, la = bulk.z.tolist(), bulk.s.tolist(), bulk.log_a.tolist()
    lng = np.empty(n_psi + 1)
    t = float(hi_all[0])
    for i, p in enumerate(nodes.tolist()):
        lo, hi = float(lo_all[i]), float(hi_all[i])
        t = min(max(t, lo), hi)
        try:
            t = _scalar_log_gamma(p, z, s, la, t, lo, hi, tol, maxiter)
        except NumericalFailure as exc:
            raise NumericalFailure(f"table build failed at node p_{i} = {p!r}",
                                   node=i, potential=p, **exc.diagnostics)
        lng[i] = t
    c = concentrations_from_log_gamma(lng, nodes, bulk)
    gamma = np.exp(lng)
    dlng = log_gamma_prime(gamma, c, bulk)
    charge = np.sum(bulk.z[:, None] * c, axis=0)
    cumulative = np.concatenate([[0.0], np.cumsum(_cell_integrals(charge, h))])
    return StericTable(bulk, float(psi_L), float(psi_R), int(n_psi), lng, dlng, charge, cumulative)


def table_eval(table: StericTable, u):
    return table.eval(u)


class TableClosure(Closure):
    """Closure backed by a :class:`StericTable` (precompute-interpolation path)."""

    def __init__(self, table: StericTable):
        super().__init__(table.bulk)
        self.table = table
        # integral from p_0 to 0 so that charge_integral(0) == 0
        self._offset = float(table.eval(np.array([0.0]))[4][0]) \
            if table.psi_L <= 0 <= table.psi_R else None

    @property
    def saturated(self):
        return self.table.saturated

    @saturated.setter
    def saturated(self, value):
        pass

    def evaluate(self, u):
        return self.table.concentrations(u)

    def charge_integral(self, u):
        if self._offset is None:
            raise InvalidArgument("table interval must contain u = 0 to integrate from 0")
        return self.table.eval(u)[4] - self._offset


def table_interval(bulk: BulkState, u_min: float, u_max: float, pad: float = 2.0,
                   max_spacing: float = 0.05):
    """Padded interval and node count with spacing at most ``max_spacing``."""
    lo = min(u_min, 0.0) - pad
    hi = max(u_max, 0.0) + pad
    n = max(4, int(math.ceil((hi - lo) / max_spacing)))
    return lo, hi, n
