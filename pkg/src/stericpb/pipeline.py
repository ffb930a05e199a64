"""End-to-end runs: ingest, dielectric, table, bounds, Newton solve, report."""
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import AssembledSystem, assemble_system, mms_source
from .closure import (ClassicalClosure, StericClosure, StericTable, TableClosure, build_table,
                      table_interval)
from .config import RunConfig
from .dielectric import (DielectricModel, build_dielectric, load_levelset, sphere_levelset,
                         sphere_union_levelset)
from .errors import ConfigError
from .linsolve import solve_spd
from .mesh import GridFunction, UniformGrid3, grid_for_spacing
from .newton import Bounds, NewtonState, compute_bounds, newton_solve
from .postproc import (SolveReport, concentration_fields, convergence_report,
                       export_csv_profile, export_vtk, reaction_field_energy, surface_mask)
from .solute import Atom, PhysicalConstants, eval_psi_f, eval_yukawa_boundary, parse_pqr

log = logging.getLogger(__name__)

# refuse tables larger than this many nodes (set psi_min/psi_max instead)
MAX_TABLE_NODES = 2_000_000


@dataclass
class Problem:
    """Everything needed to run Newton on one grid."""

    grid: UniformGrid3
    atoms: list
    levelset: GridFunction
    dielectric: DielectricModel
    system: AssembledSystem
    uf: np.ndarray
    exact: Optional[np.ndarray] = None


@dataclass
class SolveResult:
    report: SolveReport
    problem: Problem
    state: NewtonState
    bounds: Optional[Bounds]
    closure: object
    reaction: GridFunction
    potential: GridFunction
    concentrations: list
    timings: dict = field(default_factory=dict)


def load_atoms(cfg: RunConfig):
    if cfg.geometry == "sphere":
        return [Atom(cfg.center, cfg.charge, cfg.radius)]
    return list(parse_pqr(cfg.pqr).atoms)


def build_levelset(cfg: RunConfig, grid: UniformGrid3, atoms) -> GridFunction:
    if cfg.geometry == "sphere":
        return sphere_levelset(grid, cfg.radius, cfg.center)
    if cfg.geometry == "pqr":
        return sphere_union_levelset(atoms, grid)
    return load_levelset(cfg.levelset, grid, cfg.levelset_field)


def build_problem(cfg: RunConfig, grid: UniformGrid3 = None, mms_closure=None) -> Problem:
    """Assemble the discrete system; ``mms_closure`` builds the manufactured source."""
    grid = grid or cfg.grid
    constants = PhysicalConstants(cfg.temperature)
    atoms = load_atoms(cfg)
    for a in atoms:
        if np.any(np.abs(a.position) >= grid.L):
            raise ConfigError(f"atom at {a.position} lies outside the box [-{grid.L}, {grid.L}]^3")
    levelset = build_levelset(cfg, grid, atoms)
    diel = build_dielectric(levelset, cfg.eps_m, cfg.eps_w, cfg.tau)
    points = grid.points()
    uf = eval_psi_f(atoms, constants, points, cfg.eps_m)
    extra = None
    exact = None
    if cfg.mms:
        if cfg.geometry != "sphere":
            raise ConfigError("the manufactured solution needs the analytic sphere geometry")
        mp = mms_source(grid, diel, constants, mms_closure, cfg.radius, cfg.charge,
                        cfg.center, cfg.mms_amplitude, cfg.mms_length)
        boundary, extra, exact = mp.exact, mp.source, mp.exact
    else:
        boundary = grid.zeros()
        mask = grid.boundary_mask()
        bulk = cfg.bulk()
        yuk = eval_yukawa_boundary(atoms, constants, points[mask], cfg.eps_w, bulk.z, bulk.c)
        boundary[mask] = yuk - uf[mask]
    system = assemble_system(grid, diel, uf, boundary, constants, extra)
    return Problem(grid, atoms, levelset, diel, system, uf, exact)


def _table_for(cfg: RunConfig, bulk, spans):
    """Build one table covering every ``(u_min, u_max)`` in ``spans``."""
    if cfg.psi_min is not None:
        lo, hi = cfg.psi_min, cfg.psi_max
        n = cfg.n_psi or table_interval(bulk, lo, hi, pad=0.0)[2]
    else:
        lo, hi, n = table_interval(bulk, min(s[0] for s in spans), max(s[1] for s in spans))
        if cfg.n_psi:
            n = cfg.n_psi
    if n > MAX_TABLE_NODES:
        raise ConfigError(f"table over [{lo:.4g}, {hi:.4g}] would need {n} nodes; "
                          "set [table] psi_min/psi_max or disable the table")
    return build_table(bulk, lo, hi, n)


def _potential_span(system: AssembledSystem, bounds: Bounds):
    s = system.solvent
    if not s.size:
        return 0.0, 0.0
    uf = system.uf[s]
    return float(np.min(uf + bounds.lower[s])), float(np.max(uf + bounds.upper[s]))


def make_closure(cfg: RunConfig, spans=None, table: StericTable = None):
    bulk = cfg.bulk()
    if cfg.mode == "classical":
        return ClassicalClosure(bulk)
    if not cfg.table_enabled:
        return StericClosure(bulk)
    if table is None:
        table = _table_for(cfg, bulk, spans or [(0.0, 0.0)])
    return TableClosure(table)


def linear_guess(system: AssembledSystem, config) -> np.ndarray:
    """Reaction potential without mobile ions."""
    psi, _ = solve_spd(system.matrix, system.b, config, n=system.grid.n)
    return psi


def _solve(cfg: RunConfig, problem: Problem, closure, bounds, track_energy=False):
    psi0 = None
    search = "residual"
    if cfg.mode == "classical":
        # from zero the unbounded Boltzmann factors overflow next to the charges, and
        # max-norm backtracking stalls on them; the convex energy still decreases
        psi0 = linear_guess(problem.system, cfg.linear)
        search = "energy"
    return newton_solve(problem.system, closure, bounds, cfg.tol, psi0=psi0, config=cfg.linear,
                        max_steps=cfg.step_limit, track_energy=track_energy, line_search=search)


def _report(cfg: RunConfig, problem: Problem, state: NewtonState, closure):
    grid = problem.grid
    system = problem.system
    psi_full = system.full_field(state.psi)
    reaction = GridFunction(grid, psi_full, "potential", "reaction_potential")
    total = GridFunction(grid, problem.uf + psi_full, "potential", "potential")
    chi = problem.dielectric.chi
    conc = concentration_fields(total, closure, chi > 0)
    solvent = chi >= 0.5
    if solvent.any():
        pmin, pmax = float(total.values[solvent].min()), float(total.values[solvent].max())
    else:
        pmin = pmax = 0.0
    surf = surface_mask(problem.levelset, chi, cfg.tau)
    extra = {}
    if surf.any():
        extra["surface_potential_min"] = f"{float(total.values[surf].min()):.10g}"
        extra["surface_potential_max"] = f"{float(total.values[surf].max()):.10g}"
    report = SolveReport(
        energy=reaction_field_energy(problem.atoms, reaction),
        potential_min=pmin, potential_max=pmax,
        max_concentration={f.name: float(f.values.max()) for f in conc},
        newton_steps=state.steps, residual=state.residual_norm,
        residual_history=list(state.history), saturated=int(closure.saturated),
        closure=cfg.mode if cfg.mode == "classical" else
        ("steric (table)" if isinstance(closure, TableClosure) else "steric (direct)"),
        extra=extra)
    return report, reaction, total, conc


def run_solve(cfg: RunConfig, track_energy: bool = False) -> SolveResult:
    """Solve one configuration and write the requested artifacts."""
    timings = {}
    t0 = time.perf_counter()
    bulk = cfg.bulk() if cfg.mode == "steric" else None
    mms_closure = StericClosure(cfg.bulk()) if cfg.mms else None
    problem = build_problem(cfg, mms_closure=mms_closure)
    timings["setup"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    bounds = None
    spans = None
    if cfg.mode == "steric":
        bounds = compute_bounds(problem.system, StericClosure(bulk), cfg.linear)
        spans = [_potential_span(problem.system, bounds)]
    t2 = time.perf_counter()
    closure = make_closure(cfg, spans)
    t3 = time.perf_counter()
    state = _solve(cfg, problem, closure, bounds, track_energy)
    t4 = time.perf_counter()
    timings.update(bounds=t2 - t1, table=t3 - t2, newton=t4 - t3, solve=t4 - t1)

    report, reaction, total, conc = _report(cfg, problem, state, closure)
    report.extra["solve_seconds"] = f"{timings['solve']:.3f}"
    if problem.exact is not None:
        err = np.max(np.abs(state.psi - problem.grid.interior(problem.exact)))
        report.extra["mms_relative_error"] = f"{err / cfg.mms_amplitude:.6e}"
    result = SolveResult(report, problem, state, bounds, closure, reaction, total, conc, timings)
    write_artifacts(cfg, result)
    return result


def write_artifacts(cfg: RunConfig, result: SolveResult):
    fields = []
    if "potential" in cfg.fields:
        fields += [result.potential, result.reaction]
    if "concentrations" in cfg.fields:
        fields += result.concentrations
    if "levelset" in cfg.fields:
        fields.append(result.problem.levelset)
    try:
        if cfg.report is not None:
            result.report.write(cfg.report)
        if cfg.vtk is not None and fields:
            export_vtk(fields, cfg.vtk)
        profile_fields = [result.potential] + result.concentrations
        if cfg.profile_csv is not None:
            if cfg.profile_start is None or cfg.profile_end is None:
                raise ConfigError("profile_csv needs profile_start and profile_end")
            export_csv_profile(profile_fields, cfg.profile_csv, start=cfg.profile_start,
                               end=cfg.profile_end, samples=cfg.profile_samples)
        if cfg.iso_csv is not None:
            if cfg.iso_level is None:
                raise ConfigError("iso_csv needs iso_level")
            export_csv_profile(profile_fields, cfg.iso_csv, levelset=result.problem.levelset,
                               level=cfg.iso_level)
    except OSError as exc:
        raise OSError(f"cannot write output: {exc}") from exc


@dataclass
class MMSLevel:
    h: float
    error: float
    order: Optional[float]
    steps: int
    seconds: float
    history: list


def run_mms(cfg: RunConfig, spacings=None, track_energy: bool = False):
    """Manufactured-solution study over grid levels, sharing one table."""
    spacings = list(spacings or cfg.mms_spacings)
    cfg = cfg.with_overrides(mms=True, geometry="sphere")
    bulk = cfg.bulk()
    direct = StericClosure(bulk)
    problems, all_bounds = [], []
    for h in spacings:
        grid = grid_for_spacing(cfg.L, h)
        p = build_problem(cfg, grid, mms_closure=direct)
        problems.append(p)
        all_bounds.append(compute_bounds(p.system, direct, cfg.linear)
                          if cfg.mode == "steric" else None)
    if cfg.mode == "steric":
        closure = make_closure(cfg, [_potential_span(p.system, b)
                                     for p, b in zip(problems, all_bounds)])
    else:
        closure = make_closure(cfg)
    levels = []
    states = []
    for h, p, b in zip(spacings, problems, all_bounds):
        t = time.perf_counter()
        st = _solve(cfg, p, closure, b, track_energy)
        dt = time.perf_counter() - t
        err = float(np.max(np.abs(st.psi - p.grid.interior(p.exact)))) / cfg.mms_amplitude
        levels.append((h, err, st, dt))
        states.append(st)
    orders = convergence_report([(h, e) for h, e, _, _ in levels]) if len(levels) > 1 else [None]
    rows = [MMSLevel(h, e, o, st.steps, dt, list(st.history))
            for (h, e, st, dt), o in zip(levels, orders)]
    return rows, states, problems, all_bounds


def format_mms(rows) -> str:
    lines = ["h        error        order   steps  seconds"]
    for r in rows:
        order = "--" if r.order is None else f"{r.order:.2f}"
        lines.append(f"{r.h:<8g} {r.error:<12.4e} {order:<7} {r.steps:<6d} {r.seconds:.2f}")
    return "\n".join(lines) + "\n"


def run_table_dump(cfg: RunConfig, path) -> StericTable:
    """Build the closure table for ``cfg`` and save it to ``path`` (npz)."""
    if cfg.mode != "steric":
        raise ConfigError("the closure table exists only for the steric mode")
    bulk = cfg.bulk()
    if cfg.psi_min is not None:
        spans = [(cfg.psi_min, cfg.psi_max)]
    else:
        p = build_problem(cfg, mms_closure=StericClosure(bulk) if cfg.mms else None)
        spans = [_potential_span(p.system, compute_bounds(p.system, StericClosure(bulk),
                                                          cfg.linear))]
    table = _table_for(cfg, bulk, spans)
    table.save(path)
    return table


def run_bounds(cfg: RunConfig) -> dict:
    """Extremes of the truncation bounds for ``cfg``."""
    if cfg.mode != "steric":
        raise ConfigError("truncation bounds exist only for the steric mode")
    bulk = cfg.bulk()
    p = build_problem(cfg, mms_closure=StericClosure(bulk) if cfg.mms else None)
    b = compute_bounds(p.system, StericClosure(bulk), cfg.linear)
    lo, hi = _potential_span(p.system, b)
    return {
        "upper_min": float(b.upper.min()), "upper_max": float(b.upper.max()),
        "lower_min": float(b.lower.min()), "lower_max": float(b.lower.max()),
        "total_potential_min": lo, "total_potential_max": hi,
    }
