"""Command-line entry point: ``stericpb {solve,mms,table,bounds,info}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""
import argparse
import logging
import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _global_flags(suppress=False):
    # flags accepted before or after the verb; the copy attached to the verbs must
    # not overwrite values already parsed at the top level
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--config", metavar="PATH", help="run configuration (INI)", **kw)
    flags.add_argument("--threads", type=int, metavar="N", help="worker threads for BLAS", **kw)
    flags.add_argument("--tol", type=float, metavar="X", help="Newton tolerance (max norm)", **kw)
    flags.add_argument("--classical", action="store_true", help="classical PB closure", **kw)
    flags.add_argument("--no-table", action="store_true",
                       help="evaluate the steric closure directly (no precomputed table)", **kw)
    flags.add_argument("-v", "--verbose", action="store_true", help="log every Newton step",
                       **kw)
    return flags


def _parser():
    common = _global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="stericpb", description=__doc__.splitlines()[0],
                                parents=[_global_flags()])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("solve", parents=[common], help="solve one configuration")
    mms = sub.add_parser("mms", parents=[common], help="manufactured-solution convergence study")
    mms.add_argument("--spacings", type=float, nargs="+", metavar="H",
                     help="grid spacings (default from the config)")
    tab = sub.add_parser("table", parents=[common], help="build and save the closure table")
    tab.add_argument("--output", metavar="PATH", help="npz file (default [output] table)")
    sub.add_parser("bounds", parents=[common], help="print truncation bound extremes")
    sub.add_parser("info", parents=[common], help="print derived configuration data")
    return p


def _load(args):
    from .config import RunConfig, load_config

    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.classical:
        changes["mode"] = "classical"
    if args.no_table:
        changes["table_enabled"] = False
    return cfg.with_overrides(**changes) if changes else cfg


def _info(cfg):
    import numpy as np
    import scipy

    from . import __version__
    from .solute import MOLAR, PhysicalConstants, debye_kappa

    g = cfg.grid
    lines = [f"stericpb {__version__} (numpy {np.__version__}, scipy {scipy.__version__})",
             f"grid: L={g.L:g} N_h={g.n} h={g.h:g} unknowns={g.num_unknowns}",
             f"closure: {cfg.mode}" + ("" if cfg.table_enabled or cfg.mode != "steric"
                                       else " (direct)")]
    const = PhysicalConstants(cfg.temperature)
    lines.append(f"bjerrum_length_vacuum_A: {const.coupling:.6f}")
    z = [sp.valence for sp in cfg.species]
    c = [sp.concentration * MOLAR for sp in cfg.species]
    kappa = debye_kappa(const, z, c, cfg.eps_w)
    lines.append(f"debye_length_A: {1 / kappa:.6f}")
    for sp in cfg.species:
        lines.append(f"species {sp.name}: z={sp.valence:+d} v={sp.volume:.6g} A^3 "
                     f"c={sp.concentration:g} M  1/v={1 / (sp.volume * MOLAR):.6g} M")
    if cfg.mode == "steric":
        lines.append(f"gamma_inf: {cfg.bulk().gamma_inf:.10f}")
    return "\n".join(lines)


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")

    from .errors import StericPBError

    try:
        cfg = _load(args)
        if args.verb == "info":
            print(_info(cfg))
        elif args.verb == "solve":
            from .pipeline import run_solve

            result = run_solve(cfg)
            print(result.report.as_text(), end="")
        elif args.verb == "mms":
            from .pipeline import format_mms, run_mms

            rows = run_mms(cfg, args.spacings)[0]
            print(format_mms(rows), end="")
        elif args.verb == "table":
            from .pipeline import run_table_dump

            path = args.output or cfg.table_path or "table.npz"
            table = run_table_dump(cfg, path)
            print(f"table: [{table.psi_L:.6g}, {table.psi_R:.6g}] with {table.n} intervals "
                  f"-> {path}")
            print(f"stencil_deviation: {table.stencil_deviation():.3e}")
        elif args.verb == "bounds":
            from .pipeline import run_bounds

            for key, value in run_bounds(cfg).items():
                print(f"{key}: {value:.10g}")
    except StericPBError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
