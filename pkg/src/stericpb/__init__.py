"""Finite-difference solver for the lattice-gas steric Poisson-Boltzmann equation.

Public names are imported lazily so that ``stericpb.cli`` can configure
thread counts before numpy is loaded.
"""
import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "closure": ("BulkState", "ClassicalClosure", "IonSpecies", "StericClosure", "StericTable",
                "TableClosure", "build_table", "packing_gap", "solve_gamma"),
    "config": ("RunConfig", "load_config", "parse_config"),
    "errors": ("ConfigError", "InvalidArgument", "NumericalFailure", "PQRParseError",
               "StericPBError", "UnsupportedConfiguration"),
    "mesh": ("GridFunction", "UniformGrid3", "build_grid", "grid_for_spacing"),
    "newton": ("compute_bounds", "newton_solve"),
    "pipeline": ("run_bounds", "run_mms", "run_solve", "run_table_dump"),
    "solute": ("Atom", "PhysicalConstants", "parse_pqr"),
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}
__all__ = sorted(_WHERE)


def __getattr__(name):
    if name in _WHERE:
        return getattr(importlib.import_module(f".{_WHERE[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
