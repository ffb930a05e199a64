"""Run configuration parsed from an INI-style document.

Sections and keys (units in brackets; defaults after ``=``)::

    [grid]      L [A] = 10, N_h = 49 (or h [A])
    [physics]   temperature [K] = 298.15, eps_m = 1, eps_w = 78, tau [A] = 1.5
    [solvent]   volume [A^3, or "a^3"] = 2.75^3
    [species NAME]  valence, volume [A^3 or "a^3"], concentration [M]
    [closure]   mode = steric | classical
    [table]     enabled = yes, n_psi (auto), psi_min, psi_max (auto)
    [solver]    tol = 1e-6, max_steps = 50 (200 classical), linear_method = mg, linear_rtol = 1e-10,
                linear_maxiter = 500
    [geometry]  kind = sphere | pqr | levelset; radius [A] = 5, charge [e] = -5,
                center = 0 0 0; pqr = PATH; levelset = PATH; levelset_field
    [output]    report, vtk, fields = potential concentrations, profile_start,
                profile_end, profile_samples = 101, profile_csv, iso_level,
                iso_csv, table
    [mms]       enabled = no, amplitude = 1000, length (defaults to L),
                spacings = 0.4 0.2

Without any ``[species ...]`` section the binary 0.1 M monovalent
electrolyte with volumes 2.76^3 and 3.62^3 A^3 is used.
"""
import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

from .closure import BulkState, IonSpecies
from .errors import ConfigError
from .linsolve import METHODS, LinearSolveConfig
from .mesh import UniformGrid3, build_grid, grid_for_spacing
from .solute import MOLAR

KNOWN = {
    "grid": {"L", "N_h", "h"},
    "physics": {"temperature", "eps_m", "eps_w", "tau"},
    "solvent": {"volume"},
    "species": {"valence", "volume", "concentration"},
    "closure": {"mode"},
    "table": {"enabled", "n_psi", "psi_min", "psi_max"},
    "solver": {"tol", "max_steps", "linear_method", "linear_rtol", "linear_maxiter"},
    "geometry": {"kind", "radius", "charge", "center", "pqr", "levelset", "levelset_field"},
    "output": {"report", "vtk", "fields", "profile_start", "profile_end", "profile_samples",
               "profile_csv", "iso_level", "iso_csv", "table"},
    "mms": {"enabled", "amplitude", "length", "spacings"},
}
MODES = ("steric", "classical")
GEOMETRIES = ("sphere", "pqr", "levelset")


@dataclass(frozen=True)
class SpeciesConfig:
    name: str
    valence: int
    volume: float          # A^3
    concentration: float   # M


DEFAULT_SPECIES = (
    SpeciesConfig("cation", 1, 2.76 ** 3, 0.1),
    SpeciesConfig("anion", -1, 3.62 ** 3, 0.1),
)


@dataclass
class RunConfig:
    L: float = 10.0
    n: int = 49
    temperature: float = 298.15
    eps_m: float = 1.0
    eps_w: float = 78.0
    tau: float = 1.5
    solvent_volume: float = 2.75 ** 3
    species: Tuple[SpeciesConfig, ...] = DEFAULT_SPECIES
    mode: str = "steric"
    table_enabled: bool = True
    n_psi: Optional[int] = None
    psi_min: Optional[float] = None
    psi_max: Optional[float] = None
    tol: float = 1e-6
    max_steps: Optional[int] = None   # 50 steric, 200 classical
    linear: LinearSolveConfig = field(default_factory=LinearSolveConfig)
    geometry: str = "sphere"
    radius: float = 5.0
    charge: float = -5.0
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    pqr: Optional[Path] = None
    levelset: Optional[Path] = None
    levelset_field: Optional[str] = None
    report: Optional[Path] = None
    vtk: Optional[Path] = None
    fields: Tuple[str, ...] = ("potential", "concentrations")
    profile_start: Optional[Tuple[float, float, float]] = None
    profile_end: Optional[Tuple[float, float, float]] = None
    profile_samples: int = 101
    profile_csv: Optional[Path] = None
    iso_level: Optional[float] = None
    iso_csv: Optional[Path] = None
    table_path: Optional[Path] = None
    mms: bool = False
    mms_amplitude: float = 1000.0
    mms_length: Optional[float] = None
    mms_spacings: Tuple[float, ...] = (0.4, 0.2)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"closure mode must be one of {MODES}, got {self.mode!r}")
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"geometry kind must be one of {GEOMETRIES}, got {self.geometry!r}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not (self.eps_m > 0 and self.eps_w > 0):
            raise ConfigError("dielectric constants must be positive")
        for sp in self.species:
            if not sp.volume > 0:
                raise ConfigError(f"species {sp.name!r}: volume must be positive")
            if not sp.concentration > 0:
                raise ConfigError(f"species {sp.name!r}: concentration must be positive")
        if not self.solvent_volume > 0:
            raise ConfigError("solvent volume must be positive")
        if self.geometry == "pqr" and self.pqr is None:
            raise ConfigError("geometry kind 'pqr' needs a pqr path")
        if self.geometry == "levelset" and (self.levelset is None or self.pqr is None):
            raise ConfigError("geometry kind 'levelset' needs both levelset and pqr paths")
        if self.n_psi is not None and self.n_psi < 4:
            raise ConfigError("n_psi must be >= 4")
        if (self.psi_min is None) != (self.psi_max is None):
            raise ConfigError("give both psi_min and psi_max or neither")
        if self.psi_min is not None and not self.psi_min < 0 < self.psi_max:
            raise ConfigError("table interval must contain 0")
        gamma_inf = 1.0 - sum(sp.volume * sp.concentration * MOLAR for sp in self.species)
        if self.mode == "steric" and not 0 < gamma_inf < 1:
            raise ConfigError(
                f"bulk solvent volume fraction gamma_inf = {gamma_inf:.6g} is not in (0, 1)")

    @property
    def step_limit(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return 200 if self.mode == "classical" else 50

    @property
    def grid(self) -> UniformGrid3:
        return build_grid(self.L, self.n)

    def bulk(self) -> BulkState:
        ions = [IonSpecies(sp.valence, sp.volume, sp.concentration * MOLAR, sp.name)
                for sp in self.species]
        return BulkState(ions, self.solvent_volume)

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def parse_volume(text: str) -> float:
    """``"2.75^3"`` (side length cubed) or a plain number in A^3."""
    text = text.strip()
    try:
        if "^" in text:
            base, exp = text.split("^", 1)
            if exp.strip() != "3":
                raise ConfigError(f"volume shorthand must be 'a^3', got {text!r}")
            return float(base) ** 3
        return float(text)
    except ValueError:
        raise ConfigError(f"bad volume {text!r}")


def _float(sec, key, value):
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected a number, got {value!r}")
    if not math.isfinite(out):
        raise ConfigError(f"[{sec}] {key}: value must be finite")
    return out


def _int(sec, key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected an integer, got {value!r}")


def _bool(sec, key, value):
    v = value.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"[{sec}] {key}: expected yes/no, got {value!r}")


def _vec3(sec, key, value):
    parts = value.replace(",", " ").split()
    if len(parts) != 3:
        raise ConfigError(f"[{sec}] {key}: expected three numbers, got {value!r}")
    return tuple(_float(sec, key, p) for p in parts)


def parse_config(text: str, base_dir=None) -> RunConfig:
    """Parse and validate a configuration document; relative paths use ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}")
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    kw = {}
    species = []

    def path(v):
        p = Path(v.strip())
        return p if p.is_absolute() else base / p

    for sec in cp.sections():
        kind = "species" if sec.split()[0] == "species" else sec
        if kind not in KNOWN:
            raise ConfigError(f"unknown section [{sec}]")
        items = dict(cp.items(sec))
        for key in items:
            if key not in KNOWN[kind]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
        if kind == "species":
            parts = sec.split(None, 1)
            name = parts[1].strip() if len(parts) > 1 else f"ion{len(species) + 1}"
            missing = {"valence", "volume", "concentration"} - set(items)
            if missing:
                raise ConfigError(f"[{sec}] missing {sorted(missing)}")
            species.append(SpeciesConfig(name, _int(sec, "valence", items["valence"]),
                                         parse_volume(items["volume"]),
                                         _float(sec, "concentration", items["concentration"])))
            continue
        for key, v in items.items():
            if sec == "grid":
                if key == "L":
                    kw["L"] = _float(sec, key, v)
                elif key == "N_h":
                    kw["n"] = _int(sec, key, v)
                else:
                    kw["h"] = _float(sec, key, v)
            elif sec == "physics":
                kw[key] = _float(sec, key, v)
            elif sec == "solvent":
                kw["solvent_volume"] = parse_volume(v)
            elif sec == "closure":
                kw["mode"] = v.strip()
            elif sec == "table":
                if key == "enabled":
                    kw["table_enabled"] = _bool(sec, key, v)
                elif key == "n_psi":
                    kw["n_psi"] = _int(sec, key, v)
                else:
                    kw[key] = _float(sec, key, v)
            elif sec == "solver":
                if key == "tol":
                    kw["tol"] = _float(sec, key, v)
                elif key == "max_steps":
                    kw["max_steps"] = _int(sec, key, v)
                elif key == "linear_method":
                    if v.strip() not in METHODS:
                        raise ConfigError(f"[solver] linear_method must be one of {METHODS}")
                    kw["linear_method"] = v.strip()
                elif key == "linear_rtol":
                    kw["linear_rtol"] = _float(sec, key, v)
                else:
                    kw["linear_maxiter"] = _int(sec, key, v)
            elif sec == "geometry":
                if key == "kind":
                    kw["geometry"] = v.strip()
                elif key in ("radius", "charge"):
                    kw[key] = _float(sec, key, v)
                elif key == "center":
                    kw["center"] = _vec3(sec, key, v)
                elif key == "levelset_field":
                    kw[key] = v.strip()
                else:
                    kw[key] = path(v)
            elif sec == "output":
                if key == "fields":
                    kw["fields"] = tuple(v.replace(",", " ").split())
                elif key in ("profile_start", "profile_end"):
                    kw[key] = _vec3(sec, key, v)
                elif key == "profile_samples":
                    kw[key] = _int(sec, key, v)
                elif key == "iso_level":
                    kw[key] = _float(sec, key, v)
                elif key == "table":
                    kw["table_path"] = path(v)
                else:
                    kw[key] = path(v)
            elif sec == "mms":
                if key == "enabled":
                    kw["mms"] = _bool(sec, key, v)
                elif key == "spacings":
                    kw["mms_spacings"] = tuple(_float(sec, key, p)
                                               for p in v.replace(",", " ").split())
                else:
                    kw[f"mms_{key}"] = _float(sec, key, v)

    if species:
        kw["species"] = tuple(species)
    L = kw.get("L", 10.0)
    if "h" in kw:
        if "n" in kw:
            raise ConfigError("[grid] give N_h or h, not both")
        try:
            kw["n"] = grid_for_spacing(L, kw.pop("h")).n
        except ValueError as exc:
            raise ConfigError(f"[grid] {exc}")
    lin = {k: kw.pop(k) for k in ("linear_method", "linear_rtol", "linear_maxiter") if k in kw}
    try:
        kw["linear"] = LinearSolveConfig(lin.get("linear_method", "mg"),
                                         lin.get("linear_rtol", 1e-10),
                                         lin.get("linear_maxiter", 500))
        cfg = RunConfig(**kw)
        cfg.grid
    except ValueError as exc:
        raise ConfigError(str(exc))
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)
