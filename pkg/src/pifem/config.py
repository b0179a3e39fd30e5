"""Run configuration files.

Configurations are TOML documents (flat keys grouped in sections).  Data
functions are referred to by name from :mod:`pifem.functions`; there is
no expression language.  See ``docs/formats.md`` for the schema.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass

from .assembly import ProblemSpec
from .errors import ConfigError
from .functions import DENSITY_NAMES, density_from_registry, space_time_registry
from .measure import TimeMeasure
from .mesh import InterfaceCurve

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

COMMANDS = ("mesh", "solve", "study")


@dataclass
class RunConfig:
    command: str = "study"
    bounds: tuple = (-1.0, 1.0, -1.0, 1.0)
    curve_kind: str = "circle"
    center: tuple = (0.0, 0.0)
    radii: tuple = (0.5,)
    beta1: float = 1.0
    beta2: float = 10.0
    T: float = 1.0
    f: str = "sin_bump"
    u0: str = "zero"
    dirichlet: str = "zero"
    atoms: tuple = ((0.5, 1.0),)
    density: str = "none"
    density_coeffs: tuple = ()
    kind: str = "ritz"
    levels: int = 4
    target_h: float = 0.25
    n_steps: int = 8
    time_refine: int = 4
    tol: float = 1e-10
    threads: int = 1
    out: str = "out"

    def curve(self):
        if self.curve_kind == "none":
            return None
        if self.curve_kind == "circle":
            return InterfaceCurve.circle(self.radii[0], self.center)
        return InterfaceCurve.ellipse(self.radii[0], self.radii[1], self.center)

    def sigma(self):
        return TimeMeasure(self.T, self.atoms, density_from_registry(self.density, self.density_coeffs))

    def problem(self) -> ProblemSpec:
        reg = space_time_registry(self.radii[0], self.beta1, self.beta2)
        f, u0, g = reg[self.f], reg[self.u0], reg[self.dirichlet]
        return ProblemSpec(
            self.beta1,
            self.beta2,
            self.T,
            self.sigma(),
            bounds=tuple(self.bounds),
            curve=self.curve(),
            u0=lambda x: u0(x, 0.0),
            f=f,
            dirichlet=g,
        )


_SCHEMA = {
    "geometry": {"bounds": list, "curve": str, "center": list, "radii": list},
    "problem": {
        "beta1": float,
        "beta2": float,
        "T": float,
        "f": str,
        "u0": str,
        "dirichlet": str,
        "sigma": dict,
    },
    "discretization": {"target_h": float, "levels": int, "n_steps": int, "time_refine": int},
    "solver": {"tol": float},
    "study": {"kind": str},
    "output": {"dir": str},
    "run": {"threads": int},
}
REQUIRED = (("problem", "beta1"), ("problem", "beta2"))


def _line_of(text, section, key):
    """Best-effort line number of ``key`` (or its section) for diagnostics."""
    current = None
    sec_line = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s.strip("[] ")
            if current == section:
                sec_line = i
        elif current == section and key and s.split("=", 1)[0].strip() == key:
            return i
    return sec_line


def _number(value, kind, where, line):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is float and isinstance(value, float):
        return value
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind in (str, list, dict) and isinstance(value, kind):
        return value
    raise ConfigError(f"field '{where}' must be of type {kind.__name__}, got {value!r}", where, line)


def parse_config(text: str, command="study") -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}", None, getattr(exc, "lineno", None)) from exc

    for section, body in doc.items():
        if section not in _SCHEMA or not isinstance(body, dict):
            raise ConfigError(f"unknown section '{section}'", section, _line_of(text, section, None))
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown field '{section}.{key}'", f"{section}.{key}", _line_of(text, section, key))
    for section, key in REQUIRED:
        if key not in doc.get(section, {}):
            raise ConfigError(f"missing field '{section}.{key}'", f"{section}.{key}", _line_of(text, section, None))

    cfg = RunConfig(command=command)

    def get(section, key):
        if key not in doc.get(section, {}):
            return None
        return _number(doc[section][key], _SCHEMA[section][key], f"{section}.{key}", _line_of(text, section, key))

    def check(cond, where, msg):
        if not cond:
            sec, _, key = where.partition(".")
            raise ConfigError(f"field '{where}' {msg}", where, _line_of(text, sec, key))

    if (b := get("geometry", "bounds")) is not None:
        check(len(b) == 4 and all(isinstance(v, (int, float)) for v in b), "geometry.bounds", "must be [xmin, xmax, ymin, ymax]")
        check(b[1] > b[0] and b[3] > b[2], "geometry.bounds", "must describe a non-empty rectangle")
        cfg.bounds = tuple(float(v) for v in b)
    if (c := get("geometry", "curve")) is not None:
        check(c in ("circle", "ellipse", "none"), "geometry.curve", "must be circle, ellipse or none")
        cfg.curve_kind = c
    if (c := get("geometry", "center")) is not None:
        check(len(c) == 2, "geometry.center", "must have two coordinates")
        cfg.center = tuple(float(v) for v in c)
    if (r := get("geometry", "radii")) is not None:
        need = 2 if cfg.curve_kind == "ellipse" else 1
        check(len(r) >= need and all(v > 0 for v in r), "geometry.radii", f"needs {need} positive value(s)")
        cfg.radii = tuple(float(v) for v in r)
    elif cfg.curve_kind == "ellipse":
        check(False, "geometry.radii", "needs 2 positive values for an ellipse")

    for key in ("beta1", "beta2", "T"):
        if (v := get("problem", key)) is not None:
            check(v > 0, f"problem.{key}", "must be positive")
            setattr(cfg, key, v)
    reg = space_time_registry()
    for key in ("f", "u0", "dirichlet"):
        if (v := get("problem", key)) is not None:
            check(v in reg, f"problem.{key}", f"names unknown function '{v}' (known: {', '.join(sorted(reg))})")
            setattr(cfg, key, v)
    if (s := get("problem", "sigma")) is not None:
        for k in s:
            check(k in ("atoms", "density", "coeffs"), "problem.sigma", f"has unknown entry '{k}'")
        atoms = s.get("atoms", [])
        check(
            isinstance(atoms, list) and all(isinstance(a, list) and len(a) == 2 for a in atoms),
            "problem.sigma",
            "atoms must be a list of [time, weight] pairs",
        )
        for t, _ in atoms:
            check(0.0 <= t <= cfg.T, "problem.sigma", f"atom time {t} outside [0, T]")
        cfg.atoms = tuple((float(t), float(w)) for t, w in atoms)
        dens = s.get("density", "none")
        check(dens in DENSITY_NAMES, "problem.sigma", f"density must be one of {', '.join(DENSITY_NAMES)}")
        cfg.density = dens
        cfg.density_coeffs = tuple(float(c) for c in s.get("coeffs", []))
        if dens == "polynomial":
            check(len(cfg.density_coeffs) > 0, "problem.sigma", "polynomial density needs coeffs")

    if (v := get("discretization", "target_h")) is not None:
        check(0 < v <= 1.0, "discretization.target_h", "must lie in (0, 1]")
        cfg.target_h = v
    if (v := get("discretization", "levels")) is not None:
        check(1 <= v <= 8, "discretization.levels", "must lie in [1, 8]")
        cfg.levels = v
    if (v := get("discretization", "n_steps")) is not None:
        check(v >= 1, "discretization.n_steps", "must be at least 1")
        cfg.n_steps = v
    if (v := get("discretization", "time_refine")) is not None:
        check(v >= 1, "discretization.time_refine", "must be at least 1")
        cfg.time_refine = v
    if (v := get("solver", "tol")) is not None:
        check(0 < v < 1, "solver.tol", "must lie in (0, 1)")
        cfg.tol = v
    if (v := get("study", "kind")) is not None:
        cfg.kind = v
    if (v := get("output", "dir")) is not None:
        cfg.out = v
    if (v := get("run", "threads")) is not None:
        check(v >= 1, "run.threads", "must be at least 1")
        cfg.threads = v
    return cfg


def load_config(path, command="study") -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, None) from exc
    return parse_config(text, command)


DEFAULT_CONFIG = """\
# pifem run configuration (TOML)
[geometry]
bounds = [-1.0, 1.0, -1.0, 1.0]
curve = "circle"
center = [0.0, 0.0]
radii = [0.5]

[problem]
beta1 = 1.0
beta2 = 10.0
T = 1.0
f = "sin_bump"
u0 = "zero"
dirichlet = "zero"
sigma = {atoms = [[0.5, 1.0]], density = "none"}

[discretization]
target_h = 0.25
levels = 4
n_steps = 8
time_refine = 4

[solver]
tol = 1e-10

[output]
dir = "out"
"""
