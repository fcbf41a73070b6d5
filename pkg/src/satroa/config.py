"""INI run configuration: parsing, validation and line-numbered error reporting."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import DesignError, parse_poles
from .spectral import GRID_POINTS, TRUNCATION, ModeShape, OperatorSpec, SpectrumError, read_sampled_csv, uniform_grid

FORMATS = ("csv", "svg", "json")


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = "" if path is None else (f"{path}:{line}: " if line else f"{path}: ")
        super().__init__(where + message)
        self.line = line


@dataclass
class BoundaryConfig:
    A_d: np.ndarray
    B_d: np.ndarray
    C_d: np.ndarray
    poles: list | None = None
    gain: np.ndarray | None = None
    modes: int | None = None
    initial: np.ndarray | None = None


@dataclass
class DynamicConfig:
    A1: np.ndarray
    A2: np.ndarray | None = None
    K2: np.ndarray | None = None


@dataclass
class RunConfig:
    path: Path
    spec: OperatorSpec
    truncation: int = TRUNCATION
    spectrum: str = "auto"
    decay_target: float = 0.0
    poles: list | None = None
    gain: np.ndarray | None = None
    margin: float | None = None
    budget: int | None = None
    objective: str | None = None
    T: float = 10.0
    dt: float | None = None
    resolution: int = 31
    bounds: tuple | None = None
    initial: np.ndarray | None = None
    mode: str = "modal"
    threads: int = 1
    formats: tuple[str, ...] = FORMATS
    dynamic: DynamicConfig | None = None
    boundary: BoundaryConfig | None = None
    lines: dict = field(default_factory=dict)


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` to the 1-based line where the key is set."""
    idx = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            idx[(section, m.group(1).strip().lower())] = i
    return idx


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, lines: dict, path: Path):
        self.cp, self.lines, self.path = cp, lines, path

    def fail(self, section, key, message):
        raise ConfigError(f"[{section}] {key}: {message}", str(self.path), self.lines.get((section, key.lower())))

    def raw(self, section, key, default=None):
        if not self.cp.has_section(section) or not self.cp.has_option(section, key):
            return default
        v = self.cp.get(section, key).strip()
        return v if v != "" else default

    def require(self, section, key):
        v = self.raw(section, key)
        if v is None:
            raise ConfigError(f"missing required key [{section}] {key}", str(self.path))
        return v

    def number(self, section, key, default=None, kind=float):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return kind(v)
        except ValueError:
            self.fail(section, key, f"expected a number, got {v!r}")

    def vector(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return np.array([float(t) for t in v.replace(";", ",").split(",") if t.strip()])
        except ValueError:
            self.fail(section, key, f"expected comma-separated numbers, got {v!r}")

    def matrix(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            rows = [[float(t) for t in r.split(",") if t.strip()] for r in v.split(";") if r.strip()]
        except ValueError:
            self.fail(section, key, f"expected rows of numbers separated by ';', got {v!r}")
        if not rows or len({len(r) for r in rows}) != 1:
            self.fail(section, key, "matrix rows must have equal length")
        return np.array(rows)

    def poles(self, section, key):
        v = self.raw(section, key)
        if v is None:
            return None
        try:
            return list(parse_poles([complex(t.strip().replace(" ", "")) for t in v.split(",") if t.strip()]))
        except (ValueError, DesignError) as exc:
            self.fail(section, key, str(exc))


def _sampled(reader: _Reader, section: str, key: str, value: str):
    target = (reader.path.parent / value[4:].strip()).resolve()
    if not target.exists():
        reader.fail(section, key, f"file not found: {target}")
    try:
        return read_sampled_csv(target)
    except SpectrumError as exc:
        reader.fail(section, key, str(exc))


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], str(path), getattr(exc, "lineno", None)) from exc
    lines = _line_index(text)
    r = _Reader(cp, lines, path)
    known = {"problem", "design", "solver", "sim", "dynamic", "boundary", "output"}
    for s in cp.sections():
        if s.lower() not in known:
            raise ConfigError(f"unknown section [{s}]", str(path), next(
                (i for i, ln in enumerate(text.splitlines(), 1) if ln.strip().lower() == f"[{s.lower()}]"), None))
    if not cp.has_section("problem"):
        raise ConfigError("missing [problem] section", str(path))

    length = r.number("problem", "length", kind=float)
    if length is None:
        r.require("problem", "length")
    level = r.number("problem", "sat_level", 1.0)
    points = r.number("problem", "grid_points", GRID_POINTS, int)
    grid = None
    reaction_raw = r.raw("problem", "reaction", "0")
    if reaction_raw.startswith("csv:"):
        grid, reaction = _sampled(r, "problem", "reaction", reaction_raw)
    else:
        reaction = r.number("problem", "reaction", 0.0)
    inputs = []
    for item in r.raw("problem", "inputs", "e1").split(";"):
        item = item.strip()
        if item.startswith("csv:"):
            xg, vals = _sampled(r, "problem", "inputs", item)
            if grid is not None and (len(xg) != len(grid) or not np.allclose(xg, grid)):
                r.fail("problem", "inputs", "sampled inputs must share the reaction grid")
            grid = xg
            inputs.append(vals)
        else:
            try:
                inputs.append(ModeShape.parse(item))
            except SpectrumError as exc:
                r.fail("problem", "inputs", str(exc))
    if grid is None:
        try:
            grid = uniform_grid(length, points)
        except SpectrumError as exc:
            r.fail("problem", "grid_points", str(exc))
    try:
        spec = OperatorSpec(length=length, reaction=reaction, inputs=tuple(inputs), sat_level=level, grid=grid)
    except SpectrumError as exc:
        raise ConfigError(str(exc), str(path), lines.get(("problem", "length"))) from exc

    spectrum = r.raw("problem", "spectrum", "auto").lower()
    if spectrum not in ("auto", "analytic", "numeric"):
        r.fail("problem", "spectrum", "expected auto, analytic or numeric")
    cfg = RunConfig(path=path, spec=spec, lines=lines, spectrum=spectrum)
    cfg.truncation = r.number("problem", "truncation", TRUNCATION, int)
    cfg.decay_target = r.number("problem", "decay_target", 0.0)
    if cfg.truncation < 1:
        r.fail("problem", "truncation", "must be at least 1")

    cfg.poles = r.poles("design", "poles")
    cfg.gain = r.matrix("design", "gain")
    if cfg.poles is not None and cfg.gain is not None:
        r.fail("design", "gain", "give either poles or gain, not both")

    cfg.margin = r.number("solver", "margin")
    cfg.budget = r.number("solver", "budget", None, int)
    cfg.objective = r.raw("solver", "objective")
    if cfg.objective not in (None, "min_kc", "volume", "feasibility"):
        r.fail("solver", "objective", "expected min_kc, volume or feasibility")

    cfg.T = r.number("sim", "T", 10.0)
    cfg.dt = r.number("sim", "dt")
    cfg.resolution = r.number("sim", "resolution", 31, int)
    b = r.matrix("sim", "bounds")
    if b is not None:
        if b.shape != (2, 2):
            r.fail("sim", "bounds", "expected 'x0, x1; y0, y1'")
        cfg.bounds = ((b[0, 0], b[0, 1]), (b[1, 0], b[1, 1]))
    cfg.initial = r.vector("sim", "initial")
    cfg.mode = r.raw("sim", "mode", "modal").lower()
    if cfg.mode not in ("modal", "galerkin"):
        r.fail("sim", "mode", "expected modal or galerkin")
    cfg.threads = r.number("sim", "threads", 1, int)

    fm = r.raw("output", "formats")
    if fm is not None:
        fs = tuple(t.strip().lower() for t in fm.split(",") if t.strip())
        bad = [f for f in fs if f not in FORMATS]
        if bad:
            r.fail("output", "formats", f"unknown format(s) {bad}")
        cfg.formats = fs

    if cp.has_section("dynamic"):
        A1 = r.matrix("dynamic", "A1")
        if A1 is None:
            r.require("dynamic", "a1")
        cfg.dynamic = DynamicConfig(A1, r.matrix("dynamic", "A2"), r.matrix("dynamic", "K2"))
    if cp.has_section("boundary"):
        Ad = r.matrix("boundary", "A_d")
        Bd = r.matrix("boundary", "B_d")
        Cd = r.matrix("boundary", "C_d")
        for key, v in (("a_d", Ad), ("b_d", Bd), ("c_d", Cd)):
            if v is None:
                r.require("boundary", key)
        cfg.boundary = BoundaryConfig(Ad, Bd, Cd, r.poles("boundary", "poles"), r.matrix("boundary", "gain"),
                                      r.number("boundary", "modes", None, int), r.vector("boundary", "initial"))
    return cfg
