"""Simulation configuration files.

Configurations are TOML documents with the sections ``[grid]``,
``[material.elastic]``, ``[material.acoustic]``, ``[source]``, ``[stepping]``,
``[output]`` and an optional ``[positivity]``. Unknown keys are rejected so a
misspelled physical parameter can never fall back to a default silently.
See ``README.md`` for the full grammar.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import tomli
import tomli_w

from .evo import SourceTerm, pulse_source
from .grid import FieldLayout, Grid, Label, checkerboard_grid, half_space_grid, n_voigt
from .materials import MaterialLaw, isotropic_stiffness


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path and ``line`` its 1-based line (if known)."""

    def __init__(self, message: str, key: str = "", line: Optional[int] = None):
        where = ""
        if key:
            where = f"{key}"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)
        self.key = key
        self.line = line


LABEL_RULES = ("half-space", "uniform", "checkerboard", "explicit")
SOURCE_TYPES = ("none", "point", "plane")
SOURCE_FIELDS = ("velocity", "pressure")
OUTPUT_FORMATS = ("csv",)


def _thaw(value):
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


@dataclass(frozen=True)
class LabelSpec:
    rule: str = "uniform"
    label: str = "elastic"
    axis: int = 0
    split: Optional[float] = None
    lower: str = "elastic"
    upper: str = "acoustic"
    values: Optional[tuple] = None


@dataclass(frozen=True)
class GridSpec:
    counts: tuple
    spacing: tuple
    origin: Optional[tuple] = None
    labels: LabelSpec = field(default_factory=LabelSpec)

    @property
    def dim(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class ElasticSpec:
    density: Any = 1.0
    lame: Optional[tuple] = None
    stiffness: Any = None
    compliance: Any = None


@dataclass(frozen=True)
class AcousticSpec:
    density: Any = 1.0
    bulk_modulus: Optional[float] = None
    compressibility: Optional[float] = None


@dataclass(frozen=True)
class SourceSpec:
    type: str = "none"
    field: str = "velocity"
    onset: float = 0.0
    duration: float = 1.0
    amplitude: float = 1.0
    center: Optional[tuple] = None
    width: float = 0.1
    axis: int = 0
    direction: Optional[tuple] = None


@dataclass(frozen=True)
class SteppingSpec:
    tau: float
    t_end: float
    tol: float = 1e-12
    stride: int = 10
    max_iter: int = 5000


@dataclass(frozen=True)
class OutputSpec:
    directory: Optional[str] = None
    formats: tuple = ("csv",)


@dataclass(frozen=True)
class PositivitySpec:
    rho_values: tuple = ()
    m1: tuple = ()  # sorted (kind, matrix) pairs, uniform over cells


@dataclass(frozen=True)
class SimulationConfig:
    grid: GridSpec
    stepping: SteppingSpec
    elastic: Optional[ElasticSpec] = None
    acoustic: Optional[AcousticSpec] = None
    source: SourceSpec = field(default_factory=SourceSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    positivity: Optional[PositivitySpec] = None

    def build_grid(self, refine: int = 0) -> Grid:
        """Grid of the configuration, with every axis refined ``2**refine`` times."""
        g = self.grid
        f = 2**refine
        counts = tuple(c * f for c in g.counts)
        spacing = tuple(h / f for h in g.spacing)
        lab = g.labels
        if lab.rule == "uniform":
            labels = np.full(counts, int(Label.parse(lab.label)))
            return Grid(counts, spacing, labels, g.origin)
        if lab.rule == "half-space":
            return half_space_grid(counts, spacing, lab.axis, lab.split, lab.lower, lab.upper, g.origin)
        if lab.rule == "checkerboard":
            if refine:
                raise ConfigError("checkerboard labels cannot be refined", "grid.labels.rule")
            return Grid(counts, spacing, checkerboard_grid(counts, spacing).labels, g.origin)
        if refine:
            raise ConfigError("explicit labels cannot be refined", "grid.labels.values")
        return Grid(counts, spacing, list(lab.values), g.origin)

    def build_material(self, grid: Grid) -> MaterialLaw:
        d, s = grid.dim, n_voigt(grid.dim)
        e = self.elastic or ElasticSpec()
        a = self.acoustic or AcousticSpec(bulk_modulus=1.0)
        if e.compliance is not None:
            stiffness = np.linalg.inv(np.asarray(e.compliance, dtype=float))
        elif e.lame is not None:
            stiffness = isotropic_stiffness(d, *e.lame)
        elif e.stiffness is not None:
            stiffness = np.asarray(e.stiffness, dtype=float)
        else:
            stiffness = np.eye(s)
        if stiffness.ndim == 2 and stiffness.shape != (s, s):
            raise ConfigError(f"stiffness must be {s}x{s} for a {d}-D grid", "material.elastic")
        bulk = a.bulk_modulus if a.bulk_modulus is not None else 1.0 / a.compressibility
        return MaterialLaw.uniform(
            grid,
            rho_solid=np.asarray(e.density, dtype=float),
            stiffness=stiffness,
            rho_fluid=np.asarray(a.density, dtype=float),
            bulk_modulus=bulk,
        )

    def source_profile(self, grid: Grid) -> np.ndarray:
        """Spatial part of the source as a state-shaped vector (zero for ``type = "none"``)."""
        src = self.source
        layout = FieldLayout(grid)
        if src.type == "none":
            return np.zeros(layout.state_len)
        x = grid.centers()
        center = np.asarray(src.center if src.center is not None else _domain_center(grid))
        if src.type == "point":
            r = np.linalg.norm(x - center, axis=1)
        else:
            r = np.abs(x[:, src.axis] - center[src.axis])
        s = r / src.width
        shape = np.where(s < 1, np.cos(0.5 * np.pi * s) ** 4, 0.0)
        v = np.zeros((grid.n_cells, grid.dim))
        T = np.zeros((grid.elastic_cells.size, grid.n_voigt))
        p = np.zeros(grid.acoustic_cells.size)
        if src.field == "pressure":
            p[:] = shape[grid.acoustic_cells]
        else:
            direction = np.zeros(grid.dim)
            if src.direction is not None:
                direction[:] = src.direction
            else:
                direction[src.axis] = 1.0
            v[:] = shape[:, None] * direction
        return layout.join(v, T, p)

    def build_source(self, grid: Grid) -> SourceTerm:
        profile = self.source_profile(grid)
        if self.source.type == "none":
            return SourceTerm.none(profile.size)
        return pulse_source(profile, self.source.onset, self.source.duration, self.source.amplitude)

    def m1_blocks(self, material: MaterialLaw) -> dict:
        if self.positivity is None:
            return {}
        base = material.blocks()
        out = {}
        for kind, matrix in self.positivity.m1:
            m = np.asarray(matrix, dtype=float)
            k = base[kind].shape[1]
            m = m * np.eye(k) if m.ndim == 0 else m
            if m.shape != (k, k):
                raise ConfigError(f"must be a scalar or {k}x{k} matrix", f"positivity.m1.{kind}")
            out[kind] = np.broadcast_to(m, base[kind].shape).copy()
        return out

    def to_dict(self) -> dict:
        """Canonical nested dictionary; :func:`parse_config` of its TOML form gives back ``self``."""
        out: dict = {}
        g = self.grid
        grid = {"dim": g.dim, "counts": _thaw(g.counts), "spacing": _thaw(g.spacing)}
        if g.origin is not None:
            grid["origin"] = _thaw(g.origin)
        lab = g.labels
        labels: dict = {"rule": lab.rule}
        if lab.rule == "uniform":
            labels["label"] = lab.label
        elif lab.rule == "half-space":
            labels.update(axis=lab.axis, lower=lab.lower, upper=lab.upper)
            if lab.split is not None:
                labels["split"] = lab.split
        elif lab.rule == "explicit":
            labels["values"] = _thaw(lab.values)
        grid["labels"] = labels
        out["grid"] = grid
        material = {}
        if self.elastic is not None:
            material["elastic"] = _drop_none(dataclasses.asdict(self.elastic))
        if self.acoustic is not None:
            material["acoustic"] = _drop_none(dataclasses.asdict(self.acoustic))
        if material:
            out["material"] = material
        out["source"] = _drop_none(dataclasses.asdict(self.source))
        out["stepping"] = dataclasses.asdict(self.stepping)
        out["output"] = _drop_none(dataclasses.asdict(self.output))
        if self.positivity is not None:
            pos: dict = {"rho_values": _thaw(self.positivity.rho_values)}
            if self.positivity.m1:
                pos["m1"] = {k: _thaw(v) for k, v in self.positivity.m1}
            out["positivity"] = pos
        return _thaw_all(out)


def _domain_center(grid: Grid) -> tuple:
    return tuple(o + 0.5 * n * h for o, n, h in zip(grid.origin, grid.counts, grid.spacing))


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _thaw_all(d):
    if isinstance(d, dict):
        return {k: _thaw_all(v) for k, v in d.items()}
    return _thaw(d)


def emit_config(config: SimulationConfig) -> str:
    """TOML text of ``config`` in canonical form."""
    return tomli_w.dumps(config.to_dict())


# ---------------------------------------------------------------- parsing

_HEADER = re.compile(r"^\s*\[\s*([^\]]+?)\s*\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-\"'.]+?)\s*=")


def _key_lines(text: str) -> dict[str, int]:
    """Map dotted key paths to the 1-based line where they are defined."""
    lines: dict[str, int] = {}
    table = ""
    for i, raw in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(raw)
        if m:
            table = m.group(1).replace('"', "").replace("'", "").replace(" ", "")
            lines.setdefault(table, i)
            continue
        m = _KEY.match(raw)
        if m:
            key = m.group(1).replace('"', "").replace("'", "")
            path = f"{table}.{key}" if table else key
            lines.setdefault(path, i)
    return lines


class _Reader:
    """Pulls typed values out of a TOML table and remembers what was consumed."""

    def __init__(self, table: dict, path: str, lines: dict[str, int]):
        if not isinstance(table, dict):
            raise ConfigError("expected a table", path, lines.get(path))
        self.table = table
        self.path = path
        self.lines = lines
        self.seen: set[str] = set()

    def _where(self, key: str) -> tuple[str, Optional[int]]:
        full = f"{self.path}.{key}" if self.path else key
        return full, self.lines.get(full, self.lines.get(self.path))

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, *self._where(key))

    def has(self, key: str) -> bool:
        return key in self.table

    def raw(self, key: str, default=None, required: bool = False):
        self.seen.add(key)
        if key not in self.table:
            if required:
                raise self.error(key, "missing required key")
            return default
        return self.table[key]

    def number(self, key: str, default=None, required=False, positive=False, nonnegative=False):
        v = self.raw(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(key, f"expected a number, got {type(v).__name__}")
        v = float(v)
        if not np.isfinite(v):
            raise self.error(key, "must be finite")
        if positive and not v > 0:
            raise self.error(key, f"must be positive, got {v}")
        if nonnegative and v < 0:
            raise self.error(key, f"must be nonnegative, got {v}")
        return v

    def integer(self, key: str, default=None, required=False, minimum=None):
        v = self.raw(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.error(key, f"expected an integer, got {type(v).__name__}")
        if minimum is not None and v < minimum:
            raise self.error(key, f"must be >= {minimum}, got {v}")
        return v

    def string(self, key: str, default=None, required=False, choices=None):
        v = self.raw(key, default, required)
        if v is None:
            return None
        if not isinstance(v, str):
            raise self.error(key, f"expected a string, got {type(v).__name__}")
        if choices is not None and v not in choices:
            raise self.error(key, f"must be one of {', '.join(choices)}; got {v!r}")
        return v

    def numbers(self, key: str, default=None, required=False, length=None, positive=False):
        v = self.raw(key, default, required)
        if v is None:
            return None
        if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
            raise self.error(key, "expected an array of numbers")
        if length is not None and len(v) != length:
            raise self.error(key, f"expected {length} entries, got {len(v)}")
        if positive and any(not x > 0 for x in v):
            raise self.error(key, f"entries must be positive, got {v}")
        return tuple(float(x) for x in v)

    def scalar_or_matrix(self, key: str, k: int, default=None):
        v = self.raw(key, default)
        if v is None:
            return None
        if isinstance(v, bool):
            raise self.error(key, "expected a number or a matrix")
        if isinstance(v, (int, float)):
            return float(v)
        try:
            m = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            raise self.error(key, "expected a number or a matrix") from None
        if m.shape != (k, k):
            raise self.error(key, f"expected a {k}x{k} matrix, got shape {m.shape}")
        return tuple(tuple(float(x) for x in row) for row in m)

    def sub(self, key: str, required=False) -> Optional["_Reader"]:
        v = self.raw(key, None, required)
        if v is None:
            return None
        full, _ = self._where(key)
        return _Reader(v, full, self.lines)

    def finish(self) -> None:
        for key in self.table:
            if key not in self.seen:
                raise self.error(key, "unknown key")


def _label_name(r: _Reader, key: str, default: str) -> str:
    v = r.string(key, default)
    try:
        return Label.parse(v).name.lower()
    except KeyError:
        raise r.error(key, f"unknown label {v!r} (use 'elastic' or 'acoustic')") from None


def _parse_grid(r: _Reader) -> GridSpec:
    counts_raw = r.raw("counts", required=True)
    if not isinstance(counts_raw, list) or any(isinstance(c, bool) or not isinstance(c, int) for c in counts_raw):
        raise r.error("counts", "expected an array of integers")
    counts = tuple(counts_raw)
    if not 1 <= len(counts) <= 3:
        raise r.error("counts", f"need 1 to 3 axes, got {len(counts)}")
    if any(c < 1 for c in counts):
        raise r.error("counts", f"cell counts must be positive, got {list(counts)}")
    dim = r.integer("dim", len(counts))
    if dim != len(counts):
        raise r.error("dim", f"dim = {dim} does not match {len(counts)} counts")
    spacing = r.numbers("spacing", required=True, length=dim, positive=True)
    origin = r.numbers("origin", length=dim)

    lab = r.sub("labels")
    if lab is None:
        labels = LabelSpec()
    else:
        rule = lab.string("rule", "uniform", choices=LABEL_RULES)
        if rule == "uniform":
            labels = LabelSpec(rule, label=_label_name(lab, "label", "elastic"))
        elif rule == "half-space":
            axis = lab.integer("axis", 0, minimum=0)
            if axis >= dim:
                raise lab.error("axis", f"axis {axis} out of range for a {dim}-D grid")
            labels = LabelSpec(
                rule,
                axis=axis,
                split=lab.number("split"),
                lower=_label_name(lab, "lower", "elastic"),
                upper=_label_name(lab, "upper", "acoustic"),
            )
        elif rule == "checkerboard":
            labels = LabelSpec(rule)
        else:
            raw = lab.raw("values", required=True)
            if not isinstance(raw, list):
                raise lab.error("values", "expected an array of labels")
            try:
                values = tuple(Label.parse(v).name.lower() for v in np.ravel(np.asarray(raw, dtype=object)))
            except (KeyError, ValueError):
                raise lab.error("values", "entries must be 'elastic'/'acoustic' or 0/1") from None
            if len(values) != int(np.prod(counts)):
                raise lab.error("values", f"expected {int(np.prod(counts))} labels, got {len(values)}")
            labels = LabelSpec(rule, values=values)
        lab.finish()
    return GridSpec(counts, spacing, origin, labels)


def _parse_elastic(r: _Reader, d: int) -> ElasticSpec:
    s = n_voigt(d)
    density = r.scalar_or_matrix("density", d, 1.0)
    lame = r.numbers("lame", length=2)
    stiffness = r.scalar_or_matrix("stiffness", s)
    compliance = r.scalar_or_matrix("compliance", s)
    given = [k for k, v in (("lame", lame), ("stiffness", stiffness), ("compliance", compliance)) if v is not None]
    if len(given) > 1:
        raise r.error(given[1], f"give only one of lame, stiffness, compliance (also got {given[0]})")
    if isinstance(compliance, float):
        raise r.error("compliance", f"expected a {s}x{s} matrix")
    if isinstance(stiffness, float) and not stiffness > 0:
        raise r.error("stiffness", "must be positive")
    if isinstance(density, float) and not density > 0:
        raise r.error("density", "must be positive")
    r.finish()
    return ElasticSpec(density, lame, stiffness, compliance)


def _parse_acoustic(r: _Reader, d: int) -> AcousticSpec:
    density = r.scalar_or_matrix("density", d, 1.0)
    bulk = r.number("bulk_modulus", positive=True)
    comp = r.number("compressibility", positive=True)
    if bulk is not None and comp is not None:
        raise r.error("compressibility", "give only one of bulk_modulus, compressibility")
    if bulk is None and comp is None:
        raise r.error("bulk_modulus", "missing required key (or give compressibility)")
    if isinstance(density, float) and not density > 0:
        raise r.error("density", "must be positive")
    r.finish()
    return AcousticSpec(density, bulk, comp)


def _parse_source(r: _Reader, d: int) -> SourceSpec:
    kind = r.string("type", "none", choices=SOURCE_TYPES)
    axis = r.integer("axis", 0, minimum=0)
    if axis >= d:
        raise r.error("axis", f"axis {axis} out of range for a {d}-D grid")
    spec = SourceSpec(
        type=kind,
        field=r.string("field", "velocity", choices=SOURCE_FIELDS),
        onset=r.number("onset", 0.0, nonnegative=True),
        duration=r.number("duration", 1.0, positive=True),
        amplitude=r.number("amplitude", 1.0),
        center=r.numbers("center", length=d),
        width=r.number("width", 0.1, positive=True),
        axis=axis,
        direction=r.numbers("direction", length=d),
    )
    r.finish()
    return spec


def parse_config(text: str) -> SimulationConfig:
    """Parse and validate TOML configuration text.

    Raises:
        ConfigError: on malformed TOML, unknown or missing keys, wrong types or
            invalid values. The message names the dotted key and its line.
    """
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"malformed TOML: {exc}", line=line) from None
    lines = _key_lines(text)
    root = _Reader(data, "", lines)

    grid_r = root.sub("grid", required=True)
    grid = _parse_grid(grid_r)
    grid_r.finish()
    d = grid.dim

    elastic = acoustic = None
    mat = root.sub("material")
    if mat is not None:
        er = mat.sub("elastic")
        ar = mat.sub("acoustic")
        elastic = _parse_elastic(er, d) if er is not None else None
        acoustic = _parse_acoustic(ar, d) if ar is not None else None
        mat.finish()

    source = SourceSpec()
    src = root.sub("source")
    if src is not None:
        source = _parse_source(src, d)

    st = root.sub("stepping", required=True)
    stepping = SteppingSpec(
        tau=st.number("tau", required=True, positive=True),
        t_end=st.number("t_end", required=True, positive=True),
        tol=st.number("tol", 1e-12, positive=True),
        stride=st.integer("stride", 10, minimum=1),
        max_iter=st.integer("max_iter", 5000, minimum=1),
    )
    st.finish()

    output = OutputSpec()
    out = root.sub("output")
    if out is not None:
        directory = out.string("directory")
        formats = out.raw("formats", ["csv"])
        if not isinstance(formats, list) or any(f not in OUTPUT_FORMATS for f in formats):
            raise out.error("formats", f"supported formats: {', '.join(OUTPUT_FORMATS)}")
        output = OutputSpec(directory, tuple(formats))
        out.finish()

    positivity = None
    pos = root.sub("positivity")
    if pos is not None:
        rhos = pos.numbers("rho_values", (), positive=True)
        m1 = []
        m1r = pos.sub("m1")
        if m1r is not None:
            sizes = {"rho_star": d, "compliance": n_voigt(d), "kappa_inv": d, "compressibility": 1}
            for kind in sorted(m1r.table):
                if kind not in sizes:
                    raise m1r.error(kind, f"unknown key (block kinds: {', '.join(sizes)})")
                m1.append((kind, m1r.scalar_or_matrix(kind, sizes[kind])))
            m1r.finish()
        positivity = PositivitySpec(tuple(rhos), tuple(m1))
        pos.finish()

    root.finish()
    config = SimulationConfig(grid, stepping, elastic, acoustic, source, output, positivity)
    _check_regions(config, lines)
    return config


def _check_regions(config: SimulationConfig, lines: dict[str, int]) -> None:
    grid = config.build_grid()
    if grid.has(Label.ELASTIC) and config.elastic is None:
        raise ConfigError("grid has elastic cells but no [material.elastic] section", "material.elastic",
                          lines.get("grid.labels", lines.get("grid")))
    if grid.has(Label.ACOUSTIC) and config.acoustic is None:
        raise ConfigError("grid has acoustic cells but no [material.acoustic] section", "material.acoustic",
                          lines.get("grid.labels", lines.get("grid")))
    if config.source.type != "none" and config.source.field == "pressure" and not grid.has(Label.ACOUSTIC):
        raise ConfigError("pressure source on a grid without acoustic cells", "source.field",
                          lines.get("source.field"))


def load_config(path) -> SimulationConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
