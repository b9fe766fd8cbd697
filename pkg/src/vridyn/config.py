"""Run configuration: INI-style files, flag overrides and round-tripping.

A configuration file has up to four sections::

    [pes]
    vri_x = 0.3265

    [integrator]
    rtol = 1e-11
    t_max = 200

    [sweep-slice]          ; at most one experiment block
    h0 = 0.03
    xi_grid = 0.025:0.7:0.025
    grid = 512,512

    [run]
    out = results/slice
    workers = 0

Precedence, lowest to highest: built-in defaults, config file, command-line
flags.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, VridynError
from .experiments import surface_h0_grid, surface_xi_grid, slice_xi_grid
from .integrator import IntegratorConfig
from .pes import PesSpec

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "RunConfig",
    "parse_config",
    "parse_config_text",
    "serialize_config",
    "parse_grid_spec",
    "format_grid",
]

EXPERIMENTS = (
    "pes-info",
    "line-run",
    "sweep-surface",
    "fate-map",
    "sweep-slice",
    "traces",
    "stats",
)

# keys each experiment block accepts
_EXPERIMENT_KEYS = {
    "pes-info": {"h0"},
    "line-run": {"h0", "density"},
    "sweep-surface": {"h0_grid", "xi_grid", "density"},
    "fate-map": {"h0", "grid"},
    "sweep-slice": {"h0", "xi_grid", "grid"},
    "traces": {"h0", "density"},
    "stats": {"h0", "density", "bin_width"},
}


def parse_grid_spec(text: str) -> tuple[float, ...]:
    """Parse ``start:stop:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if step <= 0 or stop < start:
                raise ConfigError(f"bad grid range {text!r}")
            n = int(round((stop - start) / step)) + 1
            return tuple(float(v) for v in np.round(start + step * np.arange(n), 10))
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}: {exc}") from exc
    if not vals:
        raise ConfigError("empty grid")
    return vals


def format_grid(values) -> str:
    return ",".join(repr(float(v)) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "pes-info"
    h0: float = 0.03
    density: float = 500.0
    grid: tuple[int, int] = (1024, 1024)
    h0_grid: tuple[float, ...] = ()
    xi_grid: tuple[float, ...] = ()
    bin_width: float = 10.0

    def resolved_h0_grid(self) -> tuple[float, ...]:
        return self.h0_grid or tuple(float(v) for v in surface_h0_grid())

    def resolved_xi_grid(self) -> tuple[float, ...]:
        if self.xi_grid:
            return self.xi_grid
        grid = slice_xi_grid() if self.name == "sweep-slice" else surface_xi_grid()
        return tuple(float(v) for v in grid)

    def validate(self) -> "ExperimentConfig":
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}")
        if not self.h0 > 0:
            raise ConfigError(f"h0 must be > 0, got {self.h0!r}")
        if not self.density > 0:
            raise ConfigError(f"density must be > 0, got {self.density!r}")
        if len(self.grid) != 2 or min(self.grid) < 2:
            raise ConfigError(f"grid must be two resolutions >= 2, got {self.grid!r}")
        if any(h <= 0 for h in self.h0_grid):
            raise ConfigError("h0_grid entries must be > 0")
        if not self.bin_width > 0:
            raise ConfigError(f"bin_width must be > 0, got {self.bin_width!r}")
        return self


@dataclass(frozen=True)
class RunConfig:
    pes: PesSpec = field(default_factory=PesSpec)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    out: str = "results"
    workers: int = 1

    def validate(self) -> "RunConfig":
        try:
            self.pes.validate()
            self.integrator.validate()
        except VridynError as exc:
            raise ConfigError(str(exc)) from exc
        self.experiment.validate()
        if self.workers < 0:
            raise ConfigError(f"workers must be >= 0, got {self.workers!r}")
        out = Path(self.out)
        if out.exists() and not out.is_dir():
            raise ConfigError(f"output path {self.out!r} exists and is not a directory")
        return self

    def to_dict(self) -> dict:
        exp = dataclasses.asdict(self.experiment)
        exp["grid"] = list(exp["grid"])
        exp["h0_grid"] = list(exp["h0_grid"])
        exp["xi_grid"] = list(exp["xi_grid"])
        return {
            "pes": self.pes.to_dict(),
            "integrator": self.integrator.to_dict(),
            "experiment": exp,
            "run": {"out": self.out, "workers": self.workers},
        }


def _coerce(cls, key: str, raw: str):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    kind = str(types[key])
    try:
        if key == "method":
            return raw.strip()
        if key == "grid":
            parts = [int(t) for t in raw.replace("x", ",").split(",")]
            if len(parts) != 2:
                raise ValueError("need NY,NPY")
            return tuple(parts)
        if key in ("h0_grid", "xi_grid"):
            return parse_grid_spec(raw)
        if "int" in kind:
            return int(raw)
        return float(raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"[{cls.__name__}] key {key!r}: cannot parse {raw!r} ({exc})") from exc


def _apply(obj, section: str, items: dict, allowed: set[str]):
    updates = {}
    for key, raw in items.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        updates[key] = _coerce(type(obj), key, raw) if isinstance(raw, str) else raw
    return dataclasses.replace(obj, **updates)


def parse_config_text(text: str, experiment: str | None = None, source: str = "<string>") -> RunConfig:
    """Build a :class:`RunConfig` from INI text (no validation of the output dir)."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=(";", "#"), default_section="__none__"
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    sections = parser.sections()
    unknown = [s for s in sections if s not in ("pes", "integrator", "run") + EXPERIMENTS]
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {unknown}")
    blocks = [s for s in sections if s in EXPERIMENTS]
    if len(blocks) > 1:
        raise ConfigError(f"{source}: more than one experiment block {blocks}")
    name = experiment or (blocks[0] if blocks else "pes-info")
    if blocks and blocks[0] != name:
        raise ConfigError(f"{source}: file configures [{blocks[0]}] but {name!r} was requested")

    cfg = RunConfig(experiment=ExperimentConfig(name=name))
    pes_keys = {f.name for f in dataclasses.fields(PesSpec)}
    int_keys = {f.name for f in dataclasses.fields(IntegratorConfig)}
    pes = _apply(cfg.pes, "pes", dict(parser["pes"]) if "pes" in parser else {}, pes_keys)
    integ = _apply(
        cfg.integrator, "integrator", dict(parser["integrator"]) if "integrator" in parser else {}, int_keys
    )
    exp = cfg.experiment
    if blocks:
        exp = _apply(exp, name, dict(parser[name]), _EXPERIMENT_KEYS[name])
    out, workers = cfg.out, cfg.workers
    if "run" in parser:
        for key, raw in parser["run"].items():
            if key == "out":
                out = raw.strip()
            elif key == "workers":
                try:
                    workers = int(raw)
                except ValueError as exc:
                    raise ConfigError(f"{source}: [run] workers: {exc}") from exc
            else:
                raise ConfigError(f"{source}: unknown key {key!r} in section [run]")
    return RunConfig(pes=pes, integrator=integ, experiment=exp, out=out, workers=workers)


def _from_manifest(data: dict, experiment: str | None) -> RunConfig:
    conf = data.get("config", data)
    exp = dict(conf["experiment"])
    name = experiment or exp.pop("name")
    exp.pop("name", None)
    exp["grid"] = tuple(exp["grid"])
    exp["h0_grid"] = tuple(exp.get("h0_grid", ()))
    exp["xi_grid"] = tuple(exp.get("xi_grid", ()))
    try:
        return RunConfig(
            pes=PesSpec(**conf["pes"]),
            integrator=IntegratorConfig(**conf["integrator"]),
            experiment=ExperimentConfig(name=name, **exp),
            out=conf["run"]["out"],
            workers=int(conf["run"]["workers"]),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed manifest config: {exc}") from exc


def parse_config(
    path: str | Path | None = None,
    experiment: str | None = None,
    overrides: dict | None = None,
) -> RunConfig:
    """Load defaults, then the file at ``path`` (INI or a JSON manifest), then
    ``overrides``; return a validated :class:`RunConfig`.

    ``overrides`` keys: ``out, workers, h0, xi, density, grid, tmax, radius,
    rtol, atol, method, step, h0_grid, xi_grid, bin_width, sample_interval``.
    """
    if path is None:
        cfg = RunConfig(experiment=ExperimentConfig(name=experiment or "pes-info"))
    else:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {str(p)!r}: {exc}") from exc
        if p.suffix == ".json":
            try:
                cfg = _from_manifest(json.loads(text), experiment)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}: line {exc.lineno}: {exc.msg}") from exc
        else:
            cfg = parse_config_text(text, experiment, source=str(p))
    if overrides:
        cfg = _apply_overrides(cfg, overrides)
    return cfg.validate()


_OVERRIDE_MAP = {
    "h0": ("experiment", "h0"),
    "density": ("experiment", "density"),
    "grid": ("experiment", "grid"),
    "h0_grid": ("experiment", "h0_grid"),
    "xi_grid": ("experiment", "xi_grid"),
    "bin_width": ("experiment", "bin_width"),
    "xi": ("pes", "vri_x"),
    "tmax": ("integrator", "t_max"),
    "radius": ("integrator", "capture_radius"),
    "rtol": ("integrator", "rtol"),
    "atol": ("integrator", "atol"),
    "method": ("integrator", "method"),
    "step": ("integrator", "step_size"),
    "sample_interval": ("integrator", "sample_interval"),
}


def _apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    parts = {"pes": {}, "integrator": {}, "experiment": {}}
    top = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("out", "workers"):
            top[key] = value
            continue
        if key not in _OVERRIDE_MAP:
            raise ConfigError(f"unknown override {key!r}")
        section, name = _OVERRIDE_MAP[key]
        if section == "experiment" and name not in _EXPERIMENT_KEYS[cfg.experiment.name]:
            raise ConfigError(f"--{key.replace('_', '-')} does not apply to {cfg.experiment.name}")
        parts[section][name] = value
    return dataclasses.replace(
        cfg,
        pes=dataclasses.replace(cfg.pes, **parts["pes"]),
        integrator=dataclasses.replace(cfg.integrator, **parts["integrator"]),
        experiment=dataclasses.replace(cfg.experiment, **parts["experiment"]),
        **top,
    )


def serialize_config(cfg: RunConfig) -> str:
    """INI text that :func:`parse_config_text` maps back to ``cfg``."""
    buf = io.StringIO()
    buf.write("[pes]\n")
    for k, v in cfg.pes.to_dict().items():
        buf.write(f"{k} = {float(v)!r}\n")
    buf.write("\n[integrator]\n")
    for k, v in cfg.integrator.to_dict().items():
        buf.write(f"{k} = {v if isinstance(v, str) else repr(float(v))}\n")
    e = cfg.experiment
    buf.write(f"\n[{e.name}]\n")
    for key in sorted(_EXPERIMENT_KEYS[e.name]):
        v = getattr(e, key)
        if key == "grid":
            buf.write(f"grid = {v[0]},{v[1]}\n")
        elif key in ("h0_grid", "xi_grid"):
            if v:
                buf.write(f"{key} = {format_grid(v)}\n")
        else:
            buf.write(f"{key} = {float(v)!r}\n")
    buf.write(f"\n[run]\nout = {cfg.out}\nworkers = {cfg.workers}\n")
    return buf.getvalue()
