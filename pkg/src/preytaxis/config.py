"""Run configuration: a strict INI file covering every knob of a batch run.

Example::

    [model]
    d1 = 0.1
    u_m = 2.0

    [domain]
    lengths = 1.0          ; two comma-separated values for a rectangle
    grid_points = 128

    [step]
    dt = 1e-4
    t_end = 0.5

Sections and keys not listed in :data:`SCHEMA` are errors, reported with
their line number.  Missing keys take the defaults below.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field, fields, replace

from .checks import VerifySettings
from .ensemble import EnsembleConfig, InitialCondition
from .galerkin import StepConfig
from .model import ModelParams
from .noise import NoiseModel
from .spectral import Domain


class ConfigError(ValueError):
    """Malformed configuration; ``line`` is 1-based when known."""

    def __init__(self, message, source="<config>", line=None, field=None):
        self.source = source
        self.line = line
        self.field = field
        where = source if line is None else f"{source}:{line}"
        what = "" if field is None else f" [{field}]"
        super().__init__(f"{where}{what}: {message}")


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _bool(text):
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "out"
    format: str = "bin"
    store_increments: bool = False

    def __post_init__(self):
        if self.format not in ("bin", "csv"):
            raise ValueError(f"format must be 'bin' or 'csv', got {self.format!r}")


@dataclass(frozen=True)
class ReportSettings:
    """Which reports ``simulate`` and ``ensemble`` write."""

    energy: bool = True
    positivity: bool = True
    translation: bool = False
    moment_q: float = 4.0
    stampacchia_eps: float = 1e-3
    translation_lags: tuple = (4, 8, 16, 32)


@dataclass(frozen=True)
class StabilitySettings:
    eps_ic: tuple = (1e-2, 5e-3, 2.5e-3)
    direction: str = "constant"


_PARSERS = {str: str, bool: _bool}
# list-valued keys, written comma separated
_TUPLE_PARSERS = {"lengths": _floats, "grid_points": _ints, "levels": _floats,
                  "amplitudes": _floats, "translation_lags": _ints, "eps_ic": _floats,
                  "n_sweep": _ints, "structural_seeds": _ints, "stability_eps": _floats,
                  "replay_strides": _ints}

SCHEMA = {
    "model": [f.name for f in fields(ModelParams)],
    "domain": ["lengths", "grid_points"],
    "basis": ["n_modes"],
    "noise": [f.name for f in fields(NoiseModel)],
    "step": [f.name for f in fields(StepConfig)],
    "ensemble": ["n_traj", "master_seed", "block_size", "taxis", "reaction"],
    "initial": [f.name for f in fields(InitialCondition)],
    "output": [f.name for f in fields(OutputSettings)],
    "reports": [f.name for f in fields(ReportSettings)],
    "stability": [f.name for f in fields(StabilitySettings)],
    "verify": [f.name for f in fields(VerifySettings)],
}


@dataclass(frozen=True)
class RunConfig:
    """Union of all settings of a run."""

    ensemble: EnsembleConfig = field(default_factory=lambda: EnsembleConfig(
        step=StepConfig(1e-4, 0.5, 10)))
    output: OutputSettings = field(default_factory=OutputSettings)
    reports: ReportSettings = field(default_factory=ReportSettings)
    stability: StabilitySettings = field(default_factory=StabilitySettings)
    verify: VerifySettings = field(default_factory=VerifySettings)

    # -- flat view -----------------------------------------------------------
    def sections(self):
        """``{section: {key: value}}`` with every key of :data:`SCHEMA`."""
        e = self.ensemble
        return {
            "model": e.params.to_dict(),
            "domain": {"lengths": e.domain.lengths, "grid_points": e.domain.grid_points},
            "basis": {"n_modes": int(e.n_modes)},
            "noise": e.noise.to_dict(),
            "step": {f.name: getattr(e.step, f.name) for f in fields(StepConfig)},
            "ensemble": {"n_traj": int(e.n_traj), "master_seed": int(e.master_seed),
                         "block_size": int(e.block_size), "taxis": bool(e.taxis),
                         "reaction": bool(e.reaction)},
            "initial": {f.name: getattr(e.ic, f.name) for f in fields(InitialCondition)},
            "output": _asdict(self.output),
            "reports": _asdict(self.reports),
            "stability": _asdict(self.stability),
            "verify": _asdict(self.verify),
        }

    def to_ini(self):
        lines = []
        for section, values in self.sections().items():
            lines.append(f"[{section}]")
            lines += [f"{k} = {_fmt(v)}" for k, v in values.items()]
            lines.append("")
        return "\n".join(lines)

    def canonical_json(self):
        return json.dumps(self.sections(), sort_keys=True, separators=(",", ":"))

    def content_hash(self):
        """SHA-256 of the canonical JSON form (output settings excluded)."""
        data = self.sections()
        data.pop("output")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed=None, out=None, fmt=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, ensemble=cfg.ensemble.replace(master_seed=int(seed)))
        if out is not None:
            cfg = replace(cfg, output=replace(cfg.output, directory=str(out)))
        if fmt is not None:
            cfg = replace(cfg, output=replace(cfg.output, format=fmt))
        return cfg

    # -- parsing -------------------------------------------------------------
    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_string(fh.read(), str(path))

    @classmethod
    def from_string(cls, text, source="<config>"):
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                           interpolation=None, strict=True)
        parser.optionxform = str
        try:
            parser.read_string(text, source)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(str(exc).splitlines()[0], source, line) from None
        locate = _Locator(text)
        defaults = cls().sections()
        values = {s: dict(v) for s, v in defaults.items()}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", source,
                                  locate(section), section)
            for key, raw in parser.items(section):
                name = f"{section}.{key}"
                if key not in SCHEMA[section]:
                    raise ConfigError("unknown key", source, locate(section, key), name)
                try:
                    values[section][key] = _parse(key, raw, defaults[section][key])
                except ValueError as exc:
                    raise ConfigError(str(exc), source, locate(section, key), name) from None
        try:
            return cls._build(values)
        except ValueError as exc:
            section, key = _blame(str(exc))
            line = locate(section, key) if section else None
            name = f"{section}.{key}" if key else section
            raise ConfigError(str(exc), source, line, name) from None

    @classmethod
    def _build(cls, v):
        params = _construct("model", ModelParams, v["model"])
        domain = _construct("domain", Domain, v["domain"])
        noise = _construct("noise", NoiseModel, v["noise"])
        step = _construct("step", StepConfig, v["step"])
        ic = _construct("initial", InitialCondition, v["initial"])
        ens = _construct("ensemble", EnsembleConfig, dict(
            params=params, domain=domain, n_modes=v["basis"]["n_modes"], noise=noise,
            step=step, ic=ic, **v["ensemble"]))
        return cls(ens, _construct("output", OutputSettings, v["output"]),
                   _construct("reports", ReportSettings, v["reports"]),
                   _construct("stability", StabilitySettings, v["stability"]),
                   _construct("verify", VerifySettings, v["verify"]))


def _asdict(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _parse(key, raw, default):
    if key in _TUPLE_PARSERS:
        out = _TUPLE_PARSERS[key](raw)
        if not out:
            raise ValueError("empty list")
        return out
    kind = type(default)
    if kind is float:
        return float(raw)
    if kind is int:
        return int(raw)
    return _PARSERS[kind](raw.strip())


def _construct(section, cls, kwargs):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ValueError(f"[{section}] {exc}") from None


def _blame(message):
    """Best-effort ``(section, key)`` from a constructor error message."""
    m = re.match(r"\[(\w+)\]", message)
    section = m.group(1) if m else None
    key = None
    if section in SCHEMA:
        hits = []
        for k in SCHEMA[section]:
            found = re.search(rf"\b{re.escape(k)}\b", message[m.end():])
            if found:
                hits.append((found.start(), k))
        if hits:
            key = min(hits)[1]
    return section, key


class _Locator:
    """Line numbers of sections and keys in the raw text."""

    def __init__(self, text):
        self.lines = text.splitlines()

    def __call__(self, section, key=None):
        current = None
        for i, line in enumerate(self.lines, start=1):
            stripped = line.strip()
            m = re.match(r"\[([^\]]+)\]", stripped)
            if m:
                current = m.group(1).strip()
                if key is None and current == section:
                    return i
                continue
            if key is not None and current == section:
                if re.match(rf"{re.escape(key)}\s*[=:]", stripped):
                    return i
        return None


def default_config():
    return RunConfig()
