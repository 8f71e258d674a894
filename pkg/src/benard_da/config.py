"""INI configuration with one section per module.

An empty file yields every default.  Unknown sections or keys, malformed
values and violated invariants raise :class:`ConfigFileError` carrying the
file name and line number of the offending entry.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, replace

from .dynamics import PhysParams
from .field_core import Grid
from .interpolants import InterpolantKind, InterpolantSpec
from .runner import ConfigError, DAConfig
from .time_integrator import Scheme, StepperConfig

__all__ = [
    "IOSettings",
    "ConfigFileError",
    "SCHEMA",
    "parse_config",
    "parse_config_text",
    "load_config",
    "load_config_text",
    "serialize",
    "normalize",
    "with_overrides",
]


@dataclass(frozen=True)
class IOSettings:
    """Artifact options and sweep lists (section ``cli_io``)."""

    checkpoint_every: float = 0.0  # 0: only the final states
    gnuplot: bool = True
    mu_list: tuple[float, ...] = (50.0, 100.0, 200.0)
    h_list: tuple[float, ...] = (0.0397887357729738, 0.0795774715459477)
    parallelism: int = 1

    def __post_init__(self):
        if not (self.checkpoint_every >= 0 and math.isfinite(self.checkpoint_every)):
            raise ConfigError("checkpoint_every", "must be a finite number >= 0")
        if self.parallelism < 1:
            raise ConfigError("parallelism", "must be >= 1")
        if not self.mu_list or not self.h_list:
            raise ConfigError("mu_list" if not self.mu_list else "h_list", "must be non-empty")


class ConfigFileError(ValueError):
    def __init__(self, source: str, line: int | None, key: str | None, message: str):
        where = f"{source}:{line}" if line else source
        what = f"{key}: " if key and not message.startswith(f"{key} ") else ""
        super().__init__(f"{where}: {what}{message}")
        self.source, self.line, self.key = source, line, key


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"not a finite number: {s!r}")
    return v


def _int(s: str) -> int:
    return int(s.strip())


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(_float(p) for p in re.split(r"[,\s]+", s.strip()) if p)


def _mu(s: str) -> float | None:
    return None if s.strip().lower() == "auto" else _float(s)


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if hasattr(v, "value"):
        return str(v.value)
    return str(v)


# section -> key -> (parser, attribute path on (DAConfig, IOSettings))
SCHEMA: dict[str, dict[str, tuple]] = {
    "field_core": {
        "L": (_float, ("grid", "L")),
        "nx": (_int, ("grid", "nx")),
        "ny": (_int, ("grid", "ny")),
        "dealias_fraction": (_float, ("grid", "dealias_fraction")),
    },
    "boussinesq_dynamics": {
        "nu": (_float, ("phys", "nu")),
        "kappa": (_float, ("phys", "kappa")),
    },
    "interpolants": {
        "kind": (lambda s: InterpolantKind(s.strip()), ("spec", "kind")),
        "h": (_float, ("spec", "h")),
    },
    "time_integrator": {
        "dt": (_float, ("stepper", "dt")),
        "scheme": (lambda s: Scheme(s.strip()), ("stepper", "scheme")),
        "cfl_safety": (_float, ("stepper", "cfl_safety")),
    },
    "assimilation_runner": {
        "mu": (_mu, ("", "mu")),
        "spinup_T": (_float, ("", "spinup_T")),
        "run_T": (_float, ("", "run_T")),
        "seed": (_int, ("", "seed")),
        "init_amplitude": (_float, ("", "init_amplitude")),
        "sample_every": (_float, ("", "sample_every")),
        "assim_init": (str.strip, ("", "assim_init")),
    },
    "cli_io": {
        "checkpoint_every": (_float, ("io", "checkpoint_every")),
        "gnuplot": (_bool, ("io", "gnuplot")),
        "mu_list": (_float_list, ("io", "mu_list")),
        "h_list": (_float_list, ("io", "h_list")),
        "parallelism": (_int, ("io", "parallelism")),
    },
}

_PART_TYPES = {"grid": Grid, "phys": PhysParams, "spec": InterpolantSpec, "stepper": StepperConfig}


def _line_map(text: str) -> dict[tuple[str, str], int]:
    """``(section, key) -> line``; sections themselves are stored with key ``""``."""
    out: dict[tuple[str, str], int] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, ""), n)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip()), n)
    return out


def _key_in_message(msg: str, keys) -> str | None:
    for k in keys:
        if re.search(rf"\b{re.escape(k)}\b", msg):
            return k
    return None


def load_config_text(text: str, source: str = "<config>") -> tuple[DAConfig, IOSettings]:
    lines = _line_map(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigFileError(source, getattr(exc, "lineno", None), getattr(exc, "option", None), exc.message) from None

    values: dict[str, dict[str, object]] = {"": {}, "io": {}, **{p: {} for p in _PART_TYPES}}
    where: dict[str, int | None] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigFileError(source, lines.get((section, "")), None, f"unknown section [{section}]")
        for key, raw in cp.items(section, raw=True):
            line = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigFileError(source, line, key, f"unknown key in [{section}]")
            parse, (part, attr) = SCHEMA[section][key]
            try:
                values[part][attr] = parse(raw)
            except ValueError as exc:
                raise ConfigFileError(source, line, key, f"malformed value {raw!r} ({exc})") from None
            where[attr] = line

    def fail(keys, exc):
        key = getattr(exc, "key", None) or _key_in_message(str(exc), keys)
        msg = str(exc)
        if key and msg.startswith(f"{key}: "):
            msg = msg[len(key) + 2 :]
        return ConfigFileError(source, where.get(key), key, msg)

    parts = {}
    for part, cls in _PART_TYPES.items():
        try:
            parts[part] = cls(**values[part])
        except (ValueError, TypeError) as exc:
            raise fail(values[part].keys() or _schema_keys(part), exc) from None
    try:
        cfg = DAConfig(**parts, **values[""])
        parts["spec"].check_grid(parts["grid"])
    except (ValueError, TypeError) as exc:
        raise fail(list(values[""]) + ["h", "dt", "mu"], exc) from None
    try:
        io = IOSettings(**values["io"])
    except (ValueError, TypeError) as exc:
        raise fail(values["io"].keys(), exc) from None
    return cfg, io


def _schema_keys(part: str) -> list[str]:
    return [attr for sec in SCHEMA.values() for _, (p, attr) in sec.items() if p == part]


def load_config(path) -> tuple[DAConfig, IOSettings]:
    path = str(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(path, None, None, f"cannot read config file ({exc.strerror})") from None
    return load_config_text(text, source=path)


def parse_config(path) -> DAConfig:
    return load_config(path)[0]


def parse_config_text(text: str, source: str = "<config>") -> DAConfig:
    return load_config_text(text, source)[0]


def serialize(cfg: DAConfig, io: IOSettings | None = None) -> str:
    """Canonical INI text: every key, schema order, floats with 17 significant digits."""
    io = io or IOSettings()
    objs = {"": cfg, "io": io, **{p: getattr(cfg, p) for p in _PART_TYPES}}
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (_, (part, attr)) in keys.items():
            out.append(f"{key} = {_fmt(getattr(objs[part], attr))}")
        out.append("")
    return "\n".join(out)


def normalize(text: str) -> str:
    cfg, io = load_config_text(text)
    return serialize(cfg, io)


def with_overrides(cfg: DAConfig, seed: int | None = None, mu: float | None = None, h: float | None = None) -> DAConfig:
    """Apply command-line overrides, re-running validation."""
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    if mu is not None:
        cfg = replace(cfg, mu=float(mu))
    if h is not None:
        spec = replace(cfg.spec, h=float(h))
        spec.check_grid(cfg.grid)
        cfg = replace(cfg, spec=spec)
    return cfg
