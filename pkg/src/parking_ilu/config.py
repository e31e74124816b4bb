"""INI experiment configuration with located error messages.

Example::

    [env]
    S = -2
    L = 2

    [intensity]
    model = constant(1.0)

    [experiment]
    policy = ilu
    T = 5000
    replications = 500
    seed = 20240601

    [output]
    directory = out
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ._numerics import Tolerances
from .harness import parse_policy
from .intensity import EnvironmentParams, IntensityModel, SpecSyntaxError, parse_intensity

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Malformed configuration; carries a 1-based line and column when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 source: str = "<config>"):
        self.line, self.column, self.source = line, column, source
        where = source
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


# key -> (type, required, default)
_SCHEMA = {
    "env": {"S": (float, True, None), "L": (float, True, None)},
    "intensity": {"model": (str, True, None)},
    "experiment": {
        "policy": (str, False, "ilu"),
        "T": (int, False, 1000),
        "replications": (int, False, 10),
        "seed": (int, False, 0),
        "threshold": (float, False, 0.0),
        "grid_step": (float, False, 1e-2),
        "paths_per_point": (int, False, 100_000),
        "n_values": ("ints", False, "10, 100, 1000"),
        "mse_replications": (int, False, 2000),
    },
    "tolerances": {
        "quad_tol": (float, False, 1e-10),
        "root_tol": (float, False, 1e-10),
        "tail_tol": (float, False, 1e-12),
        "indifference_tol": (float, False, 1e-6),
    },
    "output": {"directory": (str, False, "out")},
}

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_INTEGER = re.compile(r"^[+-]?\d+$")


@dataclass
class RunConfig:
    env: EnvironmentParams
    model: IntensityModel
    intensity: str
    policy: str
    T: int
    replications: int
    seed: int
    threshold: float
    grid_step: float
    paths_per_point: int
    n_values: list
    mse_replications: int
    tolerances: Tolerances
    directory: str
    source: str = "<config>"
    raw: dict = field(default_factory=dict, repr=False)


def _locate(text: str) -> dict:
    """Map ``(section, key)`` to ``(line, value column)`` by a plain scan."""
    where = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            continue
        m = re.match(r"^(\s*)([^=:]+?)\s*[=:]\s*", line)
        if m and section is not None:
            where[(section, m.group(2).strip())] = (i, m.end() + 1)
    return where


def _convert(kind, value: str, err):
    if kind is str:
        if not value:
            raise err("empty value")
        return value
    if kind is int:
        if not _INTEGER.match(value):
            raise err(f"expected an integer, got {value!r}")
        return int(value)
    if kind is float:
        if not _NUMBER.match(value):
            raise err(f"expected a decimal number (use '.' as decimal point), got {value!r}")
        return float(value)
    parts = [p.strip() for p in value.split(",")]
    if not parts or any(not _INTEGER.match(p) for p in parts):
        raise err(f"expected a comma-separated list of integers, got {value!r}")
    return [int(p) for p in parts]


def parse_config(text: str, source: str = "<config>", overrides: Sequence[str] = ()) -> RunConfig:
    """Parse and validate a configuration document.

    ``overrides`` are ``section.key=value`` strings applied after parsing.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("expected a [section] header before any key", e.lineno, 1, source) from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"duplicate section [{e.section}]", e.lineno, 1, source) from None
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"duplicate key {e.option!r} in [{e.section}]", e.lineno, 1, source) from None
    except configparser.ParsingError as e:
        lineno, line = e.errors[0]
        raise ConfigError(f"cannot parse line {line.strip()!r}", lineno, 1, source) from None

    where = _locate(text)
    raw = {s: dict(parser[s]) for s in parser.sections()}
    for item in overrides:
        section, key, value = _split_override(item, source)
        raw.setdefault(section, {})[key] = value
        where[(section, key)] = (None, None)

    def err_at(section, key):
        line, col = where.get((section, key), (None, None))
        return lambda msg: ConfigError(f"[{section}] {key}: {msg}", line, col, source)

    for section, keys in raw.items():
        if section not in _SCHEMA:
            line = _section_line(text, section)
            raise ConfigError(f"unknown section [{section}]", line, 1 if line else None, source)
        for key in keys:
            if key not in _SCHEMA[section]:
                line, col = where.get((section, key), (None, None))
                raise ConfigError(f"unknown key {key!r} in [{section}]", line, 1 if line else None, source)

    values = {}
    for section, keys in _SCHEMA.items():
        for key, (kind, required, default) in keys.items():
            if key in raw.get(section, {}):
                values[key] = _convert(kind, raw[section][key].strip(), err_at(section, key))
            elif required:
                raise ConfigError(f"missing required key {key!r} in [{section}]", _section_line(text, section),
                                  None, source)
            else:
                values[key] = _convert(kind, default, err_at(section, key)) if kind == "ints" else default

    try:
        env = EnvironmentParams(values["S"], values["L"])
    except ValueError as e:
        raise ConfigError(str(e), *where.get(("env", "S"), (None, None)), source) from None
    try:
        model = parse_intensity(values["model"], env)
    except SpecSyntaxError as e:
        line, col = where.get(("intensity", "model"), (None, None))
        if col is not None and e.column is not None:
            col += e.column - 1
        raise ConfigError(str(e), line, col, source) from None
    except ValueError as e:
        raise ConfigError(str(e), *where.get(("intensity", "model"), (None, None)), source) from None
    try:
        tol = Tolerances(**{k: values[k] for k in _SCHEMA["tolerances"]})
    except ValueError as e:
        raise ConfigError(str(e), source=source) from None

    checks = [
        ("experiment", "policy", lambda: parse_policy(values["policy"])),
        ("experiment", "T", lambda: _positive(values["T"])),
        ("experiment", "replications", lambda: _positive(values["replications"])),
        ("experiment", "paths_per_point", lambda: _positive(values["paths_per_point"])),
        ("experiment", "mse_replications", lambda: _positive(values["mse_replications"])),
        ("experiment", "grid_step", lambda: _positive(values["grid_step"])),
        ("experiment", "threshold", lambda: _in_street(values["threshold"], env)),
        ("experiment", "n_values", lambda: _ascending(values["n_values"])),
        ("experiment", "seed", lambda: _seed(values["seed"])),
    ]
    for section, key, check in checks:
        try:
            check()
        except ValueError as e:
            raise err_at(section, key)(str(e)) from None
    name, arg = parse_policy(values["policy"])
    if name == "fixed" and not (env.S <= arg <= 0):
        raise err_at("experiment", "policy")(f"fixed threshold {arg} outside [S, 0]")

    return RunConfig(
        env=env, model=model, intensity=values["model"], policy=values["policy"], T=values["T"],
        replications=values["replications"], seed=values["seed"], threshold=values["threshold"],
        grid_step=values["grid_step"], paths_per_point=values["paths_per_point"],
        n_values=values["n_values"], mse_replications=values["mse_replications"],
        tolerances=tol, directory=values["directory"], source=source, raw=raw,
    )


def load_config(path: str, overrides: Sequence[str] = ()) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", source=path) from None
    return parse_config(text, source=path, overrides=overrides)


def _split_override(item: str, source: str):
    m = re.match(r"^\s*([A-Za-z_]+)\.([A-Za-z_]+)\s*=(.*)$", item)
    if not m:
        raise ConfigError(f"bad override {item!r}; expected section.key=value", source="--set")
    return m.group(1), m.group(2), m.group(3).strip()


def _section_line(text: str, section: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{section}]":
            return i
    return None


def _positive(x):
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"must be positive, got {x}")


def _in_street(x, env):
    if not (env.S <= x <= 0):
        raise ValueError(f"must lie in [S, 0] = [{env.S}, 0], got {x}")


def _ascending(ns):
    if any(n < 1 for n in ns) or list(ns) != sorted(set(ns)):
        raise ValueError("must be strictly ascending positive integers")


def _seed(s):
    if not (0 <= s < 2**64):
        raise ValueError("must be a non-negative 64-bit integer")
