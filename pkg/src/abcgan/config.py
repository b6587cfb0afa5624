"""Flat key/value config files.

One INI section per config block::

    [run]
    name = univariate_normal
    method = abcgan
    posterior_window = 500

    [train]
    lr = 0.001
    minibatch = 50

    [network]
    generator_hidden = (16,)

Values are Python literals (numbers, tuples, None, quoted or bare strings).
Unlisted keys keep the experiment defaults.  Overrides use dotted keys,
``train.lr=0.01``; keys of the ``run`` section may omit the prefix.
"""
from __future__ import annotations

import ast
import configparser
import dataclasses
from pathlib import Path

from .experiments import ConfigError, ExperimentConfig, default_config

SECTIONS = ("data", "network", "train", "baseline")
RUN_KEYS = ("name", "method", "posterior_window", "metrics")


def parse_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


def _coerce(current, value, key):
    if isinstance(current, tuple) and not isinstance(value, tuple):
        value = tuple(value) if isinstance(value, list) else (value,)
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if isinstance(current, tuple) and value and all(isinstance(v, (int, float)) for v in value) \
            and current and isinstance(current[0], float):
        value = tuple(float(v) for v in value)
    if current is not None and value is not None and not isinstance(value, type(current)) \
            and not (isinstance(current, float) and isinstance(value, float)):
        raise ConfigError(f"{key}: expected {type(current).__name__}, got {value!r}")
    return value


def set_key(cfg: ExperimentConfig, dotted: str, value) -> None:
    section, _, key = dotted.rpartition(".")
    if section in ("", "run"):
        if key not in RUN_KEYS or key == "name":
            raise ConfigError(f"unknown or read-only key {dotted!r}")
        setattr(cfg, key, _coerce(getattr(cfg, key), value, dotted))
        return
    if section not in SECTIONS:
        raise ConfigError(f"unknown section {section!r} in {dotted!r}")
    block = getattr(cfg, section)
    names = {f.name for f in dataclasses.fields(block)}
    if key not in names:
        raise ConfigError(f"unknown key {dotted!r}; {section} has {sorted(names)}")
    value = _coerce(getattr(block, key), value, dotted)
    try:
        setattr(cfg, section, dataclasses.replace(block, **{key: value}))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{dotted}: {err}") from None


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """Apply ``key=value`` strings or a {key: value} mapping."""
    items = pairs.items() if isinstance(pairs, dict) else (p.split("=", 1) for p in pairs)
    for key, value in items:
        set_key(cfg, key.strip(), parse_value(value) if isinstance(value, str) else value)
    return cfg


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    name = parser.get("run", "name", fallback=None) if parser.has_section("run") else None
    name = experiment or name
    if name is None:
        raise ConfigError("config names no experiment ([run] name = ...)")
    if experiment and name != experiment and parser.get("run", "name", fallback=experiment) != experiment:
        raise ConfigError(f"config is for {parser.get('run', 'name')!r}, not {experiment!r}")
    cfg = default_config(name)
    for section in parser.sections():
        if section != "run" and section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, text in parser.items(section):
            if section == "run" and key == "name":
                continue
            set_key(cfg, f"{section}.{key}", parse_value(text))
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {k: getattr(cfg, k) for k in RUN_KEYS}
    for section in SECTIONS:
        out[section] = dataclasses.asdict(getattr(cfg, section))
    return out


def dump_config(cfg: ExperimentConfig, path) -> Path:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {k: repr(getattr(cfg, k)) if k != "name" else cfg.name for k in RUN_KEYS}
    for section in SECTIONS:
        parser[section] = {k: repr(v) for k, v in dataclasses.asdict(getattr(cfg, section)).items()}
    path = Path(path)
    with path.open("w") as fh:
        parser.write(fh)
    return path
