"""YAML run configuration: sections world, room, world_model, dqn, curiosity, harness, io.

Unknown sections or keys are rejected with the offending line number. Every
default is overridable from the file or with ``--set section.key=value``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from awml.controller import DQNConfig
from awml.curiosity import CuriosityConfig
from awml.env.geometry import RoomConfig
from awml.env.room import WorldSpec
from awml.errors import ConfigError
from awml.harness.run import HarnessConfig, RunConfig
from awml.worldmodel import WMConfig


@dataclass
class IOConfig:
    out: str = "runs"
    events: bool = True
    checkpoints: bool = True


@dataclass
class Config:
    run: RunConfig = field(default_factory=RunConfig)
    io: IOConfig = field(default_factory=IOConfig)


# section name -> (attribute path on Config, dataclass, keys excluded from the file schema)
SECTIONS = {
    "world": (("run", "world"), WorldSpec, {"seed"}),
    "room": (("run", "room"), RoomConfig, set()),
    "world_model": (("run", "wm"), WMConfig, set()),
    "dqn": (("run", "dqn"), DQNConfig, set()),
    "curiosity": (("run", "curiosity"), CuriosityConfig, set()),
    "harness": (("run", "harness"), HarnessConfig, set()),
    "io": (("io",), IOConfig, set()),
}


def _keys(cls, excluded) -> list[str]:
    return [f.name for f in dataclasses.fields(cls) if f.name not in excluded]


def _coerce(value: Any, default: Any, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(f"{where}: expected a list of {len(default)} values, got {value!r}")
        return tuple(_coerce(v, d, where) for v, d in zip(value, default))
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping, got {value!r}")
        return dict(value)
    return value


def _line_map(text: str) -> dict[str, int]:
    """'section.key' -> 1-based line number in the source document."""
    out: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if not isinstance(root, yaml.MappingNode):
        return out
    for knode, vnode in root.value:
        out[str(knode.value)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                out[f"{knode.value}.{k2.value}"] = k2.start_mark.line + 1
    return out


def _at(name: str, lines: dict[str, int]) -> str:
    return f"{name} (line {lines[name]})" if name in lines else name


def build(doc: dict | None, lines: dict[str, int] | None = None) -> Config:
    """Config from a parsed document; missing keys take their defaults."""
    lines = lines or {}
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping of sections")
    cfg = Config()
    for section, body in doc.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {_at(str(section), lines)}; expected one of {sorted(SECTIONS)}")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section {_at(section, lines)} must be a mapping")
        path, cls, excluded = SECTIONS[section]
        current = _get(cfg, path)
        allowed = _keys(cls, excluded)
        updates = {}
        for key, value in body.items():
            name = f"{section}.{key}"
            if key not in allowed:
                raise ConfigError(f"unknown key {_at(name, lines)}; allowed: {allowed}")
            updates[key] = _coerce(value, getattr(current, key), _at(name, lines))
        _set(cfg, path, dataclasses.replace(current, **updates))
    return cfg


def _get(obj, path):
    for p in path:
        obj = getattr(obj, p)
    return obj


def _set(obj, path, value):
    parent = _get(obj, path[:-1])
    setattr(parent, path[-1], value)


def parse_override(item: str) -> tuple[str, str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    lhs, rhs = item.split("=", 1)
    if lhs.count(".") != 1:
        raise ConfigError(f"override key {lhs!r} must look like section.key")
    section, key = lhs.split(".")
    try:
        value = yaml.safe_load(rhs) if rhs.strip() else ""
    except yaml.YAMLError as e:
        raise ConfigError(f"override {item!r}: {e}") from None
    return section, key, value


def load_text(text: str, overrides: list[str] = ()) -> Config:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from None
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping of sections")
    for item in overrides:
        section, key, value = parse_override(item)
        doc.setdefault(section, {})
        if doc[section] is None:
            doc[section] = {}
        if not isinstance(doc[section], dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        doc[section][key] = value
    cfg = build(doc, _line_map(text))
    cfg.run.validate()
    return cfg


def load(path: str | Path, overrides: list[str] = ()) -> Config:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e.strerror}") from None
    return load_text(text, overrides)


def to_dict(cfg: Config) -> dict:
    doc = {}
    for section, (path, cls, excluded) in SECTIONS.items():
        obj = _get(cfg, path)
        body = {}
        for key in _keys(cls, excluded):
            v = getattr(obj, key)
            body[key] = list(v) if isinstance(v, tuple) else v
        doc[section] = body
    return doc


def dump(cfg: Config) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=False)
