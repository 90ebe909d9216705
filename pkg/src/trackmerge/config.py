"""JSON run configuration: one section per component plus a global seed."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Optional

from .dataio.augment import AugmentConfig
from .dataio.synth import SynthConfig
from .hierarchy import HierarchyConfig
from .mpnn import MpnnConfig, TrainConfig
from .stage1 import Stage1Config
from .tgraph import GraphConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PostprocessConfig:
    interpolate: bool = True
    max_gap: int = 20

    def __post_init__(self):
        if self.max_gap < 0:
            raise ValueError(f"max_gap must be >= 0, got {self.max_gap}")


SECTIONS: dict[str, type] = {
    "stage1": Stage1Config,
    "graph": GraphConfig,
    "model": MpnnConfig,
    "train": TrainConfig,
    "hierarchy": HierarchyConfig,
    "postprocess": PostprocessConfig,
    "synth": SynthConfig,
    "augment": AugmentConfig,
}

# Nested motion-noise objects are fixed at their defaults and not exposed.
_HIDDEN = {"noise"}


def _keys(cls) -> list[dataclasses.Field]:
    return [f for f in fields(cls) if f.name not in _HIDDEN]


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class RunConfig:
    stage1: Stage1Config = field(default_factory=Stage1Config)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: MpnnConfig = field(default_factory=MpnnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(data) - set(SECTIONS) - {"seed"})
        if unknown:
            raise ConfigError(f"unknown config key: {unknown[0]}")
        kwargs: dict[str, Any] = {}
        for name, section_cls in SECTIONS.items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"config section {name} must be an object")
            allowed = {f.name: f for f in _keys(section_cls)}
            for key in values:
                if key not in allowed:
                    raise ConfigError(f"unknown config key: {name}.{key}")
            converted = {
                k: tuple(v) if isinstance(v, list) else v for k, v in values.items()
            }
            try:
                kwargs[name] = section_cls(**converted)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid config section {name}: {exc}") from exc
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        return cls(seed=seed, **kwargs)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for name in SECTIONS:
            section = getattr(self, name)
            out[name] = {f.name: _plain(getattr(section, f.name)) for f in _keys(type(section))}
        out["seed"] = self.seed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def parse_override(text: str) -> tuple[list[str], Any]:
    """``section.key=value``; the value is JSON when it parses, else a plain string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    path, raw = text.split("=", 1)
    parts = path.strip().split(".")
    if not all(parts) or len(parts) > 2:
        raise ConfigError(f"override key {path!r} must be 'seed' or 'section.key'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts, value


def load_config(path: Optional[str | Path] = None, overrides: Iterable[str] = ()) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: malformed JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path}: top level must be an object")
    for text in overrides:
        parts, value = parse_override(text)
        if len(parts) == 1:
            data[parts[0]] = value
        else:
            section = data.setdefault(parts[0], {})
            if not isinstance(section, dict):
                raise ConfigError(f"config section {parts[0]} must be an object")
            section[parts[1]] = value
    return RunConfig.from_dict(data)


def describe_defaults() -> str:
    """Every configurable key with its default, for ``--help``."""
    lines = []
    for name, values in RunConfig().to_dict().items():
        if isinstance(values, dict):
            for key, value in values.items():
                lines.append(f"  {name}.{key} = {json.dumps(value)}")
        else:
            lines.append(f"  {name} = {json.dumps(values)}")
    return "\n".join(lines)
