"""Pipeline configuration: one JSON file, strict keys, env-var secrets.

The config never holds credentials. The judge API key is read from
JUDGE_API_KEY and the generation backend token from BACKEND_AUTH_TOKEN
at the point of use.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigInvalid, FileUnreadable

BACKEND_MODES = ("mock", "replay", "http")
ADAPTER_LAYOUTS = ("per-modality", "shared")
MODALITY_SLOTS = ("image", "video", "text")


@dataclass
class PathsSettings:
    corpora_dir: str = "corpora"
    output_dir: str = "out"
    cache_dir: str = "out/judge_cache"


@dataclass
class JudgeSettings:
    model: str = "gpt-3.5-turbo"
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    temperature: float = 0.0
    parallelism: int = 4
    retry_cap: int = 3
    script_path: str | None = None


@dataclass
class GenerationSettings:
    model: str | None = None
    temperature: float = 0.7
    parallelism: int = 2
    max_attempts: int | None = None


@dataclass
class AdapterSlotSettings:
    rank: int = 4
    alpha: float = 8.0
    seed: int = 0


@dataclass
class LoraSettings:
    """Toy-dimension adapter settings.

    Either one named adapter per modality pathway (layout
    "per-modality", slots image/video/text) or a single adapter shared
    across modalities (layout "shared", slot "shared"). Missing slots
    take the defaults.
    """

    d_in: int = 16
    d_out: int = 16
    layout: str = "per-modality"
    adapters: dict[str, AdapterSlotSettings] = field(default_factory=dict)
    learning_rate: float = 0.05
    steps: int = 500
    batch_size: int = 16

    def slot_names(self) -> tuple[str, ...]:
        return MODALITY_SLOTS if self.layout == "per-modality" else ("shared",)

    def slot(self, name: str) -> AdapterSlotSettings:
        if name not in self.adapters:
            raise ConfigInvalid(
                f"no adapter slot '{name}' under layout '{self.layout}' "
                f"(have: {', '.join(self.adapters)})"
            )
        return self.adapters[name]


@dataclass
class BackendSettings:
    mode: str = "mock"
    url: str | None = None
    replay_path: str | None = None
    template: str = "RECIPE FOR {stem}"
    parallelism: int = 4


@dataclass
class PipelineConfig:
    paths: PathsSettings = field(default_factory=PathsSettings)
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    lora: LoraSettings = field(default_factory=LoraSettings)
    backend: BackendSettings = field(default_factory=BackendSettings)


def default_config() -> PipelineConfig:
    config = PipelineConfig()
    _finalize_lora(config.lora)
    return config


_SECTION_TYPES = {
    "paths": PathsSettings,
    "judge": JudgeSettings,
    "generation": GenerationSettings,
    "lora": LoraSettings,
    "backend": BackendSettings,
}


def _build_section(name: str, cls: type, obj: Any) -> Any:
    if not isinstance(obj, dict):
        raise ConfigInvalid(f"section '{name}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigInvalid(f"unknown keys in section '{name}': {', '.join(unknown)}")
    return cls(**obj)


def _build_lora(obj: Any) -> LoraSettings:
    if not isinstance(obj, dict):
        raise ConfigInvalid("section 'lora' must be an object")
    known = {f.name for f in dataclasses.fields(LoraSettings)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigInvalid(f"unknown keys in section 'lora': {', '.join(unknown)}")
    raw_adapters = obj.get("adapters", {})
    if not isinstance(raw_adapters, dict):
        raise ConfigInvalid("lora.adapters must be an object of named slots")
    slots = {
        name: _build_section(f"lora.adapters.{name}", AdapterSlotSettings, slot_obj)
        for name, slot_obj in raw_adapters.items()
    }
    flat = {key: value for key, value in obj.items() if key != "adapters"}
    return LoraSettings(adapters=slots, **flat)


def _finalize_lora(settings: LoraSettings) -> None:
    """Validate the layout, then fill missing slots with defaults."""
    if settings.layout not in ADAPTER_LAYOUTS:
        raise ConfigInvalid(
            f"lora.layout must be one of {', '.join(ADAPTER_LAYOUTS)}, "
            f"got {settings.layout!r}"
        )
    allowed = settings.slot_names()
    unknown = sorted(set(settings.adapters) - set(allowed))
    if unknown:
        raise ConfigInvalid(
            f"adapter slots not valid under layout '{settings.layout}': "
            f"{', '.join(unknown)} (allowed: {', '.join(allowed)})"
        )
    for name in allowed:
        settings.adapters.setdefault(name, AdapterSlotSettings())


def config_from_obj(obj: Any) -> PipelineConfig:
    """Build a PipelineConfig from a parsed JSON object, strictly."""
    if not isinstance(obj, dict):
        raise ConfigInvalid("config root must be a JSON object")
    unknown = sorted(set(obj) - set(_SECTION_TYPES))
    if unknown:
        raise ConfigInvalid(f"unknown config sections: {', '.join(unknown)}")
    sections = {
        name: _build_lora(obj[name]) if name == "lora" else _build_section(name, cls, obj[name])
        for name, cls in _SECTION_TYPES.items()
        if name in obj
    }
    config = PipelineConfig(**sections)
    _finalize_lora(config.lora)
    _check(config)
    return config


def _check(config: PipelineConfig) -> None:
    for label, value in (
        ("judge.parallelism", config.judge.parallelism),
        ("generation.parallelism", config.generation.parallelism),
        ("backend.parallelism", config.backend.parallelism),
    ):
        if not isinstance(value, int) or value < 1:
            raise ConfigInvalid(f"{label} must be an integer >= 1, got {value!r}")
    if config.judge.retry_cap < 0:
        raise ConfigInvalid("judge.retry_cap must be >= 0")
    if config.backend.mode not in BACKEND_MODES:
        raise ConfigInvalid(
            f"backend.mode must be one of {', '.join(BACKEND_MODES)}, "
            f"got {config.backend.mode!r}"
        )
    if config.backend.mode == "http" and not config.backend.url:
        raise ConfigInvalid("backend.mode 'http' requires backend.url")
    if config.backend.mode == "replay" and not config.backend.replay_path:
        raise ConfigInvalid("backend.mode 'replay' requires backend.replay_path")
    for name, slot in config.lora.adapters.items():
        if not isinstance(slot.rank, int) or slot.rank < 1:
            raise ConfigInvalid(f"lora.adapters.{name}.rank must be an integer >= 1")
        if slot.alpha <= 0:
            raise ConfigInvalid(f"lora.adapters.{name}.alpha must be > 0")
    if config.lora.steps < 0:
        raise ConfigInvalid("lora.steps must be >= 0")
    if config.lora.batch_size < 1:
        raise ConfigInvalid("lora.batch_size must be >= 1")


def load_config(path: str | Path) -> PipelineConfig:
    """Read a JSON config file. Raises ConfigInvalid on any bad content."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_obj(obj)
