"""Run configuration: one INI document with a section per component.

Precedence is flags > file > built-in defaults. ``[run] seed`` is the single
source of randomness and is copied into every component that takes a seed.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .encoders import TextConfig, VitConfig
from .evaluator import InferenceConfig
from .model import ModelConfig
from .numcore.nn import ConfigError
from .preprocess import DataConfig
from .pretrain import PretrainConfig
from .synthdata import SynthConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class HeadConfig:
    modality: str = "flow"
    temporal_layers: int = 2
    head_heads: int = 4
    fusion_mode: str = "cross-attention"


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    jobs: int = 1
    backbone: str = ""  # empty: pretrain one and cache it next to the run


SECTIONS: dict[str, type] = {
    "run": RunSection,
    "synth": SynthConfig,
    "data": DataConfig,
    "vit": VitConfig,
    "text": TextConfig,
    "model": HeadConfig,
    "pretrain": PretrainConfig,
    "train": TrainConfig,
    "inference": InferenceConfig,
}

# seeds are owned by [run]; these sections do not accept their own
_SEEDED = ("synth", "train")


def _field_types(cls) -> dict[str, typing.Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _parse(value: str, kind, where: str):
    try:
        if kind is bool:
            low = value.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind is str:
            return value.strip()
        if typing.get_origin(kind) is tuple:
            return tuple(int(v) for v in value.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r} as {getattr(kind, '__name__', kind)}") from None
    raise ConfigError(f"{where}: unsupported type {kind}")


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build(cls, values: dict, where: str):
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{where}] {e}") from None


@dataclass(frozen=True)
class RunConfig:
    sections: dict[str, typing.Any] = field(default_factory=lambda: {k: c() for k, c in SECTIONS.items()})

    def __getattr__(self, name):
        sections = self.__dict__.get("sections", {})
        if name in sections:
            return sections[name]
        raise AttributeError(name)

    @property
    def seed(self) -> int:
        return self.sections["run"].seed

    @property
    def model_config(self) -> ModelConfig:
        h = self.sections["model"]
        return ModelConfig(vit=self.sections["vit"], text=self.sections["text"], **dataclasses.asdict(h))

    # parsing

    @classmethod
    def from_text(cls, text: str, overrides: dict[str, dict[str, str]] | None = None) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e.message.splitlines()[0]}") from None
        raw = {s: dict(parser[s]) for s in parser.sections()}
        for sec, kv in (overrides or {}).items():
            raw.setdefault(sec, {}).update({k: str(v) for k, v in kv.items()})
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        built = {}
        for name, kind in SECTIONS.items():
            types = _field_types(kind)
            given = raw.get(name, {})
            bad = set(given) - set(types)
            if name in _SEEDED:
                bad |= set(given) & {"seed"}
            if bad:
                raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(bad))}")
            values = {k: _parse(v, types[k], f"[{name}] {k}") for k, v in given.items()}
            built[name] = _build(kind, values, name)
        seed = built["run"].seed
        for name in _SEEDED:
            built[name] = dataclasses.replace(built[name], seed=seed)
        out = cls(built)
        out.model_config  # cross-section checks (dims, heads)
        return out

    @classmethod
    def load(cls, path=None, overrides=None) -> "RunConfig":
        text = Path(path).read_text() if path else ""
        return cls.from_text(text, overrides)

    def replace(self, section: str, **changes) -> "RunConfig":
        text = self.to_text()
        return RunConfig.from_text(text, {section: {k: _format(v) for k, v in changes.items()}})

    def to_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name, obj in self.sections.items():
            parser[name] = {}
            for f in dataclasses.fields(obj):
                if name in _SEEDED and f.name == "seed":
                    continue
                parser[name][f.name] = _format(getattr(obj, f.name))
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_text())
