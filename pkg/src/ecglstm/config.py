"""Pipeline configuration: every tunable constant in one tree.

Values are addressed as ``section.key`` (``qrs.threshold_factor``,
``train.batch_size``...) for ``--config`` overrides on the command line.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field

from .net import ModelConfig
from .qrs import QrsConfig
from .segmenter import LabelConfig
from .synth import CorpusConfig
from .train import TrainConfig


@dataclass(frozen=True)
class DspConfig:
    highpass_order: int = 4
    highpass_cutoff: float = 1.0
    denoise_wavelet: str = "db4"
    denoise_levels: int = 4
    resample_up: int = 7
    resample_down: int = 50


@dataclass(frozen=True)
class DetectConfig:
    preferred_lead: int = 1
    min_peak_to_peak: float = 0.05


@dataclass(frozen=True)
class EvalConfig:
    fallback_max_seconds: float = 60.0
    split_ratio: float = 0.9
    split_seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    qrs: QrsConfig = field(default_factory=QrsConfig)
    label: LabelConfig = field(default_factory=LabelConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: CorpusConfig = field(default_factory=CorpusConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def flat(self) -> dict[str, object]:
        out = {}
        for section, values in self.to_dict().items():
            for key, value in values.items():
                out[f"{section}.{key}"] = value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return apply_overrides(cls(), {f"{s}.{k}": v for s, kv in data.items() for k, v in kv.items()})


def _coerce(value, annotation, current):
    if not isinstance(value, str):
        if isinstance(current, tuple):
            return tuple(value)
        return value
    text = value.strip()
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        parts = [p for p in text.strip("()[]").split(",") if p.strip()]
        kind = type(current[0]) if current else float
        return tuple(kind(p) for p in parts)
    return text


def apply_overrides(cfg: PipelineConfig, overrides: dict[str, object]) -> PipelineConfig:
    """Return a copy of *cfg* with ``section.key`` entries replaced."""
    sections = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    for dotted, value in overrides.items():
        try:
            section, key = dotted.split(".", 1)
        except ValueError:
            raise KeyError(f"config key {dotted!r} must look like section.key") from None
        if section not in sections:
            raise KeyError(f"unknown config section {section!r}")
        sub = sections[section]
        names = {f.name: f for f in dataclasses.fields(sub)}
        if key not in names:
            raise KeyError(f"unknown config key {dotted!r}")
        current = getattr(sub, key)
        sections[section] = dataclasses.replace(sub, **{key: _coerce(value, names[key].type, current)})
    return PipelineConfig(**sections)


def parse_overrides(items: typing.Iterable[str]) -> dict[str, str]:
    out = {}
    for item in items:
        for part in item.split():
            if "=" not in part:
                raise ValueError(f"config override {part!r} is not key=value")
            k, v = part.split("=", 1)
            out[k.strip()] = v
    return out
