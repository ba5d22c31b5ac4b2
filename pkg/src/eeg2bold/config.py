"""Run configuration: one dataclass tree, a flat dotted-key text format,
and a stable content hash.

The on-disk format is UTF-8 lines of `dotted.key = value`; blank lines and
#-comments are ignored. The same dotted keys are accepted via repeated
--set flags. Values are parsed against the dataclass field types: ints,
floats, booleans (true/false), strings, and comma-separated tuples of
numbers. The hash covers every field except out_dir (two runs into
different directories are the same experiment), so artifacts can be
cross-checked against the configuration that produced them.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import get_args, get_origin

from .datasets import SynthConfig
from .errors import ConfigError
from .model import ModelConfig
from .objective import OptimizerConfig


@dataclass
class PrepConfig:
    apply_bandpass: bool = True
    bandpass_low_hz: float = 1.0
    bandpass_high_hz: float = 100.0
    bandpass_order: int = 4
    apply_notch: bool = True
    notch_hz: tuple[float, ...] = (50.0, 100.0, 150.0)
    notch_q: float = 30.0
    rereference: bool = True
    target_fs_hz: float = 100.0
    anti_alias: bool = True
    hrf_delay_s: float = 6.0

    def validate(self) -> "PrepConfig":
        if self.target_fs_hz <= 0:
            raise ConfigError(f"target_fs_hz must be positive, got {self.target_fs_hz}")
        if self.hrf_delay_s < 0:
            raise ConfigError(f"hrf_delay_s must be >= 0, got {self.hrf_delay_s}")
        if self.apply_bandpass and self.bandpass_low_hz >= self.bandpass_high_hz:
            raise ConfigError("bandpass corners must be ascending")
        return self


@dataclass
class SplitConfig:
    train_fraction: float = 0.8

    def validate(self) -> "SplitConfig":
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError(
                f"train_fraction must be in (0, 1], got {self.train_fraction}"
            )
        return self


@dataclass
class TrainConfig:
    epochs: int = 300
    windows_per_epoch: int = 32

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.windows_per_epoch < 1:
            raise ConfigError("windows_per_epoch must be >= 1")
        return self


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimizerConfig = field(default_factory=OptimizerConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    prep: PrepConfig = field(default_factory=PrepConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    out_dir: str = "runs/out"

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.optim.validate()
        self.synth.validate()
        self.prep.validate()
        self.split.validate()
        self.train.validate()
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        return self


_SECTIONS = ("model", "optim", "synth", "prep", "split", "train")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float, str)):
        return str(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    raise ConfigError(f"unserializable config value {value!r}")


def _parse_value(text: str, ftype, key: str):
    text = text.strip()
    origin = get_origin(ftype)
    try:
        if ftype is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(f"expected true/false, got {text!r}")
            return low == "true"
        if ftype is int:
            return int(text)
        if ftype is float:
            return float(text)
        if ftype is str:
            return text
        if origin is tuple:
            elem = get_args(ftype)[0]
            if text == "":
                return ()
            return tuple(_parse_value(part, elem, key) for part in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc
    raise ConfigError(f"unsupported field type for {key}: {ftype}")


def to_flat(config: RunConfig) -> dict[str, str]:
    """Canonical flat key -> string-value view, including defaults."""
    flat: dict[str, str] = {}
    for section in _SECTIONS:
        sub = getattr(config, section)
        for f in dataclasses.fields(sub):
            flat[f"{section}.{f.name}"] = _format_value(getattr(sub, f.name))
    flat["seed"] = _format_value(config.seed)
    flat["out_dir"] = config.out_dir
    return flat


def _field_types(config: RunConfig) -> dict[str, tuple]:
    """key -> (owner object, field name, declared type)."""
    out: dict[str, tuple] = {}
    for section in _SECTIONS:
        sub = getattr(config, section)
        hints = {f.name: f.type for f in dataclasses.fields(sub)}
        for name, ftype in hints.items():
            out[f"{section}.{name}"] = (section, name, ftype)
    out["seed"] = (None, "seed", int)
    out["out_dir"] = (None, "out_dir", str)
    return out


def apply_overrides(config: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """New RunConfig with the given dotted-key string values applied."""
    types = _field_types(config)
    values: dict[str, dict] = {s: {} for s in _SECTIONS}
    top: dict[str, object] = {}
    for key, text in overrides.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        section, name, ftype = types[key]
        # dataclass field types arrive as strings under future annotations;
        # resolve the common ones by eval-free lookup
        ftype = _resolve_type(ftype)
        parsed = _parse_value(text, ftype, key)
        if section is None:
            top[name] = parsed
        else:
            values[section][name] = parsed
    new_sections = {}
    for section in _SECTIONS:
        sub = getattr(config, section)
        new_sections[section] = dataclasses.replace(sub, **values[section]) \
            if values[section] else sub
    return RunConfig(
        **new_sections,
        seed=top.get("seed", config.seed),
        out_dir=top.get("out_dir", config.out_dir),
    )


_TYPE_NAMES = {
    "int": int, "float": float, "bool": bool, "str": str,
    "tuple[float, ...]": tuple[float, ...],
    "tuple[int, ...]": tuple[int, ...],
}


def _resolve_type(ftype):
    if isinstance(ftype, str):
        if ftype not in _TYPE_NAMES:
            raise ConfigError(f"unsupported annotated type {ftype!r}")
        return _TYPE_NAMES[ftype]
    return ftype


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """key = value lines -> override dict; comments (#) and blanks skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_config_file(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), source=str(p))


def config_hash(config: RunConfig) -> str:
    """sha256 over the canonical flat serialization, excluding out_dir."""
    flat = to_flat(config)
    flat.pop("out_dir", None)
    blob = "\n".join(f"{k}={flat[k]}" for k in sorted(flat))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_config_file(config: RunConfig, path) -> None:
    flat = to_flat(config)
    lines = [f"{k} = {flat[k]}" for k in sorted(flat)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
