"""Flat ``key = value`` config files with [data], [model] and [train] sections."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    path: str = ""
    sample_rate: str = "unknown"
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def __post_init__(self):
        self.split = tuple(float(v) for v in self.split)


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


SECTIONS = {"data": DataConfig, "model": ModelConfig, "train": TrainConfig}
# filled in from the dataset or the [train] section, never from [model]
DERIVED_MODEL_KEYS = {"num_nodes", "in_dim", "batch_size", "ablation"}


def _parse_value(raw: str, current):
    raw = raw.strip()
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = [p for p in raw.replace(" ", "").split(",") if p]
        kind = type(current[0]) if current else float
        return tuple(kind(p) for p in parts)
    return raw


def _format_value(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def allowed_keys(section: str) -> set[str]:
    keys = {f.name for f in fields(SECTIONS[section])}
    if section == "model":
        keys -= DERIVED_MODEL_KEYS
    return keys


def apply_setting(run: RunConfig, section: str, key: str, raw: str) -> None:
    if section not in SECTIONS:
        raise ConfigError(f"unknown section [{section}]")
    if key not in allowed_keys(section):
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    target = getattr(run, section)
    current = getattr(target, key)
    try:
        value = _parse_value(raw, current)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None
    setattr(target, key, value)


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    """Read a config file (optional) and apply ``section.key=value`` overrides."""
    run = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with Path(path).open() as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        for section in parser.sections():
            for key, raw in parser.items(section):
                apply_setting(run, section, key, raw)
        if run.data.path and not Path(run.data.path).is_absolute():
            run.data.path = str((Path(path).parent / run.data.path).resolve())
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        apply_setting(run, section, key, raw)
    # re-run validation that dataclass __post_init__ would have done
    run.data = DataConfig(**vars(run.data))
    run.model = ModelConfig(**vars(run.model))
    run.train = TrainConfig(**vars(run.train))
    return run


def dump_config(run: RunConfig, path) -> None:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(run, section)
        for key in sorted(allowed_keys(section)):
            lines.append(f"{key} = {_format_value(getattr(obj, key))}")
        lines.append("")
    Path(path).write_text("\n".join(lines))
