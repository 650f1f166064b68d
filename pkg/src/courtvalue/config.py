"""Plain ``key = value`` config files.

Blank lines and ``#`` comments are ignored. Keys are the field names of
:class:`~courtvalue.synthgen.GeneratorConfig` and
:class:`~courtvalue.training.TrainConfig` plus a few evaluation keys; a
single ``seed`` feeds every random substream. Tuple fields take
comma-separated values.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from courtvalue.synthgen import GeneratorConfig
from courtvalue.training import TrainConfig

EVAL_DEFAULTS = {
    "fractions": (0.75, 0.10, 0.15),
    "eval_mode": "sampled",
    "count": 512,
    "epsilon": 21,
    "alpha": 0.001,
    "beta": 1.02,
    "nu_field_goal": 0.23,
    "nu_shooting_foul": 0.58,
    "nu_non_shooting_foul": -0.50,
}


class ConfigError(ValueError):
    pass


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{k}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{k}: empty key")
        values[key] = value
    return values


def load_config(path) -> dict[str, str]:
    if path is None:
        return {}
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def _convert(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v.strip()) for v in raw.split(","))
        return raw
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {type(default).__name__}") from None


def _known(cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING and isinstance(f.default, (bool, int, float, str, tuple)):
            out[f.name] = f.default
    return out


GENERATOR_KEYS = _known(GeneratorConfig)
TRAIN_KEYS = _known(TrainConfig)
KNOWN_KEYS = set(GENERATOR_KEYS) | set(TRAIN_KEYS) | set(EVAL_DEFAULTS)


def check_keys(values: dict[str, str]) -> None:
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def build(cls, values: dict[str, str], **overrides):
    known = _known(cls)
    kwargs = {k: _convert(k, v, known[k]) for k, v in values.items() if k in known}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def eval_setting(values: dict[str, str], key: str):
    default = EVAL_DEFAULTS[key]
    return _convert(key, values[key], default) if key in values else default


def echo(values: dict[str, str], **extra) -> list[str]:
    """``# key=value`` provenance lines, sorted for stable output."""
    merged = dict(values)
    merged.update({k: str(v) for k, v in extra.items() if v is not None})
    return [f"# {k}={merged[k]}" for k in sorted(merged)]
