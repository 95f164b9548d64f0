"""Run configuration: one JSON file with model/train/triage/paths sections.

Example::

    {"model": {"freq_ratio": 0.75, "enable_ffrp": true},
     "train": {"max_iterations": 200, "learning_rate": 1e-4},
     "paths": {"manifest": "data/manifest.jsonl", "out": "runs/a"}}

Command-line overrides use dotted keys: ``--set model.freq_ratio=0.6``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model.network import MfptConfig
from .training import TrainConfig
from .triage import TriagePolicy

PATH_KEYS = ("manifest", "out", "checkpoint", "probmaps")
SECTIONS = ("model", "train", "triage", "paths")


@dataclass
class RunConfig:
    model: MfptConfig = field(default_factory=MfptConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    triage: TriagePolicy = field(default_factory=TriagePolicy)
    paths: dict = field(default_factory=dict)


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        section, dot, name = key.strip().partition(".")
        if not dot or not name:
            raise ConfigError(f"override key {key!r} must be section.key")
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        raw.setdefault(section, {})[name] = parse_value(value)
    return raw


def _build(cls, section, values):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown {section} key(s): {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {section} config: {e}") from e


def build_config(raw: dict) -> RunConfig:
    """Validate every section; unknown keys are rejected by name."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    paths = dict(raw.get("paths", {}))
    bad = sorted(set(paths) - set(PATH_KEYS))
    if bad:
        raise ConfigError(f"unknown paths key(s): {', '.join(bad)}")
    model = _build(MfptConfig, "model", raw.get("model", {}))
    train = _build(TrainConfig, "train", raw.get("train", {}))
    triage = _build(TriagePolicy, "triage", raw.get("triage", {}))
    try:
        model.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid model config: {e}") from e
    train.validate()
    return RunConfig(model, train, triage, paths)


def load_config(path=None, overrides=()) -> RunConfig:
    raw = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: invalid JSON ({e.msg})") from e
    return build_config(apply_overrides(raw, overrides))
