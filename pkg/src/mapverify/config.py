"""Evaluation configuration shared by the predicate interpreter and the engine."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    samples_per_centerline: int = 64
    overlap_radius: float = 1.5
    # Threshold defaults used when rendering the shipped ruleset.
    max_grade: float = 0.15
    max_step: float = 0.05
    stack_eps: float = 1.0
    min_clearance: float = 4.5

    def __post_init__(self) -> None:
        if isinstance(self.samples_per_centerline, bool) or not isinstance(self.samples_per_centerline, int):
            raise ConfigError("samples_per_centerline must be an integer")
        if self.samples_per_centerline < 2:
            raise ConfigError("samples_per_centerline must be >= 2")
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{f.name} must be positive and finite, got {value!r}")
        if not self.stack_eps < self.min_clearance:
            raise ConfigError("stack_eps must be smaller than min_clearance")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> EvalConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> EvalConfig:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)
