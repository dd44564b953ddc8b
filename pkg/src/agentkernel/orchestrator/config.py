"""Kernel configuration loaded from a YAML or JSON document."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from ..router.catalog import load_structured
from .policy import DEFAULT_BLOCKED_PATTERNS

# Uniform reference distribution: one score in the middle of each histogram bin.
DEFAULT_GOLDEN = tuple((i + 0.5) / 10 for i in range(10))


@dataclass
class KernelConfig:
    state_dir: Path = Path(".agentkernel")
    seed: int = 0
    blocked_patterns: tuple = DEFAULT_BLOCKED_PATTERNS
    consensus: str = "weightedMajority"
    default_strategy: str = "cascade"
    pause_timeout: float = 3600.0
    poll_interval: float = 0.1
    retry_attempts: int = 3
    retry_base_delay: float = 0.1
    retry_max_delay: float = 5.0
    breaker_threshold: int = 5
    breaker_reset_seconds: float = 60.0
    simulation_tokens_in: int = 500
    simulation_tokens_out: int = 500
    reward_cost_weight: float = 0.2
    library_threshold: float = 0.7
    max_redesigns: int = 5
    radical_threshold: int = 3
    budget_cap_multiplier: float = 3.0
    store_window: int = 100
    golden_scores: tuple = DEFAULT_GOLDEN
    drift_theta: float = 0.877
    drift_window: int = 50
    quality_min: float = 0.0
    execution_order: str = "declared"
    max_workers: int = 8
    alpha: float = 0.1
    epsilon: float = 0.1

    def __post_init__(self):
        self.state_dir = Path(self.state_dir)
        self.blocked_patterns = tuple(self.blocked_patterns)
        self.golden_scores = tuple(float(x) for x in self.golden_scores)
        if self.pause_timeout <= 0 or self.poll_interval <= 0:
            raise ValueError("pause timeout and poll interval must be positive")
        if self.execution_order not in ("declared", "shuffled", "threads"):
            raise ValueError(f"unknown execution order {self.execution_order!r}")

    @property
    def events_dir(self) -> Path:
        return self.state_dir / "events"

    @property
    def output_dir(self) -> Path:
        return self.state_dir / "output"

    @property
    def qtable_path(self) -> Path:
        return self.state_dir / "qtable.json"

    @property
    def design_store_path(self) -> Path:
        return self.state_dir / "designs.jsonl"

    @property
    def behavior_path(self) -> Path:
        return self.state_dir / "behavior.jsonl"

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = str(value) if isinstance(value, Path) else (list(value) if isinstance(value, tuple) else value)
        return out

    @classmethod
    def from_dict(cls, data: Optional[dict], **overrides) -> "KernelConfig":
        data = dict(data or {})
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


def load_config(path: str | Path | None = None, **overrides) -> KernelConfig:
    if path is None:
        return KernelConfig.from_dict({}, **overrides)
    doc = load_structured(path) or {}
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return KernelConfig.from_dict(doc, **overrides)
