"""Epsilon-greedy contextual bandit that picks a routing strategy per task state.

With discount fixed at zero the Q-update reduces to
``Q <- Q + alpha * (reward - Q)``; the applied step is clamped by the
trilemma guard.
"""

from __future__ import annotations

import json
import random
import threading
from pathlib import Path
from typing import Callable, Optional, Sequence

from ..core.modes import STRATEGY_ORDER
from ..guards.trilemma import clamp_q_delta

PERSIST_EVERY = 10


def model_count_bucket(n: int) -> str:
    if n < 0:
        raise ValueError("model count must be >= 0")
    if n <= 3:
        return "small"
    if n <= 10:
        return "medium"
    return "large"


def budget_class(budget: float) -> str:
    if not budget > 0:
        raise ValueError("budget must be > 0")
    if budget < 0.01:
        return "micro"
    if budget < 0.10:
        return "small"
    if budget < 1:
        return "standard"
    return "large"


def encode_state(task_type, model_count: int, budget: float) -> str:
    token = getattr(task_type, "value", task_type)
    return f"{token}_{model_count_bucket(model_count)}_{budget_class(budget)}"


class QTable:
    """State -> strategy -> value table with optional snapshot persistence."""

    gamma = 0.0

    def __init__(self, alpha: float = 0.1, epsilon: float = 0.1, snapshot_path: str | Path | None = None,
                 on_persist: Optional[Callable[["QTable"], None]] = None, q_delta_cap: float = 0.15):
        self.alpha = alpha
        self.epsilon = epsilon
        self.q_delta_cap = q_delta_cap
        self.values: dict[str, dict[str, float]] = {}
        self.episode_count = 0
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.on_persist = on_persist
        self.last_delta = 0.0
        self._lock = threading.Lock()

    def q(self, state: str, strategy: str) -> float:
        return self.values.get(state, {}).get(strategy, 0.0)

    def select(self, state: str, allowed: Sequence[str], rng: random.Random) -> str:
        if not allowed:
            raise ValueError("allowed strategies must be non-empty")
        allowed = [s for s in STRATEGY_ORDER if s in allowed] + [s for s in allowed if s not in STRATEGY_ORDER]
        if rng.random() < self.epsilon:
            return allowed[rng.randrange(len(allowed))]
        return self.greedy(state, allowed)

    def greedy(self, state: str, allowed: Sequence[str]) -> str:
        best = allowed[0]
        for s in allowed[1:]:
            if self.q(state, s) > self.q(state, best):
                best = s
        return best

    def update(self, state: str, strategy: str, reward: float) -> float:
        if not 0 <= reward <= 1:
            raise ValueError("reward must be in [0, 1]")
        with self._lock:
            current = self.q(state, strategy)
            delta = clamp_q_delta(self.alpha * (reward - current), self.q_delta_cap)
            self.values.setdefault(state, {})[strategy] = current + delta
            self.last_delta = delta
            self.episode_count += 1
            persist = self.episode_count % PERSIST_EVERY == 0
            value = current + delta
        if persist:
            self.persist()
        return value

    def persist(self) -> None:
        if self.snapshot_path is not None:
            self.snapshot_path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.snapshot_path.with_suffix(".tmp")
            tmp.write_text(json.dumps(self.snapshot(), sort_keys=True, indent=1))
            tmp.replace(self.snapshot_path)
        if self.on_persist is not None:
            self.on_persist(self)

    def snapshot(self) -> dict:
        return {"alpha": self.alpha, "epsilon": self.epsilon, "episodes": self.episode_count,
                "values": self.values}

    @classmethod
    def load(cls, path: str | Path, **kw) -> "QTable":
        data = json.loads(Path(path).read_text())
        table = cls(alpha=data["alpha"], epsilon=data["epsilon"], snapshot_path=path, **kw)
        table.values = {s: dict(v) for s, v in data["values"].items()}
        table.episode_count = data["episodes"]
        return table
