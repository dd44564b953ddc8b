"""Per-judge score drift measured as Jensen-Shannon divergence against a reference histogram."""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from ..core.events import EventBus

DRIFT_THRESHOLD = 0.877
WINDOW = 50
BINS = 10
SMOOTHING = 1e-6
RECALIBRATE_FRACTION = 0.5


def histogram(scores: Iterable[float], bins: int = BINS, smoothing: float = SMOOTHING) -> list[float]:
    """Uniform bins over [0, 1] with additive smoothing; a score of exactly 1 lands in the top bin."""
    counts = [0.0] * bins
    for s in scores:
        if not 0 <= s <= 1:
            raise ValueError(f"score {s} outside [0, 1]")
        counts[min(int(s * bins), bins - 1)] += 1
    smoothed = [c + smoothing for c in counts]
    total = sum(smoothed)
    return [c / total for c in smoothed]


def kl_bits(p: Sequence[float], q: Sequence[float]) -> float:
    return sum(pi * math.log2(pi / qi) for pi, qi in zip(p, q) if pi > 0)


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    if len(p) != len(q):
        raise ValueError("distributions differ in length")
    m = [(a + b) / 2 for a, b in zip(p, q)]
    return 0.5 * kl_bits(p, m) + 0.5 * kl_bits(q, m)


class DriftOutcome(str, Enum):
    OK = "ok"
    SUSPENDED = "suspended"
    RECALIBRATE = "recalibrate"


@dataclass
class DriftState:
    judge_id: str
    reference: list[float]
    window: deque = field(default_factory=lambda: deque(maxlen=WINDOW))
    suspended: bool = False
    last_jsd: Optional[float] = None


class DriftMonitor:
    """Tracks every judge on a panel and triggers recalibration when half of them drift."""

    def __init__(self, golden: Sequence[float], theta: float = DRIFT_THRESHOLD, window: int = WINDOW,
                 bins: int = BINS, bus: Optional[EventBus] = None, task_id: str = "system"):
        if not golden:
            raise ValueError("a golden score set is required")
        self.golden = list(golden)
        self.theta = theta
        self.window = window
        self.bins = bins
        self.bus = bus
        self.task_id = task_id
        self.states: dict[str, DriftState] = {}
        self.recalibrations = 0
        self._lock = threading.Lock()

    def register(self, judge_id: str, reference_scores: Optional[Sequence[float]] = None) -> DriftState:
        with self._lock:
            ref = histogram(reference_scores if reference_scores is not None else self.golden, self.bins)
            state = DriftState(judge_id, ref, deque(maxlen=self.window))
            self.states[judge_id] = state
            return state

    def is_suspended(self, judge_id: str) -> bool:
        state = self.states.get(judge_id)
        return bool(state and state.suspended)

    def check(self, judge_id: str, score: float) -> DriftOutcome:
        with self._lock:
            state = self.states.get(judge_id)
            if state is None:
                raise KeyError(f"judge {judge_id!r} is not registered")
            if not 0 <= score <= 1:
                raise ValueError(f"score {score} outside [0, 1]")
            state.window.append(score)
            if len(state.window) < self.window or state.suspended:
                return DriftOutcome.SUSPENDED if state.suspended else DriftOutcome.OK
            current = histogram(state.window, self.bins)
            state.last_jsd = jsd(state.reference, current)
            if state.last_jsd <= self.theta:
                return DriftOutcome.OK
            state.suspended = True
            self._emit("drift:warning", judge=judge_id, jsd=state.last_jsd, theta=self.theta,
                       reference=state.reference, current=current)
            suspended = sum(s.suspended for s in self.states.values())
            if suspended / len(self.states) >= RECALIBRATE_FRACTION:
                self._recalibrate()
                return DriftOutcome.RECALIBRATE
            return DriftOutcome.SUSPENDED

    def recalibrate(self) -> None:
        with self._lock:
            self._recalibrate()

    def _recalibrate(self) -> None:
        ref = histogram(self.golden, self.bins)
        suspended = sorted(j for j, s in self.states.items() if s.suspended)
        for state in self.states.values():
            state.reference = list(ref)
            state.window.clear()
            state.suspended = False
            state.last_jsd = None
        self.recalibrations += 1
        self._emit("drift:recalibrated", suspended=suspended, reference=ref)

    def _emit(self, type: str, **payload) -> None:
        if self.bus is not None:
            self.bus.emit(type, self.task_id, payload)
