"""Typed event bus with per-task append-only logs.

Each task gets its own sequence counter starting at 1.  When a ``log_dir`` is
given, every event is also appended to ``<log_dir>/<task_id>.jsonl``.
"""

from __future__ import annotations

import json
import threading
import time
from collections import defaultdict, deque
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

from .errors import UnknownEventType
from .types import Event

# Representative subset grouped by emitter.
EVENT_TYPES = frozenset(
    {
        # orchestrator
        "task:created", "task:started", "task:step", "task:paused", "task:resumed",
        "task:redirected", "task:cancelled", "task:completed", "task:failed",
        "task:escalated", "budget:checked", "budget:exceeded", "memory:injected",
        "simulation:estimated", "security:allowed", "security:blocked",
        "output:written", "checkpoint:saved", "checkpoint:restored", "checkpoint:cleared",
        "behavior:captured",
        # forge
        "forge:classified", "forge:designed", "forge:adapted", "forge:redesign",
        "forge:validation_failed", "forge:evicted", "forge:eviction_blocked",
        # swarm
        "swarm:started", "swarm:completed", "swarm:failed", "agent:executed",
        "agent:failed", "tool:invoked",
        # router
        "model:routed", "model:call_failed", "model:retry", "breaker:opened", "breaker:closed",
        "breaker:half_open",
        "discovery:completed", "discovery:provider_failed", "discovery:stale_cache",
        "rl:updated", "rl:persisted",
        # judge
        "judge:score", "judge:verdict", "judge:fabrication", "judge:excluded",
        "judge:panel_collapsed",
        # guards
        "goodhart:evaluated", "goodhart:risk_elevated", "goodhart:rotated",
        "goodhart:panel_replaced", "drift:warning", "drift:recalibrated",
        "trilemma:bound", "trilemma:firewall_denied", "contract:violation",
    }
)


class Subscription:
    """Receives events whose type starts with ``prefix``.

    Iterating drains the events received so far.  An optional callback is
    invoked synchronously on delivery.
    """

    def __init__(self, bus: "EventBus", prefix: str, callback: Optional[Callable[[Event], None]] = None):
        self._bus = bus
        self.prefix = prefix
        self.callback = callback
        self._queue: deque[Event] = deque()
        self.received: list[Event] = []

    def matches(self, event: Event) -> bool:
        return event.type.startswith(self.prefix)

    def _deliver(self, event: Event) -> None:
        self._queue.append(event)
        self.received.append(event)
        if self.callback is not None:
            self.callback(event)

    def __iter__(self) -> Iterator[Event]:
        while self._queue:
            yield self._queue.popleft()

    def close(self) -> None:
        self._bus.unsubscribe(self)


class EventBus:
    def __init__(self, log_dir: str | Path | None = None, registry: Iterable[str] = EVENT_TYPES,
                 clock: Callable[[], float] = time.monotonic):
        self.registry = frozenset(registry)
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
        self._clock = clock
        self._lock = threading.RLock()
        self._logs: dict[str, list[Event]] = defaultdict(list)
        self._seq: dict[str, int] = {}
        self._subs: list[Subscription] = []

    def emit(self, type: str | Event, task_id: str = "", payload: Optional[dict] = None) -> int:
        if isinstance(type, Event):
            type, task_id, payload = type.type, type.task_id, type.payload
        if type not in self.registry:
            raise UnknownEventType(type)
        with self._lock:
            seq = self._next_seq(task_id)
            event = Event(type=type, task_id=task_id, payload=dict(payload or {}), seq=seq,
                          timestamp=self._clock())
            self._logs[task_id].append(event)
            if self.log_dir is not None:
                with open(self._path(task_id), "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event.to_dict(), sort_keys=True, default=str) + "\n")
            for sub in list(self._subs):
                if sub.matches(event):
                    sub._deliver(event)
        return seq

    def subscribe(self, prefix: str = "", callback: Optional[Callable[[Event], None]] = None) -> Subscription:
        sub = Subscription(self, prefix, callback)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def log(self, task_id: str) -> list[Event]:
        with self._lock:
            if task_id not in self._logs and self.log_dir is not None:
                self._logs[task_id] = read_event_log(self._path(task_id))
            return list(self._logs[task_id])

    def types(self, task_id: str) -> list[str]:
        return [e.type for e in self.log(task_id)]

    def _next_seq(self, task_id: str) -> int:
        if task_id not in self._seq:
            existing = self._logs.get(task_id)
            if not existing and self.log_dir is not None and self._path(task_id).exists():
                # resuming a task started by another process
                existing = self._logs[task_id] = read_event_log(self._path(task_id))
            self._seq[task_id] = existing[-1].seq if existing else 0
        self._seq[task_id] += 1
        return self._seq[task_id]

    def _path(self, task_id: str) -> Path:
        return self.log_dir / f"{task_id}.jsonl"


def read_event_log(path: str | Path) -> list[Event]:
    path = Path(path)
    if not path.exists():
        return []
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            events.append(Event(type=d["type"], task_id=d["taskId"], payload=d["payload"],
                                seq=d["seq"], timestamp=d["timestamp"]))
    return events
