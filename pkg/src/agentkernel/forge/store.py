"""Library of past team designs with a diversity-preserving eviction guard."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

from ..core.events import EventBus
from ..core.types import TaskType, TeamDesign, TopologyKind

MIN_SURVIVORS = 2


@dataclass(frozen=True)
class DesignRecord:
    design: TeamDesign
    task_type: TaskType
    success_score: float
    created_at: float = 0.0
    evicted: bool = False
    record_id: int = 0

    def __post_init__(self):
        if not 0 <= self.success_score <= 1:
            raise ValueError("success_score must be in [0, 1]")
        object.__setattr__(self, "task_type", TaskType(self.task_type))

    @property
    def topology(self) -> TopologyKind:
        return self.design.topology

    def to_dict(self) -> dict:
        return {"id": self.record_id, "taskType": self.task_type.value, "successScore": self.success_score,
                "createdAt": self.created_at, "evicted": self.evicted, "design": self.design.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DesignRecord":
        return cls(TeamDesign.from_dict(d["design"]), d["taskType"], d["successScore"], d.get("createdAt", 0.0),
                   d.get("evicted", False), d.get("id", 0))


class DesignStore:
    """Records kept in insertion order; optionally mirrored to a JSONL file."""

    def __init__(self, path: str | Path | None = None, window: int = 100, bus: Optional[EventBus] = None,
                 task_id: str = "system"):
        if window < 1:
            raise ValueError("window must be positive")
        self.path = Path(path) if path else None
        self.window = window
        self.bus = bus
        self.task_id = task_id
        self.records: list[DesignRecord] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self.records.append(DesignRecord.from_dict(json.loads(line)))

    def __len__(self) -> int:
        return len(self.records)

    def active(self) -> list[DesignRecord]:
        return [r for r in self.records if not r.evicted]

    def class_size(self, topology) -> int:
        topology = TopologyKind(topology)
        return sum(1 for r in self.records if not r.evicted and r.topology is topology)

    def store(self, design: TeamDesign, task_type, success_score: float,
              created_at: Optional[float] = None) -> DesignRecord:
        with self._lock:
            next_id = max((r.record_id for r in self.records), default=0) + 1
            record = DesignRecord(design, task_type, success_score,
                                  float(next_id) if created_at is None else created_at, False, next_id)
            self.records.append(record)
            self._trim()
            self._save()
            return record

    def get_best(self, task_type, theta: float = 0.7) -> Optional[DesignRecord]:
        task_type = TaskType(task_type)
        best = None
        for r in self.records:
            if r.evicted or r.task_type is not task_type or r.success_score < theta:
                continue
            if best is None or r.success_score > best.success_score:
                best = r
        return best

    def failed_topologies(self, task_type, theta: float = 0.7) -> set[TopologyKind]:
        task_type = TaskType(task_type)
        return {r.topology for r in self.records if r.task_type is task_type and r.success_score < theta}

    def evict_with_guard(self, candidate: DesignRecord) -> bool:
        """Evict ``candidate`` unless that would leave its topology with fewer than two active records."""
        with self._lock:
            ok = self._evict(candidate)
            self._save()
            return ok

    def _evict(self, candidate: DesignRecord) -> bool:
        idx = next((i for i, r in enumerate(self.records) if r.record_id == candidate.record_id), None)
        if idx is None or self.records[idx].evicted:
            return False
        survivors = self.class_size(candidate.topology) - 1
        if survivors < MIN_SURVIVORS:
            self._emit("forge:eviction_blocked", id=candidate.record_id, topology=candidate.topology.value,
                       survivors=survivors)
            return False
        self.records[idx] = replace(self.records[idx], evicted=True)
        self._emit("forge:evicted", id=candidate.record_id, topology=candidate.topology.value)
        return True

    def _trim(self) -> None:
        """Shrink the active set to the window, oldest first, skipping classes the guard protects."""
        excess = len(self.active()) - self.window
        blocked: set[TopologyKind] = set()
        for r in sorted(self.active(), key=lambda r: (r.created_at, r.record_id)):
            if excess <= 0:
                break
            if r.topology in blocked:
                continue
            if self._evict(r):
                excess -= 1
            else:
                blocked.add(r.topology)

    def _save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text("".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records),
                       encoding="utf-8")
        tmp.replace(self.path)

    def _emit(self, type: str, **payload) -> None:
        if self.bus is not None:
            self.bus.emit(type, self.task_id, payload)

    def extend(self, records: Iterable[DesignRecord]) -> None:
        with self._lock:
            self.records.extend(records)
            self._save()
