"""Task lifecycle state, checkpoints, status documents and behavior records."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Optional

from ..core.costs import to_decimal
from ..core.errors import InvalidState
from ..topology.hub import RunResult


class TaskStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    PAUSED = "paused"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"
    PENDING_HUMAN_REVIEW = "pending_human_review"


TERMINAL = frozenset({TaskStatus.COMPLETED, TaskStatus.FAILED, TaskStatus.CANCELLED,
                      TaskStatus.PENDING_HUMAN_REVIEW})

_S = TaskStatus
TRANSITIONS = {
    _S.PENDING: {_S.RUNNING, _S.FAILED, _S.CANCELLED},
    _S.RUNNING: {_S.RUNNING, _S.PAUSED, _S.COMPLETED, _S.FAILED, _S.CANCELLED, _S.PENDING_HUMAN_REVIEW},
    _S.PAUSED: {_S.RUNNING, _S.CANCELLED},
}


@dataclass
class TaskState:
    task_id: str
    status: TaskStatus = TaskStatus.PENDING
    current_step: int = 0
    redesign_count: int = 0
    spent: Decimal = Decimal(0)
    prompt: str = ""
    mode: str = "power"
    reason: str = ""

    def __post_init__(self):
        self.status = TaskStatus(self.status)
        self.spent = to_decimal(self.spent)

    def transition(self, new: TaskStatus) -> None:
        new = TaskStatus(new)
        if new not in TRANSITIONS.get(self.status, ()):
            raise InvalidState(f"task {self.task_id}: cannot go from {self.status.value} to {new.value}")
        self.status = new

    @property
    def terminal(self) -> bool:
        return self.status in TERMINAL

    def to_dict(self) -> dict:
        return {"taskId": self.task_id, "status": self.status.value, "currentStep": self.current_step,
                "redesignCount": self.redesign_count, "spent": str(self.spent), "prompt": self.prompt,
                "mode": self.mode, "reason": self.reason}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskState":
        return cls(d["taskId"], d["status"], d.get("currentStep", 0), d.get("redesignCount", 0),
                   d.get("spent", "0"), d.get("prompt", ""), d.get("mode", "power"), d.get("reason", ""))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class JsonDir:
    """One JSON document per task id under a directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path(self, task_id: str) -> Path:
        return self.directory / f"{task_id}.json"

    def save(self, task_id: str, doc: dict) -> Path:
        path = self.path(task_id)
        _atomic_write(path, json.dumps(doc, sort_keys=True, indent=1, default=str))
        return path

    def load(self, task_id: str) -> Optional[dict]:
        path = self.path(task_id)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def clear(self, task_id: str) -> bool:
        path = self.path(task_id)
        if path.exists():
            path.unlink()
            return True
        return False


@dataclass(frozen=True)
class BehaviorRecord:
    task_id: str
    agent: str
    iteration: int
    rounds: int
    output_lengths: tuple[int, ...]
    tool_calls: int
    failed: bool
    topology: str = ""

    def to_dict(self) -> dict:
        return {"taskId": self.task_id, "agent": self.agent, "iteration": self.iteration, "rounds": self.rounds,
                "outputLengths": list(self.output_lengths), "toolCallCount": self.tool_calls,
                "failed": self.failed, "topology": self.topology}


def capture_behavior(task_id: str, result: RunResult, iteration: int = 1) -> list[BehaviorRecord]:
    return [BehaviorRecord(task_id, o.agent, iteration, o.rounds, tuple(len(x) for x in o.outputs), o.tool_calls,
                           o.failed, result.topology)
            for o in result.outcomes]


def append_jsonl(path: str | Path, docs) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d, sort_keys=True, default=str) + "\n")


@dataclass
class Checkpoint:
    """Everything needed to resume a task after its last completed step."""

    task_id: str
    step: int
    next_step: int
    data: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"taskId": self.task_id, "step": self.step, "nextStep": self.next_step, "data": self.data}

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        return cls(d["taskId"], d["step"], d["nextStep"], d.get("data", {}))
