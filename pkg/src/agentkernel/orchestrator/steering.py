"""Mid-flight steering commands delivered in-process or through a per-task inbox file."""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional


class SteerKind(str, Enum):
    PAUSE = "pause"
    RESUME = "resume"
    REDIRECT = "redirect"
    CANCEL = "cancel"


@dataclass(frozen=True)
class SteeringCommand:
    kind: SteerKind
    prompt: Optional[str] = None
    issued_at: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SteerKind(self.kind))
        if self.kind is SteerKind.REDIRECT and not (self.prompt and self.prompt.strip()):
            raise ValueError("redirect needs a non-empty prompt")
        if not self.issued_at:
            object.__setattr__(self, "issued_at", time.time())

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "prompt": self.prompt, "issuedAt": self.issued_at}

    @classmethod
    def from_dict(cls, d: dict) -> "SteeringCommand":
        return cls(d["kind"], d.get("prompt"), d.get("issuedAt", 0.0))


class SteeringInbox:
    """Pending commands for one task.

    Commands come from :meth:`send` (same process) or from lines appended to
    ``path`` by another process; the file is read incrementally.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._queue: deque[SteeringCommand] = deque()
        self._offset = self.path.stat().st_size if self.path and self.path.exists() else 0
        self._lock = threading.Lock()

    def send(self, command: SteeringCommand) -> None:
        self._queue.append(command)

    def poll(self) -> list[SteeringCommand]:
        with self._lock:
            out = []
            while self._queue:
                out.append(self._queue.popleft())
            out.extend(self._read_file())
            return out

    def _read_file(self) -> list[SteeringCommand]:
        if self.path is None or not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as fh:
            fh.seek(self._offset)
            chunk = fh.read()
        # only consume complete lines
        complete = chunk[: chunk.rfind("\n") + 1]
        self._offset += len(complete.encode("utf-8"))
        return [SteeringCommand.from_dict(json.loads(line)) for line in complete.splitlines() if line.strip()]


def post_command(path: str | Path, command: SteeringCommand) -> None:
    """Append a command to a task's inbox file (used by the CLI from another process)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(command.to_dict()) + "\n")
