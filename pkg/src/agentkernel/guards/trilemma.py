"""Hard bounds on self-improvement: Q-step cap, config firewall, escalation caps."""

from __future__ import annotations

import copy
import hashlib
import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from ..core.events import EventBus

FROZEN_DOMAINS = frozenset({"safetyPolicy", "judgeProfiles"})


@dataclass(frozen=True)
class TrilemmaConfig:
    q_delta_cap: float = 0.15
    max_redesigns: int = 5
    budget_cap_multiplier: float = 3.0
    frozen_configs: frozenset = FROZEN_DOMAINS

    def __post_init__(self):
        if self.q_delta_cap <= 0 or self.max_redesigns <= 0 or self.budget_cap_multiplier <= 0:
            raise ValueError("trilemma caps must be positive")


def clamp_q_delta(raw: float, cap: float = 0.15) -> float:
    return max(-cap, min(cap, raw))


class Origin(str, Enum):
    LEARNING = "learning"
    HUMAN = "human"
    SYSTEM = "system"


@dataclass(frozen=True)
class WriteRequest:
    target: str
    origin: Origin = Origin.LEARNING
    human_approved: bool = False


def check_firewall(request: WriteRequest, frozen=FROZEN_DOMAINS) -> bool:
    """True when the write may proceed.

    Learning-origin writes to a frozen domain are refused even when they carry
    an approval flag; the loop cannot approve its own changes.
    """
    if request.target not in frozen:
        return True
    origin = Origin(request.origin)
    if origin is Origin.LEARNING:
        return False
    return request.human_approved or origin is Origin.HUMAN


def state_hash(value: Any) -> str:
    blob = json.dumps(value, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class ConfigStore:
    """Named configuration domains; every write passes through the firewall."""

    domains: dict[str, Any] = field(default_factory=dict)
    frozen: frozenset = FROZEN_DOMAINS
    bus: Optional[EventBus] = None
    task_id: str = "system"

    def __post_init__(self):
        self._lock = threading.Lock()

    def read(self, target: str) -> Any:
        return copy.deepcopy(self.domains.get(target))

    def write(self, target: str, value: Any, origin: Origin = Origin.LEARNING, human_approved: bool = False) -> bool:
        request = WriteRequest(target, Origin(origin), human_approved)
        allowed = check_firewall(request, self.frozen)
        if not allowed:
            if self.bus is not None:
                self.bus.emit("trilemma:firewall_denied", self.task_id,
                              {"target": target, "origin": request.origin.value})
            return False
        with self._lock:
            self.domains[target] = copy.deepcopy(value)
        return True

    def hash(self, target: str) -> str:
        with self._lock:
            return state_hash(self.domains.get(target))
