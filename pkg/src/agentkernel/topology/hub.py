"""Message hub and run-result records for topology execution."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Optional

BROADCAST = "*"


@dataclass(frozen=True)
class Message:
    sender: str
    recipients: tuple[str, ...] | str
    round: int
    content: str
    # output, decompose, synthesis, vote, failure, ...
    kind: str = "output"

    def addressed_to(self, name: str) -> bool:
        return self.recipients == BROADCAST or name in self.recipients

    def to_dict(self) -> dict:
        return {
            "sender": self.sender,
            "recipients": self.recipients if isinstance(self.recipients, str) else list(self.recipients),
            "round": self.round,
            "content": self.content,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Message":
        recipients = d["recipients"]
        if not isinstance(recipients, str):
            recipients = tuple(recipients)
        return cls(d["sender"], recipients, d["round"], d["content"], d.get("kind", "output"))


class MsgHub:
    """Append-only message log for one topology run."""

    def __init__(self, messages=()):
        self._lock = threading.Lock()
        self._log: list[Message] = list(messages)

    def post(self, sender: str, content: str, round: int, recipients=BROADCAST, kind: str = "output") -> Message:
        if not isinstance(recipients, str):
            recipients = tuple(recipients)
        msg = Message(sender, recipients, round, content, kind)
        with self._lock:
            if self._log and round < self._log[-1].round:
                raise ValueError("message rounds must be nondecreasing")
            self._log.append(msg)
        return msg

    @property
    def messages(self) -> list[Message]:
        with self._lock:
            return list(self._log)

    def by_round(self, round: int) -> list[Message]:
        return [m for m in self.messages if m.round == round]

    def for_recipient(self, name: str) -> list[Message]:
        return [m for m in self.messages if m.addressed_to(name)]

    def from_sender(self, name: str, kind: Optional[str] = None) -> list[Message]:
        return [m for m in self.messages if m.sender == name and (kind is None or m.kind == kind)]

    def __len__(self) -> int:
        return len(self._log)


class Termination(str, Enum):
    NATURAL = "natural"
    MAX_ROUNDS = "maxRounds"
    AGENT_FAILURE = "agentFailure"


@dataclass
class AgentOutcome:
    agent: str
    rounds: int = 0
    outputs: list[str] = field(default_factory=list)
    cost: Decimal = Decimal(0)
    tool_calls: int = 0
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "agent": self.agent,
            "rounds": self.rounds,
            "outputs": list(self.outputs),
            "cost": str(self.cost),
            "tool_calls": self.tool_calls,
            "failed": self.failed,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentOutcome":
        return cls(d["agent"], d["rounds"], list(d["outputs"]), Decimal(d["cost"]),
                   d["tool_calls"], d["failed"], d.get("error", ""))


@dataclass
class RunResult:
    topology: str
    final_output: str
    outcomes: list[AgentOutcome]
    rounds_executed: int
    termination: Termination
    max_rounds: int
    hub: MsgHub = field(default_factory=MsgHub, compare=False, repr=False)

    @property
    def total_cost(self) -> Decimal:
        return sum((o.cost for o in self.outcomes), Decimal(0))

    def outcome(self, agent: str) -> AgentOutcome:
        for o in self.outcomes:
            if o.agent == agent:
                return o
        raise KeyError(agent)

    def to_dict(self, with_messages: bool = True) -> dict:
        d = {
            "topology": self.topology,
            "final_output": self.final_output,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "rounds_executed": self.rounds_executed,
            "termination": self.termination.value,
            "max_rounds": self.max_rounds,
        }
        if with_messages:
            d["messages"] = [m.to_dict() for m in self.hub.messages]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(
            topology=d["topology"],
            final_output=d["final_output"],
            outcomes=[AgentOutcome.from_dict(o) for o in d["outcomes"]],
            rounds_executed=d["rounds_executed"],
            termination=Termination(d["termination"]),
            max_rounds=d["max_rounds"],
            hub=MsgHub(Message.from_dict(m) for m in d.get("messages", ())),
        )


def labeled(pairs) -> str:
    """Render (name, text) pairs as ``name: text`` lines."""
    return "\n".join(f"{name}: {text}" for name, text in pairs)
