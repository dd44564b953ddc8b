"""Pre/post behavioral contracts checked around team execution."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Optional, Sequence

QUALITY_THRESHOLD = 0.6


@dataclass
class ContractContext:
    budget: Decimal
    prompt: str
    spent: Decimal = Decimal(0)
    output: Optional[str] = None
    policy_loaded: bool = True
    blocked_patterns: Sequence[str] = ()
    judges_configured: int = 0
    consensus_score: Optional[float] = None
    task_type: Optional[str] = None


@dataclass(frozen=True)
class Violation:
    contract: str
    stage: str
    message: str
    feedback: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"contract": self.contract, "stage": self.stage, "message": self.message, "feedback": self.feedback}


Check = Callable[[ContractContext], Optional[str]]


@dataclass(frozen=True)
class Contract:
    """``pre``/``post`` return None when satisfied, otherwise a failure message."""

    name: str
    pre: Optional[Check] = None
    post: Optional[Check] = None


def blocked_match(text: str, patterns: Sequence[str]) -> Optional[str]:
    for p in patterns:
        if re.search(p, text, flags=re.IGNORECASE):
            return p
    return None


def _looks_structured(text: str) -> bool:
    return text.lstrip()[:1] in ("{", "[")


def _budget_pre(c: ContractContext):
    return None if c.budget > 0 else f"budget must be positive, got {c.budget}"


def _budget_post(c: ContractContext):
    return None if c.spent <= c.budget else f"spent {c.spent} exceeds budget {c.budget}"


def _validity_pre(c: ContractContext):
    return None if c.prompt and c.prompt.strip() else "prompt is empty"


def _validity_post(c: ContractContext):
    if not c.output or not c.output.strip():
        return "output is empty"
    if _looks_structured(c.output):
        try:
            json.loads(c.output)
        except json.JSONDecodeError as exc:
            return f"output is malformed structured text: {exc}"
    return None


def _safety_pre(c: ContractContext):
    return None if c.policy_loaded else "no safety policy loaded"


def _safety_post(c: ContractContext):
    hit = blocked_match(c.output or "", c.blocked_patterns)
    return None if hit is None else f"output matches blocked pattern {hit!r}"


def _quality_pre(c: ContractContext):
    return None if c.judges_configured > 0 else "no judges configured"


def _quality_post(c: ContractContext):
    if c.consensus_score is None:
        return "no consensus score"
    if c.consensus_score >= QUALITY_THRESHOLD:
        return None
    return f"consensus score {c.consensus_score:.3f} below {QUALITY_THRESHOLD}"


DEFAULT_CONTRACTS = (
    Contract("budget", _budget_pre, _budget_post),
    Contract("responseValidity", _validity_pre, _validity_post),
    Contract("safety", _safety_pre, _safety_post),
    Contract("quality", _quality_pre, _quality_post),
)


class ContractRegistry:
    def __init__(self, contracts: Sequence[Contract] = DEFAULT_CONTRACTS):
        self._global = list(contracts)
        self._by_type: dict[str, list[Contract]] = {}

    def register(self, contract: Contract, task_type: Optional[str] = None) -> None:
        if task_type is None:
            self._global.append(contract)
        else:
            self._by_type.setdefault(str(getattr(task_type, "value", task_type)), []).append(contract)

    def contracts_for(self, task_type: Optional[str]) -> list[Contract]:
        return self._global + self._by_type.get(str(getattr(task_type, "value", task_type)), [])

    def evaluate(self, stage: str, ctx: ContractContext) -> list[Violation]:
        """Every violation at ``stage``; an empty list means all contracts hold."""
        if stage not in ("pre", "post"):
            raise ValueError(f"unknown stage {stage!r}")
        out = []
        for contract in self.contracts_for(ctx.task_type):
            check = contract.pre if stage == "pre" else contract.post
            if check is None:
                continue
            message = check(ctx)
            if message is not None:
                out.append(Violation(contract.name, stage, message, _feedback(contract.name, ctx)))
        return out


def _feedback(name: str, ctx: ContractContext) -> dict:
    if name == "quality":
        return {"score": ctx.consensus_score, "threshold": QUALITY_THRESHOLD}
    if name == "budget":
        return {"spent": str(ctx.spent), "budget": str(ctx.budget)}
    return {}
