"""Security policy, pre-execution cost simulation and the composite reward."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Optional, Sequence

from ..core.costs import MILLION, to_decimal
from ..core.errors import FeatureGated
from ..core.types import FeatureSet, TeamDesign
from ..topology.runners import DEFAULT_MAX_ROUNDS, max_rounds_for

DEFAULT_BLOCKED_PATTERNS = ("rm -rf", "drop table", "format c:")


@dataclass(frozen=True)
class PolicyRule:
    """A blocked pattern: literal text where ``*`` matches any run of characters."""

    pattern: str
    action: str = "block"
    name: str = ""

    def __post_init__(self):
        if not self.pattern or not self.pattern.strip():
            raise ValueError("policy pattern must be non-empty")
        if self.action != "block":
            raise ValueError(f"unsupported policy action {self.action!r}")

    @property
    def label(self) -> str:
        return self.name or self.pattern

    @property
    def regex(self) -> str:
        return ".*".join(re.escape(part) for part in self.pattern.split("*"))

    def matches(self, text: str) -> bool:
        return re.search(self.regex, text, flags=re.IGNORECASE | re.DOTALL) is not None


def rules_from(patterns: Iterable) -> tuple[PolicyRule, ...]:
    out = []
    for p in patterns:
        if isinstance(p, PolicyRule):
            out.append(p)
        elif isinstance(p, dict):
            out.append(PolicyRule(**p))
        else:
            out.append(PolicyRule(str(p)))
    return tuple(out)


@dataclass(frozen=True)
class SecurityDecision:
    allowed: bool
    reason: str = ""
    rule: Optional[str] = None


def security_check(prompt: str, rules: Sequence[PolicyRule]) -> SecurityDecision:
    for rule in rules:
        if rule.matches(prompt):
            return SecurityDecision(False, f"prompt matches blocked pattern {rule.label!r}", rule.label)
    return SecurityDecision(True)


@dataclass(frozen=True)
class CostEstimate:
    usd: Decimal
    calls: dict = field(default_factory=dict)
    per_agent: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"usd": str(self.usd), "calls": dict(self.calls),
                "perAgent": {k: str(v) for k, v in self.per_agent.items()}}


def expected_calls(design: TeamDesign) -> int:
    """Calls per agent: one for single-pass shapes, the round budget for iterative ones."""
    if design.topology in DEFAULT_MAX_ROUNDS:
        return max_rounds_for(design)
    return 1


def simulate(design: TeamDesign, catalog, features: FeatureSet, tokens_in: int = 500,
             tokens_out: int = 500) -> CostEstimate:
    """Dry-run cost from catalog rates; no executor is touched."""
    if not features.simulation_enabled:
        raise FeatureGated("pre-execution simulation is not available in this mode")
    calls = expected_calls(design)
    per_agent = {}
    for agent in design.agents:
        rate_in, rate_out = catalog.rates(agent.model_id)
        per_call = (Decimal(tokens_in) * rate_in + Decimal(tokens_out) * rate_out) / MILLION
        per_agent[agent.name] = per_call * calls
    total = sum(per_agent.values(), Decimal(0))
    return CostEstimate(total, {a.name: calls for a in design.agents}, per_agent)


def composite_reward(score: float, spent, budget, cost_weight: float = 0.2) -> float:
    budget = to_decimal(budget)
    if budget <= 0:
        raise ValueError("budget must be > 0")
    ratio = min(float(to_decimal(spent) / budget), 1.0)
    return min(max(score - cost_weight * ratio, 0.0), 1.0)
