"""What to do after a rejected round: refine, switch topology, or hand off to a human."""

from __future__ import annotations

from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Iterable, Optional, Sequence, Union

from ..core.costs import to_decimal
from ..core.types import TeamDesign, TopologyKind
from .designer import render_prompt, template_design

PENDING_HUMAN_REVIEW = "pending_human_review"


@dataclass(frozen=True)
class ForgeConfig:
    library_threshold: float = 0.7
    max_redesigns: int = 5
    radical_threshold: int = 3
    budget_cap_multiplier: float = 3.0
    store_window: int = 100

    def __post_init__(self):
        if not self.radical_threshold < self.max_redesigns:
            raise ValueError("radical_threshold must be below max_redesigns")
        if self.store_window < 1:
            raise ValueError("store_window must be positive")


@dataclass(frozen=True)
class Escalation:
    reason: str
    count: int
    spent: Decimal
    status: str = PENDING_HUMAN_REVIEW


def should_escalate(count: int, spent, budget, config: ForgeConfig = ForgeConfig()) -> Optional[str]:
    if count >= config.max_redesigns:
        return f"redesign limit {config.max_redesigns} reached"
    cap = to_decimal(budget) * to_decimal(config.budget_cap_multiplier)
    if to_decimal(spent) > cap:
        return f"spent {spent} exceeds {config.budget_cap_multiplier}x budget"
    return None


def refine(prev: TeamDesign, feedback: Sequence[str], task_prompt: str) -> TeamDesign:
    agents = [replace(a, system_prompt=render_prompt(a.role, task_prompt, feedback)) for a in prev.agents]
    return prev.with_agents(agents)


def redesign(prev: TeamDesign, feedback: Sequence[str], count: int, spent, budget, task_prompt: str,
             failed: Iterable[TopologyKind] = (), allowed: Iterable[TopologyKind] = tuple(TopologyKind),
             config: ForgeConfig = ForgeConfig()) -> Union[TeamDesign, Escalation]:
    """``count`` is the number of rejections so far, starting at 1.

    Radical redesign picks the first allowed topology not yet tried. When every
    allowed topology has failed it falls back to refining the previous design.
    """
    if count < 1:
        raise ValueError("count starts at 1")
    reason = should_escalate(count, spent, budget, config)
    if reason is not None:
        return Escalation(reason, count, to_decimal(spent))
    if count < config.radical_threshold:
        return refine(prev, feedback, task_prompt)
    excluded = {prev.topology, *map(TopologyKind, failed)}
    fresh = [k for k in allowed if TopologyKind(k) not in excluded]
    if not fresh:
        return refine(prev, feedback, task_prompt)
    model_id = prev.agents[0].model_id
    design = template_design(fresh[0], task_prompt, model_id)
    return refine(design, feedback, task_prompt)
