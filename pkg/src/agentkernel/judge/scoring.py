"""Judge profiles and per-judge weighted scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence, Union


class Vote(str, Enum):
    APPROVE = "approve"
    REVISE = "revise"
    REJECT = "reject"


VOTES = (Vote.APPROVE, Vote.REVISE, Vote.REJECT)


class Tier(str, Enum):
    FRONTIER = "frontier"
    STANDARD = "standard"
    LIGHTWEIGHT = "lightweight"


APPROVE_BAND = 0.7
REVISE_BAND = 0.4


@dataclass(frozen=True)
class JudgeProfile:
    name: str
    criteria: tuple[tuple[str, float], ...]

    def __post_init__(self):
        total = sum(w for _, w in self.criteria)
        if abs(total - 1) > 1e-9:
            raise ValueError(f"profile {self.name!r} weights sum to {total}")
        names = [c for c, _ in self.criteria]
        if len(set(names)) != len(names):
            raise ValueError(f"profile {self.name!r} repeats a criterion")

    @property
    def names(self) -> list[str]:
        return [c for c, _ in self.criteria]

    def weighted_total(self, per_criterion: Mapping[str, float]) -> float:
        return math.fsum(w * per_criterion[c] for c, w in self.criteria)

    def to_dict(self) -> dict:
        return {"name": self.name, "criteria": [list(p) for p in self.criteria]}


PROFILES = {
    "default": JudgeProfile("default", (("correctness", 0.4), ("completeness", 0.3), ("quality", 0.2),
                                        ("safety", 0.1))),
    "code": JudgeProfile("code", (("correctness", 0.35), ("completeness", 0.25), ("quality", 0.2),
                                  ("security", 0.15), ("performance", 0.05))),
    "research": JudgeProfile("research", (("accuracy", 0.4), ("completeness", 0.25), ("sourcing", 0.25),
                                          ("clarity", 0.1))),
    "creative": JudgeProfile("creative", (("relevance", 0.3), ("quality", 0.3), ("originality", 0.25),
                                          ("coherence", 0.15))),
}

# task type -> profile; analysis and custom tasks use the general profile
PROFILE_FOR_TASK = {"code": "code", "research": "research", "creative": "creative"}


def profile_for(task_type) -> JudgeProfile:
    token = getattr(task_type, "value", task_type)
    return PROFILES[PROFILE_FOR_TASK.get(token, "default")]


def vote_for(total: float) -> Vote:
    if total >= APPROVE_BAND:
        return Vote.APPROVE
    if total >= REVISE_BAND:
        return Vote.REVISE
    return Vote.REJECT


@dataclass(frozen=True)
class JudgeScore:
    judge_id: str
    tier: Tier
    per_criterion: Mapping[str, float]
    weighted_total: float
    vote: Vote
    confidence: float = 1.0

    def to_dict(self) -> dict:
        return {"judgeId": self.judge_id, "tier": Tier(self.tier).value, "perCriterion": dict(self.per_criterion),
                "weightedTotal": self.weighted_total, "vote": Vote(self.vote).value, "confidence": self.confidence}


class MissingCriterion(KeyError):
    def __init__(self, criterion: str):
        self.criterion = criterion
        super().__init__(f"judge returned no score for criterion {criterion!r}")

    def __str__(self):
        return self.args[0]


# A port receives (output, profile, evaluation round) and returns criterion scores,
# optionally paired with a confidence, or a fully formed JudgeScore.
PortResult = Union[Mapping[str, float], tuple, JudgeScore]
JudgePort = Callable[[str, JudgeProfile, int], PortResult]


@dataclass(frozen=True)
class Judge:
    judge_id: str
    tier: Tier
    port: JudgePort = field(compare=False)


def score_output(port: JudgePort, output: str, profile: JudgeProfile, judge_id: str = "judge",
                 tier: Tier = Tier.STANDARD, round: int = 1) -> JudgeScore:
    raw = port(output, profile, round)
    if isinstance(raw, JudgeScore):
        return raw
    confidence: Optional[float] = None
    if isinstance(raw, tuple):
        raw, confidence = raw
    per = {}
    for c in profile.names:
        if c not in raw:
            raise MissingCriterion(c)
        value = float(raw[c])
        if not 0 <= value <= 1:
            raise ValueError(f"criterion {c!r} score {value} outside [0, 1]")
        per[c] = value
    total = profile.weighted_total(per)
    return JudgeScore(judge_id, Tier(tier), per, total, vote_for(total), 1.0 if confidence is None else confidence)


def entropy_bits(dist: Sequence[float]) -> float:
    if any(p < 0 for p in dist) or abs(sum(dist) - 1) > 1e-9:
        raise ValueError(f"not a distribution: {dist}")
    return -math.fsum(p * math.log2(p) for p in dist if p > 0) + 0.0
