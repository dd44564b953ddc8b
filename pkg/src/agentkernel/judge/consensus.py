"""Combining per-judge votes into a single decision."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from ..core.errors import BftRequiresThree
from .scoring import VOTES, JudgeScore, Tier, Vote, entropy_bits

DEFAULT_TIER_WEIGHTS = {Tier.FRONTIER: 1.0, Tier.STANDARD: 0.6, Tier.LIGHTWEIGHT: 0.3}
APPROVE_ABOVE = Fraction(1, 2)
REVISE_FROM = Fraction(3, 10)


@dataclass(frozen=True)
class ConsensusResult:
    decision: Vote
    algorithm: str
    entropy: float
    per_judge: tuple[JudgeScore, ...]
    score: float

    def to_dict(self) -> dict:
        return {"decision": self.decision.value, "algorithm": self.algorithm, "entropy": self.entropy,
                "score": self.score, "perJudge": [s.to_dict() for s in self.per_judge]}


def _weights(scores: Sequence[JudgeScore], tier_weights: Mapping) -> list[Fraction]:
    raw = [Fraction(str(tier_weights[Tier(s.tier)])) for s in scores]
    total = sum(raw)
    return [w / total for w in raw]


def _mean_score(scores: Sequence[JudgeScore], weights: Sequence[Fraction]) -> float:
    return float(sum(w * Fraction(s.weighted_total) for s, w in zip(scores, weights)))


def _count_entropy(votes: Sequence[Vote]) -> float:
    counts = Counter(votes)
    return entropy_bits([counts[v] / len(votes) for v in VOTES])


def weighted_majority(scores: Sequence[JudgeScore], tier_weights: Optional[Mapping] = None) -> ConsensusResult:
    if not scores:
        raise ValueError("weighted majority needs at least one judge")
    weights = _weights(scores, tier_weights or DEFAULT_TIER_WEIGHTS)
    mass = {v: Fraction(0) for v in VOTES}
    for s, w in zip(scores, weights):
        mass[Vote(s.vote)] += w
    approve = mass[Vote.APPROVE]
    if approve > APPROVE_ABOVE:
        decision = Vote.APPROVE
    elif approve >= REVISE_FROM:
        decision = Vote.REVISE
    else:
        decision = Vote.REJECT
    entropy = entropy_bits([float(mass[v]) for v in VOTES])
    return ConsensusResult(decision, "weightedMajority", entropy, tuple(scores), _mean_score(scores, weights))


def bft_quorum(n: int) -> int:
    return 2 * n // 3 + 1


def bft(scores: Sequence[JudgeScore], tier_weights: Optional[Mapping] = None) -> ConsensusResult:
    n = len(scores)
    if n < 3:
        raise BftRequiresThree(f"BFT consensus needs at least 3 judges, got {n}")
    votes = [Vote(s.vote) for s in scores]
    counts = Counter(votes)
    quorum = bft_quorum(n)
    reached = [v for v in VOTES if counts[v] >= quorum]
    decision = reached[0] if reached else Vote.REVISE
    weights = _weights(scores, tier_weights or DEFAULT_TIER_WEIGHTS)
    return ConsensusResult(decision, "bft", _count_entropy(votes), tuple(scores), _mean_score(scores, weights))


def raft(scores: Sequence[JudgeScore], tier_weights: Optional[Mapping] = None) -> ConsensusResult:
    """The first score is the leader. A unique plurality wins; any tie at the top goes to the leader."""
    if not scores:
        raise ValueError("raft consensus needs at least one judge")
    votes = [Vote(s.vote) for s in scores]
    counts = Counter(votes)
    top = max(counts.values())
    leaders = [v for v in VOTES if counts[v] == top]
    decision = leaders[0] if len(leaders) == 1 else votes[0]
    weights = _weights(scores, tier_weights or DEFAULT_TIER_WEIGHTS)
    return ConsensusResult(decision, "raft", _count_entropy(votes), tuple(scores), _mean_score(scores, weights))


ALGORITHMS = {"weightedMajority": weighted_majority, "bft": bft, "raft": raft}
