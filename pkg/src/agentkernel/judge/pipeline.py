"""One evaluation round: drift exclusion, scoring, fabrication screening, consensus, persistence."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from ..core.errors import PanelCollapsed
from ..core.events import EventBus
from ..guards.drift import DriftMonitor
from .consensus import ALGORITHMS, ConsensusResult, weighted_majority
from .scoring import Judge, JudgeProfile, JudgeScore, Tier, Vote, score_output, vote_for

FABRICATION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Verdict:
    decision: Vote
    consensus: Optional[ConsensusResult]
    excluded: tuple[str, ...] = ()
    fabricated: tuple[str, ...] = ()
    escalate: bool = False
    note: str = ""
    seq: int = 0
    scores: tuple[JudgeScore, ...] = field(default=(), compare=False)

    @property
    def score(self) -> float:
        return self.consensus.score if self.consensus else 0.0

    @property
    def entropy(self) -> float:
        return self.consensus.entropy if self.consensus else 0.0

    def to_dict(self) -> dict:
        return {"decision": self.decision.value, "score": self.score, "entropy": self.entropy,
                "algorithm": self.consensus.algorithm if self.consensus else None,
                "excluded": list(self.excluded), "fabricated": list(self.fabricated),
                "escalate": self.escalate, "note": self.note,
                "perJudge": [s.to_dict() for s in self.scores]}


def fabrication_reason(score: JudgeScore, profile: JudgeProfile) -> Optional[str]:
    """Why a score is internally inconsistent, or None if it checks out."""
    missing = [c for c in profile.names if c not in score.per_criterion]
    if missing:
        return f"missing criteria {missing}"
    if any(not 0 <= score.per_criterion[c] <= 1 for c in profile.names):
        return "criterion score outside [0, 1]"
    recomputed = profile.weighted_total(score.per_criterion)
    if not math.isfinite(score.weighted_total) or abs(recomputed - score.weighted_total) > FABRICATION_TOLERANCE:
        return f"weighted total {score.weighted_total} != recomputed {recomputed}"
    if Vote(score.vote) is not vote_for(score.weighted_total):
        return f"vote {Vote(score.vote).value} inconsistent with total {score.weighted_total:.3f}"
    return None


class JudgePipeline:
    def __init__(self, panel: Sequence[Judge], profile: JudgeProfile, algorithm: str = "weightedMajority",
                 drift: Optional[DriftMonitor] = None, bus: Optional[EventBus] = None, task_id: str = "system",
                 max_judges: Optional[int] = None, tier_weights=None, concurrent: bool = False):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown consensus algorithm {algorithm!r}")
        if max_judges is not None and len(panel) > max_judges:
            raise ValueError(f"panel of {len(panel)} exceeds the mode limit of {max_judges} judges")
        self.panel = list(panel)
        self.profile = profile
        self.algorithm = algorithm
        self.drift = drift
        self.bus = bus
        self.task_id = task_id
        self.tier_weights = tier_weights
        self.concurrent = concurrent
        if drift is not None:
            for j in self.panel:
                if j.judge_id not in drift.states:
                    drift.register(j.judge_id)

    def replace_panel(self, panel: Sequence[Judge]) -> None:
        self.panel = list(panel)
        if self.drift is not None:
            for j in self.panel:
                if j.judge_id not in self.drift.states:
                    self.drift.register(j.judge_id)

    def evaluate(self, output: str, round: int = 1) -> Verdict:
        excluded = tuple(j.judge_id for j in self.panel if self.drift and self.drift.is_suspended(j.judge_id))
        for jid in excluded:
            self._emit("judge:excluded", judge=jid, reason="drift")
        active = [j for j in self.panel if j.judge_id not in excluded]

        scores = self._score_all(active, output, round)
        honest, fabricated = [], []
        for s in scores:
            reason = fabrication_reason(s, self.profile)
            if reason is None:
                honest.append(s)
                self._emit("judge:score", **s.to_dict())
            else:
                fabricated.append(s.judge_id)
                self._emit("judge:fabrication", judge=s.judge_id, reason=reason)

        if self.drift is not None:
            for s in honest:
                self.drift.check(s.judge_id, min(max(s.weighted_total, 0.0), 1.0))

        if not honest:
            note = str(PanelCollapsed("no judge survived drift and fabrication screening; human review required"))
            self._emit("judge:panel_collapsed", excluded=list(excluded), fabricated=fabricated)
            verdict = Verdict(Vote.REJECT, None, excluded, tuple(fabricated), True, note)
        else:
            result = self._consensus(honest)
            verdict = Verdict(result.decision, result, excluded, tuple(fabricated), scores=tuple(honest))
        seq = self._emit("judge:verdict", round=round, **verdict.to_dict())
        return replace(verdict, seq=seq)

    def _consensus(self, scores: list[JudgeScore]) -> ConsensusResult:
        if self.algorithm == "bft" and len(scores) < 3:
            return weighted_majority(scores, self.tier_weights)
        return ALGORITHMS[self.algorithm](scores, self.tier_weights)

    def _score_all(self, judges: list[Judge], output: str, round: int) -> list[JudgeScore]:
        def one(j: Judge) -> JudgeScore:
            return score_output(j.port, output, self.profile, j.judge_id, Tier(j.tier), round)

        if self.concurrent and len(judges) > 1:
            with ThreadPoolExecutor(max_workers=len(judges)) as pool:
                return list(pool.map(one, judges))
        return [one(j) for j in judges]

    def _emit(self, type: str, **payload) -> int:
        if self.bus is None:
            return 0
        return self.bus.emit(type, self.task_id, payload)
