"""Metric-gaming detection over the evaluation history, and the response to it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from statistics import fmean
from typing import Optional, Sequence


class Signal(str, Enum):
    LOW_ENTROPY = "lowEntropy"
    CALIBRATION_DRIFT = "calibrationDrift"
    SCORE_INFLATION = "scoreInflation"
    DIVERSITY_COLLAPSE = "diversityCollapse"


class Risk(str, Enum):
    NONE = "none"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


@dataclass(frozen=True)
class GoodhartConfig:
    entropy_threshold: float = 0.3
    calibration_window: int = 50
    calibration_threshold: float = 0.15
    inflation_factor: float = 1.5
    diversity_window: int = 10
    diversity_min_distinct: int = 3

    def __post_init__(self):
        for name in ("entropy_threshold", "calibration_window", "calibration_threshold",
                     "inflation_factor", "diversity_window", "diversity_min_distinct"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class EvaluationRecord:
    scores: tuple[float, ...]
    confidence: float
    accuracy: float
    reward: float
    signature: Optional[tuple] = None

    @property
    def mean_score(self) -> float:
        return fmean(self.scores)


@dataclass(frozen=True)
class GoodhartReport:
    signals: frozenset
    risk: Risk
    indeterminate: frozenset = frozenset()
    metrics: dict = field(default_factory=dict, compare=False)


def risk_for(signals) -> Risk:
    n = len(set(signals))
    return (Risk.NONE, Risk.LOW, Risk.MEDIUM)[n] if n < 3 else Risk.HIGH


def normalized_entropy(scores: Sequence[float]) -> Optional[float]:
    """Entropy of the score mass over judges divided by its maximum; None when undefined."""
    total = sum(scores)
    k = len(scores)
    if k < 2 or total <= 0:
        return None
    h = -sum((s / total) * math.log2(s / total) for s in scores if s > 0)
    return h / math.log2(k)


def detect_goodhart(history: Sequence[EvaluationRecord], config: GoodhartConfig = GoodhartConfig()) -> GoodhartReport:
    signals, unknown, metrics = set(), set(), {}

    h = normalized_entropy(history[-1].scores) if history else None
    if h is None:
        unknown.add(Signal.LOW_ENTROPY)
    else:
        metrics["entropy"] = h
        if h < config.entropy_threshold:
            signals.add(Signal.LOW_ENTROPY)

    w = config.calibration_window
    if len(history) < w:
        unknown.update({Signal.CALIBRATION_DRIFT, Signal.SCORE_INFLATION})
    else:
        recent = history[-w:]
        gap = abs(fmean(r.confidence for r in recent) - fmean(r.accuracy for r in recent))
        metrics["calibrationGap"] = gap
        if gap > config.calibration_threshold:
            signals.add(Signal.CALIBRATION_DRIFT)
        half = w // 2
        first, second = recent[:half], recent[half:]
        d_score = fmean(r.mean_score for r in second) - fmean(r.mean_score for r in first)
        d_reward = fmean(r.reward for r in second) - fmean(r.reward for r in first)
        metrics["scoreDelta"], metrics["rewardDelta"] = d_score, d_reward
        if d_score > 0 and d_score > config.inflation_factor * d_reward:
            signals.add(Signal.SCORE_INFLATION)

    signatures = [r.signature for r in history if r.signature is not None][-config.diversity_window:]
    if len(signatures) < config.diversity_window:
        unknown.add(Signal.DIVERSITY_COLLAPSE)
    else:
        metrics["distinctSignatures"] = len(set(signatures))
        if len(set(signatures)) < config.diversity_min_distinct:
            signals.add(Signal.DIVERSITY_COLLAPSE)

    return GoodhartReport(frozenset(signals), risk_for(signals), frozenset(unknown), metrics)


@dataclass(frozen=True)
class GoodhartAction:
    kind: str  # "log" | "rotate" | "replace" | "escalate"
    panel: tuple
    reserve: tuple
    discard_round: bool = False
    replaced: tuple = ()


def apply_goodhart_action(report: GoodhartReport, panel: Sequence, reserve: Sequence) -> GoodhartAction:
    """Rotate the longest-serving judge at medium risk; swap the entire panel at high risk.

    Without enough reserve judges the action is ``escalate`` and the panel is left unchanged.
    """
    panel, reserve = tuple(panel), tuple(reserve)
    if report.risk in (Risk.NONE, Risk.LOW):
        return GoodhartAction("log", panel, reserve)
    if report.risk is Risk.MEDIUM:
        if not reserve or not panel:
            return GoodhartAction("escalate", panel, reserve)
        return GoodhartAction("rotate", panel[1:] + reserve[:1], reserve[1:] + panel[:1], replaced=panel[:1])
    if len(reserve) < len(panel):
        return GoodhartAction("escalate", panel, reserve, discard_round=True)
    n = len(panel)
    return GoodhartAction("replace", reserve[:n], reserve[n:] + panel, discard_round=True, replaced=panel)
