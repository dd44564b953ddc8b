"""Model selection strategies. Every selector is a pure function of its catalog snapshot."""

from __future__ import annotations

from typing import Callable, Sequence

from ..core.errors import CascadeExhausted, NoEligibleModel
from .catalog import ModelInfo

BALANCED_QUALITY_WEIGHT = 0.7


def _models(catalog) -> list[ModelInfo]:
    models = list(catalog)
    if not models:
        raise NoEligibleModel("catalog is empty")
    return models


def cost_norm(models: Sequence[ModelInfo]) -> dict[str, float]:
    """Min-max normalized combined rate; a flat catalog maps everything to 0."""
    rates = [m.combined_rate for m in models]
    lo, hi = min(rates), max(rates)
    span = hi - lo
    return {m.model_id: (m.combined_rate - lo) / span if span > 0 else 0.0 for m in models}


def route_cheapest(catalog, quality_min: float = 0.0) -> ModelInfo:
    eligible = [m for m in _models(catalog) if m.quality_score >= quality_min]
    if not eligible:
        raise NoEligibleModel(f"no model with quality >= {quality_min}")
    return min(eligible, key=lambda m: (m.combined_rate, m.model_id))


def route_quality(catalog) -> ModelInfo:
    return min(_models(catalog), key=lambda m: (-m.quality_score, m.combined_rate, m.model_id))


def balanced_scores(catalog, quality_weight: float = BALANCED_QUALITY_WEIGHT) -> dict[str, float]:
    models = _models(catalog)
    norm = cost_norm(models)
    return {m.model_id: quality_weight * m.quality_score + (1 - quality_weight) * (1 - norm[m.model_id])
            for m in models}


def route_balanced(catalog, quality_weight: float = BALANCED_QUALITY_WEIGHT) -> ModelInfo:
    by_id = {m.model_id: m for m in _models(catalog)}
    scores = balanced_scores(by_id.values(), quality_weight)
    return by_id[min(scores, key=lambda mid: (-scores[mid], mid))]


def cascade_order(catalog) -> list[ModelInfo]:
    return sorted(_models(catalog), key=lambda m: (-m.quality_score, m.combined_rate, m.model_id))


def route_cascade(catalog, attempt: Callable[[ModelInfo], object]) -> tuple[ModelInfo, object]:
    """Try models in descending quality order; return the first ``(model, result)`` that succeeds."""
    failures = []
    for model in cascade_order(catalog):
        try:
            return model, attempt(model)
        except Exception as exc:
            failures.append((model.model_id, exc))
    raise CascadeExhausted(failures)

