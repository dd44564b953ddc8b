"""Model discovery, strategy selection and resilient model calls."""

from .bandit import QTable, budget_class, encode_state, model_count_bucket
from .catalog import Catalog, ModelInfo, discover_models, get_catalog, load_fixture_dir, load_structured
from .pomdp import (
    DEFAULT_OBSERVATION_MODEL,
    OBSERVATIONS,
    STATES,
    Belief,
    default_reward,
    guard_belief,
    pomdp_scores,
    route_pomdp,
    update_belief,
    validate_observation_model,
)
from .resilience import BreakerBoard, BreakerStatus, CircuitBreaker, RetryPolicy, call_model
from .strategies import (
    balanced_scores,
    cascade_order,
    cost_norm,
    route_balanced,
    route_cascade,
    route_cheapest,
    route_quality,
)


def select_model(strategy: str, catalog, belief=None, quality_min: float = 0.0, attempt=None):
    """Resolve a non-cascade strategy name to a model; cascade needs ``attempt`` and returns its first success."""
    if strategy == "cheapest":
        return route_cheapest(catalog, quality_min)
    if strategy == "quality":
        return route_quality(catalog)
    if strategy == "balanced":
        return route_balanced(catalog)
    if strategy == "pomdp":
        return route_pomdp(belief or Belief(), catalog)
    if strategy == "cascade":
        if attempt is None:
            return cascade_order(catalog)[0]
        return route_cascade(catalog, attempt)[0]
    raise ValueError(f"unknown strategy {strategy!r}")
