"""Belief-state model selection over three hidden context-quality states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from ..core.errors import DegenerateObservation, NoEligibleModel
from .catalog import ModelInfo
from .strategies import cost_norm

STATES = ("low", "medium", "high")
OBSERVATIONS = ("success_high", "success_low", "failure")
BELIEF_FLOOR = 0.01
BELIEF_CEILING = 0.98
COST_PENALTY = 0.3

DEFAULT_OBSERVATION_MODEL: dict[str, tuple[float, float, float]] = {
    "success_high": (0.1, 0.4, 0.8),
    "success_low": (0.4, 0.4, 0.15),
    "failure": (0.5, 0.2, 0.05),
}

# Expected reward multiplier applied to a model's quality score in each state.
DEFAULT_STATE_REWARD = (0.5, 0.8, 1.0)

RewardModel = Callable[[ModelInfo, int], float]


def validate_observation_model(model: Mapping[str, Sequence[float]]) -> None:
    for s in range(len(STATES)):
        total = sum(row[s] for row in model.values())
        if abs(total - 1) > 1e-9:
            raise ValueError(f"observation probabilities for state {STATES[s]} sum to {total}, not 1")


@dataclass(frozen=True)
class Belief:
    probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if len(self.probs) != len(STATES):
            raise ValueError("belief must have three components")
        if abs(sum(self.probs) - 1) > 1e-9 or min(self.probs) < 0:
            raise ValueError(f"not a distribution: {self.probs}")

    def __getitem__(self, state: str) -> float:
        return self.probs[STATES.index(state)]


def guard_belief(probs: Sequence[float], floor: float = BELIEF_FLOOR,
                 ceiling: float = BELIEF_CEILING) -> tuple[float, ...]:
    """Clip into ``[floor, ceiling]`` and renormalize without leaving the bounds.

    Clipped components are pinned and only the free ones are rescaled, repeating
    until nothing crosses a bound. A single global renormalization can push a
    floored component back under the floor.
    """
    n = len(probs)
    if not n * floor <= 1 <= n * ceiling:
        raise ValueError("floor/ceiling admit no distribution")
    p = [min(max(x, floor), ceiling) for x in probs]
    pinned: dict[int, float] = {}
    while True:
        free = [i for i in range(n) if i not in pinned]
        remaining = 1 - sum(pinned.values())
        mass = sum(p[i] for i in free)
        scaled = {i: p[i] * remaining / mass for i in free}
        crossed = False
        for i, v in scaled.items():
            if v < floor:
                pinned[i], crossed = floor, True
            elif v > ceiling:
                pinned[i], crossed = ceiling, True
        if not crossed:
            out = [pinned.get(i, scaled.get(i)) for i in range(n)]
            return tuple(out)


def update_belief(belief: Belief, obs: str,
                  model: Mapping[str, Sequence[float]] = DEFAULT_OBSERVATION_MODEL) -> Belief:
    """Bayes update ``b'(s) ∝ P(obs|s) b(s)`` followed by the floor/ceiling guard."""
    try:
        likelihood = model[obs]
    except KeyError:
        raise ValueError(f"unknown observation {obs!r}") from None
    raw = [l * b for l, b in zip(likelihood, belief.probs)]
    total = sum(raw)
    if total <= 0:
        raise DegenerateObservation(f"observation {obs!r} has zero likelihood under the current belief")
    return Belief(guard_belief([x / total for x in raw]))


def default_reward(model: ModelInfo, state: int) -> float:
    return model.quality_score * DEFAULT_STATE_REWARD[state]


def pomdp_scores(belief: Belief, catalog, reward: RewardModel = default_reward) -> dict[str, float]:
    models = list(catalog)
    if not models:
        raise NoEligibleModel("catalog is empty")
    norm = cost_norm(models)
    return {
        m.model_id: sum(b * reward(m, s) for s, b in enumerate(belief.probs)) - COST_PENALTY * norm[m.model_id]
        for m in models
    }


def route_pomdp(belief: Belief, catalog, reward: RewardModel = default_reward) -> ModelInfo:
    by_id = {m.model_id: m for m in catalog}
    scores = pomdp_scores(belief, by_id.values(), reward)
    return by_id[min(scores, key=lambda mid: (-scores[mid], mid))]
