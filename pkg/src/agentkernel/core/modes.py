from __future__ import annotations

from .errors import FeatureGated, UnknownMode
from .types import FeatureSet, Mode, TopologyKind

STRATEGY_ORDER = ("cascade", "cheapest", "quality", "balanced", "pomdp")

_ALL_TOPOLOGIES = frozenset(TopologyKind)
_COMPANION_TOPOLOGIES = frozenset(
    {
        TopologyKind.SEQUENTIAL,
        TopologyKind.PARALLEL,
        TopologyKind.HIERARCHICAL,
        TopologyKind.DAG,
        TopologyKind.MIXTURE,
        TopologyKind.DEBATE,
    }
)

_GATES = {
    Mode.COMPANION: FeatureSet(
        allowed_topologies=_COMPANION_TOPOLOGIES,
        max_judges=2,
        allowed_strategies=("cascade", "cheapest", "quality"),
        rl_enabled=False,
        simulation_enabled=False,
        container_isolation=False,
    ),
    Mode.POWER: FeatureSet(
        allowed_topologies=_ALL_TOPOLOGIES,
        max_judges=5,
        allowed_strategies=STRATEGY_ORDER,
        rl_enabled=True,
        simulation_enabled=True,
        container_isolation=True,
    ),
}


def gate_features(mode) -> FeatureSet:
    try:
        return _GATES[Mode(mode)]
    except ValueError:
        raise UnknownMode(str(mode)) from None


def require_topology(features: FeatureSet, kind) -> None:
    kind = TopologyKind(kind)
    if kind not in features.allowed_topologies:
        raise FeatureGated(f"topology {kind.value!r} is not available in this mode")
