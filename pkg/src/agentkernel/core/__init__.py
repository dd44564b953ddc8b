from .costs import CostTracker, StaticRates, check_budget
from .errors import *  # noqa: F401,F403
from .events import EVENT_TYPES, EventBus, Subscription, read_event_log
from .modes import STRATEGY_ORDER, gate_features, require_topology
from .tools import ToolRegistry, default_tools
from .types import (
    AgentSpec,
    CostRecord,
    Event,
    FeatureSet,
    Mode,
    TaskSpec,
    TaskType,
    TeamDesign,
    TopologyKind,
    TopologyParams,
)
