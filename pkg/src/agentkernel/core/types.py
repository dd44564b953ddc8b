"""Domain value types shared by every subsystem."""

from __future__ import annotations

import uuid
from dataclasses import asdict, dataclass, field, replace
from decimal import Decimal
from enum import Enum
from typing import Any, Optional


class TaskType(str, Enum):
    CODE = "code"
    RESEARCH = "research"
    ANALYSIS = "analysis"
    CREATIVE = "creative"
    CUSTOM = "custom"


class Mode(str, Enum):
    COMPANION = "companion"
    POWER = "power"


class TopologyKind(str, Enum):
    SEQUENTIAL = "sequential"
    PARALLEL = "parallel"
    HIERARCHICAL = "hierarchical"
    DAG = "dag"
    MIXTURE = "mixture"
    DEBATE = "debate"
    MESH = "mesh"
    STAR = "star"
    CIRCULAR = "circular"
    GRID = "grid"
    FOREST = "forest"
    MAKER = "maker"


@dataclass
class TaskSpec:
    """A user task. ``validate`` reports problems instead of raising so the
    orchestrator can surface a budget problem as a contract violation."""

    prompt: str
    budget: float
    task_type: Optional[TaskType] = None
    mode: Mode = Mode.POWER
    id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.task_type is not None:
            self.task_type = TaskType(self.task_type)

    def validate(self) -> list[str]:
        problems = []
        if not self.prompt or not self.prompt.strip():
            problems.append("prompt must be non-empty")
        if not self.budget > 0:
            problems.append("budget must be > 0")
        return problems

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "prompt": self.prompt,
            "budget": self.budget,
            "task_type": self.task_type.value if self.task_type else None,
            "mode": self.mode.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TaskSpec":
        return cls(
            prompt=data["prompt"],
            budget=data["budget"],
            task_type=data.get("task_type"),
            mode=data.get("mode", "power"),
            id=data["id"],
        )


@dataclass(frozen=True)
class AgentSpec:
    name: str
    role: str
    system_prompt: str = ""
    tools: tuple[str, ...] = ()
    model_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tools", tuple(self.tools))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tools"] = list(self.tools)
        return d


@dataclass(frozen=True)
class TopologyParams:
    max_rounds: Optional[int] = None
    grid_rows: Optional[int] = None
    grid_cols: Optional[int] = None
    vote_threshold: float = 0.66
    dag_edges: tuple[tuple[str, str], ...] = ()
    # child -> parent; None marks a root
    tree_edges: tuple[tuple[str, Optional[str]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dag_edges", tuple(tuple(e) for e in self.dag_edges))
        if isinstance(self.tree_edges, dict):
            object.__setattr__(self, "tree_edges", tuple(self.tree_edges.items()))
        else:
            object.__setattr__(self, "tree_edges", tuple(tuple(e) for e in self.tree_edges))

    @property
    def parents(self) -> dict[str, Optional[str]]:
        return dict(self.tree_edges)

    def to_dict(self) -> dict:
        return {
            "max_rounds": self.max_rounds,
            "grid_rows": self.grid_rows,
            "grid_cols": self.grid_cols,
            "vote_threshold": self.vote_threshold,
            "dag_edges": [list(e) for e in self.dag_edges],
            "tree_edges": [list(e) for e in self.tree_edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TopologyParams":
        return cls(
            max_rounds=data.get("max_rounds"),
            grid_rows=data.get("grid_rows"),
            grid_cols=data.get("grid_cols"),
            vote_threshold=data.get("vote_threshold", 0.66),
            dag_edges=tuple(tuple(e) for e in data.get("dag_edges", ())),
            tree_edges=tuple(tuple(e) for e in data.get("tree_edges", ())),
        )


@dataclass(frozen=True)
class TeamDesign:
    agents: tuple[AgentSpec, ...]
    topology: TopologyKind
    params: TopologyParams = TopologyParams()

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "topology", TopologyKind(self.topology))

    @property
    def tool_map(self) -> dict[str, tuple[str, ...]]:
        return {a.name: a.tools for a in self.agents}

    @property
    def model_map(self) -> dict[str, str]:
        return {a.name: a.model_id for a in self.agents}

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.agents]

    def agent(self, name: str) -> AgentSpec:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    def with_agents(self, agents) -> "TeamDesign":
        return replace(self, agents=tuple(agents))

    def signature(self) -> tuple:
        """(topology, agent count, sorted roles): identifies a team shape."""
        return (self.topology.value, len(self.agents), tuple(sorted(a.role for a in self.agents)))

    def to_dict(self) -> dict:
        return {
            "agents": [a.to_dict() for a in self.agents],
            "topology": self.topology.value,
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TeamDesign":
        return cls(
            agents=tuple(AgentSpec(**{**a, "tools": tuple(a.get("tools", ()))}) for a in data["agents"]),
            topology=data["topology"],
            params=TopologyParams.from_dict(data.get("params", {})),
        )


@dataclass(frozen=True)
class CostRecord:
    task_id: str
    model_id: str
    tokens_in: int
    tokens_out: int
    usd: Decimal

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "model_id": self.model_id,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "usd": str(self.usd),
        }


@dataclass(frozen=True)
class Event:
    type: str
    task_id: str
    payload: dict[str, Any] = field(default_factory=dict)
    seq: int = 0
    timestamp: float = 0.0

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "type": self.type,
            "taskId": self.task_id,
            "timestamp": self.timestamp,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class FeatureSet:
    allowed_topologies: frozenset
    max_judges: int
    allowed_strategies: tuple[str, ...]
    rl_enabled: bool
    simulation_enabled: bool
    container_isolation: bool = False
