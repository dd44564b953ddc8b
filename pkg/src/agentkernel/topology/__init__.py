"""Twelve multi-agent execution topologies over a shared message hub."""

from __future__ import annotations

from typing import Optional

from ..core.errors import AgentFailure, DesignError
from ..core.modes import require_topology
from ..core.types import FeatureSet, TeamDesign, TopologyKind, TopologyParams
from .context import (
    MAX_TOOL_ITERATIONS,
    AgentOutput,
    AgentRequest,
    AgentResponse,
    Call,
    ToolRequest,
    TopologyContext,
)
from .hub import AgentOutcome, Message, MsgHub, RunResult, Termination, labeled
from .replay import replay_final_output
from .runners import (
    APPROVED,
    CONSENSUS,
    DEFAULT_MAX_ROUNDS,
    DONE,
    NO_UPDATE,
    RUNNERS,
    dag_levels,
    forest_heights,
    grid_neighbors,
    max_rounds_for,
    parse_vote,
    run_circular,
    run_dag,
    run_debate,
    run_forest,
    run_grid,
    run_hierarchical,
    run_maker,
    run_mesh,
    run_mixture,
    run_parallel,
    run_sequential,
    run_star,
    vote_passes,
)
from .validation import structure_violations


def execute_topology(design: TeamDesign, ctx: TopologyContext, prompt: str,
                     features: Optional[FeatureSet] = None) -> RunResult:
    """Dispatch to the runner for ``design.topology`` with swarm lifecycle events."""
    if features is not None:
        require_topology(features, design.topology)
    problems = structure_violations(design)
    if problems:
        raise DesignError(problems)
    runner = RUNNERS[design.topology]
    _emit(ctx, "swarm:started", topology=design.topology.value, agents=design.names)
    try:
        result = runner(design, ctx, prompt)
    except AgentFailure as exc:
        _emit(ctx, "swarm:failed", topology=design.topology.value, agent=exc.agent, reason=exc.reason)
        raise
    _emit(ctx, "swarm:completed", topology=design.topology.value, rounds=result.rounds_executed,
          termination=result.termination.value)
    return result


def _emit(ctx: TopologyContext, type: str, **payload) -> None:
    if ctx.bus is not None:
        ctx.bus.emit(type, ctx.task_id, payload)
