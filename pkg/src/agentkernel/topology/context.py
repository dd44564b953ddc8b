"""Agent execution callback shared by every topology.

``TopologyContext.execute_agent`` prepends the agent's system prompt, runs the
multi-turn tool loop, records cost per turn and converts executor errors into
:class:`AgentFailure`.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Optional, Sequence

from ..core.costs import CostTracker
from ..core.errors import AgentFailure, KernelError
from ..core.events import EventBus
from ..core.tools import ToolRegistry, default_tools
from ..core.types import AgentSpec, CostRecord

MAX_TOOL_ITERATIONS = 10


@dataclass(frozen=True)
class ToolRequest:
    name: str
    args: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AgentRequest:
    agent: AgentSpec
    system_prompt: str
    prompt: str
    round: int = 0
    turn: int = 1
    phase: str = "answer"
    iteration: int = 1
    tool_results: tuple[tuple[str, str], ...] = ()

    @property
    def messages(self) -> list[dict]:
        msgs = [{"role": "system", "content": self.system_prompt}, {"role": "user", "content": self.prompt}]
        msgs += [{"role": "tool", "name": n, "content": r} for n, r in self.tool_results]
        return msgs


@dataclass(frozen=True)
class AgentResponse:
    text: str
    tool_requests: tuple[ToolRequest, ...] = ()
    tokens_in: int = 0
    tokens_out: int = 0
    # set when a router served the call from a different model than the agent's own
    model_id: str = ""


Executor = Callable[[AgentRequest], AgentResponse]


@dataclass
class AgentOutput:
    agent: str
    output: str
    records: list[CostRecord] = field(default_factory=list)
    turns: int = 1
    tool_calls: int = 0

    @property
    def cost(self) -> Decimal:
        return sum((r.usd for r in self.records), Decimal(0))


@dataclass(frozen=True)
class Call:
    agent: AgentSpec
    prompt: str
    round: int = 0
    phase: str = "answer"


class TopologyContext:
    """Everything a topology needs to run agents.

    ``order`` controls how a batch of independent calls is scheduled:
    ``"declared"`` runs them in declaration order, ``"shuffled"`` in a
    seeded random order, ``"threads"`` concurrently.  Results are always
    returned in declaration order.
    """

    def __init__(
        self,
        executor: Executor,
        task_id: str = "task",
        costs: Optional[CostTracker] = None,
        tools: Optional[ToolRegistry] = None,
        bus: Optional[EventBus] = None,
        call_model: Optional[Callable[[AgentRequest, Executor], AgentResponse]] = None,
        before_execute: Optional[Callable[[AgentSpec], None]] = None,
        order: str = "declared",
        rng: Optional[random.Random] = None,
        iteration: int = 1,
        max_tool_iterations: int = MAX_TOOL_ITERATIONS,
        max_workers: int = 8,
    ):
        self.executor = executor
        self.task_id = task_id
        self.costs = costs
        self.tools = tools if tools is not None else default_tools()
        self.bus = bus
        self.call_model = call_model
        self.before_execute = before_execute
        self.order = order
        self.rng = rng or random.Random(0)
        self.iteration = iteration
        self.max_tool_iterations = max_tool_iterations
        self.max_workers = max_workers
        self.executions = 0

    def execute_agent(self, agent: AgentSpec, prompt: str, round: int = 0, phase: str = "answer") -> AgentOutput:
        if self.before_execute is not None:
            self.before_execute(agent)
        self.executions += 1
        out = AgentOutput(agent=agent.name, output="", turns=0)
        tool_results: list[tuple[str, str]] = []
        tool_iterations = 0
        while True:
            out.turns += 1
            request = AgentRequest(agent, agent.system_prompt, prompt, round, out.turns, phase,
                                   self.iteration, tuple(tool_results))
            try:
                if self.call_model is not None:
                    response = self.call_model(request, self.executor)
                else:
                    response = self.executor(request)
            except AgentFailure as exc:
                self._emit("agent:failed", agent=agent.name, turn=out.turns, reason=exc.reason)
                raise
            except KernelError as exc:
                self._emit("agent:failed", agent=agent.name, turn=out.turns, reason=str(exc))
                raise AgentFailure(agent.name, out.turns, str(exc)) from exc
            except Exception as exc:  # scripted or executor bug; surfaced as agent failure
                self._emit("agent:failed", agent=agent.name, turn=out.turns, reason=str(exc))
                raise AgentFailure(agent.name, out.turns, str(exc)) from exc
            if self.costs is not None:
                out.records.append(self.costs.record(self.task_id, response.model_id or agent.model_id,
                                                     response.tokens_in, response.tokens_out))
            if not response.tool_requests:
                out.output = response.text
                break
            for req in response.tool_requests:
                try:
                    result = self.tools.invoke(req.name, req.args)
                except Exception as exc:
                    result = f"error: {exc}"
                tool_results.append((req.name, result))
                out.tool_calls += 1
                self._emit("tool:invoked", agent=agent.name, tool=req.name, result=result)
            tool_iterations += 1
            if tool_iterations >= self.max_tool_iterations:
                out.output = response.text
                break
        self._emit("agent:executed", agent=agent.name, round=round, phase=phase, turns=out.turns,
                   cost=str(out.cost))
        return out

    def run_batch(self, calls: Sequence[Call]) -> list[AgentOutput | AgentFailure]:
        """Run independent calls; failures are returned, not raised."""

        def one(call: Call):
            try:
                return self.execute_agent(call.agent, call.prompt, call.round, call.phase)
            except AgentFailure as exc:
                return exc

        if self.order == "threads" and len(calls) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                return list(pool.map(one, calls))
        indices = list(range(len(calls)))
        if self.order == "shuffled":
            self.rng.shuffle(indices)
        results: list = [None] * len(calls)
        for i in indices:
            results[i] = one(calls[i])
        return results

    def _emit(self, type: str, **payload) -> None:
        if self.bus is not None:
            self.bus.emit(type, self.task_id, payload)
