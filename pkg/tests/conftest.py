from __future__ import annotations

from decimal import Decimal

import pytest

from agentkernel.core import AgentSpec, EventBus, TeamDesign, TopologyParams
from agentkernel.core.costs import CostTracker, StaticRates
from agentkernel.topology import AgentResponse, TopologyContext


def agents(*names, role=None):
    return [AgentSpec(name=n, role=role or n, model_id="m") for n in names]


def design(kind, names, **params):
    return TeamDesign(agents=agents(*names), topology=kind, params=TopologyParams(**params))


class Scripted:
    """Executor dispatching on agent name to ``fn(request) -> str | AgentResponse``."""

    def __init__(self, scripts, default=None):
        self.scripts = scripts
        self.default = default
        self.calls = []

    def __call__(self, request):
        self.calls.append((request.agent.name, request.round, request.phase))
        fn = self.scripts.get(request.agent.name, self.default)
        if fn is None:
            return AgentResponse(text=request.prompt)
        out = fn(request)
        if isinstance(out, AgentResponse):
            return out
        return AgentResponse(text=out, tokens_in=10, tokens_out=5)


def fail(request):
    raise RuntimeError("scripted failure")


@pytest.fixture
def rates():
    return StaticRates({"m": (Decimal(1), Decimal(2)), "free": (0, 0)})


@pytest.fixture
def make_ctx(rates):
    def make(scripts, default=None, **kw):
        ex = Scripted(scripts, default)
        ctx = TopologyContext(ex, task_id="t", costs=CostTracker(rates), bus=EventBus(), **kw)
        ctx.script = ex
        return ctx

    return make
