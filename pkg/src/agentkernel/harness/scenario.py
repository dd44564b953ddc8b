"""Scenario scripts: deterministic mock agents, judges and model catalogs for desk-scale runs."""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from string import Template
from typing import Any, Mapping, Optional

import jsonschema

from ..core.errors import AgentFailure, ProviderError, ScenarioError
from ..judge import Judge, JudgeProfile, Tier
from ..router.catalog import Catalog, ModelInfo, load_structured
from ..topology import AgentRequest, AgentResponse, ToolRequest

_SCORE = {"type": "number", "minimum": 0, "maximum": 1}
_SCORE_SPEC = {
    "oneOf": [_SCORE, {"type": "object", "additionalProperties": _SCORE, "minProperties": 1}],
}
_ROUND = {"type": "integer", "minimum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "models": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "provider": {"type": "string"},
                    "quality": _SCORE,
                    "input_rate": {"type": "number", "minimum": 0},
                    "output_rate": {"type": "number", "minimum": 0},
                    "context_window": {"type": "integer", "minimum": 1},
                },
                "additionalProperties": False,
            },
        },
        "agents": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "default": {"$ref": "#/$defs/response"},
                "rules": {"type": "array", "items": {"$ref": "#/$defs/rule"}},
            },
        },
        "judges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "tier": {"enum": [t.value for t in Tier]},
                    "confidence": _SCORE,
                    "reserve": {"type": "boolean"},
                    "default": _SCORE_SPEC,
                    "rounds": {
                        "type": "object",
                        "propertyNames": {"pattern": "^[1-9][0-9]*$"},
                        "additionalProperties": _SCORE_SPEC,
                    },
                },
            },
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"blocked": {"type": "array", "items": {"type": "string", "minLength": 1}}},
        },
        "task": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "prompt": {"type": "string"},
                "budget": {"type": "number", "exclusiveMinimum": 0},
                "mode": {"enum": ["companion", "power"]},
                "topology": {"type": "string"},
            },
        },
        "bench": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "budget": {"type": "number", "exclusiveMinimum": 0},
                "mode": {"enum": ["companion", "power"]},
                "trajectory": {"type": "array", "items": _SCORE, "minItems": 1},
                "tasks": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "prompt": {"type": "string", "minLength": 1},
                            "scores": {"type": "array", "items": _SCORE, "minItems": 1},
                        },
                    },
                },
            },
        },
    },
    "$defs": {
        "response": {
            "type": "object",
            "properties": {
                "text": {"type": "string"},
                "tokens_in": {"type": "integer", "minimum": 0},
                "tokens_out": {"type": "integer", "minimum": 0},
                "tool_requests": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["name"],
                        "additionalProperties": False,
                        "properties": {"name": {"type": "string"}, "args": {"type": "object"}},
                    },
                },
            },
        },
        "rule": {
            "allOf": [{"$ref": "#/$defs/response"}],
            "type": "object",
            "unevaluatedProperties": False,
            "properties": {
                "role": {"type": "string"},
                "agent": {"type": "string"},
                "model": {"type": "string"},
                "round": {"type": "integer", "minimum": 0},
                "iteration": _ROUND,
                "phase": {"type": "string"},
                "pattern": {"type": "string"},
                "fail": {"type": "string", "minLength": 1},
                "transient": {"type": "integer", "minimum": 0},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)

DEFAULT_MODEL = ModelInfo("local-echo", "local", 0.5, 0.0, 0.0)
DEFAULT_JUDGE_SCORE = 0.8
DEFAULT_CONFIDENCE = 0.9


@dataclass(frozen=True)
class AgentRule:
    role: Optional[str] = None
    agent: Optional[str] = None
    model: Optional[str] = None
    round: Optional[int] = None
    iteration: Optional[int] = None
    phase: Optional[str] = None
    pattern: Optional[str] = None
    text: Optional[str] = None
    tool_requests: tuple = ()
    tokens_in: int = 0
    tokens_out: int = 0
    fail: Optional[str] = None
    transient: int = 0

    def matches(self, request: AgentRequest) -> bool:
        agent = request.agent
        return ((self.role is None or self.role == agent.role)
                and (self.agent is None or self.agent == agent.name)
                and (self.model is None or self.model == agent.model_id)
                and (self.round is None or self.round == request.round)
                and (self.iteration is None or self.iteration == request.iteration)
                and (self.phase is None or self.phase == request.phase)
                and (self.pattern is None or re.search(self.pattern, request.prompt) is not None))


@dataclass(frozen=True)
class JudgeScript:
    judge_id: str
    tier: Tier = Tier.STANDARD
    confidence: float = DEFAULT_CONFIDENCE
    reserve: bool = False
    default: Any = DEFAULT_JUDGE_SCORE
    rounds: Mapping[int, Any] = field(default_factory=dict)

    def scores_for(self, profile: JudgeProfile, round: int) -> dict[str, float]:
        return expand_scores(self.rounds.get(round, self.default), profile)


def expand_scores(spec, profile: JudgeProfile) -> dict[str, float]:
    """A number scores every criterion; a mapping may use ``all`` for criteria it does not name."""
    if isinstance(spec, (int, float)):
        return {c: float(spec) for c in profile.names}
    fill = spec.get("all")
    out = {}
    for c in profile.names:
        value = spec.get(c, fill)
        if value is not None:
            out[c] = float(value)
    return out


@dataclass(frozen=True)
class Scenario:
    seed: int = 0
    models: tuple[ModelInfo, ...] = ()
    rules: tuple[AgentRule, ...] = ()
    default: Optional[AgentRule] = None
    judges: tuple[JudgeScript, ...] = ()
    blocked: Optional[tuple[str, ...]] = None
    task: Mapping[str, Any] = field(default_factory=dict)
    bench: Mapping[str, Any] = field(default_factory=dict)

    def catalog(self) -> Catalog:
        return Catalog.of(self.models or (DEFAULT_MODEL,))

    def panel(self) -> tuple[list[Judge], list[Judge]]:
        """Active and reserve judges; three default judges when the script names none."""
        scripts = self.judges or tuple(JudgeScript(f"judge-{i}") for i in (1, 2, 3))
        active = [Judge(s.judge_id, s.tier, scripted_port(s)) for s in scripts if not s.reserve]
        reserve = [Judge(s.judge_id, s.tier, scripted_port(s)) for s in scripts if s.reserve]
        return active, reserve

    def trajectory(self, task_index: int) -> list[float]:
        tasks = self.bench.get("tasks") or []
        if tasks:
            entry = tasks[task_index % len(tasks)]
            if "scores" in entry:
                return list(entry["scores"])
        if "trajectory" in self.bench:
            return list(self.bench["trajectory"])
        raise ScenarioError("no score trajectory for bench task", f"bench.tasks.{task_index}")

    def bench_prompt(self, task_index: int) -> str:
        tasks = self.bench.get("tasks") or []
        if tasks and tasks[task_index % len(tasks)].get("prompt"):
            return tasks[task_index % len(tasks)]["prompt"]
        return f"benchmark task {task_index + 1}: analyze the data and report the findings"


def _path(error: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def parse_scenario(doc: Optional[Mapping]) -> Scenario:
    doc = doc or {}
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario must be a mapping", "<root>")
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise ScenarioError(first.message, _path(first))
    agents = doc.get("agents", {})
    rules = []
    for i, r in enumerate(agents.get("rules", [])):
        if "pattern" in r:
            try:
                re.compile(r["pattern"])
            except re.error as exc:
                raise ScenarioError(f"bad pattern: {exc}", f"agents.rules.{i}.pattern") from None
        rules.append(_rule(r))
    judges = tuple(
        JudgeScript(j["id"], Tier(j.get("tier", "standard")), j.get("confidence", DEFAULT_CONFIDENCE),
                    j.get("reserve", False), j.get("default", DEFAULT_JUDGE_SCORE),
                    {int(k): v for k, v in j.get("rounds", {}).items()})
        for j in doc.get("judges", [])
    )
    models = tuple(ModelInfo.from_dict(m, provider=m.get("provider", "mock")) for m in doc.get("models", []))
    policy = doc.get("policy")
    return Scenario(
        seed=doc.get("seed", 0), models=models, rules=tuple(rules),
        default=_rule(agents["default"]) if "default" in agents else None, judges=judges,
        blocked=tuple(policy.get("blocked", ())) if policy is not None else None,
        task=dict(doc.get("task", {})), bench=dict(doc.get("bench", {})),
    )


def _rule(r: Mapping) -> AgentRule:
    tools = tuple(ToolRequest(t["name"], dict(t.get("args", {}))) for t in r.get("tool_requests", ()))
    keys = ("role", "agent", "model", "round", "iteration", "phase", "pattern", "text", "tokens_in", "tokens_out",
            "fail", "transient")
    return AgentRule(**{k: r[k] for k in keys if k in r}, tool_requests=tools)


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = load_structured(path)
    except (OSError, ValueError) as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", str(path)) from None
    return parse_scenario(doc)


class ScriptedExecutor:
    """Executor answering from the scenario's first matching rule.

    Without a match the prompt is echoed back at zero cost. ``transient``
    rules raise a retryable provider error that many times before answering.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.calls: list[tuple[str, int, int]] = []
        self._transient_left = {i: r.transient for i, r in enumerate(scenario.rules)}
        self._lock = threading.Lock()

    def __call__(self, request: AgentRequest) -> AgentResponse:
        with self._lock:
            self.calls.append((request.agent.name, request.round, request.iteration))
            index, rule = self._match(request)
            if index is not None and self._transient_left[index] > 0:
                self._transient_left[index] -= 1
                raise ProviderError(f"scripted transient failure for {request.agent.name}")
        if rule is None:
            return AgentResponse(text=request.prompt)
        if rule.fail:
            raise AgentFailure(request.agent.name, request.turn, rule.fail)
        text = request.prompt if rule.text is None else _render(rule.text, request)
        tools = rule.tool_requests if request.turn == 1 else ()
        return AgentResponse(text, tools, rule.tokens_in, rule.tokens_out)

    def _match(self, request: AgentRequest):
        for i, rule in enumerate(self.scenario.rules):
            if rule.matches(request):
                return i, rule
        return None, self.scenario.default


def _render(text: str, request: AgentRequest) -> str:
    return Template(text).safe_substitute(name=request.agent.name, role=request.agent.role,
                                          round=request.round, iteration=request.iteration,
                                          prompt=request.prompt)


def scripted_port(script: JudgeScript):
    def port(output: str, profile: JudgeProfile, round: int):
        return script.scores_for(profile, round), script.confidence

    return port
