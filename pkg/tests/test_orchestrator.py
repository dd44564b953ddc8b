import json
import threading
import time
from decimal import Decimal

import pytest

from agentkernel.core import AgentSpec, FeatureGated, InvalidState, TaskSpec, TeamDesign, gate_features
from agentkernel.core.costs import CostTracker, StaticRates
from agentkernel.forge import template_design
from agentkernel.harness import ScriptedExecutor, parse_scenario
from agentkernel.judge import JudgeScore, Tier, Vote
from agentkernel.orchestrator import (
    STEP_NAMES,
    Interrupted,
    KernelConfig,
    Orchestrator,
    PolicyRule,
    Ports,
    SteeringCommand,
    SteerKind,
    TaskState,
    TaskStatus,
    capture_behavior,
    composite_reward,
    load_config,
    security_check,
    simulate,
)
from agentkernel.router import Catalog, ModelInfo
from agentkernel.topology import TopologyContext, run_parallel, run_sequential

PROMPT = "Summarize the quarterly figures and explain the trend"


def build(tmp_path, doc=None, executor=None, memory=None, **cfg):
    scenario = parse_scenario(doc or {})
    active, reserve = scenario.panel()
    ex = executor or ScriptedExecutor(scenario)
    cfg.setdefault("retry_base_delay", 0.0)
    config = KernelConfig(state_dir=tmp_path, seed=scenario.seed, **cfg)
    orch = Orchestrator(Ports(ex, active, reserve, memory=memory), scenario.catalog(), config)
    return orch, ex


def steps(orch, task_id):
    return [e.payload["step"] for e in orch.bus.log(task_id) if e.type == "task:step"]


def of_type(orch, task_id, type):
    return [e for e in orch.bus.log(task_id) if e.type == type]


def judges(*scores, later=0.9):
    return [{"id": f"j{i}", "rounds": {"1": s}, "default": later} for i, s in enumerate(scores)]


MODELS = [{"id": "m1", "provider": "p1", "quality": 0.9, "input_rate": 1, "output_rate": 2},
          {"id": "m2", "provider": "p2", "quality": 0.6, "input_rate": 0.5, "output_rate": 0.5}]


def test_step_names_cover_twelve_steps():
    assert sorted(STEP_NAMES) == list(range(1, 13))


def test_first_round_approval_completes_in_twelve_steps(tmp_path):
    orch, ex = build(tmp_path, {"judges": judges(0.9, 0.9, 0.9)})
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    assert result.status is TaskStatus.COMPLETED
    assert result.redesign_count == 0
    assert steps(orch, "t1") == list(range(1, 13))
    out = tmp_path / "output" / "t1"
    assert (out / "output.txt").read_text() == result.output
    doc = json.loads((out / "result.json").read_text())
    assert doc["status"] == "completed" and doc["design"]["topology"] and doc["verdicts"]
    assert doc["reward"] == pytest.approx(result.reward)
    assert not (tmp_path / "checkpoints" / "t1.json").exists()
    assert "checkpoint:cleared" in orch.bus.types("t1")
    assert orch.status("t1").status is TaskStatus.COMPLETED


def test_event_log_file_has_required_fields(tmp_path):
    orch, _ = build(tmp_path)
    orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    lines = (tmp_path / "events" / "t1.jsonl").read_text().splitlines()
    docs = [json.loads(line) for line in lines]
    assert all(set(d) == {"seq", "type", "taskId", "timestamp", "payload"} for d in docs)
    assert [d["seq"] for d in docs] == list(range(1, len(docs) + 1))
    assert {d["taskId"] for d in docs} == {"t1"}


def test_rejections_escalate_after_five_redesigns(tmp_path):
    orch, ex = build(tmp_path, {"judges": [{"id": f"j{i}", "default": 0.2} for i in range(3)]})
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    assert result.status is TaskStatus.PENDING_HUMAN_REVIEW
    assert result.redesign_count == 5
    assert steps(orch, "t1") == [1, 2] + [3, 4, 5, 6, 7] * 5 + [8, 12]
    kinds = [e.payload["kind"] for e in of_type(orch, "t1", "forge:redesign")]
    assert kinds == ["refine", "refine", "radical", "radical"]
    assert of_type(orch, "t1", "task:escalated")
    assert "rl:updated" not in orch.bus.types("t1")
    assert json.loads((tmp_path / "output" / "t1" / "result.json").read_text())["status"] == "pending_human_review"


def test_redesign_reenters_at_design_and_then_completes(tmp_path):
    orch, _ = build(tmp_path, {"judges": judges(0.2, 0.2, 0.2)})
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    assert result.status is TaskStatus.COMPLETED and result.redesign_count == 1
    assert steps(orch, "t1") == [1, 2, 3, 4, 5, 6, 7, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]
    assert [v["round"] for v in result.verdicts] == [1, 2]


def test_blocked_prompt_fails_at_security_with_no_executions(tmp_path):
    orch, ex = build(tmp_path)
    result = orch.run_task(TaskSpec("clean up with rm -rf /var", 1.0, id="t1"))
    assert result.status is TaskStatus.FAILED
    assert "rm -rf" in result.reason
    assert ex.calls == []
    assert steps(orch, "t1") == [1, 2, 3, 4, 5]
    assert of_type(orch, "t1", "security:blocked")[0].payload["rule"] == "rm -rf"


def test_budget_precondition_fails_fast(tmp_path):
    orch, ex = build(tmp_path)
    result = orch.run_task(TaskSpec(PROMPT, 0, id="t1"))
    assert result.status is TaskStatus.FAILED
    assert ex.calls == []
    assert steps(orch, "t1") == [1]
    assert of_type(orch, "t1", "contract:violation")[0].payload["contract"] == "budget"


@pytest.mark.parametrize("low, redesigns", [(0.37, 1), (0.4, 0)])
def test_quality_contract_boundary(tmp_path, low, redesigns):
    # two approving judges outvote the third, so only the quality floor decides
    orch, _ = build(tmp_path, {"judges": judges(0.7, 0.7, low)})
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    first = result.verdicts[0]
    assert first["decision"] == "approve"
    assert first["score"] == pytest.approx(0.59 if low == 0.37 else 0.6, abs=1e-12)
    assert result.redesign_count == redesigns
    violations = [e.payload["contract"] for e in of_type(orch, "t1", "contract:violation")]
    assert violations == (["quality"] if redesigns else [])


def test_agent_failure_counts_as_rejected_round(tmp_path):
    doc = {"agents": {"rules": [{"role": "implementer", "iteration": 1, "fail": "model refused"}]}}
    orch, _ = build(tmp_path, doc)
    result = orch.run_task(TaskSpec(PROMPT, 1.0, task_type="code", id="t1"))
    assert result.status is TaskStatus.COMPLETED
    assert result.redesign_count == 1
    assert result.verdicts[0]["decision"] == "reject"
    assert "agent:failed" in orch.bus.types("t1")


def test_transient_errors_are_retried(tmp_path):
    doc = {"agents": {"rules": [{"role": "analyst", "transient": 2, "text": "fine"}]}}
    orch, ex = build(tmp_path, doc)
    result = orch.run_task(TaskSpec(PROMPT, 1.0, task_type="analysis", id="t1"))
    assert result.status is TaskStatus.COMPLETED
    assert [e.payload["attempt"] for e in of_type(orch, "t1", "model:retry")] == [1, 2]


def test_cascade_falls_back_to_next_model(tmp_path):
    doc = {"models": MODELS, "agents": {"rules": [{"model": "m1", "transient": 3}]}}
    orch, _ = build(tmp_path, doc)
    result = orch.run_task(TaskSpec(PROMPT, 1.0, task_type="analysis", id="t1"))
    assert result.status is TaskStatus.COMPLETED
    assert result.strategy == "cascade" and result.model_id == "m1"
    failed = of_type(orch, "t1", "model:call_failed")
    assert [e.payload["model"] for e in failed] == ["m1"]
    assert orch.costs.records("t1")[0].model_id == "m2"


def test_budget_cap_escalates_once_crossed(tmp_path):
    doc = {"models": MODELS[:1], "agents": {"default": {"text": "x", "tokens_in": 1000, "tokens_out": 1000}},
           "judges": [{"id": f"j{i}", "default": 0.2} for i in range(3)]}
    orch, ex = build(tmp_path, doc)
    # each call costs 0.003; the cap is 3 x 0.004 = 0.012
    result = orch.run_task(TaskSpec(PROMPT, 0.004, task_type="analysis", id="t1"))
    assert result.status is TaskStatus.PENDING_HUMAN_REVIEW
    exceeded = of_type(orch, "t1", "budget:exceeded")
    assert len(exceeded) == 1
    assert Decimal(exceeded[0].payload["spent"]) == Decimal("0.015")
    assert len(ex.calls) == 5
    assert result.spent == Decimal("0.015")


def test_companion_mode_skips_simulation_and_learning(tmp_path):
    orch, _ = build(tmp_path)
    result = orch.run_task(TaskSpec(PROMPT, 1.0, mode="companion", id="t1"))
    types = orch.bus.types("t1")
    assert result.status is TaskStatus.COMPLETED
    assert "simulation:estimated" not in types and "rl:updated" not in types
    assert result.estimate is None
    assert steps(orch, "t1") == list(range(1, 13))


def test_power_mode_learns_and_stores_design(tmp_path):
    orch, _ = build(tmp_path)
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    updated = of_type(orch, "t1", "rl:updated")[0].payload
    assert updated["reward"] == pytest.approx(result.reward)
    assert orch.qtable.q(updated["stateKey"], result.strategy) == pytest.approx(updated["q"])
    assert len(orch.store) == 1
    orch.close()
    snapshot = json.loads((tmp_path / "qtable.json").read_text())
    assert snapshot["episodes"] == 1


def test_topology_override_is_honored_and_gated(tmp_path):
    orch, _ = build(tmp_path)
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"), topology="debate")
    assert result.design.topology.value == "debate"
    with pytest.raises(FeatureGated):
        orch.run_task(TaskSpec(PROMPT, 1.0, mode="companion", id="t2"), topology="mesh")


def test_panel_collapse_escalates(tmp_path):
    def forged(output, profile, round):
        per = {c: 0.9 for c in profile.names}
        return JudgeScore("liar", Tier.STANDARD, per, 0.1, Vote.REJECT)

    scenario = parse_scenario({})
    from agentkernel.judge import Judge

    panel = [Judge(f"j{i}", Tier.STANDARD, forged) for i in range(3)]
    orch = Orchestrator(Ports(ScriptedExecutor(scenario), panel), scenario.catalog(), KernelConfig(state_dir=tmp_path))
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    assert result.status is TaskStatus.PENDING_HUMAN_REVIEW
    assert "judge:panel_collapsed" in orch.bus.types("t1")


def test_memory_context_is_prefixed(tmp_path):
    seen = []
    doc = {"agents": {"rules": [{"pattern": "REMEMBER", "text": "saw memory"}]}}
    orch, ex = build(tmp_path, doc, memory=lambda spec: seen.append(spec.id) or "REMEMBER: prior note")
    result = orch.run_task(TaskSpec(PROMPT, 1.0, task_type="analysis", id="t1"))
    assert seen == ["t1"]
    assert of_type(orch, "t1", "memory:injected")[0].payload["chars"] == len("REMEMBER: prior note")
    assert "saw memory" in result.output


# -- steering ---------------------------------------------------------------------


def test_pause_then_resume_completes(tmp_path):
    holder = {}

    def memory(spec):
        holder["orch"].steer(spec.id, SteeringCommand("pause"))
        timer = threading.Timer(0.1, lambda: holder["orch"].steer(spec.id, SteeringCommand("resume")))
        timer.start()
        return ""

    orch, _ = build(tmp_path, memory=memory, poll_interval=0.01)
    holder["orch"] = orch
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    assert result.status is TaskStatus.COMPLETED
    types = orch.bus.types("t1")
    assert types.index("task:paused") < types.index("task:resumed")
    paused = of_type(orch, "t1", "task:resumed")[0].payload["pausedSeconds"]
    assert paused >= 0.09
    # paused before step 3 started
    assert types[types.index("task:resumed") + 1] == "task:step"


def test_pause_timeout_cancels(tmp_path):
    holder = {}

    def memory(spec):
        holder["orch"].steer(spec.id, SteeringCommand("pause"))
        return ""

    orch, ex = build(tmp_path, memory=memory, poll_interval=0.01, pause_timeout=0.5)
    holder["orch"] = orch
    start = time.monotonic()
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    assert time.monotonic() - start >= 0.5
    assert result.status is TaskStatus.CANCELLED
    assert "timed out" in result.reason
    assert ex.calls == []


def test_redirect_restarts_with_same_id(tmp_path):
    holder = {"sent": False}
    scenario = parse_scenario({"judges": judges(0.2, 0.2, 0.2)})
    base = ScriptedExecutor(scenario)

    def executor(request):
        if request.iteration == 2 and not holder["sent"]:
            holder["sent"] = True
            holder["orch"].steer("t1", SteeringCommand("redirect", "Explain the churn numbers instead"))
        return base(request)

    orch, _ = build(tmp_path, {"judges": judges(0.2, 0.2, 0.2)}, executor=executor)
    holder["orch"] = orch
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    assert result.status is TaskStatus.COMPLETED
    assert result.task_id == "t1"
    redirected = of_type(orch, "t1", "task:redirected")
    assert redirected[0].payload["prompt"] == "Explain the churn numbers instead"
    counts = [e.payload["count"] for e in of_type(orch, "t1", "forge:redesign")]
    assert counts == [1, 1]  # the redesign counter restarted
    s = steps(orch, "t1")
    restart = s.index(1, 1)
    assert s[restart:restart + 2] == [1, 2]
    assert orch.status("t1").prompt == "Explain the churn numbers instead"


def test_cancel_stops_before_next_agent(tmp_path):
    holder = {}
    scenario = parse_scenario({})
    base = ScriptedExecutor(scenario)

    def executor(request):
        holder["orch"].steer("t1", SteeringCommand("cancel"))
        return base(request)

    orch, _ = build(tmp_path, executor=executor)
    holder["orch"] = orch
    result = orch.run_task(TaskSpec(PROMPT, 1.0, task_type="code", id="t1"), topology="sequential")
    assert result.status is TaskStatus.CANCELLED
    assert len(base.calls) == 1
    assert orch.bus.types("t1")[-1] == "checkpoint:cleared"
    assert "task:cancelled" in orch.bus.types("t1")


def test_steering_terminal_or_unknown_task_is_invalid(tmp_path):
    orch, _ = build(tmp_path)
    orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    with pytest.raises(InvalidState):
        orch.steer("t1", SteeringCommand("pause"))
    with pytest.raises(InvalidState):
        orch.steer("nope", SteeringCommand("pause"))


def test_steering_command_validation():
    with pytest.raises(ValueError):
        SteeringCommand("redirect", "  ")
    cmd = SteeringCommand("redirect", "x")
    assert SteeringCommand.from_dict(cmd.to_dict()) == cmd
    assert cmd.kind is SteerKind.REDIRECT


def test_steering_through_inbox_file(tmp_path):
    from agentkernel.orchestrator import post_command

    def memory(spec):
        post_command(tmp_path / "steer" / f"{spec.id}.jsonl", SteeringCommand("cancel"))
        return ""

    orch, ex = build(tmp_path, memory=memory)
    result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    assert result.status is TaskStatus.CANCELLED and ex.calls == []


# -- checkpoints ---------------------------------------------------------------------


def _run_clean(tmp_path, doc, spec):
    orch, _ = build(tmp_path, doc)
    result = orch.run_task(spec)
    return result, orch.bus.types(spec.id)


def test_kill_after_step_six_and_restore(tmp_path):
    doc = {"seed": 3, "judges": judges(0.2, 0.2, 0.2)}
    spec = TaskSpec(PROMPT, 1.0, id="t1")
    clean, clean_types = _run_clean(tmp_path / "clean", doc, spec)

    orch, _ = build(tmp_path / "killed", doc)
    with pytest.raises(Interrupted) as info:
        orch.run_task(spec, stop_after=6)
    assert info.value.step == 6
    saved = json.loads((tmp_path / "killed" / "checkpoints" / "t1.json").read_text())
    assert saved["step"] == 6 and saved["nextStep"] == 7

    before = len(orch.bus.log("t1"))
    fresh, _ = build(tmp_path / "killed", doc)
    restored = fresh.resume("t1")
    assert restored.output == clean.output
    assert restored.status is clean.status
    assert restored.spent == clean.spent
    assert fresh.bus.types("t1") == clean_types
    assert fresh.bus.log("system")[-1].type == "checkpoint:restored"
    resumed = [e.payload["step"] for e in fresh.bus.log("t1")[before:] if e.type == "task:step"]
    assert resumed[0] == 7
    assert not (tmp_path / "killed" / "checkpoints" / "t1.json").exists()


def test_restore_unknown_task_starts_fresh(tmp_path):
    orch, _ = build(tmp_path)
    with pytest.raises(InvalidState):
        orch.resume("ghost")
    result = orch.resume("ghost", spec=TaskSpec(PROMPT, 1.0, id="ghost"))
    assert result.status is TaskStatus.COMPLETED
    assert steps(orch, "ghost") == list(range(1, 13))


# -- concurrency ----------------------------------------------------------------------


def test_concurrent_tasks_are_isolated(tmp_path):
    orch, _ = build(tmp_path)
    results = {}

    def go(i):
        results[i] = orch.run_task(TaskSpec(PROMPT, 1.0, id=f"c{i}"))

    threads = [threading.Thread(target=go, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for i in range(4):
        assert results[i].status is TaskStatus.COMPLETED
        assert steps(orch, f"c{i}") == list(range(1, 13))
        assert {e.task_id for e in orch.bus.log(f"c{i}")} == {f"c{i}"}


# -- building blocks --------------------------------------------------------------


def test_task_state_transitions():
    state = TaskState("t")
    state.transition(TaskStatus.RUNNING)
    state.transition(TaskStatus.PAUSED)
    with pytest.raises(InvalidState):
        state.transition(TaskStatus.COMPLETED)
    state.transition(TaskStatus.RUNNING)
    state.transition(TaskStatus.COMPLETED)
    assert state.terminal
    with pytest.raises(InvalidState):
        state.transition(TaskStatus.RUNNING)
    assert TaskState.from_dict(state.to_dict()) == state


@pytest.mark.parametrize("rules, prompt, allowed", [
    ((), "anything at all; rm -rf", True),
    ((PolicyRule("rm -rf"),), "please rm -rf the cache", False),
    ((PolicyRule("rm -rf"),), "tidy the cache", True),
    ((PolicyRule("drop * table"),), "DROP the users TABLE", False),
])
def test_security_check(rules, prompt, allowed):
    decision = security_check(prompt, rules)
    assert decision.allowed is allowed
    if not allowed:
        assert rules[0].pattern in decision.reason


def test_policy_rule_rejects_empty_pattern():
    with pytest.raises(ValueError):
        PolicyRule(" ")


def test_simulation_estimates():
    design = template_design("sequential", "p", "m1")
    assert len(design.agents) == 3
    catalog = Catalog.of([ModelInfo("m1", "p", 0.5, 1.0, 2.0), ModelInfo("free", "p", 0.5, 0, 0)])
    est = simulate(design, catalog, gate_features("power"), 500, 500)
    assert est.usd == Decimal("0.0045")
    free = design.with_agents([AgentSpec(a.name, a.role, model_id="free") for a in design.agents])
    assert simulate(free, catalog, gate_features("power")).usd == 0
    with pytest.raises(FeatureGated):
        simulate(design, catalog, gate_features("companion"))


def test_simulation_uses_round_budget_for_iterative_topologies():
    design = template_design("debate", "p", "m1")
    catalog = Catalog.of([ModelInfo("m1", "p", 0.5, 1.0, 2.0)])
    est = simulate(design, catalog, gate_features("power"))
    assert set(est.calls.values()) == {5}


@pytest.mark.parametrize("score, spent, budget, expected", [
    (1.0, 0, 1, 1.0), (0.8, 1, 1, 0.6), (0.1, 1, 1, 0.0), (0.9, 5, 1, 0.7),
])
def test_composite_reward(score, spent, budget, expected):
    assert composite_reward(score, spent, budget) == pytest.approx(expected)


def test_behavior_capture_shapes():
    rates = StaticRates({"m": (0, 0)})
    scenario = parse_scenario({"agents": {"rules": [
        {"agent": "a", "tool_requests": [{"name": "add", "args": {"a": 1, "b": 2}}] * 3, "text": "sum"},
        {"agent": "bad", "fail": "broken"},
    ]}})
    two = TeamDesign([AgentSpec("a", "writer", model_id="m"), AgentSpec("b", "editor", model_id="m")], "sequential")
    ctx = TopologyContext(ScriptedExecutor(scenario), costs=CostTracker(rates))
    records = capture_behavior("t", run_sequential(two, ctx, "go"))
    assert [(r.agent, r.rounds) for r in records] == [("a", 1), ("b", 1)]
    assert records[0].tool_calls == 3 and records[0].to_dict()["toolCallCount"] == 3

    par = TeamDesign([AgentSpec("ok", "writer", model_id="m"), AgentSpec("bad", "writer", model_id="m")], "parallel")
    ctx = TopologyContext(ScriptedExecutor(scenario), costs=CostTracker(rates))
    flags = {r.agent: r.failed for r in capture_behavior("t", run_parallel(par, ctx, "go"))}
    assert flags == {"ok": False, "bad": True}


def test_behavior_records_are_appended(tmp_path):
    orch, _ = build(tmp_path)
    orch.run_task(TaskSpec(PROMPT, 1.0, id="t1"))
    orch.run_task(TaskSpec(PROMPT, 1.0, id="t2"))
    lines = (tmp_path / "behavior.jsonl").read_text().splitlines()
    assert {json.loads(line)["taskId"] for line in lines} == {"t1", "t2"}


def test_config_loading(tmp_path):
    from pathlib import Path

    fixture = Path(__file__).resolve().parents[1] / "fixtures" / "config.yaml"
    config = load_config(fixture, state_dir=tmp_path)
    assert config.state_dir == tmp_path and config.drift_theta == 0.877
    bad = tmp_path / "bad.yaml"
    bad.write_text("unknown_key: 1\n")
    with pytest.raises(ValueError, match="unknown_key"):
        load_config(bad)
