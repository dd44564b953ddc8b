"""The twelve-step task pipeline: design, execute, judge, redesign, learn, persist.

Steering commands are read between steps. After every completed step the
task's intermediate state is checkpointed so a crashed run can resume at the
next step with the same downstream results.
"""

from __future__ import annotations

import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from decimal import Decimal
from statistics import fmean
from typing import Callable, Optional, Sequence

from ..core.costs import CostTracker, to_decimal
from ..core.errors import (
    AgentFailure,
    BreakerOpen,
    BudgetCapExceeded,
    DesignError,
    InvalidState,
    KernelError,
    NoEligibleModel,
    RetriesExhausted,
)
from ..core.events import EventBus
from ..core.modes import gate_features, require_topology
from ..core.tools import ToolRegistry, default_tools
from ..core.types import FeatureSet, TaskSpec, TaskType, TeamDesign, TopologyKind
from ..forge import DesignStore, Escalation, ForgeConfig, TemplateDesigner, design_team, redesign, validate_design
from ..forge.designer import DesignerPort
from ..guards.contracts import ContractContext, ContractRegistry
from ..guards.drift import DriftMonitor
from ..guards.goodhart import EvaluationRecord, GoodhartConfig, Risk, apply_goodhart_action, detect_goodhart
from ..judge import Judge, JudgePipeline, Verdict, Vote, profile_for
from ..judge.scoring import APPROVE_BAND
from ..router import (
    Belief,
    BreakerBoard,
    QTable,
    RetryPolicy,
    call_model,
    cascade_order,
    encode_state,
    route_cascade,
    select_model,
    update_belief,
)
from ..router.catalog import Catalog
from ..topology import RunResult, TopologyContext, execute_topology
from ..topology.context import Executor
from .config import KernelConfig
from .policy import composite_reward, rules_from, security_check, simulate
from .state import Checkpoint, JsonDir, TaskState, TaskStatus, append_jsonl, capture_behavior
from .steering import SteerKind, SteeringCommand, SteeringInbox, post_command

STEP_NAMES = {
    1: "initialize", 2: "memory", 3: "design", 4: "simulate", 5: "security", 6: "execute",
    7: "judge", 8: "redesign", 9: "learn", 10: "behavior", 11: "output", 12: "finalize",
}


class Interrupted(KernelError):
    """Raised by the ``stop_after`` hook to simulate a crash right after a checkpoint."""

    def __init__(self, task_id: str, step: int):
        self.task_id = task_id
        self.step = step
        super().__init__(f"task {task_id} interrupted after step {step}")


class _Terminate(Exception):
    def __init__(self, status: TaskStatus, reason: str):
        self.status = status
        self.reason = reason
        super().__init__(reason)


class _Restart(Exception):
    def __init__(self, prompt: str):
        self.prompt = prompt
        super().__init__(prompt)


@dataclass
class Ports:
    executor: Executor
    judges: Sequence[Judge]
    reserve_judges: Sequence[Judge] = ()
    designer: DesignerPort = field(default_factory=TemplateDesigner)
    # returns extra context for the task prompt; None means no memory provider
    memory: Optional[Callable[[TaskSpec], str]] = None
    # ground-truth label in [0, 1] for a judged output, used for calibration tracking
    accuracy: Optional[Callable[[Verdict, str], float]] = None
    tools: Optional[ToolRegistry] = None


@dataclass
class TaskResult:
    task_id: str
    status: TaskStatus
    output: str = ""
    reason: str = ""
    design: Optional[TeamDesign] = None
    verdicts: list = field(default_factory=list)
    spent: Decimal = Decimal(0)
    reward: Optional[float] = None
    redesign_count: int = 0
    strategy: str = ""
    model_id: str = ""
    estimate: Optional[dict] = None
    score: Optional[float] = None

    @property
    def verdict(self) -> Optional[dict]:
        return self.verdicts[-1] if self.verdicts else None

    def to_dict(self) -> dict:
        return {"taskId": self.task_id, "status": self.status.value, "output": self.output, "reason": self.reason,
                "design": self.design.to_dict() if self.design else None, "verdicts": self.verdicts,
                "spent": str(self.spent), "reward": self.reward, "redesignCount": self.redesign_count,
                "strategy": self.strategy, "model": self.model_id, "estimate": self.estimate, "score": self.score}


@dataclass
class _Run:
    """Mutable per-task pipeline state; everything here survives a checkpoint."""

    spec: TaskSpec
    rng: random.Random
    topology: Optional[TopologyKind] = None
    next_step: int = 1
    count: int = 0
    task_type: Optional[TaskType] = None
    strategy: str = ""
    state_key: str = ""
    model_id: str = ""
    design: Optional[TeamDesign] = None
    context: str = ""
    estimate: Optional[dict] = None
    result: Optional[RunResult] = None
    failure: str = ""
    verdicts: list = field(default_factory=list)
    score: float = 0.0
    accepted: bool = False
    feedback: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    escalation: str = ""
    reward: Optional[float] = None

    def restart(self, prompt: str) -> None:
        self.spec.prompt = prompt
        self.next_step = 1
        self.count = 0
        self.task_type = None
        self.design = None
        self.result = None
        self.failure = ""
        self.verdicts = []
        self.score = 0.0
        self.accepted = False
        self.feedback = []
        self.failed = []
        self.escalation = ""
        self.reward = None
        self.estimate = None

    def to_dict(self) -> dict:
        version, internal, gauss = self.rng.getstate()
        return {
            "spec": self.spec.to_dict(), "rng": [version, list(internal), gauss],
            "topology": self.topology.value if self.topology else None, "nextStep": self.next_step,
            "count": self.count, "taskType": self.task_type.value if self.task_type else None,
            "strategy": self.strategy, "stateKey": self.state_key, "model": self.model_id,
            "design": self.design.to_dict() if self.design else None, "context": self.context,
            "estimate": self.estimate, "result": self.result.to_dict() if self.result else None,
            "failure": self.failure, "verdicts": self.verdicts, "score": self.score, "accepted": self.accepted,
            "feedback": self.feedback, "failed": self.failed, "escalation": self.escalation, "reward": self.reward,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Run":
        rng = random.Random()
        version, internal, gauss = d["rng"]
        rng.setstate((version, tuple(internal), gauss))
        spec = TaskSpec.from_dict(d["spec"])
        return cls(
            spec=spec, rng=rng, topology=TopologyKind(d["topology"]) if d["topology"] else None,
            next_step=d["nextStep"], count=d["count"], task_type=TaskType(d["taskType"]) if d["taskType"] else None,
            strategy=d["strategy"], state_key=d["stateKey"], model_id=d["model"],
            design=TeamDesign.from_dict(d["design"]) if d["design"] else None, context=d["context"],
            estimate=d["estimate"], result=RunResult.from_dict(d["result"]) if d["result"] else None,
            failure=d["failure"], verdicts=list(d["verdicts"]), score=d["score"], accepted=d["accepted"],
            feedback=list(d["feedback"]), failed=list(d["failed"]), escalation=d["escalation"],
            reward=d["reward"],
        )


class _Fatal:
    """Carries a non-routing error through the cascade so it is not retried on other models."""

    def __init__(self, exc: BaseException):
        self.exc = exc


def observation_for(decision: Vote, score: float) -> str:
    if Vote(decision) is Vote.APPROVE:
        return "success_high" if score >= 0.8 else "success_low"
    return "failure"


class Orchestrator:
    def __init__(self, ports: Ports, catalog: Catalog, config: Optional[KernelConfig] = None,
                 bus: Optional[EventBus] = None, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config = config or KernelConfig()
        self.ports = ports
        self.catalog = catalog
        self.bus = bus if bus is not None else EventBus(log_dir=config.events_dir, clock=time.time)
        self.clock = clock
        self.sleep = sleep
        self.costs = CostTracker(catalog)
        self.tools = ports.tools or default_tools()
        self.rules = rules_from(config.blocked_patterns)
        self.contracts = ContractRegistry()
        self.forge_config = ForgeConfig(config.library_threshold, config.max_redesigns, config.radical_threshold,
                                        config.budget_cap_multiplier, config.store_window)
        self.store = DesignStore(config.design_store_path, config.store_window, bus=self.bus)
        def persist(q: QTable) -> None:
            self._persisted_episodes = q.episode_count
            self.bus.emit("rl:persisted", "system", {"episodes": q.episode_count})

        if config.qtable_path.exists():
            self.qtable = QTable.load(config.qtable_path, on_persist=persist)
        else:
            self.qtable = QTable(config.alpha, config.epsilon, config.qtable_path, on_persist=persist)
        self._persisted_episodes = self.qtable.episode_count
        self.belief = Belief()
        self.drift = DriftMonitor(config.golden_scores, config.drift_theta, config.drift_window, bus=self.bus)
        self.goodhart = GoodhartConfig()
        self.history: list[EvaluationRecord] = []
        self.panel: list[Judge] = list(ports.judges)
        self.reserve: list[Judge] = list(ports.reserve_judges)
        self.breakers = BreakerBoard(threshold=config.breaker_threshold,
                                     reset_seconds=config.breaker_reset_seconds, clock=clock, bus=self.bus)
        self.checkpoints = JsonDir(config.state_dir / "checkpoints")
        self.statuses = JsonDir(config.state_dir / "tasks")
        self._states: dict[str, TaskState] = {}
        self._inboxes: dict[str, SteeringInbox] = {}
        self._pending: dict[str, deque] = {}
        self._lock = threading.RLock()
        self._steps = {1: self._initialize, 2: self._memory, 3: self._design, 4: self._simulate,
                       5: self._security, 6: self._execute, 7: self._judge, 8: self._loop_exit,
                       9: self._learn, 10: self._behavior, 11: self._output, 12: self._finalize}

    # -- public API ---------------------------------------------------------------

    def run_task(self, spec: TaskSpec, topology=None, stop_after: Optional[int] = None) -> TaskResult:
        spec = replace(spec)
        features = gate_features(spec.mode)
        if topology is not None:
            topology = TopologyKind(topology)
            require_topology(features, topology)
        run = _Run(spec, random.Random(f"{self.config.seed}:{spec.id}"), topology=topology)
        state = TaskState(spec.id, prompt=spec.prompt, mode=spec.mode.value)
        self._register(state)
        self._emit(spec.id, "task:created", **spec.to_dict(), topology=topology.value if topology else None)
        state.transition(TaskStatus.RUNNING)
        self._emit(spec.id, "task:started")
        self._write_status(state)
        return self._drive(run, state, features, stop_after)

    def resume(self, task_id: str, spec: Optional[TaskSpec] = None, stop_after: Optional[int] = None) -> TaskResult:
        """Continue from the last checkpoint; without one, start ``spec`` from scratch."""
        doc = self.checkpoints.load(task_id)
        if doc is None:
            if spec is None:
                raise InvalidState(f"task {task_id} has no checkpoint and no spec to start from")
            return self.run_task(spec, stop_after=stop_after)
        cp = Checkpoint.from_dict(doc)
        run = _Run.from_dict(cp.data["run"])
        self.costs.restore(task_id, cp.data["spent"])
        by_id = {j.judge_id: j for j in list(self.ports.judges) + list(self.ports.reserve_judges)}
        self.panel = [by_id[j] for j in cp.data["panel"] if j in by_id]
        self.reserve = [by_id[j] for j in cp.data["reserve"] if j in by_id]
        state = TaskState(task_id, TaskStatus.RUNNING, cp.step, run.count, cp.data["spent"], run.spec.prompt,
                          run.spec.mode.value)
        self._register(state)
        self._emit("system", "checkpoint:restored", taskId=task_id, step=cp.step, nextStep=cp.next_step)
        return self._drive(run, state, gate_features(run.spec.mode), stop_after)

    def steer(self, task_id: str, command: SteeringCommand) -> dict:
        state = self.status(task_id)
        if state is None:
            raise InvalidState(f"unknown task {task_id}")
        if state.terminal:
            raise InvalidState(f"task {task_id} is {state.status.value}; it can no longer be steered")
        inbox = self._inboxes.get(task_id)
        if inbox is not None:
            inbox.send(command)
        else:
            post_command(self._inbox_path(task_id), command)
        return {"taskId": task_id, "command": command.kind.value, "accepted": True}

    def status(self, task_id: str) -> Optional[TaskState]:
        if task_id in self._states:
            return self._states[task_id]
        doc = self.statuses.load(task_id)
        return TaskState.from_dict(doc) if doc else None

    def close(self) -> None:
        """Flush learning state that has not reached its periodic snapshot yet."""
        with self._lock:
            if self.qtable.episode_count != self._persisted_episodes:
                self.qtable.persist()

    # -- driver ---------------------------------------------------------------------

    def _register(self, state: TaskState) -> None:
        with self._lock:
            self._states[state.task_id] = state
            self._inboxes[state.task_id] = SteeringInbox(self._inbox_path(state.task_id))
            self._pending[state.task_id] = deque()

    def _inbox_path(self, task_id: str):
        return self.config.state_dir / "steer" / f"{task_id}.jsonl"

    def _drive(self, run: _Run, state: TaskState, features: FeatureSet, stop_after: Optional[int]) -> TaskResult:
        task_id = run.spec.id
        while True:
            try:
                while run.next_step <= 12:
                    self._boundary(run, state)
                    step = run.next_step
                    state.current_step = step
                    self._emit(task_id, "task:step", step=step, name=STEP_NAMES[step], iteration=run.count + 1)
                    run.next_step = self._steps[step](run, state, features)
                    if step < 12:
                        self._checkpoint(run, state, step)
                        if stop_after == step:
                            raise Interrupted(task_id, step)
                return self._result(run, state)
            except _Restart as restart:
                run.restart(restart.prompt)
                state.prompt = restart.prompt
                state.redesign_count = 0
                state.status = TaskStatus.RUNNING
            except _Terminate as stop:
                return self._terminate(run, state, stop.status, stop.reason)

    def _terminate(self, run: _Run, state: TaskState, status: TaskStatus, reason: str) -> TaskResult:
        task_id = run.spec.id
        if state.status is TaskStatus.PAUSED and status is not TaskStatus.CANCELLED:
            state.transition(TaskStatus.RUNNING)
        state.transition(status)
        state.reason = reason
        state.spent = self.costs.total(task_id)
        event = "task:cancelled" if status is TaskStatus.CANCELLED else "task:failed"
        self._emit(task_id, event, reason=reason, step=state.current_step)
        if self.checkpoints.clear(task_id):
            self._emit(task_id, "checkpoint:cleared")
        result = self._result(run, state)
        self._write_result(task_id, result)
        self._write_status(state)
        return result

    def _boundary(self, run: _Run, state: TaskState) -> None:
        """Apply pending steering commands before the next step starts."""
        task_id = run.spec.id
        pending = self._drain(task_id)
        while pending:
            cmd = pending.popleft()
            if cmd.kind is SteerKind.CANCEL:
                raise _Terminate(TaskStatus.CANCELLED, "cancelled by user")
            if cmd.kind is SteerKind.REDIRECT:
                self._emit(task_id, "task:redirected", prompt=cmd.prompt, fromStep=run.next_step)
                raise _Restart(cmd.prompt)
            if cmd.kind is SteerKind.PAUSE:
                self._pause(run, state, pending)

    def _pause(self, run: _Run, state: TaskState, pending: deque) -> None:
        task_id = run.spec.id
        state.transition(TaskStatus.PAUSED)
        self._write_status(state)
        self._emit(task_id, "task:paused", step=run.next_step)
        started = self.clock()
        while True:
            self._drain(task_id)
            while pending:
                cmd = pending.popleft()
                if cmd.kind is SteerKind.CANCEL:
                    raise _Terminate(TaskStatus.CANCELLED, "cancelled while paused")
                if cmd.kind in (SteerKind.RESUME, SteerKind.REDIRECT):
                    state.transition(TaskStatus.RUNNING)
                    self._write_status(state)
                    self._emit(task_id, "task:resumed", pausedSeconds=self.clock() - started)
                    if cmd.kind is SteerKind.REDIRECT:
                        pending.appendleft(cmd)
                    return
            if self.clock() - started >= self.config.pause_timeout:
                raise _Terminate(TaskStatus.CANCELLED, f"pause timed out after {self.config.pause_timeout}s")
            self.sleep(self.config.poll_interval)

    def _drain(self, task_id: str) -> deque:
        pending = self._pending[task_id]
        pending.extend(self._inboxes[task_id].poll())
        return pending

    def _checkpoint(self, run: _Run, state: TaskState, step: int) -> None:
        task_id = run.spec.id
        data = {"run": run.to_dict(), "spent": str(self.costs.total(task_id)),
                "panel": [j.judge_id for j in self.panel], "reserve": [j.judge_id for j in self.reserve]}
        self.checkpoints.save(task_id, Checkpoint(task_id, step, run.next_step, data).to_dict())
        self._emit(task_id, "checkpoint:saved", step=step, nextStep=run.next_step)
        state.redesign_count = run.count
        state.spent = self.costs.total(task_id)
        self._write_status(state)

    # -- steps --------------------------------------------------------------------------

    def _initialize(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        spec = run.spec
        budget = to_decimal(spec.budget)
        self._emit(spec.id, "budget:checked", budget=str(budget),
                   cap=str(budget * to_decimal(self.config.budget_cap_multiplier)))
        ctx = ContractContext(budget=budget, prompt=spec.prompt, policy_loaded=self.rules is not None,
                              blocked_patterns=[r.regex for r in self.rules],
                              judges_configured=len(self._active_panel(features)),
                              task_type=spec.task_type.value if spec.task_type else None)
        violations = self.contracts.evaluate("pre", ctx)
        for v in violations:
            self._emit(spec.id, "contract:violation", **v.to_dict())
        if violations:
            raise _Terminate(TaskStatus.FAILED, "; ".join(f"{v.contract}: {v.message}" for v in violations))
        return 2

    def _memory(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        provider = self.ports.memory
        run.context = (provider(run.spec) or "") if provider is not None else ""
        self._emit(run.spec.id, "memory:injected", chars=len(run.context), provider=provider is not None)
        return 3

    def _design(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        spec = run.spec
        designer = self.ports.designer
        if run.task_type is None:
            run.task_type = TaskType(spec.task_type or designer.classify(spec.prompt))
            self._emit(spec.id, "forge:classified", taskType=run.task_type.value)
        allowed = [k for k in TopologyKind if k in features.allowed_topologies]
        if run.count == 0:
            run.state_key = encode_state(run.task_type, len(self.catalog), float(to_decimal(spec.budget)))
            run.strategy = self._choose_strategy(run, features)
            try:
                model = self._route(run)
                library = None if run.topology else self.store.get_best(run.task_type, self.config.library_threshold)
                run.design = design_team(replace(spec, task_type=run.task_type), designer, model.model_id, allowed,
                                         tools=self.tools.names(), recommendation=run.topology, library=library,
                                         catalog=self.catalog)
            except NoEligibleModel as exc:
                raise _Terminate(TaskStatus.FAILED, f"no eligible model: {exc}") from None
            except DesignError as exc:
                self._emit(spec.id, "forge:validation_failed", violations=exc.violations)
                raise _Terminate(TaskStatus.FAILED, f"invalid design: {exc}") from None
            run.model_id = model.model_id
            source = "template"
            if library is not None and library.topology in allowed:
                source = "library"
                self._emit(spec.id, "forge:adapted", recordId=library.record_id, topology=library.topology.value)
        else:
            problems = validate_design(run.design, self.tools.names(), self.catalog)
            if problems:
                self._emit(spec.id, "forge:validation_failed", violations=problems)
                raise _Terminate(TaskStatus.FAILED, f"invalid redesign: {'; '.join(problems)}")
            source = "redesign"
        d = run.design
        self._emit(spec.id, "forge:designed", topology=d.topology.value, agents=d.names,
                   roles=[a.role for a in d.agents], models=d.model_map, source=source)
        return 4

    def _simulate(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        if features.simulation_enabled:
            est = simulate(run.design, self.catalog, features, self.config.simulation_tokens_in,
                           self.config.simulation_tokens_out)
            run.estimate = est.to_dict()
            self._emit(run.spec.id, "simulation:estimated", **run.estimate)
        return 5

    def _security(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        decision = security_check(run.spec.prompt, self.rules)
        if decision.allowed:
            self._emit(run.spec.id, "security:allowed", rules=len(self.rules))
            return 6
        self._emit(run.spec.id, "security:blocked", reason=decision.reason, rule=decision.rule)
        raise _Terminate(TaskStatus.FAILED, decision.reason)

    def _execute(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        spec = run.spec
        task_id = spec.id
        cap = to_decimal(spec.budget) * to_decimal(self.config.budget_cap_multiplier)

        def enforce_cap(record, total):
            if record.task_id == task_id and total > cap:
                self._emit(task_id, "budget:exceeded", spent=str(total), cap=str(cap))
                raise BudgetCapExceeded(task_id, total, cap)

        policy = RetryPolicy(self.config.retry_attempts, self.config.retry_base_delay, self.config.retry_max_delay,
                             rng=random.Random(run.rng.getrandbits(64)), sleep=self.sleep)
        ctx = TopologyContext(self.ports.executor, task_id, self.costs, self.tools, self.bus,
                              call_model=self._model_caller(run, policy),
                              before_execute=lambda agent: self._guard_execution(task_id),
                              order=self.config.execution_order, rng=random.Random(run.rng.getrandbits(64)),
                              iteration=run.count + 1, max_workers=self.config.max_workers)
        prompt = f"{run.context}\n\n{spec.prompt}" if run.context else spec.prompt
        run.failure = ""
        self.costs.add_listener(enforce_cap)
        try:
            run.result = execute_topology(run.design, ctx, prompt, features)
        except AgentFailure as exc:
            run.result = exc.result
            run.failure = str(exc)
        except BudgetCapExceeded as exc:
            run.result = None
            run.escalation = str(exc)
            return 8
        finally:
            self.costs.remove_listener(enforce_cap)
        return 7

    def _judge(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        spec = run.spec
        task_id = spec.id
        output = run.result.final_output if run.result is not None else ""
        with self._lock:
            if run.failure or run.result is None:
                verdict_doc = {"decision": Vote.REJECT.value, "score": 0.0, "note": run.failure, "round": run.count + 1}
                run.score, run.accepted = 0.0, False
                run.feedback = [f"execution failed: {run.failure}"]
                run.verdicts.append(verdict_doc)
            else:
                verdict = self._evaluate(run, output, features)
                if run.escalation:
                    return 8
                spent = self.costs.total(task_id)
                ctx = ContractContext(budget=to_decimal(spec.budget), prompt=spec.prompt, spent=spent, output=output,
                                      blocked_patterns=[r.regex for r in self.rules],
                                      judges_configured=len(self._active_panel(features)),
                                      consensus_score=verdict.score if verdict.consensus else None,
                                      task_type=run.task_type.value)
                violations = self.contracts.evaluate("post", ctx)
                for v in violations:
                    self._emit(task_id, "contract:violation", **v.to_dict())
                run.score = verdict.score
                run.accepted = verdict.decision is Vote.APPROVE and not violations
                run.feedback = _feedback(verdict, violations)
                run.verdicts.append({**verdict.to_dict(), "round": run.count + 1,
                                     "violations": [v.to_dict() for v in violations]})
        if run.accepted:
            return 8
        return self._redesign(run, state, features)

    def _evaluate(self, run: _Run, output: str, features: FeatureSet) -> Verdict:
        task_id = run.spec.id
        rnd = run.count + 1
        profile = profile_for(run.task_type)
        verdict = self._panel_verdict(run, output, rnd, features, profile)
        if verdict.escalate:
            run.escalation = verdict.note
            return verdict
        self.history.append(self._record(run, verdict, output))
        report = detect_goodhart(self.history, self.goodhart)
        self._emit(task_id, "goodhart:evaluated", signals=sorted(s.value for s in report.signals),
                   risk=report.risk.value, indeterminate=sorted(s.value for s in report.indeterminate),
                   metrics=report.metrics)
        if report.risk not in (Risk.MEDIUM, Risk.HIGH):
            return verdict
        self._emit(task_id, "goodhart:risk_elevated", risk=report.risk.value,
                   signals=sorted(s.value for s in report.signals))
        action = apply_goodhart_action(report, self.panel, self.reserve)
        if action.kind == "escalate":
            run.escalation = f"goodhart risk {report.risk.value} with too few reserve judges"
            return verdict
        incoming = [j.judge_id for j in action.panel if j not in self.panel]
        self.panel, self.reserve = list(action.panel), list(action.reserve)
        if action.kind == "rotate":
            self._emit(task_id, "goodhart:rotated", out=[j.judge_id for j in action.replaced], incoming=incoming)
            return verdict
        self._emit(task_id, "goodhart:panel_replaced", out=[j.judge_id for j in action.replaced], incoming=incoming)
        # the round scored by the replaced panel is discarded and re-judged
        self.history.pop()
        verdict = self._panel_verdict(run, output, rnd, features, profile)
        if verdict.escalate:
            run.escalation = verdict.note
            return verdict
        self.history.append(self._record(run, verdict, output))
        return verdict

    def _panel_verdict(self, run: _Run, output: str, rnd: int, features: FeatureSet, profile) -> Verdict:
        pipeline = JudgePipeline(self._active_panel(features), profile, self.config.consensus, drift=self.drift,
                                 bus=self.bus, task_id=run.spec.id, max_judges=features.max_judges)
        return pipeline.evaluate(output, rnd)

    def _record(self, run: _Run, verdict: Verdict, output: str) -> EvaluationRecord:
        scores = tuple(s.weighted_total for s in verdict.scores)
        confidence = fmean(s.confidence for s in verdict.scores)
        if self.ports.accuracy is not None:
            accuracy = float(self.ports.accuracy(verdict, output))
        else:
            accuracy = 1.0 if verdict.decision is Vote.APPROVE else 0.0
        reward = composite_reward(verdict.score, self.costs.total(run.spec.id), run.spec.budget,
                                  self.config.reward_cost_weight)
        return EvaluationRecord(scores, confidence, accuracy, reward, run.design.signature())

    def _redesign(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        spec = run.spec
        prev = run.design
        run.count += 1
        state.redesign_count = run.count
        if prev.topology.value not in run.failed:
            run.failed.append(prev.topology.value)
        allowed = [k for k in TopologyKind if k in features.allowed_topologies]
        outcome = redesign(prev, run.feedback, run.count, self.costs.total(spec.id), spec.budget, spec.prompt,
                           failed=run.failed, allowed=allowed, config=self.forge_config)
        if isinstance(outcome, Escalation):
            run.escalation = outcome.reason
            return 8
        kind = "refine" if outcome.topology is prev.topology else "radical"
        self._emit(spec.id, "forge:redesign", count=run.count, kind=kind, previous=prev.topology.value,
                   topology=outcome.topology.value, feedback=run.feedback)
        run.design = outcome
        return 3

    def _loop_exit(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        if run.escalation:
            self._emit(run.spec.id, "task:escalated", reason=run.escalation, redesignCount=run.count,
                       spent=str(self.costs.total(run.spec.id)), status=TaskStatus.PENDING_HUMAN_REVIEW.value)
            return 12
        return 9

    def _learn(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        spec = run.spec
        spent = self.costs.total(spec.id)
        run.reward = composite_reward(run.score, spent, spec.budget, self.config.reward_cost_weight)
        with self._lock:
            if features.rl_enabled:
                before = self.qtable.q(run.state_key, run.strategy)
                raw = self.qtable.alpha * (run.reward - before)
                value = self.qtable.update(run.state_key, run.strategy, run.reward)
                if abs(raw) > self.qtable.q_delta_cap:
                    self._emit(spec.id, "trilemma:bound", bound="qDelta", raw=raw, applied=self.qtable.last_delta)
                self._emit(spec.id, "rl:updated", stateKey=run.state_key, strategy=run.strategy, reward=run.reward,
                           q=value, delta=self.qtable.last_delta)
                decision = Vote(run.verdicts[-1]["decision"])
                self.belief = update_belief(self.belief, observation_for(decision, run.score))
            self.store.store(run.design, run.task_type, run.score)
        return 10

    def _behavior(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        records = capture_behavior(run.spec.id, run.result, run.count + 1) if run.result else []
        append_jsonl(self.config.behavior_path, [r.to_dict() for r in records])
        self._emit(run.spec.id, "behavior:captured", agents=len(records))
        return 11

    def _output(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        task_id = run.spec.id
        out_dir = self.config.output_dir / task_id
        out_dir.mkdir(parents=True, exist_ok=True)
        text = run.result.final_output if run.result else ""
        (out_dir / "output.txt").write_text(text, encoding="utf-8")
        self._write_result(task_id, self._result(run, state, TaskStatus.COMPLETED))
        self._emit(task_id, "output:written", path=str(out_dir / "output.txt"), chars=len(text))
        return 12

    def _finalize(self, run: _Run, state: TaskState, features: FeatureSet) -> int:
        task_id = run.spec.id
        status = TaskStatus.PENDING_HUMAN_REVIEW if run.escalation else TaskStatus.COMPLETED
        state.transition(status)
        state.reason = run.escalation
        state.redesign_count = run.count
        state.spent = self.costs.total(task_id)
        if status is TaskStatus.COMPLETED:
            self._emit(task_id, "task:completed", spent=str(state.spent), reward=run.reward,
                       redesignCount=run.count)
        else:
            self._write_result(task_id, self._result(run, state))
        if self.checkpoints.clear(task_id):
            self._emit(task_id, "checkpoint:cleared")
        self._write_status(state)
        return 13

    # -- helpers --------------------------------------------------------------------

    def _active_panel(self, features: FeatureSet) -> list[Judge]:
        return self.panel[: features.max_judges]

    def _choose_strategy(self, run: _Run, features: FeatureSet) -> str:
        allowed = features.allowed_strategies
        if features.rl_enabled:
            return self.qtable.select(run.state_key, allowed, run.rng)
        return self.config.default_strategy if self.config.default_strategy in allowed else allowed[0]

    def _route(self, run: _Run):
        if run.strategy == "cascade":
            model = cascade_order(self.catalog)[0]
        else:
            model = select_model(run.strategy, self.catalog, belief=self.belief, quality_min=self.config.quality_min)
        self._emit(run.spec.id, "model:routed", strategy=run.strategy, model=model.model_id, stateKey=run.state_key)
        return model

    def _model_caller(self, run: _Run, policy: RetryPolicy):
        def guarded(request, executor):
            model = self.catalog.get(request.agent.model_id)
            breaker = self.breakers[model.provider]

            def on_retry(attempt, wait, exc):
                self._emit(run.spec.id, "model:retry", agent=request.agent.name, model=model.model_id,
                           attempt=attempt, delay=wait, error=str(exc))

            try:
                return call_model(executor, request, breaker, policy, on_retry)
            except (RetriesExhausted, BreakerOpen) as exc:
                self._emit(run.spec.id, "model:call_failed", agent=request.agent.name, model=model.model_id,
                           error=str(exc))
                raise

        def call(request, executor):
            if run.strategy != "cascade":
                return guarded(request, executor)

            def attempt(model):
                req = replace(request, agent=replace(request.agent, model_id=model.model_id))
                try:
                    return guarded(req, executor)
                except (RetriesExhausted, BreakerOpen):
                    raise
                except Exception as exc:
                    return _Fatal(exc)

            model, response = route_cascade(self.catalog, attempt)
            if isinstance(response, _Fatal):
                raise response.exc
            return replace(response, model_id=model.model_id)

        return call

    def _guard_execution(self, task_id: str) -> None:
        """No agent starts once a cancel is pending."""
        if any(c.kind is SteerKind.CANCEL for c in self._drain(task_id)):
            raise _Terminate(TaskStatus.CANCELLED, "cancelled by user")

    def _result(self, run: _Run, state: TaskState, status: Optional[TaskStatus] = None) -> TaskResult:
        task_id = run.spec.id
        output = run.result.final_output if run.result is not None and state.status is not TaskStatus.FAILED else ""
        return TaskResult(task_id, status or state.status, output, state.reason, run.design, list(run.verdicts),
                          self.costs.total(task_id), run.reward, run.count, run.strategy, run.model_id, run.estimate,
                          run.score if run.verdicts else None)

    def _write_result(self, task_id: str, result: TaskResult) -> None:
        JsonDir(self.config.output_dir / task_id).save("result", result.to_dict())

    def _write_status(self, state: TaskState) -> None:
        self.statuses.save(state.task_id, state.to_dict())

    def _emit(self, task_id: str, type: str, **payload) -> int:
        return self.bus.emit(type, task_id, payload)


def _feedback(verdict: Verdict, violations) -> list[str]:
    notes = []
    if verdict.decision is not Vote.APPROVE:
        notes.append(f"judges voted {verdict.decision.value} with score {verdict.score:.2f}")
    notes += [f"{v.contract}: {v.message}" for v in violations]
    if verdict.scores:
        criteria = verdict.scores[0].per_criterion
        for c in criteria:
            mean = fmean(s.per_criterion[c] for s in verdict.scores)
            if mean < APPROVE_BAND:
                notes.append(f"improve {c} (scored {mean:.2f})")
    return notes
