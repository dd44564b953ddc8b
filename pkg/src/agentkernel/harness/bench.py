"""Repeated design-judge-learn loop over a batch of tasks, scored from a scenario."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Optional

from ..core.events import EventBus
from ..core.types import TaskSpec
from ..judge import Judge, Tier
from ..orchestrator import KernelConfig, Orchestrator, Ports
from .scenario import Scenario, ScriptedExecutor
from .stats import TTest, paired_t_test

CONVERGED_AT = 0.8
BENCH_JUDGES = 3


@dataclass(frozen=True)
class BenchResult:
    task_count: int
    iterations: int
    trajectories: tuple[tuple[float, ...], ...]
    test: TTest
    statuses: tuple[tuple[str, ...], ...] = field(default=(), compare=False)

    @property
    def finals(self) -> list[float]:
        return [t[-1] for t in self.trajectories]

    @property
    def mean_final(self) -> float:
        return fmean(self.finals)

    @property
    def improved(self) -> int:
        return sum(1 for t in self.trajectories if t[-1] - t[0] > 0)

    @property
    def converged(self) -> int:
        return sum(1 for t in self.trajectories if t[-1] >= CONVERGED_AT)

    def to_dict(self) -> dict:
        return {"taskCount": self.task_count, "iterationsPerTask": self.iterations,
                "meanFinalScore": self.mean_final, "improvedCount": self.improved,
                "convergedCount": self.converged, "tStatistic": self.test.t, "pValue": self.test.p_value,
                "df": self.test.df, "perTask": [list(t) for t in self.trajectories],
                "statuses": [list(s) for s in self.statuses]}

    def table(self) -> str:
        head = ["task"] + [f"iter {i + 1}" for i in range(self.iterations)] + ["delta"]
        rows = [[str(k + 1)] + [f"{s:.3f}" for s in t] + [f"{t[-1] - t[0]:+.3f}"]
                for k, t in enumerate(self.trajectories)]
        widths = [max(len(r[c]) for r in [head] + rows) for c in range(len(head))]
        fmt = lambda r: "  ".join(v.rjust(w) for v, w in zip(r, widths))  # noqa: E731
        lines = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]
        lines += ["",
                  f"mean final score  {self.mean_final:.3f}",
                  f"improved          {self.improved}/{self.task_count}",
                  f"converged (>=0.8) {self.converged}/{self.task_count}",
                  f"paired t (first vs last)  t={self.test.t:.4f}  p={self.test.p_value:.4f}  df={self.test.df}"]
        return "\n".join(lines)


def run_loop_benchmark(scenario: Scenario, tasks: int = 10, iterations: int = 3,
                       state_dir: str | Path = ".agentkernel/bench", mode: Optional[str] = None,
                       bus: Optional[EventBus] = None) -> BenchResult:
    """Run every (task, iteration) through the full pipeline on one shared orchestrator.

    Judges return the scenario's score for the current (task, iteration) in
    every evaluation round, so the recorded iteration score is the final
    verdict of that run. The Q-table and design library carry across runs.
    """
    if tasks < 1 or iterations < 2:
        raise ValueError("need at least one task and two iterations")
    cursor = {"task": 0, "iteration": 0}

    def port(output, profile, round):
        score = scenario.trajectory(cursor["task"])[cursor["iteration"]]
        return {c: score for c in profile.names}, 1.0

    judges = [Judge(f"bench-judge-{i + 1}", Tier.STANDARD, port) for i in range(BENCH_JUDGES)]
    config = KernelConfig(state_dir=Path(state_dir), seed=scenario.seed, retry_base_delay=0.0)
    orch = Orchestrator(Ports(ScriptedExecutor(scenario), judges), scenario.catalog(), config, bus=bus)
    budget = scenario.bench.get("budget", 1.0)
    run_mode = mode or scenario.bench.get("mode", "power")
    trajectories, statuses = [], []
    try:
        for t in range(tasks):
            traj = scenario.trajectory(t)
            if len(traj) < iterations:
                raise ValueError(f"task {t + 1} has {len(traj)} scores for {iterations} iterations")
            scores, states = [], []
            for i in range(iterations):
                cursor.update(task=t, iteration=i)
                spec = TaskSpec(scenario.bench_prompt(t), budget, mode=run_mode, id=f"bench-{t + 1:02d}-{i + 1}")
                result = orch.run_task(spec)
                scores.append(result.score if result.score is not None else 0.0)
                states.append(result.status.value)
            trajectories.append(tuple(scores))
            statuses.append(tuple(states))
    finally:
        orch.close()
    test = paired_t_test([tr[0] for tr in trajectories], [tr[-1] for tr in trajectories])
    return BenchResult(tasks, iterations, tuple(trajectories), test, tuple(statuses))
