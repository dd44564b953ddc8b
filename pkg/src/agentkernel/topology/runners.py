"""The twelve execution topologies.

Every runner takes a validated :class:`TeamDesign` and a
:class:`TopologyContext` and returns a :class:`RunResult`.  Runners whose
semantics abort on failure raise :class:`AgentFailure` with the partial
result attached as ``exc.result``.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Optional

from ..core.errors import AgentFailure, CycleError, DesignError
from ..core.types import AgentSpec, TeamDesign, TopologyKind
from .context import AgentOutput, Call, TopologyContext
from .hub import BROADCAST, AgentOutcome, MsgHub, RunResult, Termination, labeled

CONSENSUS = "CONSENSUS"
NO_UPDATE = "NO_UPDATE"
APPROVED = "APPROVED"
DONE = "DONE"

DEFAULT_MAX_ROUNDS = {
    TopologyKind.HIERARCHICAL: 3,
    TopologyKind.DEBATE: 5,
    TopologyKind.MESH: 4,
    TopologyKind.STAR: 3,
    TopologyKind.CIRCULAR: 3,
    TopologyKind.GRID: 5,
    TopologyKind.MAKER: 5,
}


def max_rounds_for(design: TeamDesign) -> int:
    """Round budget; structural topologies are bounded by their shape."""
    if design.params.max_rounds is not None:
        return design.params.max_rounds
    if design.topology in DEFAULT_MAX_ROUNDS:
        return DEFAULT_MAX_ROUNDS[design.topology]
    return max(len(design.agents), 2)


class _Run:
    """Book-keeping shared by the runners."""

    def __init__(self, design: TeamDesign, ctx: TopologyContext):
        self.design = design
        self.ctx = ctx
        self.hub = MsgHub()
        self.max_rounds = max_rounds_for(design)
        self.outcomes = {a.name: AgentOutcome(a.name) for a in design.agents}

    def note(self, result: AgentOutput | AgentFailure) -> Optional[str]:
        if isinstance(result, AgentFailure):
            o = self.outcomes[result.agent]
            o.failed = True
            o.error = result.reason
            o.rounds += 1
            return None
        o = self.outcomes[result.agent]
        o.rounds += 1
        o.outputs.append(result.output)
        o.cost += result.cost
        o.tool_calls += result.tool_calls
        return result.output

    def call(self, agent: AgentSpec, prompt: str, round: int, phase: str = "answer") -> str:
        """Single call whose failure aborts the run."""
        try:
            res = self.ctx.execute_agent(agent, prompt, round, phase)
        except AgentFailure as exc:
            self.note(exc)
            exc.result = self.finish("", round, Termination.AGENT_FAILURE)
            raise
        return self.note(res)

    def batch(self, calls: list[Call]) -> list[AgentOutput | AgentFailure]:
        results = self.ctx.run_batch(calls)
        for r in results:
            self.note(r)
        return results

    def abort(self, failure: AgentFailure, rounds: int):
        failure.result = self.finish("", rounds, Termination.AGENT_FAILURE)
        raise failure

    def finish(self, final: str, rounds: int, termination: Termination) -> RunResult:
        return RunResult(
            topology=self.design.topology.value,
            final_output=final,
            outcomes=[self.outcomes[a.name] for a in self.design.agents],
            rounds_executed=rounds,
            termination=termination,
            max_rounds=self.max_rounds,
            hub=self.hub,
        )


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise DesignError(message)


def run_sequential(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    _require(len(design.agents) >= 1, "sequential requires at least 1 agent")
    run = _Run(design, ctx)
    current = prompt
    for i, agent in enumerate(design.agents, start=1):
        current = run.call(agent, current, i)
        nxt = design.agents[i].name if i < len(design.agents) else BROADCAST
        run.hub.post(agent.name, current, i, recipients=(nxt,) if nxt != BROADCAST else BROADCAST)
    return run.finish(current, len(design.agents), Termination.NATURAL)


def run_parallel(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    _require(len(design.agents) >= 1, "parallel requires at least 1 agent")
    run = _Run(design, ctx)
    results = run.batch([Call(a, prompt, 1) for a in design.agents])
    _post_batch(run.hub, design.agents, results, 1)
    ok = [(a.name, r.output) for a, r in zip(design.agents, results) if not isinstance(r, AgentFailure)]
    if not ok:
        run.abort(results[0], 1)
    if len(design.agents) == 1:
        return run.finish(ok[0][1], 1, Termination.NATURAL)
    return run.finish(labeled(ok), 1, Termination.NATURAL)


def _post_batch(hub: MsgHub, agents, results, round: int, kind: str = "output", recipients=BROADCAST) -> None:
    for agent, res in zip(agents, results):
        if isinstance(res, AgentFailure):
            hub.post(agent.name, res.reason, round, recipients, kind="failure")
        else:
            hub.post(agent.name, res.output, round, recipients, kind=kind)


def _subtasks(decomposition: str, n: int, prompt: str) -> list[str]:
    lines = [ln.strip() for ln in decomposition.splitlines() if ln.strip()]
    return [lines[i] if i < len(lines) else prompt for i in range(n)]


def _coordinated(design: TeamDesign, ctx: TopologyContext, prompt: str, marker: str, label: str) -> RunResult:
    """Hierarchical and star share a decompose/dispatch/synthesize loop."""
    _require(len(design.agents) >= 2, f"{label} requires a coordinator and at least 1 worker")
    run = _Run(design, ctx)
    lead, workers = design.agents[0], design.agents[1:]
    synthesis = ""
    for rnd in range(1, run.max_rounds + 1):
        ask = prompt if rnd == 1 else f"{prompt}\n\nPrevious synthesis (not yet accepted):\n{synthesis}"
        plan = run.call(lead, ask, rnd, "decompose")
        run.hub.post(lead.name, plan, rnd, [w.name for w in workers], kind="decompose")
        subtasks = _subtasks(plan, len(workers), prompt)
        results = run.batch([Call(w, s, rnd, "work") for w, s in zip(workers, subtasks)])
        _post_batch(run.hub, workers, results, rnd, recipients=(lead.name,))
        reports = [
            (w.name, f"[failed: {r.reason}]" if isinstance(r, AgentFailure) else r.output)
            for w, r in zip(workers, results)
        ]
        synthesis = run.call(lead, f"{prompt}\n\nWorker outputs:\n{labeled(reports)}", rnd, "synthesize")
        run.hub.post(lead.name, synthesis, rnd, kind="synthesis")
        if marker in synthesis:
            return run.finish(synthesis, rnd, Termination.NATURAL)
    return run.finish(synthesis, run.max_rounds, Termination.MAX_ROUNDS)


def run_hierarchical(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    return _coordinated(design, ctx, prompt, APPROVED, "hierarchical")


def run_star(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    return _coordinated(design, ctx, prompt, DONE, "star")


def dag_levels(names: list[str], edges) -> list[list[str]]:
    """Group nodes by longest-path depth from any source.

    Raises CycleError when the edge set is cyclic.
    """
    known = set(names)
    for u, v in edges:
        if u not in known or v not in known:
            raise DesignError(f"dag edge {u}->{v} references an unknown agent")
    preds: dict[str, list[str]] = {n: [] for n in names}
    succs: dict[str, list[str]] = {n: [] for n in names}
    for u, v in edges:
        preds[v].append(u)
        succs[u].append(v)
    indeg = {n: len(preds[n]) for n in names}
    depth = {n: 0 for n in names}
    ready = [n for n in names if indeg[n] == 0]
    seen = 0
    while ready:
        n = ready.pop(0)
        seen += 1
        for m in succs[n]:
            depth[m] = max(depth[m], depth[n] + 1)
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    if seen != len(names):
        raise CycleError("dag edges contain a cycle")
    levels: list[list[str]] = [[] for _ in range(max(depth.values(), default=-1) + 1)]
    for n in names:
        levels[depth[n]].append(n)
    return levels


def run_dag(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    names = design.names
    edges = list(design.params.dag_edges)
    levels = dag_levels(names, edges)
    run = _Run(design, ctx)
    outputs: dict[str, str] = {}
    for depth, level in enumerate(levels, start=1):
        calls = []
        for name in level:
            preds = [u for u, v in edges if v == name]
            text = prompt
            if preds:
                text = f"{prompt}\n\nPredecessor outputs:\n{labeled((u, outputs[u]) for u in preds)}"
            calls.append(Call(design.agent(name), text, depth))
        results = run.batch(calls)
        agents = [c.agent for c in calls]
        for agent, res in zip(agents, results):
            if isinstance(res, AgentFailure):
                _post_batch(run.hub, agents, results, depth)
                run.abort(res, depth)
            outputs[agent.name] = res.output
        for agent, res in zip(agents, results):
            succ = tuple(v for u, v in edges if u == agent.name)
            run.hub.post(agent.name, res.output, depth, succ if succ else BROADCAST)
    sinks = [n for n in names if not any(u == n for u, _ in edges)]
    return run.finish(labeled((n, outputs[n]) for n in sinks), len(levels), Termination.NATURAL)


def run_mixture(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    _require(len(design.agents) >= 2, "mixture requires at least 2 agents")
    run = _Run(design, ctx)
    generators, aggregator = design.agents[:-1], design.agents[-1]
    results = run.batch([Call(g, prompt, 1, "generate") for g in generators])
    _post_batch(run.hub, generators, results, 1, recipients=(aggregator.name,))
    parts = [
        (g.name, f"[failed: {r.reason}]" if isinstance(r, AgentFailure) else r.output)
        for g, r in zip(generators, results)
    ]
    final = run.call(aggregator, f"{prompt}\n\nCandidate outputs:\n{labeled(parts)}", 2, "aggregate")
    run.hub.post(aggregator.name, final, 2, kind="aggregate")
    return run.finish(final, 2, Termination.NATURAL)


def run_debate(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    _require(len(design.agents) == 2, "debate requires exactly 2 agents (proposer, critic)")
    run = _Run(design, ctx)
    proposer, critic = design.agents
    proposal = critique = ""
    for rnd in range(1, run.max_rounds + 1):
        ask = prompt if rnd == 1 else f"{prompt}\n\nCritique of your previous proposal:\n{critique}"
        proposal = run.call(proposer, ask, rnd, "propose")
        run.hub.post(proposer.name, proposal, rnd, (critic.name,), kind="proposal")
        critique = run.call(critic, f"{prompt}\n\nProposal:\n{proposal}", rnd, "critique")
        run.hub.post(critic.name, critique, rnd, (proposer.name,), kind="critique")
        if CONSENSUS in critique:
            return run.finish(proposal, rnd, Termination.NATURAL)
    return run.finish(proposal, run.max_rounds, Termination.MAX_ROUNDS)


def run_mesh(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    _require(len(design.agents) >= 2, "mesh requires at least 2 agents")
    run = _Run(design, ctx)
    active = list(design.agents)
    last: dict[str, str] = {}
    previous: list[tuple[str, str]] = []
    rounds = 0
    converged = False
    for rnd in range(run.max_rounds):
        rounds = rnd + 1
        if rnd == 0:
            calls = [Call(a, prompt, 0, "answer") for a in active]
        else:
            seen = f"{prompt}\n\nRound {rnd - 1} messages:\n{labeled(previous)}"
            calls = [Call(a, seen, rnd, "revise") for a in active]
        results = run.batch(calls)
        broadcast = []
        still_active = []
        for agent, res in zip(active, results):
            if isinstance(res, AgentFailure):
                run.hub.post(agent.name, res.reason, rnd, kind="failure")
                continue
            still_active.append(agent)
            if rnd > 0 and NO_UPDATE in res.output:
                run.hub.post(agent.name, res.output, rnd, kind="no_update")
                continue
            last[agent.name] = res.output
            broadcast.append((agent.name, res.output))
            run.hub.post(agent.name, res.output, rnd)
        active = still_active
        if not active:
            break
        if rnd > 0 and not broadcast:
            converged = True
            break
        previous = broadcast
    if not last:
        failed = run.outcomes[design.agents[0].name]
        run.abort(AgentFailure(failed.agent, 1, failed.error or "all mesh agents failed"), rounds)
    final = labeled((a.name, last[a.name]) for a in design.agents if a.name in last)
    natural = converged or not active
    return run.finish(final, rounds, Termination.NATURAL if natural else Termination.MAX_ROUNDS)


def _normalize(text: str) -> str:
    return " ".join(text.split())


def run_circular(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    _require(len(design.agents) >= 2, "circular requires at least 2 agents")
    run = _Run(design, ctx)
    current = prompt
    prev_cycle: Optional[str] = None
    agents = design.agents
    for cycle in range(1, run.max_rounds + 1):
        for i, agent in enumerate(agents):
            current = run.call(agent, current, cycle, "pass")
            run.hub.post(agent.name, current, cycle, (agents[(i + 1) % len(agents)].name,))
        if prev_cycle is not None and _normalize(current) == _normalize(prev_cycle):
            return run.finish(current, cycle, Termination.NATURAL)
        prev_cycle = current
    return run.finish(current, run.max_rounds, Termination.MAX_ROUNDS)


def grid_neighbors(rows: int, cols: int, index: int) -> list[int]:
    """Up, down, left, right; no wraparound."""
    r, c = divmod(index, cols)
    out = []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < rows and 0 <= cc < cols:
            out.append(rr * cols + cc)
    return out


def run_grid(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    rows, cols = design.params.grid_rows, design.params.grid_cols
    _require(bool(rows) and bool(cols) and rows * cols == len(design.agents),
             "grid requires grid_rows * grid_cols == number of agents")
    run = _Run(design, ctx)
    agents = design.agents
    state: list[Optional[str]] = [None] * len(agents)
    rounds = 0
    for rnd in range(run.max_rounds):
        rounds = rnd + 1
        calls = []
        for i, agent in enumerate(agents):
            if rnd == 0:
                calls.append(Call(agent, prompt, 0, "answer"))
                continue
            neigh = [(agents[j].name, state[j]) for j in grid_neighbors(rows, cols, i)]
            text = f"{prompt}\n\nYour previous output:\n{state[i]}"
            if neigh:
                text += f"\n\nNeighbor outputs:\n{labeled(neigh)}"
            calls.append(Call(agent, text, rnd, "refine"))
        results = run.batch(calls)
        new_state = list(state)
        for i, (agent, res) in enumerate(zip(agents, results)):
            if isinstance(res, AgentFailure):
                run.hub.post(agent.name, res.reason, rnd, kind="failure")
                if state[i] is None:
                    run.abort(res, rounds)
                continue  # a failed cell keeps its previous output
            new_state[i] = res.output
            run.hub.post(agent.name, res.output, rnd)
        stable = rnd > 0 and new_state == state
        state = new_state
        if stable:
            return run.finish(_grid_final(agents, state), rounds, Termination.NATURAL)
    return run.finish(_grid_final(agents, state), rounds, Termination.MAX_ROUNDS)


def _grid_final(agents, state) -> str:
    return labeled((a.name, s) for a, s in zip(agents, state))


def forest_heights(names: list[str], parents: dict) -> dict[str, int]:
    """Height of each node (leaves 0).  Raises CycleError for cyclic maps."""
    known = set(names)
    parent = {n: parents.get(n) for n in names}
    for child, p in parent.items():
        if p is not None and p not in known:
            raise DesignError(f"forest parent {p!r} of {child!r} is not an agent")
    for start in names:
        seen = {start}
        node = parent[start]
        while node is not None:
            if node in seen:
                raise CycleError(f"forest parent map has a cycle through {node!r}")
            seen.add(node)
            node = parent[node]
    children: dict[str, list[str]] = {n: [] for n in names}
    for n in names:
        if parent[n] is not None:
            children[parent[n]].append(n)
    heights: dict[str, int] = {}

    def height(n: str) -> int:
        if n not in heights:
            heights[n] = 0 if not children[n] else 1 + max(height(c) for c in children[n])
        return heights[n]

    for n in names:
        height(n)
    return heights


def run_forest(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    names = design.names
    parents = design.params.parents
    heights = forest_heights(names, parents)
    run = _Run(design, ctx)
    outputs: dict[str, str] = {}
    top = max(heights.values())
    for h in range(top + 1):
        level = [n for n in names if heights[n] == h]
        calls = []
        for n in level:
            kids = [c for c in names if parents.get(c) == n]
            text = prompt
            if kids:
                text = f"{prompt}\n\nChild outputs:\n{labeled((c, outputs[c]) for c in kids)}"
            calls.append(Call(design.agent(n), text, h + 1, "synthesize" if kids else "answer"))
        results = run.batch(calls)
        agents = [c.agent for c in calls]
        for agent, res in zip(agents, results):
            if isinstance(res, AgentFailure):
                _post_batch(run.hub, agents, results, h + 1)
                run.abort(res, h + 1)
            outputs[agent.name] = res.output
        for agent, res in zip(agents, results):
            p = parents.get(agent.name)
            run.hub.post(agent.name, res.output, h + 1, (p,) if p else BROADCAST)
    roots = [n for n in names if parents.get(n) is None]
    return run.finish(labeled((r, outputs[r]) for r in roots), top + 1, Termination.NATURAL)


def parse_vote(text: str) -> tuple[bool, str]:
    """Parse a voter's structured verdict; anything malformed is a rejection."""
    candidates = [text.strip()]
    m = re.search(r"\{.*\}", text, re.DOTALL)
    if m:
        candidates.append(m.group(0))
    for cand in candidates:
        try:
            data = json.loads(cand)
        except (ValueError, TypeError):
            continue
        if isinstance(data, dict) and isinstance(data.get("approved"), bool):
            return data["approved"], str(data.get("feedback", ""))
    return False, "unparseable"


def vote_passes(approved: int, voters: int, threshold: float) -> bool:
    return Fraction(approved, voters) >= Fraction(str(threshold))


def run_maker(design: TeamDesign, ctx: TopologyContext, prompt: str) -> RunResult:
    _require(len(design.agents) >= 3, "maker requires 1 proposer and at least 2 voters")
    threshold = design.params.vote_threshold
    _require(0.5 <= threshold <= 1, "maker vote_threshold must be in [0.5, 1]")
    run = _Run(design, ctx)
    proposer, voters = design.agents[0], design.agents[1:]
    proposal = ""
    feedback: list[tuple[str, str]] = []
    for rnd in range(1, run.max_rounds + 1):
        ask = prompt if rnd == 1 else f"{prompt}\n\nVoter feedback:\n{labeled(feedback)}"
        proposal = run.call(proposer, ask, rnd, "propose")
        run.hub.post(proposer.name, proposal, rnd, [v.name for v in voters], kind="proposal")
        ballot = (
            f"Task: {prompt}\n\nProposal:\n{proposal}\n\n"
            'Reply with JSON {"approved": true|false, "feedback": "..."}'
        )
        results = run.batch([Call(v, ballot, rnd, "vote") for v in voters])
        approved = 0
        feedback = []
        for voter, res in zip(voters, results):
            if isinstance(res, AgentFailure):
                ok, note = False, "failed"
                run.hub.post(voter.name, res.reason, rnd, (proposer.name,), kind="failure")
            else:
                ok, note = parse_vote(res.output)
                run.hub.post(voter.name, res.output, rnd, (proposer.name,), kind="vote")
            approved += ok
            feedback.append((voter.name, note))
        if vote_passes(approved, len(voters), threshold):
            return run.finish(proposal, rnd, Termination.NATURAL)
    return run.finish(proposal, run.max_rounds, Termination.MAX_ROUNDS)


RUNNERS = {
    TopologyKind.SEQUENTIAL: run_sequential,
    TopologyKind.PARALLEL: run_parallel,
    TopologyKind.HIERARCHICAL: run_hierarchical,
    TopologyKind.DAG: run_dag,
    TopologyKind.MIXTURE: run_mixture,
    TopologyKind.DEBATE: run_debate,
    TopologyKind.MESH: run_mesh,
    TopologyKind.STAR: run_star,
    TopologyKind.CIRCULAR: run_circular,
    TopologyKind.GRID: run_grid,
    TopologyKind.FOREST: run_forest,
    TopologyKind.MAKER: run_maker,
}
