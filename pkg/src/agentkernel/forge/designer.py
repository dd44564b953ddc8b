"""Team design: the designer port, a deterministic template designer, and validation."""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable, Optional, Protocol, Sequence

from ..core.errors import DesignError, NoEligibleModel
from ..core.types import AgentSpec, TaskSpec, TaskType, TeamDesign, TopologyKind, TopologyParams
from ..topology.validation import structure_violations
from .classify import classify_task
from .store import DesignRecord

T = TopologyKind

DEFAULT_TOPOLOGY = {
    TaskType.CODE: T.SEQUENTIAL,
    TaskType.RESEARCH: T.STAR,
    TaskType.ANALYSIS: T.MIXTURE,
    TaskType.CREATIVE: T.DEBATE,
    TaskType.CUSTOM: T.PARALLEL,
}

ROLE_BRIEFS = {
    "architect": "Lay out the structure of the solution before anyone writes it.",
    "implementer": "Turn the plan you receive into a complete result.",
    "reviewer": "Check the work you receive, fix defects and return the final version.",
    "coordinator": "Split the task into parts, hand them out and merge what comes back.",
    "researcher": "Gather relevant facts for your part of the task.",
    "analyst": "Examine the material and draw supported conclusions.",
    "writer": "Produce clear prose from the material you receive.",
    "synthesizer": "Combine the candidate answers into the best single answer.",
    "proposer": "Propose a solution and revise it when criticized.",
    "critic": "Point out concrete weaknesses, or reply CONSENSUS when none remain.",
    "peer": "Improve the shared answer, or reply NO_UPDATE when you have nothing to add.",
    "editor": "Refine the draft passed to you, or reply DONE when it is finished.",
    "cell": "Refine your cell's answer using your neighbours' answers.",
    "lead": "Own one subtree: merge your reports' work into a single answer.",
    "voter": 'Judge the proposal and reply with JSON {"approved": true|false, "feedback": "..."}.',
    "planner": "Break the work into steps that others can build independently.",
    "builder": "Build the piece of the work assigned to you.",
    "integrator": "Join the pieces you receive into one coherent result.",
}


def _roles(kind: TopologyKind) -> tuple[list[tuple[str, str]], TopologyParams]:
    """(name, role) pairs and structural params for a topology's template team."""
    if kind is T.SEQUENTIAL:
        return [("architect", "architect"), ("implementer", "implementer"), ("reviewer", "reviewer")], TopologyParams()
    if kind is T.PARALLEL:
        return [("researcher", "researcher"), ("analyst", "analyst"), ("writer", "writer")], TopologyParams()
    if kind in (T.HIERARCHICAL, T.STAR):
        return ([("coordinator", "coordinator"), ("researcher", "researcher"), ("analyst", "analyst"),
                 ("writer", "writer")], TopologyParams())
    if kind is T.DAG:
        names = [("planner", "planner"), ("builder_a", "builder"), ("builder_b", "builder"),
                 ("integrator", "integrator")]
        edges = (("planner", "builder_a"), ("planner", "builder_b"), ("builder_a", "integrator"),
                 ("builder_b", "integrator"))
        return names, TopologyParams(dag_edges=edges)
    if kind is T.MIXTURE:
        return ([("analyst_a", "analyst"), ("analyst_b", "analyst"), ("analyst_c", "analyst"),
                 ("synthesizer", "synthesizer")], TopologyParams())
    if kind is T.DEBATE:
        return [("proposer", "proposer"), ("critic", "critic")], TopologyParams()
    if kind is T.MESH:
        return [("peer_a", "peer"), ("peer_b", "peer"), ("peer_c", "peer")], TopologyParams()
    if kind is T.CIRCULAR:
        return [("editor_a", "editor"), ("editor_b", "editor"), ("editor_c", "editor")], TopologyParams()
    if kind is T.GRID:
        return ([(f"cell_{r}{c}", "cell") for r in range(2) for c in range(2)],
                TopologyParams(grid_rows=2, grid_cols=2))
    if kind is T.FOREST:
        names = [("lead_a", "lead"), ("builder_a", "builder"), ("lead_b", "lead"), ("builder_b", "builder")]
        return names, TopologyParams(tree_edges=(("lead_a", None), ("builder_a", "lead_a"),
                                                 ("lead_b", None), ("builder_b", "lead_b")))
    if kind is T.MAKER:
        return ([("proposer", "proposer"), ("voter_a", "voter"), ("voter_b", "voter"), ("voter_c", "voter")],
                TopologyParams())
    raise ValueError(f"no template for {kind}")


def render_prompt(role: str, task_prompt: str, feedback: Sequence[str] = ()) -> str:
    text = f"You are the {role}. {ROLE_BRIEFS.get(role, '')}\nTask: {task_prompt}".replace(". \n", ".\n")
    for i, note in enumerate(feedback, start=1):
        text += f"\nJudge feedback {i}: {note}"
    return text


def template_design(kind, task_prompt: str, model_id: str, tools: Sequence[str] = ()) -> TeamDesign:
    kind = TopologyKind(kind)
    names, params = _roles(kind)
    agents = [AgentSpec(name, role, render_prompt(role, task_prompt), tuple(tools), model_id) for name, role in names]
    return TeamDesign(agents, kind, params)


class DesignerPort(Protocol):
    def classify(self, prompt: str) -> TaskType: ...

    def generate(self, task: TaskSpec, budget, recommendation: Optional[TopologyKind],
                 topologies: Iterable[TopologyKind], tools: Sequence[str], model_id: str) -> TeamDesign: ...

    def adapt(self, record: DesignRecord, task: TaskSpec, budget, model_id: str) -> TeamDesign: ...


class TemplateDesigner:
    """Deterministic designer keyed on task type, honoring an allowed topology recommendation."""

    def classify(self, prompt: str) -> TaskType:
        return classify_task(prompt)

    def generate(self, task, budget, recommendation, topologies, tools, model_id):
        allowed = set(topologies)
        task_type = TaskType(task.task_type or self.classify(task.prompt))
        kind = DEFAULT_TOPOLOGY[task_type]
        if recommendation is not None and TopologyKind(recommendation) in allowed:
            kind = TopologyKind(recommendation)
        elif kind not in allowed:
            kind = next(k for k in TopologyKind if k in allowed)
        return template_design(kind, task.prompt, model_id)

    def adapt(self, record, task, budget, model_id):
        agents = [replace(a, system_prompt=render_prompt(a.role, task.prompt), model_id=model_id)
                  for a in record.design.agents]
        return record.design.with_agents(agents)


def validate_design(design: TeamDesign, tools: Iterable[str] = (), catalog=None) -> list[str]:
    """Every problem with the design; an empty list means it is runnable."""
    out = structure_violations(design)
    known_tools = set(tools)
    for a in design.agents:
        for t in a.tools:
            if t not in known_tools:
                out.append(f"agent {a.name!r} uses unregistered tool {t!r}")
        if catalog is not None and a.model_id not in catalog:
            out.append(f"agent {a.name!r} uses unknown model {a.model_id!r}")
    return out


def design_team(task: TaskSpec, designer: DesignerPort, model_id: Optional[str],
                topologies: Iterable[TopologyKind], tools: Sequence[str] = (),
                recommendation: Optional[TopologyKind] = None, library: Optional[DesignRecord] = None,
                catalog=None) -> TeamDesign:
    if not model_id:
        raise NoEligibleModel("no model available for the team")
    topologies = list(topologies)
    if library is not None and library.topology in topologies:
        design = designer.adapt(library, task, task.budget, model_id)
    else:
        design = designer.generate(task, task.budget, recommendation, topologies, tools, model_id)
    problems = validate_design(design, tools, catalog)
    if problems:
        raise DesignError(problems)
    return design
