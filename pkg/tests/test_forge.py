import random
from decimal import Decimal

import pytest

from agentkernel.core import AgentSpec, EventBus, TaskSpec, TeamDesign, TopologyKind
from agentkernel.core.errors import DesignError, NoEligibleModel
from agentkernel.core.types import TaskType
from agentkernel.forge import (
    PENDING_HUMAN_REVIEW,
    DesignRecord,
    DesignStore,
    Escalation,
    ForgeConfig,
    TemplateDesigner,
    classify_task,
    design_team,
    redesign,
    template_design,
    validate_design,
)
from agentkernel.router import Catalog, ModelInfo

T = TopologyKind
ALL = tuple(TopologyKind)


@pytest.mark.parametrize("prompt,kind", [
    ("Build a REST API for user management", TaskType.CODE),
    ("Write a haiku", TaskType.CREATIVE),
    ("xyzzy", TaskType.CUSTOM),
    ("Survey the literature and cite sources on sleep", TaskType.RESEARCH),
    ("Analyze sales data and compare quarterly trends", TaskType.ANALYSIS),
])
def test_classify(prompt, kind):
    assert classify_task(prompt) is kind


def task(prompt="Build a REST API for user management", **kw):
    return TaskSpec(prompt=prompt, budget=Decimal("1"), **kw)


def test_code_task_gets_three_agent_pipeline():
    d = design_team(task(), TemplateDesigner(), "m", ALL)
    assert d.topology is T.SEQUENTIAL
    assert [a.role for a in d.agents] == ["architect", "implementer", "reviewer"]
    assert all("REST API" in a.system_prompt for a in d.agents)


@pytest.mark.parametrize("tt,kind", [(TaskType.RESEARCH, T.STAR), (TaskType.ANALYSIS, T.MIXTURE),
                                     (TaskType.CREATIVE, T.DEBATE), (TaskType.CUSTOM, T.PARALLEL)])
def test_default_topology_per_type(tt, kind):
    assert design_team(task("x", task_type=tt), TemplateDesigner(), "m", ALL).topology is kind


def test_every_topology_template_validates():
    cat = Catalog.of([ModelInfo("m", "p")])
    for kind in ALL:
        assert validate_design(template_design(kind, "p", "m"), catalog=cat) == []


def test_design_team_is_total_over_types_and_recommendations():
    for tt in TaskType:
        for rec in (None,) + ALL:
            for allowed in (ALL, (T.SEQUENTIAL, T.PARALLEL, T.HIERARCHICAL, T.DAG, T.MIXTURE, T.DEBATE)):
                d = design_team(task("p", task_type=tt), TemplateDesigner(), "m", allowed, recommendation=rec)
                assert validate_design(d) == [] and d.topology in allowed


def test_recommendation_precedence_and_gating():
    assert design_team(task(), TemplateDesigner(), "m", ALL, recommendation=T.DEBATE).topology is T.DEBATE
    companion = (T.SEQUENTIAL, T.PARALLEL, T.HIERARCHICAL, T.DAG, T.MIXTURE, T.DEBATE)
    d = design_team(task("x", task_type=TaskType.RESEARCH), TemplateDesigner(), "m", companion,
                    recommendation=T.MESH)
    assert d.topology is T.SEQUENTIAL


def test_adapt_library_record():
    star = template_design(T.STAR, "old research question", "m")
    rec = DesignRecord(star, TaskType.RESEARCH, 0.9)
    d = design_team(task("new question about sources", task_type=TaskType.RESEARCH), TemplateDesigner(), "m2",
                    ALL, library=rec)
    assert d.topology is T.STAR and len(d.agents) == len(star.agents)
    assert all("new question" in a.system_prompt and "old research" not in a.system_prompt for a in d.agents)
    assert set(d.model_map.values()) == {"m2"}


def test_design_requires_a_model():
    with pytest.raises(NoEligibleModel):
        design_team(task(), TemplateDesigner(), None, ALL)


def test_validate_design_violations():
    voters = [AgentSpec("p", "proposer", model_id="m"), AgentSpec("v", "voter", model_id="m")]
    assert "maker requires ≥2 voters" in validate_design(TeamDesign(voters, T.MAKER))
    bad_tool = TeamDesign([AgentSpec("a", "r", tools=("webSearch",), model_id="m")], T.SEQUENTIAL)
    assert any("webSearch" in v for v in validate_design(bad_tool, tools=["echo"]))
    assert validate_design(template_design(T.SEQUENTIAL, "p", "m"), tools=["echo"]) == []
    cat = Catalog.of([ModelInfo("other", "p")])
    assert any("unknown model" in v for v in validate_design(template_design(T.DEBATE, "p", "m"), catalog=cat))


def test_design_team_raises_on_invalid_generated_design():
    class Broken(TemplateDesigner):
        def generate(self, *a, **k):
            return TeamDesign([AgentSpec("solo", "r", model_id="m")], T.DEBATE)

    with pytest.raises(DesignError):
        design_team(task(), Broken(), "m", ALL)


# -- redesign -------------------------------------------------------------------

def test_refinement_keeps_topology_and_adds_feedback():
    prev = template_design(T.SEQUENTIAL, "task", "m")
    out = redesign(prev, ["cover the error paths"], 1, 0, 1, "task")
    assert out.topology is T.SEQUENTIAL and all("cover the error paths" in a.system_prompt for a in out.agents)


def test_radical_excludes_failed_topologies():
    prev = template_design(T.SEQUENTIAL, "task", "m")
    out = redesign(prev, ["x"], 3, 0, 1, "task", failed=[T.SEQUENTIAL, T.DEBATE])
    assert out.topology not in (T.SEQUENTIAL, T.DEBATE)
    assert validate_design(out) == []


def test_count_five_escalates():
    out = redesign(template_design(T.SEQUENTIAL, "t", "m"), [], 5, 0, 1, "t")
    assert isinstance(out, Escalation) and out.status == PENDING_HUMAN_REVIEW


def test_escalation_boundary_exhaustive():
    budget = Decimal("0.10")
    spends = [Decimal(0), budget, Decimal("0.29"), Decimal("0.30"), Decimal("0.3000001"), Decimal("0.31"),
              Decimal("1")]
    prev = template_design(T.SEQUENTIAL, "t", "m")
    for count in range(1, 6):
        for spent in spends:
            out = redesign(prev, [], count, spent, budget, "t")
            expected = count == 5 or spent > 3 * budget
            assert isinstance(out, Escalation) == expected, (count, spent)


def test_radical_sequence_never_repeats_until_exhausted():
    allowed = (T.SEQUENTIAL, T.PARALLEL, T.HIERARCHICAL, T.DAG, T.MIXTURE, T.DEBATE)
    cfg = ForgeConfig(max_redesigns=20, radical_threshold=1)
    design = template_design(T.SEQUENTIAL, "t", "m")
    seen = [design.topology]
    for count in range(1, 6):
        design = redesign(design, [], count, 0, 1, "t", failed=seen, allowed=allowed, config=cfg)
        assert design.topology not in seen
        seen.append(design.topology)
    assert set(seen) == set(allowed)
    again = redesign(design, [], 6, 0, 1, "t", failed=seen, allowed=allowed, config=cfg)
    assert again.topology is design.topology


def test_forge_config_validation():
    with pytest.raises(ValueError):
        ForgeConfig(radical_threshold=5, max_redesigns=5)


# -- design store -------------------------------------------------------------------

def test_get_best():
    s = DesignStore()
    d = template_design(T.SEQUENTIAL, "t", "m")
    assert s.get_best("code") is None
    s.store(d, "code", 0.9)
    s.store(d, "code", 0.75)
    assert s.get_best("code", 0.7).success_score == 0.9
    only_low = DesignStore()
    only_low.store(d, "code", 0.6)
    assert only_low.get_best("code", 0.7) is None


@pytest.mark.parametrize("size,evicted", [(3, True), (2, False), (1, False)])
def test_evict_with_guard(size, evicted):
    bus = EventBus()
    s = DesignStore(bus=bus)
    d = template_design(T.DEBATE, "t", "m")
    recs = [s.store(d, "creative", 0.8) for _ in range(size)]
    assert s.evict_with_guard(recs[0]) is evicted
    assert s.class_size(T.DEBATE) == (size - 1 if evicted else size)
    assert bus.types("system")[-1] == ("forge:evicted" if evicted else "forge:eviction_blocked")


def test_window_trim_skips_protected_classes():
    s = DesignStore(window=4)
    seq = template_design(T.SEQUENTIAL, "t", "m")
    dag = template_design(T.DAG, "t", "m")
    s.store(dag, "code", 0.8)  # oldest, but alone in its class
    for _ in range(4):
        s.store(seq, "code", 0.8)
    assert len(s.active()) == 4
    assert s.class_size(T.DAG) == 1 and s.class_size(T.SEQUENTIAL) == 3


def test_random_eviction_preserves_classes():
    rng = random.Random(12)
    for trial in range(30):
        s = DesignStore(window=rng.randint(1, 10))
        peak = {}
        for _ in range(60):
            kind = rng.choice(ALL)
            s.store(template_design(kind, "t", "m"), rng.choice(list(TaskType)), rng.random())
            peak[kind] = max(peak.get(kind, 0), s.class_size(kind))
            if rng.random() < 0.3 and s.active():
                s.evict_with_guard(rng.choice(s.active()))
            for k, p in peak.items():
                if p >= 2:
                    assert s.class_size(k) >= 2


def test_store_persists_one_record_per_line(tmp_path):
    path = tmp_path / "designs.jsonl"
    s = DesignStore(path)
    d = template_design(T.GRID, "t", "m")
    s.store(d, "analysis", 0.8)
    s.store(d, "analysis", 0.9)
    assert len(path.read_text().splitlines()) == 2
    loaded = DesignStore(path)
    assert [r.to_dict() for r in loaded.records] == [r.to_dict() for r in s.records]
    assert loaded.get_best("analysis").design == d


def test_failed_topologies():
    s = DesignStore()
    s.store(template_design(T.MESH, "t", "m"), "code", 0.3)
    s.store(template_design(T.STAR, "t", "m"), "code", 0.9)
    assert s.failed_topologies("code") == {T.MESH}
