"""Acceptance suite: one test per headline criterion, each reporting a PASS/FAIL line."""

import itertools
import json
import random
import threading
import time
from contextlib import contextmanager
from decimal import Decimal
from pathlib import Path

import pytest

from agentkernel.core import EventBus, TaskSpec, TopologyKind
from agentkernel.core.errors import AgentFailure, BftRequiresThree, BreakerOpen, KernelError, NoEligibleModel
from agentkernel.forge import Escalation, redesign, template_design
from agentkernel.guards import (
    ConfigStore,
    DriftMonitor,
    DriftOutcome,
    Origin,
    Risk,
    Signal,
    apply_goodhart_action,
    detect_goodhart,
    histogram,
    jsd,
    risk_for,
)
from agentkernel.harness import ScriptedExecutor, load_scenario, paired_t_test, parse_scenario, run_loop_benchmark
from agentkernel.judge import Vote, bft, raft, weighted_majority
from agentkernel.orchestrator import Interrupted, KernelConfig, Orchestrator, Ports, TaskStatus
from agentkernel.router import (
    DEFAULT_OBSERVATION_MODEL,
    Belief,
    BreakerStatus,
    CircuitBreaker,
    RetryPolicy,
    call_model,
    discover_models,
    get_catalog,
    load_fixture_dir,
    route_balanced,
    route_cheapest,
    route_quality,
    update_belief,
)
from agentkernel.topology import Termination, execute_topology

from test_guards import history, oracle_jsd, random_dist, reference_with_jsd
from test_harness import _oracle_p, _oracle_t
from test_judge import all_assignments, js, oracle_bft, oracle_raft, oracle_weighted, TIERS
from test_router import Flaky, bandit_run, brute_balanced, brute_cheapest, brute_quality, fixture_catalog, \
    random_catalog
from test_topology import all_designs, generic

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"
A, V, R = Vote.APPROVE, Vote.REVISE, Vote.REJECT


@pytest.fixture
def criterion(pytestconfig):
    """Report the wrapped block as one PASS/FAIL line on the terminal, even under capture."""
    capture = pytestconfig.pluginmanager.getplugin("capturemanager")

    @contextmanager
    def check(name):
        try:
            yield
        except BaseException as exc:
            with capture.global_and_fixture_disabled():
                print(f"\n[FAIL] {name}: {type(exc).__name__}: {str(exc)[:160]}")
            raise
        with capture.global_and_fixture_disabled():
            print(f"\n[PASS] {name}")

    return check


# -- topologies -------------------------------------------------------------------------------


_counter = itertools.count()


def restless(req):
    """Never converges: fresh text every call, votes against, never approves or agrees."""
    n = next(_counter)
    if req.phase == "vote":
        return json.dumps({"approved": False, "feedback": f"again {n}"})
    return f"{req.agent.name} take {n}"


def failing(victim):
    def script(req):
        if req.agent.name == victim:
            raise RuntimeError("scripted crash")
        return generic(req)

    return script


ITERATIVE = {TopologyKind.HIERARCHICAL, TopologyKind.DEBATE, TopologyKind.MESH, TopologyKind.STAR,
             TopologyKind.CIRCULAR, TopologyKind.GRID, TopologyKind.MAKER}


def _run_bounded(make_ctx, d, script, limit=2.0):
    box = {}

    def target():
        try:
            box["result"] = execute_topology(d, make_ctx({}, default=script), "prompt")
        except AgentFailure as exc:
            box["failure"] = exc

    worker = threading.Thread(target=target, daemon=True)
    worker.start()
    worker.join(limit)
    assert not worker.is_alive(), f"{d.topology.value} hung"
    return box


def test_topology_termination(make_ctx, criterion):
    with criterion("topology termination: 12 topologies x 3 scenarios, bounded rounds, < 5 s"):
        start = time.perf_counter()
        cases = 0
        for d in all_designs():
            victim = d.agents[1].name
            for name, script in (("converging", generic), ("non-converging", restless), ("failing", failing(victim))):
                box = _run_bounded(make_ctx, d, script)
                res = box.get("result") or box["failure"].result
                assert res.rounds_executed <= res.max_rounds, (d.topology, name)
                if name == "converging":
                    assert res.termination is Termination.NATURAL, (d.topology, name)
                if name == "non-converging" and d.topology in ITERATIVE:
                    assert res.termination is Termination.MAX_ROUNDS, (d.topology, name)
                if name == "failing":
                    assert res.outcome(victim).failed, (d.topology, name)
                cases += 1
        assert cases == 36
        assert time.perf_counter() - start < 5.0


# -- consensus --------------------------------------------------------------------------------


def test_consensus_oracle_equivalence(criterion):
    with criterion("consensus: weighted/BFT/Raft equal brute force over 351 vote assignments"):
        cases = 0
        for votes in all_assignments():
            n = len(votes)
            tiers = [TIERS[(i * 7 + n) % 3] for i in range(n)]
            assert weighted_majority(js(votes, tiers)).decision is oracle_weighted(votes, tiers)
            assert bft(js(votes, tiers)).decision is oracle_bft(votes)
            assert raft(js(votes, tiers)).decision is oracle_raft(votes)
            cases += 1
        assert cases == 351


def test_bft_thresholds(criterion):
    with criterion("BFT: n=3 needs 3 agreeing votes, otherwise revise"):
        for votes in itertools.product((A, V, R), repeat=3):
            unanimous = len(set(votes)) == 1
            expected = votes[0] if unanimous else V
            assert bft(js(list(votes))).decision is expected
        with pytest.raises(BftRequiresThree):
            bft(js([A, A]))


# -- drift ------------------------------------------------------------------------------------


def test_jsd(criterion):
    with criterion("JSD: identity 0, disjoint 1, worked pair 0.3113, symmetry on 1000 pairs"):
        assert jsd([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0
        assert jsd([1, 0, 0], [0, 0.5, 0.5]) == 1.0
        assert jsd([0.5, 0.5], [1, 0]) == pytest.approx(0.3113, abs=1e-4)
        assert jsd([0.5, 0.5], [1, 0]) == pytest.approx(oracle_jsd([0.5, 0.5], [1, 0]), abs=1e-12)
        rng = random.Random(17)
        for _ in range(1000):
            k = rng.randint(2, 12)
            p, q = random_dist(rng, k), random_dist(rng, k)
            assert abs(jsd(p, q) - jsd(q, p)) <= 1e-12


def test_drift_gate(criterion):
    with criterion("drift gate: 0.87 passes, 0.88 suspends, half-panel drift recalibrates"):
        for target, expected in ((0.87, DriftOutcome.OK), (0.88, DriftOutcome.SUSPENDED)):
            ref, d = reference_with_jsd(target)
            assert d == pytest.approx(target, abs=5e-4)
            monitor = DriftMonitor(golden=[0.5])
            for j in ("j", "k", "l"):
                monitor.register(j, ref if j == "j" else None)
            outcome = [monitor.check("j", 0.95) for _ in range(50)][-1]
            assert outcome is expected, target
        bus = EventBus()
        monitor = DriftMonitor(golden=[0.5] * 20, bus=bus, task_id="t")
        for j in ("a", "b", "c"):
            monitor.register(j, [0.05] * 50)
        for _ in range(50):
            monitor.check("a", 0.95)
        assert [monitor.check("b", 0.95) for _ in range(50)][-1] is DriftOutcome.RECALIBRATE
        assert "drift:recalibrated" in bus.types("t")
        assert all(s.reference == histogram([0.5] * 20) for s in monitor.states.values())


def test_goodhart(criterion):
    with criterion("Goodhart: four signals in isolation, 16 subsets mapped, rotate one / replace all"):
        names = ["low_entropy", "calibration", "inflation", "collapse"]
        signals = [Signal.LOW_ENTROPY, Signal.CALIBRATION_DRIFT, Signal.SCORE_INFLATION, Signal.DIVERSITY_COLLAPSE]
        for flag, signal in zip(names, signals):
            assert detect_goodhart(history(**{flag: True})).signals == {signal}
        expected = {0: Risk.NONE, 1: Risk.LOW, 2: Risk.MEDIUM, 3: Risk.HIGH, 4: Risk.HIGH}
        for mask in itertools.product([False, True], repeat=4):
            report = detect_goodhart(history(**dict(zip(names, mask))))
            assert report.signals == {s for s, on in zip(signals, mask) if on}
            assert report.risk is expected[sum(mask)] is risk_for(report.signals)
        panel, reserve = ("j1", "j2", "j3"), ("r1", "r2", "r3")
        medium = apply_goodhart_action(detect_goodhart(history(inflation=True, collapse=True)), panel, reserve)
        assert medium.kind == "rotate" and len(set(panel) - set(medium.panel)) == 1
        high = apply_goodhart_action(detect_goodhart(history(calibration=True, inflation=True, collapse=True)),
                                     panel, reserve)
        assert high.kind == "replace" and not set(high.panel) & set(panel)


# -- routing ---------------------------------------------------------------------------------


def test_bandit_convergence(criterion):
    with criterion("bandit: 0.9 vs 0.1 arms, greedy correct in >= 95/100 runs, |dQ| <= 0.15"):
        runs = [bandit_run(seed) for seed in range(100)]
        wins = sum(choice == "cheapest" for choice, _ in runs)
        assert wins >= 95, wins
        assert max(d for _, d in runs) <= 0.15 + 1e-12


def test_routing_oracles(criterion):
    with criterion("routing: cheapest/quality/balanced equal brute force on 100 catalogs; fixture picks m2"):
        rng = random.Random(2024)
        for _ in range(100):
            cat = random_catalog(rng)
            models = list(cat)
            qmin = rng.choice([0, 0.5, 0.8, 0.95])
            want = brute_cheapest(models, qmin)
            if want is None:
                with pytest.raises(NoEligibleModel):
                    route_cheapest(cat, qmin)
            else:
                assert route_cheapest(cat, qmin) == want
            assert route_quality(cat) == brute_quality(models)
            assert route_balanced(cat) == brute_balanced(models)
        assert route_balanced(fixture_catalog()).model_id == "m2"


def test_pomdp_belief(criterion):
    with criterion("POMDP: normalized within 1e-9, floor/ceiling held over 1000 sequences, flat update is identity"):
        rng = random.Random(11)
        obs_names = list(DEFAULT_OBSERVATION_MODEL)
        for _ in range(1000):
            b = Belief()
            for _ in range(rng.randint(1, 30)):
                if rng.random() < 0.5:
                    b = update_belief(b, rng.choice(obs_names), DEFAULT_OBSERVATION_MODEL)
                else:
                    b = update_belief(b, "o", {"o": tuple(rng.random() ** 4 for _ in range(3))})
                assert abs(sum(b.probs) - 1) <= 1e-9
                assert all(0.01 - 1e-12 <= p <= 0.98 + 1e-12 for p in b.probs)
            flat = update_belief(b, "o", {"o": (0.3, 0.3, 0.3)})
            assert flat.probs == pytest.approx(b.probs, abs=1e-12)


# -- orchestration ----------------------------------------------------------------------------


PROMPT = "Summarize the quarterly figures and explain the trend"


def orchestrator(tmp_path, doc):
    scenario = parse_scenario(doc)
    active, reserve = scenario.panel()
    ex = ScriptedExecutor(scenario)
    config = KernelConfig(state_dir=tmp_path, seed=scenario.seed, retry_base_delay=0.0)
    return Orchestrator(Ports(ex, active, reserve), scenario.catalog(), config), ex


def test_escalation_boundary(tmp_path, criterion):
    with criterion("escalation: pending review exactly at redesign 5 and spend > 3x budget, full grid"):
        budget = Decimal("0.10")
        spends = [Decimal(0), budget, Decimal("0.29"), Decimal("0.30"), Decimal("0.3000001"), Decimal("1")]
        prev = template_design(TopologyKind.SEQUENTIAL, "t", "m")
        for count in range(1, 6):
            for spent in spends:
                out = redesign(prev, [], count, spent, budget, "t")
                assert isinstance(out, Escalation) == (count == 5 or spent > 3 * budget), (count, spent)
        for rejected in range(1, 6):
            rounds = {str(r): 0.2 for r in range(1, rejected + 1)}
            orch, _ = orchestrator(tmp_path / str(rejected),
                                   {"judges": [{"id": f"j{i}", "rounds": rounds, "default": 0.9} for i in range(3)]})
            result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t"))
            want = TaskStatus.PENDING_HUMAN_REVIEW if rejected == 5 else TaskStatus.COMPLETED
            assert result.status is want and result.redesign_count == rejected, rejected


def test_contract_fail_fast(tmp_path, criterion):
    with criterion("contracts: zero budget runs no agents; quality 0.59 redesigns, 0.60 passes"):
        orch, ex = orchestrator(tmp_path / "budget", {})
        result = orch.run_task(TaskSpec(PROMPT, 0, id="t"))
        assert result.status is TaskStatus.FAILED and ex.calls == []
        for low, redesigns, score in ((0.37, 1, 0.59), (0.4, 0, 0.6)):
            doc = {"judges": [{"id": f"j{i}", "rounds": {"1": s}, "default": 0.9}
                              for i, s in enumerate((0.7, 0.7, low))]}
            orch, _ = orchestrator(tmp_path / str(low), doc)
            result = orch.run_task(TaskSpec(PROMPT, 1.0, id="t"))
            first = result.verdicts[0]
            assert first["decision"] == "approve" and first["score"] == pytest.approx(score, abs=1e-12)
            assert result.redesign_count == redesigns
            assert ("quality" in [v["contract"] for v in first["violations"]]) == (redesigns == 1)


def test_firewall(criterion):
    with criterion("firewall: learning writes leave safety policy and judge profile hashes unchanged"):
        store = ConfigStore({"safetyPolicy": {"blocked": ["rm -rf"]}, "judgeProfiles": {"default": [0.4, 0.3]},
                             "qtable": {}})
        before = {d: store.hash(d) for d in ("safetyPolicy", "judgeProfiles")}
        rng = random.Random(8)
        for i in range(500):
            target = rng.choice(["safetyPolicy", "judgeProfiles", "qtable"])
            assert store.write(target, {"attempt": i}, Origin.LEARNING, human_approved=rng.random() < 0.5) == \
                (target == "qtable")
        assert {d: store.hash(d) for d in before} == before


def test_discovery_fixtures(criterion):
    with criterion("discovery: static entries win, TTL cache hit/miss, failed provider tolerated"):
        providers, static = load_fixture_dir(FIXTURES / "providers")
        cat = discover_models(providers, static, now=0, ttl_seconds=3600)
        assert sorted(cat.models) == ["m1", "m2", "m3", "m4"]
        assert cat.get("m2").quality_score == 0.75 and cat.get("m2").origin == "static"
        assert any("gamma" in w for w in cat.warnings)
        refreshes = []

        def refresh():
            refreshes.append(1)
            return discover_models(providers, static, now=4000, ttl_seconds=3600)

        assert get_catalog(cat, 3599, refresh) is cat and not refreshes
        assert get_catalog(cat, 3601, refresh) is not cat and len(refreshes) == 1
        get_catalog(cat, 10, refresh, force=True)
        assert len(refreshes) == 2


def test_breaker_and_retry(criterion):
    with criterion("breaker/retry: FFFFF opens after 5 invocations, 600 ms reset, seeded jittered backoff"):
        breaker = CircuitBreaker("p", reset_seconds=0.6)
        policy = RetryPolicy(attempts=1, sleep=lambda s: None)
        ex = Flaky("FFFFF")
        for _ in range(5):
            with pytest.raises(KernelError):
                call_model(ex, None, breaker, policy)
        assert ex.calls == 5 and breaker.status is BreakerStatus.OPEN
        with pytest.raises(BreakerOpen):
            call_model(ex, None, breaker, policy)
        assert ex.calls == 5
        time.sleep(0.62)
        assert call_model(ex, None, breaker, policy) == "ok"
        assert breaker.status is BreakerStatus.CLOSED

        slept = []
        policy = RetryPolicy(rng=random.Random(42), sleep=slept.append)
        assert call_model(Flaky("FFS"), None, CircuitBreaker("q"), policy) == "ok"
        oracle = random.Random(42)
        assert slept == pytest.approx([0.1 * (1 + oracle.uniform(-0.25, 0.25)),
                                       0.2 * (1 + oracle.uniform(-0.25, 0.25))], abs=1e-15)


def test_paired_t_test(tmp_path, criterion):
    with criterion("paired t-test: oracle within 1e-6 on 50 pairs, worked example, bench report recount"):
        rng = random.Random(2024)
        for _ in range(50):
            n = rng.randint(2, 30)
            before = [rng.random() for _ in range(n)]
            after = [b + rng.gauss(0.05, 0.2) for b in before]
            r = paired_t_test(before, after)
            assert abs(r.t - _oracle_t(before, after)) <= 1e-6
            assert abs(r.p_value - _oracle_p(r.t, n - 1)) <= 1e-6
        worked = paired_t_test([0.5, 0.5, 0.5], [0.6, 0.7, 0.8])
        assert worked.t == pytest.approx(3.464, abs=1e-3) and worked.p_value == pytest.approx(0.0742, abs=1e-4)
        assert worked.df == 2
        report = run_loop_benchmark(load_scenario(FIXTURES / "scenarios" / "bench_mixed.yaml"), 10, 3,
                                    tmp_path).to_dict()
        per_task = report["perTask"]
        assert report["improvedCount"] == sum(t[-1] > t[0] for t in per_task)
        assert report["convergedCount"] == sum(t[-1] >= 0.8 for t in per_task)
        assert report["meanFinalScore"] == pytest.approx(sum(t[-1] for t in per_task) / len(per_task))
        check = paired_t_test([t[0] for t in per_task], [t[-1] for t in per_task])
        assert (report["tStatistic"], report["pValue"], report["df"]) == (check.t, check.p_value, check.df)


def _replay_run(state_dir, kill_at=None):
    scenario = load_scenario(FIXTURES / "scenarios" / "redesign.yaml")
    spec = TaskSpec(scenario.task["prompt"], scenario.task["budget"], mode="power", id="replay")

    def fresh():
        active, reserve = scenario.panel()
        config = KernelConfig(state_dir=state_dir, seed=scenario.seed, retry_base_delay=0.0)
        return Orchestrator(Ports(ScriptedExecutor(scenario), active, reserve), scenario.catalog(), config)

    orch = fresh()
    if kill_at is None:
        orch.run_task(spec)
    else:
        with pytest.raises(Interrupted):
            orch.run_task(spec, stop_after=kill_at)
        orch = fresh()
        orch.resume("replay")
    orch.close()
    output = (state_dir / "output" / "replay" / "output.txt").read_bytes()
    lines = (state_dir / "events" / "replay.jsonl").read_text().splitlines()
    return output, [json.loads(line)["type"] for line in lines]


def test_replay_determinism(tmp_path, criterion):
    with criterion("replay: identical outputs and event types over 3 runs, one killed at step 6 and restored"):
        runs = [_replay_run(tmp_path / "a"), _replay_run(tmp_path / "b"), _replay_run(tmp_path / "c", kill_at=6)]
        outputs = {out for out, _ in runs}
        assert len(outputs) == 1 and next(iter(outputs))
        assert runs[0][1] == runs[1][1] == runs[2][1]
        assert "forge:redesign" in runs[0][1] and runs[0][1][-1] == "checkpoint:cleared"
