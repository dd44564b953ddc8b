"""Command-line entry point: run, steer, status, discover and bench."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from ..core.errors import KernelError
from ..core.events import EventBus
from ..core.types import TaskSpec, TopologyKind
from ..orchestrator import JsonDir, KernelConfig, Orchestrator, Ports, SteeringCommand, TaskState, load_config
from ..orchestrator.steering import post_command
from ..router.catalog import Catalog, ModelInfo, discover_models, get_catalog, load_fixture_dir
from .bench import run_loop_benchmark
from .scenario import Scenario, ScriptedExecutor, load_scenario

EXIT_OK, EXIT_TASK_FAILED, EXIT_USAGE, EXIT_ESCALATED = 0, 1, 2, 3


def _catalog_path(config: KernelConfig) -> Path:
    return config.state_dir / "catalog.json"


def save_catalog(catalog: Catalog, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"fetchedAt": catalog.fetched_at, "ttlSeconds": catalog.ttl_seconds, "warnings": list(catalog.warnings),
           "models": [m.to_dict() for m in catalog]}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def load_catalog(path: Path) -> Optional[Catalog]:
    if not path.exists():
        return None
    doc = json.loads(path.read_text(encoding="utf-8"))
    models = {m["model_id"]: ModelInfo(**m) for m in doc["models"]}
    return Catalog(models, doc["fetchedAt"], doc["ttlSeconds"], tuple(doc.get("warnings", ())))


def _config(args, scenario: Optional[Scenario] = None) -> KernelConfig:
    overrides = {"state_dir": args.state_dir}
    if scenario is not None:
        overrides["seed"] = scenario.seed
        if scenario.blocked is not None:
            overrides["blocked_patterns"] = scenario.blocked
    return load_config(args.config, **overrides)


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else Scenario()
    config = _config(args, scenario)
    task = scenario.task
    prompt = args.prompt or task.get("prompt")
    if not prompt:
        print("error: --prompt is required (or set task.prompt in the scenario)", file=sys.stderr)
        return EXIT_USAGE
    budget = args.budget if args.budget is not None else task.get("budget", 1.0)
    mode = args.mode or task.get("mode", "power")
    topology = args.topology or task.get("topology")
    if scenario.models:
        catalog = scenario.catalog()
    else:
        catalog = load_catalog(_catalog_path(config)) or scenario.catalog()
    active, reserve = scenario.panel()
    orch = Orchestrator(Ports(ScriptedExecutor(scenario), active, reserve), catalog, config)
    spec = TaskSpec(prompt, budget, task_type=args.task_type, mode=mode, **({"id": args.id} if args.id else {}))
    print(f"task {spec.id} started", file=sys.stderr, flush=True)
    try:
        result = orch.run_task(spec, topology=topology)
    finally:
        orch.close()
    summary = {k: v for k, v in result.to_dict().items() if k not in ("design", "verdicts")}
    summary["topology"] = result.design.topology.value if result.design else None
    summary["resultPath"] = str(config.output_dir / spec.id / "result.json")
    print(json.dumps(summary, indent=2, default=str))
    if result.status.value == "completed":
        return EXIT_OK
    return EXIT_ESCALATED if result.status.value == "pending_human_review" else EXIT_TASK_FAILED


def cmd_steer(args) -> int:
    config = _config(args)
    if args.action == "redirect" and not args.prompt:
        print("error: redirect needs --prompt", file=sys.stderr)
        return EXIT_USAGE
    doc = JsonDir(config.state_dir / "tasks").load(args.task_id)
    if doc is None:
        print(f"error: unknown task {args.task_id}", file=sys.stderr)
        return EXIT_TASK_FAILED
    state = TaskState.from_dict(doc)
    if state.terminal:
        print(f"error: task {args.task_id} is {state.status.value}; it can no longer be steered", file=sys.stderr)
        return EXIT_TASK_FAILED
    command = SteeringCommand(args.action, args.prompt if args.action == "redirect" else None)
    post_command(config.state_dir / "steer" / f"{args.task_id}.jsonl", command)
    print(json.dumps({"taskId": args.task_id, "command": args.action, "accepted": True}))
    return EXIT_OK


def cmd_status(args) -> int:
    config = _config(args)
    doc = JsonDir(config.state_dir / "tasks").load(args.task_id)
    if doc is None:
        print(f"error: unknown task {args.task_id}", file=sys.stderr)
        return EXIT_TASK_FAILED
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_discover(args) -> int:
    config = _config(args)
    path = _catalog_path(config)
    bus = EventBus(log_dir=config.events_dir, clock=time.time)
    providers, static = load_fixture_dir(args.fixtures)
    now = time.time()
    refreshed = []

    def refresh() -> Catalog:
        refreshed.append(True)
        return discover_models(providers, static, now, args.ttl, bus=bus)

    catalog = get_catalog(load_catalog(path), now, refresh, force=args.force, bus=bus)
    if refreshed:
        save_catalog(catalog, path)
    print(f"catalog: {'refreshed' if refreshed else 'cache hit'} ({len(catalog)} models) -> {path}")
    for m in catalog:
        print(f"  {m.model_id:<24} {m.provider:<12} q={m.quality_score:.2f} in={m.input_rate:g} "
              f"out={m.output_rate:g} {m.origin}")
    for w in catalog.warnings:
        print(f"  warning: {w}")
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario = load_scenario(args.scenario)
    config = _config(args, scenario)
    bench_dir = config.state_dir / "bench"
    result = run_loop_benchmark(scenario, args.tasks, args.iterations, bench_dir, mode=args.mode)
    report = Path(args.report) if args.report else bench_dir / "report.json"
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text(json.dumps(result.to_dict(), indent=2), encoding="utf-8")
    print(result.table())
    print(f"\nreport written to {report}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentkernel", description=__doc__)
    parser.add_argument("--state-dir", help="where logs, checkpoints and outputs live (default .agentkernel)")
    parser.add_argument("--config", help="YAML or JSON kernel config")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one task through the pipeline")
    run.add_argument("--prompt")
    run.add_argument("--budget", type=float)
    run.add_argument("--mode", choices=["companion", "power"])
    run.add_argument("--topology", choices=[k.value for k in TopologyKind])
    run.add_argument("--scenario", help="scenario script with mock agents, judges and models")
    run.add_argument("--id", help="task id (generated when omitted)")
    run.add_argument("--task-type", choices=["code", "research", "analysis", "creative", "custom"])
    run.set_defaults(fn=cmd_run)

    steer = sub.add_parser("steer", help="pause, resume, redirect or cancel a running task")
    steer.add_argument("task_id")
    steer.add_argument("action", choices=["pause", "resume", "cancel", "redirect"])
    steer.add_argument("--prompt", help="new prompt for redirect")
    steer.set_defaults(fn=cmd_steer)

    status = sub.add_parser("status", help="show a task's lifecycle state")
    status.add_argument("task_id")
    status.set_defaults(fn=cmd_status)

    discover = sub.add_parser("discover", help="build the model catalog from provider fixtures")
    discover.add_argument("--fixtures", required=True)
    discover.add_argument("--force", action="store_true", help="ignore a fresh cache")
    discover.add_argument("--ttl", type=float, default=3600.0)
    discover.set_defaults(fn=cmd_discover)

    bench = sub.add_parser("bench", help="benchmarks")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    loop = bench_sub.add_parser("loop", help="tasks x iterations design-judge-learn loop")
    loop.add_argument("--tasks", type=int, default=10)
    loop.add_argument("--iterations", type=int, default=3)
    loop.add_argument("--scenario", required=True)
    loop.add_argument("--mode", choices=["companion", "power"])
    loop.add_argument("--report", help="where to write the JSON report")
    loop.set_defaults(fn=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (KernelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
