"""Scenario-driven mocks, the loop benchmark, statistics and the command line."""

from .bench import CONVERGED_AT, BenchResult, run_loop_benchmark
from .scenario import (
    SCHEMA,
    AgentRule,
    JudgeScript,
    Scenario,
    ScriptedExecutor,
    expand_scores,
    load_scenario,
    parse_scenario,
    scripted_port,
)
from .stats import TTest, paired_t_test, regularized_beta, t_two_sided
