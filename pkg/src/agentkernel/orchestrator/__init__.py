"""Task lifecycle: the step pipeline, steering, checkpoints and configuration."""

from .config import DEFAULT_GOLDEN, KernelConfig, load_config
from .pipeline import STEP_NAMES, Interrupted, Orchestrator, Ports, TaskResult, observation_for
from .policy import (
    DEFAULT_BLOCKED_PATTERNS,
    CostEstimate,
    PolicyRule,
    SecurityDecision,
    composite_reward,
    expected_calls,
    rules_from,
    security_check,
    simulate,
)
from .state import (
    TERMINAL,
    BehaviorRecord,
    Checkpoint,
    JsonDir,
    TaskState,
    TaskStatus,
    append_jsonl,
    capture_behavior,
)
from .steering import SteeringCommand, SteeringInbox, SteerKind, post_command
