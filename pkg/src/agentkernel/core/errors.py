"""Exception hierarchy shared across the kernel."""

from __future__ import annotations


class KernelError(Exception):
    """Base class for every error raised by agentkernel."""


class UnknownEventType(KernelError):
    pass


class UnknownMode(KernelError):
    pass


class UnknownModel(KernelError):
    pass


class FeatureGated(KernelError):
    """A feature was requested that the active operating mode does not allow."""


class DesignError(KernelError):
    """A team design failed structural validation."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class CycleError(DesignError):
    pass


class AgentFailure(KernelError):
    """An agent could not produce an output.

    ``result`` carries the partial RunResult when a topology aborts.
    """

    def __init__(self, agent: str, turn: int = 0, reason: str = "", result=None):
        self.agent = agent
        self.turn = turn
        self.reason = reason
        self.result = result
        super().__init__(f"agent {agent!r} failed at turn {turn}: {reason}")


class ProviderError(KernelError):
    """Transient model-provider failure; eligible for retry and counted by breakers."""


class BreakerOpen(KernelError):
    def __init__(self, provider: str):
        self.provider = provider
        super().__init__(f"circuit breaker open for provider {provider!r}")


class RetriesExhausted(KernelError):
    def __init__(self, attempts: int, last_error: BaseException | None):
        self.attempts = attempts
        self.last_error = last_error
        super().__init__(f"gave up after {attempts} attempts: {last_error}")


class NoEligibleModel(KernelError):
    pass


class CascadeExhausted(KernelError):
    def __init__(self, failures):
        self.failures = list(failures)
        ids = ", ".join(model_id for model_id, _ in self.failures)
        super().__init__(f"every cascade candidate failed: {ids}")


class DegenerateObservation(KernelError):
    pass


class BftRequiresThree(KernelError):
    pass


class PanelCollapsed(KernelError):
    pass


class BudgetCapExceeded(KernelError):
    def __init__(self, task_id: str, spent, cap):
        self.task_id = task_id
        self.spent = spent
        self.cap = cap
        super().__init__(f"task {task_id}: spent {spent} exceeds cap {cap}")


class InvalidState(KernelError):
    pass


class ScenarioError(KernelError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
