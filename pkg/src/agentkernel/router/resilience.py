"""Circuit breaking and jittered exponential retry around model calls."""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from ..core.errors import BreakerOpen, ProviderError, RetriesExhausted
from ..core.events import EventBus


class BreakerStatus(str, Enum):
    CLOSED = "closed"
    OPEN = "open"
    HALF_OPEN = "half-open"


class CircuitBreaker:
    """Per-provider breaker: opens after ``threshold`` consecutive failures."""

    def __init__(self, provider: str = "default", threshold: int = 5, reset_seconds: float = 60.0,
                 clock: Callable[[], float] = time.monotonic, bus: Optional[EventBus] = None,
                 task_id: str = "system"):
        self.provider = provider
        self.threshold = threshold
        self.reset_seconds = reset_seconds
        self.clock = clock
        self.bus = bus
        self.task_id = task_id
        self.consecutive_failures = 0
        self.status = BreakerStatus.CLOSED
        self.opened_at: Optional[float] = None
        self._trial_in_flight = False
        self._lock = threading.Lock()

    def acquire(self) -> None:
        """Raise BreakerOpen unless a call may proceed now."""
        with self._lock:
            if self.status is BreakerStatus.OPEN:
                if self.clock() - self.opened_at < self.reset_seconds:
                    raise BreakerOpen(self.provider)
                self.status = BreakerStatus.HALF_OPEN
                self._trial_in_flight = False
                self._emit("breaker:half_open")
            if self.status is BreakerStatus.HALF_OPEN:
                if self._trial_in_flight:
                    raise BreakerOpen(self.provider)
                self._trial_in_flight = True

    def record_success(self) -> None:
        with self._lock:
            was = self.status
            self.consecutive_failures = 0
            self.status = BreakerStatus.CLOSED
            self.opened_at = None
            self._trial_in_flight = False
            if was is not BreakerStatus.CLOSED:
                self._emit("breaker:closed")

    def release(self) -> None:
        """Give back a half-open trial slot after a non-transient error."""
        with self._lock:
            self._trial_in_flight = False

    def record_failure(self) -> None:
        with self._lock:
            self.consecutive_failures += 1
            if self.status is BreakerStatus.HALF_OPEN or self.consecutive_failures >= self.threshold:
                self.status = BreakerStatus.OPEN
                self.opened_at = self.clock()
                self._trial_in_flight = False
                self._emit("breaker:opened", failures=self.consecutive_failures)

    def _emit(self, type: str, **payload) -> None:
        if self.bus is not None:
            self.bus.emit(type, self.task_id, {"provider": self.provider, **payload})


class BreakerBoard:
    """Lazily created breakers keyed by provider."""

    def __init__(self, **breaker_kw):
        self.breaker_kw = breaker_kw
        self.breakers: dict[str, CircuitBreaker] = {}
        self._lock = threading.Lock()

    def __getitem__(self, provider: str) -> CircuitBreaker:
        with self._lock:
            if provider not in self.breakers:
                self.breakers[provider] = CircuitBreaker(provider, **self.breaker_kw)
            return self.breakers[provider]


@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.1
    max_delay: float = 5.0
    jitter: float = 0.25
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    sleep: Callable[[float], None] = time.sleep

    def delay(self, retry_index: int) -> float:
        """Delay before retry ``retry_index`` (0 = the wait after the first failure)."""
        nominal = min(self.base_delay * 2 ** retry_index, self.max_delay)
        return nominal * (1 + self.rng.uniform(-self.jitter, self.jitter))


def call_model(executor: Callable, request, breaker: CircuitBreaker, policy: Optional[RetryPolicy] = None,
               on_retry: Optional[Callable[[int, float, BaseException], None]] = None):
    """Invoke ``executor(request)`` under the breaker with retries on transient errors.

    The breaker is consulted before every attempt, so a breaker that opens
    mid-retry stops the remaining attempts.
    """
    policy = policy or RetryPolicy()
    last: Optional[BaseException] = None
    for attempt in range(policy.attempts):
        if attempt:
            wait = policy.delay(attempt - 1)
            if on_retry is not None:
                on_retry(attempt, wait, last)
            policy.sleep(wait)
        breaker.acquire()
        try:
            response = executor(request)
        except ProviderError as exc:
            breaker.record_failure()
            last = exc
            continue
        except BaseException:
            breaker.release()
            raise
        breaker.record_success()
        return response
    raise RetriesExhausted(policy.attempts, last)
