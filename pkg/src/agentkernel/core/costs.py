"""Per-task cost accounting in exact decimal arithmetic."""

from __future__ import annotations

import threading
from collections import defaultdict
from decimal import Decimal
from typing import Callable, Optional, Protocol

from .errors import UnknownModel
from .types import CostRecord

MILLION = Decimal(1_000_000)


class RateSource(Protocol):
    def rates(self, model_id: str) -> tuple[Decimal, Decimal]:
        """(input, output) USD per million tokens; raises UnknownModel."""


def to_decimal(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    return Decimal(str(value))


class CostTracker:
    """Records model usage and keeps a running total per task.

    Listeners run after each record is committed, outside the lock; the
    orchestrator uses one to enforce the hard budget cap.
    """

    def __init__(self, rate_source: RateSource):
        self.rate_source = rate_source
        self._lock = threading.Lock()
        self._totals: dict[str, Decimal] = defaultdict(Decimal)
        self._records: dict[str, list[CostRecord]] = defaultdict(list)
        self._listeners: list[Callable[[CostRecord, Decimal], None]] = []

    def record(self, task_id: str, model_id: str, tokens_in: int, tokens_out: int) -> CostRecord:
        rate_in, rate_out = self.rate_source.rates(model_id)
        usd = (Decimal(tokens_in) * rate_in + Decimal(tokens_out) * rate_out) / MILLION
        rec = CostRecord(task_id, model_id, int(tokens_in), int(tokens_out), usd)
        with self._lock:
            self._records[task_id].append(rec)
            self._totals[task_id] += usd
            total = self._totals[task_id]
        for listener in list(self._listeners):
            listener(rec, total)
        return rec

    def total(self, task_id: str) -> Decimal:
        with self._lock:
            return self._totals[task_id]

    def records(self, task_id: str) -> list[CostRecord]:
        with self._lock:
            return list(self._records[task_id])

    def restore(self, task_id: str, total) -> None:
        with self._lock:
            self._totals[task_id] = to_decimal(total)

    def add_listener(self, fn: Callable[[CostRecord, Decimal], None]) -> None:
        self._listeners.append(fn)

    def remove_listener(self, fn) -> None:
        if fn in self._listeners:
            self._listeners.remove(fn)


def check_budget(spent, budget, hard_cap_multiplier=1) -> bool:
    """True when ``spent`` is within ``budget * hard_cap_multiplier``."""
    budget = to_decimal(budget)
    if budget <= 0:
        raise ValueError("budget must be > 0")
    return to_decimal(spent) <= budget * to_decimal(hard_cap_multiplier)


class StaticRates:
    """Rate source backed by a plain mapping; handy in tests."""

    def __init__(self, rates: Optional[dict] = None):
        self._rates = {k: (to_decimal(a), to_decimal(b)) for k, (a, b) in (rates or {}).items()}

    def rates(self, model_id: str) -> tuple[Decimal, Decimal]:
        try:
            return self._rates[model_id]
        except KeyError:
            raise UnknownModel(model_id) from None
