"""Deterministic identifier and logical-clock helpers.

Every run-scoped object id comes from a per-prefix counter ("task-1",
"step-17", ...) so that two runs of the same scenario produce
byte-comparable logs. Wall-clock time is only used in live mode; the
deterministic clock hands out strictly increasing compact ISO timestamps
derived from a fixed base instant.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from datetime import datetime, timedelta


class IdGenerator:
    """Per-prefix monotonic counters for run-scoped identifiers."""

    def __init__(self) -> None:
        self._counters: dict[str, itertools.count] = defaultdict(lambda: itertools.count(1))

    def next(self, prefix: str) -> str:
        return f"{prefix}-{next(self._counters[prefix])}"

    def next_wait_id(self, receiver_id: str) -> str:
        # "wid-<counter>-<receiver>" keeps the lock owner readable in logs.
        return f"{self.next('wid')}-{receiver_id}"


class LogicalClock:
    """Timestamp source for persistent-memory keys.

    Deterministic mode advances one second per request from a fixed base,
    so memory keys are reproducible across runs. Live mode uses the real
    clock but still guarantees strictly increasing keys.
    """

    BASE = datetime(2025, 6, 13, 10, 30, 22)

    def __init__(self, deterministic: bool = True) -> None:
        self.deterministic = deterministic
        self._ticks = 0
        self._last_key = ""

    def next_key(self) -> str:
        if self.deterministic:
            stamp = self.BASE + timedelta(seconds=self._ticks)
            self._ticks += 1
            return stamp.strftime("%Y%m%dT%H%M%S")
        key = datetime.now().strftime("%Y%m%dT%H%M%S")
        while key <= self._last_key:
            self._ticks += 1
            key = (datetime.now() + timedelta(seconds=self._ticks)).strftime("%Y%m%dT%H%M%S")
        self._last_key = key
        return key
