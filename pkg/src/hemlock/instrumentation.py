"""Runtime gauges and audit logs.

Two facilities back the correctness claims at runtime:

* :class:`WaiterCensus` — per-spin-word gauges (current waiters plus a
  high-water mark) and per-thread held-lock high-water marks.  The census
  counts admission-path waiters only; a releasing thread waiting for its
  successor's acknowledgment is not a waiter.  A gauge is bumped only when
  a thread actually enters its spin loop (the first check failed), and it
  is retired inside the same atomic step that acknowledges the handover,
  so the high-water marks are exact upper bounds, not sampling estimates.

* :class:`DoorstepLog` — one global sequence counter plus per-thread
  append-only buffers.  Each acquisition records the stamp taken inside
  the doorstep RMW and a second stamp taken on entry to the critical
  section.  ``fifo_audit`` then checks, per lock, that entry order equals
  doorstep order.

Everything here is observation-only: disable instrumentation and the lock
code paths skip all of it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .atomics import SequenceCounter

__all__ = [
    "HighWater",
    "Gauge",
    "WaiterCensus",
    "DoorstepLog",
    "DoorstepRecord",
    "Instruments",
    "CensusSummary",
    "fifo_audit",
]


class HighWater:
    """Monotone maximum, safe to read live."""

    __slots__ = ("value", "_lock")

    def __init__(self) -> None:
        self.value = 0
        self._lock = threading.Lock()

    def update(self, candidate: int) -> None:
        if candidate > self.value:
            with self._lock:
                if candidate > self.value:
                    self.value = candidate


class Gauge:
    """Current-count gauge with a local and an aggregated high-water mark."""

    __slots__ = ("current", "high_water", "_lock", "_aggregate")

    def __init__(self, aggregate: HighWater | None = None) -> None:
        self.current = 0
        self.high_water = 0
        self._lock = threading.Lock()
        self._aggregate = aggregate

    def inc(self) -> None:
        with self._lock:
            value = self.current + 1
            self.current = value
            if value > self.high_water:
                self.high_water = value
        if self._aggregate is not None:
            self._aggregate.update(value)

    def dec(self) -> None:
        with self._lock:
            self.current -= 1


class WaiterCensus:
    """Factory and aggregate view for all waiter gauges of one registry."""

    def __init__(self) -> None:
        self.cells_high_water = HighWater()

    def new_cell_gauge(self) -> Gauge:
        return Gauge(self.cells_high_water)

    @property
    def max_waiters_per_cell(self) -> int:
        return self.cells_high_water.value


# (lock identity, doorstep stamp, entry stamp, thread id)
DoorstepRecord = tuple[int, int, int, int]


class DoorstepLog:
    """Global sequencer plus per-thread buffers merged after a run."""

    def __init__(self) -> None:
        self.sequencer = SequenceCounter()
        self._buffers: list[list[DoorstepRecord]] = []
        self._lock = threading.Lock()

    def new_buffer(self) -> list[DoorstepRecord]:
        buf: list[DoorstepRecord] = []
        with self._lock:
            self._buffers.append(buf)
        return buf

    def merged(self) -> list[DoorstepRecord]:
        with self._lock:
            out: list[DoorstepRecord] = []
            for buf in self._buffers:
                out.extend(buf)
        return out


@dataclass
class Instruments:
    """Bundle handed to lock operations when instrumentation is on."""

    census: WaiterCensus = field(default_factory=WaiterCensus)
    doorstep: DoorstepLog = field(default_factory=DoorstepLog)


def fifo_audit(records) -> list[tuple[DoorstepRecord, DoorstepRecord]]:
    """Return every admission-order inversion in a merged doorstep log.

    Per lock, entries sorted by entry stamp must also be sorted by doorstep
    stamp; each adjacent out-of-order pair is reported.
    """
    by_lock: dict[int, list[DoorstepRecord]] = {}
    for rec in records:
        by_lock.setdefault(rec[0], []).append(rec)
    inversions = []
    for recs in by_lock.values():
        recs.sort(key=lambda r: r[2])
        for prev, cur in zip(recs, recs[1:]):
            if prev[1] > cur[1]:
                inversions.append((prev, cur))
    return inversions


@dataclass
class CensusSummary:
    """Quiescent snapshot of the census high-water marks."""

    contexts: int
    max_waiters_per_cell: int
    max_locks_held: int
    per_cell: dict[int, int]
    live_waiters: int


def census_snapshot(registry) -> CensusSummary:
    """High-water marks per cell and per thread; call when quiescent."""
    per_cell: dict[int, int] = {}
    live = 0
    max_held = registry.retired_max_locks_held
    contexts = registry.contexts()
    for ctx in contexts:
        gauge = ctx.grant.gauge
        if gauge is not None:
            per_cell[ctx.ident] = gauge.high_water
            live += gauge.current
        if ctx.held_high_water > max_held:
            max_held = ctx.held_high_water
    census = registry.instruments.census if registry.instruments else None
    return CensusSummary(
        contexts=len(contexts),
        max_waiters_per_cell=census.max_waiters_per_cell if census else 0,
        max_locks_held=max_held,
        per_cell=per_cell,
        live_waiters=live,
    )
