"""Per-thread lock state and its registry.

Each OS thread that touches a lock registers once and receives a
:class:`ThreadContext`.  For the Hemlock algorithms the context's only
algorithmic state is one grant cell: the single word through which a
departing owner signals exactly one successor per lock.  Everything else
in the context is debugging aid or instrumentation.

Grant cells are never recycled while any lock's tail may still reference
them: contexts are deregistered only by their owning thread, only while
holding nothing, and deregistration waits for the grant cell to drain back
to empty (a residual publish can be outstanding under the overlap variant).
"""

from __future__ import annotations

import threading

from .atomics import AtomicWord
from .errors import UsageError
from .instrumentation import Gauge, Instruments

__all__ = [
    "EMPTY",
    "GrantCell",
    "ThreadContext",
    "ThreadRegistry",
    "default_registry",
    "register_thread",
    "deregister_thread",
]

EMPTY = 0

#: isolation units accepted for padding (bytes of destructive interference)
ISOLATION_UNITS = (64, 128)


class GrantCell:
    """One padded word: the succession mailbox of a single thread.

    Holds ``EMPTY``, a lock identity, or (under the OHO-1 variant only) a
    lock identity with the low successor-exists bit set.  Only the owning
    thread stores non-empty values, with two protocol exceptions: the one
    successor per published identity stores ``EMPTY`` to acknowledge, and
    an OHO-1 successor may flag its existence with a single CAS from
    ``EMPTY``.
    """

    __slots__ = ("word", "gauge", "isolation_unit")

    UNPADDED_WORDS = 1

    def __init__(self, isolation_unit: int = 64, gauge: Gauge | None = None) -> None:
        if isolation_unit not in ISOLATION_UNITS:
            raise UsageError(f"isolation unit must be one of {ISOLATION_UNITS}")
        self.word = AtomicWord(EMPTY)
        self.gauge = gauge
        self.isolation_unit = isolation_unit

    def load(self):
        return self.word.load()

    def padded_bytes(self) -> int:
        return self.isolation_unit


class ThreadContext:
    """Registration record of one OS thread."""

    __slots__ = (
        "registry",
        "ident",
        "os_ident",
        "grant",
        "debug",
        "instruments",
        "held",
        "held_high_water",
        "doorstep_buf",
        "mcs_free",
        "mcs_allocated",
        "mcs_live",
        "clh_node",
    )

    def __init__(self, registry: ThreadRegistry, ident: int) -> None:
        self.registry = registry
        self.ident = ident
        self.os_ident = threading.get_ident()
        instruments = registry.instruments
        gauge = instruments.census.new_cell_gauge() if instruments else None
        self.grant = GrantCell(registry.isolation_unit, gauge)
        self.debug = registry.debug
        self.instruments = instruments
        self.held: list[int] = []
        self.held_high_water = 0
        self.doorstep_buf = instruments.doorstep.new_buffer() if instruments else None
        self.mcs_free: list = []
        self.mcs_allocated = 0
        self.mcs_live = 0
        self.clh_node = None

    def note_acquired(self, lock_ident: int) -> None:
        held = self.held
        held.append(lock_ident)
        if len(held) > self.held_high_water:
            self.held_high_water = len(held)

    def note_released(self, lock_ident: int, debug_check: bool) -> None:
        held = self.held
        if lock_ident in held:
            held.remove(lock_ident)
        elif debug_check:
            raise UsageError(f"releasing lock {lock_ident} that is not held")


class ThreadRegistry:
    """Registry of live contexts; owns the instrumentation for a run."""

    def __init__(
        self,
        *,
        isolation_unit: int = 64,
        instrumented: bool = True,
        debug: bool = False,
    ) -> None:
        if isolation_unit not in ISOLATION_UNITS:
            raise UsageError(f"isolation unit must be one of {ISOLATION_UNITS}")
        self.isolation_unit = isolation_unit
        self.instruments: Instruments | None = Instruments() if instrumented else None
        self.debug = debug
        self.retired_max_locks_held = 0
        self._tls = threading.local()
        self._contexts: list[ThreadContext] = []
        self._next_ident = 0
        self._lock = threading.Lock()

    def register_thread(self) -> ThreadContext:
        """Create and register the calling thread's context (once per thread)."""
        if getattr(self._tls, "ctx", None) is not None:
            raise UsageError("thread is already registered")
        with self._lock:
            ctx = ThreadContext(self, self._next_ident)
            self._next_ident += 1
            self._contexts.append(ctx)
        self._tls.ctx = ctx
        return ctx

    def deregister_thread(self, ctx: ThreadContext, hint=None) -> None:
        """Retire the calling thread's context.

        Requires that the thread holds nothing; waits for the grant cell to
        return to empty before the cell may be reclaimed (an overlap-variant
        publish can still be pending acknowledgment).
        """
        if ctx.os_ident != threading.get_ident():
            raise UsageError("contexts must be deregistered by their owning thread")
        if getattr(self._tls, "ctx", None) is not ctx:
            raise UsageError("context is not registered on this thread")
        if ctx.held:
            raise UsageError("deregistering while locks are held")
        spin = hint if hint is not None else _default_hint
        while ctx.grant.word.load() != EMPTY:
            spin()
        with self._lock:
            self._contexts.remove(ctx)
            if ctx.held_high_water > self.retired_max_locks_held:
                self.retired_max_locks_held = ctx.held_high_water
        self._tls.ctx = None

    def current_context(self) -> ThreadContext | None:
        return getattr(self._tls, "ctx", None)

    def contexts(self) -> list[ThreadContext]:
        with self._lock:
            return list(self._contexts)

    def census_count(self) -> int:
        """Number of live contexts, by enumeration."""
        return len(self.contexts())


def _default_hint() -> None:
    import os

    os.sched_yield()


#: process-wide registry for callers that do not manage their own
default_registry = ThreadRegistry()


def register_thread(registry: ThreadRegistry | None = None) -> ThreadContext:
    return (registry or default_registry).register_thread()


def deregister_thread(ctx: ThreadContext) -> None:
    ctx.registry.deregister_thread(ctx)
