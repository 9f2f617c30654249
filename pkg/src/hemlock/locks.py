"""Queue spinlocks behind one context-free acquire/release interface.

The Hemlock family keeps a single tail word per lock.  Arriving threads
swap their grant cell into the tail (the entry doorstep) and, when there
is a predecessor, wait for the lock's identity to appear in the
predecessor's cell, acknowledge by restoring the cell to empty, and enter.
A departing owner CASes the tail back from its own cell to empty; on
failure it publishes the lock identity into its own cell (the exit
doorstep) and waits for the successor's acknowledgment.  Variants:

* naive / ctr       — as above; they differ only in the default wait policy.
* overlap           — defers the acknowledgment wait into the prologue of
  later operations; acquire first drains a residual publish of the same
  lock, release drains the cell before publishing and returns immediately
  after.
* ah                — publishes into the cell before trying the tail CAS
  (aggressive hand-over).  Unsafe if the lock's storage can be reclaimed
  while a release is in flight, so construction requires an explicit
  static-lifetime promise.
* oho1              — a successor flags its existence by CASing identity|1
  into the predecessor's cell; a releasing owner that sees its own cell
  flagged overwrites the flag with the plain identity and never touches
  the tail.
* oho2              — the release loads the tail first and CASes only when
  it still points at the caller, avoiding the futile CAS under contention.

MCS and CLH are the classic queue locks made context-free by storing the
owner's queue node in a head word inside the lock body; MCS nodes come
from a per-thread free stack, CLH nodes migrate between threads and locks.
Ticket is the classic two-counter lock.  Lock identities are even machine
integers (the low bit is the OHO-1 successor flag) allocated from a
process-wide counter and never reused.
"""

from __future__ import annotations

import threading
from enum import Enum

from .atomics import AtomicWord
from .errors import UsageError
from .instrumentation import Instruments
from .policy import DEFAULT_HINT, WaitPolicy, await_consumed, await_vacant, grant_wait
from .registry import EMPTY, GrantCell, ThreadContext

__all__ = [
    "LockAlgorithm",
    "default_policy",
    "HemlockLock",
    "McsLock",
    "McsNode",
    "ClhLock",
    "ClhNode",
    "TicketLock",
    "make_lock",
    "hemlock_acquire",
    "hemlock_release",
    "hemlock_try_acquire",
    "mcs_acquire",
    "mcs_release",
    "clh_acquire",
    "clh_release",
    "ticket_acquire",
    "ticket_release",
]


class LockAlgorithm(Enum):
    """The nine lock algorithms; values are the stable cross-module names."""

    def __new__(cls, name: str, hemlock_variant: str | None):
        member = object.__new__(cls)
        member._value_ = name
        member.hemlock_variant = hemlock_variant
        return member

    HEMLOCK_NAIVE = ("hemlock-naive", "plain")
    HEMLOCK_CTR = ("hemlock-ctr", "plain")
    HEMLOCK_OVERLAP = ("hemlock-overlap", "overlap")
    HEMLOCK_AH = ("hemlock-ah", "ah")
    HEMLOCK_OHO1 = ("hemlock-oho1", "oho1")
    HEMLOCK_OHO2 = ("hemlock-oho2", "oho2")
    MCS = ("mcs", None)
    CLH = ("clh", None)
    TICKET = ("ticket", None)

    @property
    def is_hemlock(self) -> bool:
        return self.hemlock_variant is not None

    @classmethod
    def from_name(cls, name: str) -> "LockAlgorithm":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown lock algorithm {name!r}") from None


HEMLOCK_NAIVE = LockAlgorithm.HEMLOCK_NAIVE
HEMLOCK_CTR = LockAlgorithm.HEMLOCK_CTR
HEMLOCK_OVERLAP = LockAlgorithm.HEMLOCK_OVERLAP
HEMLOCK_AH = LockAlgorithm.HEMLOCK_AH
HEMLOCK_OHO1 = LockAlgorithm.HEMLOCK_OHO1
HEMLOCK_OHO2 = LockAlgorithm.HEMLOCK_OHO2
MCS = LockAlgorithm.MCS
CLH = LockAlgorithm.CLH
TICKET = LockAlgorithm.TICKET


def default_policy(algorithm: LockAlgorithm) -> WaitPolicy:
    """Published default: naive spins with loads, everything else with CAS."""
    return WaitPolicy.NAIVE_LOAD if algorithm is HEMLOCK_NAIVE else WaitPolicy.CTR_CAS


_ident_lock = threading.Lock()
_next_ident = 0


def _new_lock_ident() -> int:
    # Even, nonzero, never reused: the low bit is free for the OHO-1 flag.
    global _next_ident
    with _ident_lock:
        _next_ident += 2
        return _next_ident


def _check_not_held(lock, ctx: ThreadContext) -> None:
    if ctx.debug and lock.ident in ctx.held:
        raise UsageError(f"recursive acquisition of lock {lock.ident}")


def _record_entry(lock, ctx: ThreadContext, doorstep_stamp: int) -> None:
    ins = ctx.instruments
    ctx.note_acquired(lock.ident)
    if ins is not None:
        entry_stamp = ins.doorstep.sequencer.next()
        ctx.doorstep_buf.append((lock.ident, doorstep_stamp, entry_stamp, ctx.ident))


class HemlockLock:
    """One-word lock: the tail names the most recent arriver's grant cell."""

    __slots__ = ("tail", "ident", "algorithm", "_variant", "_release_impl")

    UNPADDED_WORDS = 1

    def __init__(
        self,
        algorithm: LockAlgorithm = HEMLOCK_CTR,
        *,
        static_lifetime: bool = False,
    ) -> None:
        if not algorithm.is_hemlock:
            raise UsageError(f"{algorithm.name} is not a Hemlock variant")
        if algorithm is HEMLOCK_AH and not static_lifetime:
            raise UsageError(
                "hemlock-ah publishes before the tail CAS and may touch the "
                "lock body after handover; construct it with "
                "static_lifetime=True only for locks that are never reclaimed"
            )
        self.tail = AtomicWord(EMPTY)
        self.ident = _new_lock_ident()
        self.algorithm = algorithm
        self._variant = algorithm.hemlock_variant
        self._release_impl = getattr(self, "_release_" + self._variant)

    # -- entry ----------------------------------------------------------

    def acquire(
        self,
        ctx: ThreadContext,
        policy: WaitPolicy | None = None,
        hint=DEFAULT_HINT,
    ) -> None:
        if policy is None:
            policy = default_policy(self.algorithm)
        _check_not_held(self, ctx)
        cell = ctx.grant
        ident = self.ident
        variant = self._variant
        if variant == "overlap":
            # A previous contended release of this same lock may still be
            # unacknowledged; enqueueing with that residual would let our
            # successor enter instantly and break exclusion.
            word = cell.word
            while word.load() == ident:
                hint()
        ins = ctx.instruments
        if ins is not None:
            pred, dstamp = self.tail.swap_stamped(cell, ins.doorstep.sequencer)
        else:
            pred = self.tail.swap(cell)
            dstamp = 0
        if pred != EMPTY:
            if variant == "oho1":
                # Best-effort successor-exists flag; losing the race is fine,
                # the owner falls back to the tail CAS.
                pred.word.compare_exchange(EMPTY, ident | 1)
            grant_wait(pred, ident, policy, hint)
        _record_entry(self, ctx, dstamp)

    def try_acquire(self, ctx: ThreadContext) -> bool:
        """Single CAS of the tail from empty; never waits, never enqueues."""
        _check_not_held(self, ctx)
        cell = ctx.grant
        ins = ctx.instruments
        if ins is not None:
            observed, dstamp = self.tail.compare_exchange_stamped(
                EMPTY, cell, ins.doorstep.sequencer
            )
        else:
            observed = self.tail.compare_exchange(EMPTY, cell)
            dstamp = 0
        if observed != EMPTY:
            return False
        _record_entry(self, ctx, dstamp)
        return True

    # -- exit -----------------------------------------------------------

    def release(
        self,
        ctx: ThreadContext,
        policy: WaitPolicy | None = None,
        hint=DEFAULT_HINT,
    ) -> None:
        if policy is None:
            policy = default_policy(self.algorithm)
        ctx.note_released(self.ident, ctx.debug)
        self._release_impl(ctx, policy, hint)

    def _release_plain(self, ctx, policy, hint) -> None:
        cell = ctx.grant
        if self.tail.compare_exchange(cell, EMPTY) is cell:
            return
        cell.word.store(self.ident)
        await_consumed(cell, self.ident, policy, hint)

    def _release_overlap(self, ctx, policy, hint) -> None:
        cell = ctx.grant
        if self.tail.compare_exchange(cell, EMPTY) is cell:
            return
        # The cell may still be occupied by an earlier publish; drain it
        # now, publish, and return without waiting for the acknowledgment.
        await_vacant(cell, policy, hint)
        cell.word.store(self.ident)

    def _release_ah(self, ctx, policy, hint) -> None:
        cell = ctx.grant
        cell.word.store(self.ident)
        if self.tail.compare_exchange(cell, EMPTY) is cell:
            # No successor arrived before the CAS, so none can ever have
            # seen this cell as its predecessor: safe to take back.
            cell.word.store(EMPTY)
            return
        await_consumed(cell, self.ident, policy, hint)

    def _release_oho1(self, ctx, policy, hint) -> None:
        cell = ctx.grant
        ident = self.ident
        if cell.word.load() == ident | 1:
            cell.word.store(ident)
            await_consumed(cell, ident, policy, hint)
            return
        if self.tail.compare_exchange(cell, EMPTY) is cell:
            return
        cell.word.store(ident)
        await_consumed(cell, ident, policy, hint)

    def _release_oho2(self, ctx, policy, hint) -> None:
        cell = ctx.grant
        if self.tail.load() is cell:
            if self.tail.compare_exchange(cell, EMPTY) is cell:
                return
        cell.word.store(self.ident)
        await_consumed(cell, self.ident, policy, hint)


class McsNode:
    """Queue element: a next link and the flag its owner spins on."""

    __slots__ = ("next", "locked", "gauge")

    UNPADDED_WORDS = 2

    def __init__(self, gauge=None) -> None:
        self.next = AtomicWord(EMPTY)
        self.locked = AtomicWord(False)
        self.gauge = gauge


def _mcs_alloc(ctx: ThreadContext) -> McsNode:
    free = ctx.mcs_free
    if free:
        node = free.pop()
    else:
        ins = ctx.instruments
        node = McsNode(ins.census.new_cell_gauge() if ins else None)
        ctx.mcs_allocated += 1
    ctx.mcs_live += 1
    return node


def _mcs_recycle(ctx: ThreadContext, node: McsNode) -> None:
    ctx.mcs_free.append(node)
    ctx.mcs_live -= 1


class McsLock:
    """Classic MCS with the owner's node kept in a head word (context-free)."""

    __slots__ = ("tail", "head", "ident")

    UNPADDED_WORDS = 2

    def __init__(self) -> None:
        self.tail = AtomicWord(EMPTY)
        self.head = EMPTY
        self.ident = _new_lock_ident()

    def acquire(
        self,
        ctx: ThreadContext,
        policy: WaitPolicy | None = None,
        hint=DEFAULT_HINT,
    ) -> None:
        # policy accepted for interface uniformity; MCS spins on plain loads
        _check_not_held(self, ctx)
        node = _mcs_alloc(ctx)
        node.next.store(EMPTY)
        node.locked.store(True)
        ins = ctx.instruments
        if ins is not None:
            pred, dstamp = self.tail.swap_stamped(node, ins.doorstep.sequencer)
        else:
            pred = self.tail.swap(node)
            dstamp = 0
        if pred != EMPTY:
            pred.next.store(node)
            locked = node.locked
            if locked.load():
                gauge = node.gauge
                if gauge is not None:
                    gauge.inc()
                while True:
                    hint()
                    if not locked.load():
                        break
                if gauge is not None:
                    gauge.dec()
        self.head = node
        _record_entry(self, ctx, dstamp)

    def release(
        self,
        ctx: ThreadContext,
        policy: WaitPolicy | None = None,
        hint=DEFAULT_HINT,
    ) -> None:
        ctx.note_released(self.ident, ctx.debug)
        node = self.head
        succ = node.next.load()
        if succ == EMPTY:
            if self.tail.compare_exchange(node, EMPTY) is node:
                _mcs_recycle(ctx, node)
                return
            # A successor swapped in but has not linked yet.
            nxt = node.next
            while True:
                hint()
                succ = nxt.load()
                if succ != EMPTY:
                    break
        succ.locked.store(False)
        _mcs_recycle(ctx, node)


class ClhNode:
    """Queue element holding the one flag a successor spins on."""

    __slots__ = ("must_wait", "gauge")

    UNPADDED_WORDS = 1

    def __init__(self, must_wait: bool = False, gauge=None) -> None:
        self.must_wait = AtomicWord(must_wait)
        self.gauge = gauge


#: lifetime accounting for the CLH dummy elements (create/destroy pairing)
CLH_DUMMIES_ALLOCATED = AtomicWord(0)
CLH_DUMMIES_RECLAIMED = AtomicWord(0)


class ClhLock:
    """CLH with a standard interface: head word instead of a passed node.

    Construction installs a dummy element; :meth:`destroy` reclaims the
    element currently serving as the dummy.  Elements migrate: an acquiring
    thread leaves its element in the queue and adopts its predecessor's.
    """

    __slots__ = ("tail", "head", "ident", "closed", "_instruments")

    UNPADDED_WORDS = 2

    def __init__(self, instruments: Instruments | None = None) -> None:
        gauge = instruments.census.new_cell_gauge() if instruments else None
        dummy = ClhNode(False, gauge)
        CLH_DUMMIES_ALLOCATED.fetch_add(1)
        self.tail = AtomicWord(dummy)
        self.head = EMPTY
        self.ident = _new_lock_ident()
        self.closed = False
        self._instruments = instruments

    def destroy(self) -> ClhNode:
        """Reclaim the current dummy; the lock must be idle and unused after."""
        if self.closed:
            raise UsageError("lock already destroyed")
        node = self.tail.swap(EMPTY)
        if node == EMPTY or node.must_wait.load():
            raise UsageError("destroying a held or contended lock")
        self.closed = True
        CLH_DUMMIES_RECLAIMED.fetch_add(1)
        return node

    def _thread_node(self, ctx: ThreadContext) -> ClhNode:
        node = ctx.clh_node
        if node is None:
            ins = ctx.instruments
            node = ClhNode(False, ins.census.new_cell_gauge() if ins else None)
            ctx.clh_node = node
        return node

    def acquire(
        self,
        ctx: ThreadContext,
        policy: WaitPolicy | None = None,
        hint=DEFAULT_HINT,
    ) -> None:
        _check_not_held(self, ctx)
        node = self._thread_node(ctx)
        node.must_wait.store(True)
        ins = ctx.instruments
        if ins is not None:
            pred, dstamp = self.tail.swap_stamped(node, ins.doorstep.sequencer)
        else:
            pred = self.tail.swap(node)
            dstamp = 0
        flag = pred.must_wait
        if flag.load():
            gauge = pred.gauge
            if gauge is not None:
                gauge.inc()
            while True:
                hint()
                if not flag.load():
                    break
            if gauge is not None:
                gauge.dec()
        self.head = node
        ctx.clh_node = pred
        _record_entry(self, ctx, dstamp)

    def release(
        self,
        ctx: ThreadContext,
        policy: WaitPolicy | None = None,
        hint=DEFAULT_HINT,
    ) -> None:
        ctx.note_released(self.ident, ctx.debug)
        self.head.must_wait.store(False)


class TicketLock:
    """Two counters; grants strictly in ticket order."""

    __slots__ = ("next_ticket", "now_serving", "ident", "gauge")

    UNPADDED_WORDS = 2

    def __init__(self, instruments: Instruments | None = None) -> None:
        self.next_ticket = AtomicWord(0)
        self.now_serving = AtomicWord(0)
        self.ident = _new_lock_ident()
        self.gauge = instruments.census.new_cell_gauge() if instruments else None

    def acquire(
        self,
        ctx: ThreadContext,
        policy: WaitPolicy | None = None,
        hint=DEFAULT_HINT,
    ) -> None:
        _check_not_held(self, ctx)
        ins = ctx.instruments
        if ins is not None:
            ticket, dstamp = self.next_ticket.fetch_add_stamped(1, ins.doorstep.sequencer)
        else:
            ticket = self.next_ticket.fetch_add(1)
            dstamp = 0
        serving = self.now_serving
        if serving.load() != ticket:
            gauge = self.gauge
            if gauge is not None:
                # retire the census entry inside the observing step, so the
                # gauge can never count this thread after its turn came up
                gauge.inc()
                while True:
                    hint()
                    if serving.compare_exchange_act(ticket, ticket, gauge.dec) == ticket:
                        break
            else:
                while True:
                    hint()
                    if serving.load() == ticket:
                        break
        _record_entry(self, ctx, dstamp)

    def release(
        self,
        ctx: ThreadContext,
        policy: WaitPolicy | None = None,
        hint=DEFAULT_HINT,
    ) -> None:
        ctx.note_released(self.ident, ctx.debug)
        serving = self.now_serving
        serving.store(serving.load() + 1)  # the owner is the sole writer


def make_lock(
    algorithm: LockAlgorithm,
    *,
    instruments: Instruments | None = None,
    static_lifetime: bool = False,
):
    """Construct a lock of the given algorithm."""
    if algorithm.is_hemlock:
        return HemlockLock(algorithm, static_lifetime=static_lifetime)
    if algorithm is MCS:
        return McsLock()
    if algorithm is CLH:
        return ClhLock(instruments)
    if algorithm is TICKET:
        return TicketLock(instruments)
    raise UsageError(f"unknown algorithm {algorithm!r}")


# Free-function spellings of the operations.

def hemlock_acquire(lock: HemlockLock, ctx, policy=None, hint=DEFAULT_HINT) -> None:
    lock.acquire(ctx, policy, hint)


def hemlock_release(lock: HemlockLock, ctx, policy=None, hint=DEFAULT_HINT) -> None:
    lock.release(ctx, policy, hint)


def hemlock_try_acquire(lock: HemlockLock, ctx) -> bool:
    return lock.try_acquire(ctx)


def mcs_acquire(lock: McsLock, ctx, hint=DEFAULT_HINT) -> None:
    lock.acquire(ctx, hint=hint)


def mcs_release(lock: McsLock, ctx, hint=DEFAULT_HINT) -> None:
    lock.release(ctx, hint=hint)


def clh_acquire(lock: ClhLock, ctx, hint=DEFAULT_HINT) -> None:
    lock.acquire(ctx, hint=hint)


def clh_release(lock: ClhLock, ctx, hint=DEFAULT_HINT) -> None:
    lock.release(ctx, hint=hint)


def ticket_acquire(lock: TicketLock, ctx, hint=DEFAULT_HINT) -> None:
    lock.acquire(ctx, hint=hint)


def ticket_release(lock: TicketLock, ctx, hint=DEFAULT_HINT) -> None:
    lock.release(ctx, hint=hint)
