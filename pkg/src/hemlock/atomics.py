"""GIL-backed atomic words.

Under CPython a plain load or store of one attribute is atomic with respect
to other bytecodes, so ``load``/``store`` are direct attribute accesses.
Read-modify-write sequences are not atomic, so every word carries a private
``threading.Lock`` serializing its RMW operations.  Every operation here is
a full barrier; that is strictly stronger than the acquire-release pairing
the lock algorithms require (the doorstep swap / grant publish pair, and the
successor's clearing store).

Values stored in a word may be integers or object references; compare
operations use ``==``, which degrades to identity for the node and cell
objects used by the locks (they do not define ``__eq__``).
"""

from __future__ import annotations

import threading

__all__ = ["AtomicWord", "SequenceCounter"]


class SequenceCounter:
    """Monotone counter handing out 0, 1, 2, ... across threads."""

    __slots__ = ("_value", "_lock")

    def __init__(self) -> None:
        self._value = 0
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            value = self._value
            self._value = value + 1
            return value

    def peek(self) -> int:
        return self._value


class AtomicWord:
    """One shared word with SWAP / CAS / FAA plus stamped variants.

    The ``*_stamped`` forms sample a :class:`SequenceCounter` inside the
    word's critical section, so the stamp order matches the RMW order on
    this word.  That is what makes doorstep sequence numbers trustworthy
    for the FIFO audit: no other thread's doorstep can slip between the
    swap and its stamp.
    """

    __slots__ = ("_value", "_rmw")

    def __init__(self, value=0) -> None:
        self._value = value
        self._rmw = threading.Lock()

    def load(self):
        return self._value

    def store(self, value) -> None:
        self._value = value

    def swap(self, new):
        """Atomically replace the value, returning the previous one."""
        with self._rmw:
            old = self._value
            self._value = new
            return old

    def compare_exchange(self, expected, new):
        """CAS returning the observed value (success iff ``== expected``)."""
        with self._rmw:
            old = self._value
            if old == expected:
                self._value = new
            return old

    def fetch_add(self, delta: int):
        with self._rmw:
            old = self._value
            self._value = old + delta
            return old

    def swap_stamped(self, new, seq: SequenceCounter):
        with self._rmw:
            old = self._value
            self._value = new
            return old, seq.next()

    def compare_exchange_stamped(self, expected, new, seq: SequenceCounter):
        with self._rmw:
            old = self._value
            if old == expected:
                self._value = new
            return old, seq.next()

    def fetch_add_stamped(self, delta: int, seq: SequenceCounter):
        with self._rmw:
            old = self._value
            self._value = old + delta
            return old, seq.next()

    def store_act(self, value, hook) -> None:
        """Store plus a side effect, both inside the word's critical section.

        Used to retire a waiter-census entry in the same indivisible step as
        the acknowledgment store, so the gauge can never transiently count a
        waiter that has already consumed its grant.
        """
        with self._rmw:
            self._value = value
            hook()

    def compare_exchange_act(self, expected, new, hook):
        """CAS that runs ``hook`` inside the critical section on success."""
        with self._rmw:
            old = self._value
            if old == expected:
                self._value = new
                hook()
            return old
