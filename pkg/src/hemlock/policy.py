"""Busy-wait policies for grant-cell traffic.

Three observationally equivalent ways to wait for a lock identity to
appear in a grant cell and acknowledge it by restoring the cell to empty:

* ``NAIVE_LOAD``  — spin on plain loads, then store empty.
* ``CTR_CAS``     — poll with CAS(cell, want -> empty); observing and
  acknowledging are one read-modify-write, which on single-writer-coherence
  hardware leaves the line modified in the waiter's cache.
* ``CTR_FAA0``    — poll with fetch-and-add of 0 as a read-with-intent-to-
  write, then store empty.

The same trichotomy applies to the release-side wait for one's own cell to
drain back to empty.  Every spin iteration issues a processor hint and
there is never any backoff; the default hint yields the processor, which
under CPython also hands off the interpreter lock so the publisher can run.

These policies are specific to the grant-cell handover pattern; the MCS,
CLH and Ticket baselines always busy-wait with plain loads.
"""

from __future__ import annotations

import os
from enum import Enum

from .registry import EMPTY, GrantCell

__all__ = ["WaitPolicy", "DEFAULT_HINT", "grant_wait", "await_consumed", "await_vacant"]

DEFAULT_HINT = os.sched_yield


class WaitPolicy(Enum):
    NAIVE_LOAD = "naive-load"
    CTR_CAS = "ctr-cas"
    CTR_FAA0 = "ctr-faa0"

    @classmethod
    def from_name(cls, name: str) -> "WaitPolicy":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown wait policy {name!r}")


def _noop() -> None:
    return None


def grant_wait(cell: GrantCell, want: int, policy: WaitPolicy, hint=DEFAULT_HINT) -> None:
    """Wait until ``cell`` holds ``want`` and restore it to empty.

    At most one thread may wait for a given (cell, want) pair at a time;
    the publisher stores ``want`` exactly once per handover.  Returns after
    this caller's acknowledgment store (or consuming CAS) landed.
    """
    word = cell.word
    gauge = cell.gauge
    retire = gauge.dec if gauge is not None else _noop

    if policy is WaitPolicy.CTR_CAS:
        if word.compare_exchange(want, EMPTY) == want:
            return
        if gauge is not None:
            gauge.inc()
        while True:
            hint()
            if word.compare_exchange_act(want, EMPTY, retire) == want:
                return
    elif policy is WaitPolicy.NAIVE_LOAD:
        if word.load() == want:
            word.store(EMPTY)
            return
        if gauge is not None:
            gauge.inc()
        while True:
            hint()
            if word.load() == want:
                word.store_act(EMPTY, retire)
                return
    elif policy is WaitPolicy.CTR_FAA0:
        if word.fetch_add(0) == want:
            word.store(EMPTY)
            return
        if gauge is not None:
            gauge.inc()
        while True:
            hint()
            if word.fetch_add(0) == want:
                word.store_act(EMPTY, retire)
                return
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown policy {policy!r}")


def await_consumed(cell: GrantCell, ident: int, policy: WaitPolicy, hint=DEFAULT_HINT) -> None:
    """Release-side wait: spin until the published identity has departed.

    Waiting for the cell to differ from ``ident`` rather than to equal
    empty matters under OHO-1, where a successor for another lock may CAS
    its flag into the cell the instant the acknowledgment lands; waiting
    for exactly empty would miss that window and stall forever.  For the
    other variants nothing but the acknowledgment can change the cell, so
    the two conditions coincide.  Not counted by the waiter census; the
    spinner here is the departing owner, not an admission waiter.
    """
    word = cell.word
    if policy is WaitPolicy.CTR_CAS:
        while word.compare_exchange(EMPTY, EMPTY) == ident:
            hint()
    elif policy is WaitPolicy.NAIVE_LOAD:
        while word.load() == ident:
            hint()
    elif policy is WaitPolicy.CTR_FAA0:
        while word.fetch_add(0) == ident:
            hint()
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown policy {policy!r}")


def await_vacant(cell: GrantCell, policy: WaitPolicy, hint=DEFAULT_HINT) -> None:
    """Overlap prologue wait: spin until the caller's own cell is empty.

    Used before re-publishing, where the cell may still carry an earlier
    publish whose acknowledgment was deferred.
    """
    word = cell.word
    if policy is WaitPolicy.CTR_CAS:
        while word.compare_exchange(EMPTY, EMPTY) != EMPTY:
            hint()
    elif policy is WaitPolicy.NAIVE_LOAD:
        while word.load() != EMPTY:
            hint()
    elif policy is WaitPolicy.CTR_FAA0:
        while word.fetch_add(0) != EMPTY:
            hint()
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown policy {policy!r}")
