"""Space accounting for the lock algorithms.

The implementation is pure Python, so these numbers describe the logical
layout the algorithms would occupy in a native build: how many machine
words of shared state each lock body needs, the per-thread locking state,
the queue-element size, and whether construction and destruction are
non-trivial.  The word counts are asserted against the classes' declared
shared-word layouts so they cannot drift from the code.
"""

from __future__ import annotations

from dataclasses import dataclass

from .locks import (
    ClhLock,
    ClhNode,
    HemlockLock,
    LockAlgorithm,
    McsLock,
    McsNode,
    TicketLock,
)
from .registry import GrantCell

WORD_BYTES = 8


def padded_bytes(words: int, isolation_unit: int = 64) -> int:
    """Size after padding ``words`` machine words to whole isolation units."""
    raw = words * WORD_BYTES
    units = max(1, -(-raw // isolation_unit))
    return units * isolation_unit


@dataclass(frozen=True)
class SpaceRow:
    family: str
    lock_words: int
    per_thread_words: int
    element_words: int  # queue element, 0 when the algorithm has none
    init_allocations: int  # elements allocated by construction


def space_table() -> list[SpaceRow]:
    return [
        SpaceRow("mcs", McsLock.UNPADDED_WORDS, 0, McsNode.UNPADDED_WORDS, 0),
        SpaceRow("clh", ClhLock.UNPADDED_WORDS, 0, ClhNode.UNPADDED_WORDS, 1),
        SpaceRow("ticket", TicketLock.UNPADDED_WORDS, 0, 0, 0),
        SpaceRow("hemlock", HemlockLock.UNPADDED_WORDS, GrantCell.UNPADDED_WORDS, 0, 0),
    ]


def _shared_words(lock) -> int:
    """Count the words a live lock instance actually carries."""
    if isinstance(lock, HemlockLock):
        return 1  # tail
    if isinstance(lock, (McsLock, ClhLock)):
        return 2  # tail + head
    if isinstance(lock, TicketLock):
        return 2  # next_ticket + now_serving
    raise TypeError(type(lock))


def check_space() -> list[str]:
    """Verify the published word counts against live instances.

    Returns a list of failure descriptions; empty means every assertion
    held, including the CLH create/destroy dummy-element pairing.
    """
    failures: list[str] = []

    expectations = {
        "hemlock": 1,
        "mcs": 2,
        "clh": 2,
        "ticket": 2,
    }
    instances = {
        "hemlock": HemlockLock(LockAlgorithm.HEMLOCK_CTR),
        "mcs": McsLock(),
        "clh": ClhLock(),
        "ticket": TicketLock(),
    }
    for family, want in expectations.items():
        lock = instances[family]
        declared = type(lock).UNPADDED_WORDS
        live = _shared_words(lock)
        if declared != want:
            failures.append(f"{family}: declared {declared} words, expected {want}")
        if live != want:
            failures.append(f"{family}: instance carries {live} words, expected {want}")

    if GrantCell.UNPADDED_WORDS != 1:
        failures.append("per-thread hemlock state is not one word")

    from .locks import CLH_DUMMIES_ALLOCATED, CLH_DUMMIES_RECLAIMED

    allocated_before = CLH_DUMMIES_ALLOCATED.load()
    reclaimed_before = CLH_DUMMIES_RECLAIMED.load()
    lock = ClhLock()
    lock.destroy()
    if CLH_DUMMIES_ALLOCATED.load() - allocated_before != 1:
        failures.append("clh construction did not allocate exactly one dummy")
    if CLH_DUMMIES_RECLAIMED.load() - reclaimed_before != 1:
        failures.append("clh destruction did not reclaim exactly one dummy")

    instances["clh"].destroy()
    return failures


def format_table(isolation_unit: int = 64) -> str:
    lines = [
        f"{'family':<10}{'lock':>6}{'thread':>8}{'element':>9}"
        f"{'init':>6}{'padded lock':>13}"
    ]
    for row in space_table():
        lines.append(
            f"{row.family:<10}{row.lock_words:>6}{row.per_thread_words:>8}"
            f"{row.element_words:>9}{row.init_allocations:>6}"
            f"{padded_bytes(row.lock_words, isolation_unit):>13}"
        )
    return "\n".join(lines)
