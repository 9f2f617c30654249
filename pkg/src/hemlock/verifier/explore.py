"""Exhaustive interleaving exploration and trace replay.

The explorer runs a memoized depth-first search over every interleaving of
a step machine, checking at each state or transition:

* mutual exclusion      — at most one owner per lock at a time;
* doorstep FIFO         — critical sections are entered in doorstep order;
* progress              — some transition is enabled while any thread is
  unfinished (with finite, spin-guarded scripts this witnesses lockout
  freedom: every maximal path terminates with all scripts complete);
* fere-local bound      — admission waiters on one grant cell never exceed
  the number of locks associated with the cell's owner;
* one waiter per pair   — never two threads waiting for the same lock
  identity in the same cell, and never two on one MCS/CLH queue element;
* swap sanity           — the doorstep swap never returns the caller;
* tail-null             — an empty tail implies nobody is between the
  doorsteps (and per-thread MCS node counts match associated locks).

Exploration is deterministic: identical configurations give identical
reports, state counts included.  Every violation carries a replayable
trace of thread indices, and ``replay`` re-executes a schedule.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from ..errors import UsageError
from .machines import build_machine
from .model import ModelConfig

__all__ = ["Violation", "ExplorationReport", "explore", "replay", "ReplayResult"]

DEFAULT_MAX_STATES = 10_000_000
_VIOLATION_CAP = 50


@dataclass(frozen=True)
class Violation:
    prop: str
    detail: str
    trace: tuple[int, ...]

    def trace_text(self) -> str:
        return ",".join(str(t) for t in self.trace)


@dataclass
class ExplorationReport:
    algorithm: str
    policy: str
    threads: int
    locks: int
    states: int = 0
    transitions: int = 0
    final_states: int = 0
    deadlocked_states: int = 0
    max_waiters_per_cell: int = 0
    violations: list[Violation] = field(default_factory=list)
    exhausted: bool = False
    elapsed: float = 0.0
    admissions: frozenset | None = None

    @property
    def ok(self) -> bool:
        return not self.violations and not self.exhausted

    def violated(self, prop: str) -> bool:
        return any(v.prop == prop for v in self.violations)

    def to_json(self) -> str:
        doc = {
            "algorithm": self.algorithm,
            "policy": self.policy,
            "threads": self.threads,
            "locks": self.locks,
            "states": self.states,
            "transitions": self.transitions,
            "final_states": self.final_states,
            "deadlocked_states": self.deadlocked_states,
            "max_waiters_per_cell": self.max_waiters_per_cell,
            "exhausted": self.exhausted,
            "elapsed_seconds": round(self.elapsed, 3),
            "violations": [
                {"property": v.prop, "detail": v.detail, "trace": v.trace_text()}
                for v in self.violations
            ],
        }
        if self.admissions is not None:
            doc["admission_orders"] = sorted(
                [list(map(list, adm)) for adm in self.admissions]
            )
        return json.dumps(doc, indent=2)


def _initial_book(config: ModelConfig):
    owners = (0,) * config.locks
    queues = ((),) * config.locks
    assoc = ((),) * config.threads
    if config.record_admissions:
        return (owners, queues, assoc, ())
    return (owners, queues, assoc)


def _apply_events(book, events, t: int):
    """Fold protocol events into the bookkeeping; returns (book', errors)."""
    owners, queues, assoc = book[0], book[1], book[2]
    adm = book[3] if len(book) > 3 else None
    errors: list[tuple[str, str]] = []
    for ev in events:
        kind, _, k = ev
        if kind == "doorstep":
            queues = queues[:k] + (queues[k] + (t,),) + queues[k + 1 :]
            if k not in assoc[t]:
                new = tuple(sorted(assoc[t] + (k,)))
                assoc = assoc[:t] + (new,) + assoc[t + 1 :]
        elif kind == "enter":
            if owners[k] != 0:
                errors.append(
                    ("mutual-exclusion", f"thread {t} entered lock {k} held by {owners[k] - 1}")
                )
            if not queues[k] or queues[k][0] != t:
                errors.append(
                    ("fifo", f"thread {t} entered lock {k} ahead of doorstep order {queues[k]}")
                )
            if queues[k] and t in queues[k]:
                rest = tuple(x for x in queues[k] if x != t)
                queues = queues[:k] + (rest,) + queues[k + 1 :]
            owners = owners[:k] + (t + 1,) + owners[k + 1 :]
            if adm is not None:
                adm = adm + ((t, k),)
        elif kind == "transfer":
            owners = owners[:k] + (0,) + owners[k + 1 :]
        elif kind == "done":
            if k in assoc[t]:
                new = tuple(x for x in assoc[t] if x != k)
                assoc = assoc[:t] + (new,) + assoc[t + 1 :]
        elif kind == "swap_self":
            errors.append(("swap-self", f"doorstep swap returned the caller (thread {t}, lock {k})"))
        elif kind == "tryfail":
            pass
        else:  # pragma: no cover - closed event alphabet
            raise AssertionError(kind)
    book2 = (owners, queues, assoc) if adm is None else (owners, queues, assoc, adm)
    return book2, errors


def _trace_to(parents, state) -> tuple[int, ...]:
    steps = []
    cur = state
    while True:
        link = parents[cur]
        if link is None:
            break
        cur, t = link
        steps.append(t)
    return tuple(reversed(steps))


def _check_state(machine, core, book, report, parents, state, violations_seen):
    waiting = machine.waiting_map(core)
    assoc = book[2]
    problems = []
    for key, waiters in waiting.items():
        count = len(waiters)
        if count > report.max_waiters_per_cell:
            report.max_waiters_per_cell = count
        kind = key[0]
        if kind == "g":
            bound = len(assoc[key[1]])
            if count > bound:
                problems.append(
                    ("fere-local", f"{count} waiters on grant cell {key[1]} with {bound} associated locks")
                )
            wants: dict = {}
            for t, want in waiters:
                wants.setdefault(want, []).append(t)
            for want, ts in wants.items():
                if len(ts) > 1:
                    problems.append(
                        ("one-waiter", f"threads {ts} both wait for lock {want[0]} in cell {key[1]}")
                    )
        elif kind in ("mn", "cn") and count > 1:
            problems.append(("local-spin", f"{count} waiters on queue element {key[1]}"))
    problems.extend(machine.audit(core, book))
    for prop, detail in problems:
        marker = (prop, detail)
        if marker not in violations_seen and len(report.violations) < _VIOLATION_CAP:
            violations_seen.add(marker)
            report.violations.append(Violation(prop, detail, _trace_to(parents, state)))


def explore(config: ModelConfig, max_states: int = DEFAULT_MAX_STATES) -> ExplorationReport:
    """Memoized DFS over all interleavings; never silently passes on a cap."""
    machine = build_machine(config)
    report = ExplorationReport(
        algorithm=config.algorithm.value,
        policy=config.effective_policy.value,
        threads=config.threads,
        locks=config.locks,
    )
    started = time.perf_counter()

    state0 = (machine.initial_core(), _initial_book(config))
    parents: dict = {state0: None}
    stack = [state0]
    admissions = set()
    violations_seen: set = set()
    n = config.threads

    while stack:
        state = stack.pop()
        core, book = state
        _check_state(machine, core, book, report, parents, state, violations_seen)
        enabled = False
        for t in range(n):
            result = machine.step(core, t)
            if result is None:
                continue
            enabled = True
            core2, events = result
            book2, errors = _apply_events(book, events, t)
            report.transitions += 1
            if errors:
                trace = _trace_to(parents, state) + (t,)
                for prop, detail in errors:
                    marker = (prop, detail)
                    if marker not in violations_seen and len(report.violations) < _VIOLATION_CAP:
                        violations_seen.add(marker)
                        report.violations.append(Violation(prop, detail, trace))
                continue
            state2 = (core2, book2)
            if state2 not in parents:
                parents[state2] = (state, t)
                if len(parents) > max_states:
                    report.exhausted = True
                    stack.clear()
                    break
                stack.append(state2)
        if not enabled:
            if machine.all_finished(core):
                report.final_states += 1
                if config.record_admissions:
                    admissions.add(book[3])
            else:
                report.deadlocked_states += 1
                if len(report.violations) < _VIOLATION_CAP:
                    stuck = [t for t in range(n) if not machine.finished(core, t)]
                    report.violations.append(
                        Violation(
                            "deadlock",
                            f"no enabled transition; unfinished threads {stuck}",
                            _trace_to(parents, state),
                        )
                    )

    report.states = len(parents)
    report.elapsed = time.perf_counter() - started
    if config.record_admissions:
        report.admissions = frozenset(admissions)
    return report


@dataclass
class ReplayResult:
    core: tuple
    book: tuple
    events: list
    admissions: list
    finished: bool


def replay(config: ModelConfig, schedule) -> ReplayResult:
    """Re-execute a schedule (sequence of thread indices) step by step."""
    machine = build_machine(config)
    core = machine.initial_core()
    book = _initial_book(config)
    log: list = []
    admissions: list = []
    for i, t in enumerate(schedule):
        if not 0 <= t < config.threads:
            raise UsageError(f"schedule step {i}: thread {t} out of range")
        result = machine.step(core, t)
        if result is None:
            raise UsageError(f"schedule step {i}: thread {t} is not enabled")
        core, events = result
        book, errors = _apply_events(book, events, t)
        for ev in events:
            log.append(ev)
            if ev[0] == "enter":
                admissions.append((ev[1], ev[2]))
        for prop, detail in errors:
            log.append(("violation", prop, detail))
    return ReplayResult(core, book, log, admissions, machine.all_finished(core))


def parse_trace(text: str) -> tuple[int, ...]:
    """Parse the comma-separated thread-index trace format."""
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))
