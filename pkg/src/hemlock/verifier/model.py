"""Configurations for the exhaustive interleaving explorer.

A configuration names an algorithm, a wait policy, and one finite script
per thread.  Script actions are ``("acquire", k)``, ``("release", k)`` and
``("trypair", k)``; the last attempts a non-blocking acquisition and, only
when it succeeds, immediately releases.  Scripts must be well bracketed
per thread (a release must match a currently held acquire) and the total
action count is capped to keep the reachable graph small.

Optional mutations deliberately break an algorithm so tests can confirm
the explorer notices:

* ``drop-clear-store`` — the successor observes the handover but never
  restores the grant cell to empty.
* ``drop-cas-guard``   — the release stores empty into the tail
  unconditionally instead of compare-and-swapping from the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import UsageError
from ..locks import LockAlgorithm, default_policy
from ..policy import WaitPolicy

__all__ = ["Action", "ModelConfig", "uniform_scripts", "nested_leader_scripts", "make_config"]

Action = tuple[str, int]

MAX_THREADS = 4
MAX_LOCKS = 3
MAX_ACTIONS = 16

MUTATIONS = ("drop-clear-store", "drop-cas-guard")


@dataclass(frozen=True)
class ModelConfig:
    algorithm: LockAlgorithm
    threads: int
    locks: int
    scripts: tuple[tuple[Action, ...], ...]
    policy: WaitPolicy | None = None
    mutations: frozenset = field(default_factory=frozenset)
    record_admissions: bool = False

    def __post_init__(self):
        if not 1 <= self.threads <= MAX_THREADS:
            raise UsageError(f"threads must be 1..{MAX_THREADS}")
        if not 1 <= self.locks <= MAX_LOCKS:
            raise UsageError(f"locks must be 1..{MAX_LOCKS}")
        if len(self.scripts) != self.threads:
            raise UsageError("one script per thread required")
        total = sum(len(s) for s in self.scripts)
        if total > MAX_ACTIONS:
            raise UsageError(f"total action count {total} exceeds {MAX_ACTIONS}")
        for mutation in self.mutations:
            if mutation not in MUTATIONS:
                raise UsageError(f"unknown mutation {mutation!r}")
        for script in self.scripts:
            held: list[int] = []
            for verb, k in script:
                if not 0 <= k < self.locks:
                    raise UsageError(f"lock index {k} out of range")
                if verb == "acquire":
                    if k in held:
                        raise UsageError("script re-acquires a held lock")
                    held.append(k)
                elif verb == "release":
                    if k not in held:
                        raise UsageError("script releases a lock it does not hold")
                    held.remove(k)
                elif verb == "trypair":
                    if k in held:
                        raise UsageError("script try-acquires a held lock")
                else:
                    raise UsageError(f"unknown script verb {verb!r}")
            if held:
                raise UsageError("script ends while holding locks")

    @property
    def effective_policy(self) -> WaitPolicy:
        return self.policy if self.policy is not None else default_policy(self.algorithm)

    def max_depth(self, t: int) -> int:
        """Most locks simultaneously held or try-held by thread ``t``."""
        depth = 0
        peak = 0
        for verb, _ in self.scripts[t]:
            if verb in ("acquire", "trypair"):
                depth += 1
                peak = max(peak, depth)
            if verb in ("release", "trypair"):
                depth -= 1
        return max(peak, 1)


def uniform_scripts(threads: int, locks: int, iters: int) -> tuple:
    """Every thread repeats acquire/release over all locks in order."""
    body = []
    for _ in range(iters):
        for k in range(locks):
            body.append(("acquire", k))
            body.append(("release", k))
    return tuple(tuple(body) for _ in range(threads))


def nested_leader_scripts(threads: int, locks: int, iters: int = 1) -> tuple:
    """Thread 0 holds all locks nested; each other thread contends one lock."""
    leader: list[Action] = []
    for _ in range(iters):
        leader.extend(("acquire", k) for k in range(locks))
        leader.extend(("release", k) for k in reversed(range(locks)))
    scripts = [tuple(leader)]
    for j in range(1, threads):
        k = (j - 1) % locks
        scripts.append(tuple([("acquire", k), ("release", k)] * iters))
    return tuple(scripts)


def make_config(
    algorithm: LockAlgorithm,
    threads: int = 2,
    locks: int = 1,
    iters: int = 1,
    *,
    nested_leader: bool = False,
    policy: WaitPolicy | None = None,
    mutations=(),
    record_admissions: bool = False,
) -> ModelConfig:
    if nested_leader:
        scripts = nested_leader_scripts(threads, locks, iters)
    else:
        scripts = uniform_scripts(threads, locks, iters)
    return ModelConfig(
        algorithm=algorithm,
        threads=threads,
        locks=locks,
        scripts=scripts,
        policy=policy,
        mutations=frozenset(mutations),
        record_admissions=record_admissions,
    )
