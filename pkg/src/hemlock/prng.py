"""Deterministic 64-bit generator used by the benchmark harness.

The step function is splitmix64:

    state' = (state + 0x9E3779B97F4A7C15) mod 2**64
    output = mix(state')   with the usual xor-shift-multiply finalizer

Benchmarks that "advance a shared generator N steps" apply the step
function N times; the replay oracle in the tests applies the identical
function sequentially, which is what makes the final state a mutual
exclusion witness: every lost update shortens the step count.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def splitmix64_step(state: int) -> tuple[int, int]:
    """One step: returns ``(next_state, output)``."""
    state = (state + GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def replay(seed: int, steps: int) -> int:
    """Sequentially apply the step function ``steps`` times; final state."""
    state = seed & MASK64
    for _ in range(steps):
        state, _ = splitmix64_step(state)
    return state


class Splitmix64:
    """Mutable wrapper around the step function."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next(self) -> int:
        self.state, out = splitmix64_step(self.state)
        return out

    def below(self, bound: int) -> int:
        """Uniform-ish draw in [0, bound); bound 0 returns 0."""
        if bound <= 0:
            return 0
        return self.next() % bound


def derive_seed(seed: int, *salts: int) -> int:
    """Stable per-run / per-thread seed derivation."""
    state = seed & MASK64
    for salt in salts:
        state, out = splitmix64_step(state ^ (salt & MASK64))
        state ^= out
    return state & MASK64
