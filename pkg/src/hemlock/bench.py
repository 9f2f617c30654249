"""Native-thread contention benchmarks.

Five modes, all spawning exactly ``threads`` OS threads per run behind a
start barrier, with every timed or fixed-iteration run also verifying an
exact integrity property before its throughput is reported:

* ``max-contention`` — acquire / bump a shared counter / release with
  empty non-critical sections; the counter must end at the exact total.
* ``moderate``       — the critical section advances a shared
  deterministic generator ``cs_steps`` times and the non-critical section
  steps a thread-local generator a uniform number of steps in
  ``[0, ncs_max)``; the shared generator's final state must equal a
  sequential replay of ``cs_steps x total_ops`` steps.  The work-amount
  draw and the stepped work use two separate thread-local generators.
* ``multiwait``      — one leader sweeps all locks in ascending order and
  releases in reverse while the other threads each hammer one lock chosen
  uniformly per iteration; reported ops are the leader's completed sweeps.
* ``ring``           — no locks: mailbox cells pass a single token around
  a ring under the configured wait policy; deposits CAS from empty so a
  duplicated token is caught in the act, a lost one shows up as unequal
  handle counts.
* ``stress``         — each thread repeatedly acquires a random ascending
  subset of locks (ordered acquisition, so no deadlock), bumps one counter
  per held lock, and releases in reverse.

Instrumented runs additionally audit doorstep FIFO order and check the
waiter-census high-water marks against the worst-case multi-waiting
formulas for the configured algorithm (min(T-1, N-1) for the grant-cell
family on an N-lock workload, 1 for MCS/CLH, T-1 for ticket).
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

from .errors import IntegrityError, UsageError
from .instrumentation import fifo_audit
from .locks import LockAlgorithm, make_lock
from .policy import DEFAULT_HINT, WaitPolicy
from .prng import Splitmix64, derive_seed, replay
from .registry import EMPTY, GrantCell, ThreadRegistry

__all__ = [
    "BenchConfig",
    "RunSample",
    "BenchReport",
    "aggregate_median",
    "run_bench",
    "run_max_contention",
    "run_moderate",
    "run_multiwait",
    "run_ring",
    "run_stress",
    "CSV_HEADER",
    "CSV_COLUMNS",
]

MODES = ("max-contention", "moderate", "multiwait", "ring", "stress")

CSV_HEADER = "# hemlock-bench v1"
CSV_COLUMNS = (
    "mode,algorithm,policy,threads,run,ops,ops_per_sec,"
    "max_waiters_per_cell,max_locks_held,integrity"
)

RING_TOKEN = 2  # any nonzero even word


@dataclass
class BenchConfig:
    mode: str = "max-contention"
    algorithm: LockAlgorithm = LockAlgorithm.HEMLOCK_CTR
    policy: WaitPolicy | None = None  # None: the algorithm's default
    threads: int = 4
    duration: float = 2.0  # seconds per timed run (10 in full mode)
    runs: int = 7
    iterations: int | None = None  # fixed-iteration mode when set
    cs_steps: int = 5
    ncs_max: int = 400
    num_locks: int = 10
    max_held: int = 2  # stress: largest lock subset taken at once
    seed: int = 0x5EED_1E57
    pin: bool = False
    isolation_unit: int = 64
    instrumented: bool = True
    debug: bool = False
    hint: object = DEFAULT_HINT

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.runs < 1 or self.runs % 2 == 0:
            raise UsageError("runs must be a positive odd count")
        if self.mode == "multiwait":
            if self.num_locks < 2 or self.threads < 2:
                raise UsageError("multiwait needs >= 2 locks and >= 2 threads")
        if self.mode == "ring" and self.threads < 2:
            raise UsageError("ring needs >= 2 threads")
        if self.mode == "stress" and self.num_locks < 2:
            raise UsageError("stress needs >= 2 locks")
        if self.max_held < 1:
            raise UsageError("max_held must be >= 1")
        # degenerate timed runs execute exactly one iteration
        if self.iterations is None and self.duration <= 0:
            self.iterations = 1

    @property
    def effective_policy(self) -> WaitPolicy | None:
        return self.policy

    def workload_locks(self) -> int:
        if self.mode in ("multiwait", "stress"):
            return self.num_locks
        return 1

    def waiter_bound(self) -> int | None:
        """Worst-case simultaneous waiters on one spin word, per algorithm."""
        t = self.threads
        if self.mode == "ring":
            return 1
        if self.algorithm.is_hemlock:
            if self.mode == "stress":
                return min(t - 1, self.max_held)
            if self.mode == "multiwait":
                return min(t - 1, self.num_locks - 1)
            return min(t - 1, 1)
        if self.algorithm in (LockAlgorithm.MCS, LockAlgorithm.CLH):
            return 1
        # ticket: T-1 waiters camp on now_serving in steady state, and a
        # re-arriving releaser can transiently overlap an enabled-but-not-
        # yet-observed waiter, so the enforceable runtime ceiling is T
        return t


@dataclass
class RunSample:
    run: int
    ops: int
    elapsed: float
    ops_per_sec: float
    max_waiters_per_cell: int
    max_locks_held: int
    integrity: bool
    detail: str = ""


@dataclass
class BenchReport:
    config: BenchConfig
    samples: list[RunSample] = field(default_factory=list)
    median_ops_per_sec: float = 0.0

    @property
    def failed(self) -> bool:
        return any(not s.integrity for s in self.samples)

    def csv_rows(self) -> list[str]:
        cfg = self.config
        policy = cfg.policy.value if cfg.policy else "default"
        rows = []
        for s in self.samples:
            rows.append(
                f"{cfg.mode},{cfg.algorithm.value},{policy},{cfg.threads},"
                f"{s.run},{s.ops},{s.ops_per_sec:.1f},"
                f"{s.max_waiters_per_cell},{s.max_locks_held},"
                f"{'ok' if s.integrity else 'FAILED'}"
            )
        total_ops = sum(s.ops for s in self.samples)
        max_w = max((s.max_waiters_per_cell for s in self.samples), default=0)
        max_h = max((s.max_locks_held for s in self.samples), default=0)
        rows.append(
            f"{cfg.mode},{cfg.algorithm.value},{policy},{cfg.threads},"
            f"median,{total_ops},{self.median_ops_per_sec:.1f},"
            f"{max_w},{max_h},{'ok' if not self.failed else 'FAILED'}"
        )
        return rows

    def csv_text(self) -> str:
        return "\n".join([CSV_HEADER, CSV_COLUMNS, *self.csv_rows()])


def aggregate_median(samples) -> float:
    """Middle order statistic of an odd-length sample list."""
    values = sorted(samples)
    if not values:
        raise UsageError("median of an empty sample set")
    if len(values) % 2 == 0:
        raise UsageError("median requires an odd sample count")
    return values[len(values) // 2]


class _Counter:
    """Deliberately non-atomic shared counter; exclusion makes it exact."""

    __slots__ = ("value",)

    def __init__(self) -> None:
        self.value = 0


def _pin_self(cfg: BenchConfig, index: int) -> None:
    if not cfg.pin:
        return
    cpus = sorted(os.sched_getaffinity(0))
    os.sched_setaffinity(0, {cpus[index % len(cpus)]})


def _orchestrate(cfg: BenchConfig, run_index: int, setup):
    """Spawn workers, run one sample, gather instrumentation after join.

    ``setup(registry, stop)`` returns ``(bodies, finalize, report_ops)``
    where each body is ``body(i, ctx) -> ops``, ``finalize(ops_list)``
    returns ``(integrity_ok, detail)``, and ``report_ops(ops_list)`` picks
    the figure a run reports (total ops, leader sweeps, circulations).
    """
    registry = ThreadRegistry(
        isolation_unit=cfg.isolation_unit,
        instrumented=cfg.instrumented,
        debug=cfg.debug,
    )
    stop = [False]
    bodies, finalize, report_ops = setup(registry, stop)
    n = len(bodies)
    barrier = threading.Barrier(n + 1)
    ops = [0] * n
    panics: list[BaseException] = []

    def runner(i: int) -> None:
        try:
            _pin_self(cfg, i)
            ctx = registry.register_thread()
            barrier.wait()
            ops[i] = bodies[i](i, ctx)
            registry.deregister_thread(ctx, hint=cfg.hint)
        except BaseException as exc:  # a panicking thread invalidates the run
            panics.append(exc)
            stop[0] = True

    threads = [
        threading.Thread(target=runner, args=(i,), name=f"bench-{run_index}-{i}")
        for i in range(n)
    ]
    for th in threads:
        th.start()
    barrier.wait()
    t0 = time.monotonic()
    if cfg.iterations is None:
        time.sleep(cfg.duration)
        stop[0] = True
    for th in threads:
        th.join()
    elapsed = max(time.monotonic() - t0, 1e-9)

    total = report_ops(ops)
    ok, detail = True, ""
    if panics:
        ok, detail = False, f"worker panic: {panics[0]!r}"
    else:
        ok, detail = finalize(ops)
        if ok and cfg.instrumented:
            ok, detail = _instrumentation_checks(cfg, registry)

    max_waiters = 0
    if registry.instruments is not None:
        max_waiters = registry.instruments.census.max_waiters_per_cell
    max_held = registry.retired_max_locks_held
    for ctx in registry.contexts():
        max_held = max(max_held, ctx.held_high_water)

    return RunSample(
        run=run_index,
        ops=total,
        elapsed=elapsed,
        ops_per_sec=total / elapsed,
        max_waiters_per_cell=max_waiters,
        max_locks_held=max_held,
        integrity=ok,
        detail=detail,
    )


def _instrumentation_checks(cfg: BenchConfig, registry: ThreadRegistry):
    ins = registry.instruments
    if cfg.mode != "ring":
        inversions = fifo_audit(ins.doorstep.merged())
        if inversions:
            return False, f"fifo: {len(inversions)} doorstep/entry inversions"
    bound = cfg.waiter_bound()
    observed = ins.census.max_waiters_per_cell
    if bound is not None and observed > bound:
        return False, f"census: {observed} waiters on one cell exceeds bound {bound}"
    live = sum(
        ctx.grant.gauge.current
        for ctx in registry.contexts()
        if ctx.grant.gauge is not None
    )
    if live != 0:
        return False, f"census: {live} waiter gauge entries leaked"
    return True, ""


# ---------------------------------------------------------------------------
# mode bodies


def _lock_loop_body(cfg, lock, stop, critical):
    """Generic acquire/critical/release loop; returns completed ops."""
    policy = cfg.policy
    hint = cfg.hint
    fixed = cfg.iterations

    def body(i: int, ctx) -> int:
        acquire, release = lock.acquire, lock.release
        done = 0
        if fixed is not None:
            for _ in range(fixed):
                acquire(ctx, policy, hint)
                critical(i)
                release(ctx, policy, hint)
                done += 1
        else:
            while not stop[0]:
                acquire(ctx, policy, hint)
                critical(i)
                release(ctx, policy, hint)
                done += 1
        return done

    return body


def _setup_max_contention(cfg: BenchConfig, run_index: int):
    def setup(registry, stop):
        lock = make_lock(
            cfg.algorithm, instruments=registry.instruments, static_lifetime=True
        )
        counter = _Counter()

        def critical(_i):
            counter.value += 1

        body = _lock_loop_body(cfg, lock, stop, critical)
        bodies = [body] * cfg.threads

        def finalize(ops):
            total = sum(ops)
            if counter.value != total:
                return False, f"counter {counter.value} != ops {total}"
            if cfg.iterations is not None and total != cfg.threads * cfg.iterations:
                return False, "fixed-iteration count mismatch"
            return True, ""

        return bodies, finalize, sum

    return setup


def _setup_moderate(cfg: BenchConfig, run_index: int):
    def setup(registry, stop):
        lock = make_lock(
            cfg.algorithm, instruments=registry.instruments, static_lifetime=True
        )
        shared_seed = derive_seed(cfg.seed, run_index, 0xC5)
        shared = Splitmix64(shared_seed)
        policy, hint = cfg.policy, cfg.hint
        fixed = cfg.iterations
        cs_steps, ncs_max = cfg.cs_steps, cfg.ncs_max

        def body(i: int, ctx) -> int:
            # separate thread-local generators: one draws the work amount,
            # the other is the stepped non-critical work itself
            draw = Splitmix64(derive_seed(cfg.seed, run_index, i + 1, 1))
            work = Splitmix64(derive_seed(cfg.seed, run_index, i + 1, 2))
            acquire, release = lock.acquire, lock.release
            step_shared = shared.next
            done = 0
            while True:
                if fixed is not None:
                    if done >= fixed:
                        break
                elif stop[0]:
                    break
                acquire(ctx, policy, hint)
                for _ in range(cs_steps):
                    step_shared()
                release(ctx, policy, hint)
                for _ in range(draw.below(ncs_max)):
                    work.next()
                done += 1
            return done

        bodies = [body] * cfg.threads

        def finalize(ops):
            total = sum(ops)
            expect = replay(shared_seed, cfg.cs_steps * total)
            if shared.state != expect:
                return False, "shared generator state diverged from replay"
            return True, ""

        return bodies, finalize, sum

    return setup


def _setup_multiwait(cfg: BenchConfig, run_index: int):
    def setup(registry, stop):
        locks = [
            make_lock(cfg.algorithm, instruments=registry.instruments, static_lifetime=True)
            for _ in range(cfg.num_locks)
        ]
        counters = [_Counter() for _ in range(cfg.num_locks)]
        policy, hint = cfg.policy, cfg.hint
        fixed = cfg.iterations
        n_locks = cfg.num_locks

        def leader(i: int, ctx) -> int:
            sweeps = 0
            while True:
                if fixed is not None:
                    if sweeps >= fixed:
                        break
                elif stop[0]:
                    break
                for k in range(n_locks):
                    locks[k].acquire(ctx, policy, hint)
                    counters[k].value += 1
                for k in reversed(range(n_locks)):
                    locks[k].release(ctx, policy, hint)
                sweeps += 1
            if fixed is not None:
                stop[0] = True  # release the contending threads
            return sweeps

        def contender(i: int, ctx) -> int:
            rng = Splitmix64(derive_seed(cfg.seed, run_index, i + 1, 3))
            done = 0
            while not stop[0]:
                k = rng.below(n_locks)
                locks[k].acquire(ctx, policy, hint)
                counters[k].value += 1
                locks[k].release(ctx, policy, hint)
                done += 1
            return done

        bodies = [leader] + [contender] * (cfg.threads - 1)

        def finalize(ops):
            # ops[0] is the reported figure (leader sweeps); the counter sum
            # must cover every acquisition by anyone
            total_acquisitions = ops[0] * n_locks + sum(ops[1:])
            counted = sum(c.value for c in counters)
            if counted != total_acquisitions:
                return False, f"lock counters {counted} != acquisitions {total_acquisitions}"
            return True, ""

        def report_ops(ops):
            return ops[0]  # the leader's completed sweeps; contenders ignored

        return bodies, finalize, report_ops

    return setup


def _ring_consume(cell, policy, hint, stop) -> bool:
    """Policy-shaped wait for the token; False when stopped first."""
    word = cell.word
    gauge = cell.gauge
    counted = False
    try:
        if policy is WaitPolicy.CTR_CAS:
            if word.compare_exchange(RING_TOKEN, EMPTY) == RING_TOKEN:
                return True
            if gauge is not None:
                gauge.inc()
                counted = True
            while True:
                if stop is not None and stop[0]:
                    return False
                hint()
                if counted:
                    if word.compare_exchange_act(RING_TOKEN, EMPTY, gauge.dec) == RING_TOKEN:
                        counted = False
                        return True
                elif word.compare_exchange(RING_TOKEN, EMPTY) == RING_TOKEN:
                    return True
        reader = word.load if policy is WaitPolicy.NAIVE_LOAD else lambda: word.fetch_add(0)
        if reader() == RING_TOKEN:
            word.store(EMPTY)
            return True
        if gauge is not None:
            gauge.inc()
            counted = True
        while True:
            if stop is not None and stop[0]:
                return False
            hint()
            if reader() == RING_TOKEN:
                if counted:
                    word.store_act(EMPTY, gauge.dec)
                    counted = False
                else:
                    word.store(EMPTY)
                return True
    finally:
        if counted:
            gauge.dec()


def _setup_ring(cfg: BenchConfig, run_index: int):
    def setup(registry, stop):
        census = registry.instruments.census if registry.instruments else None
        cells = [
            GrantCell(cfg.isolation_unit, census.new_cell_gauge() if census else None)
            for _ in range(cfg.threads)
        ]
        cells[0].word.store(RING_TOKEN)
        policy = cfg.policy or WaitPolicy.CTR_CAS
        hint = cfg.hint
        fixed = cfg.iterations
        n = cfg.threads

        def body(i: int, ctx) -> int:
            mine = cells[i]
            nxt = cells[(i + 1) % n].word
            handled = 0
            while True:
                if fixed is not None:
                    if handled >= fixed:
                        break
                elif stop[0]:
                    break
                if not _ring_consume(mine, policy, hint, None if fixed is not None else stop):
                    break
                if nxt.compare_exchange(EMPTY, RING_TOKEN) != EMPTY:
                    raise IntegrityError("token duplicated: successor mailbox occupied")
                handled += 1
            return handled

        bodies = [body] * n

        def finalize(ops):
            tokens = [c.word.load() for c in cells]
            in_flight = sum(1 for v in tokens if v == RING_TOKEN)
            if in_flight != 1:
                return False, f"{in_flight} tokens in flight after run"
            if any(v not in (EMPTY, RING_TOKEN) for v in tokens):
                return False, "mailbox corrupted"
            if fixed is not None:
                if any(h != fixed for h in ops):
                    return False, f"unequal handle counts {ops}"
                if tokens[0] != RING_TOKEN:
                    return False, "token did not return to the seed mailbox"
            elif max(ops) - min(ops) > 1:
                return False, f"handle counts diverge by more than one hop: {ops}"
            return True, ""

        def report_ops(ops):
            return min(ops)  # completed circulations of the full ring

        return bodies, finalize, report_ops

    return setup


def _setup_stress(cfg: BenchConfig, run_index: int):
    def setup(registry, stop):
        locks = [
            make_lock(cfg.algorithm, instruments=registry.instruments, static_lifetime=True)
            for _ in range(cfg.num_locks)
        ]
        counters = [_Counter() for _ in range(cfg.num_locks)]
        policy, hint = cfg.policy, cfg.hint
        fixed = cfg.iterations
        n_locks, max_held = cfg.num_locks, cfg.max_held

        def body(i: int, ctx) -> int:
            rng = Splitmix64(derive_seed(cfg.seed, run_index, i + 1, 4))
            done = 0
            while True:
                if fixed is not None:
                    if done >= fixed:
                        break
                elif stop[0]:
                    break
                size = 1 + rng.below(max_held)
                chosen: set[int] = set()
                while len(chosen) < size:
                    chosen.add(rng.below(n_locks))
                subset = sorted(chosen)
                for k in subset:
                    locks[k].acquire(ctx, policy, hint)
                    counters[k].value += 1
                for k in reversed(subset):
                    locks[k].release(ctx, policy, hint)
                done += len(subset)
            return done

        bodies = [body] * cfg.threads

        def finalize(ops):
            counted = sum(c.value for c in counters)
            if counted != sum(ops):
                return False, f"lock counters {counted} != acquisitions {sum(ops)}"
            return True, ""

        return bodies, finalize, sum

    return setup


_SETUPS = {
    "max-contention": _setup_max_contention,
    "moderate": _setup_moderate,
    "multiwait": _setup_multiwait,
    "ring": _setup_ring,
    "stress": _setup_stress,
}


def run_bench(cfg: BenchConfig) -> BenchReport:
    """Run ``cfg.runs`` samples and aggregate the median throughput."""
    report = BenchReport(config=cfg)
    for run_index in range(cfg.runs):
        setup = _SETUPS[cfg.mode](cfg, run_index)
        report.samples.append(_orchestrate(cfg, run_index, setup))
    report.median_ops_per_sec = aggregate_median(
        [s.ops_per_sec for s in report.samples]
    )
    return report


def _mode_runner(mode: str):
    def runner(cfg: BenchConfig) -> BenchReport:
        if cfg.mode != mode:
            raise UsageError(f"config mode {cfg.mode!r} does not match {mode!r}")
        return run_bench(cfg)

    return runner


run_max_contention = _mode_runner("max-contention")
run_moderate = _mode_runner("moderate")
run_multiwait = _mode_runner("multiwait")
run_ring = _mode_runner("ring")
run_stress = _mode_runner("stress")
