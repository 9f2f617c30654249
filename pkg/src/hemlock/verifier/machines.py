"""Step-machine encodings of the lock algorithms.

Each machine turns a configuration into a deterministic-per-thread
transition system: given a state and a thread index, ``step`` returns the
unique successor (each atomic shared-memory operation is exactly one step,
with adjacent thread-private work folded in) or ``None`` when the thread's
next operation is a spin whose condition does not hold.  Spin loops are
therefore guarded transitions: a waiting thread contributes no steps until
its condition is satisfied, which encodes the fairness assumption that no
thread stalls forever inside entry or exit code.

Values are small integers and tuples: thread identities are ``t + 1``
(0 is empty), grant-cell contents are ``0`` or ``(lock, flag)`` with the
OHO-1 successor-exists bit kept as an explicit flag component, and queue
nodes are indices into a node table.

Steps report protocol events (doorstep, enter, ownership transfer, exit
complete) that the explorer folds into its admission bookkeeping, plus
``waiting_map`` which exposes the admission-path spinners for the
multi-waiting bounds.  The memory model is sequential consistency.

Note on policies: under atomic-step semantics a fetch-add of zero is
indistinguishable from a plain load, so ``NAIVE_LOAD`` and ``CTR_FAA0``
share the observe-then-clear shape while ``CTR_CAS`` consumes the grant in
a single step; the coherence-traffic difference between them has no
model-level counterpart.
"""

from __future__ import annotations

from ..errors import UsageError
from ..locks import LockAlgorithm
from ..policy import WaitPolicy
from .model import ModelConfig

__all__ = ["build_machine"]


def _set(tup: tuple, i: int, value) -> tuple:
    return tup[:i] + (value,) + tup[i + 1 :]


class _MachineBase:
    def __init__(self, config: ModelConfig) -> None:
        self.config = config
        self.n = config.threads
        self.m = config.locks
        self.scripts = config.scripts

    def finished(self, core, t: int) -> bool:
        return core[0][t][0] >= len(self.scripts[t])

    def all_finished(self, core) -> bool:
        return all(self.finished(core, t) for t in range(self.n))

    def _advance(self, threads, t):
        """Move thread ``t`` to the start of its next script action."""
        ai = threads[t][0] + 1
        script = self.scripts[t]
        if ai >= len(script):
            return _set(threads, t, (ai, "", ()))
        return _set(threads, t, (ai, self._begin(script[ai]), ()))

    def audit(self, core, book) -> list:
        return []


class HemlockMachine(_MachineBase):
    """All six Hemlock variants, selected by the algorithm's variant tag."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__(config)
        self.variant = config.algorithm.hemlock_variant
        if self.variant is None:
            raise UsageError("not a hemlock algorithm")
        self.policy = config.effective_policy
        self.drop_clear = "drop-clear-store" in config.mutations
        self.drop_cas_guard = "drop-cas-guard" in config.mutations
        self._wait_pc = "a.take" if self.policy is WaitPolicy.CTR_CAS else "a.obs"

    def _begin(self, action) -> str:
        verb, _ = action
        if verb == "acquire":
            return "a.drain" if self.variant == "overlap" else "a.swap"
        if verb == "trypair":
            return "t.cas"
        return self._release_begin()

    def _release_begin(self) -> str:
        return {
            "plain": "r.cas",
            "overlap": "r.cas",
            "ah": "r.pub_early",
            "oho1": "r.flag",
            "oho2": "r.load",
        }[self.variant]

    def initial_core(self):
        threads = tuple(
            (0, self._begin(script[0]), ()) if script else (0, "", ())
            for script in self.scripts
        )
        return (threads, (0,) * self.m, (0,) * self.n)

    def step(self, core, t: int):
        threads, tails, cells = core
        ai, pc, regs = threads[t]
        script = self.scripts[t]
        if ai >= len(script):
            return None
        _, k = script[ai]
        me = t + 1
        ident = (k, 0)

        # ---- entry ----
        if pc == "a.drain":
            if cells[t] == ident:
                return None  # residual publish of this lock still pending
            return ((_set(threads, t, (ai, "a.swap", ())), tails, cells), ())

        if pc == "a.swap":
            pred = tails[k]
            tails2 = _set(tails, k, me)
            events = [("doorstep", t, k)]
            if pred == me:
                events.append(("swap_self", t, k))
            if pred == 0:
                events.append(("enter", t, k))
                return ((self._advance(threads, t), tails2, cells), tuple(events))
            nxt = "a.ann" if self.variant == "oho1" else self._wait_pc
            threads2 = _set(threads, t, (ai, nxt, (pred - 1,)))
            return ((threads2, tails2, cells), tuple(events))

        if pc == "a.ann":
            # single best-effort CAS flagging a successor in the predecessor
            pred = regs[0]
            cells2 = _set(cells, pred, (k, 1)) if cells[pred] == 0 else cells
            threads2 = _set(threads, t, (ai, self._wait_pc, regs))
            return ((threads2, tails, cells2), ())

        if pc == "a.take":  # CTR_CAS: observe and acknowledge in one RMW
            pred = regs[0]
            if cells[pred] != ident:
                return None
            cells2 = cells if self.drop_clear else _set(cells, pred, 0)
            return ((self._advance(threads, t), tails, cells2), (("enter", t, k),))

        if pc == "a.obs":  # plain load (or FAA of 0) observing the handover
            pred = regs[0]
            if cells[pred] != ident:
                return None
            if self.drop_clear:
                return ((self._advance(threads, t), tails, cells), (("enter", t, k),))
            threads2 = _set(threads, t, (ai, "a.clr", regs))
            return ((threads2, tails, cells), ())

        if pc == "a.clr":
            pred = regs[0]
            cells2 = _set(cells, pred, 0)
            return ((self._advance(threads, t), tails, cells2), (("enter", t, k),))

        # ---- trylock ----
        if pc == "t.cas":
            if tails[k] == 0:
                tails2 = _set(tails, k, me)
                threads2 = _set(threads, t, (ai, self._release_begin(), ()))
                events = (("doorstep", t, k), ("enter", t, k))
                return ((threads2, tails2, cells), events)
            return ((self._advance(threads, t), tails, cells), (("tryfail", t, k),))

        # ---- exit ----
        if pc == "r.cas":
            if self.drop_cas_guard:
                tails2 = _set(tails, k, 0)
                events = (("transfer", t, k), ("done", t, k))
                return ((self._advance(threads, t), tails2, cells), events)
            if tails[k] == me:
                tails2 = _set(tails, k, 0)
                events = (("transfer", t, k), ("done", t, k))
                return ((self._advance(threads, t), tails2, cells), events)
            nxt = "r.wait_vacant" if self.variant == "overlap" else "r.pub"
            return ((_set(threads, t, (ai, nxt, ())), tails, cells), ())

        if pc == "r.pub":
            cells2 = _set(cells, t, ident)
            threads2 = _set(threads, t, (ai, "r.ack", ()))
            return ((threads2, tails, cells2), (("transfer", t, k),))

        if pc == "r.ack":
            # exit on departure of the published identity, not on empty: an
            # OHO-1 announce for another lock may land right after the ack
            if cells[t] == ident:
                return None
            return ((self._advance(threads, t), tails, cells), (("done", t, k),))

        if pc == "r.wait_vacant":  # overlap: drain own cell, then publish
            if cells[t] != 0:
                return None
            threads2 = _set(threads, t, (ai, "r.pub_late", ()))
            return ((threads2, tails, cells), ())

        if pc == "r.pub_late":  # overlap publish; acknowledgment wait deferred
            cells2 = _set(cells, t, ident)
            events = (("transfer", t, k), ("done", t, k))
            return ((self._advance(threads, t), tails, cells2), events)

        if pc == "r.pub_early":  # ah: hand over before touching the tail
            cells2 = _set(cells, t, ident)
            threads2 = _set(threads, t, (ai, "r.cas_ah", ()))
            return ((threads2, tails, cells2), (("transfer", t, k),))

        if pc == "r.cas_ah":
            if self.drop_cas_guard or tails[k] == me:
                tails2 = _set(tails, k, 0)
                threads2 = _set(threads, t, (ai, "r.reset", ()))
                return ((threads2, tails2, cells), ())
            return ((_set(threads, t, (ai, "r.ack", ())), tails, cells), ())

        if pc == "r.reset":  # ah uncontended epilogue: take the cell back
            cells2 = _set(cells, t, 0)
            return ((self._advance(threads, t), tails, cells2), (("done", t, k),))

        if pc == "r.flag":  # oho1: check own cell for the successor flag
            nxt = "r.pubflag" if cells[t] == (k, 1) else "r.cas"
            return ((_set(threads, t, (ai, nxt, ())), tails, cells), ())

        if pc == "r.pubflag":  # oho1: overwrite flag with the plain identity
            cells2 = _set(cells, t, ident)
            threads2 = _set(threads, t, (ai, "r.ack", ()))
            return ((threads2, tails, cells2), (("transfer", t, k),))

        if pc == "r.load":  # oho2: polite read of the tail before the CAS
            nxt = "r.cas2" if tails[k] == me else "r.pub"
            return ((_set(threads, t, (ai, nxt, ())), tails, cells), ())

        if pc == "r.cas2":
            if self.drop_cas_guard or tails[k] == me:
                tails2 = _set(tails, k, 0)
                events = (("transfer", t, k), ("done", t, k))
                return ((self._advance(threads, t), tails2, cells), events)
            return ((_set(threads, t, (ai, "r.pub", ())), tails, cells), ())

        raise AssertionError(f"unknown pc {pc!r}")

    def waiting_map(self, core):
        threads, tails, cells = core
        waiting = {}
        for t in range(self.n):
            ai, pc, regs = threads[t]
            if pc in ("a.take", "a.obs"):
                _, k = self.scripts[t][ai]
                if cells[regs[0]] != (k, 0):
                    waiting.setdefault(("g", regs[0]), []).append((t, (k, 0)))
        return waiting

    def audit(self, core, book):
        threads, tails, cells = core
        owners, queues = book[0], book[1]
        problems = []
        for k in range(self.m):
            if tails[k] == 0 and (owners[k] != 0 or queues[k]):
                problems.append(
                    ("tail-null", f"lock {k} tail empty but owner/queue present")
                )
        return problems


class McsMachine(_MachineBase):
    """Classic MCS; nodes come from per-thread free stacks and recycle."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__(config)
        self.depths = [config.max_depth(t) for t in range(self.n)]
        base = 1
        self.pools = []
        for t in range(self.n):
            self.pools.append(tuple(range(base, base + self.depths[t])))
            base += self.depths[t]
        self.node_count = base - 1

    def _begin(self, action) -> str:
        verb, _ = action
        if verb == "acquire":
            return "a.swap"
        if verb == "trypair":
            return "t.cas"
        return "u.read"

    def initial_core(self):
        threads = tuple(
            (0, self._begin(script[0]), ()) if script else (0, "", ())
            for script in self.scripts
        )
        locks = ((0, 0),) * self.m
        nodes = ((0, 0),) * self.node_count
        free = tuple(self.pools[t] for t in range(self.n))
        return (threads, locks, nodes, free)

    def step(self, core, t: int):
        threads, locks, nodes, free = core
        ai, pc, regs = threads[t]
        script = self.scripts[t]
        if ai >= len(script):
            return None
        _, k = script[ai]
        tail, head = locks[k]

        if pc in ("a.swap", "t.cas"):
            mine = free[t][-1]
            nodes2 = _set(nodes, mine - 1, (0, 1))
            free2 = _set(free, t, free[t][:-1])
            if pc == "t.cas":
                if tail != 0:
                    # failed trylock allocates and frees locally, no queueing
                    return ((self._advance(threads, t), locks, nodes, free), (("tryfail", t, k),))
                locks2 = _set(locks, k, (mine, mine))
                threads2 = _set(threads, t, (ai, "u.read", ()))
                events = (("doorstep", t, k), ("enter", t, k))
                return ((threads2, locks2, nodes2, free2), events)
            events = [("doorstep", t, k)]
            if tail == 0:
                locks2 = _set(locks, k, (mine, mine))
                events.append(("enter", t, k))
                return ((self._advance(threads, t), locks2, nodes2, free2), tuple(events))
            locks2 = _set(locks, k, (mine, head))
            threads2 = _set(threads, t, (ai, "a.link", (mine, tail)))
            return ((threads2, locks2, nodes2, free2), tuple(events))

        if pc == "a.link":
            mine, pred = regs
            pnext, plocked = nodes[pred - 1]
            nodes2 = _set(nodes, pred - 1, (mine, plocked))
            threads2 = _set(threads, t, (ai, "a.spin", (mine,)))
            return ((threads2, locks, nodes2, free), ())

        if pc == "a.spin":
            mine = regs[0]
            if nodes[mine - 1][1]:
                return None
            locks2 = _set(locks, k, (tail, mine))
            return ((self._advance(threads, t), locks2, nodes, free), (("enter", t, k),))

        if pc == "u.read":
            mine = head  # context-free: the lock body names the owner's node
            succ = nodes[mine - 1][0]
            if succ:
                threads2 = _set(threads, t, (ai, "u.wake", (mine, succ)))
            else:
                threads2 = _set(threads, t, (ai, "u.cas", (mine,)))
            return ((threads2, locks, nodes, free), ())

        if pc == "u.cas":
            mine = regs[0]
            if tail == mine:
                locks2 = _set(locks, k, (0, head))
                free2 = _set(free, t, free[t] + (mine,))
                events = (("transfer", t, k), ("done", t, k))
                return ((self._advance(threads, t), locks2, nodes, free2), events)
            threads2 = _set(threads, t, (ai, "u.next", regs))
            return ((threads2, locks, nodes, free), ())

        if pc == "u.next":  # successor swapped in but has not linked yet
            mine = regs[0]
            succ = nodes[mine - 1][0]
            if succ == 0:
                return None
            threads2 = _set(threads, t, (ai, "u.wake", (mine, succ)))
            return ((threads2, locks, nodes, free), ())

        if pc == "u.wake":
            mine, succ = regs
            snext, _ = nodes[succ - 1]
            nodes2 = _set(nodes, succ - 1, (snext, 0))
            free2 = _set(free, t, free[t] + (mine,))
            events = (("transfer", t, k), ("done", t, k))
            return ((self._advance(threads, t), locks, nodes2, free2), events)

        raise AssertionError(f"unknown pc {pc!r}")

    def waiting_map(self, core):
        threads, locks, nodes, free = core
        waiting = {}
        for t in range(self.n):
            ai, pc, regs = threads[t]
            if pc == "a.spin" and nodes[regs[0] - 1][1]:
                waiting.setdefault(("mn", regs[0]), []).append((t, 0))
        return waiting

    def audit(self, core, book):
        threads, locks, nodes, free = core
        assoc = book[2]
        problems = []
        for t in range(self.n):
            live = self.depths[t] - len(free[t])
            if live != len(assoc[t]):
                problems.append(
                    ("node-economy", f"thread {t} has {live} live nodes, {len(assoc[t])} associated locks")
                )
        return problems


class ClhMachine(_MachineBase):
    """CLH with a head word; elements migrate between threads and locks."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__(config)
        # nodes 1..m are the per-lock dummies, m+1..m+n the thread elements
        self.node_count = self.m + self.n

    def _begin(self, action) -> str:
        verb, _ = action
        if verb == "trypair":
            raise UsageError("clh does not support trylock")
        return "c.swap" if verb == "acquire" else "d.store"

    def initial_core(self):
        threads = tuple(
            (0, self._begin(script[0]), ()) if script else (0, "", ())
            for script in self.scripts
        )
        locks = tuple((k + 1, 0) for k in range(self.m))
        flags = (0,) * self.node_count
        mynode = tuple(self.m + 1 + t for t in range(self.n))
        return (threads, locks, flags, mynode)

    def step(self, core, t: int):
        threads, locks, flags, mynode = core
        ai, pc, regs = threads[t]
        script = self.scripts[t]
        if ai >= len(script):
            return None
        _, k = script[ai]
        tail, head = locks[k]

        if pc == "c.swap":
            mine = mynode[t]
            flags2 = _set(flags, mine - 1, 1)
            locks2 = _set(locks, k, (mine, head))
            threads2 = _set(threads, t, (ai, "c.spin", (mine, tail)))
            return ((threads2, locks2, flags2, mynode), (("doorstep", t, k),))

        if pc == "c.spin":
            mine, pred = regs
            if flags[pred - 1]:
                return None
            locks2 = _set(locks, k, (locks[k][0], mine))
            mynode2 = _set(mynode, t, pred)  # adopt the predecessor's element
            return ((self._advance(threads, t), locks2, flags, mynode2), (("enter", t, k),))

        if pc == "d.store":
            flags2 = _set(flags, head - 1, 0)
            events = (("transfer", t, k), ("done", t, k))
            return ((self._advance(threads, t), locks, flags2, mynode), events)

        raise AssertionError(f"unknown pc {pc!r}")

    def waiting_map(self, core):
        threads, locks, flags, mynode = core
        waiting = {}
        for t in range(self.n):
            ai, pc, regs = threads[t]
            if pc == "c.spin" and flags[regs[1] - 1]:
                waiting.setdefault(("cn", regs[1]), []).append((t, 0))
        return waiting


class TicketMachine(_MachineBase):
    """Two counters; the doorstep is the ticket fetch."""

    def _begin(self, action) -> str:
        verb, _ = action
        if verb == "trypair":
            raise UsageError("ticket does not support trylock")
        return "k.faa" if verb == "acquire" else "l.store"

    def initial_core(self):
        threads = tuple(
            (0, self._begin(script[0]), ()) if script else (0, "", ())
            for script in self.scripts
        )
        return (threads, ((0, 0),) * self.m)

    def step(self, core, t: int):
        threads, locks = core
        ai, pc, regs = threads[t]
        script = self.scripts[t]
        if ai >= len(script):
            return None
        _, k = script[ai]
        nxt, srv = locks[k]

        if pc == "k.faa":
            locks2 = _set(locks, k, (nxt + 1, srv))
            threads2 = _set(threads, t, (ai, "k.spin", (nxt,)))
            return ((threads2, locks2), (("doorstep", t, k),))

        if pc == "k.spin":
            if srv != regs[0]:
                return None
            return ((self._advance(threads, t), locks), (("enter", t, k),))

        if pc == "l.store":
            locks2 = _set(locks, k, (nxt, srv + 1))
            events = (("transfer", t, k), ("done", t, k))
            return ((self._advance(threads, t), locks2), events)

        raise AssertionError(f"unknown pc {pc!r}")

    def waiting_map(self, core):
        threads, locks = core
        waiting = {}
        for t in range(self.n):
            ai, pc, regs = threads[t]
            if pc == "k.spin":
                k = self.scripts[t][ai][1]
                if locks[k][1] != regs[0]:
                    waiting.setdefault(("tk", k), []).append((t, regs[0]))
        return waiting


def build_machine(config: ModelConfig):
    algorithm = config.algorithm
    if algorithm.is_hemlock:
        return HemlockMachine(config)
    if algorithm is LockAlgorithm.MCS:
        return McsMachine(config)
    if algorithm is LockAlgorithm.CLH:
        return ClhMachine(config)
    if algorithm is LockAlgorithm.TICKET:
        return TicketMachine(config)
    raise UsageError(f"unsupported algorithm {algorithm!r}")
