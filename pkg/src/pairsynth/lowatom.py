"""Low-atomicity execution over single-cell read/write memory plus neighbor locks.

Each process runs as an agent that polls its guards with single-cell
reads, then executes the chosen move while holding locks on its own
propositions and on the shared-variable groups of the pairs it touches.
All writes of one move happen under those locks and form its
linearization point.  Agents are generators that yield at every
single-cell operation, so the same code runs under a seeded stepper or
on free-running threads.

Readers never take locks.  Every process and every pair carries a version
cell; a writer makes it odd before writing and even after, and a reader
accepts a collect only if it saw the same even version before and after.
"""

from __future__ import annotations

import itertools
import random
import threading
import time
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import networkx as nx

from .dynamic import (
    Configuration,
    CreateEvent,
    CreationRule,
    DynamicSpec,
    Trace,
    Step,
    apply_create,
    choose_join_states,
    initial_configurations,
    process_moves,
)
from .errors import (
    DeadlockReached,
    InconsistentJoinState,
    InputError,
    Interrupted,
    NoCompatibleState,
    RuleForbids,
    SpecViolated,
)
from .mc import CREATE, check_tstab
from .skeleton import GuardedCommand, LocalState, Pid, Valuation, apply_body, eval_guard
from .structure import JState, PairProgram, build_pair_structure, pair

TICK = "tick"  # a single-cell operation happened
WAIT = "wait"  # spinning: nothing useful can happen until someone else moves

REGISTRY = ("0reg",)


def pkey(p: Iterable[Pid]) -> tuple:
    return tuple(sorted(p))


def ap_group(i: Pid) -> tuple:
    return ("ap", i)


def pair_group(p: Iterable[Pid]) -> tuple:
    return ("pair",) + pkey(p)


class SharedStore:
    """Cells addressed by tuples; each read or write touches exactly one cell."""

    def __init__(self):
        self.cells: dict[tuple, Any] = {}
        self.reads = 0
        self.writes = 0

    def read(self, key: tuple):
        self.reads += 1
        return self.cells[key]

    def write(self, key: tuple, value) -> None:
        self.writes += 1
        self.cells[key] = value


class LockManager:
    """Try-locks over resource groups, acquired in one global order.

    Acquiring in sorted order rules out waits-for cycles; ``waits_for_graph``
    exposes the current waits so tests can confirm it stays acyclic.
    """

    def __init__(self):
        self._mutex = threading.Lock()
        self.holder: dict[tuple, Any] = {}
        self.waiting: dict[Any, tuple] = {}
        self.order_violations = 0

    def try_acquire(self, group: tuple, owner) -> bool:
        with self._mutex:
            if self.holder.get(group) is None:
                held = [g for g, o in self.holder.items() if o == owner]
                if any(g > group for g in held):
                    self.order_violations += 1
                self.holder[group] = owner
                self.waiting.pop(owner, None)
                return True
            self.waiting[owner] = group
            return False

    def release(self, group: tuple, owner) -> None:
        with self._mutex:
            if self.holder.get(group) != owner:
                raise InputError(f"{owner} does not hold {group}")
            del self.holder[group]

    def acquire_all(self, groups: Iterable[tuple], owner):
        """Generator acquiring every group in global order, spinning on contention."""
        for g in sorted(set(groups)):
            while not self.try_acquire(g, owner):
                yield WAIT
            yield TICK

    def release_all(self, groups: Iterable[tuple], owner) -> None:
        for g in sorted(set(groups), reverse=True):
            self.release(g, owner)

    def any_held(self) -> bool:
        return bool(self.holder)

    def waits_for_graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        with self._mutex:
            for owner, grp in self.waiting.items():
                h = self.holder.get(grp)
                if h is not None and h != owner:
                    g.add_edge(owner, h)
        return g


@dataclass
class PollState:
    """X[a]: neighbors still to be satisfied; choice[a]: branch index per satisfied neighbor."""

    remaining: set
    choice: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Move:
    src: LocalState
    dst: LocalState
    commands: tuple[tuple[Pid, GuardedCommand], ...]

    @property
    def ident(self) -> str:
        return f"{self.src.label()}->{self.dst.label()}"


@dataclass
class LinRecord:
    ts: int
    pid: Pid
    move: str
    locals_after: LocalState
    shared_after: dict  # pair key -> Valuation


@dataclass
class CreateRecord:
    ts: int
    event: CreateEvent
    states: dict  # pair -> JState


@dataclass
class RunResult:
    records: list
    end: str
    stats: dict
    initial: Configuration
    mode: str


class Runtime:
    """One low-atomicity run of a dynamic specification."""

    def __init__(self, ds: DynamicSpec, seed: int = 0, check_guards: bool = True, backoff: float = 1e-4,
                 poll_rates: Mapping[str, float] | None = None):
        self.ds = ds
        self.poll_rates = dict(poll_rates or {})
        self.rng = random.Random(seed)
        self.check_guards = check_guards
        self.backoff = backoff
        self.store = SharedStore()
        self.locks = LockManager()
        self.programs: dict[frozenset, PairProgram] = {}
        self.nbrs: dict[Pid, list[Pid]] = {}
        self.records: list = []
        self._ts = itertools.count()
        self._rec_mutex = threading.Lock()
        self.halt: dict[Pid, bool] = {}
        self.acks: dict[Pid, bool] = {}
        self.in_protocol = False
        self.stop = False
        self.stats = {"guard_violations": 0, "executes": 0, "creates": 0, "interrupts": 0, "polls": 0}
        self.agents: dict[Any, Any] = {}
        self.new_agents: list = []
        self.error: Exception | None = None
        init = initial_configurations(ds)
        self.initial = init[0] if len(init) == 1 else self.rng.choice(init)
        for p, s in self.initial.states.items():
            self._register(self.initial.programs[p])
            self._write_pair(p, s.shared)
        for i in self.initial.pids:
            self._write_local(i, self.initial.local(i))

    # -- store layout -------------------------------------------------------

    def _register(self, pp: PairProgram) -> None:
        self.programs[pp.pair] = pp
        for h in pp.pids:
            self.nbrs.setdefault(h, [])
            other = pp.other(h)
            if other not in self.nbrs[h]:
                self.nbrs[h] = sorted(self.nbrs[h] + [other])

    def _write_local(self, i: Pid, s: LocalState) -> None:
        ver = self.store.cells.get(("ver", i), 0)
        self.store.write(("ver", i), ver + 1)
        for a in sorted(s.aps):
            self.store.write(("ap", i, a), a in s.true)
        self.store.write(("ver", i), ver + 2)

    def _write_pair(self, p: frozenset, shared: Mapping) -> None:
        k = pkey(p)
        ver = self.store.cells.get(("pver",) + k, 0)
        self.store.write(("pver",) + k, ver + 1)
        for name, v in shared.items():
            self.store.write(("var",) + k + (name,), v)
        self.store.write(("pver",) + k, ver + 2)

    def _states_of(self, i: Pid) -> frozenset[LocalState]:
        j = self.nbrs[i][0]
        return self.programs[pair(i, j)].skeleton(i).states

    def _from_truth(self, i: Pid, true: frozenset) -> LocalState:
        for s in self._states_of(i):
            if s.true == true:
                return s
        raise InputError(f"{i} has no local state with true set {sorted(true)}")

    def read_local(self, i: Pid):
        """Generator: a consistent collect of i's propositions (double collect on the version)."""
        aps = sorted(next(iter(self._states_of(i))).aps)
        while True:
            v1 = self.store.read(("ver", i))
            yield TICK
            if v1 % 2:
                yield WAIT
                continue
            true = []
            for a in aps:
                if self.store.read(("ap", i, a)):
                    true.append(a)
                yield TICK
            v2 = self.store.read(("ver", i))
            yield TICK
            if v1 == v2:
                return self._from_truth(i, frozenset(true))
            yield WAIT

    def read_shared(self, p: frozenset):
        """Generator: a consistent collect of the pair's shared variables."""
        k = pkey(p)
        names = sorted(v.name for v in self.programs[frozenset(p)].shared)
        while True:
            v1 = self.store.read(("pver",) + k)
            yield TICK
            if v1 % 2:
                yield WAIT
                continue
            vals = {}
            for n in names:
                vals[n] = self.store.read(("var",) + k + (n,))
                yield TICK
            v2 = self.store.read(("pver",) + k)
            yield TICK
            if v1 == v2:
                return Valuation(vals)
            yield WAIT

    def _direct_local(self, i: Pid) -> LocalState:
        aps = next(iter(self._states_of(i))).aps
        return self._from_truth(i, frozenset(a for a in aps if self.store.cells[("ap", i, a)]))

    def _direct_shared(self, p: frozenset) -> Valuation:
        k = pkey(p)
        return Valuation({v.name: self.store.cells[("var",) + k + (v.name,)] for v in self.programs[frozenset(p)].shared})

    def quiescent_config(self) -> Configuration:
        """The configuration held in the store; call only while no writer is active."""
        states = {}
        for p, pp in self.programs.items():
            locs = tuple(self._direct_local(h) for h in pp.pids)
            states[p] = JState(locs, self._direct_shared(p))
        return Configuration(dict(self.programs), states)

    def snapshot_config(self):
        """Generator: per-process consistent collects assembled into a configuration."""
        programs = dict(self.programs)
        locs = {}
        for h in sorted({h for p in programs for h in p}):
            locs[h] = yield from self.read_local(h)
        states = {}
        for p, pp in programs.items():
            sh = yield from self.read_shared(p)
            states[p] = JState(tuple(locs[h] for h in pp.pids), sh)
        return Configuration(programs, states)

    # -- the agent procedures ------------------------------------------------

    def moves(self, i: Pid, s_i: LocalState) -> list[Move]:
        nbrs = list(self.nbrs[i])
        out = []
        for arc in self.programs[pair(i, nbrs[0])].skeleton(i).out(s_i):
            cmds = tuple((j, self.programs[pair(i, j)].skeleton(i).arc(s_i, arc.dst).cmd) for j in nbrs)
            out.append(Move(s_i, arc.dst, cmds))
        return out

    def poll(self, i: Pid, mv: Move, st: PollState):
        """Generator: one sweep over the unsatisfied neighbors of move ``mv``.

        A neighbor leaves X once one of its branch guards is seen true; by
        temporary stability it stays true until P_i moves.
        """
        self.stats["polls"] += 1
        cmds = dict(mv.commands)
        for j in sorted(st.remaining):
            if self.halt.get(i) or self.stop:
                raise Interrupted(i)
            peer = yield from self.read_local(j)
            sh = yield from self.read_shared(pair(i, j))
            true = [k for k, b in enumerate(cmds[j].branches) if eval_guard(b.guard, peer, sh)]
            if true:
                st.choice[j] = true[0] if len(true) == 1 else self.rng.choice(true)
                st.remaining.discard(j)
        return not st.remaining

    def choose(self, i: Pid, s_i: LocalState):
        """Generator: interleave polls over every move from s_i; the first to empty its X wins.

        ``poll_rates`` maps a target state label to the chance that its move
        is polled in a given round; every move is still polled infinitely
        often, so this only shapes the interleaving.
        """
        moves = self.moves(i, s_i)
        if not moves:
            raise InputError(f"{i} has no move from {s_i.label()}")
        self.rng.shuffle(moves)
        polls = [PollState(set(dict(m.commands))) for m in moves]
        while True:
            for mv, st in zip(moves, polls):
                rate = self.poll_rates.get(mv.dst.label(), 1.0)
                if rate < 1.0 and self.rng.random() >= rate:
                    continue
                done = yield from self.poll(i, mv, st)
                if done:
                    return mv, dict(st.choice)
            yield WAIT

    def execute(self, i: Pid, mv: Move, choice: Mapping[Pid, int]):
        """Generator: lock, perform every body and flip AP_i at one linearization point, unlock."""
        groups = [ap_group(i)] + [pair_group((i, j)) for j in choice]
        yield from self.locks.acquire_all(groups, i)
        try:
            cmds = dict(mv.commands)
            shared_after = {}
            for j, k in sorted(choice.items()):
                p = pair(i, j)
                br = cmds[j].branches[k]
                sh = self._direct_shared(p)
                if self.check_guards and not eval_guard(br.guard, self._direct_local(j), sh):
                    self.stats["guard_violations"] += 1
                shared_after[pkey(p)] = apply_body(br.body, sh)
            with self._rec_mutex:
                ts = next(self._ts)
                self.records.append(LinRecord(ts, i, mv.ident, mv.dst, shared_after))
            for k, sh in shared_after.items():
                self._write_pair(frozenset(k), sh)
            self._write_local(i, mv.dst)
            self.stats["executes"] += 1
        finally:
            self.locks.release_all(groups, i)
        yield TICK
        return mv.dst

    def run_main(self, i: Pid):
        """Generator: the agent loop of P_i, servicing halt requests between moves."""
        s_i = self._direct_local(i)
        while not self.stop:
            if self.halt.get(i):
                self.acks[i] = True
                while self.halt.get(i) and not self.stop:
                    yield WAIT
                self.acks[i] = False
                continue
            try:
                mv, choice = yield from self.choose(i, s_i)
            except Interrupted:
                self.stats["interrupts"] += 1
                continue
            s_i = yield from self.execute(i, mv, choice)
            if mv.dst == mv.src:
                yield WAIT  # a self-loop changes nothing; back off before spinning again

    def creator(self):
        """Generator: the creation protocol driven by the dynamic spec's rule."""
        while not self.stop:
            cfg = yield from self.snapshot_config()
            events = self.ds.rule.events(cfg)
            if not events:
                yield WAIT
                continue
            ev = events[0]
            live = sorted({h for pp in ev.programs for h in pp.pids if cfg.alive(h)})
            self.in_protocol = True
            for h in live:
                self.halt[h] = True
            while not all(self.acks.get(h) for h in live):
                if self.stop:
                    return
                yield WAIT
            cfg = yield from self.snapshot_config()
            states = choose_join_states(cfg, ev)
            apply_create(cfg, ev, states)
            pids = sorted({h for pp in ev.programs for h in pp.pids})
            groups = [REGISTRY] + [ap_group(h) for h in pids] + [pair_group(pp.pair) for pp in ev.programs]
            yield from self.locks.acquire_all(groups, CREATE)
            try:
                fresh = [h for h in pids if h not in self.nbrs]
                with self._rec_mutex:
                    ts = next(self._ts)
                    self.records.append(CreateRecord(ts, ev, dict(states)))
                for pp in ev.programs:
                    self._register(pp)
                    self._write_pair(pp.pair, states[pp.pair].shared)
                for h in fresh:
                    s = next(st.local(h) for p, st in states.items() if h in p)
                    self._write_local(h, s)
                self.stats["creates"] += 1
                self.new_agents.extend(fresh)
            finally:
                self.locks.release_all(groups, CREATE)
            for h in live:
                self.halt[h] = False
            self.in_protocol = False
            yield TICK

    # -- termination ----------------------------------------------------------

    def status(self, cfg: Configuration) -> str | None:
        """'absorbing' or 'deadlock' when the run can stop, else None."""
        events = self.ds.rule.events(cfg)
        moves = {i: process_moves(cfg, i) for i in cfg.pids}
        if not events and not any(moves.values()):
            return "deadlock"
        if not events and all(cfg.states[p] == t for ds in moves.values() for d in ds for p, t in d.items()):
            return "absorbing"
        return None


def _creates(ds: DynamicSpec) -> bool:
    return type(ds.rule) is not CreationRule


def _result(rt: Runtime, end: str, mode: str) -> RunResult:
    stats = dict(rt.stats)
    stats.update(reads=rt.store.reads, writes=rt.store.writes, lock_order_violations=rt.locks.order_violations)
    return RunResult(sorted(rt.records, key=lambda r: r.ts), end, stats, rt.initial, mode)


def run_stepper(ds: DynamicSpec, seed: int = 0, max_steps: int = 500_000, check_every: int = 64,
                check_guards: bool = True, poll_rates: Mapping[str, float] | None = None) -> RunResult:
    """Deterministic run: at each step one agent, picked by the seeded RNG, does one operation."""
    rt = Runtime(ds, seed, check_guards, poll_rates=poll_rates)
    agents: dict[Any, Any] = {i: rt.run_main(i) for i in rt.initial.pids}
    if _creates(ds):
        agents[CREATE] = rt.creator()
    end = "budget"
    for n in range(max_steps):
        if rt.new_agents:
            for h in rt.new_agents:
                agents[h] = rt.run_main(h)
            rt.new_agents.clear()
        if n % check_every == 0 and not rt.locks.any_held() and not rt.in_protocol:
            st = rt.status(rt.quiescent_config())
            if st is not None:
                end = st
                break
        key = rt.rng.choice(sorted(agents, key=str))
        try:
            next(agents[key])
        except StopIteration:
            del agents[key]
    rt.stop = True
    if end == "deadlock":
        cfg = rt.quiescent_config()
        from .waitfor import build_wfg

        raise DeadlockReached(cfg, build_wfg(cfg))
    return _result(rt, end, "stepper")


def run_free(ds: DynamicSpec, seed: int = 0, timeout: float = 20.0, check_guards: bool = True,
             backoff: float = 1e-4, poll_rates: Mapping[str, float] | None = None) -> RunResult:
    """Free-running threads, one per agent; a monitor stops the run at an absorbing configuration."""
    rt = Runtime(ds, seed, check_guards, backoff, poll_rates)
    threads: list[threading.Thread] = []
    errors: list[BaseException] = []

    def drive(gen):
        try:
            for sig in gen:
                if rt.stop:
                    return
                if sig == WAIT:
                    time.sleep(backoff)
        except BaseException as e:  # surfaced to the caller below
            errors.append(e)
            rt.stop = True

    def spawn(gen, name):
        t = threading.Thread(target=drive, args=(gen,), name=str(name), daemon=True)
        threads.append(t)
        t.start()

    for i in rt.initial.pids:
        spawn(rt.run_main(i), i)
    if _creates(ds):
        spawn(rt.creator(), CREATE)
    end = "budget"
    deadline = time.monotonic() + timeout
    monitor = "monitor"
    while time.monotonic() < deadline and not rt.stop:
        for h in list(rt.new_agents):
            rt.new_agents.remove(h)
            spawn(rt.run_main(h), h)
        time.sleep(0.002)
        groups = [REGISTRY] + [ap_group(h) for h in rt.nbrs] + [pair_group(p) for p in rt.programs]
        got = []
        for g in sorted(groups):
            while not rt.locks.try_acquire(g, monitor):
                time.sleep(backoff)
            got.append(g)
        try:
            if not rt.in_protocol:
                st = rt.status(rt.quiescent_config())
                if st is not None:
                    end = st
                    rt.stop = True
        finally:
            rt.locks.release_all(got, monitor)
    rt.stop = True
    for t in threads:
        t.join(timeout=2.0)
    if errors:
        raise errors[0]
    return _result(rt, end, "free")


# ---------------------------------------------------------------------------
# replay


@dataclass
class ReplayVerdict:
    valid: bool
    index: int | None = None
    reason: str = ""
    trace: Trace | None = None


def replay_linearization(records: Sequence, initial: Configuration) -> ReplayVerdict:
    """Replay records in timestamp order as normal and create transitions of M_𝒫."""
    cfg = initial
    tr = Trace(initial)
    last = None
    for k, r in enumerate(records):
        if last is not None and r.ts <= last:
            return ReplayVerdict(False, k, "timestamps are not increasing", tr)
        last = r.ts
        if isinstance(r, CreateRecord):
            try:
                new = apply_create(cfg, r.event, r.states)
            except (RuleForbids, InconsistentJoinState, SpecViolated, NoCompatibleState) as e:
                return ReplayVerdict(False, k, f"illegal create: {e}", tr)
            tr.steps.append(Step(CREATE, new, frozenset(r.event.pairs)))
            cfg = new
            continue
        if not cfg.alive(r.pid):
            return ReplayVerdict(False, k, f"{r.pid} is not alive", tr)
        if cfg.local(r.pid).label() != r.move.split("->")[0]:
            return ReplayVerdict(False, k, f"{r.pid} is not at the source of {r.move}", tr)
        match = None
        for d in process_moves(cfg, r.pid):
            if all(d[p].local(r.pid) == r.locals_after for p in d) and \
                    all(d[frozenset(key)].shared == sh for key, sh in r.shared_after.items()) and \
                    len(d) == len(r.shared_after):
                match = d
                break
        if match is None:
            return ReplayVerdict(False, k, f"{r.pid} {r.move} is not an enabled move here", tr)
        cfg = cfg.updated(match)
        tr.steps.append(Step(r.pid, cfg))
    tr.end = "replayed"
    return ReplayVerdict(True, None, "", tr)


def check_tstab_all(programs: Iterable[PairProgram]) -> list:
    """Programs whose guards are not temporarily stable, with the offending (owner, arc, branch)."""
    bad = []
    for pp in programs:
        res = check_tstab(pp, build_pair_structure(pp))
        if not res.ok:
            bad.append((pp.name, res.witness))
    return bad


def run(ds: DynamicSpec, mode: str = "stepper", seed: int = 0, programs: Iterable[PairProgram] | None = None,
        **kw) -> tuple[RunResult, ReplayVerdict]:
    """Refuse programs without stable guards, run, and replay the linearization."""
    progs = list(programs) if programs is not None else list(ds.initial)
    bad = check_tstab_all(progs)
    if bad:
        raise InputError(f"guards are not temporarily stable: {bad[0]}")
    res = run_stepper(ds, seed, **kw) if mode == "stepper" else run_free(ds, seed, **kw)
    return res, replay_linearization(res.records, res.initial)


# ---------------------------------------------------------------------------
# linearization files


def lin_lines(records: Sequence) -> list[str]:
    """``LIN <ts> <pid> <move> <cell=value ...>`` and ``CREATE <ts> <event> <pid=state ...>`` lines."""
    out = []
    for r in records:
        if isinstance(r, CreateRecord):
            cells = []
            for p, s in sorted(r.states.items(), key=lambda kv: sorted(kv[0])):
                cells += [f"{x.owner}={x.label()}" for x in s.locals]
                cells += [f"{'|'.join(pkey(p))}.{n}={v}" for n, v in s.shared.items_tuple()]
            out.append(f"CREATE {r.ts} {r.event.name} {' '.join(cells)}".rstrip())
        else:
            cells = [f"{r.pid}.{a}={int(a in r.locals_after.true)}" for a in sorted(r.locals_after.aps)]
            for k, sh in sorted(r.shared_after.items()):
                cells += [f"{'|'.join(k)}.{n}={v}" for n, v in sh.items_tuple()]
            out.append(f"LIN {r.ts} {r.pid} {r.move} {' '.join(cells)}".rstrip())
    return out


def parse_lin_lines(lines: Iterable[str]) -> list[dict]:
    out = []
    for raw in lines:
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "LIN":
            out.append({"kind": "LIN", "ts": int(parts[1]), "pid": parts[2], "move": parts[3],
                        "cells": dict(c.split("=", 1) for c in parts[4:])})
        elif parts[0] == "CREATE":
            out.append({"kind": "CREATE", "ts": int(parts[1]), "event": parts[2],
                        "cells": dict(c.split("=", 1) for c in parts[3:])})
        else:
            raise InputError(f"unrecognised linearization line {raw!r}")
    return out
