"""Pairwise synthesis: the conjunctive overlay of a process's pair-processes.

The ⊗ of per-neighbor commands is kept as a map from neighbor to its
⊕-command rather than being distributed into a cross product of branches,
so the composed program stays linear in the size of the pair-programs.
"""

from __future__ import annotations

import itertools
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .errors import EmptyInitialSet, IncompatibleLocalStructure, InputError
from .skeleton import (
    Expr,
    GuardedCommand,
    LocalState,
    Pid,
    SyncSkeleton,
    apply_body,
    conj,
    eval_guard,
    same_local_structure,
)
from .structure import JState, StaticProgram, initial_states


@dataclass(frozen=True)
class ComposedMove:
    src: LocalState
    dst: LocalState
    per_neighbor: tuple[tuple[Pid, GuardedCommand], ...]

    def __post_init__(self):
        items = self.per_neighbor.items() if isinstance(self.per_neighbor, Mapping) else self.per_neighbor
        object.__setattr__(self, "per_neighbor", tuple(sorted(items)))
        if not self.per_neighbor:
            raise InputError("a composed move needs at least one neighbor")

    @property
    def neighbors(self) -> tuple[Pid, ...]:
        return tuple(j for j, _ in self.per_neighbor)

    def command(self, j: Pid) -> GuardedCommand:
        for k, c in self.per_neighbor:
            if k == j:
                return c
        raise KeyError(j)

    def guard(self, j: Pid) -> Expr:
        """a.guard_j: disjunction of the neighbor-j branch guards."""
        return self.command(j).guard()

    def flat_guard(self) -> Expr:
        return conj(*(c.guard() for _, c in self.per_neighbor))

    @property
    def ident(self) -> str:
        return f"{self.src.label()}->{self.dst.label()}"

    def __str__(self) -> str:
        parts = " (x) ".join(f"[{j}: {c}]" for j, c in self.per_neighbor)
        return f"{self.src.label()} -> {self.dst.label()} : {parts}"


@dataclass(frozen=True)
class ComposedProcess:
    owner: Pid
    states: frozenset[LocalState]
    initials: frozenset[LocalState]
    moves: tuple[ComposedMove, ...]

    def moves_from(self, s: LocalState) -> list[ComposedMove]:
        return [m for m in self.moves if m.src == s]

    def canonical(self) -> str:
        return "\n".join(sorted(str(m) for m in self.moves))


def overlay(processes: Sequence[SyncSkeleton]) -> ComposedProcess:
    """⊗ of pair-processes sharing one owner (and one stripped local structure)."""
    if not processes:
        raise InputError("overlay needs at least one skeleton")
    owner = processes[0].owner
    if any(p.owner != owner for p in processes):
        raise InputError("overlay inputs must have the same owner")
    for p in processes[1:]:
        if not same_local_structure(processes[0], p):
            raise IncompatibleLocalStructure(f"{owner}: pair-processes for {processes[0].peer} and {p.peer} differ")
    moves = []
    for arc in processes[0].arcs:
        per: dict[Pid, GuardedCommand] = {}
        for sk in processes:
            a = sk.arc(arc.src, arc.dst)
            per[sk.peer] = per[sk.peer].times(a.cmd) if sk.peer in per else a.cmd
        moves.append(ComposedMove(arc.src, arc.dst, per))
    inits = frozenset.intersection(*(p.initials for p in processes))
    return ComposedProcess(owner, processes[0].states, inits,
                           tuple(sorted(moves, key=lambda m: (m.src.key(), m.dst.key()))))


def enabled_branches(mv: ComposedMove, peers: Mapping[Pid, LocalState], shareds: Mapping,
                     rng: random.Random | None = None) -> dict[Pid, int] | None:
    """Index of a true branch per neighbor, or None if some neighbor blocks the move.

    ``shareds`` maps each neighbor to its pair's valuation, or is one global
    valuation.  Without ``rng`` the least-index true branch is chosen.
    """
    per_nbr = all(isinstance(shareds.get(j), Mapping) for j in mv.neighbors)
    choice = {}
    for j, cmd in mv.per_neighbor:
        sh = shareds[j] if per_nbr else shareds
        true = [k for k, b in enumerate(cmd.branches) if eval_guard(b.guard, peers[j], sh)]
        if not true:
            return None
        choice[j] = rng.choice(true) if rng is not None else true[0]
    return choice


@dataclass
class Synthesis:
    processes: dict[Pid, ComposedProcess]
    program: StaticProgram
    cost: int = 0

    def initial_states(self, budget: int | None = None):
        return initial_states(self.program, budget=budget)

    def step(self, s: JState) -> list[tuple[Pid, JState]]:
        """All transitions obtainable by firing composed moves (every branch choice)."""
        out = []
        for i in s.pids:
            proc = self.processes[i]
            for mv in proc.moves_from(s.local(i)):
                options = []
                for j, cmd in mv.per_neighbor:
                    bodies = {b.body for b in cmd.branches if eval_guard(b.guard, s.local(j), s.shared)}
                    if not bodies:
                        options = None
                        break
                    options.append(sorted(bodies, key=str))
                if options is None:
                    continue
                for combo in itertools.product(*options):
                    sh = s.shared
                    for body in combo:
                        sh = apply_body(body, sh)
                    out.append((i, s.with_local(mv.dst, sh)))
        return out


def pair_program_size(pp) -> int:
    """Element count of a pair-program: states, arcs, branches and shared variables."""
    n = 0
    for sk in (pp.skel_i, pp.skel_j):
        n += len(sk.states) + len(sk.arcs) + sum(len(a.cmd.branches) for a in sk.arcs)
    return n + len(pp.shared) + len(pp.initials)


def synthesize_static(sp: StaticProgram, check_initial: bool = True) -> Synthesis:
    """Overlay each process's pair-processes.

    ``cost`` counts the pair-program elements touched; no global product is
    ever built.  With ``check_initial`` the derived S⁰_I is tested for
    non-emptiness by a backtracking join over the pairs' initial states.
    """
    cost = 0
    procs = {}
    for i in sp.pids:
        sks = [sp.skeleton(i, j) for j in sp.neighbors(i)]
        for sk in sks:
            cost += len(sk.states) + len(sk.arcs) + sum(len(a.cmd.branches) for a in sk.arcs)
        procs[i] = overlay(sks)
    for pp in sp.pairs.values():
        cost += len(pp.shared) + len(pp.initials)
    syn = Synthesis(procs, sp, cost)
    if check_initial:
        if next(iter(initial_states(sp)), None) is None:
            raise EmptyInitialSet("the pairs' initial states admit no common I-state")
    return syn
