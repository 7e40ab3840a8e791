"""Pair-programs, static programs and their explicit global-state diagrams.

Also the state and path projection operators and the checks behind the
transition- and state-mapping lemmas.
"""

from __future__ import annotations

import itertools
import os
from collections import deque
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from .errors import (
    BudgetExceeded,
    EmptyInitialSet,
    IncompatibleLocalStructure,
    InputError,
    InvalidSkeleton,
    UndefinedProjection,
)
from .mc import Structure
from .skeleton import (
    TRUE,
    AtomicProp,
    Expr,
    LocalState,
    Pid,
    SharedVar,
    SyncSkeleton,
    Valuation,
    apply_body,
    eval_guard,
    same_local_structure,
    validate_skeleton,
)

DEFAULT_BUDGET = 200_000


def state_budget(budget: int | None = None) -> int:
    """Explicit budget, else ``PAIRSYNTH_MAX_STATES``, else the default."""
    if budget is not None:
        return budget
    return int(os.environ.get("PAIRSYNTH_MAX_STATES", DEFAULT_BUDGET))


Pair = frozenset


def pair(i: Pid, j: Pid) -> frozenset:
    return frozenset((i, j))


@dataclass(frozen=True)
class JState:
    """Local states of some processes plus the values of their pairs' shared variables."""

    locals: tuple[LocalState, ...]
    shared: Valuation = field(default_factory=Valuation)

    def __post_init__(self):
        locs = tuple(sorted(self.locals, key=lambda s: s.owner))
        object.__setattr__(self, "locals", locs)
        if not isinstance(self.shared, Valuation):
            object.__setattr__(self, "shared", Valuation(self.shared))

    @property
    def pids(self) -> tuple[Pid, ...]:
        return tuple(s.owner for s in self.locals)

    def local(self, pid: Pid) -> LocalState:
        for s in self.locals:
            if s.owner == pid:
                return s
        raise UndefinedProjection(f"{pid} is not a process of this state")

    def truth(self, owner: Pid, name: str) -> bool:
        return self.local(owner).value(name)

    def value(self, var: str) -> str:
        return self.shared[var]

    def props(self) -> frozenset[AtomicProp]:
        return frozenset(AtomicProp(s.owner, p) for s in self.locals for p in s.true)

    def with_local(self, new: LocalState, shared: Valuation | None = None) -> "JState":
        locs = tuple(new if s.owner == new.owner else s for s in self.locals)
        return JState(locs, self.shared if shared is None else shared)

    def key(self):
        return (tuple(s.key() for s in self.locals), self.shared.items_tuple())

    def __lt__(self, other: "JState") -> bool:
        return self.key() < other.key()

    def __repr__(self) -> str:
        body = ", ".join(repr(s) for s in self.locals)
        return f"<{body}{' ' + repr(self.shared) if len(self.shared) else ''}>"


PairState = JState


def pair_state(s_i: LocalState, s_j: LocalState, shared: Mapping | None = None) -> JState:
    return JState((s_i, s_j), Valuation(shared or {}))


@dataclass(frozen=True)
class PairProgram:
    """P_i^j ∥ P_j^i with its shared variables, initial pair-states and spec."""

    skel_i: SyncSkeleton
    skel_j: SyncSkeleton
    shared: tuple[SharedVar, ...] = ()
    initials: frozenset | None = None
    spec: Expr = TRUE
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "shared", tuple(sorted(self.shared, key=lambda v: v.name)))
        if self.skel_i.owner != self.skel_j.peer or self.skel_j.owner != self.skel_i.peer:
            raise InvalidSkeleton("skeleton owners and peers do not match")
        if self.initials is None:
            init_sh = Valuation({v.name: v.initial for v in self.shared})
            inits = frozenset(pair_state(a, b, init_sh)
                              for a in self.skel_i.initials for b in self.skel_j.initials)
            object.__setattr__(self, "initials", inits)
        else:
            object.__setattr__(self, "initials", frozenset(self.initials))

    @property
    def i(self) -> Pid:
        return self.skel_i.owner

    @property
    def j(self) -> Pid:
        return self.skel_j.owner

    @property
    def pids(self) -> tuple[Pid, Pid]:
        return (self.i, self.j)

    @property
    def pair(self) -> frozenset:
        return pair(self.i, self.j)

    @property
    def var_names(self) -> frozenset[str]:
        return frozenset(v.name for v in self.shared)

    def skeleton(self, h: Pid) -> SyncSkeleton:
        if h == self.i:
            return self.skel_i
        if h == self.j:
            return self.skel_j
        raise KeyError(h)

    def other(self, h: Pid) -> Pid:
        return self.j if h == self.i else self.i

    def aps(self) -> frozenset[AtomicProp]:
        return frozenset(AtomicProp(sk.owner, p) for sk in (self.skel_i, self.skel_j)
                         for s in sk.states for p in s.aps)

    def validate(self) -> list:
        out = []
        for sk in (self.skel_i, self.skel_j):
            peer_aps = set().union(*(s.aps for s in self.skeleton(sk.peer).states)) if self.skeleton(sk.peer).states else set()
            out += validate_skeleton(sk, self.shared, peer_aps)
        for v in self.shared:
            if v.pair != self.pair:
                out.append(f"shared variable {v.name} belongs to {sorted(v.pair)}")
        for s in self.initials:
            if set(s.shared) != set(self.var_names):
                out.append(f"initial state {s!r} does not value exactly the pair's variables")
        return out


def pair_successors(pp: PairProgram, s: JState, mover: Pid | None = None) -> list[tuple[Pid, JState]]:
    """Transitions of M_ij out of ``s``: one per enabled branch of each arc."""
    out = []
    movers = pp.pids if mover is None else (mover,)
    for h in movers:
        sk = pp.skeleton(h)
        s_h = s.local(h)
        peer = s.local(pp.other(h))
        for a in sk.out(s_h):
            for b in a.cmd.branches:
                if eval_guard(b.guard, peer, s.shared):
                    out.append((h, s.with_local(a.dst, apply_body(b.body, s.shared))))
    return out


def build_pair_structure(pp: PairProgram, full: bool = False, budget: int | None = None) -> Structure:
    """M_ij over the reachable pair-states (or the full cross product if ``full``)."""
    bad = pp.validate()
    if bad:
        raise InvalidSkeleton("; ".join(map(str, bad)))
    limit = state_budget(budget)
    if full:
        vals = [dict(zip([v.name for v in pp.shared], combo))
                for combo in itertools.product(*(v.domain for v in pp.shared))]
        seeds = [pair_state(a, b, v) for a in pp.skel_i.states for b in pp.skel_j.states for v in vals]
    else:
        seeds = sorted(pp.initials)
    return _explore(seeds, pp.initials, lambda s: pair_successors(pp, s), limit,
                    pp.aps(), pp.var_names)


def _explore(seeds, initials, succ, limit, aps, variables) -> Structure:
    seen = {}
    order = []
    queue = deque()
    for s in seeds:
        if s not in seen:
            seen[s] = len(order)
            order.append(s)
            queue.append(s)
    trans = []
    while queue:
        s = queue.popleft()
        for lab, t in succ(s):
            if t not in seen:
                if len(order) >= limit:
                    raise BudgetExceeded(limit)
                seen[t] = len(order)
                order.append(t)
                queue.append(t)
            trans.append((s, lab, t))
    return Structure(order, initials, trans, aps, variables)


# ---------------------------------------------------------------------------
# static programs


@dataclass
class StaticProgram:
    """A static interconnection I with one pair-program per unordered pair."""

    pairs: dict[frozenset, PairProgram]

    def __post_init__(self):
        progs = self.pairs.values() if isinstance(self.pairs, Mapping) else self.pairs
        self.pairs = {pp.pair: pp for pp in progs}
        names = [v.name for pp in self.pairs.values() for v in pp.shared]
        if len(names) != len(set(names)):
            raise InputError("shared variable sets of distinct pairs must be disjoint")

    @property
    def I(self) -> list[tuple[Pid, Pid, Expr]]:
        return [(min(p), max(p), pp.spec) for p, pp in sorted(self.pairs.items(), key=lambda x: sorted(x[0]))]

    @property
    def pids(self) -> list[Pid]:
        return sorted(set().union(*self.pairs)) if self.pairs else []

    def neighbors(self, i: Pid, J: Iterable[frozenset] | None = None) -> list[Pid]:
        scope = self.pairs if J is None else J
        return sorted(next(iter(p - {i})) for p in scope if i in p)

    def pair_program(self, i: Pid, j: Pid) -> PairProgram:
        try:
            return self.pairs[pair(i, j)]
        except KeyError:
            raise UndefinedProjection(f"{i} and {j} are not interconnected") from None

    def skeleton(self, i: Pid, j: Pid) -> SyncSkeleton:
        return self.pair_program(i, j).skeleton(i)

    def has_pair(self, p) -> bool:
        return frozenset(p) in self.pairs

    def vars_of(self, p: frozenset) -> frozenset[str]:
        return self.pairs[p].var_names if p in self.pairs else frozenset()

    def check_compatibility(self) -> None:
        for i in self.pids:
            sks = [self.skeleton(i, j) for j in self.neighbors(i)]
            for other in sks[1:]:
                if not same_local_structure(sks[0], other):
                    raise IncompatibleLocalStructure(
                        f"{i}: local structure in pair with {sks[0].peer} differs from pair with {other.peer}")

    def validate(self) -> list[str]:
        out = []
        for p, pp in sorted(self.pairs.items(), key=lambda x: sorted(x[0])):
            out += [f"{sorted(p)}: {v}" for v in pp.validate()]
        try:
            self.check_compatibility()
        except IncompatibleLocalStructure as e:
            out.append(str(e))
        return out

    def aps(self, J: Iterable[frozenset] | None = None) -> frozenset[AtomicProp]:
        scope = self.pairs if J is None else J
        return frozenset().union(*(self.pairs[p].aps() for p in scope))


def initial_states(sp: StaticProgram, J: Iterable[frozenset] | None = None,
                   budget: int | None = None) -> Iterator[JState]:
    """S⁰_J: J-states whose every pair projection is an initial pair-state."""
    pairs = sorted(sp.pairs if J is None else set(J), key=sorted)
    limit = state_budget(budget)
    count = 0

    def extend(k, locs: dict, shared: dict):
        nonlocal count
        if k == len(pairs):
            count += 1
            if count > limit:
                raise BudgetExceeded(limit)
            yield JState(tuple(locs.values()), Valuation(shared))
            return
        pp = sp.pairs[pairs[k]]
        for s in sorted(pp.initials):
            ok = all(locs.get(h, s.local(h)) == s.local(h) for h in pp.pids)
            if not ok:
                continue
            new_locs = dict(locs)
            for h in pp.pids:
                new_locs[h] = s.local(h)
            yield from extend(k + 1, new_locs, {**shared, **s.shared})

    yield from extend(0, {}, {})


def product_successors(sp: StaticProgram, J: Sequence[frozenset], s: JState) -> list[tuple[Pid, JState]]:
    """Transitions of M_J out of ``s`` per the I-structure definition."""
    out = []
    for i in s.pids:
        nbrs = sp.neighbors(i, J)
        s_i = s.local(i)
        first = sp.skeleton(i, nbrs[0])
        for arc in first.out(s_i):
            per_nbr = []
            for j in nbrs:
                a = sp.skeleton(i, j).arc(s_i, arc.dst)
                if a is None:
                    per_nbr = None
                    break
                peer = s.local(j)
                bodies = {b.body for b in a.cmd.branches if eval_guard(b.guard, peer, s.shared)}
                if not bodies:
                    per_nbr = None
                    break
                per_nbr.append(sorted(bodies, key=str))
            if per_nbr is None:
                continue
            for choice in itertools.product(*per_nbr):
                sh = s.shared
                for body in choice:
                    sh = apply_body(body, sh)
                out.append((i, s.with_local(arc.dst, sh)))
    return out


def build_product_structure(sp: StaticProgram, J: Iterable[frozenset] | None = None,
                            budget: int | None = None) -> Structure:
    """Explicit M_J for J ⊆ I (all of I by default), reachable part only."""
    J = sorted(sp.pairs if J is None else {frozenset(p) for p in J}, key=sorted)
    for p in J:
        if p not in sp.pairs:
            raise UndefinedProjection(f"{sorted(p)} is not in I")
    sp.check_compatibility()
    limit = state_budget(budget)
    inits = list(initial_states(sp, J, limit))
    if not inits:
        raise EmptyInitialSet("no J-state projects onto initial states of every pair")
    variables = frozenset().union(*(sp.vars_of(p) for p in J))
    return _explore(inits, inits, lambda s: product_successors(sp, J, s), limit, sp.aps(J), variables)


# ---------------------------------------------------------------------------
# projections


def project_state(s: JState, target: Any, ctx: StaticProgram | None = None):
    """State projection onto a process, a pair, a set of pairs, or a pair's shared variables.

    ``target`` is a pid, a 2-element frozenset (a pair), a set/list of pairs,
    or the tuple ``("shared", pair)``.  Pair projections need ``ctx`` to know
    which shared variables belong to the pair.
    """
    if isinstance(target, str):
        return s.local(target)
    if isinstance(target, tuple) and len(target) == 2 and target[0] == "shared":
        p = frozenset(target[1])
        _require_pair(p, ctx)
        return s.shared.restrict(ctx.vars_of(p))
    if isinstance(target, frozenset) and all(isinstance(x, str) for x in target):
        _require_pair(target, ctx)
        return JState(tuple(s.local(h) for h in sorted(target)), s.shared.restrict(ctx.vars_of(target)))
    pairs = [frozenset(p) for p in target]
    for p in pairs:
        _require_pair(p, ctx)
    dom = sorted(set().union(*pairs)) if pairs else []
    names = set().union(*(ctx.vars_of(p) for p in pairs)) if pairs else set()
    return JState(tuple(s.local(h) for h in dom), s.shared.restrict(names))


def _require_pair(p: frozenset, ctx) -> None:
    if ctx is None:
        raise UndefinedProjection("pair projection needs the program context")
    if len(p) != 2 or not ctx.has_pair(p):
        raise UndefinedProjection(f"{sorted(p)} is not an interconnected pair")


@dataclass
class Path:
    """A finite labelled path: ``labels[k]`` labels ``states[k] -> states[k+1]``."""

    states: list
    labels: list

    def __post_init__(self):
        if len(self.labels) != max(len(self.states) - 1, 0):
            raise InputError("a path with n states needs n-1 labels")

    def __len__(self) -> int:
        return len(self.states)


def project_path(path: Path, J: Iterable[frozenset], ctx, start: int = 0) -> Path:
    """Coalesce maximal blocks free of dom(J) transitions; keep dom(J) transitions.

    ``start`` lets dynamic callers skip the prefix before J came into force.
    """
    J = [frozenset(p) for p in J]
    dom = set().union(*J) if J else set()
    states = path.states[start:]
    labels = path.labels[start:]
    if not states:
        return Path([], [])
    out_states = [project_state(states[0], J, ctx)]
    out_labels = []
    for k, lab in enumerate(labels):
        if lab in dom:
            out_labels.append(lab)
            out_states.append(project_state(states[k + 1], J, ctx))
    return Path(out_states, out_labels)


def is_path_of(path: Path, m: Structure) -> bool:
    """Is ``path`` a path of ``m`` (states present, each step a transition)?"""
    for s in path.states:
        if s not in m.index:
            return False
    edges = {(int(a), m.labels[l], int(b)) for a, l, b in zip(m.src, m.lab, m.dst)}
    for k, lab in enumerate(path.labels):
        if (m.index[path.states[k]], lab, m.index[path.states[k + 1]]) not in edges:
            return False
    return True


# ---------------------------------------------------------------------------
# mapping lemmas


@dataclass
class MappingReport:
    violations: list = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def expected_successors(sp: StaticProgram, s: JState, i: Pid) -> set[JState]:
    """i-successors of an I-state assembled from pair-structure transitions alone."""
    nbrs = sp.neighbors(i)
    options = []
    for j in nbrs:
        pp = sp.pair_program(i, j)
        sij = project_state(s, pp.pair, sp)
        options.append([t for lab, t in pair_successors(pp, sij, i)])
    out = set()
    for combo in itertools.product(*options):
        dst = {t.local(i) for t in combo}
        if len(dst) != 1:
            continue
        sh = s.shared
        for t in combo:
            sh = sh.update(dict(t.shared))
        out.add(s.with_local(dst.pop(), sh))
    return out


def verify_transition_mapping(sp: StaticProgram, m: Structure) -> MappingReport:
    """Compare every transition of M_I with the pairwise characterisation, both ways."""
    rep = MappingReport()
    actual: dict[tuple[int, Pid], set] = {}
    for a, l, b in zip(m.src, m.lab, m.dst):
        actual.setdefault((int(a), m.labels[l]), set()).add(m.states[int(b)])
    for k, s in enumerate(m.states):
        for i in s.pids:
            exp = expected_successors(sp, s, i)
            got = actual.get((k, i), set())
            rep.checked += len(got)
            for t in sorted(got - exp):
                rep.violations.append(("extra", s, i, t))
            for t in sorted(exp - got):
                rep.violations.append(("missing", s, i, t))
    return rep


def verify_state_mapping(sp: StaticProgram, m: Structure, J: Iterable[frozenset]) -> MappingReport:
    """Every reachable state of M_I projects onto a reachable state of M_J."""
    J = [frozenset(p) for p in J]
    mj = build_product_structure(sp, J)
    rep = MappingReport()
    for s in m.states:
        rep.checked += 1
        t = project_state(s, J, sp)
        if t not in mj.index:
            rep.violations.append(("unreachable", s, t))
    return rep


# ---------------------------------------------------------------------------
# DOT


def _q(s: str) -> str:
    return '"' + s.replace('"', r'\"') + '"'


def structure_to_dot(m: Structure, name: str = "M") -> str:
    lines = [f"digraph {_q(name)} {{", "  node [shape=box];"]
    for k, s in enumerate(m.states):
        props = sorted(f"{p.name}_{p.owner}" for p in s.props()) if hasattr(s, "props") else [repr(s)]
        extra = ", peripheries=2" if k in m.initials else ""
        lines.append(f"  s{k} [label={_q(' '.join(props))}{extra}];")
    for a, l, b in zip(m.src, m.lab, m.dst):
        lines.append(f"  s{a} -> s{b} [label={_q(str(m.labels[l]))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# weak fairness on products


def product_fairness(sp: StaticProgram, m: Structure) -> list:
    """Φ_b ∧ Φ_ℓ as "infinitely often" constraints over a product of ``sp``.

    Φ_b(i): FG(blk_i ∧ en_i) ⟹ GF ex_i, i.e. GF ¬(blk_i ∧ en_i) ∨ GF ex_i.
    Φ_ℓ(ij): (FG en_i ∨ FG en_j) ∧ FG pnd_ij ⟹ GF(ex_i ∨ ex_j).
    """
    import numpy as np

    from .mc import AllOf, AnyOf, GFMove, GFState, compute_blk, compute_pnd

    pids = sorted(set().union(*(s.pids for s in m.states[:1]))) if m.n else []
    en = {}
    for i in pids:
        mask = np.zeros(m.n, dtype=bool)
        mask[m.src[m.label_mask(i)]] = True
        en[i] = mask
    cons = []
    for i in pids:
        blk = set()
        for j in sp.neighbors(i):
            if j in pids:
                blk |= compute_blk(sp.pair_program(i, j), i)
        b = np.fromiter((s.local(i) in blk for s in m.states), dtype=bool, count=m.n)
        cons.append(AnyOf((GFState(~(b & en[i])), GFMove(frozenset([i])))))
    for p_, pp in sorted(sp.pairs.items(), key=lambda x: sorted(x[0])):
        if not p_ <= set(pids):
            continue
        pnd = compute_pnd(pp)
        mask = np.fromiter((project_state(s, p_, sp) in pnd for s in m.states), dtype=bool, count=m.n)
        i, j = pp.pids
        cons.append(AnyOf((AllOf((GFState(~en[i]), GFState(~en[j]))), GFState(~mask),
                           GFMove(frozenset(pp.pids)))))
    return cons
