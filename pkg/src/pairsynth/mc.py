"""Explicit-state CTL model checking over finite structures.

Labelling is by fixpoint iteration on boolean state vectors.  Paths are
fullpaths: infinite, or finite and ending in a state with no successor.
``AX_j``/``EX_j`` look only at successors reached by a ``j``-transition, so
``AX_j f`` holds vacuously where ``j`` cannot move.

Optional fairness restricts path quantifiers to fair fullpaths; every
constraint is a positive combination of "infinitely often" atoms, which lets
fair ``EG`` be decided by inspecting strongly connected components.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Any, Callable

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import sexpr
from .errors import ForeignSymbol, InputError
from .skeleton import (
    FALSE,
    TRUE,
    And,
    AtomicProp,
    Const,
    Expr,
    Not,
    Or,
    Prop,
    VarEq,
    _guard_from_tree,
    evaluate,
)

# ---------------------------------------------------------------------------
# temporal syntax


@dataclass(frozen=True)
class AX(Expr):
    pid: str | None
    arg: Expr

    def sexpr(self):
        return ["AX", self.pid, self.arg.sexpr()] if self.pid else ["AX", self.arg.sexpr()]

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class EX(Expr):
    pid: str | None
    arg: Expr

    def sexpr(self):
        return ["EX", self.pid, self.arg.sexpr()] if self.pid else ["EX", self.arg.sexpr()]

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class AU(Expr):
    left: Expr
    right: Expr

    def sexpr(self):
        return ["AU", self.left.sexpr(), self.right.sexpr()]

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class AUw(Expr):
    left: Expr
    right: Expr

    def sexpr(self):
        return ["AUw", self.left.sexpr(), self.right.sexpr()]

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class AG(Expr):
    arg: Expr

    def sexpr(self):
        return ["AG", self.arg.sexpr()]

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class AF(Expr):
    arg: Expr

    def sexpr(self):
        return ["AF", self.arg.sexpr()]

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class EF(Expr):
    arg: Expr

    def sexpr(self):
        return ["EF", self.arg.sexpr()]

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class EG(Expr):
    arg: Expr

    def sexpr(self):
        return ["EG", self.arg.sexpr()]

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class LeadsToWeak(Expr):
    """``f ↝ g``, i.e. A[(f ⟹ AF g) U_w g]."""

    left: Expr
    right: Expr

    def sexpr(self):
        return ["leads-weak", self.left.sexpr(), self.right.sexpr()]

    def expand(self) -> Expr:
        return AUw(implies(self.left, AF(self.right)), self.right)

    def children(self):
        return (self.expand(),)


@dataclass(frozen=True)
class LeadsTo(Expr):
    """``f ⇝ g``, i.e. AG[f ⟹ AF g]."""

    left: Expr
    right: Expr

    def sexpr(self):
        return ["leads", self.left.sexpr(), self.right.sexpr()]

    def expand(self) -> Expr:
        return AG(implies(self.left, AF(self.right)))

    def children(self):
        return (self.expand(),)


TEMPORAL = (AX, EX, AU, AUw, AG, AF, EF, EG, LeadsToWeak, LeadsTo)


def is_propositional(f: Expr) -> bool:
    if isinstance(f, TEMPORAL):
        return False
    return all(is_propositional(c) for c in f.children())


def neg(f: Expr) -> Expr:
    """Negation pushed down to the atoms of a propositional formula."""
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, (Prop, VarEq)):
        return Not(f)
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, And):
        return Or(*(neg(a) for a in f.args))
    if isinstance(f, Or):
        return And(*(neg(a) for a in f.args))
    raise InputError(f"cannot negate temporal formula {f}")


def implies(f: Expr, g: Expr) -> Expr:
    return Or(neg(f), g)


def iff(f: Expr, g: Expr) -> Expr:
    return And(implies(f, g), implies(g, f))


def is_actl(f: Expr) -> bool:
    """Membership in the universal fragment (negation only on atoms, no E)."""
    if isinstance(f, (EX, EF, EG)):
        return False
    if isinstance(f, Not):
        return isinstance(f.arg, (Prop, VarEq, Const))
    return all(is_actl(c) for c in f.children())


def closure(f: Expr) -> list[Expr]:
    """Subformulae of ``f`` (sugar expanded), children before parents."""
    out: list[Expr] = []
    seen: set[Expr] = set()

    def visit(g: Expr):
        if g in seen:
            return
        for c in g.children():
            visit(c)
        seen.add(g)
        out.append(g)

    visit(f)
    return out


def parse_formula(text_or_tree) -> Expr:
    tree = sexpr.parse(text_or_tree) if isinstance(text_or_tree, str) else text_or_tree
    return _formula(tree)


_UNARY = {"AG": AG, "AF": AF, "EF": EF, "EG": EG}
_BINARY = {"AU": AU, "AUw": AUw, "leads-weak": LeadsToWeak, "leads": LeadsTo}


def _formula(t) -> Expr:
    if isinstance(t, list) and t:
        head, *rest = t
        if head in _UNARY and len(rest) == 1:
            return _UNARY[head](_formula(rest[0]))
        if head in _BINARY and len(rest) == 2:
            return _BINARY[head](_formula(rest[0]), _formula(rest[1]))
        if head in ("AX", "EX"):
            cls = AX if head == "AX" else EX
            if len(rest) == 2 and isinstance(rest[0], str):
                return cls(rest[0], _formula(rest[1]))
            if len(rest) == 1:
                return cls(None, _formula(rest[0]))
        if head == "and" and rest:
            return And(*(_formula(x) for x in rest))
        if head == "or" and rest:
            return Or(*(_formula(x) for x in rest))
        if head == "not" and len(rest) == 1:
            return Not(_formula(rest[0]))
        if head == "implies" and len(rest) == 2:
            return implies(_formula(rest[0]), _formula(rest[1]))
    return _guard_from_tree(t)


# ---------------------------------------------------------------------------
# structures

CREATE = "CREATE"


class Structure:
    """A finite labelled transition structure.

    ``states`` are arbitrary hashable objects exposing ``truth(owner, name)``
    and ``value(var)``; transitions carry the pid of the mover (or CREATE).
    """

    def __init__(self, states: Sequence[Any], initials: Iterable[Any],
                 transitions: Iterable[tuple[Any, Any, Any]],
                 aps: Iterable[AtomicProp] = (), variables: Iterable[str] = ()):
        self.states = list(states)
        self.index = {s: k for k, s in enumerate(self.states)}
        self.initials = sorted({self.index[s] for s in initials})
        trans = sorted({(self.index[a], lab, self.index[b]) for a, lab, b in transitions},
                       key=lambda t: (t[0], str(t[1]), t[2]))
        self.labels = sorted({lab for _, lab, _ in trans}, key=str)
        code = {lab: k for k, lab in enumerate(self.labels)}
        n = len(trans)
        self.src = np.fromiter((t[0] for t in trans), dtype=np.int64, count=n)
        self.dst = np.fromiter((t[2] for t in trans), dtype=np.int64, count=n)
        self.lab = np.fromiter((code[t[1]] for t in trans), dtype=np.int64, count=n)
        self.aps = frozenset(aps)
        self.variables = frozenset(variables)
        self._leaf_cache: dict[Expr, np.ndarray] = {}
        self.has_succ = np.zeros(len(self.states), dtype=bool)
        self.has_succ[self.src] = True

    @property
    def n(self) -> int:
        return len(self.states)

    def transitions(self):
        for a, l, b in zip(self.src, self.lab, self.dst):
            yield self.states[a], self.labels[l], self.states[b]

    def successors(self, k: int) -> list[tuple[Any, int]]:
        sel = self.src == k
        return [(self.labels[l], int(b)) for l, b in zip(self.lab[sel], self.dst[sel])]

    def label_mask(self, pid) -> np.ndarray:
        if pid is None:
            return np.ones(len(self.src), dtype=bool)
        if pid not in self.labels:
            return np.zeros(len(self.src), dtype=bool)
        return self.lab == self.labels.index(pid)

    def leaf(self, e: Expr) -> np.ndarray:
        """Truth vector of a propositional formula."""
        if e not in self._leaf_cache:
            if self.aps or self.variables:
                props, vars_ = _symbols(e)
                bad = [str(p) for p in props if p not in self.aps] + [v for v in vars_ if v not in self.variables]
                if bad:
                    raise ForeignSymbol(f"formula mentions {bad} not in the structure")
            self._leaf_cache[e] = np.fromiter(
                (evaluate(e, s.truth, s.value) for s in self.states), dtype=bool, count=self.n)
        return self._leaf_cache[e]

    def mask_of(self, states: Iterable[Any]) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        for s in states:
            m[self.index[s]] = True
        return m

    def graph(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(range(self.n))
        for a, l, b in zip(self.src, self.lab, self.dst):
            g.add_edge(int(a), int(b), label=self.labels[l])
        return g


def _symbols(e: Expr):
    props, vars_ = set(), set()
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Prop):
            props.add(x.atom)
        elif isinstance(x, VarEq):
            vars_.add(x.var)
        else:
            stack.extend(x.children())
    return props, vars_


# ---------------------------------------------------------------------------
# fairness


class GF:
    """Positive boolean combinations of "infinitely often" atoms."""

    def holds(self, states: np.ndarray, labels: set) -> bool:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GFState(GF):
    """Infinitely often in a state satisfying ``mask``."""

    mask: Any

    def holds(self, states, labels):
        return bool(np.any(self.mask[states]))


@dataclass(frozen=True)
class GFMove(GF):
    """Infinitely often a transition by one of ``pids``."""

    pids: frozenset

    def holds(self, states, labels):
        return bool(labels & self.pids)


@dataclass(frozen=True)
class AnyOf(GF):
    parts: tuple

    def holds(self, states, labels):
        return any(p.holds(states, labels) for p in self.parts)


@dataclass(frozen=True)
class AllOf(GF):
    parts: tuple

    def holds(self, states, labels):
        return all(p.holds(states, labels) for p in self.parts)


# ---------------------------------------------------------------------------
# labelling


class Labeling:
    def __init__(self, m: Structure, masks: dict[Expr, np.ndarray]):
        self.structure = m
        self.masks = masks

    def mask(self, f: Expr) -> np.ndarray:
        return self.masks[f]

    def __getitem__(self, f: Expr) -> frozenset:
        return frozenset(self.structure.states[k] for k in np.flatnonzero(self.masks[f]))

    def __contains__(self, f: Expr) -> bool:
        return f in self.masks

    def keys(self):
        return self.masks.keys()

    def holds_initially(self, f: Expr) -> bool:
        return bool(np.all(self.masks[f][self.structure.initials]))

    def failing_initial(self, f: Expr):
        for k in self.structure.initials:
            if not self.masks[f][k]:
                return self.structure.states[k]
        return None


class _Engine:
    def __init__(self, m: Structure, fairness: Sequence[GF] | None):
        self.m = m
        self.fairness = tuple(fairness) if fairness else None
        self._fair = None

    # plain operators -------------------------------------------------------
    def ex(self, z, pid=None):
        sel = self.m.label_mask(pid) & z[self.m.dst]
        out = np.zeros(self.m.n, dtype=bool)
        out[self.m.src[sel]] = True
        return out

    def ax(self, z, pid=None):
        sel = self.m.label_mask(pid) & ~z[self.m.dst]
        out = np.ones(self.m.n, dtype=bool)
        out[self.m.src[sel]] = False
        return out

    def au(self, f, g):
        z = g.copy()
        base = f & self.m.has_succ
        while True:
            nz = g | (base & self.ax(z))
            if np.array_equal(nz, z):
                return z
            z = nz

    def auw(self, f, g):
        z = f | g
        while True:
            nz = g | (f & self.ax(z))
            if np.array_equal(nz, z):
                return z
            z = nz

    def eu(self, f, g):
        z = g.copy()
        while True:
            nz = z | (f & self.ex(z))
            if np.array_equal(nz, z):
                return z
            z = nz

    def eg(self, f):
        z = f.copy()
        dead = ~self.m.has_succ
        while True:
            nz = f & (self.ex(z) | dead)
            if np.array_equal(nz, z):
                return z
            z = nz

    # fair operators ----------------------------------------------------------
    def eg_fair(self, f):
        m = self.m
        dead = ~m.has_succ
        seeds = f & dead
        sel = f[m.src] & f[m.dst]
        if np.any(sel):
            s, d, lab = m.src[sel], m.dst[sel], m.lab[sel]
            g = csr_matrix((np.ones(len(s)), (s, d)), shape=(m.n, m.n))
            _, comp = connected_components(g, directed=True, connection="strong")
            internal = comp[s] == comp[d]
            for c in np.unique(comp[s[internal]]):
                members = np.flatnonzero((comp == c) & f)
                edge_sel = internal & (comp[s] == c)
                labels = {m.labels[x] for x in np.unique(lab[edge_sel])}
                if all(con.holds(members, labels) for con in self.fairness):
                    seeds[members] = True
        return self.eu(f, seeds)

    @property
    def fair(self):
        if self._fair is None:
            self._fair = self.eg_fair(np.ones(self.m.n, dtype=bool))
        return self._fair

    # dispatch ----------------------------------------------------------------
    def label(self, f: Expr, masks: dict):
        m = self.m
        if f in masks:
            return masks[f]
        if not isinstance(f, TEMPORAL) and is_propositional(f):
            r = m.leaf(f)
        elif isinstance(f, Not):
            r = ~self.label(f.arg, masks)
        elif isinstance(f, And):
            r = np.ones(m.n, dtype=bool)
            for a in f.args:
                r = r & self.label(a, masks)
        elif isinstance(f, Or):
            r = np.zeros(m.n, dtype=bool)
            for a in f.args:
                r = r | self.label(a, masks)
        elif isinstance(f, (LeadsTo, LeadsToWeak)):
            r = self.label(f.expand(), masks)
        elif self.fairness is None:
            r = self._plain(f, masks)
        else:
            r = self._fair_op(f, masks)
        masks[f] = r
        return r

    def _plain(self, f, masks):
        if isinstance(f, AX):
            return self.ax(self.label(f.arg, masks), f.pid)
        if isinstance(f, EX):
            return self.ex(self.label(f.arg, masks), f.pid)
        if isinstance(f, AU):
            return self.au(self.label(f.left, masks), self.label(f.right, masks))
        if isinstance(f, AUw):
            return self.auw(self.label(f.left, masks), self.label(f.right, masks))
        if isinstance(f, AG):
            return self.auw(self.label(f.arg, masks), np.zeros(self.m.n, dtype=bool))
        if isinstance(f, AF):
            return self.au(np.ones(self.m.n, dtype=bool), self.label(f.arg, masks))
        if isinstance(f, EF):
            return self.eu(np.ones(self.m.n, dtype=bool), self.label(f.arg, masks))
        if isinstance(f, EG):
            return self.eg(self.label(f.arg, masks))
        raise TypeError(f"unsupported formula {f!r}")

    def _fair_op(self, f, masks):
        fair = self.fair
        if isinstance(f, EX):
            return self.ex(self.label(f.arg, masks) & fair, f.pid)
        if isinstance(f, AX):
            return ~self.ex(~self.label(f.arg, masks) & fair, f.pid)
        if isinstance(f, EF):
            return self.eu(np.ones(self.m.n, dtype=bool), self.label(f.arg, masks) & fair)
        if isinstance(f, EG):
            return self.eg_fair(self.label(f.arg, masks))
        if isinstance(f, AG):
            return ~self.eu(np.ones(self.m.n, dtype=bool), ~self.label(f.arg, masks) & fair)
        if isinstance(f, AF):
            return ~self.eg_fair(~self.label(f.arg, masks))
        if isinstance(f, (AU, AUw)):
            a, b = self.label(f.left, masks), self.label(f.right, masks)
            bad = self.eu(~b, ~a & ~b & fair)
            if isinstance(f, AU):
                bad = bad | self.eg_fair(~b)
            return ~bad
        raise TypeError(f"unsupported formula {f!r}")


def check(m: Structure, f: Expr, fairness: Sequence[GF] | None = None) -> Labeling:
    """Label every member of CL(f) with the states satisfying it."""
    eng = _Engine(m, fairness)
    masks: dict[Expr, np.ndarray] = {}
    for g in closure(f):
        eng.label(g, masks)
    return Labeling(m, masks)


def holds(m: Structure, f: Expr, fairness: Sequence[GF] | None = None) -> bool:
    """True iff ``f`` holds in every initial state."""
    return check(m, f, fairness).holds_initially(f)


def fair_states(m: Structure, fairness: Sequence[GF]) -> np.ndarray:
    return _Engine(m, fairness).fair


def reachable_mask(m: Structure, sources: Iterable[int] | None = None) -> np.ndarray:
    z = np.zeros(m.n, dtype=bool)
    z[list(m.initials if sources is None else sources)] = True
    while True:
        out = z.copy()
        out[m.dst[z[m.src]]] = True
        if np.array_equal(out, z):
            return z
        z = out


# ---------------------------------------------------------------------------
# derived predicates on pair-programs


@dataclass
class CheckResult:
    ok: bool
    witness: Any = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def check_spec(pp, spec: Expr | None = None, structure: Structure | None = None) -> CheckResult:
    """Does ``M_ij, S⁰_ij ⊨ spec``?  The witness is a failing initial state."""
    from .structure import build_pair_structure

    spec = pp.spec if spec is None else spec
    m = structure or build_pair_structure(pp)
    lab = check(m, spec)
    bad = lab.failing_initial(spec)
    return CheckResult(bad is None, bad)


def _peer_disabled(pp, h: str, state) -> list:
    """Arcs of process ``h`` starting at its local state in ``state`` whose guard is false."""
    sk = pp.skeleton(h)
    other = pp.other(h)
    s_h = state.local(h)
    peer = state.local(other)
    out = []
    for a in sk.out(s_h):
        if not any(_branch_true(b, peer, state.shared) for b in a.cmd.branches):
            out.append(a)
    return out


def _branch_true(b, peer, shared) -> bool:
    from .skeleton import eval_guard
    return eval_guard(b.guard, peer, shared)


def compute_blk(pp, i: str, structure: Structure | None = None) -> frozenset:
    """The i-states that are sometimes-blocking in M_ij."""
    from .structure import build_pair_structure

    m = structure or build_pair_structure(pp)
    j = pp.other(i)
    out = set()
    for s in m.states:
        if _peer_disabled(pp, j, s):
            out.add(s.local(i))
    return frozenset(out)


def blk_formula(states: Iterable) -> Expr:
    fs = [s.formula() for s in sorted(states)]
    return Or(*fs) if fs else FALSE


def compute_pnd(pp, spec: Expr | None = None, structure: Structure | None = None) -> frozenset:
    """Pair-states with a pending eventuality: some f in CL(spec) with ¬f ∧ AF f."""
    from .structure import build_pair_structure

    spec = pp.spec if spec is None else spec
    m = structure or build_pair_structure(pp)
    eng = _Engine(m, None)
    masks: dict = {}
    pending = np.zeros(m.n, dtype=bool)
    for g in closure(spec):
        z = eng.label(g, masks)
        pending |= ~z & eng.au(np.ones(m.n, dtype=bool), z)
    return frozenset(m.states[k] for k in np.flatnonzero(pending))


def tstab_formula(state, guard: Expr) -> Expr:
    at = And(state.formula(), guard)
    return AG(implies(at, AUw(at, neg(state.formula()))))


def check_tstab(pp, structure: Structure | None = None) -> CheckResult:
    """Temporary stability of every branch guard of both skeletons.

    The witness is ``(owner, arc, branch)`` of the first unstable guard.
    """
    from .structure import build_pair_structure

    m = structure or build_pair_structure(pp)
    for h in pp.pids:
        for a in pp.skeleton(h).arcs:
            for b in a.cmd.branches:
                f = tstab_formula(a.src, b.guard)
                if not check(m, f).holds_initially(f):
                    return CheckResult(False, (h, a, b), f"guard {b.guard} of {a.src!r}->{a.dst!r} is not stable")
    return CheckResult(True)


def check_liveness_condition(pp, i: str, structure: Structure | None = None) -> CheckResult:
    """No cycle of i-transitions over reachable states passes a state where some j-move is disabled.

    The witness is a list of pair-states forming such a cycle.
    """
    from .structure import build_pair_structure

    m = structure or build_pair_structure(pp)
    j = pp.other(i)
    reach = reachable_mask(m)
    sel = (m.label_mask(i)) & reach[m.src] & reach[m.dst]
    g = nx.DiGraph()
    g.add_edges_from(zip(m.src[sel].tolist(), m.dst[sel].tolist()))
    for comp in sorted(nx.strongly_connected_components(g), key=min):
        nodes = sorted(comp)
        if len(nodes) == 1 and not g.has_edge(nodes[0], nodes[0]):
            continue
        for k in nodes:
            if _peer_disabled(pp, j, m.states[k]):
                sub = g.subgraph(comp)
                if sub.has_edge(k, k):
                    cyc = [k]
                else:
                    back = min(sub.predecessors(k))
                    cyc = nx.shortest_path(sub, k, back)
                return CheckResult(False, [m.states[x] for x in cyc],
                                   f"{i} can cycle while a move of {j} is disabled")
    return CheckResult(True)


def check_deadlock_free(m: Structure) -> CheckResult:
    """AG EX true over the reachable part; witness is a reachable deadlock state."""
    reach = reachable_mask(m)
    dead = np.flatnonzero(reach & ~m.has_succ)
    if len(dead):
        return CheckResult(False, m.states[int(dead[0])])
    return CheckResult(True)


def oracle_paths(m: Structure, start: int, max_len: int | None = None) -> Iterable[tuple[list[int], int | None]]:
    """Enumerate fullpath representatives from ``start``.

    Yields ``(prefix, loop_index)``: a simple path optionally closed by a back
    edge to ``prefix[loop_index]`` (a lasso), or a maximal finite path ending
    in a deadlock state (``loop_index`` is None).  Only the unlabelled graph is
    used; this is a brute-force oracle for small structures.
    """
    succ = [sorted({int(b) for b in m.dst[m.src == k]}) for k in range(m.n)]
    limit = max_len or 2 * m.n

    def walk(path, pos):
        last = path[-1]
        if not succ[last]:
            yield list(path), None
            return
        for b in succ[last]:
            if b in pos:
                yield list(path), pos[b]
            elif len(path) < limit:
                pos[b] = len(path)
                path.append(b)
                yield from walk(path, pos)
                path.pop()
                del pos[b]

    yield from walk([start], {start: 0})


def path_eval(m: Structure, f: Expr, prefix: list[int], loop: int | None, masks: Callable[[Expr], np.ndarray]) -> bool:
    """Evaluate an A-path operator's path formula on one lasso/finite path.

    ``masks`` returns the truth vector of the operand state formulae.
    """
    seq = prefix if loop is None else prefix + prefix[loop:]  # one unrolling covers every position
    if isinstance(f, (AU, AUw, AF, AG)):
        if isinstance(f, AF):
            left, right = np.ones(m.n, bool), masks(f.arg)
        elif isinstance(f, AG):
            left, right = masks(f.arg), np.zeros(m.n, bool)
        else:
            left, right = masks(f.left), masks(f.right)
        for k in seq:
            if right[k]:
                return True
            if not left[k]:
                return False
        return isinstance(f, (AUw, AG))
    raise TypeError(f)
