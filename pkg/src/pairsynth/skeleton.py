"""Processes, local states, guarded commands and synchronization skeletons.

A local state is a total assignment over its owner's atomic propositions.
Guards are propositional expressions over the peer's propositions and the
pair's shared variables; bodies are parallel assignments of constants.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Callable, Union

import networkx as nx

from . import sexpr
from .errors import InputError, UnresolvedSymbol

Pid = str


@dataclass(frozen=True, order=True)
class AtomicProp:
    owner: Pid
    name: str

    def __str__(self) -> str:
        return f"{self.name}@{self.owner}"


@dataclass(frozen=True)
class LocalState:
    """A total assignment over ``aps``; only the true propositions are stored."""

    owner: Pid
    aps: frozenset[str]
    true: frozenset[str]
    name: str = field(default="", compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "aps", frozenset(self.aps))
        object.__setattr__(self, "true", frozenset(self.true))
        if not self.true <= self.aps:
            raise UnresolvedSymbol(f"{sorted(self.true - self.aps)} not propositions of {self.owner}")

    def value(self, prop: str) -> bool:
        if prop not in self.aps:
            raise UnresolvedSymbol(f"{prop} is not a proposition of {self.owner}")
        return prop in self.true

    def assignment(self) -> dict[str, bool]:
        return {p: p in self.true for p in sorted(self.aps)}

    def key(self):
        return (self.owner, tuple(sorted(self.true)))

    def __lt__(self, other: "LocalState") -> bool:
        return self.key() < other.key()

    def label(self) -> str:
        """The name if one was given, else the bracketed true-set."""
        return self.name or "[" + " ".join(sorted(self.true)) + "]"

    def formula(self) -> "Expr":
        """The propositional formula characterising this state."""
        lits = [Prop(self.owner, p) if p in self.true else Not(Prop(self.owner, p))
                for p in sorted(self.aps)]
        return And(*lits) if len(lits) != 1 else lits[0]

    def __repr__(self) -> str:
        return f"{self.owner}:{self.label()}"


class Valuation(Mapping):
    """Immutable, hashable map from shared-variable names to value tokens."""

    __slots__ = ("_items", "_d", "_h")

    def __init__(self, items: Union[Mapping, Iterable] = ()):
        d = dict(items)
        self._d = {str(k): str(v) for k, v in d.items()}
        self._items = tuple(sorted(self._d.items()))
        self._h = hash(self._items)

    def __getitem__(self, k):
        return self._d[k]

    def __iter__(self) -> Iterator[str]:
        return iter(k for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return self._h

    def __eq__(self, other) -> bool:
        if isinstance(other, Valuation):
            return self._items == other._items
        return isinstance(other, Mapping) and self._d == dict(other)

    def __lt__(self, other: "Valuation") -> bool:
        return self._items < other._items

    def items_tuple(self):
        return self._items

    def restrict(self, names: Iterable[str]) -> "Valuation":
        names = set(names)
        return Valuation((k, v) for k, v in self._items if k in names)

    def update(self, changes: Mapping) -> "Valuation":
        d = dict(self._d)
        d.update({str(k): str(v) for k, v in changes.items()})
        return Valuation(d)

    def __repr__(self) -> str:
        return "{" + ", ".join(f"{k}={v}" for k, v in self._items) + "}"


@dataclass(frozen=True)
class SharedVar:
    name: str
    pair: frozenset[Pid]
    domain: tuple[str, ...]
    initial: str

    def __post_init__(self):
        object.__setattr__(self, "pair", frozenset(self.pair))
        object.__setattr__(self, "domain", tuple(str(v) for v in self.domain))
        object.__setattr__(self, "initial", str(self.initial))
        if len(self.pair) != 2:
            raise InputError(f"shared variable {self.name} must belong to exactly two processes")
        if self.initial not in self.domain:
            raise InputError(f"initial value {self.initial} of {self.name} not in its domain")


# ---------------------------------------------------------------------------
# propositional expressions (guards, and the leaves of temporal formulae)


class Expr:
    """Base class for propositional expressions."""

    def sexpr(self):
        raise NotImplementedError

    def __str__(self) -> str:
        return sexpr.dump(self.sexpr())

    def children(self) -> tuple:
        return ()


@dataclass(frozen=True)
class Const(Expr):
    value: bool

    def sexpr(self):
        return "true" if self.value else "false"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class Prop(Expr):
    owner: Pid
    name: str

    def sexpr(self):
        return ["prop", self.owner, self.name]

    @property
    def atom(self) -> AtomicProp:
        return AtomicProp(self.owner, self.name)


@dataclass(frozen=True)
class VarEq(Expr):
    var: str
    value: str

    def __post_init__(self):
        object.__setattr__(self, "value", str(self.value))

    def sexpr(self):
        return ["eq", self.var, self.value]


@dataclass(frozen=True)
class Not(Expr):
    arg: Expr

    def sexpr(self):
        return ["not", self.arg.sexpr()]

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, init=False)
class And(Expr):
    args: tuple

    def __init__(self, *args):
        object.__setattr__(self, "args", tuple(args))

    def sexpr(self):
        return ["and", *(a.sexpr() for a in self.args)] if self.args else "true"

    def children(self):
        return self.args


@dataclass(frozen=True, init=False)
class Or(Expr):
    args: tuple

    def __init__(self, *args):
        object.__setattr__(self, "args", tuple(args))

    def sexpr(self):
        return ["or", *(a.sexpr() for a in self.args)] if self.args else "false"

    def children(self):
        return self.args


PROPOSITIONAL = (Const, Prop, VarEq, Not, And, Or)


def conj(*args: Expr) -> Expr:
    """And with trivial simplification of constants."""
    out = []
    for a in args:
        if a == TRUE:
            continue
        if a == FALSE:
            return FALSE
        out.append(a)
    if not out:
        return TRUE
    return out[0] if len(out) == 1 else And(*out)


def disj(*args: Expr) -> Expr:
    out = []
    for a in args:
        if a == FALSE:
            continue
        if a == TRUE:
            return TRUE
        out.append(a)
    if not out:
        return FALSE
    return out[0] if len(out) == 1 else Or(*out)


def evaluate(e: Expr, truth: Callable[[Pid, str], bool], value: Callable[[str], str]) -> bool:
    """Evaluate ``e`` given accessors for proposition truth and variable values."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Prop):
        return truth(e.owner, e.name)
    if isinstance(e, VarEq):
        return value(e.var) == e.value
    if isinstance(e, Not):
        return not evaluate(e.arg, truth, value)
    if isinstance(e, And):
        return all(evaluate(a, truth, value) for a in e.args)
    if isinstance(e, Or):
        return any(evaluate(a, truth, value) for a in e.args)
    raise TypeError(f"not a propositional expression: {e!r}")


def eval_guard(g: Expr, peer: LocalState, shared: Mapping) -> bool:
    """Evaluate a guard of P_i^j against the peer's local state and the pair's shared values."""

    def truth(owner, name):
        if owner != peer.owner:
            raise UnresolvedSymbol(f"guard references {name}@{owner}, peer is {peer.owner}")
        return peer.value(name)

    def value(var):
        try:
            return shared[var]
        except KeyError:
            raise UnresolvedSymbol(f"unknown shared variable {var}") from None

    return evaluate(g, truth, value)


def symbols(e: Expr) -> tuple[set[AtomicProp], set[str]]:
    """Propositions and variables mentioned in ``e``."""
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


def parse_guard(text_or_tree) -> Expr:
    tree = sexpr.parse(text_or_tree) if isinstance(text_or_tree, str) else text_or_tree
    return _guard_from_tree(tree)


def _guard_from_tree(t) -> Expr:
    if isinstance(t, str):
        if t == "true":
            return TRUE
        if t == "false":
            return FALSE
        raise InputError(f"unexpected atom {t!r} in guard")
    if not t:
        raise InputError("empty list in guard")
    head, *rest = t
    if head == "prop" and len(rest) == 2 and all(isinstance(x, str) for x in rest):
        return Prop(rest[0], rest[1])
    if head == "eq" and len(rest) == 2 and all(isinstance(x, str) for x in rest):
        return VarEq(rest[0], rest[1])
    if head == "not" and len(rest) == 1:
        return Not(_guard_from_tree(rest[0]))
    if head == "and" and rest:
        return And(*(_guard_from_tree(x) for x in rest))
    if head == "or" and rest:
        return Or(*(_guard_from_tree(x) for x in rest))
    raise InputError(f"malformed guard {sexpr.dump(t)}")


# ---------------------------------------------------------------------------
# bodies and guarded commands


@dataclass(frozen=True)
class Body:
    """Parallel assignment of constants to shared variables."""

    assign: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        items = [(str(k), str(v)) for k, v in (self.assign.items() if isinstance(self.assign, Mapping)
                                                else self.assign)]
        names = [k for k, _ in items]
        if len(set(names)) != len(names):
            raise InputError(f"variable assigned twice in body {items}")
        object.__setattr__(self, "assign", tuple(sorted(items)))

    @property
    def targets(self) -> frozenset[str]:
        return frozenset(k for k, _ in self.assign)

    def sexpr(self):
        return ["set", *([k, v] for k, v in self.assign)]

    def __str__(self) -> str:
        return sexpr.dump(self.sexpr())


EMPTY_BODY = Body()


def apply_body(a: Body, shared: Mapping) -> Valuation:
    missing = a.targets - set(shared)
    if missing:
        raise UnresolvedSymbol(f"body assigns unknown variables {sorted(missing)}")
    base = shared if isinstance(shared, Valuation) else Valuation(shared)
    return base.update(dict(a.assign)) if a.assign else base


def parse_body(text_or_tree) -> Body:
    tree = sexpr.parse(text_or_tree) if isinstance(text_or_tree, str) else text_or_tree
    if not isinstance(tree, list) or not tree or tree[0] != "set":
        raise InputError(f"malformed body {sexpr.dump(tree)}")
    pairs = []
    for item in tree[1:]:
        if not (isinstance(item, list) and len(item) == 2 and all(isinstance(x, str) for x in item)):
            raise InputError(f"malformed assignment {sexpr.dump(item)}")
        pairs.append((item[0], item[1]))
    return Body(tuple(pairs))


@dataclass(frozen=True)
class Branch:
    guard: Expr
    body: Body = EMPTY_BODY

    def sexpr(self):
        return [self.guard.sexpr(), self.body.sexpr()]

    def __str__(self) -> str:
        return sexpr.dump(self.sexpr())


@dataclass(frozen=True, init=False)
class GuardedCommand:
    """The disjunction of branches; branches are kept in canonical order."""

    branches: tuple[Branch, ...]

    def __init__(self, branches: Iterable):
        bs = [b if isinstance(b, Branch) else Branch(*b) for b in branches]
        if not bs:
            raise InputError("guarded command needs at least one branch")
        uniq = {str(b): b for b in bs}
        object.__setattr__(self, "branches", tuple(uniq[k] for k in sorted(uniq)))

    @classmethod
    def simple(cls, guard: Expr = TRUE, body: Body = EMPTY_BODY) -> "GuardedCommand":
        return cls([Branch(guard, body)])

    def guard(self) -> Expr:
        """Disjunction of the branch guards."""
        return disj(*(b.guard for b in self.branches))

    def plus(self, other: "GuardedCommand") -> "GuardedCommand":
        return GuardedCommand(self.branches + other.branches)

    def times(self, other: "GuardedCommand") -> "GuardedCommand":
        """Flattened conjunction of two commands toward the same neighbor."""
        out = []
        for a in self.branches:
            for b in other.branches:
                clash = {k for k, v in a.body.assign if dict(b.body.assign).get(k, v) != v}
                if clash:
                    continue
                out.append(Branch(conj(a.guard, b.guard), Body(dict(a.body.assign) | dict(b.body.assign))))
        return GuardedCommand(out or [Branch(FALSE)])

    def sexpr(self):
        return ["cmd", *(b.sexpr() for b in self.branches)]

    def __str__(self) -> str:
        return " + ".join(f"{b.guard} -> {b.body}" for b in self.branches)


def parse_command(text_or_tree) -> GuardedCommand:
    """Parse ``(cmd (G (set ...)) ...)``, a bare guard, or a list of branches."""
    tree = sexpr.parse(text_or_tree) if isinstance(text_or_tree, str) else text_or_tree
    if isinstance(tree, list) and tree and tree[0] == "cmd":
        branches = []
        for b in tree[1:]:
            if not (isinstance(b, list) and len(b) in (1, 2)):
                raise InputError(f"malformed branch {sexpr.dump(b)}")
            body = parse_body(b[1]) if len(b) == 2 else EMPTY_BODY
            branches.append(Branch(parse_guard(b[0]), body))
        return GuardedCommand(branches)
    return GuardedCommand.simple(parse_guard(tree))


# ---------------------------------------------------------------------------
# skeletons


@dataclass(frozen=True)
class Arc:
    src: LocalState
    cmd: GuardedCommand
    dst: LocalState


@dataclass(frozen=True)
class SyncSkeleton:
    """P_i^j: the local-state graph of ``owner`` as seen in its pair with ``peer``."""

    owner: Pid
    peer: Pid
    states: frozenset[LocalState]
    initials: frozenset[LocalState]
    arcs: tuple[Arc, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", frozenset(self.states))
        object.__setattr__(self, "initials", frozenset(self.initials))
        object.__setattr__(self, "arcs", tuple(sorted(self.arcs, key=lambda a: (a.src.key(), a.dst.key()))))

    def out(self, s: LocalState) -> list[Arc]:
        return [a for a in self.arcs if a.src == s]

    def arc(self, src: LocalState, dst: LocalState) -> Arc | None:
        for a in self.arcs:
            if a.src == src and a.dst == dst:
                return a
        return None

    def state(self, name: str) -> LocalState:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)


# violations reported by validate_skeleton

@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.where}){': ' + self.detail if self.detail else ''}"


def DeadEnd(state) -> Violation:
    return Violation("DeadEnd", repr(state))


def DuplicateArc(src, dst) -> Violation:
    return Violation("DuplicateArc", f"{src!r}->{dst!r}")


def validate_skeleton(sk: SyncSkeleton, shared: Iterable[SharedVar] | None = None,
                      peer_aps: Iterable[str] | None = None) -> list[Violation]:
    """Check the skeleton invariants; an empty list means the skeleton is valid.

    ``shared`` and ``peer_aps`` enable the symbol checks when supplied.
    """
    out: list[Violation] = []
    if sk.owner == sk.peer:
        out.append(Violation("SelfPair", sk.owner))
    if not sk.initials:
        out.append(Violation("NoInitialState", sk.owner))
    for s in sorted(sk.states):
        if s.owner != sk.owner:
            out.append(Violation("ForeignState", repr(s)))
    for s in sorted(sk.initials - sk.states):
        out.append(Violation("UnknownInitial", repr(s)))
    seen = set()
    for a in sk.arcs:
        if a.src not in sk.states or a.dst not in sk.states:
            out.append(Violation("UnknownState", f"{a.src!r}->{a.dst!r}"))
        key = (a.src, a.dst)
        if key in seen:
            out.append(DuplicateArc(a.src, a.dst))
        seen.add(key)
    sources = {a.src for a in sk.arcs}
    for s in sorted(sk.states - sources):
        out.append(DeadEnd(s))
    vars_by_name = None
    if shared is not None:
        vars_by_name = {v.name: v for v in shared}
    peer_aps = set(peer_aps) if peer_aps is not None else None
    pair = frozenset((sk.owner, sk.peer))
    for a in sk.arcs:
        where = f"{a.src!r}->{a.dst!r}"
        for b in a.cmd.branches:
            props, vars_ = symbols(b.guard)
            for p in sorted(props):
                if p.owner != sk.peer or (peer_aps is not None and p.name not in peer_aps):
                    out.append(Violation("ForeignReference", where, str(p)))
            for v in sorted(vars_ | b.body.targets):
                if vars_by_name is not None and (v not in vars_by_name or vars_by_name[v].pair != pair):
                    out.append(Violation("ForeignReference", where, v))
            if vars_by_name is not None:
                for k, val in b.body.assign:
                    if k in vars_by_name and val not in vars_by_name[k].domain:
                        out.append(Violation("ValueOutOfDomain", where, f"{k}={val}"))
                stack = [b.guard]
                while stack:
                    x = stack.pop()
                    if isinstance(x, VarEq) and x.var in vars_by_name and x.value not in vars_by_name[x.var].domain:
                        out.append(Violation("ValueOutOfDomain", where, f"{x.var}={x.value}"))
                    stack.extend(x.children())
    return out


def strip_labels(sk: SyncSkeleton) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(sk.states)
    g.add_edges_from((a.src, a.dst) for a in sk.arcs)
    return g


def same_local_structure(a: SyncSkeleton, b: SyncSkeleton) -> bool:
    ga, gb = strip_labels(a), strip_labels(b)
    return set(ga.nodes) == set(gb.nodes) and set(ga.edges) == set(gb.edges)


class StateSpace:
    """Helper for building the local states of one process by name."""

    def __init__(self, owner: Pid, aps: Iterable[str]):
        self.owner = owner
        self.aps = frozenset(aps)
        self._by_name: dict[str, LocalState] = {}

    def state(self, name: str, true: Iterable[str] | None = None) -> LocalState:
        if name not in self._by_name:
            t = frozenset(true) if true is not None else frozenset([name])
            self._by_name[name] = LocalState(self.owner, self.aps, t, name)
        return self._by_name[name]

    def __getitem__(self, name: str) -> LocalState:
        return self._by_name[name]

    def states(self) -> list[LocalState]:
        return list(self._by_name.values())
