"""Ring two-phase commit: coordinator 0 and participants 1..n-1.

Each process's guard toward a neighbor depends only on the role that
neighbor plays (predecessor or successor on the ring); when one neighbor
plays both roles (n = 2) the two role guards are conjoined.

All guards are temporarily stable, and terminal self-loops wait until both
ring neighbors have decided, so a decided process never spins while a
neighbor that still needs to move is blocked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..mc import AF, AG, EX, AU, LeadsTo, LeadsToWeak, implies
from ..skeleton import (
    TRUE,
    And,
    Arc,
    Expr,
    GuardedCommand,
    Not,
    Or,
    Prop,
    StateSpace,
    SyncSkeleton,
    conj,
)
from ..structure import PairProgram, StaticProgram, pair

PARTICIPANT_STATES = ("st", "sb", "cm", "ab")
COORDINATOR_STATES = ("st", "pr", "cm", "ab")
PARTICIPANT_ARCS = (("st", "sb"), ("st", "ab"), ("sb", "cm"), ("sb", "ab"), ("cm", "cm"), ("ab", "ab"))
COORDINATOR_ARCS = (("st", "pr"), ("pr", "cm"), ("pr", "ab"), ("cm", "cm"), ("ab", "ab"))


def pid(i: int) -> str:
    return str(i)


def p(name: str, i: int) -> Prop:
    return Prop(pid(i), name)


def term(i: int) -> Expr:
    return Or(p("cm", i), p("ab", i))


def _space(i: int) -> StateSpace:
    names = COORDINATOR_STATES if i == 0 else PARTICIPANT_STATES
    sp = StateSpace(pid(i), names)
    for s in names:
        sp.state(s)
    return sp


def submitted(k: int) -> Expr:
    """What "k has passed the vote on" means to its successor."""
    return p("pr", 0) if k == 0 else p("sb", k)


def _role_guard(i: int, arc: tuple[str, str], k: int, role: str) -> Expr:
    """Guard of arc of process i toward neighbor k, where k is i's ``role``."""
    src, dst = arc
    if src == dst:
        return term(k)
    if i == 0:
        if role == "pred":  # k = n-1: the coordinator decides on the last vote
            return {("pr", "cm"): p("sb", k), ("pr", "ab"): p("ab", k)}.get(arc, TRUE)
        return {("pr", "cm"): p("sb", k), ("pr", "ab"): Not(p("st", k))}.get(arc, TRUE)
    if role == "pred":
        return {("st", "sb"): submitted(k), ("sb", "cm"): p("cm", k), ("sb", "ab"): p("ab", k)}.get(arc, TRUE)
    if k == 0:  # last participant toward the coordinator
        return {("sb", "cm"): p("cm", 0), ("sb", "ab"): p("ab", 0)}.get(arc, TRUE)
    return {("sb", "cm"): p("sb", k), ("sb", "ab"): Not(p("st", k))}.get(arc, TRUE)


def _skeleton(n: int, i: int, k: int, spaces) -> SyncSkeleton:
    pred, succ = (i - 1) % n, (i + 1) % n
    roles = [r for r, who in (("pred", pred), ("succ", succ)) if who == k]
    arcs_spec = COORDINATOR_ARCS if i == 0 else PARTICIPANT_ARCS
    sp = spaces[i]
    arcs = []
    for arc in arcs_spec:
        g = conj(*(_role_guard(i, arc, k, r) for r in roles))
        arcs.append(Arc(sp[arc[0]], GuardedCommand.simple(g), sp[arc[1]]))
    return SyncSkeleton(pid(i), pid(k), sp.states(), [sp["st"]], arcs)


def pair_specs(n: int, a: int, b: int) -> list[tuple[str, Expr]]:
    """Named pair-formulae for the ring pair {a, b} with a = b - 1 (mod n)."""
    out: list[tuple[str, Expr]] = []
    for i in sorted({a, b}):
        out.append((f"7:excl_{i}", AG(Or(Not(p("cm", i)), Not(p("ab", i))))))
        out.append((f"7:stable_cm_{i}", AG(implies(p("cm", i), AG(p("cm", i))))))
    if b == 0:
        out.append(("1", LeadsToWeak(p("cm", 0), p("sb", a))))
        out.append(("decide", AF(Or(p("cm", 0), p("ab", 0)))))
        return out
    i = b
    if i >= 2:
        out.append(("2", LeadsToWeak(p("sb", i), p("sb", i - 1))))
    out.append(("4", LeadsToWeak(p("cm", i), p("cm", i - 1))))
    out.append(("6", LeadsTo(And(p("cm", i - 1), p("sb", i)), p("cm", i))))
    out.append(("8", AG(implies(p("sb", i), AU(p("sb", i), And(p("sb", i), Or(p("cm", i - 1), p("ab", i - 1))))))))
    out.append(("abort", LeadsToWeak(p("ab", i - 1), p("ab", i))))
    out.append(("ex-abort", AG(implies(p("st", i), EX(pid(i), p("ab", i))))))
    if i - 1 >= 1 and i - 1 < n - 1:
        k = i - 1
        out.append(("9", LeadsToWeak(p("cm", k), AU(p("sb", k + 1), And(p("sb", k + 1), p("cm", k))))))
    return out


@dataclass
class TwoPhase:
    n: int
    program: StaticProgram
    specs: dict[frozenset, list[tuple[str, Expr]]] = field(default_factory=dict)


def gen_two_phase(n: int) -> TwoPhase:
    """The ring two-phase commit program of size ``n`` with its pair-specs."""
    if n < 2:
        raise ValueError("a ring needs n >= 2")
    spaces = {i: _space(i) for i in range(n)}
    progs = {}
    specs = {}
    for b in range(n):
        a = (b - 1) % n
        key = pair(pid(a), pid(b))
        if key in progs:  # n = 2: the two ring edges are one pair
            specs[key] += [s for s in pair_specs(n, a, b) if s not in specs[key]]
            continue
        specs[key] = pair_specs(n, a, b)
        progs[key] = (a, b)
    pps = []
    for key, (a, b) in progs.items():
        spec = And(*(f for _, f in specs[key]))
        pps.append(PairProgram(_skeleton(n, a, b, spaces), _skeleton(n, b, a, spaces), spec=spec,
                               name=f"twophase({a},{b})"))
    return TwoPhase(n, StaticProgram(pps), specs)


def product_properties(n: int) -> dict[str, tuple[Expr, bool]]:
    """Whole-ring properties for the product oracle: name -> (formula, needs fairness).

    Plain-CTL checks quantify over every fullpath; the liveness entries
    quantify over weakly fair fullpaths, since a decided process may
    otherwise spin on its terminal self-loop forever.
    """
    props: dict[str, tuple[Expr, bool]] = {"deadlock-free": (AG(EX(None, TRUE)), False)}
    every_cm = And(*(p("cm", i) for i in range(1, n)))
    every_ab = And(*(p("ab", i) for i in range(1, n)))
    props["commit-all"] = (LeadsToWeak(p("cm", 0), every_cm), True)
    props["abort-all"] = (LeadsToWeak(p("ab", 0), every_ab), True)
    for i in range(1, n):
        props[f"commit-safe_{i}"] = (AG(Not(And(p("cm", 0), p("ab", i)))), False)
        props[f"commit-follows_{i}"] = (AG(implies(p("cm", 0), AF(p("cm", i)))), True)
        props[f"abort-follows_{i}"] = (AG(implies(p("ab", 0), AF(p("ab", i)))), True)
        props[f"unilateral_{i}"] = (AG(implies(p("st", i), EX(pid(i), p("ab", i)))), False)
    props["decide"] = (AF(Or(p("cm", 0), p("ab", 0))), True)
    return props


def literal_commit_invariant(n: int) -> dict[str, Expr]:
    """The state-invariant reading AG(cm_0 ⟹ cm_i); violated while the decision is relayed."""
    return {f"cm0-implies-cm{i}": AG(implies(p("cm", 0), p("cm", i))) for i in range(1, n)}


def dynamic_spec(n: int):
    """The ring with every pair in force from the start and no creates."""
    from ..dynamic import DynamicSpec

    return DynamicSpec(list(gen_two_phase(n).program.pairs.values()), name=f"twophase({n})")


def trace_properties(n: int) -> dict[str, tuple[str, tuple]]:
    """Trace-checkable properties: safety of the decision, and its propagation to every participant."""
    props: dict[str, tuple[str, tuple]] = {}
    every_cm = And(*(p("cm", i) for i in range(1, n)))
    every_ab = And(*(p("ab", i) for i in range(1, n)))
    for i in range(n):
        props[f"excl_{i}"] = ("invariant", (Or(Not(p("cm", i)), Not(p("ab", i))),))
        props[f"cm-absorbs_{i}"] = ("absorbing", (p("cm", i),))
        props[f"ab-absorbs_{i}"] = ("absorbing", (p("ab", i),))
    for i in range(1, n):
        props[f"commit-safe_{i}"] = ("invariant", (Not(And(p("cm", 0), p("ab", i))),))
        props[f"cm-needs-cm0_{i}"] = ("precedence", (p("cm", 0), p("cm", i)))
    props["decide"] = ("eventually", (Or(p("cm", 0), p("ab", 0)),))
    props["commit-all"] = ("conditional", (p("cm", 0), every_cm))
    props["abort-all"] = ("conditional", (p("ab", 0), every_ab))
    return props
