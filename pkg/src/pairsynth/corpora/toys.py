"""Small constructed systems: deadlock counterexamples, random toys and mutants.

The counterexamples are built to fail the wait-for-graph conditions; the
mutants each break one gate (TSTAB or the liveness condition) at a known arc
of an otherwise correct corpus program.
"""

from __future__ import annotations

import random
from dataclasses import replace

from ..skeleton import (
    TRUE,
    Arc,
    Body,
    Branch,
    Expr,
    GuardedCommand,
    Not,
    Prop,
    SharedVar,
    StateSpace,
    SyncSkeleton,
    VarEq,
)
from ..structure import PairProgram, StaticProgram


def _spaces(pids, names=("a", "b")) -> dict[str, StateSpace]:
    out = {}
    for h in pids:
        sp = StateSpace(h, names)
        for s in names:
            sp.state(s)
        out[h] = sp
    return out


def _sk(sp: StateSpace, owner: str, peer: str, arcs: list[tuple[str, str, Expr]], init=("a",)) -> SyncSkeleton:
    return SyncSkeleton(owner, peer, sp.states(), [sp[s] for s in init],
                        [Arc(sp[a], GuardedCommand.simple(g), sp[b]) for a, b, g in arcs])


def mutual_wait() -> StaticProgram:
    """Two processes whose only first move waits for the other to have moved; W(s0) is a supercycle."""
    sp = _spaces(["p", "q"])
    arcs = lambda peer: [("a", "b", Prop(peer, "b")), ("b", "b", TRUE)]
    return StaticProgram([PairProgram(_sk(sp["p"], "p", "q", arcs("q")), _sk(sp["q"], "q", "p", arcs("p")),
                                      name="mutual-wait")])


def ring_wait(n: int = 3) -> StaticProgram:
    """n processes on a ring, each waiting for its successor to have moved."""
    pids = [f"w{k}" for k in range(n)]
    sp = _spaces(pids)
    pps = []
    for k in range(n):
        i, j = pids[k], pids[(k + 1) % n]

        def arcs(owner, other):
            # only the successor's move matters
            succ = pids[(pids.index(owner) + 1) % n]
            g = Prop(other, "b") if other == succ else TRUE
            return [("a", "b", g), ("b", "b", TRUE)]

        pps.append(PairProgram(_sk(sp[i], i, j, arcs(i, j)), _sk(sp[j], j, i, arcs(j, i)), name=f"ring({i},{j})"))
    return StaticProgram(pps)


def trap() -> StaticProgram:
    """W(s0) is supercycle-free, but p's first move leads into a mutual wait.

    p: a -> b unguarded, b -> c waits for q.b.  q: a -> b waits for p.a.
    After p moves, q waits on p (p left a) and p waits on q.
    """
    sp = _spaces(["p", "q"], ("a", "b", "c"))
    p_arcs = [("a", "b", TRUE), ("b", "c", Prop("q", "b")), ("c", "c", TRUE)]
    q_arcs = [("a", "b", Prop("p", "a")), ("b", "c", TRUE), ("c", "c", TRUE)]
    return StaticProgram([PairProgram(_sk(sp["p"], "p", "q", p_arcs), _sk(sp["q"], "q", "p", q_arcs), name="trap")])


def deadlocked_create():
    """A running pair plus a scripted create of a pair that starts with both members blocked."""
    from ..dynamic import CreateEvent, DynamicSpec, ScriptedRule

    sp = _spaces(["u", "v"])
    live = [("a", "b", TRUE), ("b", "a", TRUE)]
    running = PairProgram(_sk(sp["u"], "u", "v", live), _sk(sp["v"], "v", "u", live), name="running")
    stuck = mutual_wait().pairs[frozenset({"p", "q"})]
    return DynamicSpec([running], ScriptedRule([(2, CreateEvent("create(p,q)", (stuck,)))]), "deadlocked-create")


def random_toy(rng: random.Random, n_states: int = 3, p_guard: float = 0.4) -> StaticProgram:
    """A random 3-process path x - y - z with one shared variable per pair.

    Each process gets one local graph (so its pair-processes are compatible),
    and every state keeps at least one outgoing arc.
    """
    pids = ["x", "y", "z"]
    names = tuple("abcd"[:n_states])
    sp = _spaces(pids, names)
    graphs = {}
    for h in pids:
        arcs = set()
        for s in names:
            arcs.add((s, rng.choice(names)))
            if rng.random() < 0.5:
                arcs.add((s, rng.choice(names)))
        graphs[h] = sorted(arcs)
    pps = []
    for i, j in (("x", "y"), ("y", "z")):
        var = SharedVar(f"v_{i}{j}", (i, j), ("0", "1"), "0")

        def skel(owner, peer):
            arcs = []
            for a, b in graphs[owner]:
                branches = []
                for _ in range(rng.choice((1, 1, 2))):
                    g: Expr = TRUE
                    if rng.random() < p_guard:
                        g = Prop(peer, rng.choice(names))
                    elif rng.random() < p_guard / 2:
                        g = VarEq(var.name, rng.choice(var.domain))
                    if rng.random() < 0.2:
                        g = Not(g) if g is not TRUE else g
                    body = Body({var.name: rng.choice(var.domain)}) if rng.random() < 0.4 else Body()
                    branches.append(Branch(g, body))
                arcs.append(Arc(sp[owner][a], GuardedCommand(branches), sp[owner][b]))
            return SyncSkeleton(owner, peer, sp[owner].states(), [sp[owner][names[0]]], arcs)

        pps.append(PairProgram(skel(i, j), skel(j, i), (var,), name=f"toy({i},{j})"))
    return StaticProgram(pps)


# ---------------------------------------------------------------------------
# mutants


def with_guard(pp: PairProgram, owner: str, src: str, dst: str, guard: Expr, name: str = "") -> PairProgram:
    """``pp`` with the arc src -> dst of ``owner`` relabelled to a single branch guarded by ``guard``."""
    sk = pp.skeleton(owner)
    arcs = tuple(replace(a, cmd=GuardedCommand.simple(guard)) if (a.src.name, a.dst.name) == (src, dst) else a
                 for a in sk.arcs)
    if arcs == sk.arcs:
        raise KeyError(f"{owner} has no arc {src}->{dst}")
    new = replace(sk, arcs=arcs)
    skels = (new, pp.skel_j) if owner == pp.i else (pp.skel_i, new)
    return PairProgram(*skels, pp.shared, pp.initials, pp.spec, name or pp.name)


def twophase_tstab_mutant(n: int = 3) -> tuple[PairProgram, tuple[str, str, str]]:
    """The coordinator may abort while participant 1 still waits at st on pr_0.

    Returns the mutant and the (owner, src, dst) of the arc whose guard turns unstable.
    """
    from . import twophase as T

    pp = T.gen_two_phase(n).program.pairs[frozenset({"0", "1"})]
    return with_guard(pp, "0", "pr", "ab", TRUE, "tstab-mutant"), ("1", "st", "sb")


def twophase_liveness_mutant(n: int = 3) -> tuple[PairProgram, tuple[str, str, str]]:
    """The coordinator spins at ab_0 even while participant 1 waits at sb for cm_0.

    Returns the mutant and the (owner, src, dst) of the spinning arc.
    """
    from . import twophase as T

    pp = T.gen_two_phase(n).program.pairs[frozenset({"0", "1"})]
    return with_guard(pp, "0", "ab", "ab", TRUE, "liveness-mutant"), ("0", "ab", "ab")


def esds_tstab_mutant() -> tuple[PairProgram, tuple[str, str, str]]:
    """A secondary that receives only while the primary sits exactly at wt.

    The primary can leave wt while the secondary is still at in.
    """
    from . import esds as E

    scn = E.EsdsScenario([E.Operation("x0", "c0", "r0", (), True)], ["r0", "r1"])
    pp = next(p for p in E.gen_esds(scn).programs() if p.name.startswith("replica"))
    sec = E.replica_pid("r1", "x0")
    return with_guard(pp, sec, "in", "wt", Prop(E.primary_pid(scn.operations[0]), "wt"), "esds-tstab-mutant"), \
        (sec, "in", "wt")
