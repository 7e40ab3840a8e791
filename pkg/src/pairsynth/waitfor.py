"""Wait-for graphs, supercycles and the wait-for-graph conditions.

A wait-for graph is bipartite: process nodes ``("proc", i)`` point to the
move nodes ``("move", i, src, dst)`` of their current local state, and a
move points to every neighbor whose guard conjunct is false.
"""

from __future__ import annotations

import itertools
import random
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any

import networkx as nx

from .errors import InputError
from .skeleton import LocalState, Pid, SyncSkeleton, eval_guard
from .structure import JState, StaticProgram, build_pair_structure, build_product_structure, initial_states, pair


def proc_node(i: Pid) -> tuple:
    return ("proc", i)


def move_node(i: Pid, src: str, dst: str) -> tuple:
    return ("move", i, src, dst)


def is_proc(node) -> bool:
    return node[0] == "proc"


@dataclass
class WaitForGraph:
    """W(s) as a networkx digraph; nodes carry ``kind`` and ``owner`` attributes."""

    graph: nx.DiGraph = field(default_factory=nx.DiGraph)

    def add_process(self, i: Pid) -> tuple:
        n = proc_node(i)
        self.graph.add_node(n, kind="proc", owner=i)
        return n

    def add_move(self, i: Pid, src: str, dst: str) -> tuple:
        n = move_node(i, src, dst)
        self.add_process(i)
        self.graph.add_node(n, kind="move", owner=i)
        self.graph.add_edge(proc_node(i), n)
        return n

    def block(self, move, j: Pid) -> None:
        self.add_process(j)
        self.graph.add_edge(move, proc_node(j))

    @property
    def process_nodes(self) -> set:
        return {n for n in self.graph if is_proc(n)}

    @property
    def move_nodes(self) -> set:
        return {n for n in self.graph if not is_proc(n)}

    def moves_of(self, i: Pid) -> list:
        return sorted(self.graph.successors(proc_node(i)))

    def blockers(self, move) -> list[Pid]:
        return sorted(n[1] for n in self.graph.successors(move))

    def unblocked_moves(self) -> list:
        return sorted(n for n in self.move_nodes if self.graph.out_degree(n) == 0)

    def edges(self) -> set:
        return set(self.graph.edges)


@dataclass(frozen=True)
class Supercycle:
    nodes: frozenset
    edges: frozenset

    @property
    def processes(self) -> list[Pid]:
        return sorted(n[1] for n in self.nodes if is_proc(n))

    @property
    def moves(self) -> list:
        return sorted(n for n in self.nodes if not is_proc(n))


class PairwiseView:
    """What a wait-for graph needs to know about a state: pairs, locals, guards, shared values."""

    def __init__(self, pairs: Iterable[frozenset], local: Callable[[Pid], LocalState],
                 skeleton: Callable[[Pid, Pid], SyncSkeleton], shared: Callable[[frozenset], Mapping]):
        self.pairs = sorted({frozenset(p) for p in pairs}, key=sorted)
        self.local = local
        self.skeleton = skeleton
        self.shared = shared

    @property
    def pids(self) -> list[Pid]:
        return sorted(set().union(*self.pairs)) if self.pairs else []

    def neighbors(self, i: Pid) -> list[Pid]:
        return sorted(next(iter(p - {i})) for p in self.pairs if i in p)

    def restrict(self, J: Iterable[frozenset]) -> "PairwiseView":
        J = {frozenset(p) for p in J}
        missing = J - set(self.pairs)
        if missing:
            raise InputError(f"pairs {sorted(map(sorted, missing))} are not present")
        return PairwiseView(J, self.local, self.skeleton, self.shared)


def static_view(s: JState, ctx, J: Iterable[frozenset] | None = None) -> PairwiseView:
    sp: StaticProgram = getattr(ctx, "program", ctx)
    if J is None:
        pids = set(s.pids)
        J = [p for p in sp.pairs if p <= pids]
    return PairwiseView(J, s.local, sp.skeleton, lambda p: s.shared)


def _as_view(state, ctx, J) -> PairwiseView:
    if isinstance(state, PairwiseView):
        return state if J is None else state.restrict(J)
    if hasattr(state, "view"):
        v = state.view()
        return v if J is None else v.restrict(J)
    if ctx is None:
        raise InputError("a JState needs a program context")
    return static_view(state, ctx, J)


def build_wfg(state, ctx=None, J: Iterable[frozenset] | None = None) -> WaitForGraph:
    """W(s) for a JState (with its StaticProgram or Synthesis), a configuration or a view.

    ``J`` restricts the graph to a sub-interconnection, giving W_J(s↾J).
    """
    v = _as_view(state, ctx, J)
    w = WaitForGraph()
    for i in v.pids:
        w.add_process(i)
    for i in v.pids:
        nbrs = v.neighbors(i)
        s_i = v.local(i)
        for arc in v.skeleton(i, nbrs[0]).out(s_i):
            mv = w.add_move(i, arc.src.label(), arc.dst.label())
            for j in nbrs:
                a = v.skeleton(i, j).arc(s_i, arc.dst)
                g = a.cmd.guard()
                if not eval_guard(g, v.local(j), v.shared(pair(i, j))):
                    w.block(mv, j)
    return w


# ---------------------------------------------------------------------------
# supercycles


def find_supercycle(w: WaitForGraph) -> Supercycle | None:
    """Greatest supercycle by pruning: a move with no live out-edge kills its owner."""
    g = w.graph.copy()
    changed = True
    while changed:
        changed = False
        for m in [n for n in g if not is_proc(n) and g.out_degree(n) == 0]:
            owner = proc_node(m[1])
            doomed = [m]
            if owner in g:
                doomed += [owner] + list(g.successors(owner))
            g.remove_nodes_from(doomed)
            changed = True
        dangling = [n for n in g if not is_proc(n) and proc_node(n[1]) not in g]
        if dangling:
            g.remove_nodes_from(dangling)
            changed = True
    if g.number_of_nodes() == 0:
        return None
    return Supercycle(frozenset(g.nodes), frozenset(g.edges))


def is_supercycle(w: WaitForGraph, sc: Supercycle) -> bool:
    """Direct check of the definition: nonempty subgraph, whole processes, every move blocked inside."""
    if not sc.nodes:
        return False
    if not sc.nodes <= set(w.graph.nodes) or not sc.edges <= w.edges():
        return False
    if any(a not in sc.nodes or b not in sc.nodes for a, b in sc.edges):
        return False
    for n in sc.nodes:
        if is_proc(n):
            if any((n, m) not in sc.edges for m in w.graph.successors(n)):
                return False
        elif not any((n, p) in sc.edges for p in w.graph.successors(n)):
            return False
    return True


def brute_force_has_supercycle(w: WaitForGraph) -> bool:
    """Exhaustive search over process subsets; exponential, for oracle use only.

    Every supercycle contains a process (a move needs an edge to one), and
    its process set P makes the subgraph of P, all their moves and the moves'
    edges into P a supercycle too, so searching these subgraphs is complete.
    """
    procs = sorted(w.process_nodes)
    for r in range(1, len(procs) + 1):
        for chosen in itertools.combinations(procs, r):
            keep = set(chosen)
            nodes = set(chosen)
            edges = set()
            for p in chosen:
                for m in w.graph.successors(p):
                    nodes.add(m)
                    edges.add((p, m))
                    edges |= {(m, q) for q in w.graph.successors(m) if q in keep}
            if is_supercycle(w, Supercycle(frozenset(nodes), frozenset(edges))):
                return True
    return False


def random_wfg(rng: random.Random, max_procs: int = 12, max_moves: int = 3, p_block: float = 0.3) -> WaitForGraph:
    """A random bipartite wait-for graph; every process has at least one move."""
    n = rng.randint(1, max_procs)
    pids = [f"p{k}" for k in range(n)]
    w = WaitForGraph()
    for i in pids:
        w.add_process(i)
    for i in pids:
        for k in range(rng.randint(1, max_moves)):
            mv = w.add_move(i, "s", f"t{k}")
            for j in pids:
                if j != i and rng.random() < p_block:
                    w.block(mv, j)
    return w


def blocked_set(state, p: Iterable[Pid], ctx=None) -> set[Pid]:
    """Processes reachable by a nonempty wait-for path from either member of the pair ``p``."""
    v = _as_view(state, ctx, None)
    p = frozenset(p)
    if p not in set(v.pairs):
        raise InputError(f"pair {sorted(p)} is not present")
    w = build_wfg(v)
    out = set()
    for i in p:
        out |= {n[1] for n in nx.descendants(w.graph, proc_node(i)) if is_proc(n)}
    return out


def wfg_to_dot(w: WaitForGraph, name: str = "W") -> str:
    lines = [f'digraph "{name}" {{']
    for n in sorted(w.graph.nodes):
        if is_proc(n):
            lines.append(f'  "{n}" [shape=box,label="P{n[1]}"];')
        else:
            lines.append(f'  "{n}" [shape=ellipse,label="{n[1]}: {n[2]}->{n[3]}"];')
    for a, b in sorted(w.graph.edges):
        style = "" if is_proc(a) else " [style=dashed]"
        lines.append(f'  "{a}" -> "{b}"{style};')
    lines.append("}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# the wait-for-graph conditions


def star_condition(w: WaitForGraph, k: Pid, j: Pid, ells: Iterable[Pid]) -> bool:
    """No j-move waits on k, or some k-move waits on none of ``ells``."""
    pk = proc_node(k)
    if not any(pk in w.graph.successors(m) for m in w.moves_of(j)):
        return True
    ells = {proc_node(l) for l in ells}
    return any(not (ells & set(w.graph.successors(m))) for m in w.moves_of(k))


@dataclass
class ConditionReport:
    ok: bool = True
    checked: int = 0
    witness: Any = None
    notes: list[str] = field(default_factory=list)

    def fail(self, witness) -> None:
        if self.ok:
            self.ok = False
            self.witness = witness


def _ell_sets(nbrs: list[Pid], n: int):
    """Distinct supports of multisets of size n over ``nbrs``."""
    for r in range(1, min(n, len(nbrs)) + 1):
        yield from itertools.combinations(nbrs, r)


def check_static_wfg_condition(sp: StaticProgram, budget: int | None = None,
                               check_initial: bool = True) -> ConditionReport:
    """Evaluate the static wait-for-graph condition over star-shaped sub-programs.

    Stars are built as J = {jk} ∪ {kℓ : ℓ ∈ L}; repeated ℓ's collapse, so
    the multisets of size n reduce to the sets L with 1 ≤ |L| ≤ n.  Each
    J-product is built once and reused for every (j, L) it covers.
    """
    rep = ConditionReport()
    sp.check_compatibility()
    reach: dict[Pid, set[LocalState]] = {}
    for pp in sp.pairs.values():
        m = build_pair_structure(pp, budget=budget)
        for h in pp.pids:
            here = {s.local(h) for s in m.states}
            reach[h] = here if h not in reach else reach[h] & here
    for k in sp.pids:
        nbrs = sp.neighbors(k)
        for r in range(1, len(nbrs) + 1):
            for S in itertools.combinations(nbrs, r):
                J = [pair(k, x) for x in S]
                m = build_product_structure(sp, J, budget=budget)
                entered = {int(b) for b, lab in zip(m.dst, m.lab) if m.labels[lab] == k}
                for idx in sorted(entered):
                    t = m.states[idx]
                    t_k = t.local(k)
                    if t_k not in reach[k]:
                        continue
                    n = len(sp.skeleton(k, nbrs[0]).out(t_k))
                    w = build_wfg(t, sp, J)
                    for j in S:
                        for ells in _ell_sets(list(S), n):
                            if set(ells) | {j} != set(S):
                                continue
                            rep.checked += 1
                            if not star_condition(w, k, j, ells):
                                rep.fail({"k": k, "t_k": t_k.label(), "J": [sorted(p) for p in J],
                                          "t_J": t, "j": j, "ells": list(ells)})
                                return rep
    if check_initial:
        for s0 in initial_states(sp, budget=budget):
            sc = find_supercycle(build_wfg(s0, sp))
            if sc is not None:
                rep.fail({"initial": s0, "supercycle": sc})
                return rep
    return rep


def check_transition_condition(s_view: PairwiseView, t_view: PairwiseView, label, report: ConditionReport,
                               created: Iterable[frozenset] | None = None) -> None:
    """Both clauses of the dynamic condition on one explored transition s → t.

    A normal k-move is checked against every star of t around k.  A create
    installs one or more pairs; each must start with one of its processes
    enabled, and each endpoint k is checked on stars pairing the new
    neighbor with the neighbors k already had in s.
    """
    if created is not None:
        created = [frozenset(p) for p in created]
        if any(len(p) != 2 for p in created):
            raise InputError("created must be a collection of pairs")
        for p in sorted(created, key=sorted):
            report.checked += 1
            if not build_wfg(t_view.restrict([p])).unblocked_moves():
                report.fail({"create": sorted(p), "reason": "new pair starts deadlocked"})
                return
        for p in sorted(created, key=sorted):
            for k in sorted(p):
                new = next(iter(p - {k}))
                others = s_view.neighbors(k) if k in s_view.pids else []
                n = len(t_view.skeleton(k, new).out(t_view.local(k)))
                for ells in _ell_sets(others, n):
                    w = build_wfg(t_view.restrict([p] + [pair(k, x) for x in ells]))
                    report.checked += 1
                    if not star_condition(w, k, new, ells):
                        report.fail({"create": sorted(p), "k": k, "j": new, "ells": list(ells)})
                        return
        return
    k = label
    nbrs = t_view.neighbors(k)
    n = len(t_view.skeleton(k, nbrs[0]).out(t_view.local(k)))
    for j in nbrs:
        for ells in _ell_sets(nbrs, n):
            w = build_wfg(t_view.restrict([pair(j, k)] + [pair(k, x) for x in ells]))
            report.checked += 1
            if not star_condition(w, k, j, ells):
                report.fail({"k": k, "t_k": t_view.local(k).label(), "j": j, "ells": list(ells)})
                return


def check_dynamic_wfg_condition(ds, bound: int = 2000, **kw) -> ConditionReport:
    """The dynamic condition over the configurations explored within ``bound``.

    Only stars that actually arise in explored configurations are examined,
    which matters for processes whose degree grows without bound.
    """
    from .dynamic import explore

    rep = ConditionReport(notes=[f"checked over configurations explored within bound {bound}"])
    graph = explore(ds, bound=bound, **kw)
    for s, label, t, created in graph.transitions:
        check_transition_condition(s.view(), t.view(), label, rep, created)
        if not rep.ok:
            return rep
    for s0 in graph.initials:
        sc = find_supercycle(build_wfg(s0))
        if sc is not None:
            rep.fail({"initial": s0, "supercycle": sc})
            return rep
    if graph.truncated:
        rep.notes.append("exploration bound reached; the verdict covers the explored part only")
    return rep


def check_reachable_supercycle_free(sp: StaticProgram, J: Iterable[frozenset] | None = None,
                                    budget: int | None = None) -> ConditionReport:
    """Build M_J and look for a supercycle in W_J(s) at every reachable state."""
    rep = ConditionReport()
    m = build_product_structure(sp, J, budget=budget)
    J = None if J is None else [frozenset(p) for p in J]
    for s in m.states:
        rep.checked += 1
        w = build_wfg(s, sp, J)
        sc = find_supercycle(w)
        if sc is not None:
            rep.fail({"state": s, "supercycle": sc})
            return rep
    return rep
