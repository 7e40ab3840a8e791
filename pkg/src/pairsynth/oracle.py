"""Whole-product cross-checks: mapping lemmas, deadlock freedom, and inherited safety.

These build M_I explicitly and so only run at desk scale; they exist to
confirm, on small instances, what the pairwise conditions promise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .mc import AG, check, check_deadlock_free, closure, holds, is_propositional
from .skeleton import Expr
from .structure import (
    Path,
    StaticProgram,
    build_pair_structure,
    build_product_structure,
    is_path_of,
    product_fairness,
    project_path,
    project_state,
    verify_transition_mapping,
)


@dataclass
class OracleReport:
    ok: bool = True
    checks: dict = field(default_factory=dict)

    def record(self, name: str, ok: bool, detail=None) -> None:
        self.checks[name] = {"ok": bool(ok), "detail": detail}
        self.ok = self.ok and bool(ok)


def ag_members(spec: Expr) -> list[Expr]:
    """The AG-rooted members of CL(spec) whose argument is propositional."""
    return [f for f in closure(spec) if isinstance(f, AG) and is_propositional(f.arg)]


def large_model_safety(sp: StaticProgram, m=None) -> tuple[int, list]:
    """For each AG g in a pair's closure: wherever s↾ij ⊨ AG g in M_ij, g holds at the product state s.

    Returns the number of (state, formula) instances checked and the violations.
    """
    m = m if m is not None else build_product_structure(sp)
    checked = 0
    bad = []
    for p, pp in sorted(sp.pairs.items(), key=lambda x: sorted(x[0])):
        members = ag_members(pp.spec)
        if not members:
            continue
        mp = build_pair_structure(pp)
        lab = check(mp, pp.spec)
        for f in members:
            pair_ok = lab.mask(f)
            g_prod = m.leaf(f.arg)
            for k, s in enumerate(m.states):
                t = project_state(s, p, sp)
                if t in mp.index and pair_ok[mp.index[t]]:
                    checked += 1
                    if not g_prod[k]:
                        bad.append((sorted(p), str(f), s))
    return checked, bad


def random_paths(m, rng: random.Random, count: int, max_len: int = 30) -> list[Path]:
    """Random finite paths of ``m`` from random initial states."""
    succ: dict[int, list] = {}
    for a, l, b in zip(m.src.tolist(), m.lab.tolist(), m.dst.tolist()):
        succ.setdefault(a, []).append((m.labels[l], b))
    out = []
    for _ in range(count):
        k = rng.choice(m.initials)
        states = [m.states[k]]
        labels = []
        for _ in range(rng.randrange(max_len + 1)):
            if k not in succ:
                break
            lab, k = rng.choice(succ[k])
            labels.append(lab)
            states.append(m.states[k])
        out.append(Path(states, labels))
    return out


def check_path_mapping(sp: StaticProgram, m, rng: random.Random, count: int = 1000) -> tuple[int, list]:
    """Project random paths of M_I onto every pair and onto random stars; each must be a path of M_J."""
    targets = [[p] for p in sp.pairs]
    for k in sp.pids:
        nbrs = sp.neighbors(k)
        if len(nbrs) > 1:
            targets.append([frozenset((k, x)) for x in nbrs])
    structures = {}
    bad = []
    paths = random_paths(m, rng, count)
    for n, path in enumerate(paths):
        J = targets[n % len(targets)]
        key = frozenset(J)
        if key not in structures:
            structures[key] = build_product_structure(sp, J)
        proj = project_path(path, J, sp)
        if not is_path_of(proj, structures[key]):
            bad.append((n, [sorted(p) for p in J]))
    return len(paths), bad


def run_oracle(sp: StaticProgram, product_properties: dict | None = None, budget: int | None = None,
               seed: int = 0, paths: int = 200) -> OracleReport:
    """Build M_I and run every cross-check; raises BudgetExceeded past the state budget."""
    rep = OracleReport()
    m = build_product_structure(sp, budget=budget)
    rep.checks["states"] = {"ok": True, "detail": m.n}
    tm = verify_transition_mapping(sp, m)
    rep.record("transition-mapping", tm.ok, {"checked": tm.checked, "violations": len(tm.violations)})
    n, bad = check_path_mapping(sp, m, random.Random(seed), paths)
    rep.record("path-mapping", not bad, {"paths": n, "violations": bad[:5]})
    dl = check_deadlock_free(m)
    rep.record("deadlock-free", dl.ok, None if dl.ok else repr(dl.witness))
    checked, bad = large_model_safety(sp, m)
    rep.record("large-model-safety", not bad, {"checked": checked, "violations": [str(b) for b in bad[:5]]})
    if product_properties:
        fair = product_fairness(sp, m)
        for name, (f, needs_fair) in product_properties.items():
            rep.record(f"property:{name}", holds(m, f, fair if needs_fair else None))
    return rep


def large_model_safety_dynamic(graph) -> tuple[int, list]:
    """The inherited-safety check over explored configurations of a dynamic system."""
    checked = 0
    bad = []
    labs: dict[int, tuple] = {}
    for cfg in graph.states:
        for p, pp in cfg.programs.items():
            if id(pp) not in labs:
                mp = build_pair_structure(pp)
                labs[id(pp)] = (mp, check(mp, pp.spec), ag_members(pp.spec))
            mp, lab, members = labs[id(pp)]
            k = mp.index.get(cfg.states[p])
            if k is None:
                bad.append((sorted(p), "pair-state not reachable in its pair-structure", cfg))
                continue
            for f in members:
                if lab.mask(f)[k]:
                    checked += 1
                    if not cfg.holds(f.arg):
                        bad.append((sorted(p), str(f), cfg))
    return checked, bad
