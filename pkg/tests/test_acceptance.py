"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines; they are
also printed into the verbose log.  Two criteria carry documented failures,
each pinned by a strict xfail so that a change in verdict is noticed.
"""

import random
import time

import numpy as np
import pytest
from scipy import stats

from pairsynth import dynamic as D
from pairsynth.corpora import esds as E
from pairsynth.corpora import toys
from pairsynth.corpora import twophase as T
from pairsynth.errors import DeadlockReached
from pairsynth.lowatom import run
from pairsynth.mc import check_liveness_condition, check_spec, check_tstab, holds
from pairsynth.oracle import check_path_mapping, large_model_safety, large_model_safety_dynamic, run_oracle
from pairsynth.overlay import synthesize_static
from pairsynth.structure import build_pair_structure, build_product_structure, verify_transition_mapping
from pairsynth.waitfor import (
    brute_force_has_supercycle,
    check_dynamic_wfg_condition,
    check_static_wfg_condition,
    find_supercycle,
    random_wfg,
)


def report(capsys, n, ok, detail=""):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


def esds_corpus():
    """Fixed scenarios covering strictness, prev chains and replicas that join later."""
    out = [
        E.EsdsScenario([E.Operation("x0", "c0", "r0")], ["r0"]),
        E.EsdsScenario([E.Operation("x0", "c0", "r0", (), True)], ["r0", "r1"]),
        E.EsdsScenario([E.Operation("x0", "c0", "r0"), E.Operation("x1", "c1", "r1", ("x0",), True),
                        E.Operation("x2", "c0", "r0", ("x1",))], ["r0"]),
    ]
    rng = random.Random(7)
    out += [E.random_scenario(rng, 4, 3) for _ in range(5)]
    return out


WIDE = E.EsdsScenario([E.Operation("x0", "c0", "r0")], ["r0", "r1", "r2"])


def nonstrict_scenarios():
    """Non-strict operations with at most one secondary each."""
    rng = random.Random(11)
    out = [E.EsdsScenario([E.Operation("x0", "c0", "r0"), E.Operation("x1", "c1", "r1", ("x0",))], ["r0"])]
    out += [E.random_scenario(rng, 3, 2, p_strict=0.0) for _ in range(3)]
    assert all(len(s.secondaries(o.id)) <= 1 for s in out for o in s.operations)
    return out


def valid_toys(count):
    out, seed = [], 0
    while len(out) < count:
        sp = toys.random_toy(random.Random(seed))
        seed += 1
        if not sp.validate() and build_product_structure(sp).n >= 4:
            out.append(sp)
    return out


# 1


def test_criterion_1_pair_specs(capsys):
    pairs = [pp for n in (2, 3, 4, 5) for pp in T.gen_two_phase(n).program.pairs.values()]
    pairs += [pp for scn in esds_corpus() for pp in E.gen_esds(scn).programs()]
    bad, slowest = [], 0.0
    for pp in pairs:
        t = time.perf_counter()
        m = build_pair_structure(pp)
        r = check_spec(pp, structure=m)
        slowest = max(slowest, time.perf_counter() - t)
        if not r.ok or m.n > 500:
            bad.append((pp.name, m.n, r.witness))
    ok = not bad and slowest < 1.0
    report(capsys, 1, ok, f"{len(pairs)} pair-programs, slowest {slowest:.3f}s, failures {bad[:3]}")
    assert ok


# 2


def test_criterion_2_twophase_end_to_end(capsys):
    t = time.perf_counter()
    failures, literal = [], {}
    for n in (3, 4, 5):
        tp = T.gen_two_phase(n)
        m = build_product_structure(tp.program)
        rep = run_oracle(tp.program, T.product_properties(n))
        failures += [(n, k) for k, c in rep.checks.items() if not c["ok"]]
        literal.update({(n, k): holds(m, f) for k, f in T.literal_commit_invariant(n).items()})
    elapsed = time.perf_counter() - t
    literal_ok = all(literal.values())
    ok = not failures and elapsed <= 60 and literal_ok
    report(capsys, 2, ok,
           f"(a),(c),(d),(e) and the commit rule as cm_0 leads to every cm_i: "
           f"{'hold' if not failures else failures}; "
           f"(b) as the state invariant cm_0 => cm_i: {'holds' if literal_ok else 'violated'} "
           f"({sum(not v for v in literal.values())}/{len(literal)} instances); {elapsed:.1f}s")
    assert not failures and elapsed <= 60
    assert not any(literal.values())


@pytest.mark.xfail(strict=True, reason="cm_0 is set one step before any participant can commit")
def test_criterion_2b_literal_invariant():
    for n in (3, 4, 5):
        m = build_product_structure(T.gen_two_phase(n).program)
        for f in T.literal_commit_invariant(n).values():
            assert holds(m, f)


# 3


def test_criterion_3_mapping_lemmas(capsys):
    systems = [("twophase(3)", T.gen_two_phase(3).program), ("twophase(4)", T.gen_two_phase(4).program)]
    systems += [(f"toy{k}", sp) for k, sp in enumerate(valid_toys(3))]
    lines, ok = [], True
    for name, sp in systems:
        m = build_product_structure(sp)
        tm = verify_transition_mapping(sp, m)
        n, bad = check_path_mapping(sp, m, random.Random(0), 1000)
        ok = ok and tm.ok and not bad and n == 1000
        lines.append(f"{name}: {tm.checked} transitions/{len(tm.violations)} bad, {n} paths/{len(bad)} bad")
    report(capsys, 3, ok, "; ".join(lines))
    assert ok


# 4


def test_criterion_4_large_model_safety(capsys):
    total, bad = 0, []
    for n in (3, 4, 5):
        c, b = large_model_safety(T.gen_two_phase(n).program)
        total, bad = total + c, bad + b
    for scn in esds_corpus()[:4]:
        graph = D.explore(E.dynamic_spec(E.gen_esds(scn)), bound=3000)
        c, b = large_model_safety_dynamic(graph)
        total, bad = total + c, bad + b
    ok = not bad and total > 0
    report(capsys, 4, ok, f"{total} (state, AG-member) checks, {len(bad)} violations")
    assert ok


# 5


def test_criterion_5_supercycle_oracle(capsys):
    mismatches, found = [], 0
    for seed in range(200):
        w = random_wfg(random.Random(seed), max_procs=12)
        fast = find_supercycle(w) is not None
        found += fast
        if fast != brute_force_has_supercycle(w):
            mismatches.append(seed)
    ok = not mismatches
    report(capsys, 5, ok, f"200 graphs, {found} with a supercycle, mismatches {mismatches}")
    assert ok


# 6


def test_criterion_6_wait_for_conditions(capsys):
    tp = {n: check_static_wfg_condition(T.gen_two_phase(n).program) for n in (3, 4)}
    nonstrict = [check_dynamic_wfg_condition(E.dynamic_spec(E.gen_esds(s)), bound=5000)
                 for s in nonstrict_scenarios()]
    strict = check_dynamic_wfg_condition(E.dynamic_spec(E.gen_esds(esds_corpus()[1])), bound=5000)
    wide = check_dynamic_wfg_condition(E.dynamic_spec(E.gen_esds(WIDE)), bound=5000)
    trap = check_static_wfg_condition(toys.trap())
    created = check_dynamic_wfg_condition(toys.deadlocked_create(), bound=5000)
    ok = all(r.ok for r in tp.values()) and all(r.ok for r in nonstrict) and strict.ok and wide.ok \
        and not trap.ok and not created.ok
    report(capsys, 6, ok,
           f"twophase static: {'pass' if all(r.ok for r in tp.values()) else 'fail'} "
           f"(witness {tp[3].witness}); ESDS non-strict: "
           f"{'pass' if all(r.ok for r in nonstrict) else 'fail'} with <= 1 secondary, "
           f"{'pass' if wide.ok else 'fail'} with 2 secondaries (witness {wide.witness}); ESDS strict: "
           f"{'pass' if strict.ok else 'fail'} (witness {strict.witness}); "
           f"counterexamples fail: trap {trap.witness}, create {created.witness}")
    # recorded outcomes: the sufficient condition rejects both corpora's decision states
    assert not tp[3].ok and not tp[4].ok and not strict.ok and not wide.ok
    assert all(r.ok for r in nonstrict)
    assert not trap.ok and trap.witness is not None
    assert not created.ok and created.witness is not None


@pytest.mark.xfail(strict=True, reason="terminal decision states block a neighbor with no unblocked move")
def test_criterion_6_twophase_static_condition():
    assert check_static_wfg_condition(T.gen_two_phase(3).program).ok


@pytest.mark.xfail(strict=True, reason="a strict primary at dn waits on its secondary while the client waits on it")
def test_criterion_6_esds_strict_condition():
    assert check_dynamic_wfg_condition(E.dynamic_spec(E.gen_esds(esds_corpus()[1])), bound=5000).ok


@pytest.mark.xfail(strict=True, reason="a primary at dns waits on one secondary while another waits on it")
def test_criterion_6_esds_two_secondaries_condition():
    assert check_dynamic_wfg_condition(E.dynamic_spec(E.gen_esds(WIDE)), bound=5000).ok


# 7


def test_criterion_7_fair_simulation(capsys):
    t = time.perf_counter()
    bad, deadlocks, steps = [], 0, 0
    for seed in range(100):
        rng = random.Random(seed)
        scn = E.random_scenario(rng, rng.randint(1, 10), rng.randint(1, 3), n_clients=rng.randint(1, 3))
        esds = E.gen_esds(scn)
        try:
            tr = D.simulate(E.dynamic_spec(esds), seed=seed, steps=50_000)
        except DeadlockReached:
            deadlocks += 1
            continue
        steps += len(tr)
        rep = D.check_trace(tr, D.props_from_table(E.esds_properties(scn)))
        paths = D.check_pair_paths(tr)
        if tr.end != "absorbing" or not rep.ok or paths:
            bad.append((seed, tr.end, rep.failures(), paths[:2]))
    elapsed = time.perf_counter() - t
    ok = not bad and deadlocks == 0 and elapsed < 60
    report(capsys, 7, ok, f"100 seeds, {steps} steps, {deadlocks} deadlocks, failures {bad[:3]}, {elapsed:.1f}s")
    assert ok


# 8


def test_criterion_8_low_atomicity(capsys):
    t = time.perf_counter()
    tp_ds, tp_props = T.dynamic_spec(4), D.props_from_table(T.trace_properties(4))
    tp_progs = list(T.gen_two_phase(4).program.pairs.values())
    scn = E.EsdsScenario([E.Operation("x0", "c0", "r0"), E.Operation("x1", "c1", "r1", ("x0",), True),
                          E.Operation("x2", "c0", "r0", ("x1",))], ["r0"])
    esds = E.gen_esds(scn)
    es_ds, es_props = E.dynamic_spec(esds), D.props_from_table(E.esds_properties(scn))
    runs = []
    for seed in range(100):
        rates = {"ab": 0.01} if seed % 2 else None
        runs.append(("twophase", seed, "stepper", tp_ds, tp_props, tp_progs, {"poll_rates": rates}))
        runs.append(("esds", seed, "stepper", es_ds, es_props, esds.programs(), {}))
    for seed in range(10):
        runs.append(("twophase", seed, "free", tp_ds, tp_props, tp_progs,
                     {"poll_rates": {"ab": 0.01} if seed % 2 else None}))
        runs.append(("esds", seed, "free", es_ds, es_props, esds.programs(), {}))
    bad, commits = [], 0
    for name, seed, mode, ds, props, progs, kw in runs:
        res, verdict = run(ds, mode, seed, programs=progs, **kw)
        rep = D.check_trace(verdict.trace, props)
        paths = D.check_pair_paths(verdict.trace)
        if name == "twophase":
            commits += verdict.trace.configs()[-1].truth("0", "cm")
        if not verdict.valid or res.end != "absorbing" or not rep.ok or paths:
            bad.append((name, mode, seed, verdict.reason, res.end, rep.failures(), paths[:2]))
    elapsed = time.perf_counter() - t
    ok = not bad and elapsed < 120
    report(capsys, 8, ok, f"{len(runs)} runs ({commits} twophase commits), failures {bad[:3]}, {elapsed:.1f}s")
    assert ok
    assert commits > 0


# 9


def test_criterion_9_gates(capsys):
    pairs = [pp for n in (2, 3, 4, 5) for pp in T.gen_two_phase(n).program.pairs.values()]
    pairs += [pp for scn in esds_corpus() for pp in E.gen_esds(scn).programs()]
    bad = []
    for pp in pairs:
        if not check_tstab(pp).ok:
            bad.append((pp.name, "tstab"))
        bad += [(pp.name, f"liveness({h})") for h in pp.pids if not check_liveness_condition(pp, h).ok]
    mutants = {}
    for make in (toys.twophase_tstab_mutant, toys.esds_tstab_mutant):
        pp, (owner, src, dst) = make()
        r = check_tstab(pp)
        hit = not r.ok and (r.witness[0], r.witness[1].src.name, r.witness[1].dst.name) == (owner, src, dst)
        mutants[pp.name] = hit
    pp, (owner, src, dst) = toys.twophase_liveness_mutant()
    r = check_liveness_condition(pp, owner)
    mutants[pp.name] = not r.ok and all(s.local(owner).name == src for s in r.witness) and check_tstab(pp).ok
    ok = not bad and all(mutants.values())
    report(capsys, 9, ok, f"{len(pairs)} corpus pairs, failures {bad[:3]}, mutants caught {mutants}")
    assert ok


# 10


def test_criterion_10_linear_synthesis(capsys):
    ns = np.arange(2, 65)
    cost = np.array([synthesize_static(T.gen_two_phase(int(n)).program).cost for n in ns])
    fit = stats.linregress(ns, cost)
    r2 = fit.rvalue ** 2
    ok = r2 > 0.99
    report(capsys, 10, ok, f"cost = {fit.slope:.2f} n + {fit.intercept:.1f}, R^2 = {r2:.5f}")
    assert ok
