import random

import pytest
from hypothesis import given, settings, strategies as st

from pairsynth.corpora import toys
from pairsynth.errors import BudgetExceeded, IncompatibleLocalStructure
from pairsynth.overlay import pair_program_size, synthesize_static
from pairsynth.structure import (
    Path,
    build_pair_structure,
    build_product_structure,
    initial_states,
    is_path_of,
    product_successors,
    project_path,
    project_state,
    structure_to_dot,
    verify_state_mapping,
    verify_transition_mapping,
)


def test_pair_structure_sizes(tp3):
    sizes = sorted(build_pair_structure(pp).n for pp in tp3.program.pairs.values())
    assert sizes == [9, 9, 10]


def test_full_cross_product_contains_reachable(tp3):
    pp = tp3.program.pairs[frozenset({"0", "1"})]
    reach = build_pair_structure(pp)
    full = build_pair_structure(pp, full=True)
    assert set(reach.states) <= set(full.states)
    assert full.n > reach.n


def test_budget_refusal(tp4):
    with pytest.raises(BudgetExceeded):
        build_product_structure(tp4.program, budget=5)


def test_budget_env(monkeypatch, tp4):
    monkeypatch.setenv("PAIRSYNTH_MAX_STATES", "5")
    with pytest.raises(BudgetExceeded):
        build_product_structure(tp4.program)


def test_product_sizes():
    from pairsynth.corpora.twophase import gen_two_phase

    assert [build_product_structure(gen_two_phase(n).program).n for n in (3, 4, 5)] == [16, 33, 67]


def test_initial_states_project(tp3):
    sp = tp3.program
    for s in initial_states(sp):
        for p, pp in sp.pairs.items():
            assert project_state(s, p, sp) in pp.initials


def test_mapping_lemmas(tp3):
    m = build_product_structure(tp3.program)
    assert verify_transition_mapping(tp3.program, m).ok
    J = [frozenset({"0", "1"})]
    assert verify_state_mapping(tp3.program, m, J).ok


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_random_toy_transition_mapping(seed):
    sp = toys.random_toy(random.Random(seed))
    if sp.validate():
        return
    m = build_product_structure(sp)
    assert verify_transition_mapping(sp, m).ok


def test_project_path_lands_in_pair_structure(tp3):
    sp = tp3.program
    rng = random.Random(4)
    s = next(iter(initial_states(sp)))
    states, labels = [s], []
    J = [frozenset({"1", "2"})]
    for _ in range(12):
        succ = product_successors(sp, list(sp.pairs), states[-1])
        if not succ:
            break
        lab, t = rng.choice(succ)
        labels.append(lab)
        states.append(t)
    proj = project_path(Path(states, labels), J, sp)
    assert is_path_of(proj, build_product_structure(sp, J))
    assert all(lab in {"1", "2"} for lab in proj.labels)


def test_path_label_arity():
    with pytest.raises(Exception):
        Path([1, 2], [])


def test_incompatible_local_structure():
    from dataclasses import replace

    from pairsynth.structure import PairProgram, StaticProgram

    sp = toys.random_toy(random.Random(1))
    xy, yz = sp.pairs[frozenset({"x", "y"})], sp.pairs[frozenset({"y", "z"})]
    sk = yz.skeleton("y")
    have = {(a.src, a.dst) for a in sk.arcs}
    src, dst = next((s, t) for s in sk.states for t in sk.states if (s, t) not in have)
    extra = replace(sk, arcs=sk.arcs + (replace(sk.arcs[0], src=src, dst=dst),))
    bad = PairProgram(extra, yz.skeleton("z"), yz.shared) if yz.i == "y" else \
        PairProgram(yz.skeleton("z"), extra, yz.shared)
    with pytest.raises(IncompatibleLocalStructure):
        StaticProgram([xy, bad]).check_compatibility()


def test_structure_dot(tp3):
    dot = structure_to_dot(build_pair_structure(tp3.program.pairs[frozenset({"0", "1"})]))
    assert dot.startswith("digraph") and "->" in dot


def test_synthesis_matches_product(tp3):
    syn = synthesize_static(tp3.program)
    m = build_product_structure(tp3.program)
    for s in m.states:
        expect = set(product_successors(tp3.program, list(tp3.program.pairs), s))
        assert set(syn.step(s)) == expect
    assert {str(x) for x in syn.initial_states()} == {str(m.states[k]) for k in m.initials}


def test_synthesis_cost_is_sum_of_pair_sizes(tp4):
    syn = synthesize_static(tp4.program)
    assert syn.cost == sum(pair_program_size(pp) for pp in tp4.program.pairs.values())
    assert set(syn.processes) == {"0", "1", "2", "3"}
    assert all(syn.processes[i].moves for i in syn.processes)
