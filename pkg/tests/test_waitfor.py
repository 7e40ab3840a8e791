import random

from hypothesis import given, settings, strategies as st

from pairsynth.corpora import toys
from pairsynth.corpora import twophase as T
from pairsynth.structure import build_product_structure, initial_states
from pairsynth.waitfor import (
    WaitForGraph,
    brute_force_has_supercycle,
    build_wfg,
    check_dynamic_wfg_condition,
    check_reachable_supercycle_free,
    check_static_wfg_condition,
    find_supercycle,
    is_supercycle,
    proc_node,
    random_wfg,
    star_condition,
    wfg_to_dot,
)


def test_two_cycle_is_supercycle():
    w = WaitForGraph()
    w.block(w.add_move("p", "a", "b"), "q")
    w.block(w.add_move("q", "a", "b"), "p")
    sc = find_supercycle(w)
    assert sc is not None and sc.processes == ["p", "q"]
    assert is_supercycle(w, sc)


def test_escape_move_breaks_cycle():
    w = WaitForGraph()
    w.block(w.add_move("p", "a", "b"), "q")
    w.add_move("p", "a", "c")
    w.block(w.add_move("q", "a", "b"), "p")
    assert find_supercycle(w) is None
    assert not brute_force_has_supercycle(w)


def test_cycle_behind_free_process():
    w = WaitForGraph()
    for i, j in (("a", "b"), ("b", "c"), ("c", "a")):
        w.block(w.add_move(i, "s", "t"), j)
    w.block(w.add_move("d", "s", "t"), "a")
    w.add_move("e", "s", "t")
    sc = find_supercycle(w)
    assert sc.processes == ["a", "b", "c", "d"]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_pruning_matches_definition(seed):
    w = random_wfg(random.Random(seed), max_procs=8)
    sc = find_supercycle(w)
    assert (sc is not None) == brute_force_has_supercycle(w)
    if sc is not None:
        assert is_supercycle(w, sc)


def test_star_condition_cases():
    w = WaitForGraph()
    mj = w.add_move("j", "a", "b")
    w.block(mj, "k")
    mk = w.add_move("k", "a", "b")
    w.block(mk, "l")
    assert not star_condition(w, "k", "j", ["l"])
    w.add_move("k", "a", "c")
    assert star_condition(w, "k", "j", ["l"])
    assert star_condition(w, "j", "k", ["l"])


def test_initial_wfg_twophase(tp3):
    s0 = next(iter(initial_states(tp3.program)))
    w = build_wfg(s0, tp3.program)
    assert proc_node("0") in w.graph
    assert find_supercycle(w) is None
    assert "digraph" in wfg_to_dot(w)


def test_counterexample_systems():
    mw = check_static_wfg_condition(toys.mutual_wait())
    assert not mw.ok and "supercycle" in mw.witness
    assert not check_static_wfg_condition(toys.ring_wait(4)).ok
    tr = check_static_wfg_condition(toys.trap())
    assert not tr.ok
    assert (tr.witness["k"], tr.witness["j"], tr.witness["ells"]) == ("p", "q", ["q"])
    assert not check_reachable_supercycle_free(toys.trap()).ok


def test_twophase_reachable_supercycle_free():
    for n in (3, 4, 5):
        rep = check_reachable_supercycle_free(T.gen_two_phase(n).program)
        assert rep.ok and rep.checked == build_product_structure(T.gen_two_phase(n).program).n


def test_dynamic_counterexample():
    rep = check_dynamic_wfg_condition(toys.deadlocked_create(), bound=200)
    assert not rep.ok
    assert rep.witness["create"] == ["p", "q"]


def test_dynamic_condition_running_pair_only():
    from pairsynth.dynamic import DynamicSpec

    ds = toys.deadlocked_create()
    rep = check_dynamic_wfg_condition(DynamicSpec(ds.initial), bound=200)
    assert rep.ok
