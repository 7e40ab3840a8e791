import pytest
from hypothesis import given, strategies as st

from pairsynth import sexpr
from pairsynth.errors import InputError, UnresolvedSymbol
from pairsynth.skeleton import (
    FALSE,
    TRUE,
    And,
    Arc,
    Body,
    GuardedCommand,
    Not,
    Or,
    Prop,
    SharedVar,
    StateSpace,
    SyncSkeleton,
    VarEq,
    apply_body,
    eval_guard,
    parse_body,
    parse_command,
    parse_guard,
    same_local_structure,
    strip_labels,
    validate_skeleton,
)


def space(owner, names, aps=None):
    sp = StateSpace(owner, aps or names)
    for s in names:
        sp.state(s)
    return sp


def test_eval_guard_constants_and_props():
    peer = space("0", ["st", "sb", "ab"], ["st", "sb", "ab"]).state("sb", ["sb"])
    assert eval_guard(TRUE, peer, {})
    assert not eval_guard(FALSE, peer, {})
    g = And(Prop("0", "sb"), Not(Prop("0", "ab")))
    assert eval_guard(g, peer, {})
    assert not eval_guard(VarEq("x", "1"), peer, {"x": "0"})


def test_eval_guard_unresolved():
    peer = space("0", ["a"]).state("a")
    with pytest.raises(UnresolvedSymbol):
        eval_guard(VarEq("y", "1"), peer, {"x": "0"})
    with pytest.raises(UnresolvedSymbol):
        eval_guard(Prop("0", "nope"), peer, {})


def test_apply_body():
    assert apply_body(Body(), {"x": "0"}) == {"x": "0"}
    assert apply_body(Body({"x": "1"}), {"x": "0", "y": "2"}) == {"x": "1", "y": "2"}
    assert apply_body(Body({"x": "1", "y": "0"}), {"x": "0", "y": "2"}) == {"x": "1", "y": "0"}
    with pytest.raises(UnresolvedSymbol):
        apply_body(Body({"z": "1"}), {"x": "0"})


def test_body_rejects_double_assignment():
    with pytest.raises(InputError):
        Body((("x", "1"), ("x", "0")))


def test_shared_var_initial_in_domain():
    with pytest.raises(InputError):
        SharedVar("x", ("a", "b"), ("0", "1"), "2")


def test_sexpr_round_trip():
    text = "(and (prop 0 sb) (not (prop 0 ab)) (or (eq x 1) true))"
    g = parse_guard(text)
    assert str(g) == text
    assert str(parse_body("(set (x 1) (y 0))")) == "(set (x 1) (y 0))"
    cmd = parse_command("(cmd ((prop 1 a) (set (x 1))) (true))")
    assert len(cmd.branches) == 2
    assert parse_command(sexpr.dump(cmd.sexpr())) == cmd
    assert parse_command("(prop 1 a)") == GuardedCommand.simple(Prop("1", "a"))


def test_guarded_command_order_insensitive():
    a = GuardedCommand([(Prop("1", "a"), Body()), (TRUE, Body({"x": "1"}))])
    b = GuardedCommand([(TRUE, Body({"x": "1"})), (Prop("1", "a"), Body())])
    assert a == b
    assert str(a) == str(b)


def _skel(arcs, names=("s", "t"), init=("s",)):
    sp = space("i", list(names))
    return SyncSkeleton("i", "j", sp.states(), [sp[x] for x in init],
                        [Arc(sp[a], GuardedCommand.simple(g), sp[b]) for a, b, g in arcs])


def test_validate_dead_end():
    sk = _skel([("s", "t", TRUE)])
    kinds = [v.kind for v in validate_skeleton(sk)]
    assert kinds == ["DeadEnd"]


def test_validate_duplicate_arc():
    sk = _skel([("s", "t", TRUE), ("s", "t", Prop("j", "a")), ("t", "t", TRUE)])
    assert [v.kind for v in validate_skeleton(sk)] == ["DuplicateArc"]


def test_validate_foreign_reference():
    sk = _skel([("s", "t", Prop("k", "a")), ("t", "t", TRUE)])
    assert [v.kind for v in validate_skeleton(sk)] == ["ForeignReference"]


def test_twophase_skeletons_valid(tp4):
    for pp in tp4.program.pairs.values():
        assert pp.validate() == []


def test_strip_labels():
    sk = _skel([("s", "s", TRUE)], names=("s",))
    g = strip_labels(sk)
    (s,) = sk.states
    assert set(g.nodes) == {s}
    assert set(g.edges) == {(s, s)}
    a = _skel([("s", "t", TRUE), ("t", "t", TRUE)])
    b = _skel([("s", "t", Prop("j", "x")), ("t", "t", Not(Prop("j", "y")))])
    assert same_local_structure(a, b)


def test_twophase_participant_structures_agree(tp4):
    sp = tp4.program
    for i in sp.pids:
        sks = [sp.skeleton(i, j) for j in sp.neighbors(i)]
        assert len(sks) == 2
        assert same_local_structure(*sks)


leaf = st.sampled_from([TRUE, FALSE, Prop("0", "a"), Prop("0", "b"), VarEq("x", "0"), VarEq("x", "1")])
exprs = st.recursive(leaf, lambda c: st.one_of(
    c.map(Not), st.tuples(c, c).map(lambda t: And(*t)), st.tuples(c, c).map(lambda t: Or(*t))), max_leaves=8)
peers = st.sampled_from(["a", "b", "c"])


def _peer(name):
    return space("0", ["a", "b", "c"]).state(name)


@given(exprs, exprs, peers, st.sampled_from(["0", "1"]))
def test_guard_algebra(f, g, name, x):
    peer, sh = _peer(name), {"x": x}
    ev = lambda e: eval_guard(e, peer, sh)
    assert ev(Not(f)) == (not ev(f))
    assert ev(And(f, g)) == ev(And(g, f)) == (ev(f) and ev(g))
    assert ev(Or(f, g)) == ev(Or(g, f)) == (ev(f) or ev(g))
    assert str(parse_guard(str(f))) == str(f)


@given(st.dictionaries(st.sampled_from(["x", "y", "z"]), st.sampled_from(["0", "1", "2"])),
       st.fixed_dictionaries({"x": st.sampled_from(["0", "1"]), "y": st.sampled_from(["0", "1"]),
                              "z": st.sampled_from(["0", "1"])}))
def test_apply_body_idempotent(assign, v):
    a = Body(assign)
    once = apply_body(a, v)
    assert apply_body(a, once) == once
    assert all(once[k] == val for k, val in assign.items())
