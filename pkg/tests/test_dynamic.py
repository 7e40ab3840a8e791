import random

import pytest

from pairsynth import dynamic as D
from pairsynth.corpora import esds as E
from pairsynth.corpora import toys
from pairsynth.corpora import twophase as T
from pairsynth.errors import DeadlockReached, InconsistentJoinState, RuleForbids, SpecViolated
from pairsynth.mc import CREATE
from pairsynth.skeleton import TRUE, Not, Prop
from pairsynth.structure import build_product_structure


def _running_and_stuck():
    ds = toys.deadlocked_create()
    ev = ds.rule.script[0][1]
    return ds, ev


def test_static_system_as_dynamic(tp3):
    ds = T.dynamic_spec(3)
    (cfg,) = D.initial_configurations(ds)
    assert cfg.pids == ["0", "1", "2"]
    graph = D.explore(ds)
    assert not graph.truncated
    assert len(graph.states) == build_product_structure(tp3.program).n


def test_apply_create_and_rule():
    ds, ev = _running_and_stuck()
    (cfg,) = D.initial_configurations(ds)
    assert ds.rule.events(cfg, 0) == []
    with pytest.raises(RuleForbids):
        D.apply_create(cfg, ev, rule=ds.rule, step=0)
    new = D.apply_create(cfg, ev, rule=ds.rule, step=2)
    assert set(new.pids) == {"u", "v", "p", "q"}
    with pytest.raises(RuleForbids):
        D.apply_create(new, ev)


def test_join_state_must_match_live_process():
    (cfg,) = D.initial_configurations(T.dynamic_spec(3))
    closing = frozenset({"0", "2"})
    pp = cfg.programs[closing]
    rest = cfg.restrict([p for p in cfg.pairs if p != closing])
    assert rest.alive("0") and rest.alive("2")
    wrong = next(s for s in D.analysis(pp).reachable if s.local("0") != rest.local("0"))
    with pytest.raises(InconsistentJoinState):
        D.apply_create(rest, D.CreateEvent("close", (pp,)), {closing: wrong})
    back = D.apply_create(rest, D.CreateEvent("close", (pp,)))
    assert back == cfg


def test_spec_violating_program_refused():
    bad = T.gen_two_phase(3).program.pairs[frozenset({"0", "1"})]
    from pairsynth.structure import PairProgram

    wrong = PairProgram(bad.skel_i, bad.skel_j, bad.shared, bad.initials, Not(TRUE), "never")
    with pytest.raises(SpecViolated):
        D.apply_create(D.Configuration({}, {}), D.CreateEvent("never", (wrong,)))


def test_creation_protocol_order():
    ds, ev = _running_and_stuck()
    (cfg,) = D.initial_configurations(ds)
    log = []

    class Sys(D.SystemHandle):
        state = cfg

        def halt(self, pids):
            log.append(("halt", tuple(pids)))

        def wait_acks(self, pids):
            log.append(("ack", tuple(pids)))

        def current(self):
            return self.state

        def install(self, new, event):
            log.append(("install", event.name))
            self.state = new

        def resume(self, pids):
            log.append(("resume", tuple(pids)))

    sys_ = Sys()
    new = D.creation_protocol(sys_, ev)
    assert [e[0] for e in log] == ["halt", "ack", "install", "resume"]
    assert sys_.state is new and "p" in new.pids


def test_simulate_twophase_properties():
    props = D.props_from_table(T.trace_properties(4))
    for seed in range(10):
        tr = D.simulate(T.dynamic_spec(4), seed=seed)
        assert tr.end == "absorbing"
        assert D.check_trace(tr, props).ok
        assert D.check_pair_paths(tr) == []
        assert tr.audit["late"] == 0


def test_simulate_reports_deadlock():
    with pytest.raises(DeadlockReached):
        D.simulate(D.DynamicSpec(list(toys.mutual_wait().pairs.values())))
    tr = D.simulate(toys.deadlocked_create(), steps=200)
    assert tr.end == "budget"


def test_simulate_esds_annotations():
    scn = E.EsdsScenario([E.Operation("x0", "c0", "r0"), E.Operation("x1", "c1", "r0", ("x0",))], ["r0"])
    esds = E.gen_esds(scn)
    hook = E.annotator(esds)
    tr = D.simulate(E.dynamic_spec(esds), seed=1, annotate=hook)
    assert tr.end == "absorbing"
    notes = [s.note for s in tr.steps if s.note]
    assert [n["op"] for n in notes] == ["x0", "x1"]
    assert notes[-1]["val"] == "x0,x1"
    assert sum(s.label == CREATE for s in tr.steps) == 2


def test_trace_kinds():
    class C:
        def __init__(self, *true):
            self.true = set(true)

        def holds(self, e):
            return e.name in self.true

    p, q = Prop("i", "p"), Prop("i", "q")
    configs = [C(), C("p"), C("p", "q"), C("q")]
    mk = lambda kind, *args: D.TraceProperty("t", kind, args)
    assert D.check_trace(configs, [mk("precedence", p, q)]).ok
    assert not D.check_trace(configs, [mk("precedence", q, p)]).ok
    assert not D.check_trace(configs, [mk("absorbing", p)]).ok
    assert D.check_trace(configs, [mk("absorbing", q)]).ok
    assert D.check_trace(configs, [mk("eventually", q)]).ok
    assert D.check_trace(configs, [mk("conditional", p, q)]).ok
    assert not D.check_trace(configs[:2], [mk("conditional", p, q)]).ok
    assert D.check_trace(configs, [mk("leads", p, q, 1)]).ok
    rep = D.check_trace(configs, [mk("invariant", p)])
    assert rep.results["t"] == (False, 0)


def test_trace_file_round_trip():
    tr = D.simulate(toys.deadlocked_create(), steps=20)
    lines = D.trace_lines(tr)
    recs = D.parse_trace_lines(lines)
    assert len(recs) == len(tr) + 1
    creates = [r for r in recs if r["label"] and r["label"].startswith("CREATE(")]
    assert creates and creates[0]["label"] == "CREATE(p,q)"
    assert any("STEP" in l for l in lines) and lines[-1] == "END budget"


def test_explore_esds_bounded():
    scn = E.random_scenario(random.Random(2), 3, 2, p_strict=0.0)
    graph = D.explore(E.dynamic_spec(E.gen_esds(scn)), bound=300)
    assert len(graph.states) <= 300
    assert any(c is not None for *_, c in graph.transitions)
