import random

import pytest

from pairsynth import dynamic as D
from pairsynth.corpora import esds as E
from pairsynth.corpora import toys
from pairsynth.corpora import twophase as T
from pairsynth.errors import InvalidScenario
from pairsynth.mc import check_liveness_condition, check_spec, check_tstab
from pairsynth.structure import build_pair_structure


@pytest.mark.parametrize("n", [2, 3, 4, 6])
def test_twophase_ring(n):
    tp = T.gen_two_phase(n)
    expect = 1 if n == 2 else n
    assert len(tp.program.pairs) == expect
    assert tp.program.validate() == []
    for pp in tp.program.pairs.values():
        assert check_spec(pp).ok


def test_twophase_specs_labelled(tp4):
    labels = {lab for specs in tp4.specs.values() for lab, _ in specs}
    assert labels
    for p, specs in tp4.specs.items():
        pp = tp4.program.pairs[p]
        for lab, f in specs:
            assert check_spec(pp, f).ok, lab


def test_twophase_participant_can_abort(tp3):
    pp = tp3.program.pairs[frozenset({"0", "1"})]
    m = build_pair_structure(pp)
    assert any(s.truth("1", "ab") and not s.truth("0", "ab") for s in m.states)


def test_esds_pair_counts():
    scn = E.EsdsScenario([E.Operation("x0", "c0", "r0"), E.Operation("x1", "c1", "r1", ("x0",), True)], ["r0"])
    es = E.gen_esds(scn)
    assert [len(c.programs) for c in es.creations] == [1, 3]
    assert scn.replicas_at(1) == ["r0", "r1"]
    assert scn.secondaries("x1") == ["r0"]
    for pp in es.programs():
        assert check_spec(pp).ok and check_tstab(pp).ok
        assert all(check_liveness_condition(pp, h).ok for h in pp.pids)


def test_esds_invalid_scenarios():
    with pytest.raises(InvalidScenario):
        E.EsdsScenario([E.Operation("x0", "c0", "r0", ("x9",))])
    with pytest.raises(InvalidScenario):
        E.EsdsScenario([E.Operation("x0", "c0", "r0"), E.Operation("x0", "c1", "r0")])
    with pytest.raises(InvalidScenario):
        E.scenario_from_dict({"operations": [{"id": "x0"}]})


def test_esds_creation_waits_for_prev():
    scn = E.EsdsScenario([E.Operation("x0", "c0", "r0"), E.Operation("x1", "c1", "r0", ("x0",))], ["r0"])
    es = E.gen_esds(scn)
    ds = E.dynamic_spec(es)
    (cfg,) = D.initial_configurations(ds)
    (ev,) = ds.rule.events(cfg)
    assert ev.name == "create(x0)"
    cfg = D.apply_create(cfg, ev)
    assert ds.rule.events(cfg) == []
    r = E.primary_pid(scn.operations[0])
    while cfg.local(r).value("in"):
        cfg = next(t for i, t in D.enabled_normal(cfg) if i in (r, E.client_pid(scn.operations[0])))
    assert [e.name for e in ds.rule.events(cfg)] == ["create(x1)"]


def test_esds_scenario_dict_round_trip():
    scn = E.random_scenario(random.Random(5), 6, 3)
    again = E.scenario_from_dict(E.scenario_to_dict(scn))
    assert again.operations == scn.operations and again.replicas == scn.replicas


def test_random_scenarios_grow_replicas():
    grew = 0
    for seed in range(20):
        scn = E.random_scenario(random.Random(seed), 5, 3)
        grew += len(scn.replicas_at(len(scn.operations) - 1)) > len(scn.replicas)
    assert grew > 0


def test_random_toys_mostly_valid():
    ok = sum(not toys.random_toy(random.Random(s)).validate() for s in range(30))
    assert ok >= 10


@pytest.mark.parametrize("make", [toys.twophase_tstab_mutant, toys.esds_tstab_mutant])
def test_tstab_mutants(make):
    pp, (owner, src, dst) = make()
    r = check_tstab(pp)
    assert not r.ok
    h, arc, _ = r.witness
    assert (h, arc.src.name, arc.dst.name) == (owner, src, dst)


def test_liveness_mutant():
    pp, (owner, src, _) = toys.twophase_liveness_mutant()
    assert check_tstab(pp).ok
    r = check_liveness_condition(pp, owner)
    assert not r.ok
    assert [s.local(owner).name for s in r.witness] == [src]


def test_with_guard_rejects_unknown_arc(tp3):
    with pytest.raises(KeyError):
        toys.with_guard(tp3.program.pairs[frozenset({"0", "1"})], "0", "cm", "pr", None)
