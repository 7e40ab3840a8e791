import json

import pytest

from pairsynth import dynamic as D
from pairsynth.corpora import esds as E
from pairsynth.corpora import toys
from pairsynth.corpora import twophase as T
from pairsynth.errors import InputError
from pairsynth.mc import check_spec
from pairsynth.structure import build_pair_structure
from pairsynth.sysfile import dump_system, esds_document, load_system, twophase_document, write_system


def _same_pair(a, b):
    ma, mb = build_pair_structure(a), build_pair_structure(b)
    return {str(s) for s in ma.states} == {str(s) for s in mb.states} and \
        sorted(map(str, ma.transitions())) == sorted(map(str, mb.transitions()))


def test_twophase_round_trip(tmp_path):
    path = tmp_path / "tp.json"
    write_system(twophase_document(3), path)
    model = load_system(path)
    tp = T.gen_two_phase(3)
    assert set(model.static.pairs) == set(tp.program.pairs)
    for p, pp in tp.program.pairs.items():
        loaded = model.static.pairs[p]
        assert _same_pair(pp, loaded)
        assert check_spec(loaded).ok
        assert str(loaded.spec) == str(pp.spec)
    assert set(model.properties) == set(T.trace_properties(3))
    assert set(model.product_properties) == set(T.product_properties(3))


def test_esds_document_dynamic_section():
    scn = E.EsdsScenario([E.Operation("x0", "c0", "r0"), E.Operation("x1", "c1", "r1", ("x0",), True)], ["r0"])
    model = load_system(json.loads(json.dumps(esds_document(scn))))
    ds = model.as_dynamic()
    tr = D.simulate(ds, seed=0)
    assert tr.end == "absorbing"
    assert D.check_trace(tr, D.props_from_table(model.properties)).ok


def test_dump_is_stable():
    doc = dump_system(toys.trap().pairs.values(), "trap")
    again = dump_system(load_system(doc).programs.values(), "trap")
    assert doc == again


def test_pair_lookup():
    model = load_system(twophase_document(3))
    assert model.pair_named("0,1").pair == frozenset({"0", "1"})
    with pytest.raises(InputError):
        model.pair_named("7,8")


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("pairs"),
    lambda d: d["pairs"][0].update(pids=["0", "nobody"]),
    lambda d: d["pairs"][0]["arcs"]["0"].append(["pr", "zz", "(true)"]),
    lambda d: d["pairs"][0]["arcs"]["0"].append(["pr", "cm", "(prop 1"]),
])
def test_malformed_documents(mutate):
    doc = twophase_document(3)
    mutate(doc)
    with pytest.raises(InputError):
        load_system(doc)


def test_unreadable_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(InputError):
        load_system(p)
