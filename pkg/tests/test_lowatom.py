from dataclasses import replace

import pytest

from pairsynth import dynamic as D
from pairsynth.corpora import esds as E
from pairsynth.corpora import toys
from pairsynth.corpora import twophase as T
from pairsynth.errors import InputError
from pairsynth.lowatom import (
    WAIT,
    LockManager,
    SharedStore,
    lin_lines,
    parse_lin_lines,
    replay_linearization,
    run,
    run_stepper,
)


def test_store_counts_single_cell_operations():
    st = SharedStore()
    st.write(("a",), 1)
    assert st.read(("a",)) == 1
    assert (st.reads, st.writes) == (1, 1)


def test_locks_exclusive_and_ordered():
    lm = LockManager()
    assert lm.try_acquire(("ap", "1"), "x")
    assert not lm.try_acquire(("ap", "1"), "y")
    assert list(lm.waits_for_graph().edges) == [("y", "x")]
    assert lm.try_acquire(("pair", "1", "2"), "x")
    assert lm.order_violations == 0
    assert lm.try_acquire(("ap", "0"), "x")
    assert lm.order_violations == 1
    with pytest.raises(InputError):
        lm.release(("ap", "1"), "y")
    lm.release_all([("ap", "0"), ("ap", "1"), ("pair", "1", "2")], "x")
    assert not lm.any_held()


def test_acquire_all_spins_while_contended():
    lm = LockManager()
    lm.try_acquire(("b",), "other")
    gen = lm.acquire_all([("b",), ("a",)], "me")
    ops = [next(gen) for _ in range(3)]
    assert WAIT in ops and lm.holder[("a",)] == "me"
    lm.release(("b",), "other")
    rest = list(gen)
    assert lm.holder[("b",)] == "me" and rest


def test_stepper_twophase_replays():
    ds = T.dynamic_spec(4)
    props = D.props_from_table(T.trace_properties(4))
    for seed in range(6):
        res, verdict = run(ds, "stepper", seed, poll_rates={"ab": 0.01} if seed % 2 else None)
        assert res.end == "absorbing" and verdict.valid
        assert D.check_trace(verdict.trace, props).ok
        assert res.stats["guard_violations"] == 0


def test_stepper_is_deterministic():
    ds = T.dynamic_spec(3)
    a = lin_lines(run_stepper(ds, seed=5).records)
    b = lin_lines(run_stepper(ds, seed=5).records)
    assert a == b


def test_free_mode_esds():
    scn = E.EsdsScenario([E.Operation("x0", "c0", "r0", (), True)], ["r0", "r1"])
    esds = E.gen_esds(scn)
    res, verdict = run(E.dynamic_spec(esds), "free", 0, programs=esds.programs(), timeout=20)
    assert res.end == "absorbing" and verdict.valid
    assert D.check_trace(verdict.trace, D.props_from_table(E.esds_properties(scn))).ok
    assert res.stats["creates"] >= 1


def test_unstable_guards_refused():
    pp, _ = toys.twophase_tstab_mutant()
    with pytest.raises(InputError):
        run(D.DynamicSpec([pp]), "stepper", 0)


def test_tampered_linearization_rejected():
    res = run_stepper(T.dynamic_spec(3), seed=2)
    recs = list(res.records)
    assert replay_linearization(recs, res.initial).valid
    swapped = recs[1:2] + recs[:1] + recs[2:]
    swapped = [replace(r, ts=k) for k, r in enumerate(swapped)]
    bad = replay_linearization(swapped, res.initial)
    if recs[0].pid != recs[1].pid:
        # independent first moves commute; a duplicated record never does
        bad = replay_linearization([replace(r, ts=k) for k, r in enumerate(recs[:1] + recs)], res.initial)
    assert not bad.valid
    dup_ts = [recs[0], replace(recs[1], ts=recs[0].ts)] + recs[2:]
    assert replay_linearization(dup_ts, res.initial).reason == "timestamps are not increasing"


def test_lin_file_round_trip():
    scn = E.EsdsScenario([E.Operation("x0", "c0", "r0")], ["r0"])
    esds = E.gen_esds(scn)
    res, _ = run(E.dynamic_spec(esds), "stepper", 1, programs=esds.programs())
    lines = lin_lines(res.records)
    parsed = parse_lin_lines(lines)
    assert [p["kind"] for p in parsed][0] == "CREATE"
    assert all(p["ts"] == r.ts for p, r in zip(parsed, res.records))
    with pytest.raises(InputError):
        parse_lin_lines(["BOGUS 1"])
