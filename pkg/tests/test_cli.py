import json

import pytest

from pairsynth.cli import main
from pairsynth.corpora import toys
from pairsynth.sysfile import dump_system, write_system


@pytest.fixture
def tp3_file(tmp_path):
    path = tmp_path / "tp3.json"
    assert main(["gen", "twophase", "-n", "3", "-o", str(path)]) == 0
    return path


@pytest.fixture
def esds_file(tmp_path):
    path = tmp_path / "esds.json"
    assert main(["gen", "esds", "--ops", "3", "--replicas", "2", "--seed", "4", "-o", str(path)]) == 0
    return path


def test_validate_and_check_pair(tp3_file, capsys):
    assert main(["validate", str(tp3_file)]) == 0
    assert main(["check-pair", str(tp3_file), "--pair", "0,1"]) == 0
    out = capsys.readouterr().out
    assert "spec pass" in out and "tstab pass" in out


def test_check_pair_json(tp3_file, capsys):
    assert main(["--json", "check-pair", str(tp3_file)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["ok"] and len(rep["pairs"]) == 3


def test_synthesize_writes_processes(tp3_file, tmp_path):
    out = tmp_path / "syn"
    assert main(["synthesize", str(tp3_file), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == \
        ["P0.dot", "P0.txt", "P1.dot", "P1.txt", "P2.dot", "P2.txt"]
    assert (out / "P0.dot").read_text().startswith('digraph "P0"')


def test_analyze_verdicts(tp3_file, tmp_path, capsys):
    assert main(["analyze", str(tp3_file), "--static", "--reachable"]) == 1
    out = capsys.readouterr().out
    assert "witness" in out and "supercycle-free: pass" in out
    trap = tmp_path / "trap.json"
    write_system(dump_system(toys.trap().pairs.values(), "trap"), trap)
    assert main(["analyze", str(trap)]) == 1


def test_analyze_dynamic_esds(tmp_path):
    path = tmp_path / "e.json"
    assert main(["gen", "esds", "--ops", "2", "--p-strict", "0", "-o", str(path)]) == 0
    assert main(["analyze", str(path), "--bound", "500"]) == 0


def test_oracle_and_budget(tp3_file, capsys):
    assert main(["oracle", str(tp3_file)]) == 0
    assert main(["oracle", str(tp3_file), "--max-states", "5"]) == 3
    assert "refused" in capsys.readouterr().err


def test_simulate_and_trace(esds_file, tmp_path):
    trace = tmp_path / "t.txt"
    assert main(["simulate", str(esds_file), "--seed", "2", "--trace", str(trace)]) == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "INIT" and lines[-1] == "END absorbing"


def test_run_lowatom(tp3_file, tmp_path):
    lin = tmp_path / "lin.txt"
    assert main(["run-lowatom", str(tp3_file), "--seed", "3", "--lin", str(lin)]) == 0
    assert lin.read_text().startswith("LIN ")


def test_input_errors(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["validate", str(missing)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"pairs": 3}')
    assert main(["check-pair", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_property_failure_exit(tmp_path):
    path = tmp_path / "mw.json"
    write_system(dump_system(toys.mutual_wait().pairs.values(), "mw"), path)
    assert main(["simulate", str(path)]) == 1
