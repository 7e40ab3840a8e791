"""System files: JSON documents describing pair-programs, specs and dynamic rules.

Layout::

    {
      "name": "...",
      "processes": {pid: {"props": [...], "states": {name: [true props]}, "initial": [names]}},
      "pairs": [{"name": ..., "pids": [i, j],
                 "shared": [{"name", "domain", "initial"}],
                 "arcs": {i: [[src, dst, command], ...], j: [...]},
                 "spec": [[label, formula], ...],
                 "initial": [{i: state, j: state, "vars": {...}}]   (optional)}],
      "dynamic": {"initial": [pair names],
                  "rule": {"kind": "none"} |
                          {"kind": "script", "events": [{"at_step", "name", "pairs"}]} |
                          {"kind": "esds", "scenario": {...}, "events": [{"op", "pairs"}]}},
      "properties": {name: {"kind": ..., "args": [formula, ...]}},
      "product_properties": {name: {"formula": ..., "fair": bool}}
    }

Commands and formulae are s-expressions; a bare guard stands for a
single-branch command with an empty body.  Without a ``dynamic`` section
the pairs form a static interconnection.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import sexpr
from .dynamic import CreateEvent, CreationRule, DynamicSpec, ScriptedRule
from .errors import InputError
from .mc import parse_formula
from .skeleton import (
    TRUE,
    And,
    Arc,
    Expr,
    SharedVar,
    StateSpace,
    SyncSkeleton,
    Valuation,
    parse_command,
)
from .structure import JState, PairProgram, StaticProgram


@dataclass
class SystemModel:
    name: str
    programs: dict[str, PairProgram]
    specs: dict[str, list[tuple[str, Expr]]]
    dynamic: DynamicSpec | None = None
    properties: dict[str, tuple[str, tuple]] = field(default_factory=dict)
    product_properties: dict[str, tuple[Expr, bool]] = field(default_factory=dict)

    @property
    def static(self) -> StaticProgram:
        return StaticProgram(list(self.programs.values()))

    def as_dynamic(self) -> DynamicSpec:
        """The dynamic section, or every pair in force with no creates."""
        return self.dynamic or DynamicSpec(list(self.programs.values()), name=self.name)

    def pair_named(self, ref: str) -> PairProgram:
        if ref in self.programs:
            return self.programs[ref]
        want = frozenset(ref.split(","))
        for pp in self.programs.values():
            if pp.pair == want:
                return pp
        raise InputError(f"no pair {ref!r}")


# ---------------------------------------------------------------------------
# dumping


def _state_table(pp_list: Iterable[PairProgram]) -> dict:
    procs: dict[str, dict] = {}
    for pp in pp_list:
        for h in pp.pids:
            sk = pp.skeleton(h)
            entry = procs.setdefault(h, {"props": [], "states": {}, "initial": []})
            for s in sorted(sk.states):
                if not s.name:
                    raise InputError(f"local states of {h} need names to be written to a system file")
                entry["states"][s.name] = sorted(s.true)
                entry["props"] = sorted(set(entry["props"]) | set(s.aps))
            entry["initial"] = sorted(set(entry["initial"]) | {s.name for s in sk.initials})
    return procs


def _pair_entry(pp: PairProgram, labelled: list[tuple[str, Expr]] | None) -> dict:
    arcs = {}
    for h in pp.pids:
        arcs[h] = [[a.src.name, a.dst.name, sexpr.dump(a.cmd.sexpr())] for a in pp.skeleton(h).arcs]
    spec = labelled if labelled is not None else ([("spec", pp.spec)] if pp.spec != TRUE else [])
    entry = {
        "name": pp.name or ",".join(pp.pids),
        "pids": list(pp.pids),
        "shared": [{"name": v.name, "domain": list(v.domain), "initial": v.initial} for v in pp.shared],
        "arcs": arcs,
        "spec": [[lab, sexpr.dump(f.sexpr())] for lab, f in spec],
    }
    default = PairProgram(pp.skel_i, pp.skel_j, pp.shared, None, pp.spec, pp.name).initials
    if pp.initials != default:
        entry["initial"] = [dict({x.owner: x.name for x in s.locals}, vars=dict(s.shared.items_tuple()))
                            for s in sorted(pp.initials)]
    return entry


def _prop_entry(kind: str, args: tuple) -> dict:
    return {"kind": kind, "args": [a if isinstance(a, int) else sexpr.dump(a.sexpr()) for a in args]}


def dump_system(programs: Iterable[PairProgram], name: str = "", specs: Mapping | None = None,
                dynamic: dict | None = None, properties: Mapping | None = None,
                product_properties: Mapping | None = None) -> dict:
    """The JSON document for a set of pair-programs.

    ``specs`` maps a pair to labelled formulae whose conjunction is its spec;
    ``dynamic`` is the already-serialised dynamic section.
    """
    programs = list(programs)
    doc: dict[str, Any] = {"name": name, "processes": _state_table(programs)}
    specs = specs or {}
    doc["pairs"] = [_pair_entry(pp, specs.get(pp.pair)) for pp in programs]
    if dynamic is not None:
        doc["dynamic"] = dynamic
    if properties:
        doc["properties"] = {k: _prop_entry(kind, args) for k, (kind, args) in properties.items()}
    if product_properties:
        doc["product_properties"] = {k: {"formula": sexpr.dump(f.sexpr()), "fair": bool(fair)}
                                     for k, (f, fair) in product_properties.items()}
    return doc


def write_system(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")


# ---------------------------------------------------------------------------
# loading


def _need(d: Mapping, key: str, where: str):
    if key not in d:
        raise InputError(f"{where}: missing {key!r}")
    return d[key]


def load_system(doc: dict | str | Path) -> SystemModel:
    """Parse a system document (or a path to one); malformed input raises InputError."""
    if isinstance(doc, (str, Path)):
        try:
            doc = json.loads(Path(doc).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read system file: {e}") from e
    if not isinstance(doc, dict):
        raise InputError("a system file holds a JSON object")
    procs = _need(doc, "processes", "system")
    spaces: dict[str, StateSpace] = {}
    for pid, entry in procs.items():
        sp = StateSpace(pid, _need(entry, "props", pid))
        for sname, true in _need(entry, "states", pid).items():
            unknown = set(true) - set(entry["props"])
            if unknown:
                raise InputError(f"{pid}.{sname}: unknown propositions {sorted(unknown)}")
            sp.state(sname, true)
        for s in entry.get("initial", []):
            if s not in {x.name for x in sp.states()}:
                raise InputError(f"{pid}: unknown initial state {s!r}")
        spaces[pid] = sp
    programs: dict[str, PairProgram] = {}
    specs: dict[str, list] = {}
    for k, pe in enumerate(_need(doc, "pairs", "system")):
        name = pe.get("name") or f"pair{k}"
        pids = _need(pe, "pids", name)
        if len(pids) != 2 or pids[0] == pids[1]:
            raise InputError(f"{name}: a pair names two distinct processes")
        for h in pids:
            if h not in spaces:
                raise InputError(f"{name}: unknown process {h!r}")
        shared = tuple(SharedVar(v["name"], pids, v["domain"], v["initial"]) for v in pe.get("shared", []))
        sks = []
        for h in pids:
            peer = pids[1] if h == pids[0] else pids[0]
            sp = spaces[h]
            arcs = []
            for src, dst, cmd in _need(pe, "arcs", name).get(h, []):
                try:
                    arcs.append(Arc(sp[src], parse_command(cmd), sp[dst]))
                except KeyError as e:
                    raise InputError(f"{name}: unknown state {e} of {h}") from None
            inits = [sp[s] for s in procs[h].get("initial", [])]
            sks.append(SyncSkeleton(h, peer, sp.states(), inits, arcs))
        labelled = [(lab, parse_formula(f)) for lab, f in pe.get("spec", [])]
        spec = And(*(f for _, f in labelled)) if labelled else TRUE
        initials = None
        if "initial" in pe:
            initials = []
            for st in pe["initial"]:
                locs = tuple(spaces[h][st[h]] for h in pids)
                initials.append(JState(locs, Valuation(st.get("vars", {}))))
        programs[name] = PairProgram(sks[0], sks[1], shared, initials, spec, name)
        specs[name] = labelled
    model = SystemModel(doc.get("name", ""), programs, specs)
    for pname, pe in doc.get("properties", {}).items():
        args = tuple(a if isinstance(a, int) else parse_formula(a) for a in pe.get("args", []))
        model.properties[pname] = (_need(pe, "kind", pname), args)
    for pname, pe in doc.get("product_properties", {}).items():
        model.product_properties[pname] = (parse_formula(_need(pe, "formula", pname)), bool(pe.get("fair", False)))
    if "dynamic" in doc:
        model.dynamic = _load_dynamic(doc["dynamic"], model)
    return model


def _programs(model: SystemModel, names: Iterable[str]) -> tuple[PairProgram, ...]:
    try:
        return tuple(model.programs[n] for n in names)
    except KeyError as e:
        raise InputError(f"dynamic section names unknown pair {e}") from None


def _load_dynamic(d: dict, model: SystemModel) -> DynamicSpec:
    initial = list(_programs(model, d.get("initial", [])))
    rule_doc = d.get("rule", {"kind": "none"})
    kind = rule_doc.get("kind", "none")
    if kind == "none":
        rule: Any = CreationRule()
    elif kind == "script":
        rule = ScriptedRule([(int(e.get("at_step", 0)), CreateEvent(e["name"], _programs(model, e["pairs"])))
                             for e in rule_doc.get("events", [])])
    elif kind == "esds":
        from .corpora.esds import Esds, EsdsRule, OpCreation, scenario_from_dict

        scn = scenario_from_dict(_need(rule_doc, "scenario", "esds rule"))
        by_op = {e["op"]: _programs(model, e["pairs"]) for e in rule_doc.get("events", [])}
        missing = [op.id for op in scn.operations if op.id not in by_op]
        if missing:
            raise InputError(f"esds rule lacks pair lists for {missing}")
        rule = EsdsRule(Esds(scn, [OpCreation(op, by_op[op.id]) for op in scn.operations]))
    else:
        raise InputError(f"unknown creation rule kind {kind!r}")
    return DynamicSpec(initial, rule, model.name)


# ---------------------------------------------------------------------------
# corpus documents


def twophase_document(n: int) -> dict:
    from .corpora import twophase as T

    tp = T.gen_two_phase(n)
    return dump_system(tp.program.pairs.values(), f"twophase-{n}", tp.specs,
                       properties=T.trace_properties(n), product_properties=T.product_properties(n))


def esds_document(scn) -> dict:
    from .corpora import esds as E

    es = E.gen_esds(scn)
    events = [{"op": c.op.id, "pairs": [pp.name for pp in c.programs]} for c in es.creations]
    dyn = {"initial": [], "rule": {"kind": "esds", "scenario": E.scenario_to_dict(scn), "events": events}}
    return dump_system(es.programs(), "esds", dynamic=dyn, properties=es.properties())
