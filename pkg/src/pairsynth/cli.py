"""Command-line interface.

Exit codes: 0 pass, 1 property failure, 2 input error, 3 budget refusal.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import dynamic as D
from .errors import BudgetExceeded, DeadlockReached, PairSynthError
from .mc import check_liveness_condition, check_spec, check_tstab
from .overlay import synthesize_static
from .structure import build_pair_structure
from .sysfile import esds_document, load_system, twophase_document

PASS, FAIL, INPUT, BUDGET = 0, 1, 2, 3


def _emit(args, report: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(report, indent=1, default=str))
    else:
        for line in lines:
            print(line)


def _verdict(ok: bool) -> str:
    return "pass" if ok else "FAIL"


def cmd_gen(args) -> int:
    if args.corpus == "twophase":
        doc = twophase_document(args.n)
    else:
        from .corpora.esds import random_scenario

        scn = random_scenario(random.Random(args.seed), args.ops, args.replicas, p_strict=args.p_strict)
        doc = esds_document(scn)
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return PASS


def cmd_validate(args) -> int:
    model = load_system(args.file)
    problems = model.static.validate()
    for pp in model.programs.values():
        try:
            build_pair_structure(pp)
        except PairSynthError as e:
            problems.append(f"{pp.name}: {e}")
    _emit(args, {"ok": not problems, "problems": problems},
          [f"{len(model.programs)} pair-programs, {len(model.static.pids)} processes"] +
          [f"  {p}" for p in problems] + [_verdict(not problems)])
    return PASS if not problems else FAIL


def _pair_report(pp) -> dict:
    m = build_pair_structure(pp)
    spec = check_spec(pp, structure=m)
    ts = check_tstab(pp, structure=m)
    live = {h: check_liveness_condition(pp, h, structure=m) for h in pp.pids}
    return {
        "pair": pp.name, "states": m.n,
        "spec": {"ok": spec.ok, "witness": None if spec.ok else repr(spec.witness)},
        "tstab": {"ok": ts.ok, "witness": None if ts.ok else ts.detail},
        "liveness": {h: {"ok": r.ok, "witness": None if r.ok else r.detail} for h, r in live.items()},
    }


def cmd_check_pair(args) -> int:
    model = load_system(args.file)
    pps = [model.pair_named(r) for r in args.pair] if args.pair else list(model.programs.values())
    reports = [_pair_report(pp) for pp in pps]
    ok = all(r["spec"]["ok"] and r["tstab"]["ok"] and all(v["ok"] for v in r["liveness"].values())
             for r in reports)
    lines = []
    for r in reports:
        live = all(v["ok"] for v in r["liveness"].values())
        lines.append(f"{r['pair']}: {r['states']} states, spec {_verdict(r['spec']['ok'])}, "
                     f"tstab {_verdict(r['tstab']['ok'])}, liveness {_verdict(live)}")
        for part in ("spec", "tstab"):
            if not r[part]["ok"]:
                lines.append(f"  {part} witness: {r[part]['witness']}")
        for h, v in r["liveness"].items():
            if not v["ok"]:
                lines.append(f"  liveness({h}): {v['witness']}")
    _emit(args, {"ok": ok, "pairs": reports}, lines)
    return PASS if ok else FAIL


def composed_to_dot(proc) -> str:
    lines = [f'digraph "P{proc.owner}" {{']
    for s in sorted(proc.states):
        shape = "doublecircle" if s in proc.initials else "circle"
        lines.append(f'  "{s.label()}" [shape={shape}];')
    for mv in proc.moves:
        label = "\\n".join(f"{j}: {c}" for j, c in mv.per_neighbor).replace('"', r"\"")
        lines.append(f'  "{mv.src.label()}" -> "{mv.dst.label()}" [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_synthesize(args) -> int:
    model = load_system(args.file)
    syn = synthesize_static(model.static)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, proc in sorted(syn.processes.items()):
        safe = i.replace("/", "_")
        (out / f"P{safe}.txt").write_text(proc.canonical() + "\n")
        (out / f"P{safe}.dot").write_text(composed_to_dot(proc))
    _emit(args, {"ok": True, "processes": sorted(syn.processes), "cost": syn.cost},
          [f"{len(syn.processes)} composed processes written to {out} (cost {syn.cost})"])
    return PASS


def cmd_analyze(args) -> int:
    from .waitfor import check_dynamic_wfg_condition, check_reachable_supercycle_free, check_static_wfg_condition

    model = load_system(args.file)
    dynamic = args.dynamic or (model.dynamic is not None and not args.static)
    if dynamic:
        rep = check_dynamic_wfg_condition(model.as_dynamic(), bound=args.bound)
        kind = "dynamic"
    else:
        rep = check_static_wfg_condition(model.static)
        kind = "static"
    out = {"ok": rep.ok, "condition": kind, "checked": rep.checked, "witness": rep.witness, "notes": rep.notes}
    lines = [f"{kind} wait-for-graph condition: {_verdict(rep.ok)} ({rep.checked} instances)"]
    if not rep.ok:
        lines.append(f"  witness: {rep.witness}")
    lines += [f"  note: {n}" for n in rep.notes]
    if not dynamic and args.reachable:
        r2 = check_reachable_supercycle_free(model.static)
        out["reachable_supercycle_free"] = {"ok": r2.ok, "checked": r2.checked, "witness": r2.witness}
        lines.append(f"reachable states supercycle-free: {_verdict(r2.ok)} ({r2.checked} states)")
    _emit(args, out, lines)
    return PASS if rep.ok else FAIL


def cmd_oracle(args) -> int:
    from .oracle import run_oracle

    model = load_system(args.file)
    rep = run_oracle(model.static, model.product_properties, budget=args.max_states, seed=args.seed)
    lines = [f"{name}: {_verdict(c['ok'])} {c['detail'] if c['detail'] is not None else ''}".rstrip()
             for name, c in rep.checks.items()]
    _emit(args, {"ok": rep.ok, "checks": rep.checks}, lines)
    return PASS if rep.ok else FAIL


def cmd_simulate(args) -> int:
    model = load_system(args.file)
    ds = model.as_dynamic()
    try:
        tr = D.simulate(ds, seed=args.seed, steps=args.steps, max_creates=args.max_creates)
    except DeadlockReached as e:
        _emit(args, {"ok": False, "deadlock": repr(e.config)}, [f"DeadlockReached at {e.config!r}"])
        return FAIL
    rep = D.check_trace(tr, D.props_from_table(model.properties))
    if args.trace:
        Path(args.trace).write_text("\n".join(D.trace_lines(tr)) + "\n")
    lines = [f"{len(tr)} steps, end: {tr.end or 'none'}, audit {tr.audit}"]
    lines += [f"  {k}: {_verdict(ok)}{'' if ok else f' at step {idx}'}" for k, (ok, idx) in rep.results.items()]
    _emit(args, {"ok": rep.ok, "steps": len(tr), "end": tr.end, "audit": tr.audit,
                 "properties": {k: {"ok": ok, "index": i} for k, (ok, i) in rep.results.items()}}, lines)
    return PASS if rep.ok else FAIL


def cmd_run_lowatom(args) -> int:
    from .lowatom import lin_lines, run

    model = load_system(args.file)
    ds = model.as_dynamic()
    kw = {"max_steps": args.steps} if args.agents_mode == "stepper" else {"timeout": args.timeout}
    res, verdict = run(ds, args.agents_mode, args.seed, programs=model.programs.values(), **kw)
    if args.lin:
        Path(args.lin).write_text("\n".join(lin_lines(res.records)) + "\n")
    rep = D.check_trace(verdict.trace, D.props_from_table(model.properties))
    ok = verdict.valid and rep.ok and res.end == "absorbing"
    lines = [f"{len(res.records)} records, end: {res.end}, replay {'valid' if verdict.valid else 'INVALID'}"
             + ("" if verdict.valid else f" at {verdict.index}: {verdict.reason}")]
    lines += [f"  {k}: {_verdict(v)}" for k, (v, _) in rep.results.items()]
    lines.append(f"  stats: {res.stats}")
    _emit(args, {"ok": ok, "end": res.end, "valid": verdict.valid, "index": verdict.index,
                 "reason": verdict.reason, "stats": res.stats,
                 "properties": {k: v for k, (v, _) in rep.results.items()}}, lines)
    return PASS if ok else FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pairsynth", description=__doc__.splitlines()[0])
    p.add_argument("--json", action="store_true", help="print a JSON report instead of text")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a corpus system file")
    g.add_argument("corpus", choices=["twophase", "esds"])
    g.add_argument("-n", type=int, default=4, help="ring size for twophase")
    g.add_argument("--ops", type=int, default=4)
    g.add_argument("--replicas", type=int, default=2)
    g.add_argument("--p-strict", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out")
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("validate", help="check skeleton and system invariants")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("check-pair", help="model-check pair-specs, TSTAB and the liveness condition")
    c.add_argument("file")
    c.add_argument("--pair", action="append", help="pair name or 'i,j' (repeatable; default all)")
    c.set_defaults(func=cmd_check_pair)

    s = sub.add_parser("synthesize", help="overlay pair-processes into composed processes")
    s.add_argument("file")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synthesize)

    a = sub.add_parser("analyze", help="wait-for-graph conditions")
    a.add_argument("file")
    mode = a.add_mutually_exclusive_group()
    mode.add_argument("--static", action="store_true")
    mode.add_argument("--dynamic", action="store_true")
    a.add_argument("--bound", type=int, default=5000)
    a.add_argument("--reachable", action="store_true", help="also search reachable product states for supercycles")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("oracle", help="explicit product cross-checks")
    o.add_argument("file")
    o.add_argument("--max-states", type=int, default=None)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle)

    m = sub.add_parser("simulate", help="fair-scheduled simulation with trace checks")
    m.add_argument("file")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--steps", type=int, default=50_000)
    m.add_argument("--max-creates", type=int, default=1)
    m.add_argument("--trace")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run-lowatom", help="low-atomicity run with linearization replay")
    r.add_argument("file")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--agents-mode", choices=["stepper", "free"], default="stepper")
    r.add_argument("--steps", type=int, default=500_000)
    r.add_argument("--timeout", type=float, default=20.0)
    r.add_argument("--lin")
    r.set_defaults(func=cmd_run_lowatom)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceeded as e:
        print(f"refused: {e}", file=sys.stderr)
        return BUDGET
    except (PairSynthError, KeyError, ValueError, TypeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return INPUT


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
