"""Dynamic specifications: configurations, normal and create transitions, simulation.

A configuration holds, for every pair in force, its pair-program and its
current pair-state.  Processes come into existence when the first pair
mentioning them is created and are never destroyed.
"""

from __future__ import annotations

import itertools
import random
from collections import deque
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from .errors import (
    BudgetExceeded,
    DeadlockReached,
    EmptyInitialSet,
    InconsistentJoinState,
    InputError,
    InvalidScenario,
    NoCompatibleState,
    RuleForbids,
    SpecViolated,
)
from .mc import CREATE, check_spec, compute_pnd
from .skeleton import TRUE, Expr, LocalState, Pid, Valuation, apply_body, eval_guard, evaluate
from .structure import JState, PairProgram, StaticProgram, build_pair_structure, pair, state_budget
from .waitfor import PairwiseView, blocked_set, build_wfg


@dataclass(frozen=True)
class PairSpec:
    pair: frozenset
    spec: Expr = TRUE
    name: str = ""

    @staticmethod
    def of(pp: PairProgram) -> "PairSpec":
        return PairSpec(pp.pair, pp.spec, pp.name)


class _Analysis:
    """Lazily computed facts about one pair-program, shared across configurations."""

    def __init__(self, pp: PairProgram):
        self.pp = pp
        self._m = None
        self._ok = None
        self._pnd = None

    @property
    def structure(self):
        if self._m is None:
            self._m = build_pair_structure(self.pp)
        return self._m

    @property
    def reachable(self) -> set:
        return set(self.structure.index)

    def spec_ok(self) -> bool:
        if self._ok is None:
            self._ok = check_spec(self.pp, structure=self.structure).ok
        return self._ok

    @property
    def pnd(self) -> frozenset:
        if self._pnd is None:
            self._pnd = compute_pnd(self.pp, structure=self.structure)
        return self._pnd


_ANALYSES: dict[int, _Analysis] = {}


def analysis(pp: PairProgram) -> _Analysis:
    a = _ANALYSES.get(id(pp))
    if a is None or a.pp is not pp:
        a = _ANALYSES[id(pp)] = _Analysis(pp)
    return a


# ---------------------------------------------------------------------------
# configurations


class Configuration:
    """⟨ℐ, Pr, 𝒮⟩: pairs in force with their programs and pair-states."""

    __slots__ = ("programs", "states", "_locals", "_key", "_nbrs")

    def __init__(self, programs: Mapping[frozenset, PairProgram], states: Mapping[frozenset, JState]):
        self.programs = dict(programs)
        self.states = dict(states)
        if set(self.programs) != set(self.states):
            raise InputError("every pair in force needs both a program and a state")
        locs: dict[Pid, LocalState] = {}
        nbrs: dict[Pid, list[Pid]] = {}
        for p, s in self.states.items():
            for h in p:
                other = next(iter(p - {h}))
                nbrs.setdefault(h, []).append(other)
                mine = s.local(h)
                if locs.setdefault(h, mine) != mine:
                    raise InconsistentJoinState(f"pair-states disagree on the local state of {h}")
        self._locals = locs
        self._nbrs = {h: sorted(v) for h, v in nbrs.items()}
        self._key = tuple(sorted((tuple(sorted(p)), s.key()) for p, s in self.states.items()))

    @property
    def pairs(self) -> list[frozenset]:
        return sorted(self.states, key=sorted)

    @property
    def specs(self) -> frozenset[PairSpec]:
        return frozenset(PairSpec.of(pp) for pp in self.programs.values())

    @property
    def pids(self) -> list[Pid]:
        return sorted(self._locals)

    def alive(self, i: Pid) -> bool:
        return i in self._locals

    def local(self, i: Pid) -> LocalState:
        return self._locals[i]

    def get_local(self, i: Pid) -> LocalState | None:
        return self._locals.get(i)

    def neighbors(self, i: Pid) -> list[Pid]:
        return self._nbrs.get(i, [])

    def skeleton(self, i: Pid, j: Pid):
        return self.programs[pair(i, j)].skeleton(i)

    def shared(self, p: frozenset):
        return self.states[frozenset(p)].shared

    def truth(self, owner: Pid, name: str) -> bool:
        s = self._locals.get(owner)
        return s is not None and name in s.true

    def value(self, var: str) -> str:
        for s in self.states.values():
            if var in s.shared:
                return s.shared[var]
        raise KeyError(var)

    def holds(self, e: Expr) -> bool:
        return evaluate(e, self.truth, self.value)

    def view(self) -> PairwiseView:
        return PairwiseView(self.states, self.local, self.skeleton, self.shared)

    def restrict(self, J: Iterable[frozenset]) -> "Configuration":
        J = {frozenset(p) for p in J}
        return Configuration({p: self.programs[p] for p in J}, {p: self.states[p] for p in J})

    def as_static(self) -> tuple[StaticProgram, JState]:
        """The same global state seen as a state of the static program over these pairs."""
        sp = StaticProgram(list(self.programs.values()))
        shared: dict = {}
        for s in self.states.values():
            shared.update(s.shared)
        return sp, JState(tuple(self._locals.values()), Valuation(shared))

    def updated(self, delta: Mapping[frozenset, JState]) -> "Configuration":
        """The configuration with some pairs' states replaced."""
        states = dict(self.states)
        states.update(delta)
        return Configuration(self.programs, states)

    def key(self):
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, Configuration) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return "{" + ", ".join(f"{s.owner}:{s.label()}" for s in self._locals.values()) + "}"


# ---------------------------------------------------------------------------
# dynamic specifications and creation rules


@dataclass(frozen=True)
class CreateEvent:
    """One create transition; several pair-programs may be installed together."""

    name: str
    programs: tuple[PairProgram, ...]

    @property
    def pairs(self) -> list[frozenset]:
        return [pp.pair for pp in self.programs]


class CreationRule:
    """Which create events are permitted in a configuration (none by default)."""

    def events(self, cfg: Configuration, step: int | None = None) -> list[CreateEvent]:
        return []

    def allows(self, cfg: Configuration, event: CreateEvent, step: int | None = None) -> bool:
        return any(e.name == event.name for e in self.events(cfg, step))


class ScriptedRule(CreationRule):
    """Events fire in list order, each no earlier than its ``at_step``."""

    def __init__(self, script: Sequence[tuple[int, CreateEvent]]):
        self.script = list(script)

    def events(self, cfg, step=None):
        for at, ev in self.script:
            if all(p in cfg.states for p in ev.pairs):
                continue
            if step is None or step >= at:
                return [ev]
            return []
        return []


class GeneratorRule(CreationRule):
    """Events produced by a function of the current configuration."""

    def __init__(self, fn: Callable[[Configuration], list[CreateEvent]], name: str = "generator"):
        self.fn = fn
        self.name = name

    def events(self, cfg, step=None):
        return self.fn(cfg)


@dataclass
class DynamicSpec:
    """ℐ₀ with its chosen pair-programs, plus the creation rule."""

    initial: list[PairProgram]
    rule: CreationRule = field(default_factory=CreationRule)
    name: str = ""


def _join(programs: Sequence[PairProgram], candidates: Sequence[list[JState]], fixed: Mapping[Pid, LocalState]):
    """Backtracking choice of one pair-state per program, agreeing on shared processes."""

    def go(k: int, locs: dict):
        if k == len(programs):
            yield {}
            return
        for s in candidates[k]:
            if all(locs.get(h, s.local(h)) == s.local(h) for h in programs[k].pids):
                new = dict(locs)
                for h in programs[k].pids:
                    new[h] = s.local(h)
                for rest in go(k + 1, new):
                    yield {programs[k].pair: s, **rest}

    yield from go(0, dict(fixed))


def initial_configurations(ds: DynamicSpec, budget: int | None = None) -> list[Configuration]:
    for pp in ds.initial:
        if not analysis(pp).spec_ok():
            raise SpecViolated(pp.pair)
    limit = state_budget(budget)
    out = []
    progs = {pp.pair: pp for pp in ds.initial}
    for choice in _join(ds.initial, [sorted(pp.initials) for pp in ds.initial], {}):
        out.append(Configuration(progs, choice))
        if len(out) > limit:
            raise BudgetExceeded(limit)
    if not out:
        raise EmptyInitialSet("the initial pair-states admit no consistent configuration")
    return out


def process_moves(cfg: Configuration, i: Pid) -> list[dict[frozenset, JState]]:
    """Normal transitions of process i as updates to its pairs' states.

    There is one update per arc and per choice of enabled branches.
    """
    nbrs = cfg.neighbors(i)
    if not nbrs:
        return []
    s_i = cfg.local(i)
    out = []
    for arc in cfg.skeleton(i, nbrs[0]).out(s_i):
        options = []
        for j in nbrs:
            p = pair(i, j)
            a = cfg.programs[p].skeleton(i).arc(s_i, arc.dst)
            if a is None:
                options = None
                break
            sh = cfg.states[p].shared
            bodies = sorted({b.body for b in a.cmd.branches if eval_guard(b.guard, cfg.local(j), sh)}, key=str)
            if not bodies:
                options = None
                break
            options.append((p, bodies))
        if options is None:
            continue
        for combo in itertools.product(*(bs for _, bs in options)):
            delta = {}
            for (p, _), body in zip(options, combo):
                old = cfg.states[p]
                delta[p] = old.with_local(arc.dst, apply_body(body, old.shared))
            out.append(delta)
    return out


def process_successors(cfg: Configuration, i: Pid) -> list[Configuration]:
    return [cfg.updated(d) for d in process_moves(cfg, i)]


def enabled_normal(cfg: Configuration) -> list[tuple[Pid, Configuration]]:
    return [(i, t) for i in cfg.pids for t in process_successors(cfg, i)]


def admissible_states(cfg: Configuration, pp: PairProgram) -> list[JState]:
    """Reachable pair-states agreeing with the live members; initial states first."""
    reach = analysis(pp).reachable
    ok = [s for s in reach if all(not cfg.alive(h) or cfg.local(h) == s.local(h) for h in pp.pids)]
    return sorted(ok, key=lambda s: (s not in pp.initials, s))


def choose_join_states(cfg: Configuration, event: CreateEvent, rng: random.Random | None = None) -> dict:
    """Pair-states for a create event, consistent with the configuration and each other."""
    cands = [admissible_states(cfg, pp) for pp in event.programs]
    if rng is not None:
        cands = [sorted(c, key=lambda s, pp=pp: (s not in pp.initials, rng.random()))
                 for c, pp in zip(cands, event.programs)]
    fixed = {h: cfg.local(h) for pp in event.programs for h in pp.pids if cfg.alive(h)}
    for choice in _join(event.programs, cands, fixed):
        return choice
    raise NoCompatibleState(f"{event.name}: no reachable pair-states agree with the live processes")


def apply_create(cfg: Configuration, event: CreateEvent, states: Mapping[frozenset, JState] | None = None,
                 rule: CreationRule | None = None, step: int | None = None) -> Configuration:
    """The create transition installing ``event``'s pair-programs at ``states``."""
    if rule is not None and not rule.allows(cfg, event, step):
        raise RuleForbids(f"{event.name} is not permitted here")
    for pp in event.programs:
        if pp.pair in cfg.states:
            raise RuleForbids(f"pair {sorted(pp.pair)} is already in force")
        if not analysis(pp).spec_ok():
            raise SpecViolated(pp.pair)
    if states is None:
        states = choose_join_states(cfg, event)
    new_states = dict(cfg.states)
    new_progs = dict(cfg.programs)
    for pp in event.programs:
        s = states[pp.pair]
        if s not in analysis(pp).reachable:
            raise InconsistentJoinState(f"{s!r} is not reachable in the pair-structure of {pp.name}")
        for h in pp.pids:
            if cfg.alive(h) and cfg.local(h) != s.local(h):
                raise InconsistentJoinState(f"{s!r} disagrees with the live process {h}")
        new_states[pp.pair] = s
        new_progs[pp.pair] = pp
    return Configuration(new_progs, new_states)


def create_single(cfg: Configuration, ps: PairSpec, pp: PairProgram, s_ij: JState,
                  rule: CreationRule | None = None) -> Configuration:
    """apply_create for one pair-spec and its chosen program."""
    if pp.pair != ps.pair:
        raise InputError("pair-program and pair-spec name different pairs")
    if ps.spec != pp.spec and not check_spec(pp, ps.spec).ok:
        raise SpecViolated(pp.pair)
    return apply_create(cfg, CreateEvent(ps.name or pp.name, (pp,)), {pp.pair: s_ij}, rule)


# ---------------------------------------------------------------------------
# the creation protocol


class SystemHandle:
    """What the creation protocol needs from a running system."""

    def halt(self, pids: Iterable[Pid]) -> None:
        pass

    def wait_acks(self, pids: Iterable[Pid]) -> None:
        pass

    def current(self) -> Configuration:
        raise NotImplementedError

    def install(self, cfg: Configuration, event: CreateEvent) -> None:
        raise NotImplementedError

    def resume(self, pids: Iterable[Pid]) -> None:
        pass


def creation_protocol(system: SystemHandle, event: CreateEvent) -> Configuration:
    """Halt the live members, pick matching pair-states, install, resume."""
    cfg = system.current()
    live = sorted({h for pp in event.programs for h in pp.pids if cfg.alive(h)})
    system.halt(live)
    try:
        system.wait_acks(live)
        cfg = system.current()
        states = choose_join_states(cfg, event)
        new = apply_create(cfg, event, states)
        system.install(new, event)
    finally:
        system.resume(live)
    return new


# ---------------------------------------------------------------------------
# exploration


@dataclass
class ExplorationGraph:
    initials: list[Configuration]
    states: list[Configuration]
    transitions: list[tuple[Configuration, Any, Configuration, frozenset | None]]
    truncated: bool = False


def explore(ds: DynamicSpec, bound: int = 2000) -> ExplorationGraph:
    """Breadth-first exploration of M_𝒫 up to ``bound`` configurations.

    Each create uses the canonical join choice of ``choose_join_states``.
    """
    inits = initial_configurations(ds)
    seen = set(inits)
    order = list(inits)
    queue = deque(inits)
    trans = []
    truncated = False
    while queue:
        s = queue.popleft()
        succ = [(i, t, None) for i, t in enabled_normal(s)]
        for ev in ds.rule.events(s):
            try:
                t = apply_create(s, ev, choose_join_states(s, ev))
            except NoCompatibleState:
                continue
            succ.append((CREATE, t, frozenset(ev.pairs)))
        for lab, t, created in succ:
            if t not in seen:
                if len(order) >= bound:
                    truncated = True
                    continue
                seen.add(t)
                order.append(t)
                queue.append(t)
            trans.append((s, lab, t, created))
    return ExplorationGraph(inits, order, trans, truncated)


# ---------------------------------------------------------------------------
# simulation


@dataclass
class Step:
    label: Any
    config: Configuration
    created: frozenset | None = None
    note: dict | None = None


@dataclass
class Trace:
    initial: Configuration
    steps: list[Step] = field(default_factory=list)
    end: str = ""
    audit: dict = field(default_factory=dict)

    def configs(self) -> list[Configuration]:
        return [self.initial] + [s.config for s in self.steps]

    def __len__(self) -> int:
        return len(self.steps)


def simulate(ds: DynamicSpec, seed: int = 0, steps: int = 50_000, max_creates: int = 1,
             annotate: Callable[[Any, Configuration, Configuration], dict | None] | None = None,
             blocked_limit: int | None = None) -> Trace:
    """Run 𝒫 under the oldest-continuously-enabled-first scheduler.

    Agents are the live processes plus one creator for the rule.  The agent
    enabled longest without running goes next, ties broken by the seeded
    RNG, and at most ``max_creates`` creates run back to back while a
    normal move is available.  The run stops at a configuration whose only
    transitions are self-loops and where no create is pending.
    """
    rng = random.Random(seed)
    cfg = initial_configurations(ds)[0] if len(initial_configurations(ds)) == 1 else \
        rng.choice(initial_configurations(ds))
    tr = Trace(cfg)
    since: dict[Any, int] = {}
    cache: dict[Pid, list[dict]] = {}
    consecutive = 0
    max_wait = 0
    late = 0
    blocked_max = 0
    for n in range(steps):
        for i in cfg.pids:
            if i not in cache:
                cache[i] = process_moves(cfg, i)
        events = ds.rule.events(cfg, n)
        movers = {i for i in cfg.pids if cache[i]}
        if not movers and not events:
            raise DeadlockReached(cfg, build_wfg(cfg))
        if not events and all(cfg.states[p] == t for i in movers for d in cache[i] for p, t in d.items()):
            tr.end = "absorbing"
            break
        agents = set(movers)
        if events and (consecutive < max_creates or not movers):
            agents.add(CREATE)
        for a in list(since):
            if a not in agents:
                del since[a]
        for a in agents:
            since.setdefault(a, n)
        bound = len(cfg.pids) + 1
        late += sum(1 for a in since if n - since[a] > bound)
        oldest = min(since[a] for a in agents)
        ties = sorted((a for a in agents if since[a] == oldest), key=str)
        agent = ties[0] if len(ties) == 1 else rng.choice(ties)
        max_wait = max(max_wait, n - since.pop(agent))
        if agent == CREATE:
            ev = events[0]
            new = apply_create(cfg, ev, choose_join_states(cfg, ev))
            created = frozenset(ev.pairs)
            consecutive += 1
            touched = {h for p in created for h in p}
        else:
            new = cfg.updated(rng.choice(cache[agent]))
            created = None
            consecutive = 0
            touched = {agent, *cfg.neighbors(agent)}
        note = annotate(agent, cfg, new) if annotate else None
        for h in touched:
            cache.pop(h, None)
        cfg = new
        tr.steps.append(Step(agent, cfg, created, note))
        if blocked_limit is not None:
            for p in cfg.pairs:
                if cfg.states[p] in analysis(cfg.programs[p]).pnd:
                    size = len(blocked_set(cfg, p))
                    blocked_max = max(blocked_max, size)
                    if size > blocked_limit:
                        raise InvalidScenario(f"blocking set of {sorted(p)} grew to {size}")
    else:
        tr.end = "budget"
    tr.audit = {"max_wait": max_wait, "late": late, "steps": len(tr.steps), "max_blocked_set": blocked_max}
    return tr


# ---------------------------------------------------------------------------
# trace checking


@dataclass(frozen=True)
class TraceProperty:
    """kinds: invariant(p), precedence(p, q), absorbing(p), leads(p, q, k), eventually(p),
    and conditional(p, q): if p ever holds, q holds at or after its first occurrence."""

    name: str
    kind: str
    args: tuple


@dataclass
class TraceReport:
    results: dict[str, tuple[bool, int | None]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(ok for ok, _ in self.results.values())

    def failures(self) -> dict:
        return {k: v for k, v in self.results.items() if not v[0]}


def _check_one(configs: list, prop: TraceProperty) -> tuple[bool, int | None]:
    holds = lambda e: [c.holds(e) for c in configs]
    if prop.kind == "invariant":
        for k, v in enumerate(holds(prop.args[0])):
            if not v:
                return False, k
        return True, None
    if prop.kind == "precedence":
        seen_p = False
        for k, (p, q) in enumerate(zip(holds(prop.args[0]), holds(prop.args[1]))):
            seen_p = seen_p or p
            if q and not seen_p:
                return False, k
        return True, None
    if prop.kind == "absorbing":
        was = False
        for k, v in enumerate(holds(prop.args[0])):
            if was and not v:
                return False, k
            was = was or v
        return True, None
    if prop.kind == "eventually":
        return (any(holds(prop.args[0])), None if any(holds(prop.args[0])) else len(configs) - 1)
    if prop.kind == "conditional":
        ps, qs = holds(prop.args[0]), holds(prop.args[1])
        if any(ps):
            first = ps.index(True)
            if not any(qs[first:]):
                return False, first
        return True, None
    if prop.kind == "leads":
        p, q, horizon = prop.args
        ps, qs = holds(p), holds(q)
        last = len(configs) - 1
        for k, v in enumerate(ps):
            if v:
                window = qs[k: k + horizon + 1]
                if not any(window) and (k + horizon <= last or not qs[last]):
                    return False, k
        return True, None
    raise InputError(f"unknown trace property kind {prop.kind}")


def check_trace(tr: Trace | Sequence[Configuration], props: Iterable[TraceProperty]) -> TraceReport:
    """Evaluate trace properties; the final configuration is taken to repeat forever."""
    configs = tr.configs() if isinstance(tr, Trace) else list(tr)
    rep = TraceReport()
    for prop in props:
        rep.results[prop.name] = _check_one(configs, prop)
    return rep


def check_pair_paths(tr: Trace) -> list[tuple[list, int]]:
    """Each pair's states along ``tr`` must form a path of its pair-structure.

    The pair is followed from the step it was created; steps by processes
    outside the pair leave its state unchanged and are dropped.  Returns the
    violations as (pair, step index).
    """
    from .structure import Path, is_path_of

    configs = tr.configs()
    labels = [st.label for st in tr.steps]
    structures: dict[int, Any] = {}
    bad = []
    for p in configs[-1].pairs:
        start = next(k for k, c in enumerate(configs) if p in c.states)
        pp = configs[-1].programs[p]
        if id(pp) not in structures:
            structures[id(pp)] = build_pair_structure(pp)
        states = [configs[start].states[p]]
        labs = []
        for k in range(start, len(labels)):
            if labels[k] in p:
                labs.append(labels[k])
                states.append(configs[k + 1].states[p])
            elif configs[k + 1].states[p] != configs[k].states[p]:
                bad.append((sorted(p), k))
                break
        else:
            if not is_path_of(Path(states, labs), structures[id(pp)]):
                bad.append((sorted(p), start))
    return bad


def props_from_table(table: Mapping[str, tuple[str, tuple]]) -> list[TraceProperty]:
    return [TraceProperty(name, kind, args) for name, (kind, args) in table.items()]


# ---------------------------------------------------------------------------
# trace files


def _pair_line(p: frozenset, s: JState) -> str:
    locs = " ".join(f"{x.owner}={x.label()}" for x in s.locals)
    sh = " ".join(f"{k}:{v}" for k, v in s.shared.items_tuple())
    return f"  PAIR {locs}{' ' + sh if sh else ''}"


def trace_lines(tr: Trace) -> list[str]:
    """Line-oriented trace: STEP records followed by the pair-states they changed."""
    out = ["INIT"] + [_pair_line(p, tr.initial.states[p]) for p in tr.initial.pairs]
    prev = tr.initial
    for n, st in enumerate(tr.steps, 1):
        label = st.label if st.label != CREATE else \
            "CREATE(" + ";".join(",".join(sorted(p)) for p in sorted(st.created, key=sorted)) + ")"
        out.append(f"STEP {n} {label}")
        for p in st.config.pairs:
            if prev.states.get(p) != st.config.states[p]:
                out.append(_pair_line(p, st.config.states[p]))
        if st.note:
            out.append("  NOTE " + " ".join(f"{k}={v}" for k, v in sorted(st.note.items())))
        prev = st.config
    out.append(f"END {tr.end}")
    return out


def parse_trace_lines(lines: Iterable[str]) -> list[dict]:
    """Records ``{"step", "label", "pairs": [{pid: state}], "note"}``; step 0 is INIT."""
    recs: list[dict] = []
    for raw in lines:
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line == "INIT":
            recs.append({"step": 0, "label": None, "pairs": [], "note": {}})
        elif line.startswith("STEP "):
            _, n, label = line.split(" ", 2)
            recs.append({"step": int(n), "label": label, "pairs": [], "note": {}})
        elif line.startswith("  PAIR "):
            locs = {}
            for tok in line[7:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    locs[k] = v
            recs[-1]["pairs"].append(locs)
        elif line.startswith("  NOTE "):
            recs[-1]["note"] = dict(tok.split("=", 1) for tok in line[7:].split())
        elif line.startswith("END"):
            break
        else:
            raise InputError(f"unrecognised trace line {line!r}")
    return recs
