"""Eventually-serializable data service with dynamically created operations.

Each operation x gets a client process ``c/x``, a primary replica process
``r/x`` at replica(x), and a secondary process ``r'/x`` at every other
replica present when x is created.  Creating x installs, as one create
event, the client pair, one pair per x' in x.prev, and one pair per
secondary.

Replica states (true propositions):

* primary: in, wt, dn, st={dn,st}, sst={dn,st,snt}; a non-strict
  primary also has dns={dn,snt}, so it may send before stabilizing.
* secondary: in, wt, dn, st={dn,st}.

Receiving x waits for every x' in x.prev to be done, so an operation's
primary never enters a state in which it waits on an earlier operation.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

from ..errors import InvalidScenario
from ..mc import AF, AG, AX, EX, implies
from ..skeleton import TRUE, And, Arc, Expr, GuardedCommand, Not, Or, Prop, StateSpace, SyncSkeleton, conj
from ..structure import PairProgram

CLIENT_STATES = {"in": ["in"], "wt": ["wt"], "dn": ["dn"]}
CLIENT_ARCS = (("in", "wt"), ("wt", "dn"), ("dn", "dn"))
SECONDARY_STATES = {"in": ["in"], "wt": ["wt"], "dn": ["dn"], "st": ["dn", "st"]}
SECONDARY_ARCS = (("in", "wt"), ("wt", "dn"), ("dn", "st"), ("st", "st"))
PRIMARY_STATES = {"in": ["in"], "wt": ["wt"], "dn": ["dn"], "st": ["dn", "st"], "sst": ["dn", "st", "snt"]}
PRIMARY_ARCS = (("in", "wt"), ("wt", "dn"), ("dn", "st"), ("st", "sst"), ("sst", "sst"))
NONSTRICT_EXTRA_STATES = {"dns": ["dn", "snt"]}
NONSTRICT_EXTRA_ARCS = (("dn", "dns"), ("dns", "sst"))
REPLICA_APS = ("in", "wt", "dn", "st", "snt")
CLIENT_APS = ("in", "wt", "dn")


@dataclass(frozen=True)
class Operation:
    id: str
    client: str
    replica: str
    prev: tuple[str, ...] = ()
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "prev", tuple(self.prev))


@dataclass
class EsdsScenario:
    """Operations in creation order, plus the replicas that exist before any operation."""

    operations: list[Operation]
    replicas: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen: dict[str, Operation] = {}
        for op in self.operations:
            if op.id in seen:
                raise InvalidScenario(f"duplicate operation {op.id}")
            for p in op.prev:
                if p not in seen:
                    raise InvalidScenario(f"{op.id}.prev mentions {p}, which is not an earlier operation")
            if "/" in op.id or "/" in op.client or "/" in op.replica:
                raise InvalidScenario("identifiers may not contain '/'")
            seen[op.id] = op
        self.by_id = seen

    def replicas_at(self, k: int) -> list[str]:
        """Replicas present when the k-th operation is created (including its own)."""
        reps = set(self.replicas) | {op.replica for op in self.operations[: k + 1]}
        return sorted(reps)

    def secondaries(self, x: str) -> list[str]:
        k = [op.id for op in self.operations].index(x)
        return [r for r in self.replicas_at(k) if r != self.by_id[x].replica]


def client_pid(op: Operation) -> str:
    return f"{op.client}/{op.id}"


def replica_pid(r: str, x: str) -> str:
    return f"{r}/{x}"


def primary_pid(op: Operation) -> str:
    return replica_pid(op.replica, op.id)


def _space(owner: str, states: dict, aps) -> StateSpace:
    sp = StateSpace(owner, aps)
    for name, true in states.items():
        sp.state(name, true)
    return sp


def _skeleton(sp: StateSpace, owner: str, peer: str, arcs, guard_of) -> SyncSkeleton:
    out = [Arc(sp[a], GuardedCommand.simple(guard_of((a, b))), sp[b]) for a, b in arcs]
    return SyncSkeleton(owner, peer, sp.states(), [sp["in"]], out)


def _p(owner: str, name: str) -> Prop:
    return Prop(owner, name)


class _Builder:
    def __init__(self, scn: EsdsScenario):
        self.scn = scn
        self.spaces: dict[str, StateSpace] = {}

    def space(self, pid: str, kind: str, strict: bool = True) -> StateSpace:
        if pid not in self.spaces:
            if kind == "client":
                self.spaces[pid] = _space(pid, CLIENT_STATES, CLIENT_APS)
            elif kind == "secondary":
                self.spaces[pid] = _space(pid, SECONDARY_STATES, REPLICA_APS)
            else:
                states = dict(PRIMARY_STATES)
                if not strict:
                    states.update(NONSTRICT_EXTRA_STATES)
                self.spaces[pid] = _space(pid, states, REPLICA_APS)
        return self.spaces[pid]

    def primary_arcs(self, op: Operation):
        return PRIMARY_ARCS + (() if op.strict else NONSTRICT_EXTRA_ARCS)

    def client_pair(self, op: Operation) -> PairProgram:
        c, r = client_pid(op), primary_pid(op)
        cs, rs = self.space(c, "client"), self.space(r, "primary", op.strict)
        ck = _skeleton(cs, c, r, CLIENT_ARCS, lambda a: {("wt", "dn"): _p(r, "snt")}.get(a, TRUE))
        rk = _skeleton(rs, r, c, self.primary_arcs(op),
                       lambda a: {("in", "wt"): _p(c, "wt"), ("sst", "sst"): _p(c, "dn")}.get(a, TRUE))
        spec = And(
            AG(implies(_p(r, "wt"), _p(c, "wt"))),
            AG(implies(_p(c, "wt"), AF(Not(_p(r, "in"))))),
            AG(implies(_p(c, "wt"), AF(_p(c, "dn")))),
            AG(implies(_p(c, "dn"), AG(_p(c, "dn")))),
            client_local_structure(c),
        )
        return PairProgram(ck, rk, spec=spec, name=f"client({op.id})")

    def csc_pair(self, op: Operation, prev: Operation) -> PairProgram:
        x, xp = primary_pid(op), primary_pid(prev)
        xs, ps = self.space(x, "primary", op.strict), self.space(xp, "primary", prev.strict)
        xk = _skeleton(xs, x, xp, self.primary_arcs(op), lambda a: {("in", "wt"): _p(xp, "dn")}.get(a, TRUE))
        pk = _skeleton(ps, xp, x, self.primary_arcs(prev), lambda a: TRUE)
        spec = And(
            AG(implies(_p(x, "dn"), _p(xp, "dn"))),
            AG(implies(_p(x, "dn"), AG(_p(x, "dn")))),
            AG(implies(_p(xp, "dn"), AG(_p(xp, "dn")))),
        )
        return PairProgram(xk, pk, spec=spec, name=f"csc({op.id},{prev.id})")

    def replica_pair(self, op: Operation, r2: str) -> PairProgram:
        r, s = primary_pid(op), replica_pid(r2, op.id)
        rs, ss = self.space(r, "primary", op.strict), self.space(s, "secondary")
        toward_secondary = {
            ("dn", "st"): _p(s, "dn"),
            ("dns", "sst"): _p(s, "dn"),
            ("st", "sst"): _p(s, "st") if op.strict else TRUE,
            ("sst", "sst"): _p(s, "st"),
        }
        rk = _skeleton(rs, r, s, self.primary_arcs(op), lambda a: toward_secondary.get(a, TRUE))
        toward_primary = {
            ("in", "wt"): Not(_p(r, "in")),
            ("dn", "st"): And(Not(_p(r, "in")), Not(_p(r, "wt"))),
            ("st", "st"): _p(r, "st"),
        }
        sk = _skeleton(ss, s, r, SECONDARY_ARCS, lambda a: toward_primary.get(a, TRUE))
        parts = [AG(implies(_p(r, "wt"), And(AF(_p(r, "st")), AF(_p(s, "st")))))]
        parts.append(AG(implies(_p(r, "snt"), AG(_p(r, "snt")))))
        parts.append(AG(implies(_p(r, "st"), AG(_p(r, "st")))))
        parts.append(AG(implies(_p(s, "st"), AG(_p(s, "st")))))
        if op.strict:
            parts.append(AG(implies(_p(r, "snt"), And(_p(r, "st"), _p(s, "st")))))
        return PairProgram(rk, sk, spec=And(*parts), name=f"replica({op.id},{r2})")


def client_local_structure(c: str) -> Expr:
    i, w, d = _p(c, "in"), _p(c, "wt"), _p(c, "dn")
    one = And(
        Or(And(i, Not(w), Not(d)), And(Not(i), Or(w, d))),
        Or(And(w, Not(i), Not(d)), And(Not(w), Or(i, d))),
        Or(And(d, Not(i), Not(w)), And(Not(d), Or(i, w))),
    )
    return And(
        AG(implies(i, And(AX(c, w), EX(c, w)))),
        AG(implies(w, AX(c, d))),
        AG(implies(d, And(AX(c, d), EX(c, d)))),
        AG(one),
    )


@dataclass(frozen=True)
class OpCreation:
    """The pair-programs installed by one operation's create event."""

    op: Operation
    programs: tuple[PairProgram, ...]

    @property
    def name(self) -> str:
        return f"create({self.op.id})"


@dataclass
class Esds:
    scenario: EsdsScenario
    creations: list[OpCreation]

    def programs(self) -> list[PairProgram]:
        return [pp for c in self.creations for pp in c.programs]

    def properties(self):
        return esds_properties(self.scenario)


def gen_esds(scn: EsdsScenario) -> Esds:
    b = _Builder(scn)
    creations = []
    for op in scn.operations:
        progs = [b.client_pair(op)]
        progs += [b.csc_pair(op, scn.by_id[p]) for p in op.prev]
        progs += [b.replica_pair(op, r2) for r2 in scn.secondaries(op.id)]
        creations.append(OpCreation(op, tuple(progs)))
    return Esds(scn, creations)


def ready_to_create(esds: Esds, k: int, alive_local) -> bool:
    """The creation rule: operations appear in order, once every x' in prev has been received.

    ``alive_local(pid)`` returns the current local state of a live process or
    None.
    """
    op = esds.scenario.operations[k]
    if alive_local(client_pid(op)) is not None:
        return False
    for j in range(k):
        if alive_local(client_pid(esds.scenario.operations[j])) is None:
            return False
    for p in op.prev:
        s = alive_local(primary_pid(esds.scenario.by_id[p]))
        if s is None or s.value("in"):
            return False
    return True


def esds_properties(scn: EsdsScenario) -> dict[str, tuple[str, tuple]]:
    """Trace properties: name -> (kind, args) for the trace checker."""
    props: dict[str, tuple[str, tuple]] = {}
    for k, op in enumerate(scn.operations):
        c, r = client_pid(op), primary_pid(op)
        props[f"done-client:{op.id}"] = ("eventually", (_p(c, "dn"),))
        props[f"done-replica:{op.id}"] = ("eventually", (_p(r, "dn"),))
        stable = [_p(r, "st")] + [_p(replica_pid(r2, op.id), "st") for r2 in scn.secondaries(op.id)]
        props[f"stable:{op.id}"] = ("eventually", (conj(*stable),))
        if op.strict:
            props[f"strict:{op.id}"] = ("invariant", (implies(_p(r, "snt"), conj(*stable)),))
        props[f"sent-absorbs:{op.id}"] = ("absorbing", (_p(r, "snt"),))
        for p in op.prev:
            props[f"prev:{p}<{op.id}"] = ("precedence", (_p(primary_pid(scn.by_id[p]), "dn"), _p(r, "dn")))
    return props


def lb_annotation(op_of_pid, labels: dict, mover: str, before, after) -> dict | None:
    """Underlying data updates: lb_r(x) := next(lb_r) when replica r performs x."""
    if "/" not in mover or before is None or after is None:
        return None
    if not (after.value("dn") and not before.value("dn")):
        return None
    r, x = mover.split("/", 1)
    op = op_of_pid(mover)
    if op is None or op.replica != r:
        return None
    lb = labels.setdefault(r, {})
    lb[x] = len(lb)
    order = sorted(lb, key=lb.get)
    return {"replica": r, "op": x, "lb": lb[x], "val": ",".join(order)}


def random_scenario(rng, n_ops: int, n_replicas: int, n_clients: int = 2, p_prev: float = 0.3,
                    p_strict: float = 0.3, grow: bool = True) -> EsdsScenario:
    """A random scenario; with ``grow`` some replicas first appear with a later operation."""
    reps = [f"r{k}" for k in range(n_replicas)]
    initial = reps[:1] if grow else reps
    ops = []
    for k in range(n_ops):
        prev = tuple(o.id for o in ops if rng.random() < p_prev)
        ops.append(Operation(f"x{k}", f"c{rng.randrange(n_clients)}", rng.choice(reps), prev,
                             rng.random() < p_strict))
    return EsdsScenario(ops, initial)


def all_pids(esds: Esds) -> Iterable[str]:
    return sorted({h for pp in esds.programs() for h in pp.pids})


class EsdsRule:
    """Creation rule of the data service as a dynamic-spec rule."""

    def __init__(self, esds: Esds):
        from ..dynamic import CreateEvent

        self.esds = esds
        self.events_by_k = [CreateEvent(c.name, c.programs) for c in esds.creations]

    def events(self, cfg, step=None):
        for k, ev in enumerate(self.events_by_k):
            if cfg.alive(client_pid(self.esds.scenario.operations[k])):
                continue
            return [ev] if ready_to_create(self.esds, k, cfg.get_local) else []
        return []

    def allows(self, cfg, event, step=None) -> bool:
        return any(e.name == event.name for e in self.events(cfg, step))


def dynamic_spec(esds: Esds):
    """The data service as a dynamic specification with no initial pairs."""
    from ..dynamic import DynamicSpec

    return DynamicSpec([], EsdsRule(esds), name="esds")


def annotator(esds: Esds):
    """A simulate() hook recording the underlying lb_r updates."""
    owner = {}
    for c in esds.creations:
        for pp in c.programs:
            for h in pp.pids:
                owner.setdefault(h, c.op)
    labels: dict = {}

    def hook(agent, before, after):
        if not isinstance(agent, str) or not after.alive(agent):
            return None
        return lb_annotation(owner.get, labels, agent, before.get_local(agent), after.local(agent))

    hook.labels = labels
    return hook


def scenario_to_dict(scn: EsdsScenario) -> dict:
    return {"replicas": list(scn.replicas),
            "operations": [{"id": o.id, "client": o.client, "replica": o.replica, "prev": list(o.prev),
                            "strict": o.strict} for o in scn.operations]}


def scenario_from_dict(d: dict) -> EsdsScenario:
    try:
        ops = [Operation(o["id"], o["client"], o["replica"], tuple(o.get("prev", ())), bool(o.get("strict", False)))
               for o in d["operations"]]
    except (KeyError, TypeError) as e:
        raise InvalidScenario(f"malformed scenario: {e}") from None
    return EsdsScenario(ops, list(d.get("replicas", [])))
