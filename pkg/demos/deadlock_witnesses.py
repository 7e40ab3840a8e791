"""Small systems that deadlock, and what each analysis reports about them.

    python3 demos/deadlock_witnesses.py
"""

from pairsynth import dynamic as D
from pairsynth.corpora import toys
from pairsynth.errors import DeadlockReached
from pairsynth.mc import check_deadlock_free
from pairsynth.structure import build_product_structure
from pairsynth.waitfor import (
    build_wfg,
    check_dynamic_wfg_condition,
    check_static_wfg_condition,
    find_supercycle,
)

for name, sp in [("mutual wait", toys.mutual_wait()), ("ring of 4", toys.ring_wait(4)), ("trap", toys.trap())]:
    print(f"== {name}")
    rep = check_static_wfg_condition(sp)
    print(f"  static condition: {rep.ok}; witness {rep.witness}")
    m = build_product_structure(sp)
    dl = check_deadlock_free(m)
    print(f"  product ({m.n} states) deadlock-free: {dl.ok}; stuck at {dl.witness}")
    if not dl.ok:
        sc = find_supercycle(build_wfg(dl.witness, sp))
        print(f"  supercycle at that state: processes {sc.processes}")

print("\n== a create that installs a deadlocked pair")
ds = toys.deadlocked_create()
print(f"  dynamic condition: {check_dynamic_wfg_condition(ds, bound=200).witness}")
tr = D.simulate(ds, steps=40)
print(f"  simulation ends: {tr.end} (the new pair never moves; the old one keeps running)")
try:
    D.simulate(D.DynamicSpec(list(toys.mutual_wait().pairs.values())))
except DeadlockReached as e:
    print(f"  simulating the mutual wait alone: DeadlockReached at {e.config!r}")
