"""Run the ring with single-cell reads and writes, then replay what happened.

    python3 demos/low_atomicity.py [seed]
"""

import sys

from pairsynth import dynamic as D
from pairsynth.corpora import twophase as T
from pairsynth.lowatom import lin_lines, run

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
ds = T.dynamic_spec(4)
props = D.props_from_table(T.trace_properties(4))

for mode, kw in [("stepper", {"poll_rates": {"ab": 0.01}}), ("free", {"timeout": 10})]:
    res, verdict = run(ds, mode, seed, **kw)
    print(f"== {mode}: end {res.end}, {len(res.records)} linearization points, stats {res.stats}")
    for line in lin_lines(res.records)[:6]:
        print("  " + line)
    print(f"  replay valid: {verdict.valid}; trace properties hold: {D.check_trace(verdict.trace, props).ok}")
    final = verdict.trace.configs()[-1]
    print(f"  outcome: {'commit' if final.truth('0', 'cm') else 'abort'}\n")
