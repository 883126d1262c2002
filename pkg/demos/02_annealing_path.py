"""Watch the relaxed weights harden as the temperature falls.

At high temperature the entropy term dominates and every row carries
the same weight r/n.  As T drops, the weights separate and end close to
a 0/1 selection.  The script prints the free energy, the entropy and the
spread of the weights at a few temperatures along the way.

Run with ``python demos/02_annealing_path.py``.
"""

import numpy as np

from ssio import AnnealSchedule, generate_instance
from ssio.annealer import anneal_states, harden
from ssio.bench import TABLE1

spec = TABLE1[0]
problem = generate_instance(spec)
print(f"{spec.instance_id}: {spec.n}x{spec.p}, {problem.n_missing} missing cells, select {spec.r}")
print(f"{'T':>12} {'free energy':>14} {'entropy':>10} {'min q':>8} {'max q':>8} {'cycles':>7}")

state = None
for k, state in enumerate(anneal_states(problem, spec.r, AnnealSchedule(alpha=0.8))):
    if k % 8 == 0:
        print(f"{state.T:12.4e} {state.free_energy:14.6f} {state.trace[-1][2]:10.4f} "
              f"{state.q.min():8.4f} {state.q.max():8.4f} {state.iterations:7d}")

design = harden(state.q, state.X, spec.r)
print(f"hardened selection {design.bitstring}, A-cost {design.cost:.6f}")
undecided = np.sum(np.minimum(state.q, 1 - state.q) > 1e-3)
print(f"rows with weight still away from 0 and 1 at the last temperature: {undecided}")
