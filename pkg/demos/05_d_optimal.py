"""A- and D-optimal selections of the same matrix.

The A criterion averages parameter variances; the D criterion measures
the volume of the confidence ellipsoid.  Both run through the same
annealer and usually agree on most rows.

Run with ``python demos/05_d_optimal.py``.
"""

import numpy as np

from ssio import anneal, brute_force_select, d_anneal, hard_cost

rng = np.random.default_rng(3)
X = rng.normal(size=(12, 3))
r = 4

_, a_design = anneal(X, r, criterion="A")
_, d_design = d_anneal(X, r)

for name, crit, design in (("A", "A", a_design), ("D", "D", d_design)):
    best = brute_force_select(X, r, crit)
    print(f"{name}-optimal rows {np.flatnonzero(design.s) + 1}  cost {design.cost:.5f}  "
          f"exhaustive optimum {best.cost:.5f}")

print(f"A-cost of the D design {hard_cost(X, d_design.s, 'A'):.5f}")
print(f"D-cost of the A design {hard_cost(X, a_design.s, 'D'):.5f}")
print(f"rows shared            {int(np.sum(a_design.s & d_design.s))} of {r}")
