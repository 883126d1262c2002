"""Compare the annealer with the two-step baselines on the Table-1 shapes.

Each instance is drawn several times with different seeds.  For every
run we record the cost ratio annealer / method, so values below 1 mean
the annealer found the cheaper design.

Run with ``python demos/03_table1_comparison.py [seeds]`` (default 3).
"""

import sys

import numpy as np

from ssio import run_comparison
from ssio.bench import METHODS, TABLE1

seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
report = run_comparison(TABLE1, range(seeds))

print(f"median ratio annealer/method over {seeds} seeds")
print(f"{'instance':<10}" + "".join(f"{m:>14}" for m in METHODS[1:]))
for spec in TABLE1:
    cells = []
    for m in METHODS[1:]:
        r = [row.ratio_to_ssio for row in report.rows if row.instance_id == spec.instance_id and row.method == m]
        cells.append(f"{np.median(r):14.3f}")
    print(f"{spec.instance_id:<10}" + "".join(cells))
print()
print(report.summary())
