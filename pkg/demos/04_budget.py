"""Select rows under a resource budget.

Each row now has a cost in two resources (say, hours and reagent) and the
expected spend of the relaxed selection is pinned to a cap for each.
The annealer keeps both budgets satisfied at every temperature.

Run with ``python demos/04_budget.py``.
"""

import numpy as np

from ssio import BudgetSpec, anneal, constrained_anneal, generate_instance
from ssio.bench import TABLE1

spec = TABLE1[1]
problem = generate_instance(spec)
rng = np.random.default_rng(1)
costs = rng.uniform(0.5, 2.0, size=(problem.n, 2))

# caps at 90% of what a uniform selection would spend
caps = 0.9 * costs.T @ np.full(problem.n, spec.r / problem.n)
budget = BudgetSpec(costs, caps)

_, free = anneal(problem, spec.r)
state, capped = constrained_anneal(problem, spec.r, budget=budget)

print(f"caps                       {np.round(caps, 4)}")
print(f"relaxed spend at T_min     {np.round(costs.T @ state.q, 4)}")
print(f"spend of hardened subset   {np.round(costs.T @ capped.s, 4)}")
print(f"spend without a budget     {np.round(costs.T @ free.s, 4)}")
print(f"A-cost without / with      {free.cost:.5f} / {capped.cost:.5f}")
print(f"budget multipliers         {np.round(state.nu, 5)}")

# a budget that asks only for r rows changes nothing
same = BudgetSpec(np.ones((problem.n, 1)), [spec.r])
_, replica = constrained_anneal(problem, spec.r, budget=same)
print(f"cardinality-only budget reproduces the free run: {replica.bitstring == free.bitstring}")
