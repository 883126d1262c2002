"""Comparison methods and exhaustive oracles.

The sequential baselines impute first (column means) and select second
(Fedorov exchange or uniform sampling).  ``direct_joint`` optimizes the
relaxed criterion over weights and imputations at once, without
annealing.  The brute-force routines enumerate every subset and serve as
ground truth on small instances; they evaluate criteria through batched
eigenvalues rather than the Cholesky path used elsewhere.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .annealer import harden, initial_imputation, information
from .linalg import (
    HardDesign,
    IncompleteMatrix,
    InfeasibleError,
    RankDeficientError,
    SingularInformationError,
    check_criterion,
    hard_cost,
)

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10**6
JOINT_LIMIT = 10**7


@dataclass(frozen=True)
class MethodResult:
    method: str
    design: HardDesign
    wall_time: float
    iterations: int
    converged: bool
    info: dict = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return self.design.cost


def batch_cost(R, criterion="A") -> np.ndarray:
    """Criterion values for a stack of information matrices.

    Singular members get ``+inf``.
    """
    criterion = check_criterion(criterion)
    R = np.asarray(R, dtype=float)
    lam = np.linalg.eigvalsh(R)
    p = R.shape[-1]
    ok = lam[..., 0] > p * 1e-13 * np.maximum(lam[..., -1], np.finfo(float).tiny)
    safe = np.where(ok[..., None], lam, 1.0)
    if criterion == "A":
        out = np.sum(1.0 / safe, axis=-1)
    else:
        out = np.exp(-np.mean(np.log(safe), axis=-1))
    return np.where(ok, out, np.inf)


def _complete(X):
    if isinstance(X, IncompleteMatrix):
        if X.n_missing:
            raise ValueError("matrix still has missing cells; impute first")
        X = X.values
    X = np.asarray(X, dtype=float)
    if np.isnan(X).any():
        raise ValueError("matrix still has missing cells; impute first")
    return X


def _design(X, s, criterion) -> HardDesign:
    try:
        cost = hard_cost(X, s, criterion)
    except SingularInformationError:
        cost = math.inf
    return HardDesign(s=np.asarray(s, dtype=int), imputed=np.asarray(X, dtype=float), cost=cost,
                      criterion=criterion)


def mean_impute(problem: IncompleteMatrix) -> np.ndarray:
    """Fill each missing cell with its column's known mean, clamped to the
    cell's bounds; columns with nothing known use the bound midpoint."""
    return problem.fill(initial_imputation(problem))


def fedorov_exchange(X, r: int, criterion="A", seed: int = 0, restarts: int = 5) -> MethodResult:
    """Best-improvement exchange from a random full-rank start.

    Every (selected, unselected) swap is scored and the best strictly
    improving one is applied until none improves.  Up to ``restarts``
    random starts are drawn to find a full-rank one.
    """
    t0 = time.perf_counter()
    criterion = check_criterion(criterion)
    X = _complete(X)
    n, p = X.shape
    if not p <= r <= n:
        raise InfeasibleError(f"need p <= r <= n, got p={p}, r={r}, n={n}")
    rng = np.random.default_rng(seed)
    outer = np.einsum("ni,nj->nij", X, X)
    for _ in range(restarts):
        sel = np.zeros(n, dtype=bool)
        sel[rng.choice(n, size=r, replace=False)] = True
        cost = float(batch_cost(outer[sel].sum(axis=0), criterion))
        if math.isfinite(cost):
            break
    else:
        raise RankDeficientError(f"no full-rank start found in {restarts} draws")

    trace = [cost]
    swaps = 0
    while True:
        inside, outside = np.flatnonzero(sel), np.flatnonzero(~sel)
        if outside.size == 0:
            break
        R = outer[sel].sum(axis=0)
        cand = R[None, None] - outer[inside][:, None] + outer[outside][None, :]
        costs = batch_cost(cand, criterion)
        flat = int(np.argmin(costs))
        best = float(costs.flat[flat])
        if not best < cost * (1.0 - 1e-12):
            break
        a, b = divmod(flat, outside.size)
        sel[inside[a]] = False
        sel[outside[b]] = True
        cost = best
        trace.append(cost)
        swaps += 1
    design = _design(X, sel.astype(int), criterion)
    return MethodResult("fedorov", design, time.perf_counter() - t0, swaps, True,
                        {"cost_trace": trace})


def uniform_sample(X, r: int, criterion="A", seed: int = 0) -> MethodResult:
    """``r`` rows drawn uniformly without replacement.

    Rank-deficient draws are reported with infinite cost, not redrawn.
    """
    t0 = time.perf_counter()
    criterion = check_criterion(criterion)
    X = _complete(X)
    n = X.shape[0]
    if not 0 < r <= n:
        raise InfeasibleError(f"need 0 < r <= n, got r={r}, n={n}")
    s = np.zeros(n, dtype=int)
    s[np.random.default_rng(seed).choice(n, size=r, replace=False)] = 1
    return MethodResult("uniform", _design(X, s, criterion), time.perf_counter() - t0, 1, True)


def project_capped_simplex(v, r: float) -> np.ndarray:
    """Euclidean projection onto ``{q in [0,1]^n : sum(q) = r}``."""
    v = np.asarray(v, dtype=float)
    if np.all((v >= 0) & (v <= 1)) and abs(v.sum() - r) <= 1e-12 * max(1.0, r):
        return v.copy()
    if not 0 <= r <= v.size:
        raise ValueError("r must lie in [0, n]")

    def excess(tau):
        return float(np.clip(v - tau, 0.0, 1.0).sum()) - r

    tau = brentq(excess, float(v.min()) - 1.0, float(v.max()), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return np.clip(v - tau, 0.0, 1.0)


def _relaxed(problem, X, q, criterion):
    try:
        return information(X, q, criterion)
    except SingularInformationError:
        return None


def direct_joint(problem: IncompleteMatrix, r: int, criterion="A", seed: int = 0,
                 max_iter: int = 2000, tol: float = 1e-10) -> MethodResult:
    """Projected-gradient descent on the relaxed criterion, no annealing.

    Starts from uniform weights and mean imputation, moves weights on the
    capped simplex and imputations inside their boxes with an Armijo
    backtracking step, and hardens the final weights.  ``seed`` is unused
    (the method is deterministic).
    """
    t0 = time.perf_counter()
    criterion = check_criterion(criterion)
    if isinstance(problem, np.ndarray):
        problem = IncompleteMatrix.complete(problem)
    n, p = problem.n, problem.p
    if not p <= r <= n:
        raise InfeasibleError(f"need p <= r <= n, got p={p}, r={r}, n={n}")
    rows, cols = problem.rows, problem.cols
    lo, hi = problem.lower, problem.upper
    q = np.full(n, r / n)
    X = mean_impute(problem)
    start = np.zeros(n, dtype=int)
    start[:r] = 1  # hardening uniform weights keeps the first r rows
    info = _relaxed(problem, X, q, criterion)
    if info is None:
        raise RankDeficientError("relaxed start is rank deficient")
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gq = -info.gains(X)
        if problem.n_missing:
            W = info.W
            gm = -2.0 * q[rows] * info.scale * np.einsum("ij,ij->i", X[rows] @ W, np.eye(p)[cols])
        moved = False
        while step > 1e-20:
            q_new = project_capped_simplex(q - step * gq, r)
            X_new = X.copy()
            if problem.n_missing:
                X_new[rows, cols] = np.clip(X[rows, cols] - step * gm, lo, hi)
            dq = q_new - q
            dm = X_new[rows, cols] - X[rows, cols] if problem.n_missing else np.zeros(0)
            decrease = float(gq @ dq) + (float(gm @ dm) if problem.n_missing else 0.0)
            cand = _relaxed(problem, X_new, q_new, criterion)
            if cand is not None and cand.cost <= info.cost + 1e-4 * decrease:
                moved = True
                break
            step *= 0.5
        if not moved:
            converged = True
            break
        change = max(float(np.max(np.abs(dq))), float(np.max(np.abs(dm), initial=0.0)))
        q, X, info = q_new, X_new, cand
        step *= 2.0
        if change < tol:
            converged = True
            break
    try:
        design = harden(q, X, r, criterion)
    except SingularInformationError:
        design = _design(X, (np.argsort(-q, kind="stable")[:r, None] == np.arange(n)).any(0).astype(int),
                         criterion)
    hamming = int(np.sum(design.s != start))
    logger.debug("direct_joint: %d iterations, hamming distance from start %d", it, hamming)
    return MethodResult("direct", design, time.perf_counter() - t0, it, converged,
                        {"hamming_from_start": hamming, "relaxed_cost": info.cost})


def _subset_costs(X, subsets, criterion):
    Xs = X[subsets]
    R = np.einsum("cri,crj->cij", Xs, Xs)
    return batch_cost(R, criterion)


def brute_force_select(X, r: int, criterion="A", chunk: int = 20000) -> HardDesign:
    """Exact optimum over all ``r``-subsets of the rows of a complete matrix.

    Ties go to the first subset in lexicographic index order.
    """
    criterion = check_criterion(criterion)
    X = _complete(X)
    n = X.shape[0]
    total = math.comb(n, r)
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError(f"C({n},{r}) = {total} subsets exceeds the limit {BRUTE_FORCE_LIMIT}")
    best_cost, best = math.inf, None
    combos = itertools.combinations(range(n), r)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=int)
        if block.size == 0:
            break
        costs = _subset_costs(X, block, criterion)
        i = int(np.argmin(costs))
        if costs[i] < best_cost:
            best_cost, best = float(costs[i]), block[i]
    if best is None:
        raise RankDeficientError("every subset is rank deficient")
    s = np.zeros(n, dtype=int)
    s[best] = 1
    return HardDesign(s=s, imputed=X.copy(), cost=best_cost, criterion=criterion)


def grid_resolution(problem: IncompleteMatrix, grid_points: int) -> np.ndarray:
    """Spacing of the per-cell grids used by :func:`brute_force_joint`."""
    return (problem.upper - problem.lower) / max(grid_points - 1, 1)


def brute_force_joint(problem: IncompleteMatrix, r: int, criterion="A", grid_points: int = 51) -> HardDesign:
    """Exhaustive search over subsets and a uniform grid for every missing cell.

    The grid includes both bounds of each cell.  The result is optimal on
    the grid; :func:`grid_resolution` gives the spacing.
    """
    criterion = check_criterion(criterion)
    n, k = problem.n, problem.n_missing
    total = math.comb(n, r) * grid_points**k
    if total > JOINT_LIMIT:
        raise ValueError(f"{total} evaluations exceeds the limit {JOINT_LIMIT}")
    if k == 0:
        return brute_force_select(problem.values, r, criterion)
    grids = [np.linspace(a, b, grid_points) if a < b else np.array([a])
             for a, b in zip(problem.lower, problem.upper)]
    subsets = np.array(list(itertools.combinations(range(n), r)), dtype=int)
    best_cost, best_s, best_m = math.inf, None, None
    for m in itertools.product(*grids):
        X = problem.fill(m)
        costs = _subset_costs(X, subsets, criterion)
        i = int(np.argmin(costs))
        if costs[i] < best_cost:
            best_cost, best_s, best_m = float(costs[i]), subsets[i], m
    if best_s is None:
        raise RankDeficientError("every subset is rank deficient on the grid")
    s = np.zeros(n, dtype=int)
    s[best_s] = 1
    logger.info("joint oracle grid spacing: %s", grid_resolution(problem, grid_points))
    return HardDesign(s=s, imputed=problem.fill(best_m), cost=best_cost, criterion=criterion)
