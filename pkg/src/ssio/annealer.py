"""Maximum-entropy deterministic annealing for joint row selection and
imputation.

The relaxed problem keeps one inclusion probability ``q_i`` per row and
minimizes the free energy

    F(q, m) = cost(R(q, m)) - T * H(q) + mu * (sum(q) - r)

where ``R = sum_i q_i x_i x_i^T`` and ``H`` is the Bernoulli entropy of
``q``.  At each temperature the weights, the multiplier ``mu`` and the
missing cells ``m`` are iterated to a joint fixed point; the temperature
is then lowered geometrically and the weights harden to a 0/1 selection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq
from scipy.special import expit, xlogy

from .linalg import (
    HardDesign,
    IncompleteMatrix,
    InfeasibleError,
    RankDeficientError,
    Information,
    SingularInformationError,
    check_criterion,
    fisher_matrix,
    hard_cost,
)

logger = logging.getLogger(__name__)

EXP_CLAMP = 500.0
DESCENT_SLACK = 1e-12


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling schedule and inner-loop controls.

    ``T_init=None`` picks ten times the largest row gain at the uniform
    start; ``T_min=None`` means ``T_init * 1e-6``.
    """

    T_init: Optional[float] = None
    alpha: float = 0.9
    T_min: Optional[float] = None
    inner_max_iters: int = 500
    inner_tol: float = 1e-7
    mass_tol: float = 1e-6
    damping: float = 1.0
    min_damping: float = 1.0 / 16
    ridge: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.T_init is not None and self.T_init <= 0:
            raise ValueError("T_init must be positive")
        if self.T_min is not None and self.T_min <= 0:
            raise ValueError("T_min must be positive")
        if self.T_init is not None and self.T_min is not None and self.T_min >= self.T_init:
            raise ValueError("T_min must be below T_init")
        if not 0.0 < self.min_damping <= self.damping <= 1.0:
            raise ValueError("need 0 < min_damping <= damping <= 1")
        if self.inner_max_iters < 1 or self.inner_tol <= 0 or self.mass_tol <= 0:
            raise ValueError("inner-loop controls must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")


@dataclass(frozen=True)
class AnnealState:
    """Relaxed iterate of the annealer.

    ``X`` is the complete matrix with the current imputations written into
    the cells listed by ``problem.missing``.  ``trace`` holds one
    ``(T, free_energy, entropy)`` snapshot per finished temperature and
    ``energies`` the free energy after every inner cycle at the current
    temperature.
    """

    problem: IncompleteMatrix
    X: np.ndarray
    q: np.ndarray
    mu: float
    T: float
    r: int
    criterion: str = "A"
    free_energy: float = math.nan
    ridge: float = 0.0
    nu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    budget: object = None
    converged: bool = False
    iterations: int = 0
    energies: tuple = ()
    trace: tuple = ()

    @property
    def imputed(self) -> np.ndarray:
        return self.problem.extract(self.X)

    @property
    def mass(self) -> float:
        return float(np.sum(self.q))


def entropy(q) -> float:
    """Sum of Bernoulli entropies of the weights."""
    q = np.asarray(q, dtype=float)
    # adding 0.0 turns a negative zero into zero
    return float(-np.sum(xlogy(q, q) + xlogy(1.0 - q, 1.0 - q))) + 0.0


def information(X, q, criterion="A", ridge=0.0) -> Information:
    R = fisher_matrix(X, q)
    if ridge:
        R = R + ridge * np.eye(R.shape[0])
    return Information(R, criterion)


def _constraint_terms(q, r, mu, nu, budget) -> float:
    val = mu * (float(np.sum(q)) - r)
    if budget is not None and nu.size:
        val += float(nu @ (budget.costs.T @ q - budget.caps))
    return val


def free_energy(state: AnnealState, X=None, q=None) -> float:
    """Free energy of ``state``, optionally at substituted ``X`` or ``q``."""
    X = state.X if X is None else X
    q = state.q if q is None else q
    try:
        cost = information(X, q, state.criterion, state.ridge).cost
    except SingularInformationError:
        return math.inf
    return cost - state.T * entropy(q) + _constraint_terms(q, state.r, state.mu, state.nu, state.budget)


def initial_imputation(problem: IncompleteMatrix) -> np.ndarray:
    """Column mean of the known entries, clamped to each cell's bounds.

    Columns with no known entry fall back to the bound midpoint.
    """
    m = np.empty(problem.n_missing)
    known = ~np.isnan(problem.values)
    for t, (i, j) in enumerate(problem.missing):
        col = problem.values[known[:, j], j]
        lo, hi = problem.lower[t], problem.upper[t]
        if col.size:
            m[t] = min(max(float(col.mean()), lo), hi)
        else:
            m[t] = 0.5 * (lo + hi)
    return m


def initial_state(problem: IncompleteMatrix, r: int, criterion="A", T=1.0, ridge=0.0,
                  m_init=None) -> AnnealState:
    """Uniform weights ``q_i = r/n`` with mean-imputed missing cells."""
    criterion = check_criterion(criterion)
    n, p = problem.n, problem.p
    if not p <= r <= n:
        raise InfeasibleError(f"need p <= r <= n, got p={p}, r={r}, n={n}")
    m = initial_imputation(problem) if m_init is None else np.clip(m_init, problem.lower, problem.upper)
    X = problem.fill(m)
    q = np.full(n, r / n)
    state = AnnealState(problem=problem, X=X, q=q, mu=0.0, T=float(T), r=int(r),
                        criterion=criterion, ridge=float(ridge))
    return replace(state, free_energy=free_energy(state))


def _exponent(gains, mu, T, nu=None, budget=None):
    z = gains - mu
    if budget is not None and nu is not None and nu.size:
        z = z - budget.costs @ nu
    return np.clip(z / T, -EXP_CLAMP, EXP_CLAMP)


def q_update(state: AnnealState, damping: float = 1.0) -> np.ndarray:
    """Sigmoid weight update at the state's ``mu``, blended by ``damping``.

    ``q+_i = 1 / (1 + exp(-(g_i - mu) / T))`` with ``g_i = -d cost/d q_i``
    (``x_i^T R^-2 x_i`` for A-optimality).
    """
    info = information(state.X, state.q, state.criterion, state.ridge)
    q_plus = expit(_exponent(info.gains(state.X), state.mu, state.T, state.nu, state.budget))
    return (1.0 - damping) * state.q + damping * q_plus


def mu_update(state: AnnealState) -> float:
    """One multiplier step ``mu = T log(K / r)`` with
    ``K = sum_i 1 / (exp(-mu/T) + exp(-g_i/T))``.

    Evaluated in log-space so that small temperatures do not overflow.
    """
    info = information(state.X, state.q, state.criterion, state.ridge)
    g = info.gains(state.X)
    T = state.T
    # log K = -logsumexp per row, then logsumexp across rows
    log_terms = -np.logaddexp(-state.mu / T, -g / T)
    log_K = float(np.logaddexp.reduce(log_terms))
    if not math.isfinite(log_K):
        raise FloatingPointError("multiplier update produced a non-finite K")
    return T * (log_K - math.log(state.r))


def solve_mu(gains, T: float, r: int) -> float:
    """Fixed point of :func:`mu_update` for frozen gains.

    The fixed point is the root of ``sum_i sigmoid((g_i - mu)/T) = r``,
    which is monotone in ``mu``; it is bracketed and solved directly.
    """
    g = np.asarray(gains, dtype=float)
    n = g.size
    if r >= n:
        return float(g.min() - 2 * EXP_CLAMP * T)

    def excess(mu):
        return float(np.sum(expit((g - mu) / T))) - r

    lo = float(g.min()) - 40.0 * T
    hi = float(g.max()) + 40.0 * T
    return brentq(excess, lo, hi, xtol=1e-13 * T, rtol=4 * np.finfo(float).eps, maxiter=400)


def _cell_index(problem: IncompleteMatrix, cell) -> int:
    try:
        return problem.missing.index((int(cell[0]), int(cell[1])))
    except ValueError:
        raise KeyError(f"{tuple(cell)} is not a missing cell") from None


def impute_update_unconstrained(state: AnnealState, cell) -> float:
    """Coordinate value for cell ``(j, k)`` at which ``x_j^T W e_k = 0``
    with ``R`` held fixed (``W = R^-2`` for A, ``R^-1`` for D)."""
    j, k = int(cell[0]), int(cell[1])
    info = information(state.X, state.q, state.criterion, state.ridge)
    return info.cell_stationary(state.X[j], k)


class _CellEdit:
    """Exact cost change from editing one entry of one row.

    Moving ``x_jk`` by ``delta`` changes ``R`` by the rank-2 term
    ``U C U^T`` with ``U = [e_k, x_j]``; the Woodbury identity turns the new
    criterion value into 2x2 arithmetic on quantities formed once per cell.
    """

    __slots__ = ("a", "b", "q", "g11", "g12", "g22", "h11", "h12", "h22", "criterion", "cost", "p")

    def __init__(self, Rinv, cost, u, k, qj, criterion):
        a = Rinv[:, k]
        b = Rinv @ u
        self.a, self.b, self.q = a, b, float(qj)
        self.g11, self.g12, self.g22 = float(a[k]), float(b[k]), float(u @ b)
        self.h11, self.h12, self.h22 = float(a @ a), float(a @ b), float(b @ b)
        self.criterion, self.cost, self.p = criterion, cost, Rinv.shape[0]

    def stationary_shift(self) -> float:
        # A: x_j^T R^-2 e_k = a.b and e_k^T R^-2 e_k = a.a; D uses R^-1
        if self.criterion == "A":
            return -self.h12 / self.h11
        return -self.g12 / self.g11

    def gradient(self) -> float:
        if self.criterion == "A":
            return -2.0 * self.q * self.h12
        return -2.0 * self.q * (self.cost / self.p) * self.g12

    def _system(self, delta):
        c11, c12 = self.q * delta * delta, self.q * delta
        m11 = 1.0 + c11 * self.g11 + c12 * self.g12
        m12 = c11 * self.g12 + c12 * self.g22
        m21 = c12 * self.g11
        m22 = 1.0 + c12 * self.g12
        return c11, c12, m11, m12, m21, m22, m11 * m22 - m12 * m21

    def change(self, delta) -> float:
        """Criterion change for a move of ``delta``; ``inf`` if singular."""
        if delta == 0.0 or self.q == 0.0:
            return 0.0
        c11, c12, m11, m12, m21, m22, det = self._system(delta)
        if not det > 1e-13:
            return math.inf
        if self.criterion == "A":
            n11 = c11 * self.h11 + c12 * self.h12
            n12 = c11 * self.h12 + c12 * self.h22
            n21 = c12 * self.h11
            n22 = c12 * self.h12
            return -(m22 * n11 - m12 * n21 - m21 * n12 + m11 * n22) / det
        return self.cost * (det ** (-1.0 / self.p) - 1.0)

    def updated_inverse(self, Rinv, delta) -> np.ndarray:
        c11, c12, m11, m12, m21, m22, det = self._system(delta)
        Minv = np.array([[m22, -m12], [-m21, m11]]) / det
        K = Minv @ np.array([[c11, c12], [c12, 0.0]])
        V = np.column_stack((self.a, self.b))
        out = Rinv - V @ K @ V.T
        return 0.5 * (out + out.T)


def _boxed_move(edit: _CellEdit, current, lo, hi) -> float:
    """Box-feasible shift of one cell that never increases the cost.

    The local move (clamped stationary value, else an Armijo step) is
    compared with jumps to either bound, and the lowest cost wins.  Along
    one coordinate the cost is often lowest at a bound with an interior
    maximum in between, which a local step alone cannot cross.
    """
    if lo == hi:
        return lo - current if edit.change(lo - current) < math.inf else 0.0
    best, best_change = 0.0, 0.0
    local = _local_move(edit, current, lo, hi)
    if local != 0.0:
        best, best_change = local, edit.change(local)
    for bound in (lo, hi):
        step = bound - current
        if step != 0.0 and step != best:
            change = edit.change(step)
            if change < best_change:
                best, best_change = step, change
    return best


def _local_move(edit: _CellEdit, current, lo, hi) -> float:
    target = min(max(current + edit.stationary_shift(), lo), hi)
    if target == current:
        return 0.0
    if edit.change(target - current) <= 0.0:
        return target - current
    grad = edit.gradient()
    if grad == 0.0 or not math.isfinite(grad):
        return 0.0
    step = (lo if grad > 0 else hi) - current
    for _ in range(40):
        if step == 0.0:
            break
        if edit.change(step) <= -1e-4 * abs(grad * step):
            return step
        step *= 0.5
    return 0.0


def _sweep_cells(X, q, problem: IncompleteMatrix, info, criterion):
    """Update every missing cell in row-major order, in place on ``X``.

    Returns the largest absolute change of an imputed value.
    """
    Rinv, cost = info.Rinv, info.cost
    largest = 0.0
    for t, (j, k) in enumerate(problem.missing):
        edit = _CellEdit(Rinv, cost, X[j], k, q[j], criterion)
        current = X[j, k]
        delta = _boxed_move(edit, current, problem.lower[t], problem.upper[t])
        if delta != 0.0:
            Rinv = edit.updated_inverse(Rinv, delta)
            cost += edit.change(delta)
            X[j, k] = min(max(current + delta, problem.lower[t]), problem.upper[t])
            largest = max(largest, abs(delta))
    return largest


def impute_update_boxed(state: AnnealState, cell) -> float:
    """Box-feasible coordinate update for cell ``(j, k)``.

    The stationary value is clamped into ``[a, b]`` and kept if it does not
    raise the free energy; otherwise a backtracking (Armijo) step along the
    negative coordinate gradient, projected into the box, is taken.  That
    local move is then compared with both bounds and the cheapest of the
    three is returned.  With every other variable fixed the free energy
    never increases.
    """
    t = _cell_index(state.problem, cell)
    j, k = state.problem.missing[t]
    info = information(state.X, state.q, state.criterion, state.ridge)
    edit = _CellEdit(info.Rinv, info.cost, state.X[j], k, state.q[j], state.criterion)
    current = float(state.X[j, k])
    delta = _boxed_move(edit, current, state.problem.lower[t], state.problem.upper[t])
    return min(max(current + delta, state.problem.lower[t]), state.problem.upper[t])


class _Multipliers(NamedTuple):
    mu: float
    nu: np.ndarray


def _solve_multipliers(gains, state: AnnealState) -> _Multipliers:
    if state.budget is None:
        return _Multipliers(solve_mu(gains, state.T, state.r), state.nu)
    from .extensions import solve_budget_multipliers

    mu, nu = solve_budget_multipliers(gains, state.T, state.r, state.budget, state.mu, state.nu)
    return _Multipliers(mu, nu)


def _constraint_matrix(state: AnnealState) -> np.ndarray:
    rows = [np.ones(state.q.size)]
    if state.budget is not None:
        rows.extend(np.asarray(state.budget.costs, dtype=float).T)
    return np.vstack(rows)


def _newton_weights(state: AnnealState, info, f_old):
    """Equality-constrained Newton step on the convex weight subproblem.

    Used only when the damped sigmoid step fails to lower the free energy.
    Rows with saturated weights stay fixed; the step lies in the null space
    of the active equality constraints, so they remain satisfied.
    """
    q, T = state.q, state.T
    free = (q > 1e-10) & (q < 1.0 - 1e-10)
    if not free.any():
        return None
    X = state.X
    gains = info.gains(X)
    qf = q[free]
    grad = -gains[free] + T * (np.log(qf) - np.log1p(-qf))
    H = info.hessian(X)[np.ix_(free, free)] + np.diag(T / (qf * (1.0 - qf)))
    Z = null_space(_constraint_matrix(state)[:, free])
    if Z.shape[1] == 0:
        return None
    gz = Z.T @ grad
    try:
        dz = np.linalg.solve(Z.T @ H @ Z, -gz)
    except np.linalg.LinAlgError:
        return None
    d = Z @ dz
    slope = float(grad @ d)
    if not slope < 0:
        return None
    with np.errstate(divide="ignore"):
        limits = np.where(d < 0, qf / -d, np.where(d > 0, (1.0 - qf) / d, np.inf))
    t = min(1.0, 0.99 * float(limits.min()))
    # below this decrement the free energy cannot resolve the decrease
    tiny = -slope <= 1e-12 * max(1.0, abs(f_old))
    for _ in range(60):
        q_try = q.copy()
        q_try[free] = qf + t * d
        try:
            info_try = information(X, q_try, state.criterion, state.ridge)
        except SingularInformationError:
            info_try = None
        if info_try is not None:
            f_try = info_try.cost - T * entropy(q_try) + _constraint_terms(
                q_try, state.r, state.mu, state.nu, state.budget)
            if f_try <= f_old + 1e-4 * t * slope or (
                    tiny and f_try <= f_old + DESCENT_SLACK * max(1.0, abs(f_old))):
                return q_try, info_try
        t *= 0.5
    return None


def _damped_weights(state, info, q_plus, f_old, damping, schedule):
    lam = damping
    while True:
        q_try = (1.0 - lam) * state.q + lam * q_plus
        try:
            info_try = information(state.X, q_try, state.criterion, state.ridge)
        except SingularInformationError:
            info_try = None
        if info_try is not None:
            f_try = info_try.cost - state.T * entropy(q_try) + _constraint_terms(
                q_try, state.r, state.mu, state.nu, state.budget)
            if f_try <= f_old + DESCENT_SLACK * max(1.0, abs(f_old)):
                return q_try, info_try, lam
        if lam * 0.5 < schedule.min_damping:
            return None
        lam *= 0.5


def _cycle(state: AnnealState, schedule: AnnealSchedule, newton: bool):
    """One inner cycle: multipliers, weights, then every missing cell.

    The weight step is the sigmoid fixed-point update, damped when it
    would raise the free energy.  With ``newton`` set (or when no damping
    down to ``min_damping`` helps) a constrained Newton step on the same
    convex weight subproblem is used instead.

    Returns ``(new_state, damping, residual, accepted)`` where ``residual``
    is the larger of the undamped weight residual and the largest change of
    an imputed value; ``damping`` is ``None`` when the Newton step was used.
    """
    crit, ridge = state.criterion, state.ridge
    info = information(state.X, state.q, crit, ridge)
    gains = info.gains(state.X)
    mult = _solve_multipliers(gains, state)
    q_plus = expit(_exponent(gains, mult.mu, state.T, mult.nu, state.budget))
    state = replace(state, mu=mult.mu, nu=mult.nu)
    f_old = info.cost - state.T * entropy(state.q) + _constraint_terms(
        state.q, state.r, mult.mu, mult.nu, state.budget)
    residual = float(np.max(np.abs(q_plus - state.q)))

    q_new, info_new, lam = state.q, info, None
    step = None
    if residual >= schedule.inner_tol:
        if not newton:
            step = _damped_weights(state, info, q_plus, f_old, schedule.damping, schedule)
        if step is None:
            step = _newton_weights(state, info, f_old)
            if step is not None:
                step = (*step, None)
        if step is None and newton:
            step = _damped_weights(state, info, q_plus, f_old, schedule.damping, schedule)
    accepted = step is not None
    if accepted:
        q_new, info_new, lam = step

    X = np.array(state.X)
    if state.problem.n_missing:
        moved = _sweep_cells(X, q_new, state.problem, info_new, crit)
        if moved:
            residual = max(residual, moved)
            accepted = True
            info_new = information(X, q_new, crit, ridge)

    f_new = info_new.cost - state.T * entropy(q_new) + _constraint_terms(
        q_new, state.r, mult.mu, mult.nu, state.budget)
    return replace(state, X=X, q=q_new, free_energy=f_new), lam, residual, accepted


NEWTON_AFTER = 10


def inner_fixed_point(state: AnnealState, schedule: AnnealSchedule = AnnealSchedule()) -> AnnealState:
    """Iterate weights, multipliers and imputations at fixed temperature.

    Stops when the undamped weight residual and the change of every
    imputed value drop below ``schedule.inner_tol`` with the mass
    constraint met, or after ``inner_max_iters`` cycles.  A weight step
    that would raise the free energy is retried with halved damping down
    to ``min_damping``.  Once damping was needed, or after
    ``NEWTON_AFTER`` slow cycles, the remaining cycles at this temperature
    take constrained Newton steps on the weight subproblem.  The free
    energy is non-increasing from cycle to cycle; a cycle that cannot
    lower it ends the loop.
    """
    energies = [state.free_energy]
    converged = False
    newton = False
    it = 0
    for it in range(1, schedule.inner_max_iters + 1):
        state, lam, residual, accepted = _cycle(state, schedule, newton or it > NEWTON_AFTER)
        energies.append(state.free_energy)
        if lam is None or lam < schedule.damping:
            newton = True
        if residual < schedule.inner_tol and abs(state.mass - state.r) <= schedule.mass_tol:
            converged = True
            break
        if not accepted:
            break
    if not converged:
        logger.debug("inner loop at T=%.3g stopped after %d cycles unconverged", state.T, it)
    return replace(state, converged=converged, iterations=it, energies=tuple(energies))


def harden(q, X, r: int, criterion="A") -> HardDesign:
    """Select the ``r`` rows with largest weight (ties go to lower index)."""
    q = np.asarray(q, dtype=float)
    order = np.argsort(-q, kind="stable")
    s = np.zeros(q.size, dtype=int)
    s[order[:r]] = 1
    X = np.asarray(X, dtype=float)
    criterion = check_criterion(criterion)
    return HardDesign(s=s, imputed=X, cost=hard_cost(X, s, criterion), criterion=criterion)


def default_t_init(state: AnnealState) -> float:
    info = information(state.X, state.q, state.criterion, state.ridge)
    return 10.0 * float(np.max(info.gains(state.X)))


def anneal_states(problem: IncompleteMatrix, r: int, schedule: AnnealSchedule = AnnealSchedule(),
                  criterion="A", budget=None, prepare=None):
    """Yield the converged state at every temperature of the schedule.

    ``prepare``, if given, maps the starting state (at ``T_init``, with the
    budget attached) to the state the first inner loop starts from.
    """
    try:
        state = initial_state(problem, r, criterion, ridge=schedule.ridge)
        T = schedule.T_init if schedule.T_init is not None else default_t_init(state)
    except SingularInformationError as exc:
        raise RankDeficientError("initial design matrix is rank deficient") from exc
    T_min = schedule.T_min if schedule.T_min is not None else T * 1e-6
    if budget is not None:
        state = replace(state, budget=budget, nu=np.zeros(budget.caps.size))
    if prepare is not None:
        state = prepare(replace(state, T=T))
    trace = []
    while True:
        state = replace(state, T=T)
        state = replace(state, free_energy=free_energy(state))
        state = inner_fixed_point(state, schedule)
        trace.append((T, state.free_energy, entropy(state.q)))
        state = replace(state, trace=tuple(trace))
        yield state
        T *= schedule.alpha
        if T <= T_min:
            break


def anneal(problem: IncompleteMatrix, r: int, schedule: AnnealSchedule = AnnealSchedule(),
           criterion="A", seed: int = 0):
    """Anneal from uniform weights down to ``T_min`` and harden.

    Returns ``(final_state, design)``.  The iteration is deterministic;
    ``seed`` is accepted for interface parity with the randomized
    baselines and does not influence the result.
    """
    if isinstance(problem, np.ndarray):
        problem = IncompleteMatrix.complete(problem)
    state = None
    for state in anneal_states(problem, r, schedule, criterion):
        pass
    try:
        design = harden(state.q, state.X, r, state.criterion)
    except SingularInformationError as exc:
        raise RankDeficientError("hardened selection is rank deficient") from exc
    return state, design


@dataclass(frozen=True)
class DescentReport:
    """Numerical check that the weight and multiplier updates are descent
    steps in logit coordinates.

    ``xi_rel_error`` is the worst relative error between the sigmoid update
    written in ``xi = -log(q/(1-q))`` and the explicit gradient step
    ``xi - gamma * dF/dxi`` (``dF/dxi`` by central differences).
    ``k_bar`` is the mean-value point recovered from the multiplier step;
    it lies between ``sum(q)`` and ``r``.
    """

    xi_rel_error: float
    xi_checked: int
    xi_skipped: int
    k_bar: float
    mass: float
    r: int
    mu_step: float
    k_bar_between: bool


def theorem1_check(state: AnnealState, h: float = 1e-5) -> DescentReport:
    """Verify the descent interpretation of the weight and ``mu`` updates.

    The weight check uses the step ``gamma_i = (e^{xi/2} + e^{-xi/2})^2 / T``.
    The multiplier step moves by ``T log(sum(q)/r)``, which equals
    ``(T / k_bar) dF/dmu`` for the logarithmic mean ``k_bar``.
    """
    T = state.T
    info = information(state.X, state.q, state.criterion, state.ridge)
    gains = info.gains(state.X)
    with np.errstate(divide="ignore"):
        xi = -np.log(state.q) + np.log1p(-state.q)
    xi_plus = -(gains - state.mu) / T

    def energy_at(xi_vec):
        qv = expit(-xi_vec)
        return free_energy(state, q=qv)

    worst, checked, skipped = 0.0, 0, 0
    for i in range(state.q.size):
        qi = state.q[i]
        if not (1e-12 < qi < 1 - 1e-12) or not np.isfinite(xi[i]):
            skipped += 1
            continue
        step = h * max(1.0, abs(xi[i]))
        up, dn = xi.copy(), xi.copy()
        up[i] += step
        dn[i] -= step
        dF = (energy_at(up) - energy_at(dn)) / (2 * step)
        gamma = (math.exp(xi[i] / 2) + math.exp(-xi[i] / 2)) ** 2 / T
        predicted = xi[i] - gamma * dF
        err = abs(predicted - xi_plus[i]) / max(abs(xi_plus[i]), abs(xi[i]), 1.0)
        worst = max(worst, err)
        checked += 1

    # the mean-value point of log between sum(q) and r, with q the weights
    # implied by the current multiplier
    implied = expit(_exponent(gains, state.mu, T))
    mass = float(np.sum(implied))
    mu_plus = mu_update(state)
    step_mu = mu_plus - state.mu
    if abs(mass - state.r) <= 1e-12 * state.r or step_mu == 0.0:
        k_bar = float(state.r)
        between = True
    else:
        k_bar = T * (mass - state.r) / step_mu
        between = min(mass, state.r) < k_bar < max(mass, state.r)
    return DescentReport(xi_rel_error=worst, xi_checked=checked, xi_skipped=skipped, k_bar=k_bar,
                         mass=mass, r=state.r, mu_step=step_mu, k_bar_between=bool(between))
