"""D-optimal annealing and budget-constrained selection.

A budget attaches a nonnegative cost vector ``c_i`` to every row and asks
the relaxed selection to spend exactly ``kappa``::

    sum_i q_i = r,        sum_i c_i q_i = kappa.

Each constraint gets a multiplier (``mu`` for the mass, ``nu_l`` per
budget feature) and the weight update becomes

    q_i = sigmoid((g_i - mu - c_i . nu) / T).

For frozen gains the multipliers that make the update satisfy every
constraint minimize the convex dual

    psi(y) = sum_i softplus(g_i/T - a_i . y) + b . y,    y = (mu, nu) / T,

with ``a_i = (1, c_i)`` and ``b = (r, kappa)``; :func:`solve_budget_multipliers`
runs a damped Newton iteration on ``psi``.  :func:`eta_update` gives the
exact one-coordinate fixed point in ``eta_l = exp(-nu_l / T)`` form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .annealer import (
    AnnealSchedule,
    AnnealState,
    _exponent,
    anneal,
    anneal_states,
    harden,
    information,
    solve_mu,
)
from .linalg import IncompleteMatrix, InfeasibleError, RankDeficientError, SingularInformationError

logger = logging.getLogger(__name__)

PRECHECK_STEPS = 200
BUDGET_TOL = 1e-4
MAX_REACH = 50.0


@dataclass(frozen=True)
class BudgetSpec:
    """Per-row resource costs and the exact amount to spend.

    Parameters
    ----------
    costs : ndarray, shape (n, m)
        Row ``i`` holds the cost vector ``c_i``; entries are nonnegative.
    caps : ndarray, shape (m,)
        Budget ``kappa``; nonnegative.
    """

    costs: np.ndarray
    caps: np.ndarray

    def __post_init__(self):
        costs = np.array(self.costs, dtype=float)
        if costs.ndim == 1:
            costs = costs[:, None]
        caps = np.array(self.caps, dtype=float).reshape(-1)
        if costs.ndim != 2 or costs.shape[1] != caps.size:
            raise ValueError(f"costs {costs.shape} do not match caps {caps.shape}")
        if not (np.all(np.isfinite(costs)) and np.all(np.isfinite(caps))):
            raise ValueError("budget entries must be finite")
        if np.any(costs < 0) or np.any(caps < 0):
            raise ValueError("budget costs and caps must be nonnegative")
        costs.setflags(write=False)
        caps.setflags(write=False)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "caps", caps)

    @property
    def n_features(self) -> int:
        return self.caps.size

    def residual(self, q) -> np.ndarray:
        return self.costs.T @ np.asarray(q, dtype=float) - self.caps

    def subset(self, features) -> "BudgetSpec":
        features = np.asarray(features, dtype=int)
        return BudgetSpec(self.costs[:, features], self.caps[features])


def budget_q_update(state: AnnealState, budget: BudgetSpec, nu) -> np.ndarray:
    """Weight update with the budget penalty ``c_i . nu`` in the exponent.

    With ``nu = 0`` the result is bitwise equal to :func:`q_update`.
    """
    nu = np.asarray(nu, dtype=float)
    info = information(state.X, state.q, state.criterion, state.ridge)
    return expit(_exponent(info.gains(state.X), state.mu, state.T, nu, budget))


class EtaUpdate(NamedTuple):
    eta: float
    nu: float
    flag: str  # "ok", "inactive" or "saturated"


def eta_update(state: AnnealState, budget: BudgetSpec, nu, l: int) -> EtaUpdate:
    """Fixed point of the ``eta_l = exp(-nu_l / T)`` update.

    Holds ``mu`` and the other multipliers fixed and returns the value of
    ``eta_l`` at which ``sum_i c_il q_i = kappa_l``.  A feature with no
    cost and no cap is ``"inactive"`` (``eta`` left unchanged); a cap that
    can only be met in the limit ``q_i -> 0`` or ``q_i -> 1`` on the costed
    rows is ``"saturated"`` (``eta`` is 0 or ``inf``).
    """
    nu = np.array(nu, dtype=float)
    T = state.T
    c = budget.costs[:, l]
    kappa = float(budget.caps[l])
    if not np.any(c > 0):
        if kappa == 0.0:
            return EtaUpdate(math.exp(-nu[l] / T), float(nu[l]), "inactive")
        raise InfeasibleError(f"budget feature {l} has no costs but cap {kappa}")
    total = float(c.sum())
    if kappa == 0.0:
        return EtaUpdate(0.0, math.inf, "saturated")
    if kappa >= total:
        if kappa > total * (1 + 1e-12):
            raise InfeasibleError(f"budget feature {l}: cap {kappa} exceeds total cost {total}")
        return EtaUpdate(math.inf, -math.inf, "saturated")

    info = information(state.X, state.q, state.criterion, state.ridge)
    nu_rest = nu.copy()
    nu_rest[l] = 0.0
    base = info.gains(state.X) - state.mu - budget.costs @ nu_rest

    def excess(v):
        return float(c @ expit((base - c * v) / T)) - kappa

    lo, hi = -T, T
    while excess(lo) < 0:
        lo *= 2.0
    while excess(hi) > 0:
        hi *= 2.0
    v = brentq(excess, lo, hi, xtol=1e-13 * T, rtol=4 * np.finfo(float).eps, maxiter=400)
    return EtaUpdate(math.exp(min(-v / T, 700.0)), float(v), "ok")


def _constraints(budget: BudgetSpec, r):
    n = budget.costs.shape[0]
    A = np.column_stack((np.ones(n), budget.costs))
    b = np.concatenate(([float(r)], budget.caps))
    return A, b


def _dual_newton(z0, A, b, y, tol, max_iter):
    """Damped Newton on ``psi(y) = sum softplus(z0 - A y) + b.y``.

    Returns ``(y, converged)``.
    """

    def dual(yv):
        z = z0 - A @ yv
        return float(np.sum(np.logaddexp(0.0, z)) + b @ yv), expit(z)

    psi, s = dual(y)
    for _ in range(max_iter):
        grad = b - A.T @ s
        if float(np.max(np.abs(grad))) <= tol:
            return y, True
        H = (A.T * (s * (1.0 - s))) @ A
        ridge = 1e-12 * max(float(np.trace(H)), 1e-300)
        try:
            step = np.linalg.solve(H + ridge * np.eye(H.shape[0]), -grad)
        except np.linalg.LinAlgError:
            step = -grad
        # beyond a few dozen units in z the sigmoids are saturated anyway
        reach = float(np.max(np.abs(A @ step)))
        if reach > MAX_REACH:
            step *= MAX_REACH / reach
        slope = float(grad @ step)
        t = 1.0
        for _ in range(60):
            psi_try, s_try = dual(y + t * step)
            if psi_try <= psi + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return y, False
        y, psi, s = y + t * step, psi_try, s_try
    grad = b - A.T @ s
    return y, float(np.max(np.abs(grad))) <= tol


def solve_budget_multipliers(gains, T: float, r, budget: BudgetSpec, mu0: float = 0.0, nu0=None,
                             tol: float = 1e-12, max_iter: int = 200):
    """Multipliers ``(mu, nu)`` at which the sigmoid weights meet every
    equality constraint for the given gains.

    Damped Newton on the convex dual, started from ``(mu0, nu0)``.  At low
    temperature the dual is nearly piecewise linear and a cold start can
    stall, so without a usable start (or when it fails) the solve is
    continued down from a temperature where the dual is smooth.  When a
    cap can only be met in a limit the multipliers grow until the
    residual falls below ``tol`` relative to the constraint scale, or the
    iteration budget runs out.
    """
    g = np.asarray(gains, dtype=float)
    A, b = _constraints(budget, r)
    tol_abs = tol * max(1.0, float(np.max(np.abs(b))))
    nu0 = np.zeros(budget.n_features) if nu0 is None or np.size(nu0) == 0 else np.asarray(nu0, float)
    lam = np.concatenate(([mu0], nu0))
    if np.all(np.isfinite(lam)) and np.any(nu0):
        y, ok = _dual_newton(g / T, A, b, lam / T, tol_abs, max_iter)
        if ok:
            return float(T * y[0]), T * y[1:]

    T_hi = max(T, 10.0 * float(np.ptp(g)))
    stages = max(0, math.ceil(math.log(T_hi / T) / math.log(4.0)))
    temps = [T * 4.0**k for k in range(stages, -1, -1)]
    lam = np.concatenate(([solve_mu(g, temps[0], r)], np.zeros(nu0.size)))
    for k, Tk in enumerate(temps):
        last = k == len(temps) - 1
        y, _ = _dual_newton(g / Tk, A, b, lam / Tk, tol_abs if last else 1e-8 * max(1.0, tol_abs / tol),
                            max_iter)
        lam = Tk * y
    return float(lam[0]), lam[1:]


def independent_features(budget: BudgetSpec, r) -> np.ndarray:
    """Budget features that add a constraint beyond the mass and the
    features before them.

    A feature whose cost column is zero with zero cap, or whose constraint
    is implied by the others, is dropped; an implied but contradictory one
    raises :class:`InfeasibleError`.
    """
    A, b = _constraints(budget, r)
    keep = [0]
    for l in range(budget.n_features):
        cols = keep + [l + 1]
        if np.linalg.matrix_rank(A[:, cols]) > len(keep):
            keep.append(l + 1)
        elif np.linalg.matrix_rank(np.vstack((A[:, cols], b[cols]))) > np.linalg.matrix_rank(A[:, cols]):
            raise InfeasibleError(f"budget feature {l} contradicts the other constraints")
    return np.array(keep[1:], dtype=int) - 1


def feasibility_precheck(budget: BudgetSpec, r, steps: int = PRECHECK_STEPS, tol: float = BUDGET_TOL):
    """Look for ``q`` in ``[0,1]^n`` with ``sum(q) = r`` and ``C^T q = kappa``.

    Alternates projections onto the affine constraint set and the box,
    with a half-step of relaxation.  Returns the box-feasible point found
    and raises :class:`InfeasibleError` when its constraint residual
    exceeds ``tol``.
    """
    A, b = _constraints(budget, r)
    n = A.shape[0]
    if not 0 <= r <= n:
        raise InfeasibleError(f"need 0 <= r <= n, got r={r}, n={n}")
    pinv = np.linalg.pinv(A.T)
    q = np.full(n, r / n)
    for _ in range(steps):
        affine = q - pinv @ (A.T @ q - b)
        q = np.clip(q + 1.5 * (affine - q), 0.0, 1.0)
    q = np.clip(q - pinv @ (A.T @ q - b), 0.0, 1.0)
    res = A.T @ q - b
    worst = float(np.max(np.abs(res)))
    if worst > tol:
        raise InfeasibleError(
            f"budget looks infeasible: mass residual {res[0]:.3g}, budget residuals {np.array2string(res[1:], precision=3)}")
    return q


def _initial_weights(state: AnnealState) -> AnnealState:
    info = information(state.X, state.q, state.criterion, state.ridge)
    gains = info.gains(state.X)
    mu, nu = solve_budget_multipliers(gains, state.T, state.r, state.budget)
    q = expit(_exponent(gains, mu, state.T, nu, state.budget))
    return replace(state, q=q, mu=mu, nu=nu)


def constrained_anneal(problem: IncompleteMatrix, r: int, schedule: AnnealSchedule = AnnealSchedule(),
                       budget: BudgetSpec = None, seed: int = 0, budget_tol: float = BUDGET_TOL,
                       criterion="A"):
    """Anneal under a budget, returning ``(final_state, design)``.

    Redundant or vacuous budget features are dropped first, so a budget
    that only restates ``sum(q) = r`` reproduces :func:`anneal` exactly.
    The weights start on the constraint set and every weight step keeps
    them there.  ``seed`` is unused.

    Raises
    ------
    InfeasibleError
        When the precheck finds no feasible relaxed weights, or when the
        final weights miss a budget by more than ``budget_tol``.
    """
    if isinstance(problem, np.ndarray):
        problem = IncompleteMatrix.complete(problem)
    if budget is None:
        return anneal(problem, r, schedule, criterion, seed)
    if budget.costs.shape[0] != problem.n:
        raise ValueError(f"budget has {budget.costs.shape[0]} rows, matrix has {problem.n}")
    feasibility_precheck(budget, r, tol=budget_tol)
    keep = independent_features(budget, r)
    dropped = budget.n_features - keep.size
    if dropped:
        logger.info("dropping %d redundant or vacuous budget feature(s)", dropped)
    if keep.size == 0:
        state, design = anneal(problem, r, schedule, criterion, seed)
        return replace(state, budget=budget, nu=np.zeros(budget.n_features)), design

    reduced = budget.subset(keep)
    state = None
    for state in anneal_states(problem, r, schedule, criterion, budget=reduced, prepare=_initial_weights):
        res = float(np.max(np.abs(reduced.residual(state.q))))
        if state.converged and res > budget_tol:
            logger.warning("budget residual %.3g at T=%.3g exceeds %.3g", res, state.T, budget_tol)
    residual = budget.residual(state.q)
    mass = state.mass - r
    if float(np.max(np.abs(residual))) > budget_tol or abs(mass) > schedule.mass_tol:
        raise InfeasibleError(
            f"constraints not met: mass residual {mass:.3g}, budget residuals "
            f"{np.array2string(residual, precision=3)}")
    nu = np.zeros(budget.n_features)
    nu[keep] = state.nu
    state = replace(state, budget=budget, nu=nu)
    try:
        design = harden(state.q, state.X, r, state.criterion)
    except SingularInformationError as exc:
        raise RankDeficientError("hardened selection is rank deficient") from exc
    return state, design


def d_anneal(problem: IncompleteMatrix, r: int, schedule: AnnealSchedule = AnnealSchedule(), seed: int = 0):
    """D-optimal annealing, ``cost = det(R)^(-1/p)``.

    The weight exponent uses ``-d cost/d q_i = (cost/p) x_i^T R^-1 x_i``.
    """
    return anneal(problem, r, schedule, "D", seed)
