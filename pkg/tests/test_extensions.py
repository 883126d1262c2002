import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import expit

from conftest import random_problem
from ssio import (
    AnnealSchedule,
    BudgetSpec,
    IncompleteMatrix,
    InfeasibleError,
    anneal,
    brute_force_select,
    budget_q_update,
    constrained_anneal,
    d_anneal,
    eta_update,
    initial_state,
    inner_fixed_point,
    q_update,
)
from ssio.annealer import anneal_states, free_energy, information, solve_mu
from ssio.extensions import feasibility_precheck, independent_features, solve_budget_multipliers


def _state(problem, r, T, q=None, mu=0.0):
    s = initial_state(problem, r, T=T)
    if q is not None:
        s = replace(s, q=np.asarray(q, float))
    s = replace(s, mu=mu)
    return replace(s, free_energy=free_energy(s))


class TestBudgetSpec:
    def test_vector_costs_become_a_column(self):
        b = BudgetSpec([1, 2, 3], [2])
        assert b.costs.shape == (3, 1) and b.n_features == 1

    @pytest.mark.parametrize("costs, caps", [([[1], [-1]], [1]), ([[1], [1]], [-1]), ([[1, 2]], [1]),
                                             ([[np.inf]], [1])])
    def test_invalid(self, costs, caps):
        with pytest.raises(ValueError):
            BudgetSpec(costs, caps)


class TestBudgetQUpdate:
    def test_zero_nu_is_bitwise_q_update(self, rng):
        P = random_problem(rng, n=9, p=3, n_missing=2)
        s = _state(P, 4, T=0.3, q=rng.uniform(0.1, 0.9, 9), mu=0.4)
        b = BudgetSpec(rng.uniform(0, 1, (9, 2)), [1.0, 1.0])
        assert np.array_equal(budget_q_update(s, b, np.zeros(2)), q_update(s))

    def test_doubling_a_cost_lowers_that_weight(self, rng):
        P = random_problem(rng, n=8, p=2, n_missing=0)
        s = _state(P, 3, T=0.5, q=rng.uniform(0.2, 0.8, 8))
        costs = rng.uniform(0.5, 1, (8, 2))
        nu = np.array([0.3, 0.2])
        base = budget_q_update(s, BudgetSpec(costs, [1, 1]), nu)
        costs2 = costs.copy()
        costs2[5, 0] *= 2
        bumped = budget_q_update(s, BudgetSpec(costs2, [1, 1]), nu)
        assert bumped[5] < base[5]
        np.testing.assert_array_equal(np.delete(bumped, 5), np.delete(base, 5))


class TestEtaUpdate:
    def test_vacuous_feature_is_inactive(self, rng):
        P = random_problem(rng, n=6, p=2, n_missing=0)
        s = _state(P, 3, T=1.0)
        costs = np.column_stack((rng.uniform(0, 1, 6), np.zeros(6)))
        out = eta_update(s, BudgetSpec(costs, [1.0, 0.0]), [0.0, 0.7], 1)
        assert out.flag == "inactive" and out.nu == 0.7

    def test_zero_cap_saturates(self, rng):
        P = random_problem(rng, n=6, p=2, n_missing=0)
        out = eta_update(_state(P, 3, T=1.0), BudgetSpec(np.ones((6, 1)), [0.0]), [0.0], 0)
        assert out.flag == "saturated" and out.eta == 0.0

    def test_redundant_feature_needs_no_penalty(self, rng):
        P = random_problem(rng, n=8, p=2, n_missing=0)
        s = inner_fixed_point(_state(P, 3, T=0.5), AnnealSchedule(inner_tol=1e-12))
        out = eta_update(s, BudgetSpec(np.ones((8, 1)), [3.0]), [0.0], 0)
        assert out.flag == "ok"
        assert out.nu == pytest.approx(0.0, abs=1e-8)
        assert out.eta == pytest.approx(1.0, abs=1e-8)

    def test_two_row_toy(self):
        P = IncompleteMatrix.complete(np.array([[1.0], [1.5]]))
        b = BudgetSpec(np.array([[1.0], [2.0]]), [1.4])
        s = _state(P, 1, T=0.5)
        g = information(s.X, s.q).gains(s.X)
        # scalar alternation between the mass and the budget multiplier
        nu = np.zeros(1)
        for _ in range(200):
            mu = solve_mu(g - b.costs @ nu, s.T, 1)
            out = eta_update(replace(s, mu=mu), b, nu, 0)
            nu = np.array([out.nu])
        q = expit((g - mu - b.costs @ nu) / s.T)
        assert b.costs[:, 0] @ q == pytest.approx(1.4, abs=1e-4)
        assert q.sum() == pytest.approx(1.0, abs=1e-4)
        mu2, nu2 = solve_budget_multipliers(g, s.T, 1, b)
        q2 = expit((g - mu2 - b.costs @ nu2) / s.T)
        np.testing.assert_allclose(q2, [0.6, 0.4], atol=1e-10)

    def test_cap_above_total_is_infeasible(self, rng):
        P = random_problem(rng, n=4, p=1, n_missing=0)
        with pytest.raises(InfeasibleError):
            eta_update(_state(P, 2, T=1.0), BudgetSpec(np.ones((4, 1)), [5.0]), [0.0], 0)


class TestMultipliers:
    def test_meets_every_constraint(self, rng):
        for T in (5.0, 0.1, 1e-3):
            g = rng.uniform(0, 2, 15)
            C = rng.uniform(0, 1, (15, 2))
            q0 = np.full(15, 0.4)
            b = BudgetSpec(C, C.T @ q0)
            mu, nu = solve_budget_multipliers(g, T, 6, b)
            q = expit((g - mu - C @ nu) / T)
            assert q.sum() == pytest.approx(6, abs=1e-9)
            np.testing.assert_allclose(C.T @ q, b.caps, atol=1e-9)

    def test_redundant_features_dropped(self):
        b = BudgetSpec(np.column_stack((np.ones(5), np.arange(5.0), 2 * np.ones(5), np.zeros(5))),
                       [2, 3, 4, 0])
        np.testing.assert_array_equal(independent_features(b, 2), [1])

    def test_contradictory_replica(self):
        with pytest.raises(InfeasibleError):
            independent_features(BudgetSpec(np.ones((5, 1)), [3.0]), 2)


class TestPrecheck:
    def test_feasible_point_returned(self, rng):
        C = rng.uniform(0, 1, (10, 2))
        b = BudgetSpec(C, C.T @ np.full(10, 0.3))
        q = feasibility_precheck(b, 3)
        assert np.all((q >= 0) & (q <= 1))
        assert q.sum() == pytest.approx(3, abs=1e-4)

    def test_infeasible_reports_residuals(self):
        with pytest.raises(InfeasibleError, match="residual"):
            feasibility_precheck(BudgetSpec(np.ones((6, 1)) * [[1.0]], [10.0]), 3)


class TestConstrainedAnneal:
    def test_cardinality_replica_matches_unconstrained(self, rng):
        P = random_problem(rng, n=12, p=3, n_missing=3)
        s0, d0 = anneal(P, 5)
        s1, d1 = constrained_anneal(P, 5, budget=BudgetSpec(np.ones((12, 1)), [5.0]))
        assert np.array_equal(d0.s, d1.s)
        np.testing.assert_allclose(s1.q, s0.q, atol=1e-6)
        assert np.array_equal(d0.imputed, d1.imputed)

    def test_unique_feasible_point(self):
        C = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
        q_star = np.array([0.2, 0.3, 0.5])
        oracle = np.linalg.solve(np.vstack((np.ones(3), C.T)), np.concatenate(([1.0], C.T @ q_star)))
        state, _ = constrained_anneal(np.array([[1.0], [2.0], [3.0]]), 1, budget=BudgetSpec(C, C.T @ q_star))
        np.testing.assert_allclose(state.q, oracle, atol=1e-4)

    def test_residuals_at_every_converged_loop(self, rng):
        P = random_problem(rng, n=6, p=2, n_missing=0)
        C = rng.uniform(0, 1, (6, 2))
        b = BudgetSpec(C, C.T @ np.array([0.5, 0.2, 0.4, 0.3, 0.3, 0.3]))
        state, design = constrained_anneal(P, 2, budget=b)
        assert abs(state.mass - 2) <= 1e-6
        assert np.max(np.abs(b.residual(state.q))) <= 1e-4
        assert design.s.sum() == 2

    def test_every_temperature_meets_constraints(self, rng):
        from ssio.extensions import _initial_weights

        P = random_problem(rng, n=10, p=2, n_missing=2)
        C = rng.uniform(0, 1, (10, 1))
        b = BudgetSpec(C, C.T @ np.full(10, 0.4))
        for s in anneal_states(P, 4, AnnealSchedule(alpha=0.6), budget=b, prepare=_initial_weights):
            assert abs(s.mass - 4) <= 1e-6
            assert np.max(np.abs(b.residual(s.q))) <= 1e-4

    def test_infeasible_budget(self, rng):
        P = random_problem(rng, n=6, p=2, n_missing=0)
        with pytest.raises(InfeasibleError):
            constrained_anneal(P, 2, budget=BudgetSpec(np.ones((6, 1)), [7.0]))

    def test_row_count_mismatch(self, rng):
        P = random_problem(rng, n=6, p=2, n_missing=0)
        with pytest.raises(ValueError, match="rows"):
            constrained_anneal(P, 2, budget=BudgetSpec(np.ones((5, 1)), [2.0]))


class TestDAnneal:
    def test_identity(self):
        _, d = d_anneal(np.eye(3), 3)
        assert d.bitstring == "111" and d.cost == pytest.approx(1.0)

    def test_near_optimum(self):
        for seed in range(5):
            X = np.random.default_rng(100 + seed).normal(size=(8, 2))
            _, d = d_anneal(X, 3)
            assert d.cost <= 1.05 * brute_force_select(X, 3, "D").cost

    def test_single_column_ranking_matches_a(self, rng):
        X = rng.normal(size=(7, 1))
        q = rng.uniform(0.2, 0.8, 7)
        order = []
        for crit in ("A", "D"):
            s = initial_state(IncompleteMatrix.complete(X), 3, crit, T=0.5)
            s = replace(s, q=q)
            order.append(np.argsort(q_update(s), kind="stable"))
        np.testing.assert_array_equal(*order)

    def test_d_cost_exponent_finite_differences(self, rng):
        for _ in range(10):
            X = rng.normal(size=(6, 2))
            q = rng.uniform(0.2, 0.9, 6)
            g = information(X, q, "D").gains(X)
            i, h = rng.integers(6), 1e-6
            up, dn = q.copy(), q.copy()
            up[i] += h
            dn[i] -= h
            fd = -(information(X, up, "D").cost - information(X, dn, "D").cost) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-5)
            assert math.isfinite(g[i])
