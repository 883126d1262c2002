import math
from dataclasses import replace

import numpy as np
import pytest

from ssio import hard_cost
from ssio.baselines import brute_force_joint, grid_resolution
from ssio.bench import (
    CSV_COLUMNS,
    METHODS,
    TABLE1,
    InstanceSpec,
    RatioReport,
    ReportRow,
    emit_report,
    generate_instance,
    read_report,
    run_comparison,
)

MICRO = InstanceSpec("micro", 8, 2, 0.125, 3, (-1, 2))


@pytest.fixture(scope="module")
def micro_report():
    return run_comparison([MICRO], range(4))


class TestInstances:
    @pytest.mark.parametrize("spec, count", [(TABLE1[0], 10), (TABLE1[1], 8), (TABLE1[2], 13),
                                             (TABLE1[3], 24), (TABLE1[4], 15), (TABLE1[5], 15)])
    def test_missing_counts(self, spec, count):
        P = generate_instance(spec)
        assert (P.n, P.p) == (spec.n, spec.p)
        assert P.n_missing == count

    def test_bounds_are_value_range(self):
        P = generate_instance(TABLE1[0])
        assert np.all(P.lower == -1) and np.all(P.upper == 2)
        known = P.values[~np.isnan(P.values)]
        assert known.min() >= -1 and known.max() <= 2

    def test_complete_when_nothing_missing(self):
        assert generate_instance(InstanceSpec("c", 6, 2, 0.0, 3, (0, 1))).n_missing == 0

    def test_deterministic(self):
        a, b = generate_instance(TABLE1[3]), generate_instance(TABLE1[3])
        np.testing.assert_array_equal(a.values, b.values)
        assert a.missing == b.missing

    def test_seeds_differ(self):
        a = generate_instance(TABLE1[0])
        b = generate_instance(replace(TABLE1[0], seed=1))
        assert not np.array_equal(np.nan_to_num(a.values), np.nan_to_num(b.values))

    @pytest.mark.parametrize("kwargs", [dict(missing_fraction=1.0), dict(r=1), dict(value_range=(2, 1))])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            replace(TABLE1[0], **kwargs)


class TestComparison:
    def test_ssio_only_ratios_are_one(self):
        rep = run_comparison([MICRO], range(3), methods=["ssio"])
        assert len(rep.rows) == 3
        assert np.all(rep.ratios("ssio") == 1.0)
        assert rep.summary() == "ssio only"

    def test_row_count_and_order(self, micro_report):
        rows = micro_report.rows
        assert len(rows) == 4 * len(METHODS)
        assert [r.method for r in rows[:len(METHODS)]] == list(METHODS)
        assert [r.seed for r in rows] == sorted(r.seed for r in rows)

    def test_costs_recompute(self, micro_report):
        for row in micro_report.rows:
            P = generate_instance(replace(MICRO, seed=row.seed))
            X = P.values.copy()
            for i, j, v in row.imputed:
                X[i - 1, j - 1] = v
            assert not np.isnan(X).any()
            s = np.array([int(c) for c in row.s])
            assert hard_cost(X, s) == pytest.approx(row.cost, rel=1e-10)

    def test_costs_above_joint_oracle(self, micro_report):
        for seed in range(4):
            P = generate_instance(replace(MICRO, seed=seed))
            oracle = brute_force_joint(P, 3, grid_points=51)
            # first-order bound on how far the continuous optimum can sit below the grid optimum
            h = grid_resolution(P, 51)
            m = P.extract(oracle.imputed)
            slack = 0.0
            for k in range(P.n_missing):
                up, dn = m.copy(), m.copy()
                up[k] = min(m[k] + 1e-6, P.upper[k])
                dn[k] = max(m[k] - 1e-6, P.lower[k])
                d = (hard_cost(P.fill(up), oracle.s) - hard_cost(P.fill(dn), oracle.s)) / (up[k] - dn[k])
                slack += abs(d) * h[k]
            for row in micro_report.rows:
                if row.seed == seed:
                    assert row.cost >= oracle.cost - slack, (row.method, row.cost, oracle.cost, slack)

    def test_failures_are_recorded(self, monkeypatch):
        import ssio.bench as bench
        from ssio import InfeasibleError

        def broken(*args, **kwargs):
            raise InfeasibleError("no start")

        monkeypatch.setattr(bench, "fedorov_exchange", broken)
        rep = run_comparison([MICRO], [0], methods=["ssio", "mean+fedorov", "mean+uniform"])
        failed = [r for r in rep.rows if r.method == "mean+fedorov"][0]
        assert math.isnan(failed.cost) and "no start" in failed.error
        assert all(math.isfinite(r.cost) for r in rep.rows if r is not failed)

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            run_comparison([MICRO], [0], methods=["magic"])

    def test_parallel_matches_serial(self, micro_report):
        par = run_comparison([MICRO], range(4), workers=2)
        assert [(r.cost, r.s, r.imputed) for r in par.rows] == [(r.cost, r.s, r.imputed)
                                                                for r in micro_report.rows]


class TestAggregates:
    def _report(self, ratios):
        return RatioReport([ReportRow("x", k, "mean+uniform", 1.0, r, 0.0, True) for k, r in enumerate(ratios)])

    def test_geometric_mean_skips_infinite_baselines(self):
        rep = self._report([0.5, 2.0, 0.0])
        assert rep.geometric_mean_ratio("mean+uniform") == pytest.approx(1.0)

    def test_win_rate(self):
        rep = self._report([0.5, 1.0, 1.5, math.nan])
        assert rep.win_rate("mean+uniform") == pytest.approx(0.5)


class TestEmit:
    def test_empty_report_is_header_only(self, tmp_path):
        path = emit_report(RatioReport([]), "csv", tmp_path / "r.csv")
        assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip(self, tmp_path, fmt, micro_report):
        one = RatioReport(micro_report.rows[:1])
        path = emit_report(one, fmt, tmp_path / f"r.{fmt}", timings=True)
        back = read_report(path).rows
        assert len(back) == 1
        a, b = one.rows[0], back[0]
        for name in ("instance_id", "seed", "method", "cost", "ratio_to_ssio", "wall_time_s", "converged"):
            assert getattr(a, name) == getattr(b, name)
        if fmt == "json":
            assert (a.s, a.imputed) == (b.s, b.imputed)

    def test_timings_go_to_sidecar(self, tmp_path, micro_report):
        path = emit_report(micro_report, "csv", tmp_path / "r.csv")
        back = read_report(path)
        assert all(math.isnan(r.wall_time_s) for r in back.rows)
        side = (tmp_path / "timings.csv").read_text().splitlines()
        assert len(side) == len(micro_report.rows) + 1

    def test_byte_identical(self, tmp_path, micro_report):
        again = run_comparison([MICRO], range(4))
        a = emit_report(micro_report, "json", tmp_path / "a.json")
        b = emit_report(again, "json", tmp_path / "b.json")
        assert a.read_bytes() == b.read_bytes()

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError, match="cannot write"):
            emit_report(RatioReport([]), "csv", tmp_path / "missing" / "r.csv")

    def test_full_suite_row_count(self):
        # six instances, one seed, every method
        rep = run_comparison(TABLE1, [0])
        assert len(rep.rows) == 6 * 1 * len(METHODS)
