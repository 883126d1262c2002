"""Seeded benchmark suite: random incomplete matrices, every method on
each, and cost ratios against the annealer.

Each (instance, seed) pair draws from its own PCG64 stream, keyed by the
seed and a checksum of the instance id, so a report does not depend on
which other instances ran or in what order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annealer import AnnealSchedule, anneal_states, entropy, harden
from .baselines import MethodResult, direct_joint, fedorov_exchange, mean_impute, uniform_sample
from .linalg import HardDesign, IncompleteMatrix, InfeasibleError, RankDeficientError, SingularInformationError

logger = logging.getLogger(__name__)

METHODS = ("ssio", "mean+ssio", "mean+fedorov", "mean+uniform", "direct")
CSV_COLUMNS = ("instance_id", "seed", "method", "cost", "ratio_to_ssio", "wall_time_s", "converged")


@dataclass(frozen=True)
class InstanceSpec:
    """Shape of one random benchmark instance.

    ``ceil(missing_fraction * n * p)`` cells go missing at distinct
    uniformly random positions; known values are i.i.d. uniform on
    ``value_range``, which also bounds every missing cell.
    """

    instance_id: str
    n: int
    p: int
    missing_fraction: float
    r: int
    value_range: tuple
    seed: int = 0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.value_range)
        object.__setattr__(self, "value_range", (lo, hi))
        if not lo < hi:
            raise ValueError("value_range needs lo < hi")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")
        if not 1 <= self.p <= self.r <= self.n:
            raise ValueError(f"need p <= r <= n, got n={self.n}, p={self.p}, r={self.r}")

    @property
    def n_missing(self) -> int:
        # the small offset keeps products like 0.1625 * 80 from rounding up past 13
        return math.ceil(self.missing_fraction * self.n * self.p - 1e-9)


TABLE1 = (
    InstanceSpec("E1", 20, 4, 0.125, 11, (-1, 2)),
    InstanceSpec("E2", 20, 4, 0.10, 12, (0, 4)),
    InstanceSpec("E3", 20, 4, 0.1625, 12, (-2, 2)),
    InstanceSpec("E4", 20, 5, 0.24, 11, (0, 1)),
    InstanceSpec("E5", 30, 5, 0.10, 12, (5, 10)),
    InstanceSpec("E6", 30, 5, 0.10, 6, (5, 10)),
)


def instance_rng(spec: InstanceSpec) -> np.random.Generator:
    key = zlib.crc32(spec.instance_id.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(spec.seed), key])))


def generate_instance(spec: InstanceSpec) -> IncompleteMatrix:
    """Draw the matrix described by ``spec`` (deterministic in its seed)."""
    rng = instance_rng(spec)
    lo, hi = spec.value_range
    values = rng.uniform(lo, hi, size=(spec.n, spec.p))
    flat = np.sort(rng.choice(spec.n * spec.p, size=spec.n_missing, replace=False))
    cells = [(int(f // spec.p), int(f % spec.p)) for f in flat]
    k = len(cells)
    return IncompleteMatrix(values, cells, np.full(k, lo), np.full(k, hi))


@dataclass(frozen=True)
class ReportRow:
    instance_id: str
    seed: int
    method: str
    cost: float
    ratio_to_ssio: float
    wall_time_s: float
    converged: bool
    s: str = ""
    imputed: tuple = ()
    error: str = ""
    info: dict = field(default_factory=dict, compare=False)


@dataclass
class RatioReport:
    """Rows in canonical order (instance, seed, method) plus aggregates."""

    rows: list = field(default_factory=list)

    def ratios(self, method: str) -> np.ndarray:
        return np.array([row.ratio_to_ssio for row in self.rows if row.method == method], dtype=float)

    def geometric_mean_ratio(self, method: str) -> float:
        """Geometric mean of ``cost_ssio / cost_method`` over runs where both
        costs are finite and positive."""
        r = self.ratios(method)
        r = r[np.isfinite(r) & (r > 0)]
        return float(np.exp(np.mean(np.log(r)))) if r.size else math.nan

    def win_rate(self, method: str) -> float:
        """Share of runs where the annealer's cost is no larger than ``method``'s.

        A failed or infinite-cost baseline counts as a win; a failed
        annealer run counts as a loss.
        """
        r = self.ratios(method)
        if r.size == 0:
            return math.nan
        wins = np.where(np.isnan(r), False, r <= 1.0)
        return float(np.mean(wins))

    def methods(self) -> list:
        return sorted({row.method for row in self.rows}, key=_method_key)

    def summary(self) -> str:
        parts = []
        for m in self.methods():
            if m == "ssio":
                continue
            parts.append(f"{m}: geo-mean ratio {self.geometric_mean_ratio(m):.4f}, "
                         f"win rate {self.win_rate(m):.3f}")
        return "; ".join(parts) if parts else "ssio only"


def _method_key(name):
    return (METHODS.index(name) if name in METHODS else len(METHODS), name)


def run_ssio(problem: IncompleteMatrix, r: int, schedule: AnnealSchedule, criterion="A",
             method="ssio") -> MethodResult:
    """Anneal and harden, collecting per-run diagnostics.

    ``info`` holds the largest free-energy rise inside any inner loop, the
    largest mass residual at a converged inner loop, the weight spread at
    the first temperature and the largest ``min(q, 1-q)`` at the last.
    """
    t0 = time.perf_counter()
    cycles, loops, unconverged = 0, 0, 0
    rise, mass_res, spread = 0.0, 0.0, math.nan
    state = None
    for state in anneal_states(problem, r, schedule, criterion):
        e = np.asarray(state.energies)
        if e.size > 1:
            rise = max(rise, float(np.max(np.diff(e))))
        if state.converged:
            mass_res = max(mass_res, abs(state.mass - r))
        else:
            unconverged += 1
        if loops == 0:
            spread = float(np.max(np.abs(state.q - r / problem.n)))
        cycles += state.iterations
        loops += 1
    try:
        design = harden(state.q, state.X, r, criterion)
    except SingularInformationError as exc:
        raise RankDeficientError("hardened selection is rank deficient") from exc
    info = {
        "max_energy_rise": rise,
        "max_mass_residual": mass_res,
        "initial_spread": spread,
        "final_saturation": float(np.max(np.minimum(state.q, 1.0 - state.q))),
        "temperatures": loops,
        "unconverged_loops": unconverged,
        "final_entropy": entropy(state.q),
        "trace": state.trace,
    }
    return MethodResult(method, design, time.perf_counter() - t0, cycles, unconverged == 0, info)


def _run_method(method, problem, r, seed, schedule, criterion) -> MethodResult:
    if method == "ssio":
        return run_ssio(problem, r, schedule, criterion)
    if method == "direct":
        return direct_joint(problem, r, criterion, seed)
    X = mean_impute(problem)
    if method == "mean+ssio":
        return run_ssio(IncompleteMatrix.complete(X), r, schedule, criterion, method)
    if method == "mean+fedorov":
        return replace(fedorov_exchange(X, r, criterion, seed), method=method)
    if method == "mean+uniform":
        return replace(uniform_sample(X, r, criterion, seed), method=method)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _imputed_cells(problem: IncompleteMatrix, design: HardDesign) -> tuple:
    # 1-based, matching the matrix file formats
    return tuple((i + 1, j + 1, float(design.imputed[i, j])) for i, j in problem.missing)


def _run_cell(args):
    spec, seed, methods, schedule, criterion = args
    spec = replace(spec, seed=seed)
    problem = generate_instance(spec)
    results = {}
    for m in methods:
        try:
            results[m] = _run_method(m, problem, spec.r, seed, schedule, criterion)
        except (InfeasibleError, SingularInformationError, ValueError, FloatingPointError) as exc:
            logger.warning("%s seed %d method %s failed: %s", spec.instance_id, seed, m, exc)
            results[m] = exc
    ref = results.get("ssio")
    ref_cost = ref.cost if isinstance(ref, MethodResult) else math.nan
    rows = []
    for m in methods:
        res = results[m]
        if isinstance(res, Exception):
            rows.append(ReportRow(spec.instance_id, seed, m, math.nan, math.nan, math.nan, False,
                                  error=f"{type(res).__name__}: {res}"))
            continue
        rows.append(ReportRow(spec.instance_id, seed, m, res.cost, _ratio(ref_cost, res.cost), res.wall_time,
                              res.converged, res.design.bitstring, _imputed_cells(problem, res.design),
                              info=res.info))
    return rows


def _ratio(ref, cost):
    if math.isnan(ref) or math.isnan(cost):
        return math.nan
    if ref == cost:
        return 1.0
    if math.isinf(cost):
        return 0.0
    return ref / cost


def run_comparison(specs, seeds, methods=METHODS, schedule: AnnealSchedule = AnnealSchedule(),
                   criterion="A", workers: int = 1) -> RatioReport:
    """Run every method on every (spec, seed) and collect cost ratios.

    ``ratio_to_ssio`` is ``cost_ssio / cost_method``: below 1 means the
    annealer found the cheaper design.  A method that raises is recorded
    with ``nan`` cost and its error message, and the run continues.
    """
    specs, seeds, methods = list(specs), [int(s) for s in seeds], list(methods)
    if not specs or not seeds or not methods:
        raise ValueError("specs, seeds and methods must be nonempty")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    jobs = [(spec, seed, methods, schedule, criterion) for spec in specs for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, jobs))
    else:
        chunks = [_run_cell(job) for job in jobs]
    order = {spec.instance_id: k for k, spec in enumerate(specs)}
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda row: (order[row.instance_id], row.seed, _method_key(row.method)))
    return RatioReport(rows)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _row_fields(row: ReportRow, timings: bool) -> dict:
    return {
        "instance_id": row.instance_id,
        "seed": row.seed,
        "method": row.method,
        "cost": row.cost,
        "ratio_to_ssio": row.ratio_to_ssio,
        "wall_time_s": row.wall_time_s if timings else math.nan,
        "converged": row.converged,
    }


def emit_report(report: RatioReport, fmt: str, path, timings: bool = False) -> Path:
    """Write ``report`` as CSV or JSON.

    Wall times vary between runs, so by default they are left blank in
    the report and written to ``timings.csv`` next to it; with
    ``timings=True`` they go in the report itself.
    """
    fmt = fmt.lower()
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    path = Path(path)
    if fmt == "csv":
        text = _csv_text(report.rows, timings)
    else:
        text = _json_text(report.rows, timings)
    try:
        path.write_text(text, encoding="utf-8", newline="")
        if not timings and report.rows:
            side = path.with_name("timings.csv")
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("instance_id", "seed", "method", "wall_time_s"))
            for row in report.rows:
                w.writerow((row.instance_id, row.seed, row.method, _fmt(row.wall_time_s)))
            side.write_text(buf.getvalue(), encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
    return path


def _csv_text(rows, timings) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        fields = _row_fields(row, timings)
        w.writerow([_fmt(fields[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _json_number(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _json_text(rows, timings) -> str:
    out = []
    for row in rows:
        rec = {k: _json_number(v) for k, v in _row_fields(row, timings).items()}
        rec["s"] = row.s
        rec["imputed"] = [[i, j, v] for i, j, v in row.imputed]
        if row.error:
            rec["error"] = row.error
        out.append(rec)
    return json.dumps({"columns": list(CSV_COLUMNS), "rows": out}, indent=2, sort_keys=True) + "\n"


def _parse_float(text: str) -> float:
    return math.nan if text == "" else float(text)


def _parse_json_float(v) -> float:
    if v is None:
        return math.nan
    return float(v)


def read_report(path) -> RatioReport:
    """Parse a report written by :func:`emit_report` back into rows."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    rows = []
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        for rec in json.loads(text)["rows"]:
            rows.append(ReportRow(rec["instance_id"], int(rec["seed"]), rec["method"],
                                  _parse_json_float(rec["cost"]), _parse_json_float(rec["ratio_to_ssio"]),
                                  _parse_json_float(rec["wall_time_s"]), bool(rec["converged"]), rec["s"],
                                  tuple((int(i), int(j), float(v)) for i, j, v in rec["imputed"]),
                                  rec.get("error", "")))
        return RatioReport(rows)
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
    for rec in reader:
        rows.append(ReportRow(rec["instance_id"], int(rec["seed"]), rec["method"], _parse_float(rec["cost"]),
                              _parse_float(rec["ratio_to_ssio"]), _parse_float(rec["wall_time_s"]),
                              rec["converged"] == "true"))
    return RatioReport(rows)


def default_workers() -> int:
    return max(1, min(8, (os.cpu_count() or 1)))
