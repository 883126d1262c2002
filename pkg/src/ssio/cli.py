"""Command-line entry point: ``ssio solve`` and ``ssio bench``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .annealer import AnnealSchedule
from .baselines import brute_force_joint, direct_joint, fedorov_exchange, mean_impute, uniform_sample
from .bench import TABLE1, InstanceSpec, emit_report, run_comparison, run_ssio
from .extensions import constrained_anneal
from .io import ParseError, parse_budget, parse_matrix
from .linalg import IncompleteMatrix, InfeasibleError, RankDeficientError, SingularInformationError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_INFEASIBLE = 4
EXIT_SINGULAR = 5
EXIT_IO = 6

EXIT_CODES = f"""exit codes:
  {EXIT_OK}  success
  {EXIT_USAGE}  invalid arguments or inconsistent options
  {EXIT_INPUT}  malformed input file (the message names file and line)
  {EXIT_INFEASIBLE}  infeasible problem (r outside [p, n], budget cannot be met)
  {EXIT_SINGULAR}  singular information matrix (the search found no full-rank design)
  {EXIT_IO}  file could not be read or written
"""

SOLVE_METHODS = ("ssio", "fedorov", "uniform", "direct", "brute")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    input: Path
    r: int
    criterion: str = "A"
    method: str = "ssio"
    t_init: Optional[float] = None
    alpha: float = 0.9
    t_min: Optional[float] = None
    tol: float = 1e-7
    budget: Optional[Path] = None
    bounds: Optional[Path] = None
    seed: int = 0
    out: Optional[Path] = None
    format: str = "json"
    grid: int = 51
    trace: bool = False

    def __post_init__(self):
        if self.method not in SOLVE_METHODS:
            raise UsageError(f"--method must be one of {', '.join(SOLVE_METHODS)}")
        if self.budget is not None and self.method != "ssio":
            raise UsageError("--budget is only supported with --method ssio")
        if self.r < 1:
            raise UsageError("--select must be a positive integer")

    def schedule(self) -> AnnealSchedule:
        try:
            return AnnealSchedule(T_init=self.t_init, alpha=self.alpha, T_min=self.t_min, inner_tol=self.tol)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def _solve(cfg: SolveConfig, problem: IncompleteMatrix):
    crit = cfg.criterion
    trace = None
    if cfg.method == "ssio":
        if cfg.budget is not None:
            budget = parse_budget(cfg.budget, problem.n)
            state, design = constrained_anneal(problem, cfg.r, cfg.schedule(), budget, cfg.seed, criterion=crit)
            converged = bool(state.converged)
            trace = state.trace
        else:
            res = run_ssio(problem, cfg.r, cfg.schedule(), crit)
            design, converged, trace = res.design, res.converged, res.info["trace"]
    elif cfg.method == "direct":
        res = direct_joint(problem, cfg.r, crit, cfg.seed)
        design, converged = res.design, res.converged
    elif cfg.method == "brute":
        try:
            design = brute_force_joint(problem, cfg.r, crit, cfg.grid)
        except ValueError as exc:
            if isinstance(exc, (InfeasibleError, SingularInformationError)):
                raise
            raise UsageError(f"--method brute: {exc}") from None
        converged = True
    else:
        X = mean_impute(problem)
        fn = fedorov_exchange if cfg.method == "fedorov" else uniform_sample
        res = fn(X, cfg.r, crit, cfg.seed)
        design, converged = res.design, res.converged
    out = {
        "method": cfg.method,
        "criterion": crit,
        "s": design.bitstring,
        "cost": design.cost if math.isfinite(design.cost) else "inf",
        "converged": converged,
        "imputed_cells": [[i + 1, j + 1, float(design.imputed[i, j])] for i, j in problem.missing],
    }
    if cfg.trace and trace:
        out["free_energy_trace"] = [[t, f, h] for t, f, h in trace]
    return out, design


def _solve_csv(result: dict, design) -> str:
    buf = io.StringIO()
    buf.write(f"#method {result['method']}\n#criterion {result['criterion']}\n")
    buf.write(f"#cost {result['cost']!r}\n#converged {str(result['converged']).lower()}\n")
    w = csv.writer(buf, lineterminator="\n")
    p = design.imputed.shape[1]
    w.writerow(["selected"] + [f"x{j + 1}" for j in range(p)])
    for bit, row in zip(design.s, design.imputed):
        w.writerow([int(bit)] + [repr(float(v)) for v in row])
    return buf.getvalue()


def solve_command(cfg: SolveConfig) -> int:
    problem = parse_matrix(cfg.input, cfg.bounds)
    if not problem.p <= cfg.r <= problem.n:
        raise InfeasibleError(f"--select {cfg.r} must lie between p={problem.p} and n={problem.n}")
    result, design = _solve(cfg, problem)
    if cfg.format == "json":
        text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    else:
        text = _solve_csv(result, design)
    _write(cfg.out, text)
    return EXIT_OK


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_suite(suite: str):
    """``table1`` or a JSON file with a list of instance specs."""
    if suite == "table1":
        return list(TABLE1)
    path = Path(suite)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read suite {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    if isinstance(data, dict):
        data = data.get("instances", [])
    if not isinstance(data, list) or not data:
        raise ParseError(path, 0, "empty suite")
    specs = []
    for k, rec in enumerate(data):
        try:
            specs.append(InstanceSpec(str(rec.get("instance_id", f"I{k + 1}")), int(rec["n"]), int(rec["p"]),
                                      float(rec["missing_fraction"]), int(rec["r"]),
                                      tuple(rec["value_range"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, 0, f"instance {k + 1}: {exc}") from None
    return specs


def bench_command(suite: str, seeds: int, out: Path, fmt: str = "csv", schedule=AnnealSchedule(),
                  criterion="A", workers: int = 1, timings: bool = False) -> int:
    specs = load_suite(suite)
    if seeds < 1:
        raise UsageError("--seeds must be at least 1")
    report = run_comparison(specs, range(seeds), schedule=schedule, criterion=criterion, workers=workers)
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    emit_report(report, fmt, out / f"report.{fmt}", timings=timings)
    print(report.summary())
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssio", description="Joint row selection and missing-value imputation for optimal designs.",
        epilog=EXIT_CODES, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def schedule_flags(p):
        p.add_argument("--criterion", choices=("a", "d", "A", "D"), default="a", help="design criterion")
        p.add_argument("--t-init", type=float, help="initial temperature (default: 10x the largest row gain)")
        p.add_argument("--alpha", type=float, default=0.9, help="cooling factor in (0,1)")
        p.add_argument("--t-min", type=float, help="final temperature (default: t-init * 1e-6)")
        p.add_argument("--tol", type=float, default=1e-7, help="inner-loop tolerance")

    s = sub.add_parser("solve", help="solve one instance", epilog=EXIT_CODES,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--input", required=True, type=Path, help="matrix CSV (NA marks missing cells)")
    s.add_argument("--bounds", type=Path, help="sidecar bounds file (default: <input>.bounds if present)")
    s.add_argument("--select", required=True, type=int, metavar="R", help="number of rows to select")
    s.add_argument("--method", choices=SOLVE_METHODS, default="ssio")
    schedule_flags(s)
    s.add_argument("--seed", type=int, default=0, help="seed for randomized methods")
    s.add_argument("--budget", type=Path, help="budget file (ssio only)")
    s.add_argument("--grid", type=int, default=51, help="grid points per missing cell for --method brute")
    s.add_argument("--trace", action="store_true", help="include the (T, free energy, entropy) trace")
    s.add_argument("--out", type=Path, help="output file (default: stdout)")
    s.add_argument("--format", choices=("csv", "json"), default="json")

    b = sub.add_parser("bench", help="run the benchmark suite", epilog=EXIT_CODES,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    b.add_argument("--suite", default="table1", help="'table1' or a JSON file of instance specs")
    b.add_argument("--seeds", type=int, default=20, help="seeds 0..k-1 per instance")
    b.add_argument("--out", type=Path, default=Path("bench-out"), help="output directory")
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.add_argument("--workers", type=int, default=1, help="parallel processes")
    b.add_argument("--timings", action="store_true",
                   help="write wall times into the report (makes it run-dependent)")
    schedule_flags(b)
    return parser


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            cfg = SolveConfig(args.input, args.select, args.criterion.upper(), args.method, args.t_init,
                              args.alpha, args.t_min, args.tol, args.budget, args.bounds, args.seed, args.out,
                              args.format, args.grid, args.trace)
            cfg.schedule()
            return solve_command(cfg)
        try:
            schedule = AnnealSchedule(T_init=args.t_init, alpha=args.alpha, T_min=args.t_min, inner_tol=args.tol)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return bench_command(args.suite, args.seeds, args.out, args.format, schedule, args.criterion.upper(),
                             args.workers, args.timings)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except RankDeficientError as exc:
        return _fail(EXIT_SINGULAR, exc)
    except ParseError as exc:
        return _fail(EXIT_INPUT, exc)
    except InfeasibleError as exc:
        return _fail(EXIT_INFEASIBLE, exc)
    except SingularInformationError as exc:
        return _fail(EXIT_SINGULAR, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except ValueError as exc:
        return _fail(EXIT_INPUT, exc)


def _fail(code, exc) -> int:
    print(f"ssio: error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
