"""Plain-text formats for incomplete matrices and budgets.

Matrix files are comma-separated, one matrix row per line.  A cell is a
decimal number or the token ``NA`` (missing).  Lines starting with ``#``
are comments, except the directive ``#bounds lo hi`` which gives every
missing cell the same bounds.  Per-cell bounds live in a sidecar file
with lines ``i,j,lo,hi``; they override the global directive.  Row and
column indices in every file are 1-based.

Budget files hold one line of costs per matrix row and a ``#caps``
directive listing the budget for each cost column.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .linalg import IncompleteMatrix

NA = "NA"


class ParseError(ValueError):
    """Malformed input file; the message names the file and line."""

    def __init__(self, path, line, message):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")


def _number(token, path, line, what="value"):
    try:
        v = float(token)
    except ValueError:
        raise ParseError(path, line, f"malformed {what} {token!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, line, f"{what} must be finite, got {token!r}")
    return v


def _lines(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line:
            yield number, line


def default_bounds_path(path) -> Path:
    """Sidecar location looked up when none is given: ``<input>.bounds``."""
    path = Path(path)
    return path.with_name(path.name + ".bounds")


def parse_matrix(path, bounds_path=None) -> IncompleteMatrix:
    """Read an incomplete matrix, with bounds from the ``#bounds``
    directive and the optional sidecar file.

    Raises
    ------
    ParseError
        For a malformed cell or bound, ragged rows, a duplicate or
        misplaced sidecar row, or a missing cell with no bounds.
    """
    rows, missing, global_bounds = [], [], None
    width = None
    for number, line in _lines(path):
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "bounds":
                if len(parts) != 3:
                    raise ParseError(path, number, "expected '#bounds lo hi'")
                if global_bounds is not None:
                    raise ParseError(path, number, "duplicate #bounds directive")
                lo = _number(parts[1], path, number, "bound")
                hi = _number(parts[2], path, number, "bound")
                if lo > hi:
                    raise ParseError(path, number, f"lower bound {lo} exceeds upper bound {hi}")
                global_bounds = (lo, hi)
            continue
        cells = [c.strip() for c in line.split(",")]
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(path, number, f"expected {width} cells, found {len(cells)}")
        i = len(rows)
        values = []
        for j, token in enumerate(cells):
            if token == NA:
                missing.append((i, j, number))
                values.append(math.nan)
            else:
                values.append(_number(token, path, number, f"cell ({i + 1},{j + 1})"))
        rows.append(values)
    if not rows:
        raise ParseError(path, 0, "no data rows")
    n, p = len(rows), width

    explicit = {}
    if bounds_path is None:
        candidate = default_bounds_path(path)
        bounds_path = candidate if candidate.exists() else None
    if bounds_path is not None:
        explicit = _parse_bounds(bounds_path, n, p)
    known = {(i, j) for i, j, _ in missing}
    for (i, j), (_, number) in explicit.items():
        if (i, j) not in known:
            raise ParseError(bounds_path, number, f"cell ({i + 1},{j + 1}) is not missing")

    lower, upper = [], []
    for i, j, number in missing:
        if (i, j) in explicit:
            (lo, hi), _ = explicit[(i, j)]
        elif global_bounds is not None:
            lo, hi = global_bounds
        else:
            raise ParseError(path, number, f"missing cell ({i + 1},{j + 1}) has no bounds; "
                                           "add '#bounds lo hi' or a sidecar bounds row")
        lower.append(lo)
        upper.append(hi)
    try:
        return IncompleteMatrix(np.array(rows, dtype=float), [(i, j) for i, j, _ in missing], lower, upper)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from None


def _parse_bounds(path, n, p) -> dict:
    out = {}
    for number, line in _lines(path):
        if line.startswith("#"):
            continue
        parts = [c.strip() for c in line.split(",")]
        if len(parts) != 4:
            raise ParseError(path, number, "expected 'i,j,lo,hi'")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, number, f"malformed cell index {parts[0]!r},{parts[1]!r}") from None
        if not (1 <= i <= n and 1 <= j <= p):
            raise ParseError(path, number, f"cell ({i},{j}) outside the {n}x{p} matrix")
        lo = _number(parts[2], path, number, "bound")
        hi = _number(parts[3], path, number, "bound")
        if lo > hi:
            raise ParseError(path, number, f"lower bound {lo} exceeds upper bound {hi}")
        key = (i - 1, j - 1)
        if key in out:
            raise ParseError(path, number, f"duplicate bounds for cell ({i},{j}), first given on line {out[key][1]}")
        out[key] = ((lo, hi), number)
    return out


def write_matrix(problem: IncompleteMatrix, path, bounds_path=None) -> None:
    """Write ``problem`` so that :func:`parse_matrix` reads it back equal.

    Shared bounds become a ``#bounds`` directive; otherwise every missing
    cell gets a row in the sidecar file (default ``<path>.bounds``).
    """
    path = Path(path)
    lines = []
    shared = problem.n_missing and np.all(problem.lower == problem.lower[0]) and np.all(
        problem.upper == problem.upper[0])
    if shared:
        lines.append(f"#bounds {float(problem.lower[0])!r} {float(problem.upper[0])!r}")
    for row in problem.values:
        lines.append(",".join(NA if math.isnan(v) else repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    side = Path(bounds_path) if bounds_path is not None else default_bounds_path(path)
    if problem.n_missing and not shared:
        side.write_text("".join(f"{i + 1},{j + 1},{lo!r},{hi!r}\n" for (i, j), lo, hi in
                                zip(problem.missing, problem.lower.tolist(), problem.upper.tolist())),
                        encoding="utf-8")
    elif side.exists() and bounds_path is None:
        side.unlink()


def parse_budget(path, n: int):
    """Read a budget file: ``n`` lines of nonnegative costs and a
    ``#caps k1 ... km`` directive."""
    from .extensions import BudgetSpec

    costs, caps = [], None
    for number, line in _lines(path):
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "caps":
                if caps is not None:
                    raise ParseError(path, number, "duplicate #caps directive")
                caps = [_number(t, path, number, "cap") for t in parts[1:]]
                if not caps:
                    raise ParseError(path, number, "#caps needs at least one value")
            continue
        costs.append(([_number(t.strip(), path, number, "cost") for t in line.split(",")], number))
    if caps is None:
        raise ParseError(path, 0, "missing '#caps' directive")
    if len(costs) != n:
        raise ParseError(path, 0, f"expected {n} cost rows (one per matrix row), found {len(costs)}")
    for row, number in costs:
        if len(row) != len(caps):
            raise ParseError(path, number, f"expected {len(caps)} costs to match #caps, found {len(row)}")
        if min(row) < 0:
            raise ParseError(path, number, "costs must be nonnegative")
    if min(caps) < 0:
        raise ParseError(path, 0, "caps must be nonnegative")
    return BudgetSpec(np.array([row for row, _ in costs]), np.array(caps))
