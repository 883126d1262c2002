"""Dense numerical foundation: incomplete matrices, information matrices and
design criteria.

Every criterion is evaluated through a Cholesky factor of the information
matrix ``R = sum_i q_i x_i x_i^T``; no routine here forms ``R^{-1}``
explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf, dtrtri

CRITERIA = ("A", "D")


class SingularInformationError(np.linalg.LinAlgError):
    """The information matrix is singular or indefinite."""


class InfeasibleError(ValueError):
    """No feasible design exists for the requested problem."""


class RankDeficientError(InfeasibleError, SingularInformationError):
    """A search ended on (or started from) designs whose information matrix
    is singular; both an infeasibility and a singularity error."""


def check_criterion(criterion: str) -> str:
    c = str(criterion).upper()
    if c not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    return c


@dataclass(frozen=True)
class IncompleteMatrix:
    """An ``n x p`` design matrix with missing (designable) cells.

    Parameters
    ----------
    values : ndarray, shape (n, p)
        Known entries. Missing cells hold ``NaN``.
    missing : tuple of (int, int)
        Coordinates of the missing cells, kept in row-major order.
    lower, upper : ndarray, shape (len(missing),)
        Closed bounds for each missing cell.
    """

    values: np.ndarray
    missing: tuple = ()
    lower: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        n, p = values.shape
        if n < p:
            raise ValueError(f"need n >= p, got n={n}, p={p}")
        cells = [(int(i), int(j)) for i, j in self.missing]
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if not (len(cells) == lower.size == upper.size):
            raise ValueError("missing, lower and upper must have equal length")
        if len(set(cells)) != len(cells):
            raise ValueError("duplicate coordinates in missing set")
        for i, j in cells:
            if not (0 <= i < n and 0 <= j < p):
                raise ValueError(f"missing cell {(i, j)} outside {n}x{p} matrix")
        if np.any(lower > upper):
            raise ValueError("every missing cell needs lower <= upper")
        order = sorted(range(len(cells)), key=lambda t: cells[t])
        cells = [cells[t] for t in order]
        lower, upper = lower[order], upper[order]
        mask = np.zeros((n, p), dtype=bool)
        for i, j in cells:
            mask[i, j] = True
        values[mask] = np.nan
        if np.any(np.isnan(values[~mask])) or np.any(np.isinf(values[~mask])):
            raise ValueError("known entries must be finite; mark missing cells explicitly")
        values.setflags(write=False)
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", tuple(cells))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def complete(cls, X) -> "IncompleteMatrix":
        return cls(np.asarray(X, dtype=float))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def n_missing(self) -> int:
        return len(self.missing)

    @property
    def rows(self) -> np.ndarray:
        return np.array([i for i, _ in self.missing], dtype=int)

    @property
    def cols(self) -> np.ndarray:
        return np.array([j for _, j in self.missing], dtype=int)

    def fill(self, m) -> np.ndarray:
        """Return a complete copy with ``m`` written into the missing cells."""
        m = np.asarray(m, dtype=float).reshape(-1)
        if m.size != self.n_missing:
            raise ValueError(f"expected {self.n_missing} imputed values, got {m.size}")
        X = np.array(self.values)
        if self.n_missing:
            X[self.rows, self.cols] = m
        return X

    def extract(self, X) -> np.ndarray:
        """Values of the missing cells inside a complete matrix ``X``."""
        X = np.asarray(X)
        if not self.n_missing:
            return np.zeros(0)
        return np.array(X[self.rows, self.cols], dtype=float)


@dataclass(frozen=True)
class HardDesign:
    """A binary selection of rows together with the completed matrix."""

    s: np.ndarray
    imputed: np.ndarray
    cost: float
    criterion: str = "A"

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.s)

    @property
    def bitstring(self) -> str:
        return "".join("1" if v else "0" for v in self.s)


def _assert_no_nan(*arrays):
    for a in arrays:
        if np.isnan(a).any():
            raise ValueError("missing-cell placeholder (NaN) reached a numerical routine")


def fisher_matrix(X, q) -> np.ndarray:
    """Weighted information matrix ``sum_i q_i x_i x_i^T``.

    The product is symmetrized as ``(R + R^T) / 2``, which is exact in
    floating point, so the result is bitwise symmetric.
    """
    X = np.asarray(X, dtype=float)
    q = np.asarray(q, dtype=float)
    if X.ndim != 2 or q.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, q {q.shape}")
    _assert_no_nan(X, q)
    R = (X.T * q) @ X
    # averaging with the transpose makes the result bitwise symmetric
    return 0.5 * (R + R.T)


def cholesky(R) -> np.ndarray:
    """Lower Cholesky factor, raising :class:`SingularInformationError`
    when ``R`` is not numerically positive definite."""
    R = np.asarray(R, dtype=float)
    _assert_no_nan(R)
    L, info = dpotrf(R, lower=1, clean=1)
    if info != 0:
        raise SingularInformationError("information matrix is not positive definite")
    d = np.diag(L)
    scale = max(float(np.max(np.abs(np.diag(R)))), np.finfo(float).tiny)
    if d.min() ** 2 <= R.shape[0] * 1e-13 * scale:
        raise SingularInformationError("information matrix is numerically singular")
    return L


def a_cost(R) -> float:
    """A-optimality criterion ``trace(R^{-1})``."""
    L = cholesky(R)
    Linv = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return float(np.sum(Linv * Linv))


def d_cost(R) -> float:
    """D-optimality criterion ``det(R)^{-1/p}`` via the log-determinant."""
    L = cholesky(R)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(np.exp(-logdet / L.shape[0]))


def criterion_cost(R, criterion: str = "A") -> float:
    return a_cost(R) if check_criterion(criterion) == "A" else d_cost(R)


def safe_cost(R, criterion: str = "A") -> float:
    """Criterion value, with singular information mapped to ``+inf``."""
    try:
        return criterion_cost(R, criterion)
    except SingularInformationError:
        return np.inf


def hard_cost(X, s, criterion: str = "A") -> float:
    """Criterion of the rows of ``X`` picked by the binary vector ``s``."""
    s = np.asarray(s)
    if not np.all((s == 0) | (s == 1)):
        raise ValueError("selection must be binary")
    X = np.asarray(X, dtype=float)
    if int(s.sum()) < X.shape[1]:
        raise SingularInformationError(f"{int(s.sum())} selected rows cannot identify {X.shape[1]} parameters")
    return criterion_cost(fisher_matrix(X, s.astype(float)), criterion)


def sensitivity(R, x, power: int = 2) -> float:
    """Quadratic form ``x^T R^{-power} x`` for ``power`` in {1, 2}."""
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    L = cholesky(R)
    x = np.asarray(x, dtype=float)
    _assert_no_nan(x)
    y = solve_triangular(L, x, lower=True)
    if power == 1:
        return float(y @ y)
    z = solve_triangular(L.T, y, lower=False)
    return float(z @ z)


class Information:
    """Cached factorization of one information matrix.

    Gives the criterion value and the derivatives the annealer needs
    without re-factoring.  ``gains`` are ``-d cost / d q_i``; the
    ``cell_*`` helpers serve the coordinate updates of missing cells.
    Inverses are built lazily from the triangular factor.
    """

    __slots__ = ("criterion", "R", "L", "p", "Linv", "cost", "scale", "_Rinv", "_W")

    def __init__(self, R, criterion: str = "A"):
        self.criterion = criterion if criterion in CRITERIA else check_criterion(criterion)
        self.R = R
        self.L = cholesky(R)
        p = self.L.shape[0]
        self.p = p
        self.Linv, _ = dtrtri(self.L, lower=1)
        self._Rinv = None
        self._W = None
        if self.criterion == "A":
            self.cost = float(np.sum(self.Linv * self.Linv))
            self.scale = 1.0
        else:
            logdet = 2.0 * np.sum(np.log(np.diag(self.L)))
            self.cost = float(np.exp(-logdet / p))
            self.scale = self.cost / p

    @property
    def Rinv(self) -> np.ndarray:
        if self._Rinv is None:
            self._Rinv = self.Linv.T @ self.Linv
        return self._Rinv

    @property
    def W(self) -> np.ndarray:
        """Matrix of the gain quadratic form: ``R^-2`` for A, ``R^-1`` for D."""
        if self._W is None:
            self._W = self.Rinv @ self.Rinv if self.criterion == "A" else self.Rinv
        return self._W

    def gains(self, X) -> np.ndarray:
        """``-d cost/d q_i`` for every row of ``X``."""
        X = np.asarray(X)
        if self.criterion == "A":
            Z = X @ self.Rinv
            return np.einsum("ij,ij->i", Z, Z)
        Y = X @ self.Linv.T
        return self.scale * np.einsum("ij,ij->i", Y, Y)

    def hessian(self, X) -> np.ndarray:
        """Second derivatives of the cost with respect to the row weights."""
        K = X @ self.Rinv @ X.T
        if self.criterion == "A":
            M = X @ self.W @ X.T
            return 2.0 * K * M
        a = np.diag(K)
        return (self.cost / self.p**2) * np.outer(a, a) + self.scale * K * K

    def cell_stationary(self, x, k: int) -> float:
        """Coordinate value zeroing ``x^T W e_k`` with the other entries fixed."""
        W = self.W
        off = float(x @ W[:, k] - x[k] * W[k, k])
        return -off / W[k, k]

    def cell_gradient(self, x, k: int, qj: float) -> float:
        """``d cost / d x_jk`` for a row with weight ``qj`` (R recomputed)."""
        return -2.0 * qj * self.scale * float(x @ self.W[:, k])
