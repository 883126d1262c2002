import re

import numpy as np
import pytest

from ssio import IncompleteMatrix

# filled by test_acceptance.py, printed after the run
ACCEPTANCE = {}


def record(key, title, passed, detail):
    ACCEPTANCE[key] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(re.match(r"\d+", k).group()), k)):
        title, passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key:<5} {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_problem(rng, n=8, p=2, n_missing=2, lo=-1.0, hi=2.0):
    X = rng.uniform(lo, hi, size=(n, p))
    flat = rng.choice(n * p, size=n_missing, replace=False)
    cells = [(int(f // p), int(f % p)) for f in flat]
    return IncompleteMatrix(X, cells, np.full(n_missing, lo), np.full(n_missing, hi))
