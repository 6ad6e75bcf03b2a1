import itertools
from fractions import Fraction

import numpy as np
import pytest

ACCEPTANCE = {}


def record(criterion, passed, detail=""):
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{key:>2}] {'PASS' if passed else 'FAIL'}  {detail}")


def brute_count(x, y):
    """Strictly concordant pairs by enumeration; independent of the package."""
    return sum(1 for i, t in itertools.combinations(range(len(x)), 2) if (x[i] - x[t]) * (y[i] - y[t]) > 0)


def brute_tau(x, y):
    n = len(x)
    return Fraction(4 * brute_count(x, y), n * (n - 1)) - 1


def float_tau(c, n):
    return 4.0 * c / (n * (n - 1.0)) - 1.0


def brute_kif(xj, xl, labels):
    n = len(labels)
    tau = brute_tau(xj, xl)
    total = Fraction(0)
    for lab in dict.fromkeys(labels):
        rows = [i for i in range(n) if labels[i] == lab]
        tk = brute_tau([xj[i] for i in rows], [xl[i] for i in rows])
        total += Fraction(len(rows), n) * abs(tk - tau)
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
