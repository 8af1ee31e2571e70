import numpy as np
import pandas as pd
import pytest
from hypothesis import strategies as st

from fgp.market_data import NormalizedPanel


def random_simplex(rng, n, concentration=1.0):
    return rng.dirichlet(np.full(n, concentration))


@st.composite
def simplex_points(draw, min_n=2, max_n=30, min_coord=1e-4):
    n = draw(st.integers(min_n, max_n))
    raw = draw(st.lists(st.floats(min_coord, 1.0), min_size=n, max_size=n))
    x = np.asarray(raw)
    return x / x.sum()


def make_panel(index, start="2000-01-03", freq="B", base_date=None):
    index = np.asarray(index, dtype=float)
    dates = pd.date_range(start, periods=index.shape[0], freq=freq)
    return NormalizedPanel(dates=dates, assets=tuple(f"X{i}" for i in range(index.shape[1])),
                           index=index, base_date=dates[0] if base_date is None else base_date)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ordering_pair(rng, n, margin=1e-3):
    """(theta, theta') with max(theta) > max(theta') + margin, differing in two coordinates."""
    while True:
        tp = random_simplex(rng, n)
        i, j = rng.choice(n, size=2, replace=False)
        s = tp[i] + tp[j]
        lo, hi = tp.max() + margin, s - 1e-6
        if lo >= hi:
            continue
        u = rng.uniform(lo, hi)
        t = tp.copy()
        t[i], t[j] = u, s - u
        return t, tp


def mp_central_derivatives(f, theta, dps=40, h="1e-15"):
    """Gradient and Hessian of f by central differences in high precision.

    ``f`` takes a list of mpmath numbers. Used as an oracle independent of the
    float64 analytic formulas.
    """
    from mpmath import mp, mpf

    with mp.workdps(dps):
        h = mpf(h)
        x = [mpf(float(v)) for v in theta]
        n = len(x)

        def at(*moves):
            y = list(x)
            for k, d in moves:
                y[k] += d
            return f(y)

        f0 = f(x)
        grad = [(at((i, h)) - at((i, -h))) / (2 * h) for i in range(n)]
        hess = [[None] * n for _ in range(n)]
        for i in range(n):
            hess[i][i] = (at((i, h)) - 2 * f0 + at((i, -h))) / h**2
            for j in range(i + 1, n):
                v = (at((i, h), (j, h)) - at((i, h), (j, -h)) - at((i, -h), (j, h)) + at((i, -h), (j, -h))) / (4 * h**2)
                hess[i][j] = hess[j][i] = v
        return np.array([float(g) for g in grad]), np.array([[float(v) for v in row] for row in hess])


def mp_neg_g(y):
    from mpmath import mpf
    p = mpf(1)
    for v in y:
        p *= v
    return -(p ** (mpf(1) / len(y)))


def mp_neg_u(gamma):
    from mpmath import mpf

    def f(y):
        g = mpf(gamma)
        return -(sum(v**g for v in y)) ** (1 / g)
    return f


def max_rel_err(a, b):
    """Largest absolute deviation relative to the largest entry of the reference."""
    b = np.asarray(b)
    return float(np.max(np.abs(np.asarray(a) - b)) / max(np.max(np.abs(b)), 1e-300))


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number, ok, detail):
    """Store and print one pass/fail line (``ok=None`` for skip); the terminal summary repeats them."""
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"criterion {number}: {status}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
