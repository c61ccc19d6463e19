import numpy as np
import pytest

_ACCEPTANCE = []


def random_spd(rng, size, floor=1.0):
    A = rng.normal(size=(size, size))
    return A @ A.T + floor * np.eye(size)


def random_grid(rng, n, start=0.0):
    """``n + 1`` knots with gaps in [0.3, 2]."""
    return start + np.concatenate([[0.0], np.cumsum(rng.uniform(0.3, 2.0, n))])


def random_cp_kernel(rng, trend):
    """Indefinite kernel that is conditionally positive w.r.t. ``trend``."""
    m, q = trend.shape
    B = rng.normal(size=(m, q))
    return random_spd(rng, m) + trend @ B.T + B @ trend.T


@pytest.fixture
def rng():
    return np.random.default_rng(20161231)


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, title, ok, detail=""):
        _ACCEPTANCE.append((number, title, bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title} {detail}".rstrip())
