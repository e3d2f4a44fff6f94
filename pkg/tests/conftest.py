import numpy as np
import pytest

from beamstab.model import reference_gains, reference_initial_condition, reference_system
from beamstab.resolvent import ResolventData

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref_sys():
    return reference_system()


@pytest.fixture(scope="session")
def ref_gains():
    return reference_gains()


@pytest.fixture(scope="session")
def ref_ic():
    return reference_initial_condition()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def manufactured_resolvent(lam, nx, sys, g):
    """Datum ``(lam I - A) y`` for a smooth ``y`` in the operator domain, and ``y`` itself."""
    x = np.linspace(0.0, 1.0, nx + 1)
    hp = np.pi / 2
    c, d = np.array([1.0, -0.7]), np.array([0.3, 0.5])
    poly = x**2 * (6 - 4 * x + x**2)  # clamped at 0, zero curvature at 1, fourth derivative 24
    u = c * (1 - np.cos(hp * x))[:, None] + d * poly[:, None]
    u4 = c * (-hp**4 * np.cos(hp * x))[:, None] + 24.0 * d
    u3_1 = c * (-hp**3 * np.sin(hp))
    v = np.array([0.4, 0.2]) * (x * np.sin(hp * x))[:, None]
    eta = -sys.F @ u3_1 + g.B @ sys.M @ v[-1]
    f = lam * u - v
    gg = lam * v + sys.lambda_diag * u4
    h = (lam * np.eye(2) + g.B) @ eta + g.B @ (g.K - g.B @ sys.M) @ v[-1]
    return ResolventData(lam, f, gg, h), (u, v, eta)
