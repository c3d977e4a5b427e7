import numpy as np
import pytest

from nagumo_pb.energy import AutonomousSystem, choose_band, level_curve
from nagumo_pb.flow import IntegratorSettings
from nagumo_pb.model import Nonlinearity, SystemParams, Weight, build_modified, split_weight


@pytest.fixture(scope="session")
def cubic():
    return Nonlinearity.cubic(0.6)


@pytest.fixture(scope="session")
def f0(cubic):
    return build_modified(cubic)


@pytest.fixture(scope="session")
def const20(f0):
    return SystemParams(0.1, split_weight(Weight.constant(20.0), "mean"), f0)


@pytest.fixture(scope="session")
def step20(f0):
    """n1 = 20 on ]0, 0.8[, n0 = 1 on ]0.8, 1[, split at the plateau value."""
    return SystemParams(0.1, split_weight(Weight.two_level(20.0, 1.0, 0.8, 1.0), "plateau-value"), f0)


@pytest.fixture(scope="session")
def auto20(f0):
    return AutonomousSystem(0.1, 20.0, f0)


@pytest.fixture(scope="session")
def band20(auto20):
    return choose_band(auto20)


@pytest.fixture(scope="session")
def gamma20(auto20, band20):
    return level_curve(auto20, band20)


@pytest.fixture(scope="session")
def settings():
    return IntegratorSettings()


def bisect_root(fun, lo, hi, tol=1e-14):
    """Plain bisection, kept independent of scipy for oracle use."""
    flo = fun(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def record(label: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
