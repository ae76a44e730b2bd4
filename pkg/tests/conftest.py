import numpy as np
import pytest

from qsbridge.bridge import BridgeKind, BridgeProblem, Gaussian
from qsbridge.spd import random_spd


def make_problem(rng, n, frac=0.5, kind=BridgeKind.QUANTUM, lo=0.5, hi=2.0):
    g0 = Gaussian(rng.normal(size=n), random_spd(n, rng, lo, hi))
    g1 = Gaussian(rng.normal(size=n), random_spd(n, rng, lo, hi))
    p = BridgeProblem(g0, g1, 0.0, BridgeKind.QUANTUM)
    beta = 0.0 if kind is BridgeKind.BB_OT else frac * p.beta_max
    return BridgeProblem(g0, g1, beta, kind)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def problem_factory():
    return make_problem


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; lines are printed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
