import numpy as np
import pytest

from dreemnet.env import ScenarioConfig


class UnitCaps:
    """Minimal cap provider for LP tests (homogeneous eta and P_max)."""

    def __init__(self, M, eta=0.25, p_max=1.0):
        self.M, self.eta, self.p_max = M, eta, p_max

    def eta_vector(self):
        return np.full(self.M, self.eta)

    def p_max_vector(self):
        return np.full(self.M, self.p_max)


@pytest.fixture
def unit_caps():
    return UnitCaps


@pytest.fixture
def small_cfg():
    return ScenarioConfig(M=3, K=2, T=5)


def random_instance(rng, M, K, cfg=None):
    """Random slot drawn from the real geometry so gains have realistic spread."""
    from dreemnet.env import generate_episode, desk_scenario
    cfg = cfg or desk_scenario(M=M, K=K, T=1)
    ep = generate_episode(cfg, rng)
    return cfg, ep.H[1], ep.r_min[1], ep.sigma2


# one pass/fail line per acceptance criterion, printed after the run
CRITERIA_LINES = []


def report_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
