import numpy as np
import pytest

from paclab.envs import random_mdp
from paclab.mdp import TabularMdp


def one_state(reward=1.0, gamma=0.5, num_actions=1):
    return TabularMdp(np.ones((1, num_actions, 1)), np.full((1, num_actions), reward), gamma)


def two_state_chain(gamma=0.5):
    """s0 -> s1 with reward 0; s1 absorbing with reward 1. One action."""
    P = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    r = np.array([[0.0], [1.0]])
    return TabularMdp(P, r, gamma)


@pytest.fixture
def chain():
    return two_state_chain()


@pytest.fixture
def rand5():
    # the fixed seeded 5-state test-bed used throughout
    return random_mdp(5, 2, 3, seed=7, discount=0.7)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    report = getattr(module, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report):
            terminalreporter.write_line(report[n])
