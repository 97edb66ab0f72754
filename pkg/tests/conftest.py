import numpy as np
import pytest

from hgg.core import TaskInstance, Trajectory
from hgg.envs import DeskPush, DeskPushWall, DeskReach


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[DeskReach, DeskPush, DeskPushWall], ids=lambda c: c.name)
def env(request):
    return request.param()


def make_trajectory(states, goal, threshold=0.02, phi=lambda s: np.asarray(s, float)):
    """Build a trajectory directly from a state sequence (actions zero)."""
    states = np.asarray(states, float)
    achieved = np.stack([phi(s) for s in states])
    rewards = np.where(np.linalg.norm(achieved[1:] - goal, axis=1) <= threshold, 0.0, -1.0)
    task = TaskInstance(states[0], goal)
    return Trajectory(task, states, np.zeros((len(states) - 1, 2)), rewards, achieved)


ACCEPTANCE_LINES = []


@pytest.fixture
def report_criterion(capsys):
    """Print (and remember for the summary) one pass/fail line per criterion."""

    def report(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
