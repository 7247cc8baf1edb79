import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mrta.config import WorldConfig  # noqa: E402
from mrta.world import NO_OBJECT, WorldState, goal_positions  # noqa: E402

_ACCEPTANCE_LINES = []


def record_acceptance(criterion, passed, detail):
    _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_world(robots, objects, masses=None, goals=None, selected=None, **cfg):
    """Hand-built WorldState for kinematics tests."""
    robots = np.asarray(robots, dtype=float).reshape(-1, 2)
    objects = np.asarray(objects, dtype=float).reshape(-1, 2)
    n, m = len(robots), len(objects)
    config = WorldConfig(n_robots=n, n_objects=m, **cfg)
    masses = np.ones(m) if masses is None else np.asarray(masses, dtype=float)
    goals = goal_positions(config) if goals is None else np.asarray(goals, dtype=float).reshape(-1, 2)
    sel = np.full(n, NO_OBJECT) if selected is None else np.asarray(selected)
    return WorldState(config=config, robot_pos=robots, selected=sel.astype(int),
                      stuck=np.zeros(n), obj_pos=objects, obj_vel=np.zeros((m, 2)),
                      goals=goals, mass=masses, completed=np.zeros(m, dtype=bool))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
