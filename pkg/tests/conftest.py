import random
import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qcp.game import Game, GameState, StepOutcome  # noqa: E402
from qcp.qfunction import QApproximator  # noqa: E402


@dataclass
class ChainGame(Game):
    """One agent on cells 0..length-1; action 1 steps right, 0 stays.

    Reward ``reward_value`` everywhere (or only on entering the last cell
    with ``goal_only``); the last cell is terminal.
    """

    length: int = 4
    reward_value: float = 1.0
    action_noise: float = 0.0
    n_actions: int = 2
    goal_only: bool = False

    def __post_init__(self):
        self.n_agents = 1
        self.action_set_sizes = (self.n_actions,)
        self.xi = (0.5,)

    def transition(self, state, joint):
        x = state.features[0] + (1 if joint[0] == 1 else 0)
        x = min(x, self.length - 1)
        done = x == self.length - 1
        reward = self.reward_value if done or not self.goal_only else 0.0
        return StepOutcome(GameState((x,), done), reward)

    def sample_initial_state(self, rng: random.Random):
        return GameState((0,))


class TableQ(QApproximator):
    """Approximator with fixed per-action means and variances, ignoring the state."""

    def __init__(self, means, variances=None):
        super().__init__(None)
        self.means = tuple(means)
        self.variances = tuple(variances) if variances is not None else (0.0,) * len(self.means)

    @property
    def is_empty(self):
        return False

    def action_values(self, features, n_actions):
        return self.means[:n_actions], self.variances[:n_actions]


@pytest.fixture
def chain():
    return ChainGame()


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
