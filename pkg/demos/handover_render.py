"""
Watching a hand-over episode
============================

The hand-over scenario has two mobile manipulators facing each other.
Features are relative base and end-effector offsets in metres, and the
shaped reward ``r`` rises as the end effectors meet at a comfortable base
distance. After a few training iterations the greedy policies are rolled
out from a fresh start and each state is printed.
"""

import io
import random

from qcp import TrainConfig, make_game, train
from qcp.game import run_episode

game = make_game("handover")
log = io.StringIO()
result = train(game, TrainConfig(iterations=3, timesteps=10, algorithm="qcp", seed=1), render=log)

# the driver can render every executed step; show the first few lines
print("\n".join(log.getvalue().splitlines()[:6]))

# roll the learned greedy policies from a fresh start
episode = run_episode(game, result.policies, 12, random.Random(3))
for step in episode:
    print(game.render(step.next_state))
