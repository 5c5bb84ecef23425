"""
Q-CP against vanilla UCT on cooperative navigation
==================================================

Three robots share a 4x4 grid and a dense reward that grows as they close
in on their targets. Both planners get the same simulation budget and the
same random streams; Q-CP only expands actions its learned Q-function
deems admissible.

A short run (a few seeds, a dozen iterations) takes a minute or two.
"""

import numpy as np

from qcp import TrainConfig, make_game, normalize_rewards, train

ITERATIONS, SEEDS = 12, 2
runs = {}
for algorithm in ("qcp", "vanilla", "random"):
    runs[algorithm] = [
        train(make_game("nav"), TrainConfig(iterations=ITERATIONS, algorithm=algorithm, seed=s))
        for s in range(SEEDS)
    ]

rewards = normalize_rewards(
    {a: np.array([[m.mean_reward for m in r.metrics] for r in rs]) for a, rs in runs.items()}
)
for algorithm, rs in runs.items():
    states = np.mean([r.metrics[-1].cum_states for r in rs])
    print(f"{algorithm:8s} final normalised reward {rewards[algorithm][-1]:.3f}  "
          f"explored states {states:7.0f}")

# The per-iteration table (algorithm, seed, iteration, reward, states) is
# what the command-line runner writes for every run:
from qcp.driver import metrics_table  # noqa: E402

print(metrics_table(runs["qcp"][0].metrics[:3]))
