"""
Which actions may a search expand?
==================================

Q-CP keeps action ``a`` when its estimate clears a fraction ``lam`` of the
best estimate, minus a random slack drawn from the prediction variance.
Rejected actions still get in with a small probability. This demo counts
how often each action is admitted.
"""

import random
from collections import Counter

from qcp.game import GameState
from qcp.qfunction import QApproximator
from qcp.search import admissible_actions


class FixedQ(QApproximator):
    """State-independent estimates, handy for illustration."""

    def __init__(self, means, variances):
        super().__init__(None)
        self.table = (tuple(means), tuple(variances))

    def action_values(self, features, n_actions):
        return self.table[0][:n_actions], self.table[1][:n_actions]


state = GameState((0.0,))
means = [1.0, 0.8, 0.45, 0.4, 0.1]
variances = [0.0, 0.0, 0.0, 0.04, 0.0]
q = FixedQ(means, variances)
rng = random.Random(0)

for lam in (0.5, 0.9):
    for eps in (0.0, 0.3):
        counts = Counter()
        for _ in range(5000):
            counts.update(admissible_actions(q, state, 5, lam, eps, rng))
        freq = " ".join(f"{counts[a] / 5000:.2f}" for a in range(5))
        print(f"lam={lam} eps={eps}: admission rate per action {freq}")

# Action 3 sits below the threshold at lam=0.5, but its variance lets it in
# about 62% of the time. At lam=0.9 only the top action survives the
# threshold; the eps coin then admits each rejected action 30% of the time.
