"""
Gaussian mixture regression on a noisy curve
============================================

A mixture fitted to joint samples ``(x, y)`` can be conditioned on ``x``
to give a mean prediction of ``y`` and an uncertainty around it. This is
how the Q-function reports both a value and a variance.
"""

import numpy as np

from qcp.gmm import fit_em, predict_many

rng = np.random.default_rng(0)

# noisy samples of a sine, denser on the left
x = np.sort(rng.beta(1.2, 2.0, 600) * 2 * np.pi)
y = np.sin(x) + rng.normal(0, 0.1, x.size)
data = np.column_stack([x, y])

# six components are enough to follow one period
model = fit_em(data, 6, rng)
print(f"EM ran {len(model.log_likelihood_trace)} iterations, "
      f"final mean log-likelihood {model.log_likelihood_trace[-1]:.3f}")

# condition on a grid of inputs; the last column is always the target
grid = np.linspace(0, 2 * np.pi, 9)
mean, var = predict_many(model, grid[:, None])
print(" x      sin(x)   GMR mean   GMR std")
for xi, m, v in zip(grid, mean, var):
    print(f"{xi:5.2f}  {np.sin(xi):+.3f}    {m:+.3f}     {np.sqrt(v):.3f}")

# the predicted spread grows where data is scarce (right end of the range)
