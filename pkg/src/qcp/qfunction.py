"""Per-agent Q-value learning: aggregated datasets, targets and policies."""
from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .game import GameState
from .gmm import (
    InsufficientDataError, MixtureModel, Prediction, StackedRegression, fit_em, predict_many, select_k,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sample:
    state: GameState
    action_id: int
    q_target: float
    reward: float
    next_state: GameState

    def __post_init__(self):
        if not math.isfinite(self.q_target):
            raise ValueError(f"non-finite q_target {self.q_target!r}")


@dataclass(frozen=True)
class AggregatedDataset:
    """Append-only sample store; ``iteration_marks[i]`` is the size after batch i."""

    samples: tuple[Sample, ...] = ()
    iteration_marks: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.samples)

    def batch(self, i: int) -> tuple[Sample, ...]:
        start = self.iteration_marks[i - 1] if i > 0 else 0
        return self.samples[start : self.iteration_marks[i]]

    def as_array(self) -> np.ndarray:
        """Rows ``(state features..., action, q_target)`` for density fitting."""
        if not self.samples:
            return np.empty((0, 0))
        return np.array(
            [(*s.state.features, s.action_id, s.q_target) for s in self.samples], dtype=float
        )


def aggregate(dataset: AggregatedDataset, new: Sequence[Sample]) -> AggregatedDataset:
    if not new and not dataset.samples:
        return dataset
    samples = dataset.samples + tuple(new)
    return AggregatedDataset(samples, dataset.iteration_marks + (len(samples),))


class QApproximator:
    """Q-value estimate backed by Gaussian mixture regression.

    ``model`` is one density over ``(state, action, Q)``; alternatively
    ``per_action[a]`` holds a density over ``(state, Q)`` for action ``a``
    (``None`` where that action had too little data). Without a model an
    action predicts mean 0 and variance ``sigma2_init``. Predictions for all
    actions of a state are memoised; the approximator is otherwise immutable.
    """

    def __init__(
        self,
        model: MixtureModel | None = None,
        sigma2_init: float = 1.0,
        per_action: Sequence[MixtureModel | None] | None = None,
    ):
        if model is not None and per_action is not None:
            raise ValueError("give either a joint model or per-action models, not both")
        self.model = model
        self.per_action = tuple(per_action) if per_action is not None else None
        self.sigma2_init = sigma2_init
        self._stack = None
        if self.per_action is not None:
            fitted = [a for a, m in enumerate(self.per_action) if m is not None]
            if fitted:
                self._fitted = np.array(fitted)
                self._stack = StackedRegression([self.per_action[a] for a in fitted])
        self._cache: dict[tuple, tuple[tuple[float, ...], tuple[float, ...]]] = {}
        self._best: dict[tuple, tuple[int, ...]] = {}

    @property
    def is_empty(self) -> bool:
        if self.per_action is not None:
            return all(m is None for m in self.per_action)
        return self.model is None

    def predict(self, features: Sequence[float], action: int) -> Prediction:
        means, variances = self.action_values(features, action + 1)
        return Prediction(means[action], variances[action])

    def action_values(
        self, features: Sequence[float], n_actions: int
    ) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Predicted means and variances of actions ``0..n_actions-1``."""
        key = (tuple(features), n_actions)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self.per_action is not None:
            means = np.zeros(n_actions)
            variances = np.full(n_actions, self.sigma2_init)
            if self._stack is not None:
                m, v = self._stack(features)
                keep = self._fitted < n_actions
                means[self._fitted[keep]] = m[keep]
                variances[self._fitted[keep]] = v[keep]
            out = (tuple(means.tolist()), tuple(variances.tolist()))
        elif self.model is None:
            out = ((0.0,) * n_actions, (self.sigma2_init,) * n_actions)
        else:
            X = np.empty((n_actions, len(features) + 1))
            X[:, :-1] = features
            X[:, -1] = np.arange(n_actions)
            mean, var = predict_many(self.model, X)
            out = (tuple(mean.tolist()), tuple(var.tolist()))
        self._cache[key] = out
        return out

    def best_actions(self, features: Sequence[float], n_actions: int) -> tuple[int, ...]:
        """Actions attaining the maximal predicted mean (ties included)."""
        key = (tuple(features), n_actions)
        hit = self._best.get(key)
        if hit is None:
            means = self.action_values(features, n_actions)[0]
            top = max(means)
            hit = self._best[key] = tuple(a for a, v in enumerate(means) if v == top)
        return hit


def q_target(
    qhat: QApproximator,
    state: GameState,
    action: int,
    reward: float,
    next_state: GameState,
    alpha: float,
    gamma: float,
    n_actions_next: int,
) -> float:
    """One Q-learning step from the current estimate toward ``r + gamma max Q(s', .)``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    current = qhat.predict(state.features, action).mean
    if next_state.terminal:
        future = 0.0
    else:
        future = max(qhat.action_values(next_state.features, n_actions_next)[0])
    return current + alpha * (reward + gamma * future - current)


@dataclass(frozen=True)
class FitConfig:
    """Density-fitting options.

    ``action_model="joint"`` fits one mixture over ``(s, a, Q)``;
    ``"per_action"`` fits one mixture over ``(s, Q)`` per action. With
    ``adaptive_k`` a density whose data is below the sample floor for
    ``n_components`` is fitted with as many components as the floor allows
    (at least one) instead of being left empty.
    """

    n_components: int = 5
    select_k: bool = False
    k_candidates: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)
    test_fraction: float = 0.25
    min_fit_samples: int | None = None
    sigma2_init: float = 1.0
    tol: float = 1e-6
    max_iter: int = 200
    kmeans_restarts: int = 5
    action_model: str = "joint"
    adaptive_k: bool = False

    def __post_init__(self):
        if self.action_model not in ("joint", "per_action"):
            raise ValueError(f"unknown action_model {self.action_model!r}")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")

    def samples_per_component(self, dim: int) -> int:
        return 3 * (dim + 1)

    def min_samples(self, dim: int) -> int:
        if self.min_fit_samples is not None:
            return self.min_fit_samples
        return self.n_components * self.samples_per_component(dim)

    def components_for(self, n: int, dim: int) -> int:
        """Components to fit on ``n`` rows of width ``dim``; 0 means stay empty."""
        if n >= self.min_samples(dim):
            return self.n_components
        if self.adaptive_k:
            return min(self.n_components, n // self.samples_per_component(dim))
        return 0


def _fit_density(X: np.ndarray, config: FitConfig, rng: np.random.Generator) -> MixtureModel | None:
    k = config.components_for(len(X), X.shape[1])
    if k == 0:
        return None
    try:
        if config.select_k:
            candidates = config.k_candidates
            if k < config.n_components:  # scarce data: only counts the floor allows
                candidates = tuple(c for c in candidates if c <= k) or (k,)
            return select_k(X, candidates, config.test_fraction, rng,
                            tol=config.tol, max_iter=config.max_iter)
        return fit_em(X, k, rng, tol=config.tol, max_iter=config.max_iter,
                      n_init=config.kmeans_restarts)
    except (InsufficientDataError, np.linalg.LinAlgError, ValueError) as exc:
        log.warning("fit on %d samples failed, leaving the density empty: %s", len(X), exc)
        return None


def refit(dataset: AggregatedDataset, config: FitConfig, rng: np.random.Generator) -> QApproximator:
    """Fit a fresh approximator on the whole aggregated dataset.

    Densities with too little data, or whose fit fails, stay empty.
    """
    if not dataset.samples:
        return QApproximator(None, config.sigma2_init)
    X = dataset.as_array()
    if config.action_model == "joint":
        return QApproximator(_fit_density(X, config, rng), config.sigma2_init)
    actions = X[:, -2].astype(int)
    rows = np.delete(X, -2, axis=1)
    models = [
        _fit_density(rows[actions == a], config, rng) if np.any(actions == a) else None
        for a in range(int(actions.max()) + 1)
    ]
    return QApproximator(None, config.sigma2_init, per_action=models)


def _argmax_random_tie(values: Sequence[float], rng: random.Random) -> int:
    best = max(values)
    ties = [a for a, v in enumerate(values) if v == best]
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.random() * len(ties))]


def greedy_policy(qhat: QApproximator, state: GameState, n_actions: int, rng: random.Random) -> int:
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    ties = qhat.best_actions(state.features, n_actions)
    return ties[0] if len(ties) == 1 else ties[int(rng.random() * len(ties))]


def epsilon_greedy_policy(
    qhat: QApproximator, state: GameState, n_actions: int, epsilon: float, rng: random.Random
) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.random() * n_actions)
    return greedy_policy(qhat, state, n_actions, rng)


@dataclass
class GreedyPolicy:
    """Callable greedy policy over a fixed approximator."""

    qhat: QApproximator
    n_actions: int
    epsilon: float = 0.0

    def __call__(self, state: GameState, rng: random.Random) -> int:
        return epsilon_greedy_policy(self.qhat, state, self.n_actions, self.epsilon, rng)


# --------------------------------------------------------------------------
# dataset dump / load


def dump_dataset(dataset: AggregatedDataset, path: str | Path) -> None:
    """Tab-separated dump, one sample per row.

    Columns: ``iteration``, ``s0..s{d-1}``, ``action``, ``q_target``,
    ``reward``, ``next_s0..``, ``next_terminal``.
    """
    if not dataset.samples:
        Path(path).write_text("")
        return
    d = len(dataset.samples[0].state.features)
    header = (
        ["iteration"] + [f"s{f}" for f in range(d)] + ["action", "q_target", "reward"]
        + [f"next_s{f}" for f in range(d)] + ["next_terminal"]
    )
    batch_of = np.searchsorted(np.array(dataset.iteration_marks), np.arange(len(dataset)), "right")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for i, s in zip(batch_of, dataset.samples):
            w.writerow(
                [int(i), *map(repr, s.state.features), s.action_id, repr(s.q_target),
                 repr(s.reward), *map(repr, s.next_state.features), int(s.next_state.terminal)]
            )


def load_dataset(path: str | Path) -> AggregatedDataset:
    text = Path(path).read_text()
    if not text:
        return AggregatedDataset()
    rows = list(csv.reader(text.splitlines(), delimiter="\t"))
    header, rows = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("s") and h[1:].isdigit())
    samples, marks, current = [], [], None
    for row in rows:
        it = int(row[0])
        if current is not None and it != current:
            marks.append(len(samples))
        current = it
        s = tuple(float(v) for v in row[1 : 1 + d])
        a, q, r = int(row[1 + d]), float(row[2 + d]), float(row[3 + d])
        ns = tuple(float(v) for v in row[4 + d : 4 + 2 * d])
        samples.append(Sample(GameState(s), a, q, r, GameState(ns, bool(int(row[4 + 2 * d])))))
    marks.append(len(samples))
    return AggregatedDataset(tuple(samples), tuple(marks))
