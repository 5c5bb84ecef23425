"""Outer learning loop: execute policies, search, aggregate, refit."""
from __future__ import annotations

import dataclasses
import io
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence, TextIO

import numpy as np

from .game import Game, GameState, Policy, run_episode
from .qfunction import AggregatedDataset, FitConfig, GreedyPolicy, QApproximator, aggregate, refit
from .search import ALGORITHMS, SEARCHES, SearchConfig

METRIC_COLUMNS = (
    "algorithm", "seed", "iteration", "mean_reward", "cum_states", "new_states", "wall_ms",
)

# independent random streams, shared across algorithms for paired comparisons
_INIT, _EXEC, _SEARCH, _FIT = range(4)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 49
    timesteps: int = 5
    algorithm: str = "qcp"
    seed: int = 0
    search: SearchConfig = field(default_factory=SearchConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    lam_growth: float = 0.4
    lam_max: float = 0.95
    refit_every: str = "iteration"  # or "timestep"
    noise_in_search: bool = True
    record_wall_clock: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.timesteps < 1:
            raise ValueError("iterations and timesteps must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.refit_every not in ("iteration", "timestep"):
            raise ValueError(f"unknown refit_every {self.refit_every!r}")

    def lam(self, iteration: int) -> float:
        """Admissibility multiplier for 1-based ``iteration``."""
        grown = self.search.lam + self.lam_growth * (iteration - 1) / self.iterations
        return min(self.lam_max, grown)


@dataclass(frozen=True)
class IterationMetrics:
    algorithm: str
    seed: int
    iteration: int
    mean_reward: float
    cum_states: int
    new_states: int
    wall_ms: float = float("nan")

    def row(self) -> list[str]:
        wall = "nan" if self.wall_ms != self.wall_ms else f"{self.wall_ms:.1f}"
        return [self.algorithm, str(self.seed), str(self.iteration), repr(self.mean_reward),
                str(self.cum_states), str(self.new_states), wall]


@dataclass
class TrainResult:
    approximators: list[QApproximator]
    datasets: list[AggregatedDataset]
    metrics: list[IterationMetrics]
    sim_steps: int = 0
    action_set_sizes: tuple[int, ...] = ()

    @property
    def policies(self) -> list[GreedyPolicy]:
        return [GreedyPolicy(q, size) for q, size in zip(self.approximators, self.action_set_sizes)]


def _stream(seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *path])


def _py_rng(seq: np.random.SeedSequence) -> random.Random:
    return random.Random(int(seq.generate_state(2, np.uint64)[0]))


def train(
    game: Game,
    config: TrainConfig,
    trace: TextIO | None = None,
    render: TextIO | None = None,
) -> TrainResult:
    """Iterate: act with the current greedy policies, search, aggregate, refit.

    Each iteration samples ``s_0``, executes ``timesteps`` joint steps with
    the greedy policies and, after every step, lets each agent in turn
    search from the reached state. Samples are aggregated per agent; the
    approximators are refit once per iteration (or after every search with
    ``refit_every="timestep"``).
    """
    n = game.n_agents
    sizes = game.action_set_sizes
    search_fn = SEARCHES[config.algorithm]
    search_game = game if config.noise_in_search else dataclasses.replace(game, action_noise=0.0)
    sigma2 = config.fit.sigma2_init
    qhats = [QApproximator(None, sigma2) for _ in range(n)]
    datasets = [AggregatedDataset() for _ in range(n)]
    explored: set = set()
    metrics: list[IterationMetrics] = []
    sim_steps = 0

    for i in range(1, config.iterations + 1):
        started = time.perf_counter()
        init_rng = _py_rng(_stream(config.seed, _INIT, i))
        exec_rng = _py_rng(_stream(config.seed, _EXEC, i))
        search_rng = _py_rng(_stream(config.seed, _SEARCH, i))
        search_config = dataclasses.replace(config.search, lam=config.lam(i))
        batches: list[list] = [[] for _ in range(n)]
        rewards = []

        state = game.sample_initial_state(init_rng)
        if render is not None:
            render.write(f"# iteration {i} start\n{game.render(state)}\n")
        for t in range(config.timesteps):
            if state.terminal:
                state = game.sample_initial_state(init_rng)
            joint = tuple(
                GreedyPolicy(q, size)(state, exec_rng) for q, size in zip(qhats, sizes)
            )
            state, reward = game.step(state, joint, exec_rng)
            rewards.append(reward)
            if render is not None:
                render.write(f"# iteration {i} t={t + 1} r={reward:.4f}\n{game.render(state)}\n")
            if state.terminal:
                state = game.sample_initial_state(init_rng)
            for j in range(n):
                result = search_fn(search_game, j, qhats, state, search_config, search_rng, trace)
                explored |= result.explored_states
                sim_steps += result.sim_steps
                batches[j].extend(result.samples)
                if config.refit_every == "timestep":
                    datasets[j] = aggregate(datasets[j], result.samples)
                    fit_rng = np.random.default_rng(_stream(config.seed, _FIT, i, t, j))
                    qhats[j] = refit(datasets[j], config.fit, fit_rng)
        if config.refit_every == "iteration":
            for j in range(n):
                datasets[j] = aggregate(datasets[j], batches[j])
                fit_rng = np.random.default_rng(_stream(config.seed, _FIT, i, j))
                qhats[j] = refit(datasets[j], config.fit, fit_rng)

        previous = metrics[-1].cum_states if metrics else 0
        wall = (time.perf_counter() - started) * 1e3 if config.record_wall_clock else float("nan")
        metrics.append(IterationMetrics(
            config.algorithm, config.seed, i, float(np.mean(rewards)),
            len(explored), len(explored) - previous, wall,
        ))

    return TrainResult(qhats, datasets, metrics, sim_steps, tuple(sizes))


def evaluate_policy(
    game: Game,
    policies: Sequence[Policy],
    episodes: int,
    max_steps: int,
    rng: random.Random,
    initial_state: GameState | None = None,
) -> tuple[float, float]:
    """Mean and standard deviation of the undiscounted reward sum per episode."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    returns = [
        sum(tr.reward for tr in run_episode(game, policies, max_steps, rng, initial_state))
        for _ in range(episodes)
    ]
    return float(np.mean(returns)), float(np.std(returns))


def normalize_rewards(histories: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Seed-average each algorithm's reward curve and divide by the global maximum.

    ``histories[name]`` is either a 1-D curve or a (seeds, iterations) array.
    """
    curves = {}
    for name, values in histories.items():
        arr = np.asarray(values, dtype=float)
        curves[name] = arr.mean(0) if arr.ndim == 2 else arr
    top = max((float(c.max()) for c in curves.values() if c.size), default=0.0)
    if top <= 0.0:
        return {name: c.copy() for name, c in curves.items()}
    return {name: c / top for name, c in curves.items()}


def metrics_table(metrics: Sequence[IterationMetrics]) -> str:
    out = io.StringIO()
    out.write("\t".join(METRIC_COLUMNS) + "\n")
    for m in metrics:
        out.write("\t".join(m.row()) + "\n")
    return out.getvalue()
