"""Q-value gated UCT search and the comparison planners.

All planners share one shape: from ``s_t`` they spend ``budget`` simulated
trajectories of at most ``horizon`` steps for one searching agent while the
teammates follow their greedy policies, then execute a root-to-leaf path and
emit one Q-learning sample per step.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

from .game import ContractViolation, Game, GameState, states_equal
from .qfunction import (
    QApproximator, Sample, _argmax_random_tie, epsilon_greedy_policy, greedy_policy, q_target,
)

ALGORITHMS = ("qcp", "vanilla", "random", "td")


@dataclass(frozen=True)
class SearchConfig:
    horizon: int = 4
    rollouts: int = 3
    c: float = 0.7
    lam: float = 0.5
    eps_admissible: float = 0.3
    eps_rollout: float = 0.1
    rollout_cap: int = 25
    budget: int = 64
    alpha: float = 0.2
    gamma: float = 0.8
    delta_mode: str = "sample"  # "sample": |z|, z ~ N(0, var); "variance": var itself
    td_epsilon: float = 0.1
    count_rollout_states: bool = False

    def __post_init__(self):
        if self.horizon < 1 or self.rollouts < 1 or self.budget < 1 or self.rollout_cap < 1:
            raise ValueError("horizon, rollouts, budget and rollout_cap must be >= 1")
        if self.c < 0:
            raise ValueError("c must be >= 0")
        if not 0.0 <= self.lam <= 1.0 or not 0.0 <= self.eps_admissible <= 1.0:
            raise ValueError("lam and eps_admissible must lie in [0, 1]")
        if self.delta_mode not in ("sample", "variance"):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")


class SearchNode:
    """UCT node: per-action visit counts and summed backed-up returns.

    ``children[a]`` lists the distinct successor states observed after
    action ``a`` (chance outcomes), matched with the game's ``xi``.
    """

    __slots__ = ("state", "depth", "counts", "totals", "children", "admissible", "teammates")

    def __init__(self, state: GameState, depth: int, n_actions: int):
        self.state = state
        self.depth = depth
        self.counts = [0] * n_actions
        self.totals = [0.0] * n_actions
        self.children: dict[int, list[SearchNode]] = {}
        self.admissible: tuple[int, ...] | None = None
        self.teammates: tuple[int, ...] | None = None

    @property
    def visits(self) -> int:
        return sum(self.counts)

    def value(self, action: int) -> float:
        n = self.counts[action]
        return self.totals[action] / n if n else 0.0

    def child(self, action: int, state: GameState, xi) -> SearchNode | None:
        for node in self.children.get(action, ()):
            if states_equal(node.state, state, xi):
                return node
        return None


@dataclass
class SearchResult:
    samples: list[Sample]
    explored_states: set = field(default_factory=set)
    sim_steps: int = 0


# --------------------------------------------------------------------------
# building blocks


def admissible_actions(
    qhat: QApproximator,
    state: GameState,
    n_actions: int,
    lam: float,
    eps_admissible: float,
    rng: random.Random,
    delta_mode: str = "sample",
) -> tuple[int, ...]:
    """Actions whose estimate clears ``lam * max_a Q(s, a) - delta``.

    ``delta`` is ``|z|`` with ``z ~ N(0, var(Q|s,a))`` (or the variance
    itself). Each rejected action is still admitted with probability
    ``eps_admissible``. The result is never empty: the argmax is forced in.
    """
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    if n_actions == 1:
        return (0,)
    means, variances = qhat.action_values(state.features, n_actions)
    threshold = lam * max(means)
    admitted = []
    for a in range(n_actions):
        var = variances[a]
        if delta_mode == "sample":
            delta = abs(rng.gauss(0.0, math.sqrt(var))) if var > 0 else 0.0
        else:
            delta = var
        if means[a] >= threshold - delta or rng.random() < eps_admissible:
            admitted.append(a)
    if not admitted:
        admitted.append(max(range(n_actions), key=means.__getitem__))
    return tuple(admitted)


def exploration_bonus(total: int, count: int, c: float) -> float:
    if count == 0:
        return math.inf
    return c * math.sqrt(math.log(total) / count)


def select_action_ucb(
    qhat: QApproximator, node: SearchNode, admissible: Sequence[int], c: float
) -> int:
    """``argmax_a Q(s, a) + c sqrt(ln(sum_a n(s, a)) / n(s, a))`` over admissible actions.

    Unvisited actions win outright, lowest id first; exact ties go to the
    lowest id.
    """
    if not admissible:
        raise ValueError("empty admissible set")
    counts = node.counts
    for a in sorted(admissible):
        if counts[a] == 0:
            return a
    means = qhat.action_values(node.state.features, len(counts))[0]
    total = sum(counts[a] for a in admissible)
    best, best_score = -1, -math.inf
    for a in sorted(admissible):
        score = means[a] + exploration_bonus(total, counts[a], c)
        if score > best_score:
            best, best_score = a, score
    return best


def rollout(
    game: Game,
    qhats: Sequence[QApproximator],
    start: GameState,
    epsilon: float,
    cap: int,
    rng: random.Random,
    gamma: float = 0.8,
    visited: set | None = None,
) -> float:
    """Discounted return of all agents acting epsilon-greedily from ``start``."""
    return _rollout(game, qhats, start, epsilon, cap, rng, gamma, visited)[0]


def _rollout(game, qhats, start, epsilon, cap, rng, gamma, visited):
    if cap < 1:
        raise ValueError("cap must be >= 1")
    # Exploration and action noise both swap the command for a uniform
    # action, so one draw with the combined probability is equivalent.
    p_uniform = epsilon + (1.0 - epsilon) * game.action_noise
    agents = list(zip(qhats, game.action_set_sizes))
    transition = game.transition
    draw = rng.random
    state, total, discount = start, 0.0, 1.0
    steps = 0
    while steps < cap and not state.terminal:
        joint = []
        for q, n in agents:
            if draw() < p_uniform:
                joint.append(int(draw() * n))
            else:
                ties = q.best_actions(state.features, n)
                joint.append(ties[0] if len(ties) == 1 else ties[int(draw() * len(ties))])
        state, reward = transition(state, tuple(joint))
        steps += 1
        total += discount * reward
        discount *= gamma
        if visited is not None:
            visited.add(game.state_key(state))
    return total, steps


def _teammate_actions(
    game: Game, qhats: Sequence[QApproximator], agent_id: int, state: GameState, rng
) -> tuple[int, ...]:
    sizes = game.action_set_sizes
    return tuple(
        -1 if j == agent_id else greedy_policy(qhats[j], state, sizes[j], rng)
        for j in range(game.n_agents)
    )


def _with_action(teammates: tuple[int, ...], agent_id: int, action: int) -> tuple[int, ...]:
    return teammates[:agent_id] + (action,) + teammates[agent_id + 1 :]


def _check_root(game: Game, agent_id: int, state: GameState) -> None:
    if state.terminal:
        raise ContractViolation("search started from a terminal state")
    if not 0 <= agent_id < game.n_agents:
        raise ContractViolation(f"agent {agent_id} outside [0, {game.n_agents})")


# --------------------------------------------------------------------------
# UCT family

Admit = Callable[[QApproximator, SearchNode, int, SearchConfig, random.Random], tuple[int, ...]]


def _admit_qcp(qhat, node, n_actions, config, rng):
    return admissible_actions(
        qhat, node.state, n_actions, config.lam, config.eps_admissible, rng, config.delta_mode
    )


def _admit_all(qhat, node, n_actions, config, rng):
    return tuple(range(n_actions))


def _admit_one(qhat, node, n_actions, config, rng):
    if n_actions == 1:
        return (0,)
    return (int(rng.random() * n_actions),)


def uct_search(
    game: Game,
    agent_id: int,
    qhats: Sequence[QApproximator],
    root_state: GameState,
    config: SearchConfig,
    rng: random.Random,
    admit: Admit,
    trace: TextIO | None = None,
) -> SearchResult:
    """Generic UCT loop; ``admit`` decides each node's expandable actions.

    A node's admissible set is drawn once, on its first visit, and reused.
    """
    _check_root(game, agent_id, root_state)
    qhat = qhats[agent_id]
    n_actions = game.action_set_sizes[agent_id]
    xi = game.xi
    gamma = config.gamma
    explored = {game.state_key(root_state)}
    rollout_seen = explored if config.count_rollout_states else None
    root = SearchNode(root_state, 0, n_actions)
    steps = 0

    for iteration in range(config.budget):
        node = root
        path = []
        for _ in range(config.horizon):
            if node.state.terminal:
                break
            if node.admissible is None:
                node.admissible = admit(qhat, node, n_actions, config, rng)
                node.teammates = _teammate_actions(game, qhats, agent_id, node.state, rng)
            action = select_action_ucb(qhat, node, node.admissible, config.c)
            joint = _with_action(node.teammates, agent_id, action)
            next_state, reward = game.step(node.state, joint, rng)
            steps += 1
            child = node.child(action, next_state, xi)
            if child is None:
                child = SearchNode(next_state, node.depth + 1, n_actions)
                node.children.setdefault(action, []).append(child)
                explored.add(game.state_key(next_state))
            path.append((node, action, reward))
            node = child
        if node.state.terminal:
            leaf_value = 0.0
        else:
            leaf_value = 0.0
            for _ in range(config.rollouts):
                value, used = _rollout(game, qhats, node.state, config.eps_rollout,
                                       config.rollout_cap, rng, gamma, rollout_seen)
                leaf_value += value
                steps += used
            leaf_value /= config.rollouts
        ret = leaf_value
        for n, a, r in reversed(path):
            ret = r + gamma * ret
            n.counts[a] += 1
            n.totals[a] += ret
        if trace is not None:
            trace.write(
                f"{iteration}\t{node.depth}\t{hash(game.state_key(node.state)) & 0xFFFFFFFF:08x}"
                f"\t{','.join(map(str, root.admissible or ()))}\t{path[0][1] if path else -1}"
                f"\t{ret:.6g}\n"
            )

    samples = _execute_path(game, agent_id, qhats, root, config, rng)
    return SearchResult(samples, explored, steps)


def _execute_path(game, agent_id, qhats, root, config, rng) -> list[Sample]:
    """Follow the best tree action (greedy Q beyond the tree) for up to ``horizon`` steps."""
    qhat = qhats[agent_id]
    n_actions = game.action_set_sizes[agent_id]
    samples = []
    state, node = root.state, root
    for _ in range(config.horizon):
        if state.terminal:
            break
        if node is not None and node.visits > 0:
            visited = [a for a in range(n_actions) if node.counts[a] > 0]
            action = max(visited, key=lambda a: (node.value(a), node.counts[a], -a))
            teammates = node.teammates
        else:
            action = greedy_policy(qhat, state, n_actions, rng)
            teammates = _teammate_actions(game, qhats, agent_id, state, rng)
        next_state, reward = game.step(state, _with_action(teammates, agent_id, action), rng)
        target = q_target(qhat, state, action, reward, next_state,
                          config.alpha, config.gamma, n_actions)
        samples.append(Sample(state, action, target, reward, next_state))
        node = node.child(action, next_state, game.xi) if node is not None else None
        state = next_state
    return samples


def qcp_search(game, agent_id, qhats, state, config, rng, trace=None) -> SearchResult:
    """UCT whose expansion is limited to Q-admissible actions."""
    return uct_search(game, agent_id, qhats, state, config, rng, _admit_qcp, trace)


def vanilla_uct_search(game, agent_id, qhats, state, config, rng, trace=None) -> SearchResult:
    """UCT expanding every action."""
    return uct_search(game, agent_id, qhats, state, config, rng, _admit_all, trace)


def random_uct_search(game, agent_id, qhats, state, config, rng, trace=None) -> SearchResult:
    """UCT expanding a single uniformly drawn action per node."""
    return uct_search(game, agent_id, qhats, state, config, rng, _admit_one, trace)


# --------------------------------------------------------------------------
# TD-search


def td_search(game, agent_id, qhats, root_state, config, rng, trace=None) -> SearchResult:
    """Simulation-based TD(0) planning without a tree.

    A search-local table is seeded from the agent's approximator on first
    visit and updated with the Q-learning rule after every simulated step.
    The agent explores epsilon-greedily on the table; no UCB, no admissibility.
    """
    _check_root(game, agent_id, root_state)
    qhat = qhats[agent_id]
    n_actions = game.action_set_sizes[agent_id]
    alpha, gamma, eps = config.alpha, config.gamma, config.td_epsilon
    table: dict[tuple, list[float]] = {}
    steps = 0

    def values(state):
        key = game.state_key(state)
        row = table.get(key)
        if row is None:
            row = table[key] = list(qhat.action_values(state.features, n_actions)[0])
        return row

    values(root_state)
    for iteration in range(config.budget):
        state = root_state
        for _ in range(config.horizon):
            if state.terminal:
                break
            row = values(state)
            if eps > 0.0 and rng.random() < eps:
                action = int(rng.random() * n_actions)
            else:
                action = _argmax_random_tie(row, rng)
            teammates = _teammate_actions(game, qhats, agent_id, state, rng)
            next_state, reward = game.step(state, _with_action(teammates, agent_id, action), rng)
            steps += 1
            future = 0.0 if next_state.terminal else max(values(next_state))
            row[action] += alpha * (reward + gamma * future - row[action])
            state = next_state
        if trace is not None:
            trace.write(f"{iteration}\t{len(table)}\n")

    samples = []
    state = root_state
    for _ in range(config.horizon):
        if state.terminal:
            break
        row = table.get(game.state_key(state))
        if row is None:
            row = qhat.action_values(state.features, n_actions)[0]
        action = _argmax_random_tie(row, rng)
        teammates = _teammate_actions(game, qhats, agent_id, state, rng)
        next_state, reward = game.step(state, _with_action(teammates, agent_id, action), rng)
        target = q_target(qhat, state, action, reward, next_state, alpha, gamma, n_actions)
        samples.append(Sample(state, action, target, reward, next_state))
        state = next_state
    return SearchResult(samples, set(table), steps)


SEARCHES = {
    "qcp": qcp_search,
    "vanilla": vanilla_uct_search,
    "random": random_uct_search,
    "td": td_search,
}
