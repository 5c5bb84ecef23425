"""Fully collaborative stochastic games: states, joint actions and episodes."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

JointAction = tuple[int, ...]


class ContractViolation(RuntimeError):
    """Raised when a game is driven outside its contract."""


@dataclass(frozen=True)
class GameState:
    """Observable feature vector of a game state.

    ``aux`` carries simulator bookkeeping that the transition function needs
    but that is neither compared nor learned from (e.g. absolute poses when
    the features are relative). It is empty for the grid scenarios.
    """

    features: tuple[float, ...]
    terminal: bool = False
    aux: tuple = ()

    def __len__(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class AgentAction:
    agent_id: int
    action_id: int


class StepOutcome(NamedTuple):
    next_state: GameState
    reward: float


class Transition(NamedTuple):
    state: GameState
    joint: JointAction
    reward: float
    next_state: GameState


Policy = Callable[[GameState, random.Random], int]


class Game:
    """Base class for a stochastic game ``(n, S, A_1:n, T, R)`` with shared reward.

    Subclasses implement :meth:`transition` (deterministic effect of a joint
    action) and :meth:`sample_initial_state`. :meth:`step` adds the action
    noise: each agent's command is independently replaced by a uniformly
    random action of that agent with probability ``action_noise``.
    """

    n_agents: int
    action_set_sizes: tuple[int, ...]
    xi: tuple[float, ...]
    action_noise: float = 0.05

    def transition(self, state: GameState, joint: JointAction) -> StepOutcome:
        raise NotImplementedError

    def sample_initial_state(self, rng: random.Random) -> GameState:
        raise NotImplementedError

    def render(self, state: GameState) -> str:
        return " ".join(f"{f:g}" for f in state.features)

    def validate_joint(self, joint: JointAction) -> None:
        sizes = self.action_set_sizes
        if len(joint) == len(sizes) and all(0 <= a < n for a, n in zip(joint, sizes)):
            return
        if len(joint) != self.n_agents:
            raise ContractViolation(
                f"joint action has {len(joint)} entries, expected {self.n_agents}"
            )
        for j, (a, size) in enumerate(zip(joint, self.action_set_sizes)):
            if not 0 <= a < size:
                raise ContractViolation(f"agent {j}: action {a} outside [0, {size})")

    def step(self, state: GameState, joint: JointAction, rng: random.Random) -> StepOutcome:
        if state.terminal:
            raise ContractViolation("cannot step a terminal state")
        self.validate_joint(joint)
        noise = self.action_noise
        if noise > 0.0:
            draw = rng.random
            noisy = []
            for a, size in zip(joint, self.action_set_sizes):
                if draw() < noise:
                    a = int(draw() * size)
                noisy.append(a)
            joint = tuple(noisy)
        outcome = self.transition(state, joint)
        if not math.isfinite(outcome.reward):
            raise ContractViolation(f"non-finite reward {outcome.reward!r}")
        return outcome

    def state_key(self, state: GameState) -> tuple[int, ...]:
        """Hashable bucket of ``state`` on the ``xi`` lattice."""
        return tuple(round(f / x) for f, x in zip(state.features, self.xi))


def broadcast_xi(xi: float | Sequence[float], dim: int) -> tuple[float, ...]:
    if isinstance(xi, (int, float)):
        return (float(xi),) * dim
    xi = tuple(float(x) for x in xi)
    if len(xi) != dim:
        raise ContractViolation(f"xi has {len(xi)} entries, expected {dim}")
    return xi


def states_equal(a: GameState, b: GameState, xi: float | Sequence[float]) -> bool:
    """True iff every feature differs by at most its tolerance.

    Reflexive and symmetric but not transitive.
    """
    if len(a.features) != len(b.features):
        raise ContractViolation(
            f"feature lengths differ: {len(a.features)} vs {len(b.features)}"
        )
    tol = broadcast_xi(xi, len(a.features))
    return all(abs(x - y) <= t for x, y, t in zip(a.features, b.features, tol))


def run_episode(
    game: Game,
    policies: Sequence[Policy],
    max_steps: int,
    rng: random.Random,
    initial_state: GameState | None = None,
) -> list[Transition]:
    """Roll all agents' policies forward until ``max_steps`` or a terminal state."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if len(policies) != game.n_agents:
        raise ContractViolation(f"expected {game.n_agents} policies, got {len(policies)}")
    state = initial_state if initial_state is not None else game.sample_initial_state(rng)
    trajectory = []
    for _ in range(max_steps):
        if state.terminal:
            break
        joint = tuple(policy(state, rng) for policy in policies)
        next_state, reward = game.step(state, joint, rng)
        trajectory.append(Transition(state, joint, reward, next_state))
        state = next_state
    return trajectory
