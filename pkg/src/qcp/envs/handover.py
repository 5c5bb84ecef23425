"""Kinematic hand-over between two mobile manipulators."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

from ..game import Game, GameState, JointAction, StepOutcome, broadcast_xi

ACTION_NAMES = (
    "arm-up", "arm-down", "arm-forward", "arm-backward", "arm-right", "arm-left",
    "base-forward", "base-backward", "base-left", "base-right",
)


@dataclass
class Handover(Game):
    """Two robots facing each other must park one metre apart and meet end-effectors.

    Poses live on an integer lattice of ``unit`` metres so that revisited
    configurations produce bit-identical features. Features are
    ``(rel_base_x, rel_base_y, rel_ee_x, rel_ee_y, rel_ee_z)`` in metres;
    absolute poses are kept in ``GameState.aux``.

    Reward ``w_base / (1 + |‖rel_base‖ - desired|) + w_ee / (1 + ‖rel_ee‖)``.
    """

    unit: float = 0.05
    base_step: int = 2  # 0.1 m
    arm_step: int = 1  # 0.05 m
    reach: int = 10  # arm offset half-width, 0.5 m
    workspace: int = 20  # base coordinate half-width, 1.0 m
    min_separation: int = 6  # 0.3 m between bases
    desired_distance: float = 1.0
    weights: tuple[float, float] = (0.5, 0.5)
    base_tolerance: float = 0.05
    ee_tolerance: float = 0.05
    action_noise: float = 0.05
    xi_value: float = 0.025

    def __post_init__(self):
        self.n_agents = 2
        self.action_set_sizes = (len(ACTION_NAMES),) * 2
        self.xi = broadcast_xi(self.xi_value, 5)

    # aux layout: b0x b0y b1x b1y e0x e0y e0z e1x e1y e1z, robot 0 faces +x
    def make_state(self, aux: tuple[int, ...]) -> GameState:
        b0x, b0y, b1x, b1y, e0x, e0y, e0z, e1x, e1y, e1z = aux
        u = self.unit
        rb = ((b1x - b0x) * u, (b1y - b0y) * u)
        re = ((b1x + e1x - b0x - e0x) * u, (b1y + e1y - b0y - e0y) * u, (e1z - e0z) * u)
        terminal = (
            abs(math.hypot(*rb) - self.desired_distance) < self.base_tolerance
            and math.sqrt(sum(c * c for c in re)) < self.ee_tolerance
        )
        return GameState(rb + re, terminal, tuple(aux))

    def reward(self, state: GameState) -> float:
        f = state.features
        base_err = abs(math.hypot(f[0], f[1]) - self.desired_distance)
        ee = math.sqrt(f[2] * f[2] + f[3] * f[3] + f[4] * f[4])
        return self.weights[0] / (1.0 + base_err) + self.weights[1] / (1.0 + ee)

    def _move(self, aux: list[int], robot: int, action: int) -> None:
        heading = 1 if robot == 0 else -1
        b = 2 * robot
        e = 4 + 3 * robot
        if action < 6:
            axis, sign = {
                0: (2, 1), 1: (2, -1),
                2: (0, heading), 3: (0, -heading),
                4: (1, -heading), 5: (1, heading),
            }[action]
            value = aux[e + axis] + sign * self.arm_step
            aux[e + axis] = max(-self.reach, min(self.reach, value))
            return
        dx, dy = {
            6: (heading, 0), 7: (-heading, 0), 8: (0, heading), 9: (0, -heading),
        }[action]
        nx = aux[b] + dx * self.base_step
        ny = aux[b + 1] + dy * self.base_step
        if abs(nx) > self.workspace or abs(ny) > self.workspace:
            return
        ob = 2 * (1 - robot)
        if max(abs(nx - aux[ob]), abs(ny - aux[ob + 1])) < self.min_separation:
            return
        aux[b], aux[b + 1] = nx, ny

    def transition(self, state: GameState, joint: JointAction) -> StepOutcome:
        aux = list(state.aux)
        for robot, action in enumerate(joint):
            self._move(aux, robot, action)
        nxt = self.make_state(tuple(aux))
        return StepOutcome(nxt, self.reward(nxt))

    def sample_initial_state(self, rng: random.Random) -> GameState:
        w, s = self.workspace, self.base_step
        coords = range(-w, w + 1, s)
        while True:
            b0 = (rng.choice(coords), rng.choice(coords))
            b1 = (rng.choice(coords), rng.choice(coords))
            if max(abs(b0[0] - b1[0]), abs(b0[1] - b1[1])) < self.min_separation:
                continue
            arms = tuple(rng.randint(-self.reach, self.reach) for _ in range(6))
            state = self.make_state(b0 + b1 + arms)
            if not state.terminal:
                return state

    def render(self, state: GameState) -> str:
        f = state.features
        return (
            f"rel_base=({f[0]:+.2f},{f[1]:+.2f}) rel_ee=({f[2]:+.2f},{f[3]:+.2f},{f[4]:+.2f})"
            f" r={self.reward(state):.3f}"
        )
