"""Grid-world scenarios: cooperative navigation and door passing."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..game import Game, GameState, JointAction, StepOutcome, broadcast_xi

NOOP, UP, DOWN, RIGHT, LEFT = range(5)
ACTION_NAMES = ("noop", "up", "down", "right", "left")
MOVES = ((0, 0), (0, 1), (0, -1), (1, 0), (-1, 0))

Cell = tuple[int, int]


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def resolve_moves(
    positions: tuple[Cell, ...],
    joint: JointAction,
    width: int,
    height: int,
    walls: frozenset[Cell] = frozenset(),
) -> tuple[Cell, ...]:
    """Simultaneous moves with blocking.

    A move is cancelled if it leaves the grid, enters a wall, enters a cell
    occupied by another robot at the start of the step (this covers swaps),
    or enters a cell that another robot also moves into.
    """
    proposed = []
    for (x, y), a in zip(positions, joint):
        if a:
            dx, dy = MOVES[a]
            cell = (x + dx, y + dy)
            if 0 <= cell[0] < width and 0 <= cell[1] < height and cell not in walls:
                proposed.append(cell)
                continue
        proposed.append(None)
    if not any(proposed):
        return positions
    result = list(positions)
    for j, cell in enumerate(proposed):
        if cell is None or cell in positions:
            continue
        if proposed.count(cell) > 1:
            continue
        result[j] = cell
    return tuple(result)


@dataclass
class GridGame(Game):
    """Robots on a grid with fixed targets; state is ``(r_x, r_y, t_x, t_y)`` per robot."""

    width: int = 4
    height: int = 4
    targets: tuple[Cell, ...] = ((3, 3), (0, 3), (3, 0))
    walls: frozenset[Cell] = frozenset()
    action_noise: float = 0.05
    xi_value: float = 0.5
    random_targets: bool = True

    def __post_init__(self):
        self.targets = tuple(tuple(t) for t in self.targets)
        self.walls = frozenset(tuple(w) for w in self.walls)
        self.n_agents = len(self.targets)
        self.action_set_sizes = (len(MOVES),) * self.n_agents
        self.xi = broadcast_xi(self.xi_value, 4 * self.n_agents)
        self._memo: dict = {}  # deterministic transitions are cached
        self.free_cells = [
            (x, y) for x in range(self.width) for y in range(self.height)
            if (x, y) not in self.walls
        ]

    def positions(self, state: GameState) -> tuple[Cell, ...]:
        f = state.features
        return tuple((f[k], f[k + 1]) for k in range(0, 4 * self.n_agents, 4))

    def state_targets(self, state: GameState) -> tuple[Cell, ...]:
        f = state.features
        return tuple((f[k + 2], f[k + 3]) for k in range(0, 4 * self.n_agents, 4))

    def make_state(self, positions, targets=None) -> GameState:
        positions = tuple((int(x), int(y)) for x, y in positions)
        targets = self.targets if targets is None else tuple(tuple(t) for t in targets)
        features = []
        for p, t in zip(positions, targets):
            features += (p[0], p[1], t[0], t[1])
        return GameState(tuple(features), positions == targets)

    def reward_of(self, positions: tuple[Cell, ...], targets: tuple[Cell, ...]) -> float:
        raise NotImplementedError

    def transition(self, state: GameState, joint: JointAction) -> StepOutcome:
        key = (state.features, joint)
        hit = self._memo.get(key)
        if hit is None:
            f = state.features
            before = tuple(zip(f[0::4], f[1::4]))
            targets = tuple(zip(f[2::4], f[3::4]))
            moved = resolve_moves(before, joint, self.width, self.height, self.walls)
            if moved == before:
                nxt = state
            else:
                features = list(f)
                for k, (x, y) in enumerate(moved):
                    features[4 * k], features[4 * k + 1] = x, y
                nxt = GameState(tuple(features), moved == targets)
            hit = self._memo[key] = StepOutcome(nxt, self.reward_of(moved, targets))
            if len(self._memo) > 2_000_000:
                self._memo.clear()
        return hit

    def reward(self, state: GameState) -> float:
        return self.reward_of(self.positions(state), self.state_targets(state))

    def start_cells(self, agent: int) -> list[Cell]:
        return self.free_cells

    def target_cells(self, agent: int) -> list[Cell]:
        return self.free_cells

    def sample_initial_state(self, rng: random.Random) -> GameState:
        """Uniform valid, non-terminal configuration.

        With ``random_targets`` the targets are drawn too (distinct cells);
        otherwise the configured ``targets`` are used.
        """
        while True:
            if self.random_targets:
                targets: list[Cell] = []
                for j in range(self.n_agents):
                    options = [c for c in self.target_cells(j) if c not in targets]
                    targets.append(options[rng.randrange(len(options))])
            else:
                targets = list(self.targets)
            chosen: list[Cell] = []
            for j in range(self.n_agents):
                options = [c for c in self.start_cells(j) if c not in chosen]
                chosen.append(options[rng.randrange(len(options))])
            state = self.make_state(chosen, targets)
            if not state.terminal:
                return state

    def render(self, state: GameState) -> str:
        grid = [["." for _ in range(self.width)] for _ in range(self.height)]
        for x, y in self.walls:
            grid[y][x] = "#"
        for j, (x, y) in enumerate(self.state_targets(state)):
            grid[y][x] = chr(ord("a") + j)
        for j, (x, y) in enumerate(self.positions(state)):
            grid[y][x] = chr(ord("A") + j)
        return "\n".join("".join(row) for row in reversed(grid))


@dataclass
class CooperativeNavigation(GridGame):
    """Three robots on a 4x4 grid, each heading for its own target cell.

    Reward ``1 / (1 + sum of robot-target Manhattan distances)``.
    """

    def reward_of(self, positions, targets):
        dist = 0
        for (px, py), (tx, ty) in zip(positions, targets):
            dist += abs(px - tx) + abs(py - ty)
        return 1.0 / (1.0 + dist)


def _door_walls(width: int, height: int, wall_x: int, door_y: int) -> frozenset[Cell]:
    return frozenset((wall_x, y) for y in range(height) if y != door_y)


@dataclass
class DoorPassing(GridGame):
    """Two robots crossing a wall through a single door in opposite directions.

    Reward is ``w1 / (1 + sum Manhattan to targets)`` plus ``w2`` times the
    mean over robots of ``min(1, clearance / clearance_sat)`` (Manhattan
    distance to the nearest wall cell) plus ``w3 * min(1, d / spacing_sat)``
    for the robot-robot Manhattan distance ``d``.
    """

    width: int = 7
    height: int = 5
    wall_x: int = 3
    door_y: int = 2
    targets: tuple[Cell, ...] = ((6, 2), (0, 2))
    weights: tuple[float, float, float] = (0.6, 0.2, 0.2)
    clearance_sat: float = 2.0
    spacing_sat: float = 3.0

    def __post_init__(self):
        if not self.walls:
            self.walls = _door_walls(self.width, self.height, self.wall_x, self.door_y)
        super().__post_init__()

    def clearance(self, cell: Cell) -> int:
        return min(manhattan(cell, w) for w in self.walls)

    def reward_of(self, positions, targets):
        w1, w2, w3 = self.weights
        dist = sum(manhattan(p, t) for p, t in zip(positions, targets))
        clear = sum(min(1.0, self.clearance(p) / self.clearance_sat) for p in positions)
        spacing = min(1.0, manhattan(positions[0], positions[1]) / self.spacing_sat)
        return w1 / (1.0 + dist) + w2 * clear / len(positions) + w3 * spacing

    def _room(self, left: bool) -> list[Cell]:
        return [c for c in self.free_cells if (c[0] < self.wall_x) == left and c[0] != self.wall_x]

    def target_cells(self, agent):
        # targets lie in the room of the configured target ...
        return self._room(self.targets[agent][0] < self.wall_x)

    def start_cells(self, agent):
        # ... and each robot starts in the opposite room
        return self._room(self.targets[agent][0] > self.wall_x)
