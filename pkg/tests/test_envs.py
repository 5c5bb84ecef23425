import math
import random

import pytest

from qcp.envs import CooperativeNavigation, DoorPassing, Handover, make_game, resolve_moves
from qcp.envs.grid import DOWN, LEFT, NOOP, RIGHT, UP
from qcp.game import states_equal


def nav(**kw):
    return CooperativeNavigation(action_noise=0.0, random_targets=False, **kw)


def test_nav_goal_reward_and_terminal():
    game = nav()
    s = game.make_state(game.targets)
    assert s.terminal and game.reward(s) == 1.0


def test_nav_reward_formula_instance():
    game = nav()
    # distances 2 + 1 + 1 = 4 -> 1/5
    s = game.make_state(((3, 1), (0, 2), (2, 0)))
    assert game.reward(s) == pytest.approx(0.2)


def test_swap_is_blocked():
    moved = resolve_moves(((0, 0), (1, 0)), (RIGHT, LEFT), 4, 4)
    assert moved == ((0, 0), (1, 0))


def test_contested_cell_is_blocked():
    moved = resolve_moves(((0, 0), (2, 0)), (RIGHT, LEFT), 4, 4)
    assert moved == ((0, 0), (2, 0))


def test_move_into_occupied_cell_is_blocked():
    # robot 1 vacates (1, 0) but robot 0 is still blocked by the start occupancy
    moved = resolve_moves(((0, 0), (1, 0)), (RIGHT, UP), 4, 4)
    assert moved == ((0, 0), (1, 1))


def test_border_and_wall_block():
    assert resolve_moves(((0, 0),), (LEFT,), 4, 4) == ((0, 0),)
    assert resolve_moves(((0, 3),), (UP,), 4, 4) == ((0, 3),)
    assert resolve_moves(((2, 2),), (RIGHT,), 7, 5, frozenset({(3, 2)})) == ((2, 2),)


def test_nav_reward_monotone_in_distance():
    game = nav()
    rng = random.Random(0)
    for _ in range(200):
        s = game.sample_initial_state(rng)
        pos, tg = game.positions(s), game.state_targets(s)
        for j in range(3):
            for a in (UP, DOWN, RIGHT, LEFT):
                joint = tuple(a if k == j else NOOP for k in range(3))
                nxt, r = game.transition(s, joint)
                d_before = abs(pos[j][0] - tg[j][0]) + abs(pos[j][1] - tg[j][1])
                p = game.positions(nxt)[j]
                d_after = abs(p[0] - tg[j][0]) + abs(p[1] - tg[j][1])
                if d_after < d_before:
                    assert r >= game.reward(s)


def test_transitions_preserve_validity():
    for name in ("nav", "door"):
        game = make_game(name)
        rng = random.Random(1)
        s = game.sample_initial_state(rng)
        for _ in range(2000):
            if s.terminal:
                s = game.sample_initial_state(rng)
            joint = tuple(rng.randrange(n) for n in game.action_set_sizes)
            s = game.step(s, joint, rng).next_state
            pos = game.positions(s)
            assert len(set(pos)) == len(pos)
            assert all(0 <= x < game.width and 0 <= y < game.height for x, y in pos)
            assert not set(pos) & game.walls


def test_rewards_in_unit_interval():
    for name in ("nav", "door", "handover"):
        game = make_game(name)
        rng = random.Random(2)
        s = game.sample_initial_state(rng)
        for _ in range(1000):
            if s.terminal:
                s = game.sample_initial_state(rng)
            joint = tuple(rng.randrange(n) for n in game.action_set_sizes)
            s, r = game.step(s, joint, rng)
            assert 0.0 < r <= 1.0


def test_initial_states_valid_and_nonterminal():
    for name in ("nav", "door", "handover"):
        game = make_game(name)
        rng = random.Random(3)
        for _ in range(200):
            assert not game.sample_initial_state(rng).terminal


def test_grid_xi_below_cell_is_exact_equality():
    game = make_game("nav")
    rng = random.Random(4)
    states = [game.sample_initial_state(rng) for _ in range(50)]
    for a in states:
        for b in states:
            assert states_equal(a, b, game.xi) == (a.features == b.features)


def test_door_geometry():
    game = DoorPassing(action_noise=0.0, random_targets=False)
    assert (3, 2) not in game.walls
    assert {(3, y) for y in (0, 1, 3, 4)} == set(game.walls)


def test_door_goal_reward_is_one():
    game = DoorPassing(action_noise=0.0, random_targets=False)
    # targets (6,2) and (0,2): clearance 3 each, spacing 6
    s = game.make_state(game.targets)
    assert s.terminal
    assert game.reward(s) == pytest.approx(1.0)


def test_door_adjacent_robots_spacing_term():
    game = DoorPassing(action_noise=0.0, random_targets=False)
    pos = ((0, 0), (1, 0))
    w1, w2, w3 = game.weights
    dist = sum(abs(p[0] - t[0]) + abs(p[1] - t[1]) for p, t in zip(pos, game.targets))
    clear = (min(1, game.clearance(pos[0]) / 2) + min(1, game.clearance(pos[1]) / 2)) / 2
    expected = w1 / (1 + dist) + w2 * clear + w3 / 3
    assert game.reward_of(pos, game.targets) == pytest.approx(expected)


def test_door_clearance_term_below_saturation_next_to_wall():
    game = DoorPassing(action_noise=0.0, random_targets=False)
    assert game.clearance((2, 0)) == 1
    far = game.reward_of(((0, 0), (6, 4)), game.targets)
    near = game.reward_of(((2, 0), (6, 4)), game.targets)
    # moving toward the wall shortens the target distance too; compare clearance parts only
    assert min(1, game.clearance((2, 0)) / game.clearance_sat) < 1
    assert near != far


def test_door_rooms():
    game = make_game("door")
    rng = random.Random(5)
    for _ in range(100):
        s = game.sample_initial_state(rng)
        (p0, p1), (t0, t1) = game.positions(s), game.state_targets(s)
        assert p0[0] < 3 < t0[0] and t1[0] < 3 < p1[0]


def handover():
    return Handover(action_noise=0.0)


def test_handover_goal():
    game = handover()
    # bases 1 m apart (20 units); arm offsets are world-frame, so the arms meet at x = 0
    s = game.make_state((-10, 0, 10, 0, 10, 0, 0, -10, 0, 0))
    assert s.features[:2] == (1.0, 0.0)
    assert s.terminal and game.reward(s) == pytest.approx(1.0)


def test_handover_reward_instance():
    game = handover()
    # |rel_base| = 2.0 m, |rel_ee| = 1.0 m -> 0.5/2 + 0.5/2
    s = game.make_state((-20, 0, 20, 0, 10, 0, 0, -10, 0, 0))
    assert math.hypot(*s.features[:2]) == pytest.approx(2.0)
    assert math.sqrt(sum(f * f for f in s.features[2:])) == pytest.approx(1.0)
    assert game.reward(s) == pytest.approx(0.5)


def test_handover_arm_clamped_at_reach():
    game = handover()
    aux = (-10, 0, 10, 0, 10, 0, 10, 0, 0, 0)  # robot 0 arm already at the top
    s = game.make_state(aux)
    nxt = game.transition(s, (0, 0)).next_state  # both arm-up
    assert nxt.aux[6] == game.reach
    assert nxt.aux[9] == 1
    assert all(abs(v) <= game.reach for v in nxt.aux[4:])


def test_handover_step_sizes():
    game = handover()
    s = game.make_state((-10, 0, 10, 0, 0, 0, 0, 0, 0, 0))
    base = game.transition(s, (7, 0)).next_state  # robot 0 base-backward
    assert base.features[0] - s.features[0] == pytest.approx(0.1)
    arm = game.transition(s, (2, 0)).next_state  # robot 0 arm-forward
    assert s.features[2] - arm.features[2] == pytest.approx(0.05)


def test_handover_bases_keep_separation():
    game = handover()
    s = game.make_state((-3, 0, 3, 0, 0, 0, 0, 0, 0, 0))
    nxt = game.transition(s, (6, 6)).next_state  # both drive forward
    assert nxt.aux[:4] == s.aux[:4]


def test_make_game_overrides_and_errors():
    assert make_game("nav", action_noise=0.0).action_noise == 0.0
    with pytest.raises(ValueError):
        make_game("maze")


def test_render_shows_robots_and_targets():
    game = nav()
    text = game.render(game.make_state(((0, 0), (1, 1), (2, 2))))
    assert text.count("A") == 1 and text.count("a") == 1 and "#" not in text
    assert "#" in DoorPassing().render(DoorPassing().sample_initial_state(random.Random(0)))
