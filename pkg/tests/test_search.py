import math
import random

import pytest

from qcp.envs import CooperativeNavigation, make_game
from qcp.game import GameState
from qcp.qfunction import QApproximator
from qcp.search import (
    SearchConfig, SearchNode, admissible_actions, exploration_bonus, qcp_search,
    random_uct_search, rollout, select_action_ucb, td_search, vanilla_uct_search,
)

from conftest import ChainGame, TableQ
from oracles import admissibility_probability

S0 = GameState((0.0,))


def test_admissible_deterministic_without_variance():
    q = TableQ([1.0, 0.6, 0.2])
    assert admissible_actions(q, S0, 3, 0.5, 0.0, random.Random(0)) == (0, 1)


def test_admissible_empty_approximator_admits_all():
    for lam in (0.0, 0.5, 1.0):
        assert admissible_actions(QApproximator(), S0, 5, lam, 0.0, random.Random(0)) == tuple(range(5))


def test_admissible_forces_argmax():
    # negative values: lam * max exceeds max, nothing passes with zero slack
    q = TableQ([-1.0, -2.0])
    assert admissible_actions(q, S0, 2, 0.5, 0.0, random.Random(0)) == (0,)


def test_admissible_single_action():
    assert admissible_actions(TableQ([-5.0]), S0, 1, 0.9, 0.0, random.Random(0)) == (0,)


def test_admissible_normal_tail_frequency():
    q = TableQ([1.0, 0.4], [0.0, 0.04])
    rng = random.Random(7)
    hits = sum(1 in admissible_actions(q, S0, 2, 0.5, 0.0, rng) for _ in range(10000))
    expected = admissibility_probability(0.4, 1.0, 0.04, 0.5)
    assert expected == pytest.approx(0.617, abs=5e-4)
    assert abs(hits / 10000 - expected) < 0.02


def test_admissible_random_admission_rate():
    q = TableQ([1.0, 0.0])
    rng = random.Random(8)
    hits = sum(1 in admissible_actions(q, S0, 2, 0.5, 0.3, rng) for _ in range(10000))
    assert abs(hits / 10000 - 0.3) < 0.02


def test_variance_mode_uses_variance_as_slack():
    q = TableQ([1.0, 0.45], [0.0, 0.06])
    assert admissible_actions(q, S0, 2, 0.5, 0.0, random.Random(0), "variance") == (0, 1)
    q = TableQ([1.0, 0.43], [0.0, 0.06])
    assert admissible_actions(q, S0, 2, 0.5, 0.0, random.Random(0), "variance") == (0,)


def test_exploration_bonus_value():
    e = exploration_bonus(5, 1, 0.7)
    assert abs(e - 0.7 * math.sqrt(math.log(5))) < 1e-12
    assert e == pytest.approx(0.8880, abs=1e-4)
    assert exploration_bonus(5, 0, 0.7) == math.inf


def _node(counts):
    node = SearchNode(S0, 0, len(counts))
    node.counts = list(counts)
    return node


def test_ucb_tie_goes_to_lowest_id():
    assert select_action_ucb(TableQ([0.0] * 5), _node([1] * 5), range(5), 0.7) == 0


def test_ucb_unvisited_first():
    q = TableQ([10.0, 0.0, 0.0, 0.0])
    assert select_action_ucb(q, _node([3, 3, 0, 0]), range(4), 0.7) == 2
    # restricted to admissible actions
    assert select_action_ucb(q, _node([3, 3, 0, 0]), (0, 1), 0.7) == 0


def test_ucb_without_exploration_is_argmax():
    q = TableQ([0.1, 0.5, 0.3])
    assert select_action_ucb(q, _node([9, 1, 1]), range(3), 0.0) == 1


def test_ucb_normaliser_counts_admissible_only():
    q = TableQ([0.0, 0.0, 0.0])
    # action 2 is outside the admissible set; its many visits do not enter ln(sum)
    node = _node([1, 4, 1000])
    got = select_action_ucb(q, node, (0, 1), 1.0)
    assert got == 0


def test_ucb_empty_admissible():
    with pytest.raises(ValueError):
        select_action_ucb(TableQ([0.0]), _node([0]), (), 0.7)


def test_rollout_discounted_sum():
    game = ChainGame(length=100)
    q = TableQ([0.0, 1.0])
    ret = rollout(game, [q], GameState((0.0,)), 0.0, 10, random.Random(0), gamma=0.8)
    assert ret == pytest.approx((1 - 0.8**10) / (1 - 0.8))


def test_rollout_stops_at_terminal():
    game = ChainGame(length=3)
    ret = rollout(game, [TableQ([0.0, 1.0])], GameState((0.0,)), 0.0, 25, random.Random(0), 0.5)
    assert ret == pytest.approx(1.0 + 0.5)
    assert rollout(game, [TableQ([0.0, 1.0])], GameState((2.0,), True), 0.0, 5,
                   random.Random(0)) == 0.0
    with pytest.raises(ValueError):
        rollout(game, [TableQ([0.0, 1.0])], GameState((0.0,)), 0.0, 0, random.Random(0))


def _goal_grid():
    return CooperativeNavigation(width=2, height=1, targets=((1, 0),), action_noise=0.0,
                                 random_targets=False)


def test_cold_start_sample_target():
    # two cells, reward 1 only for entering the goal cell
    game = ChainGame(length=2, goal_only=True)
    start = GameState((0.0,))
    cfg = SearchConfig(horizon=1, budget=16)
    res = qcp_search(game, 0, [QApproximator()], start, cfg, random.Random(0))
    assert len(res.samples) == 1
    s = res.samples[0]
    assert s.next_state.terminal and s.reward == 1.0
    assert s.q_target == 0.2


def test_single_action_game_all_uct_variants_agree():
    game = ChainGame(length=50, n_actions=1)
    cfg = SearchConfig(budget=20)
    out = []
    for search in (qcp_search, vanilla_uct_search, random_uct_search):
        res = search(game, 0, [QApproximator()], GameState((0.0,)), cfg, random.Random(5))
        out.append(([(s.state, s.action_id, s.q_target) for s in res.samples],
                    res.explored_states, res.sim_steps))
    assert out[0] == out[1] == out[2]


def test_zero_reward_td_targets_are_zero():
    game = ChainGame(length=20, reward_value=0.0)
    res = td_search(game, 0, [QApproximator()], GameState((0.0,)), SearchConfig(budget=10),
                    random.Random(0))
    assert res.samples and all(s.q_target == 0.0 for s in res.samples)


def test_samples_at_most_horizon_and_valid():
    game = make_game("nav")
    state = game.sample_initial_state(random.Random(3))
    qh = [QApproximator()] * 3
    for search in (qcp_search, vanilla_uct_search, random_uct_search, td_search):
        res = search(game, 1, qh, state, SearchConfig(budget=16), random.Random(1))
        assert 1 <= len(res.samples) <= 4
        assert res.samples[0].state == state
        assert all(0 <= s.action_id < 5 for s in res.samples)


def test_search_is_reproducible():
    game = make_game("door")
    state = game.sample_initial_state(random.Random(2))
    qh = [QApproximator()] * 2
    a = qcp_search(game, 0, qh, state, SearchConfig(budget=32), random.Random(9))
    b = qcp_search(game, 0, qh, state, SearchConfig(budget=32), random.Random(9))
    assert a.samples == b.samples and a.explored_states == b.explored_states


def test_random_uct_explores_least():
    game = make_game("nav")
    rng = random.Random(4)
    qh = [QApproximator()] * 3
    cfg = SearchConfig(budget=64)
    totals = {"vanilla": 0, "random": 0}
    for _ in range(5):
        state = game.sample_initial_state(rng)
        totals["vanilla"] += len(vanilla_uct_search(game, 0, qh, state, cfg, random.Random(1)).explored_states)
        totals["random"] += len(random_uct_search(game, 0, qh, state, cfg, random.Random(1)).explored_states)
    assert totals["random"] < totals["vanilla"]


def test_qcp_prunes_with_informative_values():
    # a state-independent Q that strongly prefers action 1 keeps the tree narrow
    game = make_game("nav")
    state = game.sample_initial_state(random.Random(6))
    picky = TableQ([0.1, 1.0, 0.1, 0.1, 0.1])
    qh = [picky, QApproximator(), QApproximator()]
    cfg = SearchConfig(budget=64, eps_admissible=0.0)
    narrow = qcp_search(game, 0, qh, state, cfg, random.Random(0))
    wide = vanilla_uct_search(game, 0, qh, state, cfg, random.Random(0))
    assert len(narrow.explored_states) < len(wide.explored_states)


def test_terminal_root_rejected():
    game = _goal_grid()
    from qcp.game import ContractViolation
    with pytest.raises(ContractViolation):
        qcp_search(game, 0, [QApproximator()], game.make_state(((1, 0),)), SearchConfig(),
                   random.Random(0))


def test_trace_lines(tmp_path):
    import io

    game = make_game("nav")
    state = game.sample_initial_state(random.Random(0))
    buf = io.StringIO()
    qcp_search(game, 0, [QApproximator()] * 3, state, SearchConfig(budget=8), random.Random(0), buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 8
    assert all(len(line.split("\t")) == 6 for line in lines)


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(horizon=0)
    with pytest.raises(ValueError):
        SearchConfig(lam=1.5)
    with pytest.raises(ValueError):
        SearchConfig(delta_mode="other")
