"""Q-value gated Monte-Carlo tree search for cooperative multi-agent planning."""
from .game import ContractViolation, Game, GameState, StepOutcome, run_episode, states_equal
from .gmm import MixtureModel, Prediction, fit_em, kmeans_init, predict, select_k
from .qfunction import AggregatedDataset, FitConfig, QApproximator, Sample, aggregate, q_target, refit
from .search import SearchConfig, qcp_search, random_uct_search, td_search, vanilla_uct_search
from .driver import TrainConfig, evaluate_policy, normalize_rewards, train
from .envs import make_game

__version__ = "0.1.0"
