"""Discrete-event simulator and time-complexity toolkit for asynchronous
decentralized SGD over weighted directed networks."""

from .engine import Engine, LivelockError, SimulationError
from .equilibrium import (EquilibriumResult, Prediction, ProblemConstants, equilibrium_time,
                          select_pivot)
from .lowerbound import LevelGameParams, check_lemma_f1, empirical_quantile, sample_level_time
from .methods import (MethodConfig, RunTrace, accelerated_update, run_amelie, run_fragile,
                      run_method, run_minibatch)
from .problems import gaussian_oracle, hetero_quadratic, prog_bernoulli_oracle, quadratic_chain
from .topology import NetworkSpec, SpanningTree, all_pairs_shortest, shortest_path_tree

__version__ = "0.1.0"

__all__ = [
    "Engine", "LivelockError", "SimulationError", "EquilibriumResult", "Prediction",
    "ProblemConstants", "equilibrium_time", "select_pivot", "LevelGameParams", "check_lemma_f1",
    "empirical_quantile", "sample_level_time", "MethodConfig", "RunTrace", "accelerated_update",
    "run_amelie", "run_fragile", "run_method", "run_minibatch", "gaussian_oracle",
    "hetero_quadratic", "prog_bernoulli_oracle", "quadratic_chain", "NetworkSpec",
    "SpanningTree", "all_pairs_shortest", "shortest_path_tree",
]
