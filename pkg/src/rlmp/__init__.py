"""Reinforcement-learning driven selection of adaptive filter exponents."""

__version__ = "0.1.0"

from .exceptions import (EmptyTrajectoryError, EnumerationBudgetError,
                         FilterDivergenceError, SingularSystemError)
from .features import (RandomFourierFeatures, encode, encode_batch, featurize,
                       feature_matrix, gaussian_kernel, sample_rff)
from .qfunc import (BellmanInstance, apply_bellman_greedy,
                    apply_bellman_policy, hyperplane_loss, hyperplane_normal,
                    lipschitz_constant, ridge_dual_basis, sgd_step)
from .variational import (VariationalInstance, bellman_residual_map,
                          bellman_residual_reconstructed, lspe_map,
                          lspe_map_reconstructed, lstd_fixed_point,
                          ridge_bellman_map, tabular_bellman)
from .environment import (FilterState, LinearSystem, alpha_stable, lmp_step,
                          one_step_loss, sparse_outlier_noise, successor_state)
from .filters import (EpisodeRecord, LmpFilter, MixedNormLmp,
                      RandomExponentLmp, SegmentSchedule)
from .agent import (AgentConfig, PolicyIterationLmp, ReplayBuffer,
                    evaluation_step, greedy_action, replay_step, run_episode)
from .bench import (BenchResult, RunConfig, emit_outputs, make_config,
                    make_stream, nmsd, parse_config_file, run_scenario)

__all__ = [
    "__version__",
    "EmptyTrajectoryError", "EnumerationBudgetError", "FilterDivergenceError",
    "SingularSystemError",
    "RandomFourierFeatures", "encode", "encode_batch", "featurize",
    "feature_matrix", "gaussian_kernel", "sample_rff",
    "BellmanInstance", "apply_bellman_greedy", "apply_bellman_policy",
    "hyperplane_loss", "hyperplane_normal", "lipschitz_constant",
    "ridge_dual_basis", "sgd_step",
    "VariationalInstance", "bellman_residual_map",
    "bellman_residual_reconstructed", "lspe_map", "lspe_map_reconstructed",
    "lstd_fixed_point", "ridge_bellman_map", "tabular_bellman",
    "FilterState", "LinearSystem", "alpha_stable", "lmp_step",
    "one_step_loss", "sparse_outlier_noise", "successor_state",
    "EpisodeRecord", "LmpFilter", "MixedNormLmp", "RandomExponentLmp",
    "SegmentSchedule",
    "AgentConfig", "PolicyIterationLmp", "ReplayBuffer", "evaluation_step",
    "greedy_action", "replay_step", "run_episode",
    "BenchResult", "RunConfig", "emit_outputs", "make_config", "make_stream",
    "nmsd", "parse_config_file", "run_scenario",
]
