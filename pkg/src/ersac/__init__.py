"""Exploration RL engine: exact tabular K-learning saddle-point oracle,
risk-seeking actor-critic with a learned temperature, ensemble epistemic
uncertainty, prioritized noisy replay, and a DeepSea experiment harness.
"""
from . import kernels
from .agent import ErsacAgent, ErsacConfig, run_training, td_lambda_k_hat
from .harness import RunConfig, SweepSpec, detect_solved, fit_scaling, run_one, run_sweep
from .klearning import (
    BeliefMDP,
    FiniteMixturePosterior,
    KTable,
    RegretDecomposition,
    boltzmann_policy,
    certainty_equivalent,
    check_assumption1,
    cumulative_optimism_audit,
    dist,
    k_backup_pi,
    k_backup_star,
    optimism,
    regret_decomposition,
    risk_seeking_reward,
    saddle_objective,
    solve_tau,
)
from .mdp import (
    DeepSeaSpec,
    TabularMDP,
    Trajectory,
    build_deep_sea,
    exact_values_pi,
    exact_values_star,
    sample_episode,
)
from .nets import GradientBundle, NetConfig, PolicyValueNet, grad_check, optimizer_step
from .replay import ReplayBuffer, ReplayConfig, VTraceConfig, mixed_step, vtrace_k_targets
from .uncertainty import CountUncertainty, RewardEnsemble, VisitCounts, count_sigma2

__version__ = "0.1.0"
