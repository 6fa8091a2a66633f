"""Policy-gradient reinforcement learning for average-reward MDPs whose
stationary distributions have product form.

The score-aware gradient estimator combines the covariance between sufficient
statistics and rewards with the policy score, avoiding value-function
estimation entirely.  The package ships three environments (admission control
in a single-server queue, static load balancing, Glauber spin dynamics), the
epoch-structured optimizer, exact evaluators used as test oracles, and a
config-driven experiment harness with a CLI.
"""

from .environments import ENVIRONMENTS
from .environments.ising import IsingEnv, IsingParams, IsingState
from .environments.load_balancing import LBParams, LoadBalancingEnv
from .environments.mm1 import MM1Env, MM1Params
from .errors import (
    BuzenOverflowError,
    ConfigurationError,
    ConvergenceError,
    InvalidBatchError,
    InvalidStateError,
    StabilityError,
)
from .estimators import (
    Batch,
    CriticState,
    GradientEstimate,
    MemoryState,
    Transition,
    actor_critic_gradient,
    sage_gradient,
    sage_gradient_memory,
)
from .exact import (
    BuzenArray,
    StationaryDistribution,
    brute_force_stationary,
    buzen_normalizing_constants,
    finite_difference_gradient,
    ising_exact_objective,
    lb_exact_objective,
    lb_optimal_objective,
    mm1_brute_force_objective,
    mm1_exact_objective,
    verify_score_identity,
)
from .expfamily import ExpFamilyDescriptor, stationary_score
from .harness import ExperimentConfig, ResultRow, eval_exact, load_config, run_experiment
from .optimizer import (
    ActorCriticEstimator,
    EpochRecord,
    MemorySageEstimator,
    RegularizerConfig,
    RunRecord,
    SageEstimator,
    ScheduleConfig,
    kl_regularizer_gradient,
    run_policy_gradient,
    schedule_step_and_batch,
)
from .rng import UniformStream

__version__ = "0.1.0"

__all__ = [
    "ENVIRONMENTS",
    "ActorCriticEstimator",
    "Batch",
    "BuzenArray",
    "BuzenOverflowError",
    "ConfigurationError",
    "ConvergenceError",
    "CriticState",
    "EpochRecord",
    "ExperimentConfig",
    "ExpFamilyDescriptor",
    "GradientEstimate",
    "InvalidBatchError",
    "InvalidStateError",
    "IsingEnv",
    "IsingParams",
    "IsingState",
    "LBParams",
    "LoadBalancingEnv",
    "MemorySageEstimator",
    "MemoryState",
    "MM1Env",
    "MM1Params",
    "RegularizerConfig",
    "ResultRow",
    "RunRecord",
    "SageEstimator",
    "ScheduleConfig",
    "StabilityError",
    "StationaryDistribution",
    "Transition",
    "UniformStream",
    "actor_critic_gradient",
    "brute_force_stationary",
    "buzen_normalizing_constants",
    "eval_exact",
    "finite_difference_gradient",
    "ising_exact_objective",
    "kl_regularizer_gradient",
    "lb_exact_objective",
    "lb_optimal_objective",
    "load_config",
    "mm1_brute_force_objective",
    "mm1_exact_objective",
    "run_experiment",
    "run_policy_gradient",
    "sage_gradient",
    "sage_gradient_memory",
    "schedule_step_and_batch",
    "stationary_score",
    "verify_score_identity",
]
