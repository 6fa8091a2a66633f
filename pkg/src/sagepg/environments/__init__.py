"""The three benchmark environments.

Each environment exposes the same surface to the optimizer and harness:

* ``sample_batch(theta, start_state, length, epoch, stream)`` simulates one
  epoch under the fixed policy parameter, drawing all randomness from the
  run's uniform stream in the documented order (policy draw, then environment
  draws, per transition), and returns a Batch carrying precomputed statistic,
  score, and reward arrays.
* ``descriptor`` is the exponential-family description of the stationary law.
* ``policy_score``, ``action_probabilities``, ``initial_state``,
  ``exact_objective``, ``stability``, and ``block_policy`` provide the
  per-state policy family, defaults, and exact-evaluator hooks.

Environment instances are exclusively owned by one run; descriptors are
immutable and shareable.
"""

from .ising import IsingEnv, IsingParams, IsingState
from .load_balancing import LBParams, LoadBalancingEnv
from .mm1 import MM1Env, MM1Params

__all__ = [
    "MM1Env",
    "MM1Params",
    "LoadBalancingEnv",
    "LBParams",
    "IsingEnv",
    "IsingParams",
    "IsingState",
    "ENVIRONMENTS",
]

ENVIRONMENTS = {
    "mm1": MM1Env,
    "load_balancing": LoadBalancingEnv,
    "ising": IsingEnv,
}
