"""Epoch-structured stochastic gradient ascent on the average reward.

One run is a single trajectory: epoch m samples a batch under the current
parameter from the last state of the previous epoch (no restarts), feeds it to
the chosen gradient estimator, and applies theta <- theta + alpha_m (H_m + G_b)
where G_b is the optional pull toward a reference policy.  Step and batch
schedules follow alpha_m = alpha/(m+1)^sigma, batch_m = ell * m^(sigma/2+kappa).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidBatchError
from .estimators import (
    Batch,
    CriticState,
    MemoryState,
    actor_critic_gradient,
    sage_gradient,
    sage_gradient_memory,
    seq_sum,
)

__all__ = [
    "ScheduleConfig",
    "RegularizerConfig",
    "EpochRecord",
    "RunRecord",
    "schedule_step_and_batch",
    "kl_regularizer_gradient",
    "SageEstimator",
    "MemorySageEstimator",
    "ActorCriticEstimator",
    "run_policy_gradient",
]


@dataclass(frozen=True)
class ScheduleConfig:
    """Step and batch schedule parameters.

    The convergence regime is sigma in (2/3, 1) with sigma + kappa > 1;
    constant schedules (sigma = 0, kappa = 0) are accepted with a warning
    since they match the reference experiments.
    """

    alpha: float = 0.1
    sigma: float = 0.0
    ell: float = 100.0
    kappa: float = 0.0
    min_batch: int = 2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        if not 0.0 <= self.sigma < 1.0:
            raise ConfigurationError("sigma must lie in [0, 1)")
        if not self.ell >= 1:
            raise ConfigurationError("ell must be at least 1")
        if not self.kappa >= 0:
            raise ConfigurationError("kappa must be nonnegative")
        if not (isinstance(self.min_batch, int) and self.min_batch >= 2):
            raise ConfigurationError("min_batch must be an integer >= 2")
        if not (2.0 / 3.0 < self.sigma < 1.0) or self.sigma + self.kappa <= 1.0:
            warnings.warn(
                "schedule outside the guaranteed-convergence regime "
                "(sigma in (2/3, 1) and sigma + kappa > 1)",
                stacklevel=2,
            )


def schedule_step_and_batch(m: int, cfg: ScheduleConfig) -> Tuple[float, int]:
    """(step size, batch length) for epoch m >= 0.

    step = alpha / (m+1)^sigma; batch = max(min_batch,
    floor(ell * max(m,1)^(sigma/2 + kappa))).  The max(m, 1) substitution
    keeps epoch 0 usable when kappa > 0 would give a zero-length batch.
    """
    step = cfg.alpha / (m + 1) ** cfg.sigma
    batch = max(cfg.min_batch, math.floor(cfg.ell * max(m, 1) ** (cfg.sigma / 2.0 + cfg.kappa)))
    return step, batch


@dataclass(frozen=True)
class RegularizerConfig:
    """Pull strength b toward a reference policy, weighted across blocks.

    ref_policy has one probability row per block; zeta weights the blocks and
    must be strictly positive (None means uniform).
    """

    b: float
    ref_policy: np.ndarray
    zeta: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.b < 0:
            raise ConfigurationError("regularization weight b must be nonnegative")
        ref = np.asarray(self.ref_policy, dtype=float)
        if ref.ndim != 2:
            raise ConfigurationError("ref_policy must be a (blocks, actions) matrix")
        if ref.min() < 0 or np.max(np.abs(ref.sum(axis=1) - 1.0)) > 1e-9:
            raise ConfigurationError("ref_policy rows must be probability vectors")
        object.__setattr__(self, "ref_policy", ref)
        zeta = self.zeta
        if zeta is None:
            zeta = np.full(ref.shape[0], 1.0 / ref.shape[0])
        else:
            zeta = np.asarray(zeta, dtype=float)
            if zeta.shape != (ref.shape[0],):
                raise ConfigurationError("zeta must have one weight per block")
            if zeta.min() <= 0:
                raise ConfigurationError("zeta must be strictly positive on every block")
            if abs(zeta.sum() - 1.0) > 1e-9:
                raise ConfigurationError("zeta must sum to 1")
        object.__setattr__(self, "zeta", zeta)


def kl_regularizer_gradient(theta: np.ndarray, reg: RegularizerConfig, policy) -> np.ndarray:
    """Ascent direction of -b R(theta), R the zeta-weighted KL divergence of
    the reference policy from pi(theta).

    Equals b sum_i zeta(i) sum_a ref(a|i) grad log pi(a|i,theta); for the
    block families here each component (i, a) reduces to
    b zeta(i) (ref(a|i) - pi(a|i,theta)).  Added to the gradient estimate so
    ascent targets the regularized objective.
    """
    th = np.asarray(theta, dtype=float)
    out = np.zeros_like(th)
    if reg.b == 0.0:
        return out
    if policy is None:
        raise ConfigurationError("regularization requires an environment with a block policy")
    if reg.ref_policy.shape != (policy.n_blocks, policy.n_actions):
        raise ConfigurationError(
            f"ref_policy must have shape ({policy.n_blocks}, {policy.n_actions})"
        )
    for i in range(policy.n_blocks):
        weight = reg.zeta[i]
        for a in range(policy.n_actions):
            p_ref = reg.ref_policy[i, a]
            if p_ref != 0.0:
                out += weight * p_ref * policy.score(i, a, th)
    return reg.b * out


@dataclass(frozen=True)
class EpochRecord:
    """Post-epoch snapshot: parameter and diagnostics after update m."""

    m: int
    steps: int
    theta: np.ndarray
    gradient: np.ndarray
    step_size: float
    batch_length: int
    mean_reward: float
    running_avg_reward: float
    stable: bool


@dataclass
class RunRecord:
    """Trajectory of one seeded run."""

    seed: int
    initial_theta: np.ndarray
    records: List[EpochRecord] = field(default_factory=list)
    final_theta: Optional[np.ndarray] = None
    final_state: Any = None
    total_steps: int = 0
    aborted: Optional[str] = None
    abort_epoch: Optional[int] = None
    batches: Optional[List[Batch]] = None


class SageEstimator:
    """Stateless per-batch score-aware estimator."""

    name = "sage"
    needs_transitions = False
    forced_batch_length: Optional[int] = None

    def start_run(self, env) -> None:
        pass

    def gradient(self, env, batch: Batch, theta: np.ndarray) -> np.ndarray:
        return sage_gradient(batch, theta, env.descriptor, env.policy_score).gradient


class MemorySageEstimator:
    """Score-aware estimator with geometric reuse of past batches."""

    name = "sage_memory"
    needs_transitions = False
    forced_batch_length: Optional[int] = None

    def __init__(self, nu: float):
        if not 0.0 <= nu <= 1.0:
            raise ConfigurationError("memory factor nu must lie in [0, 1]")
        self.nu = nu
        self.state: Optional[MemoryState] = None

    def start_run(self, env) -> None:
        self.state = MemoryState.fresh(self.nu, env.descriptor.dim_d, env.n_params)

    def gradient(self, env, batch: Batch, theta: np.ndarray) -> np.ndarray:
        if self.state is None:
            self.start_run(env)
        estimate, self.state = sage_gradient_memory(
            batch, theta, env.descriptor, env.policy_score, self.state
        )
        return estimate.gradient


class ActorCriticEstimator:
    """Tabular differential TD(0) critic; forces batches of length 1."""

    name = "actor_critic"
    needs_transitions = True
    forced_batch_length: Optional[int] = 1

    def __init__(self, alpha_v: float = 1e-2, alpha_rbar: float = 1e-2):
        if alpha_v <= 0 or alpha_rbar <= 0:
            raise ConfigurationError("critic step sizes must be positive")
        self.alpha_v = alpha_v
        self.alpha_rbar = alpha_rbar
        self.state: Optional[CriticState] = None

    def start_run(self, env) -> None:
        self.state = CriticState(alpha_v=self.alpha_v, alpha_rbar=self.alpha_rbar)

    def gradient(self, env, batch: Batch, theta: np.ndarray) -> np.ndarray:
        if self.state is None:
            self.start_run(env)
        if batch.transitions is None or len(batch.transitions) != 1:
            raise InvalidBatchError("the actor-critic estimator consumes single transitions")
        grad, self.state = actor_critic_gradient(
            batch.transitions[0], batch.final_state, theta, self.state, env.policy_score
        )
        return grad


def run_policy_gradient(
    env,
    estimator,
    cfg: ScheduleConfig,
    reg: Optional[RegularizerConfig],
    theta0: np.ndarray,
    s0,
    max_steps: int,
    rng_seed: int,
    record_epochs: Optional[Callable[[int], bool]] = None,
    keep_batches: bool = False,
) -> RunRecord:
    """Run one seeded trajectory until at least max_steps samples are consumed.

    Epochs never restart the chain; each batch begins at the previous batch's
    final state.  A non-finite parameter after an update aborts the run with
    the last finite parameter retained.  record_epochs selects which epochs
    get an EpochRecord (None records all); the final epoch and any abort
    epoch are always recorded.
    """
    from .rng import UniformStream

    theta = np.asarray(theta0, dtype=float).copy()
    if not np.all(np.isfinite(theta)):
        raise ConfigurationError("theta0 must be finite")
    if max_steps < 1:
        raise ConfigurationError("max_steps must be at least 1")
    stream = UniformStream(rng_seed)
    state = s0
    estimator.start_run(env)
    policy = env.block_policy() if reg is not None and reg.b > 0 else None

    record = RunRecord(seed=rng_seed, initial_theta=theta.copy())
    if keep_batches:
        record.batches = []
    cumulative_reward = 0.0
    t = 0
    m = 0
    while t < max_steps:
        step_size, batch_length = schedule_step_and_batch(m, cfg)
        if estimator.forced_batch_length is not None:
            batch_length = estimator.forced_batch_length
        batch = env.sample_batch(
            theta, state, batch_length, m, stream, with_transitions=estimator.needs_transitions
        )
        if keep_batches:
            record.batches.append(batch)
        aborted = None
        try:
            gradient = estimator.gradient(env, batch, theta)
        except InvalidBatchError:
            gradient = np.zeros_like(theta)
            aborted = "estimator"
        if aborted is None and reg is not None and reg.b > 0:
            gradient = gradient + kl_regularizer_gradient(theta, reg, policy)

        t += batch_length
        batch_total = float(seq_sum(batch.rewards))
        cumulative_reward += batch_total
        running_avg = cumulative_reward / t
        state = batch.final_state

        if aborted is None:
            candidate = theta + step_size * gradient
            if np.all(np.isfinite(candidate)):
                theta = candidate
            else:
                aborted = "divergence"

        last = t >= max_steps or aborted is not None
        if last or record_epochs is None or record_epochs(m):
            record.records.append(
                EpochRecord(
                    m=m,
                    steps=t,
                    theta=theta.copy(),
                    gradient=np.asarray(gradient, dtype=float).copy(),
                    step_size=step_size,
                    batch_length=batch_length,
                    mean_reward=batch_total / batch_length,
                    running_avg_reward=running_avg,
                    stable=bool(env.stability(theta)),
                )
            )
        if aborted is not None:
            record.aborted = aborted
            record.abort_epoch = m
            break
        m += 1

    record.final_theta = theta.copy()
    record.final_state = state
    record.total_steps = t
    return record
