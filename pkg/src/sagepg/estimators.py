"""Gradient estimators for the long-run average-reward objective.

All estimators consume transitions (S_t, A_t, R_{t+1}) gathered under a fixed
policy within one epoch.  The score-aware estimator exploits the
exponential-family form of the stationary distribution: with sufficient
statistics x and log-load Jacobian Dlogrho,

    H = Dlogrho(theta)^T Cbar + Ebar,

where Cbar is the sample covariance between x(S_t) and R_{t+1} (divisor N-1)
and Ebar is the batch mean of R_{t+1} grad log pi(A_t | S_t, theta).  The
memory variant keeps geometrically weighted running sums of the same
quantities, so it remains usable with batches of length 1.  The actor-critic
baseline is the standard tabular differential TD scheme with batch size 1.

All batch sums are strict left-to-right sequential accumulations (no pairwise
regrouping, no compensated summation) so that results are bit-reproducible and
the memory variant at nu=0 coincides with the plain estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidBatchError
from .expfamily import ExpFamilyDescriptor

__all__ = [
    "Transition",
    "Batch",
    "GradientEstimate",
    "MemoryState",
    "CriticState",
    "sage_gradient",
    "sage_gradient_memory",
    "actor_critic_gradient",
    "seq_sum",
]


def seq_sum(arr: np.ndarray) -> np.ndarray:
    """Left-to-right sequential sum along axis 0."""
    return np.add.accumulate(arr, axis=0)[-1]


@dataclass(frozen=True)
class Transition:
    """One sampled step: state S_t, action A_t, reward R_{t+1}."""

    state: Any
    action: int
    reward: float


@dataclass
class Batch:
    """Transitions of one epoch, sampled under a single policy parameter.

    ``start_state`` is the state carried over from the previous epoch (no
    restarts) and ``final_state`` the state after the last transition, which
    the next epoch starts from.  Environments may attach precomputed arrays:
    ``stats`` (N, d) holds x(S_t), ``scores`` (N, n) holds
    grad log pi(A_t | S_t, theta) at the sampling parameter, and ``rewards``
    (N,) the rewards.  ``transitions`` may be omitted (None) on hot paths when
    the arrays are present.
    """

    epoch: int
    transitions: Optional[List[Transition]]
    start_state: Any
    final_state: Any
    stats: Optional[np.ndarray] = None
    scores: Optional[np.ndarray] = None
    rewards: Optional[np.ndarray] = None

    def __len__(self) -> int:
        if self.rewards is not None:
            return len(self.rewards)
        return len(self.transitions)


@dataclass(frozen=True)
class GradientEstimate:
    """Gradient H plus the batch statistics it was assembled from."""

    gradient: np.ndarray   # length n
    mean_stats: np.ndarray  # Xbar, length d
    mean_reward: float      # Rbar
    covariance: np.ndarray  # Cbar, length d
    score_term: np.ndarray  # Ebar, length n


@dataclass
class MemoryState:
    """Running weighted sums of the memory estimator.

    nu is the memory factor in [0, 1]; n_acc and m_acc are the weighted sample
    counts (first and second order), and x_acc, r_acc, c_acc, e_acc the
    weighted sums of statistics, rewards, centered cross products, and
    reward-weighted scores.
    """

    nu: float
    n_acc: float
    m_acc: float
    x_acc: np.ndarray
    r_acc: float
    c_acc: np.ndarray
    e_acc: np.ndarray

    @classmethod
    def fresh(cls, nu: float, dim_d: int, dim_n: int) -> "MemoryState":
        if not 0.0 <= nu <= 1.0:
            raise InvalidBatchError(f"memory factor nu must be in [0, 1], got {nu}")
        return cls(
            nu=nu,
            n_acc=0.0,
            m_acc=0.0,
            x_acc=np.zeros(dim_d),
            r_acc=0.0,
            c_acc=np.zeros(dim_d),
            e_acc=np.zeros(dim_n),
        )


@dataclass
class CriticState:
    """Tabular differential critic: values map with zero default, average reward."""

    alpha_v: float
    alpha_rbar: float
    avg_reward: float = 0.0
    values: Dict[Any, float] = field(default_factory=dict)


def _batch_arrays(
    batch: Batch,
    theta: np.ndarray,
    descriptor: ExpFamilyDescriptor,
    score: Callable[[Any, int, np.ndarray], np.ndarray],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sufficient statistics, scores, and rewards of a batch as arrays."""
    if batch.stats is not None and batch.scores is not None and batch.rewards is not None:
        return batch.stats, batch.scores, batch.rewards
    if not batch.transitions:
        raise InvalidBatchError("batch has neither transitions nor precomputed arrays")
    xs = np.array([descriptor.sufficient_statistic(tr.state) for tr in batch.transitions], dtype=float)
    scores = np.array([score(tr.state, tr.action, theta) for tr in batch.transitions], dtype=float)
    rewards = np.array([tr.reward for tr in batch.transitions], dtype=float)
    return xs, scores, rewards


def sage_gradient(
    batch: Batch,
    theta: np.ndarray,
    descriptor: ExpFamilyDescriptor,
    score: Callable[[Any, int, np.ndarray], np.ndarray],
) -> GradientEstimate:
    """Score-aware gradient estimate from one batch of N >= 2 transitions.

    Xbar and Rbar are batch means, Cbar the sample covariance between x(S_t)
    and R_{t+1} with divisor N-1, Ebar the mean of R_{t+1} times the policy
    score, and the gradient Dlogrho(theta)^T Cbar + Ebar.
    """
    xs, scores, rewards = _batch_arrays(batch, theta, descriptor, score)
    n = len(rewards)
    if n < 2:
        raise InvalidBatchError(f"score-aware estimator needs a batch of length >= 2, got {n}")
    xbar = seq_sum(xs) / n
    rbar = seq_sum(rewards) / n
    cbar = seq_sum((xs - xbar) * (rewards - rbar)[:, None]) / (n - 1)
    ebar = seq_sum(rewards[:, None] * scores) / n
    gradient = np.asarray(descriptor.log_load_jacobian(theta), dtype=float).T @ cbar + ebar
    return GradientEstimate(gradient, xbar, float(rbar), cbar, ebar)


def sage_gradient_memory(
    batch: Batch,
    theta: np.ndarray,
    descriptor: ExpFamilyDescriptor,
    score: Callable[[Any, int, np.ndarray], np.ndarray],
    mem: MemoryState,
) -> Tuple[GradientEstimate, MemoryState]:
    """Memory-factor variant: geometrically weighted running sums over epochs.

    Updates, in order: N <- nu N + L, M <- nu^2 M + L, then the weighted sums
    of statistics and rewards, then the centered cross products against the
    updated global means, then the reward-weighted scores.  The covariance sum
    is rescaled by N/(N^2 - M) when N^2 > M (else by 1/N).  Accepts batches of
    length 1; with nu = 0 and length >= 2 it reproduces sage_gradient.
    Mutates and returns ``mem``.
    """
    xs, scores, rewards = _batch_arrays(batch, theta, descriptor, score)
    length = len(rewards)
    if length < 1:
        raise InvalidBatchError("memory estimator needs a nonempty batch")
    nu = mem.nu
    mem.n_acc = nu * mem.n_acc + length
    mem.m_acc = nu * nu * mem.m_acc + length
    mem.x_acc = nu * mem.x_acc + seq_sum(xs)
    mem.r_acc = nu * mem.r_acc + float(seq_sum(rewards))
    x_mean = mem.x_acc / mem.n_acc
    r_mean = mem.r_acc / mem.n_acc
    mem.c_acc = nu * mem.c_acc + seq_sum((xs - x_mean) * (rewards - r_mean)[:, None])
    mem.e_acc = nu * mem.e_acc + seq_sum(rewards[:, None] * scores)
    n_sq = mem.n_acc * mem.n_acc
    if n_sq > mem.m_acc:
        covariance = mem.c_acc * (mem.n_acc / (n_sq - mem.m_acc))
    else:
        covariance = mem.c_acc / mem.n_acc
    score_term = mem.e_acc / mem.n_acc
    gradient = np.asarray(descriptor.log_load_jacobian(theta), dtype=float).T @ covariance + score_term
    return GradientEstimate(gradient, x_mean, float(r_mean), covariance, score_term), mem


def actor_critic_gradient(
    transition: Transition,
    next_state: Any,
    theta: np.ndarray,
    critic: CriticState,
    score: Callable[[Any, int, np.ndarray], np.ndarray],
) -> Tuple[np.ndarray, CriticState]:
    """One differential TD step: returns delta * grad log pi and the updated critic.

    delta = R - Rbar + V[S'] - V[S]; then Rbar += alpha_rbar * delta and
    V[S] += alpha_v * delta.  Unseen states read as V = 0 (lazy zero padding).
    Mutates and returns ``critic``.
    """
    v_s = critic.values.get(transition.state, 0.0)
    v_next = critic.values.get(next_state, 0.0)
    delta = transition.reward - critic.avg_reward + v_next - v_s
    critic.avg_reward += critic.alpha_rbar * delta
    critic.values[transition.state] = v_s + critic.alpha_v * delta
    return delta * score(transition.state, transition.action, theta), critic
