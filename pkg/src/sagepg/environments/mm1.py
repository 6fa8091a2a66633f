"""Admission control for a single exponential-server queue.

The controlled chain is the queue length seen by arriving jobs (the chain
embedded at arrival epochs; by PASTA its stationary law equals the
time-stationary one).  On each arrival the controller admits with probability
sigmoid(theta[min(s, k)]) and collects gamma per admitted job; between
arrivals the queue pays a holding cost eta per job per time unit, accumulated
exactly as sum(level * sojourn) over the exponential race of departures within
the Exp(lambda) inter-arrival interval.

The embedded chain has a product-form stationary law with balance function
(lambda/mu)^s, sufficient statistics x_i(s) = 1{s >= i+1} for i < k and
x_k(s) = max(s - k, 0), and loads rho_i(theta) = pi(accept | block i).
Policies are stable exactly when pi(accept | k, theta) < mu/lambda.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from ..estimators import Batch, Transition
from ..expfamily import ExpFamilyDescriptor
from ..policies import BlockSigmoidPolicy, sigmoid, sigmoid_threshold_policy, sigmoid_threshold_score
from ..rng import UniformStream

__all__ = [
    "MM1Params",
    "MM1Env",
    "REJECT",
    "ACCEPT",
    "mm1_transition",
    "mm1_descriptor",
    "mm1_stability_check",
    "mm1_stationary_weights",
    "mm1_stationary_sample",
    "mm1_embedded_kernel",
]

REJECT = 0
ACCEPT = 1


@dataclass(frozen=True)
class MM1Params:
    """Arrival rate lam, service rate mu, admission reward gamma, holding cost
    rate eta, and policy threshold k (one logit per queue level up to k)."""

    lam: float
    mu: float
    gamma: float
    eta: float
    k: int

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise ConfigurationError("lambda and mu must be positive")
        if self.k < 0:
            raise ConfigurationError("threshold k must be nonnegative")


def mm1_transition(queue: int, action: int, params: MM1Params, stream: UniformStream) -> Tuple[float, int]:
    """Simulate one inter-arrival interval; returns (reward, next queue length).

    The admitted job joins immediately; departures then race the next arrival,
    each segment an independent exponential.  The holding integral is exact.
    """
    if queue < 0:
        raise ConfigurationError("queue length must be nonnegative")
    q = queue + 1 if action == ACCEPT else queue
    remaining = stream.exponential(params.lam)
    held = 0.0
    while q > 0:
        d = stream.exponential(params.mu)
        if d >= remaining:
            break
        held += q * d
        remaining -= d
        q -= 1
    held += q * remaining
    reward = (params.gamma if action == ACCEPT else 0.0) - params.eta * held
    return reward, q


def mm1_descriptor(params: MM1Params) -> ExpFamilyDescriptor:
    """Exponential-family descriptor of the embedded chain (d = n = k+1)."""
    k = params.k
    log_ratio = float(np.log(params.lam / params.mu))

    def suff(s: int) -> np.ndarray:
        x = np.empty(k + 1)
        for i in range(k):
            x[i] = 1.0 if s >= i + 1 else 0.0
        x[k] = float(max(s - k, 0))
        return x

    def jacobian(theta: np.ndarray) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        return np.diag([1.0 - sigmoid(float(th[i])) for i in range(k + 1)])

    def load(theta: np.ndarray) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        return np.array([sigmoid(float(th[i])) for i in range(k + 1)])

    return ExpFamilyDescriptor(
        dim_d=k + 1,
        sufficient_statistic=suff,
        log_load_jacobian=jacobian,
        block=lambda s: min(s, k),
        balance_log=lambda s: s * log_ratio,
        load=load,
    )


def mm1_stability_check(theta: np.ndarray, params: MM1Params) -> bool:
    """True iff pi(accept | k, theta) < mu/lambda (positive recurrence)."""
    return sigmoid_threshold_policy(params.k, params.k, theta) < params.mu / params.lam


def mm1_stationary_weights(theta: np.ndarray, params: MM1Params, tail_mass: float = 1e-12) -> np.ndarray:
    """Unnormalized product-form weights w_0..w_T, truncated where the exact
    geometric tail beyond T is below tail_mass relative to the total."""
    th = np.asarray(theta, dtype=float)
    k = params.k
    ratio = params.lam / params.mu
    rho = [sigmoid(float(th[min(i, k)])) for i in range(k + 1)]
    psi = ratio * rho[k]
    if psi >= 1.0:
        raise ConfigurationError("unstable policy: the stationary tail diverges")
    weights: List[float] = [1.0]
    s = 0
    while True:
        weights.append(weights[-1] * ratio * rho[min(s, k)])
        s += 1
        if s >= k + 1:
            tail = weights[-1] * psi / (1.0 - psi)
            if tail < tail_mass * (sum(weights) + tail):
                break
        if s > 100000:
            raise ConfigurationError("stationary-weight truncation did not converge")
    return np.array(weights)


def mm1_stationary_sample(theta: np.ndarray, params: MM1Params, stream: UniformStream) -> int:
    """Draw a queue length from the (truncated) stationary law at theta."""
    w = mm1_stationary_weights(theta, params)
    cdf = np.cumsum(w / w.sum())
    return int(np.searchsorted(cdf, stream.uniform(), side="right"))


def mm1_embedded_kernel(theta: np.ndarray, params: MM1Params, truncation: int) -> Tuple[List[int], np.ndarray]:
    """Exact transition matrix of the embedded chain on {0, ..., truncation}.

    From queue s the arriving job is admitted with probability rho(s); the
    post-admission level q then loses j jobs before the next arrival with
    probability beta^j (1-beta) for j < q and beta^q for j = q, where
    beta = mu/(lambda+mu).  Truncation forces a reject at s = truncation,
    i.e. the kernel is that of the policy modified to always reject at the
    boundary.  Because the queue is a birth-death process, that modified
    chain's stationary law is *exactly* the product form restricted to
    {0, ..., truncation} — no boundary distortion, so stationary-probability
    and score comparisons against the product form are exact up to roundoff.
    """
    th = np.asarray(theta, dtype=float)
    k = params.k
    beta = params.mu / (params.lam + params.mu)
    states = list(range(truncation + 1))
    P = np.zeros((truncation + 1, truncation + 1))

    def departure_probs(q: int) -> np.ndarray:
        probs = np.empty(q + 1)
        p_geo = 1.0
        for j in range(q):
            probs[j] = p_geo * (1.0 - beta)
            p_geo *= beta
        probs[q] = p_geo
        return probs

    for s in states:
        accept = 0.0 if s == truncation else sigmoid(float(th[min(s, k)]))
        for admitted, weight in ((True, accept), (False, 1.0 - accept)):
            if weight == 0.0:
                continue
            q = s + 1 if admitted else s
            probs = departure_probs(q)
            for j, pj in enumerate(probs):
                P[s, q - j] += weight * pj
    return states, P


class MM1Env:
    """Admission-control environment around the embedded arrival chain."""

    name = "mm1"

    def __init__(self, params: MM1Params):
        self.params = params
        self.n_params = params.k + 1
        self.descriptor = mm1_descriptor(params)

    def initial_state(self) -> int:
        return 0

    def action_probabilities(self, state: int, theta: np.ndarray) -> np.ndarray:
        p = sigmoid_threshold_policy(state, self.params.k, theta)
        return np.array([1.0 - p, p])

    def policy_score(self, state: int, action: int, theta: np.ndarray) -> np.ndarray:
        return sigmoid_threshold_score(state, self.params.k, action == ACCEPT, theta)

    def transition(self, state: int, action: int, stream: UniformStream) -> Tuple[float, int]:
        return mm1_transition(state, action, self.params, stream)

    def sample_batch(
        self,
        theta: np.ndarray,
        start_state: int,
        length: int,
        epoch: int,
        stream: UniformStream,
        with_transitions: bool = False,
    ) -> Batch:
        params = self.params
        k = params.k
        accept_prob = [sigmoid(float(t)) for t in np.asarray(theta, dtype=float)]
        states = np.empty(length, dtype=np.int64)
        actions = np.empty(length, dtype=np.int64)
        rewards = np.empty(length)
        s = start_state
        uniform = stream.uniform
        for t in range(length):
            block = s if s < k else k
            a = 1 if uniform() < accept_prob[block] else 0
            r, s_next = mm1_transition(s, a, params, stream)
            states[t] = s
            actions[t] = a
            rewards[t] = r
            s = s_next
        # Vectorized sufficient statistics and scores for the whole batch.
        stats = np.empty((length, k + 1))
        for i in range(k):
            stats[:, i] = states > i
        stats[:, k] = np.maximum(states - k, 0)
        blocks = np.minimum(states, k)
        scores = np.zeros((length, k + 1))
        scores[np.arange(length), blocks] = actions - np.asarray(accept_prob)[blocks]
        transitions = None
        if with_transitions:
            transitions = [
                Transition(int(states[t]), int(actions[t]), float(rewards[t])) for t in range(length)
            ]
        return Batch(
            epoch=epoch,
            transitions=transitions,
            start_state=start_state,
            final_state=s,
            stats=stats,
            scores=scores,
            rewards=rewards,
        )

    def exact_objective(self, theta: np.ndarray) -> Optional[float]:
        from ..exact import mm1_exact_objective

        if not mm1_stability_check(theta, self.params):
            return None
        return mm1_exact_objective(theta, self.params)

    def stability(self, theta: np.ndarray) -> bool:
        return mm1_stability_check(theta, self.params)

    def block_policy(self) -> BlockSigmoidPolicy:
        return BlockSigmoidPolicy(self.params.k + 1)

    @staticmethod
    def state_key(state: int) -> int:
        return state
