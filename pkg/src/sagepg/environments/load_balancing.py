"""Static routing to parallel exponential servers with a shared capacity.

Jobs arrive at rate lambda and are routed to server i with probability
pi_i(theta) = softmax(theta)_i, irrespective of the system state.  A job is
admitted (reward 1) when fewer than c jobs are present, else lost (reward 0,
the routing draw is still consumed so trajectories align across policies).
Between arrivals each busy server completes at its own rate mu_i; the chain is
observed at arrival epochs (PASTA).

The stationary law is product form with x(s) = s, balance function
prod_i (lambda/mu_i)^{s_i}, loads rho(theta) = pi(theta), and Jacobian
Dlogrho(theta) = Id - 1 pi(theta)^T.  The policy has a single parameter block.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, InvalidStateError
from ..estimators import Batch, Transition
from ..expfamily import ExpFamilyDescriptor
from ..policies import BlockSoftmaxPolicy, softmax
from ..rng import UniformStream

__all__ = [
    "LBParams",
    "LoadBalancingEnv",
    "lb_transition",
    "lb_descriptor",
    "lb_embedded_kernel",
    "enumerate_occupancies",
]


@dataclass(frozen=True)
class LBParams:
    """n_servers parallel servers, shared capacity c, arrival rate lam,
    per-server service rates mu."""

    n_servers: int
    capacity: int
    lam: float
    mu: Tuple[float, ...]

    def __post_init__(self):
        if self.n_servers < 1:
            raise ConfigurationError("n_servers must be positive")
        if self.capacity < 1:
            raise ConfigurationError("capacity must be positive")
        if self.lam <= 0:
            raise ConfigurationError("lambda must be positive")
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        if len(self.mu) != self.n_servers:
            raise ConfigurationError(f"mu must have length n_servers = {self.n_servers}")
        if any(m <= 0 for m in self.mu):
            raise ConfigurationError("service rates must be positive")


def lb_transition(
    occupancy: Tuple[int, ...],
    action: int,
    params: LBParams,
    stream: UniformStream,
) -> Tuple[float, Tuple[int, ...]]:
    """Route one arrival, then simulate departures until the next arrival.

    Returns (reward, occupancy just before the next arrival).  The reward is 1
    exactly when the arriving job was admitted.
    """
    n = params.n_servers
    if len(occupancy) != n or any(q < 0 for q in occupancy):
        raise InvalidStateError("occupancy must be a nonnegative vector of length n_servers")
    total = sum(occupancy)
    if total > params.capacity:
        raise InvalidStateError("occupancy exceeds capacity")
    if not 0 <= action < n:
        raise InvalidStateError(f"server index {action} out of range")
    occ = list(occupancy)
    if total < params.capacity:
        occ[action] += 1
        reward = 1.0
    else:
        reward = 0.0
    mu = params.mu
    remaining = stream.exponential(params.lam)
    while True:
        rate = 0.0
        for i in range(n):
            if occ[i] > 0:
                rate += mu[i]
        if rate == 0.0:
            break
        d = stream.exponential(rate)
        if d >= remaining:
            break
        remaining -= d
        # Pick the departing server proportionally to its active rate; the
        # fallback index guards the u == rate rounding edge.
        u = stream.uniform() * rate
        acc = 0.0
        chosen = -1
        for i in range(n):
            if occ[i] > 0:
                chosen = i
                acc += mu[i]
                if u < acc:
                    break
        occ[chosen] -= 1
    return reward, tuple(occ)


def lb_descriptor(params: LBParams) -> ExpFamilyDescriptor:
    """Exponential-family descriptor (d = n = n_servers, single policy block)."""
    n = params.n_servers
    log_ratios = np.log(params.lam / np.asarray(params.mu))

    def suff(s: Tuple[int, ...]) -> np.ndarray:
        return np.asarray(s, dtype=float)

    def jacobian(theta: np.ndarray) -> np.ndarray:
        pi = softmax(theta)
        return np.eye(n) - np.tile(pi, (n, 1))

    return ExpFamilyDescriptor(
        dim_d=n,
        sufficient_statistic=suff,
        log_load_jacobian=jacobian,
        block=lambda s: 0,
        balance_log=lambda s: float(np.asarray(s, dtype=float) @ log_ratios),
        load=lambda theta: softmax(theta),
    )


def enumerate_occupancies(n: int, capacity: int) -> List[Tuple[int, ...]]:
    """All occupancy vectors with sum at most capacity, in a fixed order."""
    states: List[Tuple[int, ...]] = []

    def rec(prefix: Tuple[int, ...], left: int):
        if len(prefix) == n:
            states.append(prefix)
            return
        for q in range(left + 1):
            rec(prefix + (q,), left - q)

    rec((), capacity)
    return states


def lb_embedded_kernel(theta: np.ndarray, params: LBParams) -> Tuple[List[Tuple[int, ...]], np.ndarray]:
    """Exact transition matrix of the arrival-embedded chain.

    The inter-arrival descent probabilities f(q -> q') follow the first-event
    recursion: with active rate R(q), the next arrival wins with probability
    lam/(lam+R(q)), else server i departs with probability mu_i/(lam+R(q)).
    """
    states = enumerate_occupancies(params.n_servers, params.capacity)
    index = {s: i for i, s in enumerate(states)}
    pi = softmax(theta)
    lam = params.lam
    mu = params.mu
    n = params.n_servers

    @lru_cache(maxsize=None)
    def descend(q: Tuple[int, ...]) -> Tuple[Tuple[Tuple[int, ...], float], ...]:
        """Distribution over occupancies at the next arrival, starting from q."""
        rate = sum(mu[i] for i in range(n) if q[i] > 0)
        total = lam + rate
        dist: Dict[Tuple[int, ...], float] = {q: lam / total}
        for i in range(n):
            if q[i] > 0:
                down = list(q)
                down[i] -= 1
                for target, p in descend(tuple(down)):
                    dist[target] = dist.get(target, 0.0) + (mu[i] / total) * p
        return tuple(dist.items())

    P = np.zeros((len(states), len(states)))
    for s in states:
        row = index[s]
        full = sum(s) >= params.capacity
        for a in range(n):
            if full:
                post = s
            else:
                post = list(s)
                post[a] += 1
                post = tuple(post)
            for target, p in descend(post):
                P[row, index[target]] += pi[a] * p
    descend.cache_clear()
    return states, P


class LoadBalancingEnv:
    """Static-routing environment around the arrival-embedded chain."""

    name = "load_balancing"

    def __init__(self, params: LBParams):
        self.params = params
        self.n_params = params.n_servers
        self.descriptor = lb_descriptor(params)

    def initial_state(self) -> Tuple[int, ...]:
        return (0,) * self.params.n_servers

    def action_probabilities(self, state: Tuple[int, ...], theta: np.ndarray) -> np.ndarray:
        return softmax(theta)

    def policy_score(self, state: Tuple[int, ...], action: int, theta: np.ndarray) -> np.ndarray:
        score = -softmax(theta)
        score[action] += 1.0
        return score

    def transition(
        self, state: Tuple[int, ...], action: int, stream: UniformStream
    ) -> Tuple[float, Tuple[int, ...]]:
        return lb_transition(state, action, self.params, stream)

    def sample_batch(
        self,
        theta: np.ndarray,
        start_state: Tuple[int, ...],
        length: int,
        epoch: int,
        stream: UniformStream,
        with_transitions: bool = False,
    ) -> Batch:
        params = self.params
        n = params.n_servers
        pi = softmax(theta)
        cum = np.cumsum(pi).tolist()
        cum[-1] = 1.0
        state_rows: List[Tuple[int, ...]] = []
        actions = np.empty(length, dtype=np.int64)
        rewards = np.empty(length)
        s = tuple(start_state)
        uniform = stream.uniform
        for t in range(length):
            u = uniform()
            a = 0
            while cum[a] <= u:
                a += 1
            r, s_next = lb_transition(s, a, params, stream)
            state_rows.append(s)
            actions[t] = a
            rewards[t] = r
            s = s_next
        stats = np.asarray(state_rows, dtype=float)
        scores = np.zeros((length, n))
        scores[np.arange(length), actions] = 1.0
        scores -= pi[None, :]
        transitions = None
        if with_transitions:
            transitions = [
                Transition(state_rows[t], int(actions[t]), float(rewards[t])) for t in range(length)
            ]
        return Batch(
            epoch=epoch,
            transitions=transitions,
            start_state=tuple(start_state),
            final_state=s,
            stats=stats,
            scores=scores,
            rewards=rewards,
        )

    def exact_objective(self, theta: np.ndarray) -> float:
        from ..exact import lb_exact_objective

        return lb_exact_objective(theta, self.params)

    def stability(self, theta: np.ndarray) -> bool:
        return True

    def block_policy(self) -> BlockSoftmaxPolicy:
        return BlockSoftmaxPolicy(1, self.params.n_servers)

    @staticmethod
    def state_key(state: Tuple[int, ...]) -> Tuple[int, ...]:
        return state
