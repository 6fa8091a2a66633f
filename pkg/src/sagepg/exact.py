"""Exact and oracle evaluators.

Closed-form average-reward objectives for the admission-control queue and the
routing network, a convolution algorithm for product-form normalizing
constants, brute-force stationary solvers for small chains, and
finite-difference gradients.  These are the references the sampling-based
estimators are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .environments.ising import (
    IsingParams,
    IsingState,
    ising_flip_probability,
    ising_log_loads,
    lattice_edges,
    left_column_mask,
)
from .environments.load_balancing import LBParams, enumerate_occupancies, lb_embedded_kernel
from .environments.mm1 import MM1Params, mm1_embedded_kernel, mm1_stability_check, mm1_stationary_weights
from .errors import BuzenOverflowError, ConfigurationError, ConvergenceError, StabilityError
from .expfamily import ExpFamilyDescriptor, stationary_score
from .policies import sigmoid, softmax

__all__ = [
    "StationaryDistribution",
    "BuzenArray",
    "brute_force_stationary",
    "finite_difference_gradient",
    "mm1_exact_objective",
    "mm1_brute_force_objective",
    "buzen_normalizing_constants",
    "lb_log_normalizing_constants",
    "lb_exact_objective",
    "lb_optimal_objective",
    "verify_score_identity",
    "ising_exact_objective",
    "ising_chain",
    "ising_detailed_balance_gap",
    "mm1_chain_builder",
    "lb_chain_builder",
    "ising_chain_builder",
]

_OVERFLOW_LIMIT = 1e280


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary law of a finite chain: ordered support and probabilities."""

    support: Sequence
    probabilities: np.ndarray

    def __post_init__(self):
        if len(self.support) != len(self.probabilities):
            raise ConfigurationError("support and probabilities must have equal length")

    def prob(self, state) -> float:
        return float(self.probabilities[list(self.support).index(state)])


@dataclass(frozen=True)
class BuzenArray:
    """Cumulative normalizing constants G[c_hat, n_hat-1] for c_hat in 0..c,
    n_hat in 1..n.  Row 0 is all ones; columns are nondecreasing in c_hat."""

    g: np.ndarray

    @property
    def normalizing_constant(self) -> float:
        return float(self.g[-1, -1])

    @property
    def admission_probability(self) -> float:
        if self.g.shape[0] < 2:
            raise ConfigurationError("admission probability needs capacity >= 1")
        return float(self.g[-2, -1] / self.g[-1, -1])


def _gth_stationary(P: np.ndarray) -> Optional[np.ndarray]:
    """Grassmann–Taksar–Heyman state reduction: direct Gaussian elimination on
    the balance equations with no subtractions, so every component of the
    stationary vector — including ones around 1e-300 — keeps full relative
    accuracy.  Returns None on reducible chains (zero pivot)."""
    A = np.array(P, dtype=float)
    n = A.shape[0]
    for k in range(n - 1, 0, -1):
        pivot = A[k, :k].sum()
        if not pivot > 0.0:
            return None
        A[:k, k] /= pivot
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    r = np.zeros(n)
    r[0] = 1.0
    for k in range(1, n):
        r[k] = r[:k] @ A[:k, k]
    total = r.sum()
    if not np.isfinite(total) or total <= 0.0:
        return None
    return r / total


def brute_force_stationary(transition_matrix: np.ndarray, support: Optional[Sequence] = None) -> StationaryDistribution:
    """Solve p^T P = p^T, sum(p) = 1 for a finite stochastic matrix.

    Direct dense elimination (GTH state reduction, componentwise accurate)
    with a power-iteration fallback; the result must have residual below
    1e-10 or a ConvergenceError is raised.
    """
    P = np.asarray(transition_matrix, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ConfigurationError("transition matrix must be square")
    n = P.shape[0]
    row_sums = P.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > 1e-12:
        raise ConfigurationError("transition matrix rows must sum to 1 within 1e-12")

    p = _gth_stationary(P)

    if p is None or np.max(np.abs(p @ P - p)) > 1e-10:
        # damped power iteration; the (P + I)/2 mix removes periodicity
        Q = 0.5 * (P + np.eye(n))
        p = np.full(n, 1.0 / n)
        for _ in range(200000):
            nxt = p @ Q
            if np.max(np.abs(nxt - p)) < 1e-15:
                p = nxt
                break
            p = nxt
        p = p / p.sum()

    if np.max(np.abs(p @ P - p)) > 1e-10:
        raise ConvergenceError("stationary solve residual exceeds 1e-10")
    if support is None:
        support = list(range(n))
    return StationaryDistribution(support=support, probabilities=p)


def _fd_steps(theta: np.ndarray, h: float) -> np.ndarray:
    # relative step for large coordinates, absolute step otherwise
    return h * np.maximum(1.0, np.abs(theta))


def finite_difference_gradient(objective: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar objective."""
    th = np.asarray(theta, dtype=float)
    steps = _fd_steps(th, h)
    grad = np.empty_like(th)
    for i in range(th.size):
        up = th.copy()
        dn = th.copy()
        up[i] += steps[i]
        dn[i] -= steps[i]
        grad[i] = (objective(up) - objective(dn)) / (2.0 * steps[i])
    return grad


# ---------------------------------------------------------------------------
# admission-control queue


def mm1_exact_objective(theta: np.ndarray, params: MM1Params) -> float:
    """Closed-form average reward per arrival.

    With acceptance probabilities rho_s = pi(accept | min(s, k), theta) the
    stationary law is p(s) proportional to prod_{i<s} (lam/mu) rho_i, whose
    tail beyond level k is geometric with ratio psi = (lam/mu) rho_k.  Then

        J = gamma P{accept} - (eta/lam) E[S],
        P{accept} = sum_s p(s) rho_min(s,k),
        E[S] = sum_{s<k} s p(s) + p(k)/(1-psi) * (k + psi/(1-psi)).
    """
    th = np.asarray(theta, dtype=float)
    k = params.k
    if th.shape != (k + 1,):
        raise ConfigurationError(f"theta must have length {k + 1}")
    if not mm1_stability_check(th, params):
        raise StabilityError("accept probability at the threshold exceeds mu/lambda")
    ratio = params.lam / params.mu
    rho = [sigmoid(float(th[i])) for i in range(k + 1)]
    w = [1.0]
    for s in range(k):
        w.append(w[-1] * ratio * rho[s])
    psi = ratio * rho[k]
    tail = w[k] / (1.0 - psi)
    head = sum(w[:k])
    z = head + tail
    p_accept = (sum(w[s] * rho[s] for s in range(k)) + rho[k] * tail) / z
    mean_queue = (sum(s * w[s] for s in range(k)) + tail * (k + psi / (1.0 - psi))) / z
    return params.gamma * p_accept - (params.eta / params.lam) * mean_queue


def mm1_brute_force_objective(theta: np.ndarray, params: MM1Params, tail_mass: float = 1e-12) -> float:
    """Independent oracle: stationary solve of the truncated embedded chain
    plus direct accounting of per-arrival reward.

    The expected holding area from queue level q until the next arrival obeys
    W(0) = 0, W(q) = q/(lam+mu) + mu/(lam+mu) W(q-1): each exponential race
    costs q/(lam+mu) in expectation and a departure wins with probability
    mu/(lam+mu).
    """
    th = np.asarray(theta, dtype=float)
    if not mm1_stability_check(th, params):
        raise StabilityError("accept probability at the threshold exceeds mu/lambda")
    truncation = max(60, len(mm1_stationary_weights(th, params, tail_mass)) + 20)
    states, P = mm1_embedded_kernel(th, params, truncation)
    dist = brute_force_stationary(P, support=states)

    lam, mu = params.lam, params.mu
    w_area = np.empty(truncation + 2)
    w_area[0] = 0.0
    for q in range(1, truncation + 2):
        w_area[q] = q / (lam + mu) + (mu / (lam + mu)) * w_area[q - 1]

    k = params.k
    total = 0.0
    for s, p_s in zip(states, dist.probabilities):
        accept = sigmoid(float(th[min(s, k)]))
        reward_acc = params.gamma - params.eta * w_area[s + 1]
        reward_rej = -params.eta * w_area[s]
        total += p_s * (accept * reward_acc + (1.0 - accept) * reward_rej)
    return float(total)


# ---------------------------------------------------------------------------
# routing network


def buzen_normalizing_constants(theta: np.ndarray, params: LBParams) -> BuzenArray:
    """Convolution recursion for the cumulative partition function.

    G[c_hat, n_hat] = G[c_hat, n_hat-1] + y_{n_hat} G[c_hat-1, n_hat] with
    y_i = (lam/mu_i) pi_i(theta), base column G[., 0] = 1 and base row
    G[0, .] = 1.  G[c, n] sums prod y_i^{s_i} over all occupancies with
    total at most c.
    """
    pi = softmax(np.asarray(theta, dtype=float))
    n = params.n_servers
    c = params.capacity
    y = params.lam * pi / np.asarray(params.mu, dtype=float)
    g = np.empty((c + 1, n))
    prev = np.ones(c + 1)
    for j in range(n):
        col = np.empty(c + 1)
        col[0] = 1.0
        for ch in range(1, c + 1):
            col[ch] = prev[ch] + y[j] * col[ch - 1]
        if col[-1] > _OVERFLOW_LIMIT:
            raise BuzenOverflowError(
                "normalizing constant exceeds 1e280; use the log-domain recursion"
            )
        g[:, j] = col
        prev = col
    return BuzenArray(g=g)


def lb_log_normalizing_constants(theta: np.ndarray, params: LBParams) -> np.ndarray:
    """Log-domain variant of the convolution recursion (same table, log G)."""
    th = np.asarray(theta, dtype=float)
    log_pi = th - (np.log(np.sum(np.exp(th - th.max()))) + th.max())
    n = params.n_servers
    c = params.capacity
    log_y = np.log(params.lam) + log_pi - np.log(np.asarray(params.mu, dtype=float))
    log_g = np.empty((c + 1, n))
    prev = np.zeros(c + 1)
    for j in range(n):
        col = np.empty(c + 1)
        col[0] = 0.0
        for ch in range(1, c + 1):
            col[ch] = np.logaddexp(prev[ch], log_y[j] + col[ch - 1])
        log_g[:, j] = col
        prev = col
    return log_g


def lb_exact_objective(theta: np.ndarray, params: LBParams) -> float:
    """Stationary admission probability G[c-1, n] / G[c, n], in (0, 1)."""
    if params.capacity < 1:
        raise ConfigurationError("capacity must be at least 1")
    try:
        arr = buzen_normalizing_constants(theta, params)
        return arr.admission_probability
    except BuzenOverflowError:
        log_g = lb_log_normalizing_constants(theta, params)
        return float(np.exp(log_g[-2, -1] - log_g[-1, -1]))


def lb_optimal_objective(params: LBParams, theta0: Optional[np.ndarray] = None, max_iter: int = 2000) -> Tuple[np.ndarray, float]:
    """Maximize the admission probability over routing logits by adaptive-step
    gradient ascent with finite-difference gradients.  Returns (theta, J)."""
    theta = np.zeros(params.n_servers) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    theta -= theta.mean()

    def objective(th: np.ndarray) -> float:
        return lb_exact_objective(th, params)

    value = objective(theta)
    step = 1.0
    for _ in range(max_iter):
        grad = finite_difference_gradient(objective, theta)
        if np.linalg.norm(grad) < 1e-12:
            break
        candidate = theta + step * grad
        candidate -= candidate.mean()
        cand_value = objective(candidate)
        if cand_value > value:
            theta, value = candidate, cand_value
            step *= 1.2
        else:
            step *= 0.5
            if step < 1e-10:
                break
    return theta, value


# ---------------------------------------------------------------------------
# score-identity oracle


def verify_score_identity(
    env_descriptor: ExpFamilyDescriptor,
    theta: np.ndarray,
    small_chain_builder: Callable[[np.ndarray], Tuple[Sequence, np.ndarray]],
    h: float = 1e-5,
) -> float:
    """Max abs discrepancy between the analytic stationary score
    Dlog rho(theta)^T (x(s) - E x) and finite differences of log p(s | theta)
    computed from brute-force stationary solves."""
    th = np.asarray(theta, dtype=float)
    states, P = small_chain_builder(th)
    dist = brute_force_stationary(P, support=states)
    x = np.array([env_descriptor.sufficient_statistic(s) for s in states])
    mean_x = dist.probabilities @ x
    analytic = np.array([stationary_score(s, th, env_descriptor, mean_x) for s in states])

    steps = _fd_steps(th, h)
    fd = np.empty_like(analytic)
    for i in range(th.size):
        up = th.copy()
        dn = th.copy()
        up[i] += steps[i]
        dn[i] -= steps[i]
        p_up = brute_force_stationary(small_chain_builder(up)[1]).probabilities
        p_dn = brute_force_stationary(small_chain_builder(dn)[1]).probabilities
        fd[:, i] = (np.log(p_up) - np.log(p_dn)) / (2.0 * steps[i])
    return float(np.max(np.abs(fd - analytic)))


def mm1_chain_builder(params: MM1Params, truncation: int = 60) -> Callable[[np.ndarray], Tuple[List[int], np.ndarray]]:
    def build(theta: np.ndarray):
        return mm1_embedded_kernel(theta, params, truncation)

    return build


def lb_chain_builder(params: LBParams) -> Callable[[np.ndarray], Tuple[List[Tuple[int, ...]], np.ndarray]]:
    def build(theta: np.ndarray):
        return lb_embedded_kernel(theta, params)

    return build


def ising_chain_builder(params: IsingParams) -> Callable[[np.ndarray], Tuple[List[IsingState], np.ndarray]]:
    def build(theta: np.ndarray):
        return ising_chain(theta, params)

    return build


# ---------------------------------------------------------------------------
# spin lattice


@lru_cache(maxsize=4)
def _config_tables(d1: int, d2: int):
    """All 2^(d1 d2) configurations with their sufficient statistics.

    Returns (spins, interactions, m_left, m_right); spins has one +/-1 row
    per configuration, bit b of the row index giving the spin at flat cell b.
    """
    ncells = d1 * d2
    if ncells > 16:
        raise ConfigurationError("full enumeration is limited to 16 cells")
    count = 1 << ncells
    bits = (np.arange(count, dtype=np.uint32)[:, None] >> np.arange(ncells, dtype=np.uint32)) & 1
    spins = bits.astype(np.float64) * 2.0 - 1.0
    inter = np.zeros(count)
    for a, b in lattice_edges(d1, d2):
        inter += spins[:, a] * spins[:, b]
    left = np.repeat(left_column_mask(d2)[None, :], d1, axis=0).ravel()
    m_left = spins[:, left].sum(axis=1)
    m_right = spins[:, ~left].sum(axis=1)
    return spins, inter, m_left, m_right


def _gibbs_log_weights(theta: np.ndarray, params: IsingParams) -> np.ndarray:
    _, inter, m_left, m_right = _config_tables(params.d1, params.d2)
    loads = ising_log_loads(theta, params)
    return inter * loads[0] + m_left * loads[1] + m_right * loads[2]


def ising_exact_objective(theta: np.ndarray, params: IsingParams) -> float:
    """Average reward under the Gibbs configuration marginal (full enumeration,
    at most 16 cells).  Rewards are evaluated on post-action configurations,
    whose stationary law is the same Gibbs measure."""
    _, _, m_left, m_right = _config_tables(params.d1, params.d2)
    log_w = _gibbs_log_weights(theta, params)
    log_w = log_w - log_w.max()
    probs = np.exp(log_w)
    probs /= probs.sum()
    scale = 2.0 / (params.d1 * params.d2)
    rewards = -np.abs(params.xi_left - scale * m_left) - np.abs(params.xi_right - scale * m_right)
    return float(probs @ rewards)


def ising_chain(theta: np.ndarray, params: IsingParams) -> Tuple[List[IsingState], np.ndarray]:
    """Full transition matrix of the (configuration, site) chain."""
    d1, d2 = params.d1, params.d2
    ncells = d1 * d2
    spins, _, _, _ = _config_tables(d1, d2)
    count = spins.shape[0]
    states: List[IsingState] = []
    for cfg in range(count):
        grid = spins[cfg].reshape(d1, d2).astype(np.int8)
        for site in range(ncells):
            states.append(IsingState(grid, (site // d2, site % d2)))

    P = np.zeros((count * ncells, count * ncells))
    site_prob = 1.0 / ncells
    for cfg in range(count):
        for site in range(ncells):
            row = cfg * ncells + site
            state = states[row]
            p_flip = ising_flip_probability(state, theta, params)
            flipped_cfg = cfg ^ (1 << site)
            for target_cfg, weight in ((cfg, 1.0 - p_flip), (flipped_cfg, p_flip)):
                for nxt_site in range(ncells):
                    P[row, target_cfg * ncells + nxt_site] += weight * site_prob
    return states, P


def ising_detailed_balance_gap(theta: np.ndarray, params: IsingParams) -> float:
    """Max relative gap in q(sigma) P(sigma -> sigma_v) = q(sigma_v) P(sigma_v -> sigma)
    over all configurations and flip sites, with q the Gibbs marginal."""
    d1, d2 = params.d1, params.d2
    ncells = d1 * d2
    spins, _, _, _ = _config_tables(d1, d2)
    log_w = _gibbs_log_weights(theta, params)
    log_w = log_w - log_w.max()
    q = np.exp(log_w)
    q /= q.sum()
    worst = 0.0
    for cfg in range(spins.shape[0]):
        grid = spins[cfg].reshape(d1, d2).astype(np.int8)
        for site in range(ncells):
            other = cfg ^ (1 << site)
            if other < cfg:
                continue
            state = IsingState(grid, (site // d2, site % d2))
            grid_other = spins[other].reshape(d1, d2).astype(np.int8)
            state_other = IsingState(grid_other, (site // d2, site % d2))
            lhs = q[cfg] * ising_flip_probability(state, theta, params)
            rhs = q[other] * ising_flip_probability(state_other, theta, params)
            gap = abs(lhs - rhs) / max(lhs, rhs)
            worst = max(worst, gap)
    return worst
