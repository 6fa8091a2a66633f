"""Glauber dynamics on a two-dimensional Ising lattice with learned fields.

The state is a spin configuration sigma on a d1 x d2 lattice (open boundaries,
v ~ w iff the coordinates differ by 1 in exactly one axis) together with the
site v to update next.  The policy flips sigma(v) with probability
1/(1 + e^delta), where

    delta = 2 beta(theta) sigma(v) (J sum_{w~v} sigma(w) + mu h(v | theta)),

beta = 1 + tanh(theta_1), and the external field is h_left = tanh(theta_2) on
the left half-lattice (1-indexed columns with 2*column <= d2, so for odd d2
the middle column belongs to the right half) and h_right = tanh(theta_3)
elsewhere.  The next site is then
drawn uniformly.  This is the heat-bath rule, so the configuration marginal is
the Gibbs law

    q(sigma | theta) proportional to exp(beta (J I(sigma) + mu F(sigma)))

with interaction sum I (each neighbor pair once) and field term
F = h_left M_left + h_right M_right; the chain is reversible with respect to
it.  Sufficient statistics are x = (I, M_left, M_right).

The reward is computed from the NEXT configuration: with scale = 2/(d1 d2),
r = -|xi_left - scale * M_left| - |xi_right - scale * M_right|.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import tanh
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from ..estimators import Batch, Transition
from ..expfamily import ExpFamilyDescriptor
from ..policies import sigmoid
from ..rng import UniformStream

__all__ = [
    "IsingParams",
    "IsingState",
    "IsingEnv",
    "KEEP",
    "FLIP",
    "ising_flip_probability",
    "ising_transition",
    "ising_descriptor",
    "ising_policy_score",
    "ising_log_loads",
    "interaction_sum",
    "half_magnetizations",
    "lattice_edges",
    "left_column_mask",
]

KEEP = 0
FLIP = 1


@dataclass(frozen=True)
class IsingParams:
    """Lattice shape (d1, d2), coupling J, magnetic moment mu, and target
    half-lattice magnetizations xi_left, xi_right in [-1, 1]."""

    d1: int
    d2: int
    coupling: float
    moment: float
    xi_left: float
    xi_right: float

    def __post_init__(self):
        if self.d1 < 2 or self.d2 < 2:
            raise ConfigurationError("lattice sides must be at least 2")
        if self.moment < 0:
            raise ConfigurationError("moment must be nonnegative")
        if not (-1 <= self.xi_left <= 1 and -1 <= self.xi_right <= 1):
            raise ConfigurationError("targets must lie in [-1, 1]")


class IsingState:
    """Spin configuration plus the site to update next.

    Hashable (by configuration bytes and site) so tabular critics can index it.
    """

    __slots__ = ("spins", "site")

    def __init__(self, spins: np.ndarray, site: Tuple[int, int]):
        spins = np.asarray(spins, dtype=np.int8)
        if spins.ndim != 2:
            raise ConfigurationError("spins must be a 2-d array")
        if not np.all(np.abs(spins) == 1):
            raise ConfigurationError("spins must be +/-1")
        i, j = site
        if not (0 <= i < spins.shape[0] and 0 <= j < spins.shape[1]):
            raise ConfigurationError("site out of bounds")
        self.spins = spins
        self.site = (int(i), int(j))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, IsingState)
            and self.site == other.site
            and self.spins.shape == other.spins.shape
            and bool(np.all(self.spins == other.spins))
        )

    def __hash__(self) -> int:
        return hash((self.spins.tobytes(), self.spins.shape, self.site))

    def __repr__(self) -> str:
        return f"IsingState(site={self.site}, spins=\n{self.spins})"


def left_column_mask(d2: int) -> np.ndarray:
    """Boolean mask of the columns belonging to the left half-lattice."""
    return np.array([2 * (j + 1) <= d2 for j in range(d2)])


def lattice_edges(d1: int, d2: int) -> List[Tuple[int, int]]:
    """All unordered neighbor pairs as flat indices (row-major), each once."""
    edges = []
    for i in range(d1):
        for j in range(d2):
            if i + 1 < d1:
                edges.append((i * d2 + j, (i + 1) * d2 + j))
            if j + 1 < d2:
                edges.append((i * d2 + j, i * d2 + j + 1))
    return edges


def interaction_sum(spins: np.ndarray) -> float:
    """I(sigma) = sum over neighbor pairs of sigma(v) sigma(w), each pair once."""
    s = np.asarray(spins, dtype=float)
    return float((s[:-1, :] * s[1:, :]).sum() + (s[:, :-1] * s[:, 1:]).sum())


def half_magnetizations(spins: np.ndarray) -> Tuple[float, float]:
    """(M_left, M_right): total spin on the left and right half-lattices."""
    s = np.asarray(spins, dtype=float)
    mask = left_column_mask(s.shape[1])
    return float(s[:, mask].sum()), float(s[:, ~mask].sum())


def _field_terms(theta: np.ndarray) -> Tuple[float, float, float]:
    th = np.asarray(theta, dtype=float)
    if th.shape != (3,):
        raise ConfigurationError("theta must have length 3")
    return 1.0 + tanh(th[0]), tanh(th[1]), tanh(th[2])


def _neighbor_spin_sum(spins: np.ndarray, i: int, j: int) -> float:
    d1, d2 = spins.shape
    total = 0.0
    if i > 0:
        total += spins[i - 1, j]
    if i + 1 < d1:
        total += spins[i + 1, j]
    if j > 0:
        total += spins[i, j - 1]
    if j + 1 < d2:
        total += spins[i, j + 1]
    return total


def _delta(state: IsingState, theta: np.ndarray, params: IsingParams) -> float:
    beta, h_left, h_right = _field_terms(theta)
    i, j = state.site
    h = h_left if 2 * (j + 1) <= params.d2 else h_right
    nbr = _neighbor_spin_sum(state.spins, i, j)
    return 2.0 * beta * float(state.spins[i, j]) * (params.coupling * nbr + params.moment * h)


def ising_flip_probability(state: IsingState, theta: np.ndarray, params: IsingParams) -> float:
    """Heat-bath flip probability 1/(1 + e^delta) at the state's site."""
    return sigmoid(-_delta(state, theta, params))


def ising_policy_score(state: IsingState, action: int, theta: np.ndarray, params: IsingParams) -> np.ndarray:
    """Score grad_theta log pi(action | state): (1{keep} - pi(keep)) * grad delta."""
    th = np.asarray(theta, dtype=float)
    beta, h_left, h_right = _field_terms(th)
    beta_p = 1.0 - tanh(th[0]) ** 2
    hl_p = 1.0 - tanh(th[1]) ** 2
    hr_p = 1.0 - tanh(th[2]) ** 2
    i, j = state.site
    left = 2 * (j + 1) <= params.d2
    h = h_left if left else h_right
    sv = float(state.spins[i, j])
    nbr = _neighbor_spin_sum(state.spins, i, j)
    core = params.coupling * nbr + params.moment * h
    grad_delta = np.array(
        [
            2.0 * beta_p * sv * core,
            2.0 * beta * sv * params.moment * hl_p if left else 0.0,
            2.0 * beta * sv * params.moment * hr_p if not left else 0.0,
        ]
    )
    p_keep = sigmoid(2.0 * beta * sv * core)
    pref = (1.0 if action == KEEP else 0.0) - p_keep
    return pref * grad_delta


def ising_transition(
    state: IsingState,
    action: int,
    params: IsingParams,
    targets: Tuple[float, float],
    stream: UniformStream,
) -> Tuple[float, IsingState]:
    """Apply the chosen action at state.site, draw the next site uniformly,
    and return the reward of the NEXT configuration."""
    spins = state.spins.copy()
    if action == FLIP:
        i, j = state.site
        spins[i, j] = -spins[i, j]
    m_left, m_right = half_magnetizations(spins)
    scale = 2.0 / (params.d1 * params.d2)
    xi_left, xi_right = targets
    reward = -abs(xi_left - scale * m_left) - abs(xi_right - scale * m_right)
    idx = int(stream.uniform() * (params.d1 * params.d2))
    next_site = (idx // params.d2, idx % params.d2)
    return reward, IsingState(spins, next_site)


def ising_log_loads(theta: np.ndarray, params: IsingParams) -> np.ndarray:
    """log rho(theta) = (beta J, beta mu h_left, beta mu h_right)."""
    beta, h_left, h_right = _field_terms(theta)
    return np.array(
        [beta * params.coupling, beta * params.moment * h_left, beta * params.moment * h_right]
    )


def ising_descriptor(params: IsingParams) -> ExpFamilyDescriptor:
    """Descriptor with x = (I, M_left, M_right) and the 3x3 load Jacobian."""

    def suff(state: IsingState) -> np.ndarray:
        m_left, m_right = half_magnetizations(state.spins)
        return np.array([interaction_sum(state.spins), m_left, m_right])

    def jacobian(theta: np.ndarray) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        beta, h_left, h_right = _field_terms(th)
        beta_p = 1.0 - tanh(th[0]) ** 2
        hl_p = 1.0 - tanh(th[1]) ** 2
        hr_p = 1.0 - tanh(th[2]) ** 2
        mom = params.moment
        return np.array(
            [
                [beta_p * params.coupling, 0.0, 0.0],
                [beta_p * mom * h_left, beta * mom * hl_p, 0.0],
                [beta_p * mom * h_right, 0.0, beta * mom * hr_p],
            ]
        )

    return ExpFamilyDescriptor(
        dim_d=3,
        sufficient_statistic=suff,
        log_load_jacobian=jacobian,
        block=None,
        balance_log=lambda state: 0.0,
        load=lambda theta: np.exp(ising_log_loads(theta, params)),
    )


@lru_cache(maxsize=None)
def _site_tables(d1: int, d2: int):
    """Per-site neighbor flat-index tuples and left-half membership."""
    neighbors = []
    left = []
    for i in range(d1):
        for j in range(d2):
            nb = []
            if i > 0:
                nb.append((i - 1) * d2 + j)
            if i + 1 < d1:
                nb.append((i + 1) * d2 + j)
            if j > 0:
                nb.append(i * d2 + j - 1)
            if j + 1 < d2:
                nb.append(i * d2 + j + 1)
            neighbors.append(tuple(nb))
            left.append(2 * (j + 1) <= d2)
    return tuple(neighbors), tuple(left)


class IsingEnv:
    """Glauber-dynamics environment with incremental statistics bookkeeping."""

    name = "ising"
    n_params = 3

    def __init__(self, params: IsingParams):
        self.params = params
        self.descriptor = ising_descriptor(params)
        self._neighbors, self._left = _site_tables(params.d1, params.d2)

    def initial_state(self) -> IsingState:
        """Spins +1 on the left half, -1 on the right, site (0, 0)."""
        p = self.params
        spins = np.where(left_column_mask(p.d2)[None, :], 1, -1).astype(np.int8)
        spins = np.broadcast_to(spins, (p.d1, p.d2)).copy()
        return IsingState(spins, (0, 0))

    def action_probabilities(self, state: IsingState, theta: np.ndarray) -> np.ndarray:
        p_flip = ising_flip_probability(state, theta, self.params)
        return np.array([1.0 - p_flip, p_flip])

    def policy_score(self, state: IsingState, action: int, theta: np.ndarray) -> np.ndarray:
        return ising_policy_score(state, action, theta, self.params)

    def transition(self, state: IsingState, action: int, stream: UniformStream) -> Tuple[float, IsingState]:
        p = self.params
        return ising_transition(state, action, p, (p.xi_left, p.xi_right), stream)

    def sample_batch(
        self,
        theta: np.ndarray,
        start_state: IsingState,
        length: int,
        epoch: int,
        stream: UniformStream,
        with_transitions: bool = False,
    ) -> Batch:
        p = self.params
        th = np.asarray(theta, dtype=float)
        beta, h_left, h_right = _field_terms(th)
        beta_p = 1.0 - tanh(th[0]) ** 2
        hl_p = 1.0 - tanh(th[1]) ** 2
        hr_p = 1.0 - tanh(th[2]) ** 2
        coupling = p.coupling
        moment = p.moment
        xi_l, xi_r = p.xi_left, p.xi_right
        ncells = p.d1 * p.d2
        scale = 2.0 / ncells
        neighbors = self._neighbors
        left = self._left

        spins = [int(v) for v in start_state.spins.ravel()]
        inter = interaction_sum(start_state.spins)
        m_left, m_right = half_magnetizations(start_state.spins)
        site = start_state.site[0] * p.d2 + start_state.site[1]

        stats = np.empty((length, 3))
        scores = np.empty((length, 3))
        rewards = np.empty(length)
        actions = np.empty(length, dtype=np.int64) if with_transitions else None
        snapshots = [] if with_transitions else None
        uniform = stream.uniform

        for t in range(length):
            sv = spins[site]
            nbr = 0
            for w in neighbors[site]:
                nbr += spins[w]
            is_left = left[site]
            h = h_left if is_left else h_right
            core = coupling * nbr + moment * h
            delta = 2.0 * beta * sv * core
            p_keep = sigmoid(delta)

            stats[t, 0] = inter
            stats[t, 1] = m_left
            stats[t, 2] = m_right
            if with_transitions:
                snapshots.append(
                    IsingState(
                        np.asarray(spins, dtype=np.int8).reshape(p.d1, p.d2),
                        (site // p.d2, site % p.d2),
                    )
                )

            flip = uniform() < (1.0 - p_keep)
            pref = (0.0 if flip else 1.0) - p_keep
            scores[t, 0] = pref * 2.0 * beta_p * sv * core
            scores[t, 1] = pref * 2.0 * beta * sv * moment * hl_p if is_left else 0.0
            scores[t, 2] = pref * 2.0 * beta * sv * moment * hr_p if not is_left else 0.0

            if flip:
                spins[site] = -sv
                inter -= 2.0 * sv * nbr
                if is_left:
                    m_left -= 2.0 * sv
                else:
                    m_right -= 2.0 * sv
            rewards[t] = -abs(xi_l - scale * m_left) - abs(xi_r - scale * m_right)
            if with_transitions:
                actions[t] = 1 if flip else 0
            site = int(uniform() * ncells)

        final_state = IsingState(
            np.asarray(spins, dtype=np.int8).reshape(p.d1, p.d2), (site // p.d2, site % p.d2)
        )
        transitions = None
        if with_transitions:
            transitions = [
                Transition(snapshots[t], int(actions[t]), float(rewards[t])) for t in range(length)
            ]
        return Batch(
            epoch=epoch,
            transitions=transitions,
            start_state=start_state,
            final_state=final_state,
            stats=stats,
            scores=scores,
            rewards=rewards,
        )

    def exact_objective(self, theta: np.ndarray) -> Optional[float]:
        if self.params.d1 * self.params.d2 > 16:
            return None
        from ..exact import ising_exact_objective

        return ising_exact_objective(theta, self.params)

    def stability(self, theta: np.ndarray) -> bool:
        return True

    def block_policy(self):
        return None

    @staticmethod
    def state_key(state: IsingState) -> IsingState:
        return state
