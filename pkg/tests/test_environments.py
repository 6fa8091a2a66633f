"""Environment dynamics: admission control, load balancing, Glauber lattice.

Each environment is checked three ways: validation of inputs, frozen
small-case arithmetic, and consistency between the vectorized batch sampler
and the per-transition path (statistics, scores, and rewards recomputed
independently from the recorded transitions).
"""

import numpy as np
import pytest

from sagepg.environments.ising import (
    FLIP,
    KEEP,
    IsingEnv,
    IsingParams,
    IsingState,
    half_magnetizations,
    interaction_sum,
    ising_flip_probability,
    ising_policy_score,
    ising_transition,
    left_column_mask,
)
from sagepg.environments.load_balancing import (
    LBParams,
    LoadBalancingEnv,
    enumerate_occupancies,
    lb_embedded_kernel,
    lb_transition,
)
from sagepg.environments.mm1 import (
    ACCEPT,
    REJECT,
    MM1Env,
    MM1Params,
    mm1_embedded_kernel,
    mm1_stationary_sample,
    mm1_stationary_weights,
    mm1_transition,
)
from sagepg.errors import ConfigurationError, InvalidStateError
from sagepg.exact import brute_force_stationary
from sagepg.policies import sigmoid, softmax
from sagepg.rng import UniformStream


def product_form_law(descriptor, states, theta):
    """Stationary law proportional to balance(s) * prod_i load_i^{x_i(s)}."""
    loads = descriptor.load(theta)
    w = np.array(
        [
            np.exp(descriptor.balance_log(s)) * np.prod(loads ** descriptor.sufficient_statistic(s))
            for s in states
        ]
    )
    return w / w.sum()


# --- admission control --------------------------------------------------------


def test_mm1_params_validation():
    with pytest.raises(ConfigurationError):
        MM1Params(lam=0.0, mu=1.0, gamma=1.0, eta=1.0, k=0)
    with pytest.raises(ConfigurationError):
        MM1Params(lam=1.0, mu=-1.0, gamma=1.0, eta=1.0, k=0)
    with pytest.raises(ConfigurationError):
        MM1Params(lam=1.0, mu=1.0, gamma=1.0, eta=1.0, k=-1)


def test_mm1_transition_admission_reward():
    # With no holding cost the reward is exactly gamma per admitted job.
    params = MM1Params(lam=0.7, mu=1.0, gamma=5.0, eta=0.0, k=0)
    stream = UniformStream(0)
    for _ in range(50):
        r_acc, q_acc = mm1_transition(3, ACCEPT, params, stream)
        r_rej, q_rej = mm1_transition(3, REJECT, params, stream)
        assert r_acc == 5.0
        assert r_rej == 0.0
        assert 0 <= q_acc <= 4
        assert 0 <= q_rej <= 3


def test_mm1_transition_holding_cost_is_negative():
    params = MM1Params(lam=0.7, mu=1.0, gamma=0.0, eta=2.0, k=0)
    stream = UniformStream(1)
    for _ in range(50):
        r, _ = mm1_transition(4, REJECT, params, stream)
        assert r < 0.0


def test_mm1_transition_rejects_negative_queue():
    params = MM1Params(lam=0.7, mu=1.0, gamma=1.0, eta=1.0, k=0)
    with pytest.raises(ConfigurationError):
        mm1_transition(-1, ACCEPT, params, UniformStream(0))


@pytest.mark.parametrize("lam", [0.7, 1.4])
def test_mm1_kernel_rows_are_distributions(lam):
    params = MM1Params(lam=lam, mu=1.0, gamma=5.0, eta=1.0, k=2)
    theta = np.array([0.4, -0.3, 0.2])
    _, P = mm1_embedded_kernel(theta, params, truncation=12)
    assert P.min() >= 0.0
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("lam", [0.7, 1.4])
def test_mm1_kernel_stationary_law_is_truncated_product_form(lam):
    # Rejecting at the boundary keeps the birth-death structure, so the
    # truncated chain's stationary law is exactly the product form restricted
    # to {0..truncation} -- including for overloaded arrival rates.
    params = MM1Params(lam=lam, mu=1.0, gamma=5.0, eta=1.0, k=2)
    env = MM1Env(params)
    theta = np.array([0.4, -0.3, 0.2])
    states, P = mm1_embedded_kernel(theta, params, truncation=25)
    solved = brute_force_stationary(P).probabilities
    expected = product_form_law(env.descriptor, states, theta)
    np.testing.assert_allclose(solved, expected, rtol=1e-10)


def test_mm1_stationary_weight_ratios():
    params = MM1Params(lam=0.7, mu=1.0, gamma=5.0, eta=1.0, k=2)
    theta = np.array([0.4, -0.3, 0.2])
    w = mm1_stationary_weights(theta, params)
    assert w[0] == 1.0
    ratio = params.lam / params.mu
    for s in range(len(w) - 1):
        rho = sigmoid(float(theta[min(s, params.k)]))
        assert w[s + 1] / w[s] == pytest.approx(ratio * rho, rel=1e-12)


def test_mm1_stationary_weights_truncate_below_tail_mass():
    params = MM1Params(lam=0.7, mu=1.0, gamma=5.0, eta=1.0, k=0)
    theta = np.array([0.3])
    w = mm1_stationary_weights(theta, params, tail_mass=1e-12)
    psi = params.lam * sigmoid(0.3) / params.mu
    tail = w[-1] * psi / (1.0 - psi)
    assert tail < 1e-12 * (w.sum() + tail)


def test_mm1_stationary_weights_reject_unstable_policies():
    params = MM1Params(lam=1.4, mu=1.0, gamma=5.0, eta=1.0, k=0)
    with pytest.raises(ConfigurationError):
        mm1_stationary_weights(np.array([2.0]), params)


def test_mm1_stationary_sample_matches_law():
    params = MM1Params(lam=0.7, mu=1.0, gamma=5.0, eta=1.0, k=0)
    theta = np.zeros(1)
    stream = UniformStream(11)
    draws = np.array([mm1_stationary_sample(theta, params, stream) for _ in range(4000)])
    # P(queue = 0) = 1 - 0.7 * sigmoid(0) = 0.65 for the geometric law.
    assert abs(np.mean(draws == 0) - 0.65) < 0.03


def test_mm1_batch_matches_transition_path():
    params = MM1Params(lam=0.7, mu=1.0, gamma=5.0, eta=1.0, k=2)
    env = MM1Env(params)
    theta = np.array([0.4, -0.3, 0.2])
    batch = env.sample_batch(theta, 0, 400, 0, UniformStream(3), with_transitions=True)
    assert batch.start_state == 0
    assert len(batch.transitions) == 400
    for t, tr in enumerate(batch.transitions):
        assert tr.state >= 0 and tr.action in (REJECT, ACCEPT)
        np.testing.assert_array_equal(
            batch.stats[t], env.descriptor.sufficient_statistic(tr.state)
        )
        np.testing.assert_allclose(
            batch.scores[t], env.policy_score(tr.state, tr.action, theta), atol=1e-15
        )
        assert batch.rewards[t] == tr.reward


def test_mm1_batch_reproducibility():
    params = MM1Params(lam=0.7, mu=1.0, gamma=5.0, eta=1.0, k=1)
    env = MM1Env(params)
    theta = np.array([0.2, -0.1])
    a = env.sample_batch(theta, 0, 200, 0, UniformStream(42))
    b = env.sample_batch(theta, 0, 200, 0, UniformStream(42))
    c = env.sample_batch(theta, 0, 200, 0, UniformStream(43))
    np.testing.assert_array_equal(a.rewards, b.rewards)
    np.testing.assert_array_equal(a.stats, b.stats)
    np.testing.assert_array_equal(a.scores, b.scores)
    assert a.final_state == b.final_state
    assert not np.array_equal(a.rewards, c.rewards)


def test_mm1_objective_and_stability_gate():
    params = MM1Params(lam=1.4, mu=1.0, gamma=5.0, eta=1.0, k=0)
    env = MM1Env(params)
    assert env.stability(np.array([-5.0])) is True
    assert isinstance(env.exact_objective(np.array([-5.0])), float)
    # sigmoid(5) * 1.4 > 1: the queue is transient and the objective undefined.
    assert env.stability(np.array([5.0])) is False
    assert env.exact_objective(np.array([5.0])) is None


def test_mm1_action_probabilities():
    params = MM1Params(lam=0.7, mu=1.0, gamma=5.0, eta=1.0, k=1)
    env = MM1Env(params)
    theta = np.array([0.8, -0.4])
    for state, block in ((0, 0), (1, 1), (7, 1)):
        probs = env.action_probabilities(state, theta)
        assert probs.sum() == pytest.approx(1.0)
        assert probs[ACCEPT] == pytest.approx(sigmoid(float(theta[block])))


# --- load balancing -----------------------------------------------------------


def test_lb_params_validation():
    with pytest.raises(ConfigurationError):
        LBParams(n_servers=0, capacity=3, lam=1.0, mu=())
    with pytest.raises(ConfigurationError):
        LBParams(n_servers=2, capacity=0, lam=1.0, mu=(1.0, 1.0))
    with pytest.raises(ConfigurationError):
        LBParams(n_servers=2, capacity=3, lam=-1.0, mu=(1.0, 1.0))
    with pytest.raises(ConfigurationError):
        LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0,))
    with pytest.raises(ConfigurationError):
        LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0, 0.0))


def test_lb_transition_rewards_track_admission():
    params = LBParams(n_servers=2, capacity=2, lam=1.0, mu=(1.0, 1.5))
    stream = UniformStream(0)
    r, nxt = lb_transition((0, 0), 0, params, stream)
    assert r == 1.0
    r_full, nxt_full = lb_transition((1, 1), 1, params, stream)
    assert r_full == 0.0  # at capacity: the job is lost
    assert sum(nxt) <= 2 and sum(nxt_full) <= 2


def test_lb_transition_validates_inputs():
    params = LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0, 1.0))
    stream = UniformStream(0)
    with pytest.raises(InvalidStateError):
        lb_transition((0,), 0, params, stream)
    with pytest.raises(InvalidStateError):
        lb_transition((-1, 0), 0, params, stream)
    with pytest.raises(InvalidStateError):
        lb_transition((2, 2), 0, params, stream)
    with pytest.raises(InvalidStateError):
        lb_transition((0, 0), 2, params, stream)


def test_lb_capacity_invariant_along_trajectories():
    params = LBParams(n_servers=3, capacity=4, lam=2.0, mu=(1.0, 2.0, 3.0))
    stream = UniformStream(7)
    state = (0, 0, 0)
    for t in range(500):
        _, state = lb_transition(state, t % 3, params, stream)
        assert all(q >= 0 for q in state)
        assert sum(state) <= params.capacity


def test_lb_enumerate_occupancies():
    states = enumerate_occupancies(2, 3)
    assert len(states) == 10  # C(2 + 3, 2)
    assert len(set(states)) == 10
    assert all(sum(s) <= 3 for s in states)
    assert len(enumerate_occupancies(3, 4)) == 35  # C(3 + 4, 3)


def test_lb_kernel_rows_are_distributions():
    params = LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0, 1.5))
    _, P = lb_embedded_kernel(np.array([0.3, -0.4]), params)
    assert P.min() >= 0.0
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_lb_kernel_stationary_law_is_product_form():
    params = LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0, 1.5))
    env = LoadBalancingEnv(params)
    theta = np.array([0.3, -0.4])
    states, P = lb_embedded_kernel(theta, params)
    solved = brute_force_stationary(P).probabilities
    expected = product_form_law(env.descriptor, states, theta)
    np.testing.assert_allclose(solved, expected, rtol=1e-10)


def test_lb_batch_matches_transition_path():
    params = LBParams(n_servers=3, capacity=5, lam=2.0, mu=(1.0, 2.0, 3.0))
    env = LoadBalancingEnv(params)
    theta = np.array([0.3, -0.4, 0.1])
    batch = env.sample_batch(theta, (0, 0, 0), 400, 0, UniformStream(5), with_transitions=True)
    pi = softmax(theta)
    for t, tr in enumerate(batch.transitions):
        np.testing.assert_array_equal(batch.stats[t], np.asarray(tr.state, dtype=float))
        expected_score = -pi.copy()
        expected_score[tr.action] += 1.0
        np.testing.assert_allclose(batch.scores[t], expected_score, atol=1e-15)
        assert batch.rewards[t] == tr.reward
        assert tr.reward == (1.0 if sum(tr.state) < params.capacity else 0.0)


def test_lb_batch_reproducibility():
    params = LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0, 1.5))
    env = LoadBalancingEnv(params)
    theta = np.array([0.3, -0.4])
    a = env.sample_batch(theta, (0, 0), 200, 0, UniformStream(9))
    b = env.sample_batch(theta, (0, 0), 200, 0, UniformStream(9))
    np.testing.assert_array_equal(a.rewards, b.rewards)
    np.testing.assert_array_equal(a.stats, b.stats)
    assert a.final_state == b.final_state


def test_lb_score_rows_annihilate_the_policy():
    # pi^T (I - 1 pi^T) = 0: the softmax score averages to zero under itself.
    params = LBParams(n_servers=4, capacity=6, lam=2.0, mu=(1.0, 2.0, 3.0, 4.0))
    env = LoadBalancingEnv(params)
    theta = np.array([0.5, -1.0, 0.2, 0.0])
    pi = softmax(theta)
    np.testing.assert_allclose(pi @ env.descriptor.log_load_jacobian(theta), 0.0, atol=1e-12)


def test_lb_env_basics():
    params = LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0, 1.5))
    env = LoadBalancingEnv(params)
    assert env.initial_state() == (0, 0)
    assert env.stability(np.array([10.0, -10.0])) is True
    np.testing.assert_allclose(
        env.action_probabilities((1, 2), np.array([0.3, -0.4])), softmax(np.array([0.3, -0.4]))
    )


# --- Glauber lattice ----------------------------------------------------------


def test_ising_params_validation():
    with pytest.raises(ConfigurationError):
        IsingParams(d1=1, d2=4, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)
    with pytest.raises(ConfigurationError):
        IsingParams(d1=2, d2=2, coupling=1.0, moment=-1.0, xi_left=-1.0, xi_right=1.0)
    with pytest.raises(ConfigurationError):
        IsingParams(d1=2, d2=2, coupling=1.0, moment=1.0, xi_left=-1.5, xi_right=1.0)


def test_ising_state_validation_and_hashing():
    spins = np.ones((2, 2), dtype=np.int8)
    a = IsingState(spins, (0, 1))
    b = IsingState(spins.copy(), (0, 1))
    c = IsingState(spins, (1, 0))
    assert a == b and hash(a) == hash(b)
    assert a != c
    with pytest.raises(ConfigurationError):
        IsingState(np.zeros((2, 2)), (0, 0))  # spins must be +/-1
    with pytest.raises(ConfigurationError):
        IsingState(spins, (2, 0))  # site out of bounds
    with pytest.raises(ConfigurationError):
        IsingState(np.ones(4, dtype=np.int8), (0, 0))  # not 2-d


def test_left_column_mask_split():
    np.testing.assert_array_equal(left_column_mask(4), [True, True, False, False])
    # Odd width: the middle column belongs to the right half (column index
    # j is "left" iff 2 * (j + 1) <= d2).
    np.testing.assert_array_equal(left_column_mask(5), [True, True, False, False, False])


def test_ising_sufficient_statistic_on_small_lattice():
    params = IsingParams(d1=2, d2=2, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)
    env = IsingEnv(params)
    all_up = IsingState(np.ones((2, 2), dtype=np.int8), (0, 0))
    # Four neighbor pairs, each contributing +1; one column per half.
    np.testing.assert_array_equal(env.descriptor.sufficient_statistic(all_up), [4.0, 2.0, 2.0])
    assert interaction_sum(all_up.spins) == 4.0
    assert half_magnetizations(all_up.spins) == (2.0, 2.0)


def test_ising_flip_probability_heat_bath_value():
    # All-up 2x2 lattice, theta = 0: beta = 1, field = 0, two neighbors of
    # (0,0) are up, so delta = 2 * 1 * 1 * (1 * 2 + 0) = 4.
    params = IsingParams(d1=2, d2=2, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)
    state = IsingState(np.ones((2, 2), dtype=np.int8), (0, 0))
    p = ising_flip_probability(state, np.zeros(3), params)
    assert p == pytest.approx(1.0 / (1.0 + np.exp(4.0)), rel=1e-12)


def test_ising_transition_reward_arithmetic():
    params = IsingParams(d1=2, d2=2, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)
    targets = (params.xi_left, params.xi_right)
    all_up = IsingState(np.ones((2, 2), dtype=np.int8), (0, 0))
    # Keep: M_left = M_right = 2, scale = 1/2 -> reward = -|-1-1| - |1-1| = -2.
    r_keep, nxt = ising_transition(all_up, KEEP, params, targets, UniformStream(0))
    assert r_keep == -2.0
    np.testing.assert_array_equal(nxt.spins, all_up.spins)
    # Flip (0,0): M_left drops to 0 -> reward = -|-1-0| - 0 = -1.
    r_flip, nxt = ising_transition(all_up, FLIP, params, targets, UniformStream(0))
    assert r_flip == -1.0
    assert nxt.spins[0, 0] == -1
    # A configuration matching both targets exactly earns reward 0.
    matched = IsingState(np.array([[-1, 1], [-1, 1]], dtype=np.int8), (0, 0))
    r_zero, _ = ising_transition(matched, KEEP, params, targets, UniformStream(0))
    assert r_zero == 0.0


def test_ising_initial_state_layout_and_reward():
    params = IsingParams(d1=2, d2=4, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)
    env = IsingEnv(params)
    state = env.initial_state()
    np.testing.assert_array_equal(state.spins[:, :2], 1)
    np.testing.assert_array_equal(state.spins[:, 2:], -1)
    assert state.site == (0, 0)
    # Spins +1 left / -1 right with targets (-1, +1) sit at maximal mismatch.
    r, _ = ising_transition(state, KEEP, params, (params.xi_left, params.xi_right), UniformStream(0))
    assert r == -4.0


def test_ising_batch_matches_transition_path():
    params = IsingParams(d1=2, d2=3, coupling=0.8, moment=1.2, xi_left=-1.0, xi_right=1.0)
    env = IsingEnv(params)
    theta = np.array([0.3, -0.2, 0.4])
    batch = env.sample_batch(
        theta, env.initial_state(), 300, 0, UniformStream(13), with_transitions=True
    )
    scale = 2.0 / (params.d1 * params.d2)
    spins = None
    for t, tr in enumerate(batch.transitions):
        np.testing.assert_allclose(
            batch.stats[t], env.descriptor.sufficient_statistic(tr.state), atol=1e-12
        )
        np.testing.assert_allclose(
            batch.scores[t], ising_policy_score(tr.state, tr.action, theta, params), atol=1e-12
        )
        # Recompute the reward from the post-action configuration.
        spins = tr.state.spins.copy()
        if tr.action == FLIP:
            i, j = tr.state.site
            spins[i, j] = -spins[i, j]
        m_left, m_right = half_magnetizations(spins)
        expected = -abs(params.xi_left - scale * m_left) - abs(params.xi_right - scale * m_right)
        assert batch.rewards[t] == pytest.approx(expected, abs=1e-12)
    np.testing.assert_array_equal(batch.final_state.spins, spins)


def test_ising_batch_reproducibility():
    params = IsingParams(d1=3, d2=4, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)
    env = IsingEnv(params)
    theta = np.array([0.1, 0.2, -0.3])
    a = env.sample_batch(theta, env.initial_state(), 150, 0, UniformStream(21))
    b = env.sample_batch(theta, env.initial_state(), 150, 0, UniformStream(21))
    np.testing.assert_array_equal(a.rewards, b.rewards)
    np.testing.assert_array_equal(a.stats, b.stats)
    np.testing.assert_array_equal(a.scores, b.scores)
    assert a.final_state == b.final_state


def test_ising_exact_objective_gate():
    small = IsingEnv(IsingParams(d1=2, d2=2, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0))
    value = small.exact_objective(np.zeros(3))
    assert isinstance(value, float)
    big = IsingEnv(IsingParams(d1=10, d2=20, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0))
    assert big.exact_objective(np.zeros(3)) is None
