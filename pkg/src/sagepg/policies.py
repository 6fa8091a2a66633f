"""Policy parametrizations and their score functions.

Two families cover every environment in this package:

* Block softmax: the state selects a parameter block through an index map h,
  and pi(a | s, theta) is proportional to exp(theta[h(s), a]).  The score
  grad_theta log pi is (1{a = a'} - pi(a' | s, theta)) on the owning block and
  zero elsewhere.
* Single-logit threshold (two actions sharing one logit per block), used by
  admission control: pi(accept | s, theta) = sigmoid(theta[min(s, k)]), with
  score component 1{accept} - sigmoid(theta[min(s, k)]) on that block.

Deterministic-limit policies drive theta to +/- infinity, so the logistic is
evaluated in its numerically symmetric form and softmax logits are shifted by
their maximum before exponentiation.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "sigmoid",
    "softmax",
    "softmax_action_distribution",
    "block_softmax_probs",
    "softmax_score",
    "sigmoid_threshold_policy",
    "sigmoid_threshold_score",
    "BlockSoftmaxPolicy",
    "BlockSigmoidPolicy",
]


def sigmoid(z: float) -> float:
    """Logistic function, never exponentiating a positive argument."""
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax with max-subtraction; safe for logits up to +/-700 and beyond."""
    z = np.asarray(logits, dtype=float)
    w = np.exp(z - z.max())
    return w / w.sum()


def softmax_action_distribution(features: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Action distribution pi(a) proportional to exp(theta . features[a]).

    ``features`` holds one feature vector per action, shape (A, n).  Returns a
    strictly positive probability vector of length A summing to 1 (within
    floating-point roundoff).
    """
    feats = np.asarray(features, dtype=float)
    th = np.asarray(theta, dtype=float)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ConfigurationError("features must be a (n_actions, n_params) array with at least one action")
    if feats.shape[1] != th.shape[0]:
        raise ConfigurationError(
            f"feature dimension {feats.shape[1]} does not match parameter dimension {th.shape[0]}"
        )
    return softmax(feats @ th)


def block_softmax_probs(block: int, theta: np.ndarray, n_actions: int) -> np.ndarray:
    """Action distribution of a block-softmax policy at the given block."""
    th = np.asarray(theta, dtype=float)
    if n_actions < 1 or th.shape[0] % n_actions != 0:
        raise ConfigurationError("theta length must be a multiple of n_actions")
    n_blocks = th.shape[0] // n_actions
    if not 0 <= block < n_blocks:
        raise ConfigurationError(f"block {block} out of range for {n_blocks} blocks")
    return softmax(th[block * n_actions : (block + 1) * n_actions])


def softmax_score(block: int, action: int, theta: np.ndarray, n_actions: int) -> np.ndarray:
    """Score grad_theta log pi(action | block) of the block-softmax policy.

    Nonzero only on the parameter block owned by the state: component (block, a')
    equals 1{action = a'} - pi(a' | block, theta).
    """
    probs = block_softmax_probs(block, theta, n_actions)
    if not 0 <= action < n_actions:
        raise ConfigurationError(f"action {action} out of range for {n_actions} actions")
    out = np.zeros(np.asarray(theta).shape[0])
    lo = block * n_actions
    out[lo : lo + n_actions] = -probs
    out[lo + action] += 1.0
    return out


def sigmoid_threshold_policy(queue_length: int, threshold: int, theta: np.ndarray) -> float:
    """Accept probability 1/(1 + exp(-theta[min(s, k)])) of the threshold policy."""
    if queue_length < 0:
        raise ConfigurationError("queue_length must be nonnegative")
    if threshold < 0:
        raise ConfigurationError("threshold must be nonnegative")
    th = np.asarray(theta, dtype=float)
    if th.shape[0] != threshold + 1:
        raise ConfigurationError(f"theta must have length k+1 = {threshold + 1}, got {th.shape[0]}")
    return sigmoid(float(th[min(queue_length, threshold)]))


def sigmoid_threshold_score(queue_length: int, threshold: int, accept: bool, theta: np.ndarray) -> np.ndarray:
    """Score of the threshold policy: 1{accept} - sigmoid(theta_b) on block b = min(s, k)."""
    p = sigmoid_threshold_policy(queue_length, threshold, theta)
    out = np.zeros(threshold + 1)
    out[min(queue_length, threshold)] = (1.0 if accept else 0.0) - p
    return out


class BlockSoftmaxPolicy:
    """Block-softmax policy over theta laid out as n_blocks runs of n_actions logits."""

    def __init__(self, n_blocks: int, n_actions: int):
        if n_blocks < 1 or n_actions < 1:
            raise ConfigurationError("n_blocks and n_actions must be positive")
        self.n_blocks = n_blocks
        self.n_actions = n_actions

    def action_probs(self, block: int, theta: np.ndarray) -> np.ndarray:
        return block_softmax_probs(block, theta, self.n_actions)

    def score(self, block: int, action: int, theta: np.ndarray) -> np.ndarray:
        return softmax_score(block, action, theta, self.n_actions)


class BlockSigmoidPolicy:
    """Two-action policy with one shared logit per block; action 1 is accept."""

    n_actions = 2

    def __init__(self, n_blocks: int):
        if n_blocks < 1:
            raise ConfigurationError("n_blocks must be positive")
        self.n_blocks = n_blocks

    def action_probs(self, block: int, theta: np.ndarray) -> np.ndarray:
        p = sigmoid_threshold_policy(block, self.n_blocks - 1, theta)
        return np.array([1.0 - p, p])

    def score(self, block: int, action: int, theta: np.ndarray) -> np.ndarray:
        if action not in (0, 1):
            raise ConfigurationError("actions are 0 (reject) and 1 (accept)")
        return sigmoid_threshold_score(block, self.n_blocks - 1, action == 1, theta)
