"""Exponential-family structure of stationary distributions.

The environments here all have stationary laws of the product form

    p(s | theta) = Phi(s) / Z(theta) * prod_i rho_i(theta)^{x_i(s)},

with balance function Phi, load functions rho, and sufficient statistics x of
dimension d.  The gradient of the log stationary law then has the closed form

    grad_theta log p(s | theta) = Dlogrho(theta)^T (x(s) - E[x(S)]),

where Dlogrho is the d x n Jacobian of log rho.  The partition function Z is
never stored; exact evaluators compute it on demand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .errors import ConfigurationError

__all__ = ["ExpFamilyDescriptor", "stationary_score"]


@dataclass(frozen=True)
class ExpFamilyDescriptor:
    """Product-form description of a stationary distribution.

    dim_d               dimension of the sufficient statistics
    sufficient_statistic state -> length-d vector x(s)
    log_load_jacobian   theta -> (d, n) Jacobian of log rho
    block               state -> parameter-block index h(s) of the policy
    balance_log         optional state -> log Phi(s), used by exact evaluators
    load                optional theta -> length-d positive vector rho(theta)
    """

    dim_d: int
    sufficient_statistic: Callable[[Any], np.ndarray]
    log_load_jacobian: Callable[[np.ndarray], np.ndarray]
    block: Optional[Callable[[Any], int]] = None
    balance_log: Optional[Callable[[Any], float]] = None
    load: Optional[Callable[[np.ndarray], np.ndarray]] = None


def stationary_score(
    state: Any,
    theta: np.ndarray,
    descriptor: ExpFamilyDescriptor,
    mean_stats: np.ndarray,
) -> np.ndarray:
    """Score of the stationary law: Dlogrho(theta)^T (x(state) - mean_stats).

    ``mean_stats`` must be E[x(S)] under the stationary law at theta, supplied
    by the caller either exactly or as a batch estimate.
    """
    x = np.asarray(descriptor.sufficient_statistic(state), dtype=float)
    mean = np.asarray(mean_stats, dtype=float)
    if x.shape != (descriptor.dim_d,) or mean.shape != (descriptor.dim_d,):
        raise ConfigurationError(
            f"sufficient statistic and mean_stats must both have length {descriptor.dim_d}"
        )
    jac = np.asarray(descriptor.log_load_jacobian(theta), dtype=float)
    if jac.ndim != 2 or jac.shape[0] != descriptor.dim_d:
        raise ConfigurationError(f"log_load_jacobian must return a ({descriptor.dim_d}, n) matrix")
    return jac.T @ (x - mean)
