"""Named invariant suites behind the ``check`` CLI subcommand.

Each suite re-runs a family of analytic identities against independent
oracles and reports per-check status; they are cheap (seconds) and meant as
a smoke layer between unit tests and full experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from .environments.ising import IsingEnv, IsingParams, ising_descriptor
from .environments.load_balancing import LBParams, enumerate_occupancies, lb_descriptor
from .environments.mm1 import MM1Env, MM1Params, mm1_descriptor
from .errors import ConfigurationError
from .estimators import Batch, MemoryState, sage_gradient, sage_gradient_memory
from .exact import (
    buzen_normalizing_constants,
    ising_chain_builder,
    ising_detailed_balance_gap,
    lb_chain_builder,
    mm1_chain_builder,
    verify_score_identity,
)
from .optimizer import ScheduleConfig, schedule_step_and_batch
from .policies import softmax

__all__ = ["CheckResult", "available_suites", "check_invariants"]


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


def _result(suite: str, name: str, passed: bool, detail: str) -> CheckResult:
    return CheckResult(suite=suite, name=name, passed=bool(passed), detail=detail)


def _suite_score_identity() -> List[CheckResult]:
    out = []
    cases = [
        (
            "mm1 k=2 lambda=0.5",
            mm1_descriptor(MM1Params(lam=0.5, mu=1.0, gamma=5.0, eta=1.0, k=2)),
            np.zeros(3),
            mm1_chain_builder(MM1Params(lam=0.5, mu=1.0, gamma=5.0, eta=1.0, k=2), truncation=60),
        ),
        (
            "load balancing n=2 c=3",
            lb_descriptor(LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0, 2.0))),
            np.array([0.3, -0.2]),
            lb_chain_builder(LBParams(n_servers=2, capacity=3, lam=1.0, mu=(1.0, 2.0))),
        ),
        (
            "ising 2x2",
            ising_descriptor(IsingParams(d1=2, d2=2, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)),
            np.array([0.1, 0.2, -0.1]),
            ising_chain_builder(IsingParams(d1=2, d2=2, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)),
        ),
    ]
    for name, descriptor, theta, builder in cases:
        err = verify_score_identity(descriptor, theta, builder)
        out.append(_result("score-identity", name, err < 1e-5, f"max abs error {err:.3e} (tolerance 1e-5)"))
    return out


def _suite_detailed_balance() -> List[CheckResult]:
    params = IsingParams(d1=2, d2=2, coupling=1.0, moment=1.0, xi_left=-1.0, xi_right=1.0)
    rng = np.random.default_rng(2024)
    out = []
    for i in range(5):
        theta = rng.normal(scale=0.7, size=3)
        gap = ising_detailed_balance_gap(theta, params)
        out.append(
            _result(
                "detailed-balance",
                f"2x2 lattice, random theta #{i}",
                gap < 1e-10,
                f"max relative gap {gap:.3e} (tolerance 1e-10)",
            )
        )
    return out


def _enumeration_constant(theta: np.ndarray, params: LBParams) -> float:
    pi = softmax(theta)
    y = params.lam * pi / np.asarray(params.mu)
    total = 0.0
    for occ in enumerate_occupancies(params.n_servers, params.capacity):
        term = 1.0
        for i, s in enumerate(occ):
            term *= y[i] ** s
        total += term
    return total


def _suite_buzen() -> List[CheckResult]:
    out = []
    frozen = buzen_normalizing_constants(
        np.zeros(2), LBParams(n_servers=2, capacity=2, lam=1.0, mu=(1.0, 1.0))
    ).normalizing_constant
    out.append(
        _result(
            "buzen",
            "frozen n=2 c=2 uniform",
            abs(frozen - 2.75) < 1e-12,
            f"Z = {frozen!r}, expected 2.75",
        )
    )
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        c = int(rng.integers(1, 5))
        params = LBParams(
            n_servers=n,
            capacity=c,
            lam=float(rng.uniform(0.5, 2.0)),
            mu=tuple(rng.uniform(0.5, 2.0, size=n)),
        )
        theta = rng.normal(size=n)
        z_rec = buzen_normalizing_constants(theta, params).normalizing_constant
        z_enum = _enumeration_constant(theta, params)
        worst = max(worst, abs(z_rec - z_enum) / z_enum)
    out.append(
        _result(
            "buzen",
            "20 random draws vs enumeration",
            worst < 1e-12,
            f"max relative error {worst:.3e} (tolerance 1e-12)",
        )
    )
    return out


def _suite_nu_zero_reduction() -> List[CheckResult]:
    from .rng import UniformStream

    out = []
    params = MM1Params(lam=0.7, mu=1.0, gamma=5.0, eta=1.0, k=1)
    env = MM1Env(params)
    theta = np.array([0.3, -0.2])
    batch = env.sample_batch(theta, 0, 64, 0, UniformStream(5))
    plain = sage_gradient(batch, theta, env.descriptor, env.policy_score)
    mem = MemoryState.fresh(0.0, env.descriptor.dim_d, env.n_params)
    memory, _ = sage_gradient_memory(batch, theta, env.descriptor, env.policy_score, mem)
    diff = float(np.max(np.abs(memory.gradient - plain.gradient)))
    out.append(
        _result(
            "nu-zero-reduction",
            "memory nu=0 equals plain estimator",
            diff < 1e-14,
            f"max abs gradient difference {diff:.3e} (tolerance 1e-14)",
        )
    )

    constant = Batch(
        epoch=0,
        transitions=None,
        start_state=0,
        final_state=batch.final_state,
        stats=batch.stats,
        scores=batch.scores,
        rewards=np.ones(len(batch.rewards)),
    )
    est = sage_gradient(constant, theta, env.descriptor, env.policy_score)
    exact_zero = bool(np.all(est.covariance == 0.0))
    out.append(
        _result(
            "nu-zero-reduction",
            "constant rewards give exactly zero covariance",
            exact_zero,
            f"covariance = {est.covariance!r}",
        )
    )
    return out


def _suite_schedule_monotonicity() -> List[CheckResult]:
    import warnings

    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = ScheduleConfig(alpha=1.0, sigma=0.75, ell=10.0, kappa=0.5, min_batch=2)
    step3, batch3 = schedule_step_and_batch(3, cfg)
    frozen_ok = abs(step3 - 0.35355) < 1e-5 and batch3 == 26
    out.append(
        _result(
            "schedule-monotonicity",
            "frozen example m=3",
            frozen_ok,
            f"(step, batch) = ({step3!r}, {batch3}), expected (0.35355, 26)",
        )
    )
    steps = []
    batches = []
    for m in range(100):
        s, b = schedule_step_and_batch(m, cfg)
        steps.append(s)
        batches.append(b)
    decreasing = all(steps[i + 1] < steps[i] for i in range(99))
    nondecreasing = all(batches[i + 1] >= batches[i] for i in range(99))
    bounded = all(b >= cfg.min_batch for b in batches)
    out.append(
        _result(
            "schedule-monotonicity",
            "steps decrease, batches nondecreasing and >= min_batch",
            decreasing and nondecreasing and bounded,
            f"checked m = 0..99 at sigma={cfg.sigma}, kappa={cfg.kappa}",
        )
    )
    return out


_SUITES: Dict[str, Callable[[], List[CheckResult]]] = {
    "score-identity": _suite_score_identity,
    "detailed-balance": _suite_detailed_balance,
    "buzen": _suite_buzen,
    "nu-zero-reduction": _suite_nu_zero_reduction,
    "schedule-monotonicity": _suite_schedule_monotonicity,
}


def available_suites() -> List[str]:
    return sorted(_SUITES)


def check_invariants(suite_name: str) -> List[CheckResult]:
    """Run one named suite; unknown names raise with the available list."""
    if suite_name not in _SUITES:
        raise ConfigurationError(
            f"unknown suite '{suite_name}'; available: {', '.join(available_suites())}"
        )
    return _SUITES[suite_name]()
