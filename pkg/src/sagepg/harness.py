"""Configuration-driven experiment runner.

A YAML config names an environment, an estimator, the step/batch schedule,
optional regularization, seeds, and a step budget.  run_experiment executes
every seed (in parallel workers when available), writes one CSV per seed plus
an aggregate CSV (per-epoch mean and standard deviation across seeds) and a
summary.json, and returns the summary.

Config schema (all scalars optional unless noted; unknown keys are rejected):

    environment:
      kind: mm1 | load_balancing | ising   # required
      # mm1: lambda, mu, gamma, eta, k
      # load_balancing: n_servers, capacity, lambda, mu (list)
      # ising: d1, d2, coupling, moment, xi_left, xi_right
    estimator:
      kind: sage | sage_memory | actor_critic   # default sage
      nu: ...            # sage_memory only, required there
      alpha_v: 0.01      # actor_critic only
      alpha_rbar: 0.01   # actor_critic only
    schedule: {alpha, sigma, ell, kappa, min_batch}
    regularizer: {b, ref_policy, zeta}   # optional section
    seeds: [0, 1, ...]        # default 0..9
    max_steps: 1000000
    record_every: 4           # epoch stride; omitted -> log-spaced epochs
    output_dir: results
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .environments import ENVIRONMENTS
from .environments.ising import IsingParams
from .environments.load_balancing import LBParams
from .environments.mm1 import MM1Params
from .errors import ConfigurationError
from .optimizer import (
    ActorCriticEstimator,
    MemorySageEstimator,
    RegularizerConfig,
    RunRecord,
    SageEstimator,
    ScheduleConfig,
    run_policy_gradient,
)

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "load_config",
    "build_env",
    "build_estimator",
    "record_predicate",
    "run_experiment",
    "eval_exact",
    "RESULTS_SCHEMA",
    "AGGREGATE_SCHEMA",
    "OUTPUT_DIR_ENV_VAR",
]

RESULTS_SCHEMA = "sagepg-results-v1"
AGGREGATE_SCHEMA = "sagepg-aggregate-v1"
OUTPUT_DIR_ENV_VAR = "SAGEPG_OUTPUT_DIR"

EnvParams = Union[MM1Params, LBParams, IsingParams]


@dataclass(frozen=True)
class ExperimentConfig:
    environment: str
    env_params: EnvParams
    estimator: str
    estimator_options: Dict[str, float]
    schedule: ScheduleConfig
    regularizer: Optional[RegularizerConfig]
    seeds: Tuple[int, ...]
    max_steps: int
    record_every: Optional[int]
    output_dir: str


@dataclass(frozen=True)
class ResultRow:
    """One recorded epoch of one seeded run (one CSV line)."""

    seed: int
    epoch: int
    step: int
    exact_objective: Optional[float]
    running_avg_reward: float
    theta_norm: float
    stability_flag: bool
    theta: Tuple[float, ...]


# ---------------------------------------------------------------------------
# config parsing


def _line_map(text: str) -> Dict[Tuple[str, ...], int]:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: Dict[Tuple[str, ...], int] = {}

    def walk(node, path: Tuple[str, ...]):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                key_path = path + (str(key_node.value),)
                lines[key_path] = key_node.start_mark.line + 1
                walk(value_node, key_path)

    walk(root, ())
    return lines


def _key_name(path: Tuple[str, ...]) -> str:
    return ".".join(path)


class _Section:
    """One mapping level of the config, with typed lookups that name the
    offending key (and its line, when known) in every error."""

    def __init__(self, data: Dict[str, Any], path: Tuple[str, ...], lines: Dict[Tuple[str, ...], int]):
        if not isinstance(data, dict):
            raise ConfigurationError(f"{_key_name(path) or 'config'} must be a mapping")
        self.data = data
        self.path = path
        self.lines = lines

    def _where(self, key: str) -> str:
        line = self.lines.get(self.path + (key,))
        return f" (line {line})" if line else ""

    def fail(self, key: str, message: str):
        raise ConfigurationError(f"{_key_name(self.path + (key,))}{self._where(key)}: {message}")

    def reject_unknown(self, allowed: Sequence[str]):
        for key in self.data:
            if key not in allowed:
                self.fail(str(key), "unknown key")

    def has(self, key: str) -> bool:
        return key in self.data

    def subsection(self, key: str) -> "_Section":
        return _Section(self.data.get(key, {}), self.path + (key,), self.lines)

    def raw(self, key: str, default=None):
        return self.data.get(key, default)

    def string(self, key: str, choices: Sequence[str], default: Optional[str] = None) -> str:
        value = self.data.get(key, default)
        if value is None:
            self.fail(key, "required")
        if value not in choices:
            self.fail(key, f"must be one of {sorted(choices)}")
        return value

    def number(self, key: str, default: Optional[float] = None, positive: bool = False, nonnegative: bool = False) -> float:
        value = self.data.get(key, default)
        if value is None:
            self.fail(key, "required")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(key, "must be a number")
        if positive and value <= 0:
            self.fail(key, "must be positive")
        if nonnegative and value < 0:
            self.fail(key, "must be nonnegative")
        return float(value)

    def integer(self, key: str, default: Optional[int] = None, minimum: Optional[int] = None) -> int:
        value = self.data.get(key, default)
        if value is None:
            self.fail(key, "required")
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(key, "must be an integer")
        if minimum is not None and value < minimum:
            self.fail(key, f"must be at least {minimum}")
        return int(value)


def _parse_environment(section: _Section) -> Tuple[str, EnvParams]:
    kind = section.string("kind", sorted(ENVIRONMENTS))
    if kind == "mm1":
        section.reject_unknown(["kind", "lambda", "mu", "gamma", "eta", "k"])
        params = MM1Params(
            lam=section.number("lambda", default=0.7, positive=True),
            mu=section.number("mu", default=1.0, positive=True),
            gamma=section.number("gamma", default=5.0),
            eta=section.number("eta", default=1.0),
            k=section.integer("k", default=0, minimum=0),
        )
    elif kind == "load_balancing":
        section.reject_unknown(["kind", "n_servers", "capacity", "lambda", "mu"])
        n_servers = section.integer("n_servers", default=4, minimum=1)
        mu_raw = section.raw("mu", [1.0] * n_servers)
        if not isinstance(mu_raw, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in mu_raw
        ):
            section.fail("mu", "must be a list of numbers")
        if len(mu_raw) != n_servers:
            section.fail("mu", f"must have length n_servers = {n_servers}")
        if any(v <= 0 for v in mu_raw):
            section.fail("mu", "entries must be positive")
        params = LBParams(
            n_servers=n_servers,
            capacity=section.integer("capacity", default=10, minimum=1),
            lam=section.number("lambda", default=0.7 * sum(mu_raw), positive=True),
            mu=tuple(float(v) for v in mu_raw),
        )
    else:
        section.reject_unknown(["kind", "d1", "d2", "coupling", "moment", "xi_left", "xi_right"])
        xi_left = section.number("xi_left", default=-1.0)
        xi_right = section.number("xi_right", default=1.0)
        for key, value in (("xi_left", xi_left), ("xi_right", xi_right)):
            if not -1.0 <= value <= 1.0:
                section.fail(key, "must lie in [-1, 1]")
        params = IsingParams(
            d1=section.integer("d1", default=10, minimum=2),
            d2=section.integer("d2", default=20, minimum=2),
            coupling=section.number("coupling", default=1.0),
            moment=section.number("moment", default=1.0, nonnegative=True),
            xi_left=xi_left,
            xi_right=xi_right,
        )
    return kind, params


def _parse_estimator(section: _Section) -> Tuple[str, Dict[str, float]]:
    kind = section.string("kind", ["sage", "sage_memory", "actor_critic"], default="sage")
    options: Dict[str, float] = {}
    if kind == "sage":
        section.reject_unknown(["kind"])
    elif kind == "sage_memory":
        section.reject_unknown(["kind", "nu"])
        nu = section.number("nu")
        if not 0.0 <= nu <= 1.0:
            section.fail("nu", "must lie in [0, 1]")
        options["nu"] = nu
    else:
        section.reject_unknown(["kind", "alpha_v", "alpha_rbar"])
        options["alpha_v"] = section.number("alpha_v", default=1e-2, positive=True)
        options["alpha_rbar"] = section.number("alpha_rbar", default=1e-2, positive=True)
    return kind, options


def _parse_schedule(section: _Section, estimator: str) -> ScheduleConfig:
    section.reject_unknown(["alpha", "sigma", "ell", "kappa", "min_batch"])
    # actor-critic takes one tiny step per transition, so its stable step
    # size is two orders of magnitude below the batched estimators'
    default_alpha = 1e-3 if estimator == "actor_critic" else 0.1
    try:
        return ScheduleConfig(
            alpha=section.number("alpha", default=default_alpha, positive=True),
            sigma=section.number("sigma", default=0.0, nonnegative=True),
            ell=section.number("ell", default=100.0),
            kappa=section.number("kappa", default=0.0, nonnegative=True),
            min_batch=section.integer("min_batch", default=2, minimum=2),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"schedule: {exc}") from exc


def _parse_regularizer(section: _Section) -> RegularizerConfig:
    section.reject_unknown(["b", "ref_policy", "zeta"])
    b = section.number("b", nonnegative=True)
    ref_raw = section.raw("ref_policy")
    if not isinstance(ref_raw, list) or not all(isinstance(row, list) for row in ref_raw):
        section.fail("ref_policy", "must be a list of probability rows")
    zeta_raw = section.raw("zeta")
    if zeta_raw is not None and not isinstance(zeta_raw, list):
        section.fail("zeta", "must be a list of block weights")
    try:
        return RegularizerConfig(
            b=b,
            ref_policy=np.asarray(ref_raw, dtype=float),
            zeta=None if zeta_raw is None else np.asarray(zeta_raw, dtype=float),
        )
    except (ConfigurationError, ValueError) as exc:
        raise ConfigurationError(f"regularizer: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment config; unknown keys are errors."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigurationError(f"config parse error{where}: {problem}") from exc
    if data is None:
        data = {}
    lines = _line_map(text)
    top = _Section(data, (), lines)
    top.reject_unknown(
        [
            "environment",
            "estimator",
            "schedule",
            "regularizer",
            "seeds",
            "max_steps",
            "record_every",
            "output_dir",
        ]
    )
    if not top.has("environment"):
        raise ConfigurationError("environment: required section")
    environment, env_params = _parse_environment(top.subsection("environment"))
    estimator, estimator_options = _parse_estimator(top.subsection("estimator"))
    schedule = _parse_schedule(top.subsection("schedule"), estimator)

    regularizer = None
    if top.has("regularizer") and top.raw("regularizer") is not None:
        regularizer = _parse_regularizer(top.subsection("regularizer"))

    seeds_raw = top.raw("seeds", list(range(10)))
    if (
        not isinstance(seeds_raw, list)
        or not seeds_raw
        or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds_raw)
    ):
        top.fail("seeds", "must be a nonempty list of integers")

    max_steps = top.integer("max_steps", default=10**6, minimum=1)

    record_every = None
    if top.has("record_every") and top.raw("record_every") is not None:
        record_every = top.integer("record_every", minimum=1)

    output_dir = top.raw("output_dir", "results")
    if not isinstance(output_dir, str):
        top.fail("output_dir", "must be a string")

    return ExperimentConfig(
        environment=environment,
        env_params=env_params,
        estimator=estimator,
        estimator_options=estimator_options,
        schedule=schedule,
        regularizer=regularizer,
        seeds=tuple(seeds_raw),
        max_steps=max_steps,
        record_every=record_every,
        output_dir=output_dir,
    )


# ---------------------------------------------------------------------------
# experiment execution


def build_env(cfg: ExperimentConfig):
    return ENVIRONMENTS[cfg.environment](cfg.env_params)


def build_estimator(cfg: ExperimentConfig):
    """Fresh estimator instance (estimators carry per-run state)."""
    if cfg.estimator == "sage":
        return SageEstimator()
    if cfg.estimator == "sage_memory":
        return MemorySageEstimator(nu=cfg.estimator_options["nu"])
    return ActorCriticEstimator(
        alpha_v=cfg.estimator_options["alpha_v"],
        alpha_rbar=cfg.estimator_options["alpha_rbar"],
    )


def record_predicate(record_every: Optional[int]) -> Callable[[int], bool]:
    """Epoch filter: fixed stride, or log-spaced epochs (powers of 1.25)."""
    if record_every is not None:
        return lambda m: m % record_every == 0
    marks = {0}
    value = 1.0
    while value < 1e9:
        marks.add(int(value))
        value *= 1.25
    return lambda m: m in marks


def _run_seed(cfg: ExperimentConfig, seed: int) -> Tuple[List[ResultRow], Dict[str, Any]]:
    env = build_env(cfg)
    estimator = build_estimator(cfg)
    theta0 = np.zeros(env.n_params)
    record = run_policy_gradient(
        env,
        estimator,
        cfg.schedule,
        cfg.regularizer,
        theta0,
        env.initial_state(),
        cfg.max_steps,
        seed,
        record_epochs=record_predicate(cfg.record_every),
    )
    rows = []
    for epoch in record.records:
        rows.append(
            ResultRow(
                seed=seed,
                epoch=epoch.m,
                step=epoch.steps,
                exact_objective=env.exact_objective(epoch.theta),
                running_avg_reward=epoch.running_avg_reward,
                theta_norm=float(np.linalg.norm(epoch.theta)),
                stability_flag=epoch.stable,
                theta=tuple(float(v) for v in epoch.theta),
            )
        )
    last = rows[-1]
    summary = {
        "seed": seed,
        "total_steps": record.total_steps,
        "epochs": (record.records[-1].m + 1) if record.records else 0,
        "aborted": record.aborted,
        "abort_epoch": record.abort_epoch,
        "final_theta": [float(v) for v in record.final_theta],
        "final_exact_objective": last.exact_objective,
        "final_running_avg_reward": last.running_avg_reward,
        "stable_throughout": all(row.stability_flag for row in rows),
    }
    return rows, summary


def _format_value(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _write_seed_csv(path: Path, rows: List[ResultRow], n_params: int) -> None:
    header = [
        "seed",
        "epoch",
        "step",
        "exact_objective",
        "running_avg_reward",
        "theta_norm",
        "stability_flag",
    ] + [f"theta_{i}" for i in range(n_params)]
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# schema: {RESULTS_SCHEMA}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fields = [
                str(row.seed),
                str(row.epoch),
                str(row.step),
                _format_value(row.exact_objective),
                _format_value(row.running_avg_reward),
                _format_value(row.theta_norm),
                "true" if row.stability_flag else "false",
            ] + [_format_value(v) for v in row.theta]
            fh.write(",".join(fields) + "\n")


def _aggregate_rows(per_seed: List[List[ResultRow]]) -> List[Dict[str, Any]]:
    """Mean and population standard deviation per epoch across seeds, over the
    epochs present in every seed's trace."""
    common = set(row.epoch for row in per_seed[0])
    for rows in per_seed[1:]:
        common &= set(row.epoch for row in rows)
    by_epoch = []
    index = [{row.epoch: row for row in rows} for rows in per_seed]
    for epoch in sorted(common):
        group = [table[epoch] for table in index]
        entry: Dict[str, Any] = {"epoch": epoch, "step": group[0].step}
        exact = [row.exact_objective for row in group]
        if any(v is None for v in exact):
            entry["exact_objective_mean"] = None
            entry["exact_objective_std"] = None
        else:
            entry["exact_objective_mean"] = float(np.mean(exact))
            entry["exact_objective_std"] = float(np.std(exact))
        for name in ("running_avg_reward", "theta_norm"):
            values = [getattr(row, name) for row in group]
            entry[f"{name}_mean"] = float(np.mean(values))
            entry[f"{name}_std"] = float(np.std(values))
        by_epoch.append(entry)
    return by_epoch


def _write_aggregate_csv(path: Path, aggregate: List[Dict[str, Any]]) -> None:
    header = [
        "epoch",
        "step",
        "exact_objective_mean",
        "exact_objective_std",
        "running_avg_reward_mean",
        "running_avg_reward_std",
        "theta_norm_mean",
        "theta_norm_std",
    ]
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# schema: {AGGREGATE_SCHEMA}\n")
        fh.write(",".join(header) + "\n")
        for entry in aggregate:
            fields = [str(entry["epoch"]), str(entry["step"])]
            for name in header[2:]:
                fields.append(_format_value(entry[name]))
            fh.write(",".join(fields) + "\n")


def resolve_output_dir(cfg: ExperimentConfig, out_override: Optional[str] = None) -> Path:
    """Precedence: explicit override, then the environment variable, then the
    config value."""
    if out_override:
        return Path(out_override)
    env_dir = os.environ.get(OUTPUT_DIR_ENV_VAR)
    if env_dir:
        return Path(env_dir)
    return Path(cfg.output_dir)


def run_experiment(
    cfg: ExperimentConfig,
    out_override: Optional[str] = None,
    workers: Optional[int] = None,
) -> Dict[str, Any]:
    """Run all seeds, write per-seed CSVs, aggregate CSV, and summary.json.

    Aborted seeds are recorded in the summary; the other seeds still run.
    Returns the summary dict.
    """
    out_dir = resolve_output_dir(cfg, out_override)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_params = build_env(cfg).n_params

    if workers is None:
        workers = min(len(cfg.seeds), os.cpu_count() or 1)
    results: List[Tuple[List[ResultRow], Dict[str, Any]]] = []
    if workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        results = [_run_seed(cfg, seed) for seed in cfg.seeds]

    per_seed_rows = []
    run_summaries = []
    for (rows, summary), seed in zip(results, cfg.seeds):
        _write_seed_csv(out_dir / f"seed_{seed}.csv", rows, n_params)
        per_seed_rows.append(rows)
        run_summaries.append(summary)

    aggregate = _aggregate_rows(per_seed_rows)
    _write_aggregate_csv(out_dir / "aggregate.csv", aggregate)

    final = aggregate[-1] if aggregate else {}
    summary = {
        "schema": "sagepg-summary-v1",
        "environment": cfg.environment,
        "estimator": cfg.estimator,
        "seeds": list(cfg.seeds),
        "max_steps": cfg.max_steps,
        "runs": run_summaries,
        "aborted_seeds": [s["seed"] for s in run_summaries if s["aborted"]],
        "final": {
            "epoch": final.get("epoch"),
            "step": final.get("step"),
            "exact_objective_mean": final.get("exact_objective_mean"),
            "exact_objective_std": final.get("exact_objective_std"),
            "running_avg_reward_mean": final.get("running_avg_reward_mean"),
            "running_avg_reward_std": final.get("running_avg_reward_std"),
        },
    }
    with open(out_dir / "summary.json", "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def eval_exact(cfg: ExperimentConfig, theta: np.ndarray) -> Optional[float]:
    """Exact objective of the configured environment at theta, or None when
    no exact evaluator applies (large lattices, unstable queue policies)."""
    env = build_env(cfg)
    th = np.asarray(theta, dtype=float)
    if th.shape != (env.n_params,):
        raise ConfigurationError(f"theta must have length {env.n_params}")
    return env.exact_objective(th)
