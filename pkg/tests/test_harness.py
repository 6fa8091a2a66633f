"""Config parsing, experiment execution, and result files."""

import json

import numpy as np
import pytest

from sagepg.errors import ConfigurationError
from sagepg.harness import (
    AGGREGATE_SCHEMA,
    OUTPUT_DIR_ENV_VAR,
    RESULTS_SCHEMA,
    build_env,
    build_estimator,
    eval_exact,
    load_config,
    record_predicate,
    resolve_output_dir,
    run_experiment,
)
from sagepg.optimizer import ActorCriticEstimator, MemorySageEstimator, SageEstimator

pytestmark = pytest.mark.filterwarnings("ignore:schedule outside")


def write_config(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


SMALL_MM1 = """\
environment:
  kind: mm1
  lambda: 0.7
  k: 0
schedule:
  alpha: 0.05
  ell: 50
seeds: [0, 1, 2]
max_steps: 600
record_every: 2
"""


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# schema: ")
    header = lines[1].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[2:]]
    return lines[0].split(": ")[1], header, rows


# --- config parsing -------------------------------------------------------------


def test_full_config_round_trip(tmp_path):
    path = write_config(
        tmp_path,
        """\
environment:
  kind: load_balancing
  n_servers: 2
  capacity: 3
  lambda: 1.5
  mu: [1.0, 2.0]
estimator:
  kind: sage_memory
  nu: 0.5
schedule:
  alpha: 0.2
  sigma: 0.75
  ell: 10
  kappa: 0.5
  min_batch: 4
regularizer:
  b: 0.1
  ref_policy: [[0.7, 0.3]]
  zeta: [1.0]
seeds: [3, 5]
max_steps: 1234
record_every: 7
output_dir: out/lb
""",
    )
    cfg = load_config(path)
    assert cfg.environment == "load_balancing"
    assert cfg.env_params.n_servers == 2
    assert cfg.env_params.capacity == 3
    assert cfg.env_params.lam == 1.5
    assert cfg.env_params.mu == (1.0, 2.0)
    assert cfg.estimator == "sage_memory"
    assert cfg.estimator_options == {"nu": 0.5}
    assert (cfg.schedule.alpha, cfg.schedule.sigma) == (0.2, 0.75)
    assert (cfg.schedule.ell, cfg.schedule.kappa, cfg.schedule.min_batch) == (10.0, 0.5, 4)
    assert cfg.regularizer.b == 0.1
    np.testing.assert_allclose(cfg.regularizer.ref_policy, [[0.7, 0.3]])
    np.testing.assert_allclose(cfg.regularizer.zeta, [1.0])
    assert cfg.seeds == (3, 5)
    assert cfg.max_steps == 1234
    assert cfg.record_every == 7
    assert cfg.output_dir == "out/lb"


def test_minimal_config_defaults(tmp_path):
    cfg = load_config(write_config(tmp_path, "environment: {kind: mm1}\n"))
    assert cfg.environment == "mm1"
    assert (cfg.env_params.lam, cfg.env_params.mu) == (0.7, 1.0)
    assert (cfg.env_params.gamma, cfg.env_params.eta, cfg.env_params.k) == (5.0, 1.0, 0)
    assert cfg.estimator == "sage"
    assert (cfg.schedule.alpha, cfg.schedule.sigma) == (0.1, 0.0)
    assert (cfg.schedule.ell, cfg.schedule.min_batch) == (100.0, 2)
    assert cfg.regularizer is None
    assert cfg.seeds == tuple(range(10))
    assert cfg.max_steps == 10**6
    assert cfg.record_every is None
    assert cfg.output_dir == "results"


def test_actor_critic_default_step_size(tmp_path):
    cfg = load_config(
        write_config(tmp_path, "environment: {kind: mm1}\nestimator: {kind: actor_critic}\n")
    )
    assert cfg.schedule.alpha == 1e-3
    assert cfg.estimator_options == {"alpha_v": 1e-2, "alpha_rbar": 1e-2}


def test_ising_config_defaults(tmp_path):
    cfg = load_config(write_config(tmp_path, "environment: {kind: ising}\n"))
    assert (cfg.env_params.d1, cfg.env_params.d2) == (10, 20)
    assert (cfg.env_params.xi_left, cfg.env_params.xi_right) == (-1.0, 1.0)


def test_unknown_keys_are_rejected_with_location(tmp_path):
    path = write_config(
        tmp_path,
        "environment:\n  kind: mm1\n  bogus_rate: 3\n",
    )
    with pytest.raises(ConfigurationError, match=r"environment\.bogus_rate \(line 3\)"):
        load_config(path)
    with pytest.raises(ConfigurationError, match="unknown key"):
        load_config(write_config(tmp_path, "environment: {kind: mm1}\nextra: 1\n", "b.yaml"))


@pytest.mark.parametrize(
    "snippet,match",
    [
        ("environment: {kind: parking_lot}\n", "must be one of"),
        ("environment: {kind: mm1, lambda: 0}\n", "positive"),
        ("environment: {kind: mm1, k: -1}\n", "at least 0"),
        ("environment: {kind: load_balancing, n_servers: 2, mu: [1.0]}\n", "length"),
        ("environment: {kind: load_balancing, mu: [1, true, 1, 1]}\n", "numbers"),
        ("environment: {kind: ising, xi_left: 2}\n", r"\[-1, 1\]"),
        ("environment: {kind: mm1}\nestimator: {kind: sage_memory}\n", "required"),
        ("environment: {kind: mm1}\nestimator: {kind: sage_memory, nu: 1.5}\n", r"\[0, 1\]"),
        ("environment: {kind: mm1}\nestimator: {kind: actor_critic, alpha_v: 0}\n", "positive"),
        ("environment: {kind: mm1}\nschedule: {min_batch: 1}\n", "min_batch"),
        ("environment: {kind: mm1}\nseeds: []\n", "nonempty"),
        ("environment: {kind: mm1}\nseeds: [0, nope]\n", "integers"),
        ("environment: {kind: mm1}\nmax_steps: 0\n", "at least 1"),
        ("environment: {kind: mm1}\nrecord_every: 0\n", "at least 1"),
        ("environment: {kind: mm1}\noutput_dir: 3\n", "string"),
        ("environment: {kind: mm1}\nregularizer: {b: 0.1, ref_policy: 4}\n", "probability rows"),
        ("", "environment"),
    ],
)
def test_invalid_configs_are_rejected(tmp_path, snippet, match):
    with pytest.raises(ConfigurationError, match=match):
        load_config(write_config(tmp_path, snippet))


def test_yaml_syntax_errors_are_wrapped(tmp_path):
    path = write_config(tmp_path, "environment: {kind: mm1\n")
    with pytest.raises(ConfigurationError, match="config parse error"):
        load_config(path)


def test_build_estimator_kinds(tmp_path):
    base = "environment: {kind: mm1}\n"
    cfg = load_config(write_config(tmp_path, base))
    assert isinstance(build_estimator(cfg), SageEstimator)
    cfg = load_config(write_config(tmp_path, base + "estimator: {kind: sage_memory, nu: 0.3}\n", "m.yaml"))
    est = build_estimator(cfg)
    assert isinstance(est, MemorySageEstimator) and est.nu == 0.3
    cfg = load_config(write_config(tmp_path, base + "estimator: {kind: actor_critic}\n", "a.yaml"))
    assert isinstance(build_estimator(cfg), ActorCriticEstimator)


def test_record_predicate_stride_and_log_spacing():
    stride = record_predicate(4)
    assert [m for m in range(13) if stride(m)] == [0, 4, 8, 12]
    log = record_predicate(None)
    assert log(0) and log(1) and log(44)
    assert not log(6) and not log(10)
    recorded = [m for m in range(2000) if log(m)]
    assert len(recorded) < 60  # log-spacing keeps traces small
    tail = [m for m in recorded if m >= 9]
    ratios = [b / a for a, b in zip(tail, tail[1:])]
    assert all(1.0 < r <= 1.3 for r in ratios)  # roughly geometric


# --- experiment execution --------------------------------------------------------


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("small_run")
    cfg = load_config(write_config(tmp, SMALL_MM1))
    out = tmp / "results"
    summary = run_experiment(cfg, out_override=str(out), workers=1)
    return cfg, out, summary


def test_run_experiment_writes_all_artifacts(small_run):
    cfg, out, summary = small_run
    assert summary["schema"] == "sagepg-summary-v1"
    assert summary["environment"] == "mm1"
    assert summary["estimator"] == "sage"
    assert summary["seeds"] == [0, 1, 2]
    assert summary["aborted_seeds"] == []
    assert len(summary["runs"]) == 3
    for run in summary["runs"]:
        assert run["total_steps"] >= 600
        assert run["aborted"] is None
        assert run["stable_throughout"] is True
    for name in ("seed_0.csv", "seed_1.csv", "seed_2.csv", "aggregate.csv", "summary.json"):
        assert (out / name).exists()
    assert json.loads((out / "summary.json").read_text()) == summary


def test_seed_csv_layout(small_run):
    cfg, out, _ = small_run
    schema, header, rows = read_csv(out / "seed_1.csv")
    assert schema == RESULTS_SCHEMA
    assert header == [
        "seed", "epoch", "step", "exact_objective", "running_avg_reward",
        "theta_norm", "stability_flag", "theta_0",
    ]
    assert all(row["seed"] == "1" for row in rows)
    epochs = [int(row["epoch"]) for row in rows]
    assert epochs == sorted(epochs)
    assert all(m % 2 == 0 for m in epochs[:-1])  # stride 2, final epoch always kept
    steps = [int(row["step"]) for row in rows]
    assert steps[-1] >= 600
    assert all(row["stability_flag"] in ("true", "false") for row in rows)
    for row in rows:
        assert float(row["exact_objective"]) == pytest.approx(
            eval_exact(cfg, np.array([float(row["theta_0"])]))
        )
        assert float(row["theta_norm"]) == pytest.approx(abs(float(row["theta_0"])))


def test_aggregate_csv_recomputes_from_seed_csvs(small_run):
    _, out, _ = small_run
    schema, header, agg_rows = read_csv(out / "aggregate.csv")
    assert schema == AGGREGATE_SCHEMA
    assert header == [
        "epoch", "step", "exact_objective_mean", "exact_objective_std",
        "running_avg_reward_mean", "running_avg_reward_std",
        "theta_norm_mean", "theta_norm_std",
    ]
    per_seed = [read_csv(out / f"seed_{s}.csv")[2] for s in (0, 1, 2)]
    by_epoch = [{int(r["epoch"]): r for r in rows} for rows in per_seed]
    for agg in agg_rows:
        epoch = int(agg["epoch"])
        group = [table[epoch] for table in by_epoch]
        for name in ("exact_objective", "running_avg_reward", "theta_norm"):
            values = [float(r[name]) for r in group]
            assert float(agg[f"{name}_mean"]) == pytest.approx(np.mean(values), abs=1e-12)
            assert float(agg[f"{name}_std"]) == pytest.approx(np.std(values), abs=1e-12)


def test_reruns_are_byte_identical(small_run, tmp_path):
    cfg, out, _ = small_run
    rerun = tmp_path / "rerun"
    run_experiment(cfg, out_override=str(rerun), workers=1)
    for name in ("seed_0.csv", "seed_1.csv", "seed_2.csv", "aggregate.csv", "summary.json"):
        assert (rerun / name).read_bytes() == (out / name).read_bytes()


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = load_config(write_config(tmp_path, SMALL_MM1))
    assert resolve_output_dir(cfg) == __import__("pathlib").Path("results")
    monkeypatch.setenv(OUTPUT_DIR_ENV_VAR, str(tmp_path / "from_env"))
    assert resolve_output_dir(cfg) == tmp_path / "from_env"
    assert resolve_output_dir(cfg, str(tmp_path / "explicit")) == tmp_path / "explicit"


def test_eval_exact_checks_theta_shape(tmp_path):
    cfg = load_config(write_config(tmp_path, "environment: {kind: mm1}\n"))
    assert eval_exact(cfg, np.zeros(1)) == pytest.approx(45.0 / 26.0, rel=1e-12)
    with pytest.raises(ConfigurationError, match="length 1"):
        eval_exact(cfg, np.zeros(2))


def test_environment_registry(tmp_path):
    for kind in ("mm1", "load_balancing", "ising"):
        cfg = load_config(write_config(tmp_path, f"environment: {{kind: {kind}}}\n", f"{kind}.yaml"))
        env = build_env(cfg)
        assert env.name == kind
