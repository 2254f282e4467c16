import json
from pathlib import Path

import pytest
import yaml

from bacnsim import errors
from bacnsim.harness import load_config, oracle, run_experiment, sweep, validate
from bacnsim.harness.cli import main
from bacnsim.harness.runner import COLUMNS, parse_values, read_csv, run_seed

from .conftest import two_hop_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def raw_config(**env):
    return {
        "topology": two_hop_config(capacity=3, snr_db=5.0),
        "environment": {"deadline": 8, "episode_length": 300, **env},
        "policy": {"name": "max_link"},
        "run": {"seeds": [0, 1, 2], "episodes": 2},
    }


def write(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.graph().relays


def test_rho_out_of_range_names_key():
    raw = raw_config()
    raw["topology"]["links"][2]["rho"] = 1.5
    with pytest.raises(errors.ValidationError) as exc:
        validate(raw)
    assert [k for k, _ in exc.value.errors] == ["topology.links.2.rho"]


def test_all_errors_reported_together():
    raw = raw_config()
    raw["environment"]["deadlin"] = 4
    raw["run"]["episodes"] = 0
    raw["policy"]["name"] = "maxlink"
    with pytest.raises(errors.ValidationError) as exc:
        validate(raw)
    keys = {k for k, _ in exc.value.errors}
    assert {"environment.deadlin", "run.episodes", "policy.name"} <= keys


def test_topology_errors_surface_as_validation():
    raw = raw_config()
    raw["topology"]["links"].append({"tx": 1, "rx": 0, "avg_snr_db": 3})
    with pytest.raises(errors.ValidationError) as exc:
        validate(raw)
    assert exc.value.errors[0][0] == "topology"
    assert "DanglingNode" in exc.value.errors[0][1]


def test_unknown_hyperparameter():
    raw = raw_config()
    raw["policy"] = {"name": "ppo", "hyper": {"learning_rate": 0.1}}
    with pytest.raises(errors.ValidationError) as exc:
        validate(raw)
    assert exc.value.errors[0][0] == "policy.hyper.learning_rate"


def test_mode_and_policy_must_agree():
    raw = raw_config(mode="decentralized")
    with pytest.raises(errors.ValidationError):
        validate(raw)


def test_parse_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("topology: [unclosed\n")
    with pytest.raises(errors.ParseError):
        load_config(p)
    with pytest.raises(errors.ParseError):
        load_config(tmp_path / "missing.yaml")


def test_run_experiment_rows_and_bytes(tmp_path):
    cfg = validate(raw_config())
    rows = run_experiment(cfg, tmp_path / "a")
    assert [r["seed"] for r in rows] == [0, 1, 2]
    assert all(r["config_hash"] == cfg.config_hash() for r in rows)
    run_experiment(cfg, tmp_path / "b", workers=2)
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a.decode().splitlines()[0].split(",") == list(COLUMNS)


def test_row_reproduced_from_hash_and_seed(tmp_path):
    cfg = validate(raw_config())
    rows = run_experiment(cfg)
    assert run_seed(cfg, 1) == rows[1]


def test_sweep_cardinality_and_outputs(tmp_path):
    cfg = validate(raw_config())
    rows = sweep(cfg, "environment.deadline", [2, 4, 8, 16, 32], tmp_path)
    assert len(rows) == 5 * 3
    assert len(read_csv(tmp_path / "metrics.csv")) == 15
    long = read_csv(tmp_path / "sweep_long.csv")
    assert {r["metric"] for r in long} >= {"throughput", "mean_delay", "expiry_rate",
                                           "secrecy_outage_rate"}
    assert (tmp_path / "sweep_deadline.png").read_bytes()[:4] == b"\x89PNG"


def test_sweep_errors():
    cfg = validate(raw_config())
    with pytest.raises(errors.UnknownKey):
        sweep(cfg, "environment.beta", [1])
    with pytest.raises(errors.EmptyValues):
        sweep(cfg, "deadline", [])
    with pytest.raises(errors.EmptyValues):
        parse_values(" , ")
    assert parse_values("2, 4.5,inf") == [2, 4.5, "inf"]


def test_sweep_capacity_and_snr():
    cfg = validate(raw_config())
    rows = sweep(cfg, "capacity", [1, 4])
    assert len(rows) == 6
    rows = sweep(cfg, "snr", [0.0, 10.0])
    lo = sum(r["throughput"] for r in rows if r["value"] == 0.0)
    hi = sum(r["throughput"] for r in rows if r["value"] == 10.0)
    assert hi > lo


def test_oracle_report(tmp_path):
    raw = raw_config()
    raw["topology"] = two_hop_config(n_relays=1, capacity=1, snr_db=200.0)  # p_on == 1.0
    raw["environment"] = {"episode_length": 500}
    raw["run"] = {"seeds": [0, 1], "episodes": 2}
    rep = oracle(validate(raw), tmp_path, policies=["max_link", "random"])
    assert rep["maxlink_exact_outage"] == pytest.approx(0.0, abs=1e-12)
    assert rep["optimal_avg_reward"] == pytest.approx(0.5, abs=1e-6)
    for g in rep["policies"]:
        assert g["gap"] >= -3 * g["se"] - 1e-9
    assert json.loads((tmp_path / "oracle.json").read_text())["states"] == 2 * 4


def test_cli_simulate_and_errors(tmp_path, capsys):
    p = write(tmp_path, raw_config())
    assert main(["simulate", str(p), "--out", str(tmp_path / "o"), "--seed", "4"]) == 0
    rows = read_csv(tmp_path / "o" / "metrics.csv")
    assert [r["seed"] for r in rows] == ["4"]
    bad = raw_config()
    bad["run"]["bogus"] = 1
    assert main(["simulate", str(write(tmp_path, bad, "bad.yaml"))]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValidationError" and err["errors"][0]["key"] == "run.bogus"
    assert main(["sweep", str(p), "--param", "nope", "--values", "1"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UnknownKey"
    assert main(["train", str(p)]) == 2


def test_cli_train_then_evaluate(tmp_path):
    raw = raw_config()
    raw["policy"] = {"name": "ppo", "hyper": {"episodes": 1, "rollout": 64, "minibatch": 32}}
    raw["run"] = {"seeds": [0], "episodes": 1}
    p = write(tmp_path, raw)
    out = tmp_path / "t"
    assert main(["train", str(p), "--out", str(out)]) == 0
    pol = out / "ppo_seed0.pol"
    report = json.loads((out / "ppo_seed0.train.json").read_text())
    assert report["config_hash"] and report["seed"] >= 0 and "throughput" in report["evaluation"]
    assert main(["evaluate", str(p), "--policy", str(pol), "--out", str(tmp_path / "e")]) == 0
    assert read_csv(out / "metrics.csv") == read_csv(tmp_path / "e" / "metrics.csv")


def test_cli_oracle(tmp_path, capsys):
    raw = raw_config()
    raw["topology"] = two_hop_config(n_relays=1, capacity=1, snr_db=10.0)
    raw["run"] = {"seeds": [0], "episodes": 1, "eval_slots": 200}
    assert main(["oracle", str(write(tmp_path, raw)), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["optimal_avg_reward"] == pytest.approx(0.4524187, abs=1e-6)


def test_shared_training_writes_one_policy(tmp_path):
    raw = raw_config()
    raw["policy"] = {"name": "dqn", "train_seed": 7,
                     "hyper": {"episodes": 1, "learning_starts": 10}}
    cfg = validate(raw)
    rows = run_experiment(cfg, tmp_path)
    assert [r["seed"] for r in rows] == [0, 1, 2]
    assert sorted(p.name for p in tmp_path.glob("*.pol")) == ["dqn_train7.pol"]
