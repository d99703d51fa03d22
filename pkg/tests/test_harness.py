import csv
from dataclasses import replace

import numpy as np
import pytest
import yaml

from slicedrl import cli
from slicedrl.agent import forward, load_checkpoint
from slicedrl.harness import (
    ComparisonReport, ExperimentConfig, RunResult, compare, compare_schemes, config_from_dict,
    config_to_dict, load_config, run_experiment, sweep,
)
from slicedrl.traffic import ConfigError


def quick(**radio):
    radio.setdefault("eval_epochs", 3)
    radio.setdefault("train_epochs", 40)
    return config_from_dict({"radio": radio, "sfc": {"flow_count": 300, "train_flows": 200},
                             "agent": {"batch_size": 8, "epsilon_decay_steps": 20}})


def read(path):
    return path.read_bytes()


# --- configuration -------------------------------------------------------------------


def test_defaults_are_desk_scale():
    cfg = config_from_dict({})
    assert cfg.radio.user_counts == (9, 9, 2) and cfg.radio.train_epochs == 5000
    full = config_from_dict({}, profile="full")
    assert full.radio.user_counts == (46, 46, 8) and full.radio.train_epochs == 50_000
    assert full.radio.urllc_size_scale == 1.0


@pytest.mark.parametrize("doc", [
    {"scenario": "radio", "scheme": "no_priority"},
    {"scenario": "sfc", "scheme": "hard"},
    {"scenario": "wifi"},
    {"radio": {"antennas": 4}},
    {"agent": {"gamma": 3.0}},
    {"bogus": 1},
])
def test_invalid_configs_rejected(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_unknown_profile_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({}, profile="huge")


def test_yaml_round_trip_and_seed_override(tmp_path):
    cfg = config_from_dict({"scheme": "hard", "radio": {"qoe_weight": 1.0, "user_counts": [1, 2, 3]}})
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(config_to_dict(cfg)))
    back = load_config(path, seed=7)
    assert back == replace(cfg, seed=7)
    assert back.radio.user_counts == (1, 2, 3)


def test_radio_training_overrides_learning_rate_and_scales_rewards():
    from slicedrl.harness import train_radio_agent
    cfg = quick(train_epochs=5, se_weight=0.5, qoe_weight=9.5)
    agent, _, _ = train_radio_agent(cfg)
    assert agent.cfg.learning_rate == cfg.radio.learning_rate == 3e-4
    assert agent.cfg.reward_scale == pytest.approx((1 - cfg.agent.gamma) / 10.0)
    plain, _, _ = train_radio_agent(replace(cfg, radio=replace(cfg.radio, learning_rate=None,
                                                               normalize_reward=False)))
    assert plain.cfg.learning_rate == cfg.agent.learning_rate and plain.cfg.reward_scale == 1.0
    with pytest.raises(ConfigError):
        config_from_dict({"radio": {"learning_rate": 0.0}})


# --- single runs -------------------------------------------------------------------------


def test_radio_baseline_is_deterministic(tmp_path):
    cfg = replace(quick(), scheme="hard", seed=3)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert a.metrics == b.metrics and a.trace_digest == b.trace_digest
    assert read(tmp_path / "a" / "epochs.csv") == read(tmp_path / "b" / "epochs.csv")
    header = (tmp_path / "a" / "epochs.csv").read_text().splitlines()[0]
    assert header == "epoch,w_volte_hz,w_video_hz,w_urllc_hz,se,qoe_volte,qoe_video,qoe_urllc,qoe_aggregate,reward"
    assert (tmp_path / "a" / "config.yaml").exists()


def test_sfc_no_priority_writes_one_row_per_flow(tmp_path):
    cfg = replace(config_from_dict({"scenario": "sfc", "scheme": "no_priority"}), seed=1)
    res = run_experiment(cfg, tmp_path)
    rows = list(csv.reader(open(tmp_path / "flows.csv")))
    assert rows[0] == ["arrival_time_s", "category", "sfc", "queue_time_s", "processing_time_s", "reward"]
    assert len(rows) == 1 + 10_000
    windows = list(csv.DictReader(open(tmp_path / "windows.csv")))
    assert sum(int(w["flows"]) for w in windows) == 10_000
    assert all(0.0 <= float(w["cpus"]) <= 4.5 for w in windows)
    assert res.metrics["weighted_sojourn_s"] == pytest.approx(
        -np.mean([float(r[5]) for r in rows[1:]]), rel=1e-12)


def test_radio_dql_smoke_and_checkpoint_round_trip(tmp_path):
    cfg = replace(quick(), scheme="dql", seed=2)
    res = run_experiment(cfg, tmp_path / "train")
    assert res.checkpoint is not None and res.checkpoint.exists()
    log = list(csv.DictReader(open(tmp_path / "train" / "train_log.csv")))
    assert len(log) == 40
    net, _ = load_checkpoint(res.checkpoint)
    probes = np.random.default_rng(0).random((50, 3))
    again, _ = load_checkpoint(res.checkpoint)
    assert np.array_equal(forward(net, probes), forward(again, probes))
    # evaluating the saved network reproduces the in-run evaluation
    ev = run_experiment(cfg, tmp_path / "eval", checkpoint=res.checkpoint)
    assert ev.metrics == res.metrics
    assert read(tmp_path / "train" / "epochs.csv") == read(tmp_path / "eval" / "epochs.csv")


def test_sfc_dql_smoke(tmp_path):
    cfg = replace(quick(), scenario="sfc", scheme="dql")
    res = run_experiment(cfg, tmp_path)
    assert len(list(csv.reader(open(tmp_path / "flows.csv")))) == 301
    assert res.metrics["cpus"] > 0


def test_checkpoint_requires_dql(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment(replace(quick(), scheme="hard"), checkpoint=tmp_path / "x.json")


# --- comparisons and sweeps ---------------------------------------------------------------


def test_compare_pairs_traffic_and_tabulates(tmp_path):
    report = compare_schemes(quick(), ["hard", "none", "dp_no", "dp_bw"], [0, 1], tmp_path)
    for seed in (0, 1):
        digests = {r.trace_digest for r in report.runs if r.seed == seed}
        assert len(digests) == 1
    assert report.runs[0].trace_digest != report.runs[1].trace_digest
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert len(rows) == 8
    for scheme in report.schemes:
        vals = [float(r["se"]) for r in rows if r["scheme"] == scheme]
        assert report.mean(scheme, "se") == pytest.approx(sum(vals) / len(vals), rel=1e-12)
        assert report.std(scheme, "se") >= 0


def test_identical_schemes_give_identical_rows():
    cfg = replace(quick(), scheme="hard")
    report = compare([cfg, cfg], [4])
    a, b = report.runs
    assert a.metrics == b.metrics
    assert all(row[3] == 0.0 for row in report.table())


def test_hard_and_none_agree_when_capacity_is_ample():
    cfg = quick(user_counts=(3, 0, 0), antenna_count=64, eval_epochs=5)
    report = compare_schemes(cfg, ["hard", "none"], [0, 1, 2])
    diff, se = report.paired_difference("hard", "none", "qoe_volte")
    assert report.mean("hard", "qoe_volte") > 0.99
    assert abs(diff) <= max(3 * se, 1e-3)


def test_compare_rejects_mixed_scenarios():
    with pytest.raises(ConfigError):
        compare([replace(quick(), scheme="hard"),
                 replace(quick(), scenario="sfc", scheme="no_priority")], [0])
    with pytest.raises(ConfigError):
        compare([replace(quick(), scheme="hard")], [])


def test_paired_difference():
    runs = [RunResult("a", s, "", {"m": v}) for s, v in enumerate([1.0, 2.0, 4.0])]
    runs += [RunResult("b", s, "", {"m": v}) for s, v in enumerate([0.0, 1.0, 1.0])]
    report = ComparisonReport("radio", runs)
    d, se = report.paired_difference("a", "b", "m")
    assert d == pytest.approx(5 / 3)
    assert se == pytest.approx(np.std([1, 1, 3], ddof=1) / np.sqrt(3))


def test_sweep_shapes(tmp_path):
    base = replace(quick(eval_epochs=2), scheme="hard")
    assert len(sweep(base, "qoe_weight", [1, 5000], ["hard"], [0])) == 2
    reports = sweep(base, "antenna_count", [16, 32, 64], ["hard"], [0], tmp_path)
    assert sorted(reports) == [16, 32, 64]
    assert (tmp_path / "antenna_count=16" / "summary.csv").exists()
    # more antennas never lower the achievable rate, so SE cannot drop on the same traffic
    se = [reports[m].mean("hard", "se") for m in (16, 32, 64)]
    assert se[0] <= se[1] + 1e-9 and se[1] <= se[2] + 1e-9
    with pytest.raises(ConfigError):
        sweep(base, "qoe_weight", [], ["hard"], [0])
    with pytest.raises(ConfigError):
        sweep(base, "bandwidth", [1], ["hard"], [0])


# --- command line --------------------------------------------------------------------------


def test_cli_compare_and_errors(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"scenario": "radio", "radio": {"eval_epochs": 2}}))
    out = tmp_path / "out"
    assert cli.main(["compare", "--config", str(path), "--schemes", "hard,none", "--seeds", "0", "--out", str(out)]) == 0
    assert (out / "summary.csv").exists() and (out / "hard" / "seed0" / "epochs.csv").exists()
    assert "hard" in capsys.readouterr().out
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"scenario": "sfc", "scheme": "hard"}))
    assert cli.main(["eval", "--config", str(bad), "--out", str(out)]) == 2
    assert "configuration error" in capsys.readouterr().err
