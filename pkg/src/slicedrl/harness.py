"""Experiment orchestration: configs, seeded runs, paired comparisons, sweeps.

Every run derives three generators from its seed: stream 1 drives the
evaluation environment (placement, traffic, fading), stream 2 the training
environment and stream 3 the agent. Schemes that share a seed therefore see
identical evaluation traffic, which each run records as a trace checksum.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .agent import AgentConfig, DQNAgent, forward, load_checkpoint, run_training, save_checkpoint
from .baselines import (DEFAULT_GRANULARITY, DemandPredictor, RequiredRates, dp_bw_allocation,
                        dp_no_allocation, hard_slicing, no_priority_assign)
from .channel import LinkConfig
from .radio_env import RadioEnv, RadioEnvConfig, RadioSlicingTask, RewardConfig
from .sfc_env import SfcEnvConfig, SfcRewardConfig, SfcTask, cpu_utilization
from .traffic import Category, ConfigError, default_flow_models, default_slices, generate_flow_trace

log = logging.getLogger(__name__)

RADIO_SCHEMES = ("dql", "dp_no", "dp_bw", "hard", "none")
SFC_SCHEMES = ("dql", "no_priority")
SWEEP_AXES = ("qoe_weight", "antenna_count")

EVAL_STREAM, TRAIN_STREAM, AGENT_STREAM = 1, 2, 3


@dataclass
class RadioSettings:
    user_counts: tuple[int, int, int] = (9, 9, 2)
    urllc_size_scale: float = 64.0
    antenna_count: int = 32
    total_bandwidth: float = 10e6
    action_granularity: float = 1e6
    baseline_granularity: float = DEFAULT_GRANULARITY
    se_weight: float = 0.1
    qoe_weight: float = 5000.0
    aggregate: str = "slice_mean"
    se_measure: str = "delivered"  # or "granted_capacity"
    drop_expired: bool = True
    train_epochs: int = 5000
    eval_epochs: int = 100
    normalize_reward: bool = True  # scale training rewards by (1 - gamma) / (se_weight + qoe_weight)
    learning_rate: float | None = 3e-4  # replaces agent.learning_rate for radio training when set
    predictor: str = "exponential_smoothing"
    smoothing_factor: float = 0.5
    window: int = 5


@dataclass
class SfcSettings:
    flow_count: int = 10_000
    train_flows: int = 30_000
    mean_gap: float = 0.02
    gap_sigma: float = 0.5
    category_weights: tuple[float, float, float] = (3.0, 2.0, 1.0)
    cpu_budget: float | None = None
    window: float = 1.0


@dataclass
class ExperimentConfig:
    scenario: str = "radio"
    scheme: str = "dql"
    seed: int = 0
    profile: str = "desk"
    radio: RadioSettings = field(default_factory=RadioSettings)
    sfc: SfcSettings = field(default_factory=SfcSettings)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def validate(self) -> ExperimentConfig:
        allowed = {"radio": RADIO_SCHEMES, "sfc": SFC_SCHEMES}
        if self.scenario not in allowed:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.scheme not in allowed[self.scenario]:
            raise ConfigError(f"scheme {self.scheme!r} is not valid for scenario {self.scenario!r}; "
                              f"choose from {allowed[self.scenario]}")
        if self.radio.train_epochs < 1 or self.radio.eval_epochs < 1:
            raise ConfigError("radio epochs must be >= 1")
        RewardConfig(self.radio.se_weight, self.radio.qoe_weight, self.radio.aggregate, self.radio.se_measure)
        if self.radio.learning_rate is not None and not self.radio.learning_rate > 0:
            raise ConfigError("radio learning_rate must be positive")
        if self.sfc.flow_count < 1 or self.sfc.train_flows < 1:
            raise ConfigError("flow counts must be >= 1")
        return self


# profile overrides, applied before the config file
PROFILES = {
    "desk": {},
    "full": {"radio": {"user_counts": (46, 46, 8), "urllc_size_scale": 1.0,
                       "train_epochs": 50_000, "aggregate": "pooled"},
             "sfc": {"train_flows": 100_000}},
}


def _merge(obj, updates: dict, where: str):
    names = {f.name for f in dataclasses.fields(obj)}
    unknown = set(updates) - names
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    kw = {}
    for k, v in updates.items():
        cur = getattr(obj, k)
        if dataclasses.is_dataclass(cur):
            kw[k] = _merge(cur, v or {}, f"{where}.{k}")
        else:
            kw[k] = tuple(v) if isinstance(cur, tuple) and isinstance(v, list) else v
    try:
        return replace(obj, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where} settings: {exc}") from exc


def config_from_dict(doc: dict | None, profile: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Defaults, then the profile, then ``doc``; ``seed`` wins over the document."""
    doc = dict(doc or {})
    profile = profile or doc.pop("profile", None) or "desk"
    doc.pop("profile", None)
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    cfg = _merge(ExperimentConfig(profile=profile), PROFILES[profile], "config")
    cfg = _merge(cfg, doc, "config")
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    return cfg.validate()


def load_config(path, profile: str | None = None, seed: int | None = None) -> ExperimentConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(doc, profile, seed)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(x):
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [plain(v) for v in x]
        return x
    return plain(dataclasses.asdict(cfg))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


# ---------------------------------------------------------------------------
# radio scenario

EPOCH_HEADER = ["epoch", "w_volte_hz", "w_video_hz", "w_urllc_hz", "se",
                "qoe_volte", "qoe_video", "qoe_urllc", "qoe_aggregate", "reward"]


def radio_env_config(cfg: ExperimentConfig, slicing: bool = True) -> RadioEnvConfig:
    r = cfg.radio
    return RadioEnvConfig(
        slices=default_slices(r.user_counts, r.urllc_size_scale),
        link=LinkConfig(antenna_count=r.antenna_count),
        total_bandwidth=r.total_bandwidth,
        granularity=r.action_granularity,
        reward=RewardConfig(r.se_weight, r.qoe_weight, r.aggregate, r.se_measure),
        drop_expired=r.drop_expired,
        slicing=slicing,
    )


def _epoch_row(epoch: int, m) -> list:
    # no-slicing epochs report the bandwidth actually granted to each slice
    w = m.allocated.per_slice if m.allocated is not None else m.granted_mean
    return [epoch, *w, m.se, *m.qoe_per_slice, m.qoe_aggregate, m.reward]


def train_radio_agent(cfg: ExperimentConfig, callback=None):
    env = RadioEnv(radio_env_config(cfg), _rng(cfg.seed, TRAIN_STREAM))
    task = RadioSlicingTask(env)
    acfg = cfg.agent
    if cfg.radio.learning_rate is not None:
        acfg = replace(acfg, learning_rate=cfg.radio.learning_rate)
    if cfg.radio.normalize_reward:
        # keeps discounted returns near one whatever the weights; argmax is unchanged
        scale = (1.0 - acfg.gamma) / (cfg.radio.se_weight + cfg.radio.qoe_weight)
        acfg = replace(acfg, reward_scale=acfg.reward_scale * scale)
    agent, records = run_training(task, acfg, cfg.radio.train_epochs, _rng(cfg.seed, AGENT_STREAM),
                                  callback=callback)
    return agent, task, records


def _radio_policy(cfg: ExperimentConfig, agent: DQNAgent | None, task: RadioSlicingTask):
    r = cfg.radio
    W = r.total_bandwidth
    g = r.baseline_granularity
    if cfg.scheme == "dql":
        return lambda counts: task.actions[agent.greedy(task.observe())]
    if cfg.scheme == "hard":
        alloc = hard_slicing(W, len(r.user_counts), g)
        return lambda counts: alloc
    if cfg.scheme == "none":
        return lambda counts: None
    predictor = DemandPredictor(r.predictor, r.smoothing_factor, r.window)
    rates = RequiredRates()

    def dp(counts):
        if counts is None:
            return hard_slicing(W, len(r.user_counts), g)
        pred = predictor.update(counts)
        if cfg.scheme == "dp_no":
            return dp_no_allocation(pred, W, g)
        return dp_bw_allocation(pred, rates, W, g)
    return dp


def evaluate_radio(cfg: ExperimentConfig, agent: DQNAgent | None = None):
    env = RadioEnv(radio_env_config(cfg, slicing=cfg.scheme != "none"), _rng(cfg.seed, EVAL_STREAM))
    task = RadioSlicingTask(env)
    policy = _radio_policy(cfg, agent, task)
    counts = None
    for _ in range(cfg.radio.eval_epochs):
        counts, m = env.step(policy(counts))
        task.history.append(m)
        task.counts = np.asarray(counts, dtype=float)
    return task.history, env.trace_hash.hexdigest()


def _radio_summary(history) -> dict:
    rows = np.array([_epoch_row(i, m)[1:] for i, m in enumerate(history)], dtype=float)
    means = rows.mean(axis=0)
    return dict(zip(EPOCH_HEADER[1:], means.tolist()))


def _run_radio(cfg: ExperimentConfig, out: Path | None, agent: DQNAgent | None):
    train_rows = None
    if cfg.scheme == "dql" and agent is None:
        def progress(rec):
            if (rec.episode + 1) % 1000 == 0:
                log.info("seed %d: %d/%d training epochs", cfg.seed, rec.episode + 1, cfg.radio.train_epochs)
        agent, task, records = train_radio_agent(cfg, progress)
        train_rows = [_epoch_row(i, m) + [rec.epsilon, "" if rec.loss is None else rec.loss]
                      for i, (m, rec) in enumerate(zip(task.history, records))]
    history, digest = evaluate_radio(cfg, agent)
    if out is not None:
        write_csv(out / "epochs.csv", EPOCH_HEADER, [_epoch_row(i, m) for i, m in enumerate(history)])
        if train_rows is not None:
            write_csv(out / "train_log.csv", EPOCH_HEADER + ["epsilon", "loss"], train_rows)
    return _radio_summary(history), digest, agent


# ---------------------------------------------------------------------------
# SFC scenario

FLOW_HEADER = ["arrival_time_s", "category", "sfc", "queue_time_s", "processing_time_s", "reward"]
WINDOW_HEADER = ["window_start_s", "flows", "mean_sojourn_s", "cpus"]


def sfc_env_config(cfg: ExperimentConfig) -> SfcEnvConfig:
    return SfcEnvConfig(reward=SfcRewardConfig(tuple(cfg.sfc.category_weights)), cpu_budget=cfg.sfc.cpu_budget)


def flow_trace(cfg: ExperimentConfig, stream: int, count: int):
    models = default_flow_models(cfg.sfc.mean_gap, cfg.sfc.gap_sigma)
    return generate_flow_trace(models, count, _rng(cfg.seed, stream))


def train_sfc_agent(cfg: ExperimentConfig, callback=None):
    task = SfcTask(flow_trace(cfg, TRAIN_STREAM, cfg.sfc.train_flows), sfc_env_config(cfg))
    agent, records = run_training(task, cfg.agent, cfg.sfc.train_flows, _rng(cfg.seed, AGENT_STREAM),
                                  callback=callback)
    return agent, task, records


def evaluate_sfc(cfg: ExperimentConfig, agent: DQNAgent | None = None) -> tuple[SfcTask, str]:
    trace = flow_trace(cfg, EVAL_STREAM, cfg.sfc.flow_count)
    task = SfcTask(trace, sfc_env_config(cfg))
    while not task.done:
        if cfg.scheme == "dql":
            a = agent.greedy(task.observe())
        else:
            cat, now = task.current_flow()
            a = no_priority_assign(task.system, cat, now)
        task.step(a)
    return task, trace.digest().hexdigest()


def sfc_windows(task: SfcTask, width: float) -> list[list]:
    flows = task.system.flows
    end = max(f.completion_time for f in flows)
    costs = [s.cpu_cost for s in task.system.specs]
    logs = task.system.busy_logs()
    n_win = max(1, math.ceil(end / width))
    arrival = np.array([f.arrival_time for f in flows])
    sojourn = np.array([f.sojourn for f in flows])
    idx = np.minimum((arrival // width).astype(np.int64), n_win - 1)
    rows = []
    for k in range(n_win):
        sel = idx == k
        mean = float(sojourn[sel].mean()) if sel.any() else 0.0
        rows.append([k * width, int(sel.sum()), mean, cpu_utilization(logs, costs, k * width, (k + 1) * width)])
    return rows


def _sfc_summary(task: SfcTask) -> dict:
    w = task.cfg.reward.category_weights
    flows = sorted(task.system.flows, key=lambda f: f.index)
    cat = np.array([f.category for f in flows])
    soj = np.array([f.sojourn for f in flows])
    weighted = np.array([w[c] for c in cat]) * soj
    end = max(f.completion_time for f in flows)
    costs = [s.cpu_cost for s in task.system.specs]
    out = {"mean_sojourn_s": float(soj.mean()), "weighted_sojourn_s": float(weighted.mean())}
    for c in Category:
        sel = cat == c
        out[f"weighted_sojourn_{c.name}_s"] = float(weighted[sel].mean()) if sel.any() else 0.0
    for i, spec in enumerate(task.system.specs):
        out[f"share_{spec.name}"] = float(np.mean([f.assigned_sfc == i for f in flows]))
    out["cpus"] = cpu_utilization(task.system.busy_logs(), costs, 0.0, end)
    return out


def _run_sfc(cfg: ExperimentConfig, out: Path | None, agent: DQNAgent | None):
    if cfg.scheme == "dql" and agent is None:
        agent, _, _ = train_sfc_agent(cfg)
    task, digest = evaluate_sfc(cfg, agent)
    if out is not None:
        names = [s.name for s in task.system.specs]
        flows = sorted(task.system.flows, key=lambda f: f.index)
        write_csv(out / "flows.csv", FLOW_HEADER,
                  [[f.arrival_time, Category(f.category).name, names[f.assigned_sfc], f.queue_time,
                    f.processing_time, -task.cfg.reward.category_weights[f.category] * f.sojourn]
                   for f in flows])
        write_csv(out / "windows.csv", WINDOW_HEADER, sfc_windows(task, cfg.sfc.window))
    return _sfc_summary(task), digest, agent


# ---------------------------------------------------------------------------
# runs, comparisons, sweeps


@dataclass
class RunResult:
    scheme: str
    seed: int
    trace_digest: str
    metrics: dict
    checkpoint: Path | None = None


def run_experiment(cfg: ExperimentConfig, out_dir=None, checkpoint=None) -> RunResult:
    """Train (dql) or directly evaluate (baselines) one (scheme, seed) pair.

    With ``out_dir`` the per-epoch or per-flow CSVs, a config echo and,
    for dql, ``checkpoint.json`` are written there. ``checkpoint`` evaluates a
    saved network instead of training.
    """
    cfg.validate()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.yaml", "w") as fh:
            yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)
    agent = None
    if checkpoint is not None:
        if cfg.scheme != "dql":
            raise ConfigError("a checkpoint can only be evaluated with scheme 'dql'")
        net, _ = load_checkpoint(checkpoint)
        agent = _FrozenAgent(net)
    runner = _run_radio if cfg.scenario == "radio" else _run_sfc
    metrics, digest, agent = runner(cfg, out, agent)
    ckpt = None
    if out is not None and cfg.scheme == "dql" and checkpoint is None:
        ckpt = out / "checkpoint.json"
        save_checkpoint(agent.net, ckpt, agent.cfg)
    return RunResult(cfg.scheme, cfg.seed, digest, metrics, ckpt)


class _FrozenAgent:
    def __init__(self, net):
        self.net = net

    def greedy(self, state) -> int:
        return int(np.argmax(forward(self.net, state)))


@dataclass
class ComparisonReport:
    scenario: str
    runs: list[RunResult]

    @property
    def schemes(self) -> list[str]:
        return list(dict.fromkeys(r.scheme for r in self.runs))

    @property
    def metrics(self) -> list[str]:
        return list(self.runs[0].metrics)

    def values(self, scheme: str, metric: str) -> np.ndarray:
        rs = sorted((r for r in self.runs if r.scheme == scheme), key=lambda r: r.seed)
        return np.array([r.metrics[metric] for r in rs])

    def mean(self, scheme: str, metric: str) -> float:
        return float(np.mean(self.values(scheme, metric)))

    def std(self, scheme: str, metric: str) -> float:
        v = self.values(scheme, metric)
        return float(np.std(v, ddof=1)) if v.size > 1 else 0.0

    def paired_difference(self, a: str, b: str, metric: str) -> tuple[float, float]:
        """Mean and standard error of the per-seed difference a - b."""
        d = self.values(a, metric) - self.values(b, metric)
        se = float(np.std(d, ddof=1) / np.sqrt(d.size)) if d.size > 1 else 0.0
        return float(d.mean()), se

    def table(self) -> list[list]:
        return [[s, m, self.mean(s, m), self.std(s, m), len(self.values(s, m))]
                for s in self.schemes for m in self.metrics]

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = ["scheme", "seed", "trace_digest", *self.metrics]
        write_csv(out / "summary.csv", header,
                  [[r.scheme, r.seed, r.trace_digest, *(r.metrics[m] for m in self.metrics)]
                   for r in self.runs])
        write_csv(out / "report.csv", ["scheme", "metric", "mean", "std", "n"], self.table())


def compare(configs: list[ExperimentConfig], seeds, out_dir=None) -> ComparisonReport:
    """Run every config on every seed; schemes sharing a seed share traffic."""
    seeds = [int(s) for s in seeds]
    if not configs or not seeds:
        raise ConfigError("compare needs at least one config and one seed")
    if len({c.scenario for c in configs}) != 1:
        raise ConfigError("compared configs must share one scenario")
    runs = []
    for c in configs:
        for s in seeds:
            run_cfg = replace(c, seed=s)
            sub = Path(out_dir) / c.scheme / f"seed{s}" if out_dir is not None else None
            log.info("running %s/%s seed %d", c.scenario, c.scheme, s)
            runs.append(run_experiment(run_cfg, sub))
    report = ComparisonReport(configs[0].scenario, runs)
    if out_dir is not None:
        report.write(out_dir)
    return report


def compare_schemes(base: ExperimentConfig, schemes, seeds, out_dir=None) -> ComparisonReport:
    return compare([replace(base, scheme=s).validate() for s in schemes], seeds, out_dir)


def sweep(base: ExperimentConfig, axis: str, values, schemes, seeds, out_dir=None) -> dict:
    """One comparison per axis value, all on the same seeds."""
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    if base.scenario != "radio":
        raise ConfigError("sweeps apply to the radio scenario")
    reports = {}
    for v in values:
        v = int(v) if axis == "antenna_count" else float(v)
        cfg = replace(base, radio=replace(base.radio, **{axis: v}))
        sub = Path(out_dir) / f"{axis}={v}" if out_dir is not None else None
        reports[v] = compare_schemes(cfg, schemes, seeds, sub)
    return reports


__all__ = [
    "ComparisonReport", "ExperimentConfig", "RadioSettings", "RunResult", "SfcSettings",
    "compare", "compare_schemes", "config_from_dict", "config_to_dict", "load_config",
    "run_experiment", "sweep",
]
