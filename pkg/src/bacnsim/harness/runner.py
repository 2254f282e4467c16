"""Experiment runner: train, evaluate, sweep and compare against the oracles.

Every job derives its randomness from ``(seed, name)`` substreams only, so
results do not depend on worker count or scheduling order, and CSV rows
are written in a fixed order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .. import errors, oracles
from ..env import BacnEnv
from ..learn import DQNConfig, PPOConfig, PolicyArtifact, dqn_train, evaluate, mappo_train, ppo_train
from ..learn.artifact import METRICS
from ..rng import substream
from .config import ExperimentConfig, SWEEPABLE, validate, with_value

LEARNERS = {"dqn": (DQNConfig, dqn_train), "ppo": (PPOConfig, ppo_train),
            "mappo": (PPOConfig, mappo_train)}
HEURISTICS = ("max_link", "bsb", "dv", "random")

COLUMNS = ("config_hash", "seed", "param", "value", "policy", "relay_layers", "secrecy_mode",
           *[c for m in METRICS for c in (m, m + "_se")],
           "failures", "delivered", "secure_in_time", "expired", "p95_delay")


def learner_hyper(cfg):
    cls, _ = LEARNERS[cfg.policy.name]
    hyper = dict(cfg.policy.hyper)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(hyper) - names)
    if unknown:
        raise errors.ValidationError([(f"policy.hyper.{k}", "unknown hyperparameter") for k in unknown])
    if "hidden" in hyper:
        hyper["hidden"] = tuple(hyper["hidden"])
    return cls(**hyper)


def make_env(cfg: ExperimentConfig):
    graph = cfg.graph()
    if cfg.channel.quantized:
        p_on = tuple(oracles.link_on_probabilities(graph, cfg.environment.r0))
        env_cfg = cfg.env_config(channel_model="onoff", link_on_prob=p_on)
    else:
        env_cfg = cfg.env_config()
    return BacnEnv(graph, env_cfg)


def _sub_seed(seed, name, *extra):
    return int(substream(seed, name, *extra).integers(2 ** 31))


def train_policy(cfg: ExperimentConfig, seed, env=None):
    """Train ``policy.train_seeds`` candidates and keep the best on validation episodes.

    Validation episodes use their own seed stream, disjoint from evaluation.
    Returns (artifact, report) of the winner; heuristics return (artifact, None).
    """
    env = env or make_env(cfg)
    name = cfg.policy.name
    if name not in LEARNERS:
        return PolicyArtifact.heuristic(name, cfg.policy.target_occupancy), None
    hyper = learner_hyper(cfg)
    _, train = LEARNERS[name]
    best = None
    for k in range(cfg.policy.train_seeds):
        art, report = train(env, hyper, _sub_seed(seed, "train", k))
        score = evaluate(art, env, cfg.policy.validation_episodes, _sub_seed(seed, "validation"),
                         cfg.run.eval_slots)["avg_reward"]
        report.evaluation["validation_avg_reward"] = score
        if best is None or score > best[0]:
            best = (score, art, report)
    report = best[2]
    report.config_hash = cfg.config_hash()
    return best[1], report


def _row(cfg, seed, policy_name, param, value, metrics):
    row = {"config_hash": cfg.config_hash(), "seed": seed, "param": param, "value": value,
           "policy": policy_name, "relay_layers": cfg.graph().relay_layers,
           "secrecy_mode": cfg.environment.secrecy_mode}
    for c in COLUMNS:
        if c in metrics:
            row[c] = metrics[c]
    return row


def _save(out_dir, policy, report, metrics, tag):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    policy.save(out_dir / f"{tag}.pol")
    if report is not None:
        report.evaluation.update({k: metrics[k] for k in METRICS})
        (out_dir / f"{tag}.train.json").write_text(report.to_json())


def run_seed(cfg: ExperimentConfig, seed, param="", value="", out_dir=None, policy=None):
    """Train (if needed) and evaluate one seed; returns one CSV row as a dict."""
    return run_seeds(cfg, [seed], param, value, out_dir, policy)[0]


def run_seeds(cfg: ExperimentConfig, seeds, param="", value="", out_dir=None, policy=None):
    """Rows for ``seeds``; with ``policy.train_seed`` set the learner is trained once."""
    env = make_env(cfg)
    suffix = f"_{param.split('.')[-1]}{value}" if param else ""
    shared = report = None
    if policy is None and cfg.policy.name in LEARNERS and cfg.policy.train_seed is not None:
        shared, report = train_policy(cfg, cfg.policy.train_seed, env)
    rows = []
    for seed in seeds:
        pol, rep = policy or shared, report
        if pol is None:
            pol, rep = train_policy(cfg, seed, env)
        metrics = evaluate(pol, env, cfg.run.episodes, seed, cfg.run.eval_slots)
        if out_dir is not None and pol.kind != "heuristic" and policy is None:
            tag = (f"{pol.algo}_train{cfg.policy.train_seed}" if shared is not None
                   else f"{pol.algo}_seed{seed}")
            if shared is None or seed == seeds[0]:
                _save(out_dir, pol, rep, metrics, tag + suffix)
        rows.append(_row(cfg, seed, pol.algo or pol.scheme, param, value, metrics))
    return rows


def _job(args):
    raw, seeds, param, value, out_dir = args
    return run_seeds(validate(raw), seeds, param, value, out_dir)


def _jobs(cfg, param, value, out_dir):
    """Shared-training configs form one job; otherwise one job per seed."""
    raw = cfg.model_dump(mode="json")
    if cfg.policy.name in LEARNERS and cfg.policy.train_seed is not None:
        return [(raw, list(cfg.run.seeds), param, value, out_dir)]
    return [(raw, [s], param, value, out_dir) for s in cfg.run.seeds]


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    return [row for rows in results for row in rows]


def format_value(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, rows, columns=COLUMNS):
    """Write rows with a fixed column order and shortest round-trip float text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c, "")) for c in columns])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers=None):
    """Evaluate the configured policy on every seed; writes ``metrics.csv`` if ``out_dir``."""
    workers = workers or cfg.run.workers
    rows = _map(_jobs(cfg, "", "", out_dir), workers)
    if out_dir is not None:
        write_csv(Path(out_dir) / "metrics.csv", rows)
    return rows


def evaluate_policy_file(cfg: ExperimentConfig, policy_path, out_dir=None):
    policy = PolicyArtifact.load(policy_path)
    rows = run_seeds(cfg, cfg.run.seeds, policy=policy)
    if out_dir is not None:
        write_csv(Path(out_dir) / "metrics.csv", rows)
    return rows


def parse_values(text):
    """Comma separated sweep values; ``inf`` allowed, integers kept as int."""
    vals = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok.lower() in ("inf", "infinity"):
            vals.append("inf")
            continue
        try:
            vals.append(int(tok))
        except ValueError:
            try:
                vals.append(float(tok))
            except ValueError:
                raise errors.ParseError(f"cannot parse sweep value {tok!r}") from None
    if not vals:
        raise errors.EmptyValues("sweep needs at least one value")
    return vals


LONG_COLUMNS = ("config_hash", "seed", "param", "value", "policy", "metric", "mean", "se")


def long_format(rows):
    out = []
    for r in rows:
        for m in METRICS:
            out.append({"config_hash": r["config_hash"], "seed": r["seed"], "param": r["param"],
                        "value": r["value"], "policy": r["policy"], "metric": m,
                        "mean": r[m], "se": r[m + "_se"]})
    return out


def sweep(cfg: ExperimentConfig, key, values, out_dir=None, workers=None, plot=True):
    """Run the experiment once per value of a sweepable key.

    Writes ``metrics.csv`` (one row per value and seed), ``sweep_long.csv``
    (one row per metric) and, when ``plot`` is set, a throughput figure.
    """
    if key not in SWEEPABLE:
        raise errors.UnknownKey(f"{key!r} is not sweepable; choose from {sorted(set(SWEEPABLE.values()))}")
    if not values:
        raise errors.EmptyValues("sweep needs at least one value")
    workers = workers or cfg.run.workers
    param = SWEEPABLE[key]
    jobs = []
    for v in values:
        jobs += _jobs(with_value(cfg, key, v), param, v, out_dir)
    rows = _map(jobs, workers)
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_csv(out_dir / "metrics.csv", rows)
        write_csv(out_dir / "sweep_long.csv", long_format(rows), LONG_COLUMNS)
        if plot:
            from .plotting import plot_sweep
            plot_sweep(rows, param, out_dir / f"sweep_{param.split('.')[-1]}.png")
    return rows


def aggregate(rows, metric="throughput"):
    """Pool seeds per (policy, value): mean of seed means and its standard error."""
    groups = {}
    for r in rows:
        groups.setdefault((r["policy"], str(r["value"])), []).append(float(r[metric]))
    out = {}
    for k, vals in groups.items():
        a = np.array(vals)
        se = float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0
        out[k] = (float(a.mean()), se, a.size)
    return out


def oracle(cfg: ExperimentConfig, out_dir=None, policies=None):
    """Quantized-MDP optimum, exact max-link outage, and per-policy gaps.

    The quantized model keeps buffers and on/off links (on with the exact
    probability that capacity reaches ``r0``) but drops the deadline and
    the eavesdropper, so gaps measure relay selection alone. Gaps carry
    the standard error of the simulated policy reward.
    """
    graph = cfg.graph()
    mdp = oracles.quantize(graph, cfg.environment.r0, joint=cfg.environment.joint_actions)
    gain, opt_policy = oracles.optimal_average_reward(mdp)
    report = {"config_hash": cfg.config_hash(), "states": mdp.n_states, "actions": mdp.n_actions,
              "p_on": [float(p) for p in mdp.p_on], "optimal_avg_reward": float(gain)}
    try:
        report["maxlink_exact_outage"] = float(oracles.maxlink_exact_outage(mdp))
    except errors.NotTwoHop:
        report["maxlink_exact_outage"] = None
    slots = cfg.run.eval_slots or cfg.environment.episode_length
    names = list(policies) if policies else sorted({cfg.policy.name, *HEURISTICS})
    gaps = []
    for name in names:
        env = oracles.quantized_env(mdp, slots, r0=cfg.environment.r0)
        if name in LEARNERS:
            if name == "mappo":
                continue
            sub = validate({**cfg.model_dump(mode="json"), "policy": {**cfg.policy.model_dump(), "name": name}})
            tseed = cfg.policy.train_seed if cfg.policy.train_seed is not None else cfg.run.seeds[0]
            art, _ = train_policy(sub, tseed, env)
        else:
            art = PolicyArtifact.heuristic(name, cfg.policy.target_occupancy)
        means = []
        for s in cfg.run.seeds:
            means.append(evaluate(art, env, cfg.run.episodes, s, slots)["avg_reward"])
        m = np.array(means)
        pooled_se = float(m.std(ddof=1) / np.sqrt(m.size)) if m.size > 1 else 0.0
        gaps.append({"policy": name, "avg_reward": float(m.mean()), "gap": float(gain - m.mean()),
                     "se": pooled_se})
    report["policies"] = gaps
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "oracle.json").write_text(json.dumps(report, indent=1, sort_keys=True))
        rows = [{"config_hash": report["config_hash"], **g} for g in gaps]
        write_csv(out_dir / "oracle.csv", rows, ("config_hash", "policy", "avg_reward", "gap", "se"))
    return report
