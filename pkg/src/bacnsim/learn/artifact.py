"""Policy artifacts (heuristic or learned), their file format, and evaluation.

Binary layout of a saved policy::

    b"BACNPOL1" | uint32 little-endian header length | UTF-8 JSON header
    | little-endian float64 parameter block

The header records the layout version, policy kind, observation length,
action count, hyperparameter hash and, for every network, its layer sizes
and offset into the parameter block.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from .. import policies, topology
from ..buffering import DelayLedger
from ..errors import LayoutMismatch
from ..rng import substream
from .mlp import Mlp

MAGIC = b"BACNPOL1"
LAYOUT_VERSION = 1


def hyper_hash(hyper):
    if is_dataclass(hyper):
        hyper = asdict(hyper)
    blob = json.dumps(hyper, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def masked_logits(logits, mask):
    return np.where(mask, logits, -np.inf)


def softmax_masked(logits, mask):
    z = masked_logits(logits, mask)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PolicyArtifact:
    """A decision rule usable by ``evaluate``.

    ``kind`` is ``heuristic`` (``scheme`` names the rule), ``central``
    (one network over the global observation; ``nets["actor"]`` or
    ``nets["q"]``) or ``decentral`` (``nets["actor[<agent>]"]`` per agent,
    each reading only that agent's local observation).
    """

    kind: str
    algo: str = ""
    scheme: str = ""
    obs_size: int = 0
    n_actions: int = 0
    nets: dict = field(default_factory=dict)
    agents: tuple = ()
    hyper: dict = field(default_factory=dict)
    target_occupancy: float = 0.5

    @property
    def hyper_hash(self):
        return hyper_hash(self.hyper)

    @classmethod
    def heuristic(cls, scheme, target_occupancy=0.5):
        if scheme not in policies.SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        return cls("heuristic", algo=scheme, scheme=scheme, target_occupancy=target_occupancy)

    def check_layout(self, env):
        if self.kind == "heuristic":
            if env.config.mode != "centralized":
                raise LayoutMismatch("heuristic schemes run in centralized mode")
            return
        if self.kind == "central":
            if env.config.mode != "centralized":
                raise LayoutMismatch("centralized policy in a decentralized environment")
            obs = topology.global_observation_size(env.graph)
            if (obs, len(env.central_actions)) != (self.obs_size, self.n_actions):
                raise LayoutMismatch(
                    f"policy expects obs {self.obs_size}/actions {self.n_actions}, "
                    f"env has {obs}/{len(env.central_actions)}")
        else:
            if env.config.mode != "decentralized":
                raise LayoutMismatch("decentralized policy in a centralized environment")
            if tuple(self.agents) != env.graph.agents:
                raise LayoutMismatch("agent set differs")
            if self.obs_size != topology.local_observation_size(env.graph):
                raise LayoutMismatch("local observation length differs")

    def act(self, env, rng=None):
        """Greedy (deterministic up to heuristic tie-breaks) action for ``env.step``."""
        if self.kind == "heuristic":
            params = env.scheme_params(self.target_occupancy)
            return policies.SCHEMES[self.scheme](env, params, rng)
        if self.kind == "central":
            net = self.nets.get("actor") or self.nets["q"]
            out = net.forward(env.global_observation())
            idx = int(np.argmax(masked_logits(out, env.central_mask())))
            return env.central_actions[idx]
        masks = env.agent_masks()
        acts = {}
        for a in self.agents:
            out = self.nets[f"actor[{a}]"].forward(env.local_observation(a))
            acts[a] = env.agent_actions[a][int(np.argmax(masked_logits(out, masks[a])))]
        return acts

    # -- persistence -------------------------------------------------------------

    def save(self, path):
        names = sorted(self.nets)
        header = {
            "layout_version": LAYOUT_VERSION, "kind": self.kind, "algo": self.algo,
            "scheme": self.scheme, "obs_size": self.obs_size, "n_actions": self.n_actions,
            "agents": list(self.agents), "hyper": self.hyper, "hyper_hash": self.hyper_hash,
            "target_occupancy": self.target_occupancy, "nets": [],
        }
        blocks, offset = [], 0
        for name in names:
            net = self.nets[name]
            header["nets"].append({"name": name, "sizes": list(net.sizes),
                                   "offset": offset, "count": net.n_params})
            blocks.append(net.flat())
            offset += net.n_params
        head = json.dumps(header, sort_keys=True, default=str).encode()
        data = np.concatenate(blocks).astype("<f8") if blocks else np.zeros(0, "<f8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            fh.write(data.tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise LayoutMismatch(f"{path}: not a policy file")
            (n,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(n))
            data = np.frombuffer(fh.read(), dtype="<f8")
        if header["layout_version"] != LAYOUT_VERSION:
            raise LayoutMismatch(f"unsupported layout version {header['layout_version']}")
        nets = {}
        for spec in header["nets"]:
            net = Mlp(spec["sizes"])
            net.set_flat(data[spec["offset"]:spec["offset"] + spec["count"]])
            nets[spec["name"]] = net
        return cls(header["kind"], header["algo"], header["scheme"], header["obs_size"],
                   header["n_actions"], nets, tuple(header["agents"]), header["hyper"],
                   header["target_occupancy"])


def save_q_table(path, Q):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state"] + [f"a{j}" for j in range(Q.shape[1])])
        for s, row in enumerate(Q):
            w.writerow([s] + [repr(float(v)) for v in row])


def load_q_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(v) for v in r[1:]] for r in rows])


@dataclass
class TrainReport:
    algo: str
    seed: int
    hyper: dict
    returns: list = field(default_factory=list)
    evaluation: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    config_hash: str = ""

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=1, default=str)


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def episode_seed(seed, episode, name="eval-episode"):
    return int(substream(seed, name, episode).integers(2 ** 62))


METRICS = ("throughput", "mean_delay", "expiry_rate", "secrecy_outage_rate",
           "outage_rate", "failure_rate", "avg_reward")


def run_episode(policy, env, seed, slots=None):
    """Roll one episode; returns per-episode metrics and the final ledger."""
    env.reset(seed)
    rng = substream(seed, "tiebreak")
    slots = slots or env.config.episode_length
    total_reward = 0.0
    moved = outages = intercepted = failed = 0
    for _ in range(slots):
        out = env.step(policy.act(env, rng))
        total_reward += out.reward
        moved += len(out.moved)
        outages += out.outage
        intercepted += len(out.intercepted)
        failed += len(out.failed)
    led = env.ledger
    return {
        "throughput": led.delivered_secure_in_time / slots,
        "mean_delay": led.mean_delay,
        "expiry_rate": led.expired / slots,
        "secrecy_outage_rate": intercepted / moved if moved else 0.0,
        "outage_rate": outages / slots,
        "failure_rate": failed / slots,
        "avg_reward": total_reward / slots,
        "failures": failed,
    }, led


def evaluate(policy, env, episodes, seed, slots=None):
    """Mean and standard error of every metric across ``episodes`` seeded episodes."""
    policy.check_layout(env)
    per = []
    ledger_rows = []
    for e in range(episodes):
        m, led = run_episode(policy, env, episode_seed(seed, e), slots)
        per.append(m)
        ledger_rows.append(led)
    out = {"episodes": episodes}
    for k in METRICS:
        vals = np.array([m[k] for m in per], dtype=float)
        vals = vals[np.isfinite(vals)]
        out[k] = float(vals.mean()) if vals.size else math.nan
        out[k + "_se"] = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    out["failures"] = int(sum(m["failures"] for m in per))
    pooled = DelayLedger()
    for led in ledger_rows:
        pooled.delivered += led.delivered
        pooled.delivered_secure_in_time += led.delivered_secure_in_time
        pooled.expired += led.expired
        pooled.histogram.update(led.histogram)
    out["delivered"] = pooled.delivered
    out["secure_in_time"] = pooled.delivered_secure_in_time
    out["expired"] = pooled.expired
    out["p95_delay"] = pooled.delay_quantile(0.95)
    return out
