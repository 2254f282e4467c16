"""Experiment configuration: schema, loading and aggregated validation."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field

from .. import errors
from ..env import EnvConfig
from ..learn import DQNConfig, PPOConfig
from ..topology import build_graph


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NodeEntry(_Strict):
    id: int
    kind: Literal["source", "relay", "destination"]
    capacity: Optional[int] = Field(None, ge=1)
    position: Optional[list[float]] = None
    platform: str = ""


class LinkEntry(_Strict):
    id: Optional[int] = None
    tx: int
    rx: int
    avg_snr_db: Optional[float] = None
    rician_k: Optional[float] = Field(None, ge=0)
    rician_k_db: Optional[float] = None
    rho: float = Field(1.0, ge=0, le=1)
    temporal_alpha: float = Field(0.0, ge=0, le=1)


class EveLinkEntry(_Strict):
    tx: int
    avg_snr_db: Optional[float] = None
    rician_k: Optional[float] = Field(None, ge=0)
    rician_k_db: Optional[float] = None


class EavesdropperEntry(_Strict):
    id: int
    position: Optional[list[float]] = None
    avg_snr_db: Optional[float] = None
    rician_k: Optional[float] = Field(None, ge=0)
    rician_k_db: Optional[float] = None
    links: list[EveLinkEntry] = []


class PathlossEntry(_Strict):
    ref_snr_db: float = 30.0
    exponent: float = Field(2.0, gt=0)
    ref_distance: float = Field(1000.0, gt=0)


class TopologySection(_Strict):
    nodes: list[NodeEntry]
    links: list[LinkEntry]
    eavesdropper: Optional[EavesdropperEntry] = None
    pathloss: PathlossEntry = PathlossEntry()
    relay_capacity: Optional[int] = Field(None, ge=1)


class ChannelSection(_Strict):
    """Network-wide overrides applied on top of per-link values."""

    avg_snr_db: Optional[float] = None
    rho: Optional[float] = Field(None, ge=0, le=1)
    rician_k_db: Optional[float] = None
    quantized: bool = False


class EnvironmentSection(_Strict):
    deadline: Union[int, float, Literal["inf"]] = "inf"
    r0: float = Field(1.0, gt=0)
    rs: float = Field(0.0, ge=0)
    beta: float = 1.0
    sigma: float = 1.0
    mode: Literal["centralized", "decentralized"] = "centralized"
    arbitration: Literal["priority", "collision"] = "priority"
    expire_mode: Literal["drop", "keep"] = "drop"
    secrecy_mode: Literal["penalty", "gate"] = "penalty"
    episode_length: int = Field(5000, ge=1)
    source: Literal["backlogged", "bernoulli"] = "backlogged"
    arrival_rate: float = Field(1.0, ge=0, le=1)
    strict: bool = True
    joint_actions: bool = False
    age_scale: float = Field(64.0, gt=0)


class PolicySection(_Strict):
    name: Literal["max_link", "bsb", "dv", "random", "dqn", "ppo", "mappo"] = "max_link"
    target_occupancy: float = Field(0.5, ge=0, le=1)
    hyper: dict = {}
    train_seeds: int = Field(1, ge=1)
    # None: train afresh for every evaluation seed; an int: train once with
    # this seed and evaluate the same policy on every run seed
    train_seed: Optional[int] = None
    validation_episodes: int = Field(3, ge=1)


class RunSection(_Strict):
    seeds: list[int] = [0]
    episodes: int = Field(5, ge=1)
    eval_slots: Optional[int] = Field(None, ge=1)
    out: str = "results"
    workers: int = Field(1, ge=1)


class ExperimentConfig(_Strict):
    topology: TopologySection
    channel: ChannelSection = ChannelSection()
    environment: EnvironmentSection = EnvironmentSection()
    policy: PolicySection = PolicySection()
    run: RunSection = RunSection()

    def config_hash(self):
        """Hash of everything that affects results (output location excluded)."""
        d = self.model_dump(mode="json")
        d["run"].pop("out", None)
        d["run"].pop("workers", None)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def topology_dict(self):
        topo = self.topology.model_dump()
        cap = topo.pop("relay_capacity")
        for n in topo["nodes"]:
            if n["kind"] == "relay" and cap is not None:
                n["capacity"] = cap
        ch = self.channel
        for l in topo["links"]:
            if ch.avg_snr_db is not None:
                l["avg_snr_db"] = ch.avg_snr_db
            if ch.rho is not None:
                l["rho"] = ch.rho
            if ch.rician_k_db is not None:
                l["rician_k_db"] = ch.rician_k_db
                l["rician_k"] = None
        return topo

    def graph(self):
        return build_graph(self.topology_dict())

    def env_config(self, **overrides):
        d = self.environment.model_dump()
        d.update(overrides)
        return EnvConfig.from_dict(d)


SWEEPABLE = {
    "environment.deadline": "environment.deadline",
    "deadline": "environment.deadline",
    "D": "environment.deadline",
    "channel.avg_snr_db": "channel.avg_snr_db",
    "snr": "channel.avg_snr_db",
    "channel.rho": "channel.rho",
    "rho": "channel.rho",
    "environment.rs": "environment.rs",
    "rs": "environment.rs",
    "topology.relay_capacity": "topology.relay_capacity",
    "capacity": "topology.relay_capacity",
}


def _loc(err):
    return ".".join(str(p) for p in err["loc"])


def validate(raw):
    """Validate a raw mapping; every problem is collected before raising."""
    problems = []
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except pydantic.ValidationError as exc:
        problems = [(_loc(e), e["msg"]) for e in exc.errors()]
        raise errors.ValidationError(problems) from None
    try:
        cfg.graph()
    except errors.BacnError as exc:
        problems.append(("topology", f"{exc.code}: {exc}"))
    try:
        cfg.env_config()
    except errors.BacnError as exc:
        problems.append(("environment", str(exc)))
    if cfg.policy.name == "mappo" and cfg.environment.mode != "decentralized":
        problems.append(("policy.name", "mappo needs environment.mode = decentralized"))
    if cfg.policy.name != "mappo" and cfg.environment.mode == "decentralized":
        problems.append(("environment.mode", f"{cfg.policy.name} runs in centralized mode"))
    hyper_cls = {"dqn": DQNConfig, "ppo": PPOConfig, "mappo": PPOConfig}.get(cfg.policy.name)
    allowed = {f.name for f in dataclasses.fields(hyper_cls)} if hyper_cls else set()
    for k in sorted(set(cfg.policy.hyper) - allowed):
        problems.append((f"policy.hyper.{k}", "unknown hyperparameter"))
    if problems:
        raise errors.ValidationError(problems)
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise errors.ParseError(f"{path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise errors.ParseError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise errors.ParseError(f"{path}: top level must be a mapping")
    return validate(raw)


def with_value(cfg, key, value):
    """Copy of ``cfg`` with the sweepable ``key`` set to ``value``."""
    if key not in SWEEPABLE:
        raise errors.UnknownKey(f"{key!r} is not sweepable; choose from {sorted(set(SWEEPABLE.values()))}")
    section, name = SWEEPABLE[key].split(".")
    raw = copy.deepcopy(cfg.model_dump(mode="json"))
    if name == "deadline" and isinstance(value, float) and math.isinf(value):
        value = "inf"
    raw[section][name] = value
    return validate(raw)
