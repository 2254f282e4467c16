"""Discrete-time buffer-aided relaying environment.

Each slot: the policy (centralized) or the agents (decentralized) pick
links from estimated CSI; half-duplex conflicts are arbitrated; a chosen
link delivers its head-of-line packet iff the true channel supports the
target rate; transmissions may be intercepted by the eavesdropper; then
the slot advances, new packets arrive, stale packets expire and fresh
channels are drawn.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import topology
from .buffering import NO_DEADLINE, DelayLedger, Packet, RelayBuffer
from .channel import ChannelModel, draw_onoff_channels
from .errors import BadConfig, IllegalAction, NotAnAgent
from .rng import substream

MODES = ("centralized", "decentralized")
ARBITRATION = ("priority", "collision")
EXPIRE_MODES = ("drop", "keep")
SECRECY_MODES = ("penalty", "gate")
SOURCES = ("backlogged", "bernoulli")
CHANNEL_MODELS = ("rician", "onoff")


@dataclass
class EnvConfig:
    deadline: float = NO_DEADLINE
    r0: float = 1.0
    rs: float = 0.0
    beta: float = 1.0
    sigma: float = 1.0
    mode: str = "centralized"
    arbitration: str = "priority"
    expire_mode: str = "drop"
    secrecy_mode: str = "penalty"
    episode_length: int = 5000
    source: str = "backlogged"
    arrival_rate: float = 1.0
    strict: bool = True
    joint_actions: bool = False
    channel_model: str = "rician"
    link_on_prob: tuple | None = None
    age_scale: float = 64.0
    debug: bool = False

    def __post_init__(self):
        problems = []
        for name, allowed in (("mode", MODES), ("arbitration", ARBITRATION),
                              ("expire_mode", EXPIRE_MODES), ("secrecy_mode", SECRECY_MODES),
                              ("source", SOURCES), ("channel_model", CHANNEL_MODELS)):
            if getattr(self, name) not in allowed:
                problems.append(f"{name} must be one of {allowed}")
        if isinstance(self.deadline, str):
            self.deadline = NO_DEADLINE if self.deadline.lower() in ("inf", "infinity") else float(self.deadline)
        if not (self.deadline == NO_DEADLINE or self.deadline >= 1):
            problems.append("deadline must be >= 1 or inf")
        if not self.r0 > 0:
            problems.append("r0 must be > 0")
        if self.rs < 0:
            problems.append("rs must be >= 0")
        if not 0.0 <= self.arrival_rate <= 1.0:
            problems.append("arrival_rate must lie in [0, 1]")
        if self.episode_length < 1:
            problems.append("episode_length must be >= 1")
        if self.channel_model == "onoff" and self.link_on_prob is None:
            problems.append("onoff channel model needs link_on_prob")
        if problems:
            raise BadConfig("; ".join(problems))

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise BadConfig(f"unknown environment keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SchemeParams:
    r0: float = 1.0
    rs: float = 0.0
    target_occupancy: float = 0.5

    def __post_init__(self):
        if not self.r0 > 0 or self.rs < 0 or not 0.0 <= self.target_occupancy <= 1.0:
            raise BadConfig(f"invalid scheme parameters {self}")


@dataclass
class StepOutcome:
    reward: float = 0.0
    active: list = field(default_factory=list)
    moved: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    intercepted: list = field(default_factory=list)
    suppressed: list = field(default_factory=list)
    delivered: list = field(default_factory=list)
    expired: list = field(default_factory=list)
    secure_in_time: int = 0
    insecure_deliveries: int = 0
    backlog: int = 0
    done: bool = False

    @property
    def outage(self):
        """True when no packet moved during the slot."""
        return not self.moved


def reward(outcome, config):
    """Secure in-time deliveries minus weighted expiries and insecure deliveries."""
    return (outcome.secure_in_time - config.beta * len(outcome.expired)
            - config.sigma * outcome.insecure_deliveries)


class BacnEnv:
    """Mutable environment state; also the object policies and observers read."""

    def __init__(self, graph, config=None):
        self.graph = graph
        self.config = config or EnvConfig()
        cfg = self.config
        if cfg.channel_model == "onoff" and len(cfg.link_on_prob) != len(graph.links):
            raise BadConfig("link_on_prob needs one entry per link")
        self._model = ChannelModel(graph) if cfg.channel_model == "rician" else None
        self._tx = np.array([l.tx for l in graph.links])
        self._rx = np.array([l.rx for l in graph.links])
        self._src = graph.source
        self._dst = graph.destination
        self._eve_idx = {tx: i for i, tx in enumerate(graph.eve_tx)}
        eve_avg = np.array([graph.eve_links[t].avg_snr for t in graph.eve_tx])
        self._eve_avg_cap = {tx: math.log2(1.0 + eve_avg[i]) for tx, i in self._eve_idx.items()}
        order = sorted(graph.agents, key=lambda a: (graph.hops_to_destination[a], a))
        self._priority = {a: i for i, a in enumerate(order)}
        self.agent_actions = {a: (None,) + graph.out_links[a] for a in graph.agents}
        self.central_actions = topology.central_action_list(graph, self.config.joint_actions)
        self.seed = None

    # -- setup -----------------------------------------------------------------

    def reset(self, seed):
        self.seed = seed
        self._rng_channel = substream(seed, "channel")
        self._rng_eve = substream(seed, "eve")
        self._rng_arrival = substream(seed, "arrivals")
        self.slot = 0
        self.buffers = {r: RelayBuffer(self.graph.capacity(r)) for r in self.graph.relays}
        self.source_queue = RelayBuffer(None)
        self.ledger = DelayLedger()
        self.created = 0
        self.failures = 0
        self.channels = None
        self._arrivals()
        self._draw()
        return self

    def _draw(self):
        if self._model is None:
            self.channels = draw_onoff_channels(self.graph, self.config.link_on_prob, self._rng_channel)
        else:
            self.channels = self._model.draw(self._rng_channel, self._rng_eve, self.channels)
        self._est_cap = np.log2(1.0 + self.channels.est_snr)
        self._inst_cap = np.log2(1.0 + self.channels.inst_snr)
        self._eve_inst_cap = np.log2(1.0 + self.channels.eve_inst_snr)

    def set_snr(self, est=None, inst=None):
        """Overwrite this slot's estimated and/or true link SNRs (linear, link-id order).

        For scripted scenarios and tests; the next slot draws fresh channels.
        """
        ch = self.channels
        if est is not None:
            ch.est_snr[:] = est
            self._est_cap = np.log2(1.0 + ch.est_snr)
        if inst is not None:
            ch.inst_snr[:] = inst
            self._inst_cap = np.log2(1.0 + ch.inst_snr)

    def _mint(self):
        p = Packet(self.created, self.slot)
        self.created += 1
        return p

    def _arrivals(self):
        if self.config.source == "bernoulli" and self._rng_arrival.random() < self.config.arrival_rate:
            self.source_queue.enqueue(self._mint())

    # -- state accessors --------------------------------------------------------

    @property
    def done(self):
        return self.slot >= self.config.episode_length

    @property
    def queued(self):
        return len(self.source_queue) + sum(len(b) for b in self.buffers.values())

    def has_packet(self, node):
        if node == self._src:
            return self.config.source == "backlogged" or bool(self.source_queue)
        buf = self.buffers.get(node)
        return bool(buf)

    def has_space(self, node):
        buf = self.buffers.get(node)
        return buf is None or not buf.full

    def occupancy(self, node):
        if node == self._src:
            return 0.0 if self.config.source == "backlogged" else float(bool(self.source_queue))
        buf = self.buffers.get(node)
        return buf.occupancy if buf is not None else 0.0

    def hol_age(self, node):
        """Head-of-line packet age, normalized by the deadline and clipped to [0, 1]."""
        buf = self.source_queue if node == self._src else self.buffers.get(node)
        if not buf:
            return 0.0
        scale = self.config.deadline if self.config.deadline != NO_DEADLINE else self.config.age_scale
        return min(1.0, (self.slot - buf.head().born_slot) / scale)

    def scheme_params(self, target_occupancy=0.5):
        """Qualification parameters: secrecy gating applies only in gate mode."""
        rs = self.config.rs if self.config.secrecy_mode == "gate" else 0.0
        return SchemeParams(self.config.r0, rs, target_occupancy)

    def qualifies(self, link_id, params=None):
        params = params or self.scheme_params()
        i = self.graph.link_index[link_id]
        tx, rx = int(self._tx[i]), int(self._rx[i])
        if not (self.has_packet(tx) and self.has_space(rx)):
            return False
        if self._est_cap[i] < params.r0:
            return False
        if params.rs > 0 and tx in self._eve_avg_cap:
            if self._est_cap[i] - self._eve_avg_cap[tx] < params.rs:
                return False
        return True

    def qualifying_links(self, params=None):
        params = params or self.scheme_params()
        return [l.id for l in self.graph.links if self.qualifies(l.id, params)]

    def central_mask(self, params=None):
        ok = set(self.qualifying_links(params))
        return np.array([all(l in ok for l in a) for a in self.central_actions])

    def agent_mask(self, agent, params=None):
        if agent not in self.agent_actions:
            raise NotAnAgent(f"node {agent} is not an agent")
        ok = set(self.qualifying_links(params))
        return np.array([a is None or a in ok for a in self.agent_actions[agent]])

    def agent_masks(self, params=None):
        ok = set(self.qualifying_links(params))
        return {a: np.array([x is None or x in ok for x in acts])
                for a, acts in self.agent_actions.items()}

    def global_observation(self):
        return topology.global_observation(self.graph, self)

    def local_observation(self, agent):
        return topology.local_observation(self.graph, agent, self)

    # -- dynamics ---------------------------------------------------------------

    def step(self, actions):
        """Advance one slot.

        Centralized: ``actions`` is None (Idle), a link id, or a tuple of link
        ids forming a matching (joint mode).  Decentralized: a mapping from
        agent id to a link id or None.
        """
        cfg = self.config
        out = StepOutcome()
        proposals = self._proposals(actions)
        if cfg.strict:
            params = self.scheme_params()
            for _, lid in proposals:
                if not self.qualifies(lid, params):
                    raise IllegalAction(f"link {lid} does not qualify in slot {self.slot}")
        active, collided = self._arbitrate(proposals, out)
        out.active = sorted(active + collided)
        out.failed.extend(collided)

        for lid in sorted(active):
            i = self.graph.link_index[lid]
            tx, rx = int(self._tx[i]), int(self._rx[i])
            if not (self.has_packet(tx) and self.has_space(rx)) or self._inst_cap[i] < cfg.r0:
                out.failed.append(lid)
                continue
            if tx == self._src:
                pkt = self.source_queue.dequeue() if cfg.source == "bernoulli" else self._mint()
            else:
                pkt = self.buffers[tx].dequeue()
            pkt.hops += 1
            if tx in self._eve_idx and cfg.rs > 0:
                sec = max(0.0, self._inst_cap[i] - self._eve_inst_cap[self._eve_idx[tx]])
                if sec < cfg.rs:
                    pkt.secure_so_far = False
                    out.intercepted.append(lid)
            out.moved.append(lid)
            if rx == self._dst:
                d = self.ledger.record_delivery(pkt, self.slot, cfg.deadline)
                out.delivered.append(pkt)
                if not pkt.secure_so_far:
                    out.insecure_deliveries += 1
                elif d <= cfg.deadline:
                    out.secure_in_time += 1
            else:
                self.buffers[rx].enqueue(pkt)
        out.failed.sort()
        self.failures += len(out.failed)
        # Sampled between transmissions and arrivals: each packet is counted
        # once per slot of delay, which makes Little's law exact.
        out.backlog = self.queued

        # Expiry runs at the start of the next slot, before anyone decides.
        self.slot += 1
        self._arrivals()
        if cfg.expire_mode == "drop" and cfg.deadline != NO_DEADLINE:
            out.expired.extend(self.source_queue.expire(self.slot, cfg.deadline))
            for r in self.graph.relays:
                out.expired.extend(self.buffers[r].expire(self.slot, cfg.deadline))
            self.ledger.record_expiry(out.expired)
        self._draw()
        out.reward = reward(out, cfg)
        out.done = self.done
        if cfg.debug:
            self.check_invariants(out)
        return out

    def _proposals(self, actions):
        """Normalize an action into (agent, link id) pairs."""
        g = self.graph
        if self.config.mode == "centralized":
            if actions is None:
                return []
            links = (actions,) if isinstance(actions, (int, np.integer)) else tuple(actions)
            for lid in links:
                if lid not in g.link_by_id:
                    raise IllegalAction(f"unknown link {lid}")
            if len(links) > 1 and not (self.config.joint_actions and topology.is_matching(g, links)):
                raise IllegalAction(f"centralized mode activates one link per slot, got {links}")
            return [(g.link_by_id[l].tx, int(l)) for l in links]
        props = []
        for agent, lid in sorted((actions or {}).items()):
            if agent not in self.agent_actions:
                raise NotAnAgent(f"node {agent} is not an agent")
            if lid is None:
                continue
            if lid not in g.out_links[agent]:
                raise IllegalAction(f"agent {agent} cannot transmit on link {lid}")
            props.append((agent, int(lid)))
        return props

    def _arbitrate(self, proposals, out):
        """Resolve half-duplex conflicts; returns (active, collided) link ids."""
        if len(proposals) <= 1:
            return [lid for _, lid in proposals], []
        g = self.graph
        if self.config.arbitration == "collision":
            count = {}
            for _, lid in proposals:
                l = g.link_by_id[lid]
                for n in (l.tx, l.rx):
                    count[n] = count.get(n, 0) + 1
            active, collided = [], []
            for _, lid in proposals:
                l = g.link_by_id[lid]
                (collided if count[l.tx] > 1 or count[l.rx] > 1 else active).append(lid)
            return active, collided
        used, active = set(), []
        for agent, lid in sorted(proposals, key=lambda p: self._priority[p[0]]):
            l = g.link_by_id[lid]
            if l.tx in used or l.rx in used:
                out.suppressed.append((agent, lid))
                continue
            used.update((l.tx, l.rx))
            active.append(lid)
        return active, []

    def check_invariants(self, out=None):
        assert self.created == self.ledger.delivered + self.ledger.expired + self.queued, "conservation"
        for b in self.buffers.values():
            assert len(b) <= b.capacity
        if out is not None:
            nodes = []
            for lid in out.moved:
                l = self.graph.link_by_id[lid]
                nodes += [l.tx, l.rx]
            assert len(nodes) == len(set(nodes)), "half-duplex"


def reset(graph, config, seed):
    return BacnEnv(graph, config).reset(seed)
