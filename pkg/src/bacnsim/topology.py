"""Network graph of a buffer-aided cooperative network.

Nodes are a Source, any number of buffered Relays arranged as a DAG, a
Destination sink and optionally one Eavesdropper.  Data links are directed
Source->Relay->...->Destination; every transmitting node also has an
implicit link toward the Eavesdropper.
"""
from __future__ import annotations

import enum
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (BadParameter, CycleDetected, DanglingNode, DuplicateId,
                     MissingSourceOrDestination, NotAnAgent, UnknownNode)

SNR_FLOOR_DB = -10.0
SNR_CEIL_DB = 40.0

DEFAULT_PATHLOSS = {"ref_snr_db": 30.0, "exponent": 2.0, "ref_distance": 1000.0}
# Rician K defaults (dB): satellite-originated links are more line-of-sight.
DEFAULT_K_DB_SOURCE = 10.0
DEFAULT_K_DB_RELAY = 3.0


class NodeKind(str, enum.Enum):
    SOURCE = "source"
    RELAY = "relay"
    DESTINATION = "destination"
    EAVESDROPPER = "eavesdropper"


@dataclass(frozen=True)
class NodeSpec:
    id: int
    kind: NodeKind
    buffer_capacity: int | None = None
    position: tuple[float, float, float] | None = None
    platform: str = ""


@dataclass(frozen=True)
class LinkSpec:
    id: int
    tx: int
    rx: int
    avg_snr_db: float
    rician_k: float
    csi_correlation: float = 1.0
    temporal_alpha: float = 0.0

    @property
    def avg_snr(self):
        return 10.0 ** (self.avg_snr_db / 10.0)


@dataclass(frozen=True)
class EveLink:
    tx: int
    avg_snr_db: float
    rician_k: float

    @property
    def avg_snr(self):
        return 10.0 ** (self.avg_snr_db / 10.0)


@dataclass(frozen=True)
class NetworkGraph:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    eve_links: Mapping[int, EveLink] = field(default_factory=dict)

    @cached_property
    def node_by_id(self):
        return {n.id: n for n in self.nodes}

    @cached_property
    def link_by_id(self):
        return {l.id: l for l in self.links}

    @cached_property
    def link_index(self):
        """Position of each link id in ``links`` (ascending id)."""
        return {l.id: i for i, l in enumerate(self.links)}

    @cached_property
    def source(self):
        return next(n.id for n in self.nodes if n.kind is NodeKind.SOURCE)

    @cached_property
    def destination(self):
        return next(n.id for n in self.nodes if n.kind is NodeKind.DESTINATION)

    @cached_property
    def eavesdropper(self):
        return next((n.id for n in self.nodes if n.kind is NodeKind.EAVESDROPPER), None)

    @cached_property
    def relays(self):
        return tuple(n.id for n in self.nodes if n.kind is NodeKind.RELAY)

    @cached_property
    def agents(self):
        """Decision-making nodes: the Source and every Relay, ascending id."""
        return tuple(n.id for n in self.nodes
                     if n.kind in (NodeKind.SOURCE, NodeKind.RELAY))

    @cached_property
    def eve_tx(self):
        return tuple(sorted(self.eve_links))

    @cached_property
    def out_links(self):
        out = {n.id: [] for n in self.nodes}
        for l in self.links:
            out[l.tx].append(l.id)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def in_links(self):
        inc = {n.id: [] for n in self.nodes}
        for l in self.links:
            inc[l.rx].append(l.id)
        return {k: tuple(v) for k, v in inc.items()}

    @cached_property
    def neighbors(self):
        nb = {n.id: set() for n in self.nodes}
        for l in self.links:
            nb[l.tx].add(l.rx)
            nb[l.rx].add(l.tx)
        return {k: tuple(sorted(v)) for k, v in nb.items()}

    @cached_property
    def max_degree(self):
        return max(len(self.out_links[n.id]) + len(self.in_links[n.id])
                   for n in self.nodes if n.kind is not NodeKind.EAVESDROPPER)

    @cached_property
    def hops_to_destination(self):
        """Shortest hop count from each node to the Destination over data links."""
        dist = {self.destination: 0}
        queue = deque([self.destination])
        while queue:
            v = queue.popleft()
            for lid in self.in_links[v]:
                u = self.link_by_id[lid].tx
                if u not in dist:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        return dist

    @cached_property
    def relay_layers(self):
        """Number of relay layers on the longest Source->Destination path."""
        longest = {self.source: 0}
        for v in self.topological_order:
            for lid in self.out_links[v]:
                w = self.link_by_id[lid].rx
                longest[w] = max(longest.get(w, 0), longest[v] + 1)
        return longest[self.destination] - 1

    @cached_property
    def topological_order(self):
        order = _topological_order(self.nodes, self.links)
        return tuple(order)

    def capacity(self, node):
        return self.node_by_id[node].buffer_capacity


def incident_links(graph, node):
    """All links with ``node`` as transmitter or receiver, ascending id."""
    if node not in graph.node_by_id:
        raise UnknownNode(f"unknown node id {node}")
    return [l for l in graph.links if l.tx == node or l.rx == node]


def is_matching(graph, link_ids):
    """True when no node appears in more than one of the links."""
    seen = set()
    for lid in link_ids:
        l = graph.link_by_id[lid]
        if l.tx in seen or l.rx in seen:
            return False
        seen.update((l.tx, l.rx))
    return True


def central_action_list(graph, joint=False):
    """Idle, every single link, and with ``joint`` every larger half-duplex matching."""
    links = [l.id for l in graph.links]
    acts = [()] + [(l,) for l in links]
    if joint:
        for size in range(2, len(links) + 1):
            acts += [c for c in itertools.combinations(links, size) if is_matching(graph, c)]
    return tuple(acts)


def pathloss_snr_db(distance, ref_snr_db, exponent, ref_distance):
    """Log-distance mean SNR in dB."""
    if distance <= 0:
        raise BadParameter("path-loss distance must be positive")
    return ref_snr_db - 10.0 * exponent * math.log10(distance / ref_distance)


def _k_linear(entry, default_db):
    if entry.get("rician_k") is not None:
        k = float(entry["rician_k"])
    elif entry.get("rician_k_db") is not None:
        k = 10.0 ** (float(entry["rician_k_db"]) / 10.0)
    else:
        k = 10.0 ** (default_db / 10.0)
    if not math.isfinite(k) or k < 0:
        raise BadParameter(f"Rician K must be finite and >= 0, got {k}")
    return k


def _avg_snr_db(entry, a, b, pathloss, what):
    if entry.get("avg_snr_db") is not None:
        return float(entry["avg_snr_db"])
    if a.position is None or b.position is None:
        raise BadParameter(f"{what}: needs avg_snr_db or positions on both endpoints")
    d = math.dist(a.position, b.position)
    return pathloss_snr_db(d, pathloss["ref_snr_db"], pathloss["exponent"],
                           pathloss["ref_distance"])


def _topological_order(nodes, links):
    indeg = {n.id: 0 for n in nodes}
    succ = {n.id: [] for n in nodes}
    for l in links:
        indeg[l.rx] += 1
        succ[l.tx].append(l.rx)
    ready = sorted(v for v, d in indeg.items() if d == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort()
    if len(order) != len(nodes):
        raise CycleDetected("data links contain a directed cycle")
    return order


def build_graph(config):
    """Validate a topology mapping and return an immutable NetworkGraph.

    ``config`` keys: ``nodes`` (id, kind, capacity, position, platform),
    ``links`` (id, tx, rx, avg_snr_db, rician_k | rician_k_db, rho,
    temporal_alpha), optional ``eavesdropper`` (id, position, avg_snr_db,
    rician_k | rician_k_db, links[]) and optional ``pathloss``.
    """
    pathloss = {**DEFAULT_PATHLOSS, **(config.get("pathloss") or {})}
    raw_nodes = list(config.get("nodes") or [])
    raw_links = list(config.get("links") or [])
    if not raw_nodes or not raw_links:
        raise BadParameter("topology needs non-empty nodes and links")

    nodes = []
    seen = set()
    for entry in raw_nodes:
        nid = int(entry["id"])
        if nid in seen:
            raise DuplicateId(f"duplicate node id {nid}")
        seen.add(nid)
        kind = NodeKind(str(entry["kind"]).lower())
        cap = entry.get("capacity")
        if kind is NodeKind.RELAY:
            if cap is None or int(cap) < 1:
                raise BadParameter(f"relay {nid}: buffer capacity must be >= 1, got {cap}")
            cap = int(cap)
        else:
            cap = None
        pos = entry.get("position")
        pos = tuple(float(x) for x in pos) if pos is not None else None
        if pos is not None and len(pos) != 3:
            raise BadParameter(f"node {nid}: position must be a 3-vector")
        nodes.append(NodeSpec(nid, kind, cap, pos, str(entry.get("platform", ""))))

    eve_cfg = config.get("eavesdropper")
    if eve_cfg:
        eid = int(eve_cfg["id"])
        if eid in seen:
            raise DuplicateId(f"duplicate node id {eid}")
        pos = eve_cfg.get("position")
        nodes.append(NodeSpec(eid, NodeKind.EAVESDROPPER,
                              position=tuple(float(x) for x in pos) if pos else None))

    nodes.sort(key=lambda n: n.id)
    by_id = {n.id: n for n in nodes}
    kinds = [n.kind for n in nodes]
    if kinds.count(NodeKind.SOURCE) != 1 or kinds.count(NodeKind.DESTINATION) != 1:
        raise MissingSourceOrDestination("need exactly one source and one destination")
    if kinds.count(NodeKind.EAVESDROPPER) > 1:
        raise BadParameter("at most one eavesdropper")

    has_ids = [("id" in e and e["id"] is not None) for e in raw_links]
    if any(has_ids) and not all(has_ids):
        raise BadParameter("either every link carries an id or none does")
    if not all(has_ids):
        raw_links = sorted(raw_links, key=lambda e: (int(e["tx"]), int(e["rx"])))
        raw_links = [{**e, "id": i} for i, e in enumerate(raw_links)]

    links = []
    seen_links, seen_pairs = set(), set()
    for entry in raw_links:
        lid, tx, rx = int(entry["id"]), int(entry["tx"]), int(entry["rx"])
        if lid in seen_links:
            raise DuplicateId(f"duplicate link id {lid}")
        if (tx, rx) in seen_pairs:
            raise DuplicateId(f"duplicate link {tx}->{rx}")
        seen_links.add(lid)
        seen_pairs.add((tx, rx))
        for end in (tx, rx):
            if end not in by_id:
                raise UnknownNode(f"link {lid} names unknown node {end}")
        if tx == rx:
            raise BadParameter(f"link {lid}: tx == rx")
        if by_id[rx].kind is NodeKind.SOURCE:
            raise DanglingNode(f"link {lid}: the source cannot receive ({tx}->{rx})")
        if by_id[tx].kind is NodeKind.DESTINATION:
            raise DanglingNode(f"link {lid}: the destination cannot transmit ({tx}->{rx})")
        if NodeKind.EAVESDROPPER in (by_id[tx].kind, by_id[rx].kind):
            raise BadParameter(f"link {lid}: eavesdropper links are implicit")
        rho = float(entry.get("rho", entry.get("csi_correlation", 1.0)))
        if not 0.0 <= rho <= 1.0:
            raise BadParameter(f"link {lid}: rho must lie in [0, 1], got {rho}")
        alpha = float(entry.get("temporal_alpha", 0.0))
        if not 0.0 <= alpha <= 1.0:
            raise BadParameter(f"link {lid}: temporal_alpha must lie in [0, 1], got {alpha}")
        default_k = DEFAULT_K_DB_SOURCE if by_id[tx].kind is NodeKind.SOURCE else DEFAULT_K_DB_RELAY
        links.append(LinkSpec(
            id=lid, tx=tx, rx=rx,
            avg_snr_db=_avg_snr_db(entry, by_id[tx], by_id[rx], pathloss, f"link {lid}"),
            rician_k=_k_linear(entry, default_k),
            csi_correlation=rho, temporal_alpha=alpha))
    links.sort(key=lambda l: l.id)

    _topological_order(nodes, links)  # raises CycleDetected
    _check_reachability(nodes, links)

    eve_links = {}
    if eve_cfg:
        eve_node = by_id[int(eve_cfg["id"])]
        overrides = {int(e["tx"]): e for e in (eve_cfg.get("links") or [])}
        transmitters = sorted({l.tx for l in links})
        for tx in overrides:
            if tx not in transmitters:
                raise BadParameter(f"eavesdropper link from {tx}: not a transmitting node")
        for tx in transmitters:
            entry = {k: v for k, v in eve_cfg.items() if k in ("avg_snr_db", "rician_k", "rician_k_db")}
            entry.update(overrides.get(tx, {}))
            eve_links[tx] = EveLink(
                tx=tx,
                avg_snr_db=_avg_snr_db(entry, by_id[tx], eve_node, pathloss,
                                       f"eavesdropper link from {tx}"),
                rician_k=_k_linear(entry, DEFAULT_K_DB_RELAY))

    return NetworkGraph(tuple(nodes), tuple(links), MappingProxyType(eve_links))


def _check_reachability(nodes, links):
    src = next(n.id for n in nodes if n.kind is NodeKind.SOURCE)
    dst = next(n.id for n in nodes if n.kind is NodeKind.DESTINATION)
    fwd = {n.id: [] for n in nodes}
    bwd = {n.id: [] for n in nodes}
    for l in links:
        fwd[l.tx].append(l.rx)
        bwd[l.rx].append(l.tx)

    def reach(start, adj):
        seen, stack = {start}, [start]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    good = reach(src, fwd) & reach(dst, bwd)
    for n in nodes:
        if n.kind is not NodeKind.EAVESDROPPER and n.id not in good:
            raise DanglingNode(f"node {n.id} is on no source->destination path")


# -- observations -------------------------------------------------------------

def normalize_snr(snr):
    """Clamp linear SNR to [-10, 40] dB and rescale to [0, 1]."""
    snr = np.asarray(snr, dtype=float)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(snr)
    db = np.clip(np.nan_to_num(db, nan=SNR_FLOOR_DB, neginf=SNR_FLOOR_DB), SNR_FLOOR_DB, SNR_CEIL_DB)
    return (db - SNR_FLOOR_DB) / (SNR_CEIL_DB - SNR_FLOOR_DB)


def local_observation_size(graph):
    return 2 + 2 * graph.max_degree


def local_observation_layout(graph, node):
    deg = graph.max_degree
    inc = [l.id for l in incident_links(graph, node)]
    nb = graph.neighbors[node]
    names = [f"occ[{node}]", f"age[{node}]"]
    names += [f"snr[link {inc[i]}]" if i < len(inc) else "pad" for i in range(deg)]
    names += [f"occ[{nb[i]}]" if i < len(nb) else "pad" for i in range(deg)]
    return names


def local_observation(graph, node, env):
    """Fixed-length view of one agent: itself, its links, its neighbours.

    Layout: own occupancy, own head-of-line age, estimated SNR of each
    incident link (ascending link id), occupancy of each one-hop neighbour
    (ascending node id); link and neighbour blocks zero-padded to the
    graph's maximum degree.
    """
    if node not in graph.node_by_id:
        raise UnknownNode(f"unknown node id {node}")
    if node not in graph.agents:
        raise NotAnAgent(f"node {node} is a {graph.node_by_id[node].kind.value}")
    deg = graph.max_degree
    obs = np.zeros(2 + 2 * deg)
    obs[0] = env.occupancy(node)
    obs[1] = env.hol_age(node)
    inc = [graph.link_index[l.id] for l in incident_links(graph, node)]
    obs[2:2 + len(inc)] = normalize_snr(env.channels.est_snr[inc])
    for i, nb in enumerate(graph.neighbors[node]):
        obs[2 + deg + i] = env.occupancy(nb)
    return obs


def global_observation_size(graph):
    return 2 * len(graph.relays) + len(graph.links)


def global_observation_layout(graph):
    return ([f"occ[{r}]" for r in graph.relays] + [f"age[{r}]" for r in graph.relays]
            + [f"snr[link {l.id}]" for l in graph.links])


def global_observation(graph, env):
    """Relay occupancies, relay head-of-line ages, then every estimated link SNR."""
    occ = [env.occupancy(r) for r in graph.relays]
    age = [env.hol_age(r) for r in graph.relays]
    return np.concatenate([occ, age, normalize_snr(env.channels.est_snr)])
