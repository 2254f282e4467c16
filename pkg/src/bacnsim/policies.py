"""Heuristic relay-selection schemes for the centralized (one link per slot) setting.

Every scheme first restricts itself to the qualifying links (packet at the
transmitter, room at the receiver, estimated capacity at least the target
rate, optional secrecy gate), scores them, and breaks remaining ties
uniformly at random with the supplied generator.  ``None`` means Idle.

The buffer-state-based and deviation-value scoring rules are this
package's reconstruction of the published schemes:

* buffer-state-based: maximise the number of links that remain available
  on buffer grounds alone after the transfer, then the estimated SNR;
* deviation-value: minimise the post-transfer total absolute deviation of
  relay occupancies from ``target_occupancy * capacity``, then the SNR.
"""
from __future__ import annotations

from .errors import UnknownLink

IDLE = None


def qualifies(link_id, env, params=None):
    if link_id not in env.graph.link_by_id:
        raise UnknownLink(f"unknown link {link_id}")
    return env.qualifies(link_id, params)


def _pick(candidates, rng):
    if not candidates:
        return IDLE
    if len(candidates) == 1:
        return candidates[0]
    return candidates[int(rng.integers(len(candidates)))]


def _best(links, score):
    """Links attaining the maximum of ``score``."""
    if not links:
        return []
    vals = {l: score(l) for l in links}
    top = max(vals.values())
    return [l for l in links if vals[l] == top]


def _est_snr(env):
    snr = env.channels.est_snr
    idx = env.graph.link_index
    return lambda l: snr[idx[l]]


def _occupancy_counts(env):
    return {r: len(b) for r, b in env.buffers.items()}


def _after(env, counts, link_id):
    l = env.graph.link_by_id[link_id]
    post = dict(counts)
    if l.tx in post:
        post[l.tx] -= 1
    if l.rx in post:
        post[l.rx] += 1
    return post


def _buffer_available(env, counts):
    """Links with a packet at tx and room at rx, fading ignored."""
    g = env.graph
    n = 0
    for l in g.links:
        has_pkt = counts[l.tx] > 0 if l.tx in counts else env.has_packet(l.tx)
        has_room = counts[l.rx] < g.capacity(l.rx) if l.rx in counts else True
        n += has_pkt and has_room
    return n


def max_link(env, params=None, rng=None):
    """Qualifying link with the largest estimated SNR."""
    q = env.qualifying_links(params)
    return _pick(_best(q, _est_snr(env)), rng)


def buffer_state_based(env, params=None, rng=None):
    q = env.qualifying_links(params)
    counts = _occupancy_counts(env)
    keep = _best(q, lambda l: _buffer_available(env, _after(env, counts, l)))
    return _pick(_best(keep, _est_snr(env)), rng)


def total_deviation(env, counts, target_occupancy):
    g = env.graph
    return sum(abs(counts[r] - target_occupancy * g.capacity(r)) for r in g.relays)


def deviation_value(env, params=None, rng=None):
    params = params or env.scheme_params()
    q = env.qualifying_links(params)
    counts = _occupancy_counts(env)
    keep = _best(q, lambda l: -total_deviation(env, _after(env, counts, l), params.target_occupancy))
    return _pick(_best(keep, _est_snr(env)), rng)


def random_available(env, params=None, rng=None):
    return _pick(env.qualifying_links(params), rng)


SCHEMES = {
    "max_link": max_link,
    "bsb": buffer_state_based,
    "dv": deviation_value,
    "random": random_available,
}
