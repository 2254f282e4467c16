"""Exact finite-MDP oracles on quantized instances.

Quantization turns every link into an i.i.d. Bernoulli on/off process
(on iff the fading supports the target rate), drops deadlines and the
eavesdropper, and assumes a backlogged source.  The resulting MDP has
state (relay occupancies, link on/off pattern) and the classical
centralized action set (Idle or one link, optionally joint matchings).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import topology
from .channel import rician_on_probability
from .env import BacnEnv, EnvConfig
from .errors import NotTwoHop, SingularChain, TooLarge

MAX_STATES = 1_000_000


@dataclass
class FiniteMDP:
    """Tabular MDP; ``P[a]`` is an (S, S) sparse row-stochastic matrix."""

    P: list
    R: np.ndarray          # (A, S) expected immediate reward
    valid: np.ndarray      # (A, S) action allowed in state
    gamma: float = 0.99
    init: np.ndarray | None = None
    # quantized-instance metadata (absent for hand-built MDPs)
    graph: object = None
    p_on: np.ndarray | None = None
    actions: tuple = ()
    occupancies: list | None = None

    @property
    def n_states(self):
        return self.R.shape[1]

    @property
    def n_actions(self):
        return self.R.shape[0]

    def row_sums(self):
        return np.stack([np.asarray(p.sum(axis=1)).ravel() for p in self.P])

    def state_index(self, occ, pattern_bits):
        """Index of (relay occupancies, link-on pattern as integer bits)."""
        return self._occ_index[tuple(occ)] * (1 << len(self.graph.links)) + pattern_bits

    def state_of(self, env):
        occ = tuple(len(env.buffers[r]) for r in self.graph.relays)
        on = env.channels.inst_snr > 0
        bits = int(sum(1 << i for i, b in enumerate(on) if b))
        return self.state_index(occ, bits)


def link_on_probabilities(graph, r0):
    """Pr[capacity(avg_snr*|h|^2) >= r0] for every link, closed form."""
    return np.array([rician_on_probability(l.avg_snr, l.rician_k, r0) for l in graph.links])


def quantize(graph, r0=1.0, p_on=None, joint=False, gamma=0.99):
    """Build the exact quantized MDP by exhaustive enumeration."""
    p = link_on_probabilities(graph, r0) if p_on is None else np.asarray(p_on, dtype=float)
    relays = graph.relays
    caps = [graph.capacity(r) for r in relays]
    L = len(graph.links)
    occs = list(itertools.product(*[range(c + 1) for c in caps]))
    n_pat = 1 << L
    S = len(occs) * n_pat
    if S > MAX_STATES:
        raise TooLarge(f"{S} states exceeds {MAX_STATES}")
    actions = topology.central_action_list(graph, joint)
    A = len(actions)
    occ_index = {o: i for i, o in enumerate(occs)}
    ridx = {r: i for i, r in enumerate(relays)}
    tx = [graph.link_by_id[l.id].tx for l in graph.links]
    rx = [graph.link_by_id[l.id].rx for l in graph.links]
    dst = graph.destination

    bits = (np.arange(n_pat)[:, None] >> np.arange(L)) & 1
    q = np.prod(np.where(bits == 1, p, 1.0 - p), axis=1)
    nz = np.flatnonzero(q > 0)
    qn = q[nz]

    R = np.zeros((A, S))
    valid = np.zeros((A, S), dtype=bool)
    next_occ = np.zeros((A, S), dtype=np.int64)
    for oi, occ in enumerate(occs):
        def has_pkt(n):
            return True if n == graph.source else occ[ridx[n]] > 0

        def has_room(n):
            return True if n == dst else occ[ridx[n]] < caps[ridx[n]]

        avail = [has_pkt(tx[i]) and has_room(rx[i]) for i in range(L)]
        for ai, act in enumerate(actions):
            idx = [graph.link_index[l] for l in act]
            new = list(occ)
            for i in idx:
                if tx[i] in ridx:
                    new[ridx[tx[i]]] -= 1
                if rx[i] in ridx:
                    new[ridx[rx[i]]] += 1
            gain = sum(rx[i] == dst for i in idx)
            ok_struct = all(avail[i] for i in idx)
            base = oi * n_pat
            for pat in range(n_pat):
                s = base + pat
                if ok_struct and all(bits[pat, i] for i in idx):
                    valid[ai, s] = True
                    R[ai, s] = gain
                    next_occ[ai, s] = occ_index[tuple(new)]
                else:
                    next_occ[ai, s] = oi

    P = []
    for ai in range(A):
        rows = np.repeat(np.arange(S), len(nz))
        cols = (next_occ[ai][:, None] * n_pat + nz[None, :]).ravel()
        vals = np.tile(qn, S)
        P.append(sparse.csr_matrix((vals, (rows, cols)), shape=(S, S)))
    init = np.zeros(S)
    init[occ_index[tuple(0 for _ in relays)] * n_pat + np.arange(n_pat)] = q
    mdp = FiniteMDP(P, R, valid, gamma, init, graph, p, actions, occs)
    mdp._occ_index = occ_index
    return mdp


def single_state_mdp(reward=1.0, gamma=0.9):
    P = [sparse.csr_matrix(np.ones((1, 1)))]
    return FiniteMDP(P, np.array([[reward]]), np.ones((1, 1), bool), gamma, np.ones(1))


def _q_values(mdp, V, gamma):
    Q = np.stack([mdp.R[a] + gamma * (mdp.P[a] @ V) for a in range(mdp.n_actions)])
    return np.where(mdp.valid, Q, -np.inf)


def greedy(Q, atol=1e-9):
    """Lowest-index action within ``atol`` of the row maximum."""
    best = Q.max(axis=0)
    return np.argmax(Q >= best - atol, axis=0)


def value_iteration(mdp, gamma=None, tol=1e-8, max_sweeps=1_000_000):
    """Discounted value iteration; returns (values, greedy policy, residual history)."""
    gamma = mdp.gamma if gamma is None else gamma
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mdp.n_states > MAX_STATES:
        raise TooLarge(f"{mdp.n_states} states")
    V = np.zeros(mdp.n_states)
    residuals = []
    for _ in range(max_sweeps):
        V_new = _q_values(mdp, V, gamma).max(axis=0)
        res = float(np.max(np.abs(V_new - V)))
        residuals.append(res)
        V = V_new
        if res < tol:
            break
    return V, greedy(_q_values(mdp, V, gamma)), residuals


def _lazy(P, tau=0.5):
    return tau * P + (1.0 - tau) * sparse.identity(P.shape[0], format="csr")


def optimal_average_reward(mdp, tol=1e-10, max_sweeps=1_000_000):
    """Optimal long-run reward per slot by relative value iteration.

    Runs on the aperiodic (lazy) transform, which leaves stationary
    distributions and hence every policy's average reward unchanged.
    Returns (gain, greedy policy).
    """
    Pl = [_lazy(p) for p in mdp.P]
    h = np.zeros(mdp.n_states)
    gain = 0.0
    for _ in range(max_sweeps):
        Q = np.stack([mdp.R[a] + Pl[a] @ h for a in range(mdp.n_actions)])
        Th = np.where(mdp.valid, Q, -np.inf).max(axis=0)
        diff = Th - h
        lo, hi = diff.min(), diff.max()
        h = Th - Th[0]
        if hi - lo < tol:
            gain = 0.5 * (lo + hi)
            break
    else:
        raise SingularChain("relative value iteration did not converge")
    Q = np.stack([mdp.R[a] + Pl[a] @ h for a in range(mdp.n_actions)])
    return float(gain), greedy(np.where(mdp.valid, Q, -np.inf))


def _cesaro_limit(P, d0, tol=1e-14, max_iter=2_000_000):
    """Long-run state distribution from ``d0`` (lazy power iteration)."""
    Pl = _lazy(sparse.csr_matrix(P)).T.tocsr()
    d = np.asarray(d0, dtype=float)
    for _ in range(max_iter):
        nd = Pl @ d
        if np.max(np.abs(nd - d)) < tol:
            return nd
        d = nd
    raise SingularChain("power iteration did not converge")


def policy_matrix(mdp, policy):
    """Transition matrix and reward vector under a (S,) or (S, A) policy."""
    S = mdp.n_states
    probs = np.zeros((S, mdp.n_actions))
    policy = np.asarray(policy)
    if policy.ndim == 1:
        probs[np.arange(S), policy] = 1.0
    else:
        probs = policy
    P = sum(sparse.diags(probs[:, a]) @ mdp.P[a] for a in range(mdp.n_actions))
    r = np.sum(probs * mdp.R.T, axis=1)
    return P.tocsr(), r


def policy_average_reward(mdp, policy):
    """Exact long-run reward per slot of a stationary policy started from ``mdp.init``."""
    P, r = policy_matrix(mdp, policy)
    d = _cesaro_limit(P, mdp.init)
    return float(d @ r)


def _check_two_hop(graph):
    src, dst = graph.source, graph.destination
    for r in graph.relays:
        ins = [graph.link_by_id[l].tx for l in graph.in_links[r]]
        outs = [graph.link_by_id[l].rx for l in graph.out_links[r]]
        if ins != [src] or outs != [dst]:
            raise NotTwoHop(f"relay {r} is not a single-layer relay")
    if any(graph.link_by_id[l].rx == dst for l in graph.out_links[src]):
        raise NotTwoHop("direct source->destination link present")


def maxlink_exact_outage(mdp):
    """Stationary outage probability of max-link on a quantized two-hop instance.

    With on/off links all "on" links tie, so max-link picks uniformly among
    qualifying links.  The buffer-occupancy chain is solved from the empty
    start; outage is the long-run probability that no link qualifies.
    """
    g = mdp.graph
    if g is None:
        raise NotTwoHop("maxlink_exact_outage needs a quantized instance")
    _check_two_hop(g)
    L = len(g.links)
    n_pat = 1 << L
    n_occ = len(mdp.occupancies)
    single = {act[0]: ai for ai, act in enumerate(mdp.actions) if len(act) == 1}
    M = np.zeros((n_occ, n_occ))
    p_out = np.zeros(n_occ)
    bits = (np.arange(n_pat)[:, None] >> np.arange(L)) & 1
    q = np.prod(np.where(bits == 1, mdp.p_on, 1.0 - mdp.p_on), axis=1)
    for oi in range(n_occ):
        for pat in range(n_pat):
            if q[pat] == 0:
                continue
            s = oi * n_pat + pat
            cands = [single[l.id] for l in g.links if mdp.valid[single[l.id], s]]
            if not cands:
                p_out[oi] += q[pat]
                M[oi, oi] += q[pat]
                continue
            for ai in cands:
                nxt = mdp.P[ai][s].indices[0] // n_pat
                M[oi, nxt] += q[pat] / len(cands)
    d0 = np.zeros(n_occ)
    d0[mdp.occupancies.index(tuple(0 for _ in g.relays))] = 1.0
    pi = _cesaro_limit(M, d0)
    return float(pi @ p_out)


def simulate_maxlink_outage(n_relays, capacity, p, slots, rng, chains=2000, burn_in=500):
    """Vectorized Monte-Carlo max-link outage on a symmetric two-hop on/off instance.

    Runs ``chains`` independent chains for ``slots/chains`` measured slots
    each after ``burn_in`` slots; returns (outage estimate, standard error).
    """
    per_chain = int(np.ceil(slots / chains))
    K = n_relays
    occ = np.zeros((chains, K), dtype=np.int64)
    outages = np.zeros(chains)
    rows = np.arange(chains)
    for t in range(burn_in + per_chain):
        on = rng.random((chains, 2 * K)) < p
        qual = np.concatenate([on[:, :K] & (occ < capacity), on[:, K:] & (occ > 0)], axis=1)
        count = qual.sum(axis=1)
        idle = count == 0
        if t >= burn_in:
            outages += idle
        pick = np.floor(rng.random(chains) * np.maximum(count, 1)).astype(np.int64)
        choice = np.argmax(np.cumsum(qual, axis=1) > pick[:, None], axis=1)
        act = rows[~idle]
        c = choice[~idle]
        fill = c < K
        occ[act[fill], c[fill]] += 1
        occ[act[~fill], c[~fill] - K] -= 1
    frac = outages / per_chain
    return float(frac.mean()), float(frac.std(ddof=1) / np.sqrt(chains))


def quantized_env(mdp, episode_length=5000, **overrides):
    """Simulation environment whose dynamics match ``mdp`` exactly."""
    cfg = EnvConfig(channel_model="onoff", link_on_prob=tuple(mdp.p_on),
                    episode_length=episode_length,
                    joint_actions=any(len(a) > 1 for a in mdp.actions), **overrides)
    return BacnEnv(mdp.graph, cfg)
