"""Epsilon-greedy tabular Q-learning on a quantized finite MDP."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import TooLarge
from ..rng import substream
from .artifact import Stopwatch, TrainReport

MAX_TABLE = 5_000_000


@dataclass
class QLearningConfig:
    episodes: int = 300
    episode_length: int = 200
    gamma: float = 0.99
    alpha: float | None = None   # None: per-pair step size 1 / n^alpha_power
    alpha_power: float = 0.6
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5


class _Sampler:
    """Draws next states from the sparse transition rows."""

    def __init__(self, mdp):
        self.rows = []
        for P in mdp.P:
            P = P.tocsr()
            self.rows.append((P.indptr, P.indices, P.data))

    def next(self, a, s, rng):
        indptr, idx, data = self.rows[a]
        lo, hi = indptr[s], indptr[s + 1]
        c = np.cumsum(data[lo:hi])
        k = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
        return int(idx[lo + min(k, hi - lo - 1)])


def tabular_q(mdp, hyper=None, seed=0):
    """Returns (Q table, greedy policy, TrainReport)."""
    hyper = hyper or QLearningConfig()
    S, A = mdp.n_states, mdp.n_actions
    if S * A > MAX_TABLE:
        raise TooLarge(f"Q table of {S}x{A} entries")
    rng = substream(seed, "qlearning")
    sampler = _Sampler(mdp)
    Q = np.zeros((S, A))
    Q[~mdp.valid.T] = -np.inf
    visits = np.zeros((S, A))
    valid_actions = [np.flatnonzero(mdp.valid[:, s]) for s in range(S)]
    init_c = np.cumsum(mdp.init)
    total = hyper.episodes * hyper.episode_length
    decay = max(1, int(hyper.eps_fraction * total))
    report = TrainReport("tabular_q", seed, asdict(hyper))
    t = 0
    with Stopwatch() as sw:
        for _ in range(hyper.episodes):
            s = int(np.searchsorted(init_c, rng.random() * init_c[-1], side="right"))
            ret = 0.0
            for _ in range(hyper.episode_length):
                eps = hyper.eps_start + (hyper.eps_end - hyper.eps_start) * min(1.0, t / decay)
                va = valid_actions[s]
                if rng.random() < eps:
                    a = int(va[rng.integers(len(va))])
                else:
                    a = int(va[np.argmax(Q[s, va])])
                r = mdp.R[a, s]
                s2 = sampler.next(a, s, rng)
                visits[s, a] += 1
                lr = hyper.alpha if hyper.alpha is not None else visits[s, a] ** -hyper.alpha_power
                target = r + hyper.gamma * Q[s2, valid_actions[s2]].max()
                Q[s, a] += lr * (target - Q[s, a])
                ret += r
                s = s2
                t += 1
            report.returns.append(ret / hyper.episode_length)
    report.wall_clock = sw.elapsed
    policy = np.array([int(valid_actions[s][np.argmax(Q[s, valid_actions[s]])]) for s in range(S)])
    return Q, policy, report
