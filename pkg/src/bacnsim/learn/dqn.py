"""Deep Q-network with experience replay, a target network and action masking."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import topology
from ..errors import Divergence
from ..rng import substream
from .artifact import PolicyArtifact, Stopwatch, TrainReport, episode_seed, masked_logits
from .mlp import Mlp, clip_by_global_norm, make_optimizer


@dataclass
class DQNConfig:
    hidden: tuple = (64, 64)
    gamma: float = 0.99
    lr: float = 3e-4
    optimizer: str = "sgd"
    momentum: float = 0.9
    replay_size: int = 10_000
    batch_size: int = 64
    target_sync: int = 200
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    episodes: int = 300
    episode_length: int | None = None
    learning_starts: int = 500
    train_every: int = 1
    max_grad_norm: float = 10.0


class Replay:
    def __init__(self, size, obs_size, n_actions):
        self.size = size
        self.obs = np.zeros((size, obs_size))
        self.next_obs = np.zeros((size, obs_size))
        self.action = np.zeros(size, dtype=np.int64)
        self.reward = np.zeros(size)
        self.next_mask = np.zeros((size, n_actions), dtype=bool)
        self.done = np.zeros(size, dtype=bool)
        self.n = 0
        self.i = 0

    def add(self, obs, action, reward, next_obs, next_mask, done=False):
        j = self.i
        self.obs[j], self.action[j], self.reward[j] = obs, action, reward
        self.next_obs[j], self.next_mask[j], self.done[j] = next_obs, next_mask, done
        self.i = (j + 1) % self.size
        self.n = min(self.n + 1, self.size)

    def sample(self, batch, rng):
        idx = rng.integers(self.n, size=batch)
        return (self.obs[idx], self.action[idx], self.reward[idx],
                self.next_obs[idx], self.next_mask[idx], self.done[idx])


class DQNAgent:
    def __init__(self, obs_size, n_actions, hyper, rng):
        self.hyper = hyper
        self.n_actions = n_actions
        self.q = Mlp((obs_size, *hyper.hidden, n_actions), rng)
        self.target = self.q.copy()
        self.opt = make_optimizer(hyper.optimizer, self.q.params, hyper.lr, hyper.momentum)

    def act(self, obs, mask, eps, rng):
        if rng.random() < eps:
            valid = np.flatnonzero(mask)
            return int(valid[rng.integers(len(valid))])
        return int(np.argmax(masked_logits(self.q.forward(obs), mask)))

    def sync_target(self):
        self.target = self.q.copy()

    def update(self, batch):
        """One gradient step on 0.5*(Q(s,a) - y)^2 with y from the target net."""
        obs, act, rew, nobs, nmask, done = batch
        nq = masked_logits(self.target.forward(nobs), nmask).max(axis=1)
        y = rew + self.hyper.gamma * np.where(done, 0.0, nq)
        q, acts = self.q.forward_cached(obs)
        rows = np.arange(len(act))
        err = q[rows, act] - y
        loss = 0.5 * float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise Divergence(f"non-finite DQN loss {loss}")
        g = np.zeros_like(q)
        g[rows, act] = err / len(act)
        grads = clip_by_global_norm(self.q.backward(acts, g), self.hyper.max_grad_norm)
        self.opt.step(self.q.params, grads)
        return loss


def dqn_train(env, hyper=None, seed=0):
    """Train on a centralized environment; returns (PolicyArtifact, TrainReport)."""
    hyper = hyper or DQNConfig()
    obs_size = topology.global_observation_size(env.graph)
    n_act = len(env.central_actions)
    agent = DQNAgent(obs_size, n_act, hyper, substream(seed, "init"))
    replay = Replay(hyper.replay_size, obs_size, n_act)
    rng = substream(seed, "explore")
    slots = hyper.episode_length or env.config.episode_length
    total = hyper.episodes * slots
    decay = max(1, int(hyper.eps_fraction * total))
    report = TrainReport("dqn", seed, asdict(hyper))
    t = 0
    with Stopwatch() as sw:
        for ep in range(hyper.episodes):
            env.reset(episode_seed(seed, ep, "train-episode"))
            obs, mask = env.global_observation(), env.central_mask()
            ret = 0.0
            for _ in range(slots):
                eps = hyper.eps_start + (hyper.eps_end - hyper.eps_start) * min(1.0, t / decay)
                a = agent.act(obs, mask, eps, rng)
                out = env.step(env.central_actions[a])
                nobs, nmask = env.global_observation(), env.central_mask()
                replay.add(obs, a, out.reward, nobs, nmask)
                obs, mask = nobs, nmask
                ret += out.reward
                t += 1
                if t >= hyper.learning_starts and t % hyper.train_every == 0:
                    agent.update(replay.sample(hyper.batch_size, rng))
                if t % hyper.target_sync == 0:
                    agent.sync_target()
            report.returns.append(ret / slots)
    report.wall_clock = sw.elapsed
    art = PolicyArtifact("central", algo="dqn", obs_size=obs_size, n_actions=n_act,
                         nets={"q": agent.q}, hyper=asdict(hyper))
    return art, report
