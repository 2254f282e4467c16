"""Clipped-surrogate PPO (centralized) and MAPPO (decentralized actors, central critic).

Both use generalized advantage estimation on the shared team reward,
an entropy bonus, and masked categorical policies so that only
qualifying links are ever sampled.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import topology
from ..errors import Divergence
from ..rng import substream
from .artifact import PolicyArtifact, Stopwatch, TrainReport, episode_seed, softmax_masked
from .mlp import Mlp, clip_by_global_norm, make_optimizer


@dataclass
class PPOConfig:
    hidden: tuple = (64, 64)
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    optimizer: str = "sgd"
    momentum: float = 0.9
    epochs: int = 4
    minibatch: int = 256
    rollout: int = 2048
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    episodes: int = 20
    episode_length: int | None = None
    normalize_adv: bool = True


def clipped_surrogate(ratio, adv, clip):
    """Per-sample clipped objective, its derivative w.r.t. the ratio, and the ratio used."""
    used = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    unclipped = ratio * adv
    clipped = used * adv
    objective = np.minimum(unclipped, clipped)
    dratio = np.where(unclipped <= clipped, adv, 0.0)
    return objective, dratio, used


def gae(rewards, values, boundary, boundary_value, gamma, lam):
    """Advantages and returns; ``boundary[t]`` cuts the trace and bootstraps ``boundary_value[t]``."""
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        if boundary[t]:
            next_v, running = boundary_value[t], 0.0
        else:
            next_v = values[t + 1]
        delta = rewards[t] + gamma * next_v - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv, adv + values


class Actor:
    def __init__(self, obs_size, n_actions, hyper, rng):
        self.net = Mlp((obs_size, *hyper.hidden, n_actions), rng, out_scale=0.01)
        self.opt = make_optimizer(hyper.optimizer, self.net.params, hyper.lr, hyper.momentum)
        self.hyper = hyper

    def sample(self, obs, mask, rng):
        p = softmax_masked(self.net.forward(obs), mask)
        a = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        a = min(a, len(p) - 1)
        while not mask[a]:
            a -= 1
        return a, float(np.log(p[a]))

    def loss_grads(self, obs, actions, masks, old_logp, adv):
        """Gradients of -(surrogate + ent_coef * entropy), averaged over the batch."""
        h = self.hyper
        logits, acts = self.net.forward_cached(obs)
        p = softmax_masked(logits, masks)
        rows = np.arange(len(actions))
        with np.errstate(divide="ignore", invalid="ignore"):
            logp_all = np.where(masks, np.log(np.where(masks, p, 1.0)), 0.0)
        logp = logp_all[rows, actions]
        ratio = np.exp(logp - old_logp)
        obj, dratio, used = clipped_surrogate(ratio, adv, h.clip)
        B = len(actions)
        dlogp = -(dratio * ratio) / B
        onehot = np.zeros_like(p)
        onehot[rows, actions] = 1.0
        g = dlogp[:, None] * (onehot - p)
        entropy = -np.sum(p * logp_all, axis=1)
        if h.ent_coef:
            dH = -p * (logp_all + entropy[:, None])
            g -= h.ent_coef * dH / B
        g = np.where(masks, g, 0.0)
        stats = {"surrogate": float(obj.mean()), "entropy": float(entropy.mean()),
                 "ratio_used_min": float(used.min()), "ratio_used_max": float(used.max())}
        return self.net.backward(acts, g), stats

    def update(self, obs, actions, masks, old_logp, adv):
        grads, stats = self.loss_grads(obs, actions, masks, old_logp, adv)
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise Divergence("non-finite policy gradient")
        self.opt.step(self.net.params, clip_by_global_norm(grads, self.hyper.max_grad_norm))
        return stats


class Critic:
    def __init__(self, obs_size, hyper, rng):
        self.net = Mlp((obs_size, *hyper.hidden, 1), rng)
        self.opt = make_optimizer(hyper.optimizer, self.net.params, hyper.lr, hyper.momentum)
        self.hyper = hyper

    def value(self, obs):
        return float(self.net.forward(obs)[0])

    def update(self, obs, returns):
        v, acts = self.net.forward_cached(obs)
        err = v[:, 0] - returns
        loss = 0.5 * float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise Divergence(f"non-finite value loss {loss}")
        g = (self.hyper.vf_coef * err / len(returns))[:, None]
        grads = clip_by_global_norm(self.net.backward(acts, g), self.hyper.max_grad_norm)
        self.opt.step(self.net.params, grads)
        return loss


def _normalize(adv, on):
    if not on:
        return adv
    sd = adv.std()
    return (adv - adv.mean()) / sd if sd > 1e-8 else adv


class _Rollout:
    def __init__(self):
        self.clear()

    def clear(self):
        self.gobs, self.values, self.rewards = [], [], []
        self.boundary, self.boundary_value = [], []
        self.per_agent = {}

    def __len__(self):
        return len(self.rewards)

    def add_agent(self, key, obs, action, mask, logp):
        buf = self.per_agent.setdefault(key, ([], [], [], []))
        buf[0].append(obs)
        buf[1].append(action)
        buf[2].append(mask)
        buf[3].append(logp)


def _train(env, hyper, seed, decentral):
    g = env.graph
    gobs_size = topology.global_observation_size(g)
    init = substream(seed, "init")
    if decentral:
        keys = g.agents
        obs_size = topology.local_observation_size(g)
        actors = {a: Actor(obs_size, len(env.agent_actions[a]), hyper, init) for a in keys}
    else:
        keys = ("central",)
        obs_size = gobs_size
        actors = {"central": Actor(obs_size, len(env.central_actions), hyper, init)}
    critic = Critic(gobs_size, hyper, init)
    rng = substream(seed, "explore")
    mb_rng = substream(seed, "minibatch")
    slots = hyper.episode_length or env.config.episode_length
    report = TrainReport("mappo" if decentral else "ppo", seed, asdict(hyper))
    roll = _Rollout()

    def update(last_gobs):
        roll.boundary[-1] = True
        roll.boundary_value[-1] = critic.value(last_gobs)
        values = np.array(roll.values)
        adv, ret = gae(np.array(roll.rewards), values, roll.boundary,
                       roll.boundary_value, hyper.gamma, hyper.lam)
        gobs = np.array(roll.gobs)
        data = {k: tuple(np.array(x) for x in roll.per_agent[k]) for k in keys}
        n = len(roll)
        for _ in range(hyper.epochs):
            perm = mb_rng.permutation(n)
            for lo in range(0, n, hyper.minibatch):
                idx = perm[lo:lo + hyper.minibatch]
                a_mb = _normalize(adv[idx], hyper.normalize_adv)
                for k in keys:
                    o, act, m, lp = data[k]
                    actors[k].update(o[idx], act[idx], m[idx], lp[idx], a_mb)
                critic.update(gobs[idx], ret[idx])
        roll.clear()

    with Stopwatch() as sw:
        for ep in range(hyper.episodes):
            env.reset(episode_seed(seed, ep, "train-episode"))
            ret = 0.0
            for t in range(slots):
                gobs = env.global_observation()
                if decentral:
                    masks = env.agent_masks()
                    action = {}
                    for a in keys:
                        o = env.local_observation(a)
                        i, lp = actors[a].sample(o, masks[a], rng)
                        roll.add_agent(a, o, i, masks[a], lp)
                        action[a] = env.agent_actions[a][i]
                else:
                    mask = env.central_mask()
                    i, lp = actors["central"].sample(gobs, mask, rng)
                    roll.add_agent("central", gobs, i, mask, lp)
                    action = env.central_actions[i]
                roll.gobs.append(gobs)
                roll.values.append(critic.value(gobs))
                out = env.step(action)
                roll.rewards.append(out.reward)
                last = t == slots - 1
                roll.boundary.append(last)
                roll.boundary_value.append(critic.value(env.global_observation()) if last else 0.0)
                ret += out.reward
                if len(roll) >= hyper.rollout:
                    update(env.global_observation())
            report.returns.append(ret / slots)
        if len(roll):
            update(env.global_observation())
    report.wall_clock = sw.elapsed
    if decentral:
        nets = {f"actor[{a}]": actors[a].net for a in keys}
        art = PolicyArtifact("decentral", algo="mappo", obs_size=obs_size, nets=nets,
                             agents=tuple(keys), hyper=asdict(hyper))
    else:
        art = PolicyArtifact("central", algo="ppo", obs_size=obs_size,
                             n_actions=len(env.central_actions),
                             nets={"actor": actors["central"].net}, hyper=asdict(hyper))
    return art, report


def ppo_train(env, hyper=None, seed=0):
    """Centralized PPO on the global observation; returns (PolicyArtifact, TrainReport)."""
    return _train(env, hyper or PPOConfig(), seed, decentral=False)


def mappo_train(env, hyper=None, seed=0):
    """One actor per agent on its local observation, one critic on the global one."""
    return _train(env, hyper or PPOConfig(), seed, decentral=True)
