import numpy as np
import pytest

from bacnsim import errors, policies
from bacnsim.buffering import Packet
from bacnsim.env import BacnEnv, EnvConfig, StepOutcome, reset, reward

from .conftest import all_on_env, fill, two_hop


def test_reset_deterministic_and_empty(graph2):
    a = reset(graph2, EnvConfig(), 5)
    b = reset(graph2, EnvConfig(), 5)
    assert a.slot == 0
    assert all(len(buf) == 0 for buf in a.buffers.values())
    assert np.array_equal(a.channels.true_gain, b.channels.true_gain)
    assert np.array_equal(a.global_observation(), b.global_observation())


@pytest.mark.parametrize("bad", [{"r0": 0}, {"rs": -1}, {"deadline": 0}, {"mode": "both"},
                                 {"channel_model": "onoff"}, {"arrival_rate": 2}])
def test_bad_config(bad):
    with pytest.raises(errors.BadConfig):
        EnvConfig(**bad)


def test_unknown_config_key():
    with pytest.raises(errors.BadConfig):
        EnvConfig.from_dict({"deadlin": 3})


def test_idle_step(graph2):
    env = all_on_env(graph2, deadline=3).reset(0)
    fill(env, 1, 1, born=-3)  # will be older than the deadline at the next slot
    out = env.step(None)
    assert out.moved == [] and len(out.expired) == 1
    assert out.reward == -1
    assert len(env.buffers[2]) == 0


def test_perfect_csi_success():
    g = two_hop(rho=1.0, snr_db=5)
    env = BacnEnv(g, EnvConfig()).reset(1)
    for _ in range(200):
        a = policies.max_link(env, None, np.random.default_rng(0))
        before = env.occupancy(1)
        out = env.step(a)
        assert out.failed == []
        if a == 0:
            assert env.occupancy(1) == before + 0.5


def test_imperfect_csi_can_fail():
    g = two_hop(rho=0.3, snr_db=5)
    env = BacnEnv(g, EnvConfig()).reset(1)
    rng = np.random.default_rng(0)
    fails = sum(len(env.step(policies.max_link(env, None, rng)).failed) for _ in range(2000))
    assert fails > 0


def test_decentralized_priority_arbitration():
    g = two_hop(n_relays=1, capacity=2)
    env = all_on_env(g, mode="decentralized").reset(0)
    fill(env, 1, 1)
    out = env.step({0: 0, 1: 1})
    # the relay is one hop from the destination, the source two: relay wins
    assert out.suppressed == [(0, 0)]
    assert out.moved == [1]
    assert len(env.buffers[1]) == 0
    assert out.reward == 1


def test_decentralized_collision_mode():
    g = two_hop(n_relays=1, capacity=2)
    env = all_on_env(g, mode="decentralized", arbitration="collision").reset(0)
    fill(env, 1, 1)
    out = env.step({0: 0, 1: 1})
    assert out.moved == [] and sorted(out.failed) == [0, 1]
    assert len(env.buffers[1]) == 1


def test_decentralized_parallel_links():
    g = two_hop()
    env = all_on_env(g, mode="decentralized").reset(0)
    fill(env, 2, 1)
    out = env.step({0: 0, 1: None, 2: 3})
    assert sorted(out.moved) == [0, 3]
    assert out.suppressed == []


def test_strict_rejects_non_qualifying(graph2):
    env = all_on_env(graph2).reset(0)
    with pytest.raises(errors.IllegalAction):
        env.step(2)  # relay 1 is empty


def test_permissive_failure(graph2):
    env = all_on_env(graph2, strict=False).reset(0)
    out = env.step(2)
    assert out.failed == [2] and out.moved == []


def test_centralized_one_link_unless_joint(graph2):
    env = all_on_env(graph2).reset(0)
    fill(env, 2, 1)
    with pytest.raises(errors.IllegalAction):
        env.step((0, 3))
    env = all_on_env(graph2, joint_actions=True).reset(0)
    fill(env, 2, 1)
    assert sorted(env.step((0, 3)).moved) == [0, 3]


def test_not_an_agent(graph2):
    env = all_on_env(graph2, mode="decentralized").reset(0)
    with pytest.raises(errors.NotAnAgent):
        env.step({3: None})


def test_reward_examples():
    cfg = EnvConfig()
    assert reward(StepOutcome(secure_in_time=1), cfg) == 1
    assert reward(StepOutcome(expired=[Packet(0, 0), Packet(1, 0)]), cfg) == -2
    # intercepted but in time: no +1 and a sigma penalty, net -1
    assert reward(StepOutcome(insecure_deliveries=1), cfg) == -1
    assert reward(StepOutcome(secure_in_time=2, expired=[Packet(0, 0)]),
                  EnvConfig(beta=0.5)) == 1.5


def test_intercepted_delivery_worked_example():
    # the eavesdropper (60 dB) out-hears every 40 dB hop, so each hop is intercepted
    g = two_hop(n_relays=1, eve_snr_db=60)
    env = BacnEnv(g, EnvConfig(rs=0.5)).reset(0)
    env.set_snr(est=[1e4, 1e4], inst=[1e4, 1e4])
    out = env.step(0)
    assert out.intercepted == [0] and out.reward == 0
    env.set_snr(est=[1e4, 1e4], inst=[1e4, 1e4])
    out = env.step(1)
    assert out.insecure_deliveries == 1 and out.secure_in_time == 0
    assert out.reward == -1
    assert env.ledger.delivered == 1 and env.ledger.delivered_secure_in_time == 0


def test_delay_counts_slots(graph2):
    env = all_on_env(graph2).reset(0)
    env.step(0)
    env.step(2)
    assert env.ledger.histogram == {1: 1}


def test_conservation_and_half_duplex_in_debug():
    g = two_hop(n_relays=3, snr_db=3, rho=0.8)
    env = BacnEnv(g, EnvConfig(mode="decentralized", deadline=4, debug=True, strict=False)).reset(2)
    rng = np.random.default_rng(0)
    for _ in range(3000):
        act = {a: acts[rng.integers(len(acts))] for a, acts in env.agent_actions.items()}
        env.step(act)
    led = env.ledger
    assert env.created == led.delivered + led.expired + env.queued
    assert led.expired > 0


def test_reward_bounded_by_destination_links():
    g = two_hop(n_relays=3)
    env = all_on_env(g, joint_actions=True).reset(0)
    rng = np.random.default_rng(0)
    for _ in range(500):
        mask = env.central_mask()
        idx = rng.choice(np.flatnonzero(mask))
        r = env.step(env.central_actions[idx]).reward
        assert r in (0, 1, 2, 3)


def test_trajectory_determinism(graph2):
    def run():
        env = BacnEnv(graph2, EnvConfig(deadline=5)).reset(9)
        rng = np.random.default_rng(1)
        return [env.step(policies.max_link(env, None, rng)).reward for _ in range(300)], env.ledger
    (r1, l1), (r2, l2) = run(), run()
    assert r1 == r2 and l1 == l2


def test_bernoulli_source():
    g = two_hop()
    env = BacnEnv(g, EnvConfig(source="bernoulli", arrival_rate=0.3)).reset(0)
    rng = np.random.default_rng(0)
    for _ in range(5000):
        env.step(policies.max_link(env, None, rng))
    assert env.created == pytest.approx(1500, rel=0.1)
