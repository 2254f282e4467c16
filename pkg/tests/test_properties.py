import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from bacnsim import policies
from bacnsim.buffering import NO_DEADLINE, Packet, RelayBuffer
from bacnsim.channel import capacity, draw_slot_channels, secrecy_rate
from bacnsim.env import BacnEnv, EnvConfig
from bacnsim.topology import build_graph

from .conftest import all_on_env, fill, two_hop, two_hop_config

snr = st.floats(0, 1e6, allow_nan=False)


@given(snr, snr, snr)
def test_rate_monotonicity(a, b, eve):
    lo, hi = sorted((a, b))
    assert capacity(lo) <= capacity(hi)
    assert secrecy_rate(lo, eve) <= secrecy_rate(hi, eve)
    assert secrecy_rate(eve, lo) >= secrecy_rate(eve, hi)
    assert secrecy_rate(a, eve) >= 0


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 20))
def test_perfect_csi_argmax_equivalence(seed, k):
    g = two_hop(n_relays=3, rho=1.0, k=k)
    ch = draw_slot_channels(g, np.random.default_rng(seed))
    assert np.argmax(ch.est_snr) == np.argmax(ch.inst_snr)


@given(st.lists(st.tuples(st.sampled_from("edx"), st.integers(0, 30)), max_size=60),
       st.integers(1, 5), st.integers(1, 6))
def test_buffer_matches_list_model(ops, cap, deadline):
    buf, model, now = RelayBuffer(cap), [], 0
    for i, (op, dt) in enumerate(ops):
        now += dt % 3
        if op == "e" and len(model) < cap:
            buf.enqueue(Packet(i, now))
            model.append((i, now))
        elif op == "d" and model:
            assert buf.dequeue().id == model.pop(0)[0]
        elif op == "x":
            dropped = [p.id for p in buf.expire(now, deadline)]
            assert dropped == [pid for pid, born in model if now - born > deadline]
            model = [(pid, born) for pid, born in model if now - born <= deadline]
        assert 0 <= len(buf) <= cap
        assert [p.id for p in buf] == [pid for pid, _ in model]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 3), st.integers(1, 3),
       st.sampled_from([2, 5, NO_DEADLINE]), st.sampled_from(["priority", "collision"]),
       st.sampled_from(["drop", "keep"]))
def test_conservation_under_random_agents(seed, n_relays, cap, deadline, arbitration, expire_mode):
    g = two_hop(n_relays=n_relays, capacity=cap, snr_db=3, rho=0.7)
    env = BacnEnv(g, EnvConfig(mode="decentralized", strict=False, deadline=deadline,
                               arbitration=arbitration, expire_mode=expire_mode,
                               debug=True)).reset(seed)
    rng = np.random.default_rng(seed)
    for _ in range(200):
        env.step({a: acts[rng.integers(len(acts))] for a, acts in env.agent_actions.items()})
        led = env.ledger
        assert env.created == led.delivered + led.expired + env.queued
        assert all(len(b) <= b.capacity for b in env.buffers.values())
        if deadline == NO_DEADLINE:
            assert led.expired == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1e4), min_size=6, max_size=6), st.floats(0.1, 100),
       st.lists(st.integers(0, 2), min_size=3, max_size=3))
def test_max_link_scale_invariance(snrs, scale, occ):
    g = two_hop(n_relays=3, capacity=2)
    env = all_on_env(g).reset(0)
    for r, n in zip(g.relays, occ):
        fill(env, r, n)
    snrs = np.array(snrs)
    env.set_snr(est=snrs)
    q = env.qualifying_links()
    a = policies.max_link(env, None, np.random.default_rng(0))
    env.set_snr(est=snrs * scale)
    b = policies.max_link(env, None, np.random.default_rng(0))
    if q == env.qualifying_links():
        assert a == b


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(policies.SCHEMES)),
       st.lists(st.floats(0, 100), min_size=6, max_size=6),
       st.lists(st.integers(0, 2), min_size=3, max_size=3), st.integers(0, 1000))
def test_schemes_return_qualifying_or_idle(name, snrs, occ, seed):
    g = two_hop(n_relays=3, capacity=2)
    env = all_on_env(g).reset(0)
    for r, n in zip(g.relays, occ):
        fill(env, r, n)
    env.set_snr(est=snrs)
    q = env.qualifying_links()
    a = policies.SCHEMES[name](env, None, np.random.default_rng(seed))
    assert (a is policies.IDLE) == (not q)
    if a is not None:
        assert a in q


@given(st.permutations(range(6)))
def test_build_graph_canonical(perm):
    cfg = two_hop_config(n_relays=3)
    base = build_graph(cfg)
    cfg["links"] = [cfg["links"][i] for i in perm]
    assert build_graph(cfg) == base
