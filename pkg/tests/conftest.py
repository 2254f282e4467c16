import numpy as np
import pytest

from bacnsim.env import BacnEnv, EnvConfig
from bacnsim.topology import build_graph


def two_hop_config(n_relays=2, capacity=2, snr_db=10.0, k=0.0, rho=1.0, eve_snr_db=None):
    """Source 0, relays 1..n, destination n+1, optional eavesdropper 99."""
    dst = n_relays + 1
    nodes = [{"id": 0, "kind": "source"}, {"id": dst, "kind": "destination"}]
    nodes += [{"id": r, "kind": "relay", "capacity": capacity} for r in range(1, n_relays + 1)]
    links = []
    for r in range(1, n_relays + 1):
        links.append({"tx": 0, "rx": r, "avg_snr_db": snr_db, "rician_k": k, "rho": rho})
        links.append({"tx": r, "rx": dst, "avg_snr_db": snr_db, "rician_k": k, "rho": rho})
    cfg = {"nodes": nodes, "links": links}
    if eve_snr_db is not None:
        cfg["eavesdropper"] = {"id": 99, "avg_snr_db": eve_snr_db, "rician_k": 0.0}
    return cfg


def two_hop(**kw):
    return build_graph(two_hop_config(**kw))


def all_on_env(graph, **cfg):
    """Environment whose links are always on: every buffer-feasible link qualifies."""
    p = tuple(1.0 for _ in graph.links)
    return BacnEnv(graph, EnvConfig(channel_model="onoff", link_on_prob=p, **cfg))


def fill(env, relay, n, born=0):
    for _ in range(n):
        p = env._mint()
        p.born_slot = born
        env.buffers[relay].enqueue(p)


@pytest.fixture
def graph2():
    return two_hop()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
