import numpy as np
import pytest
from scipy import stats

from bacnsim import errors
from bacnsim.channel import (
    ChannelModel, capacity, draw_slot_channels, outdate, rayleigh_on_probability,
    rician_on_probability, rician_on_probability_mc, sample_rician, secrecy_rate,
)
from bacnsim.topology import build_graph

from .conftest import two_hop, two_hop_config


def test_rayleigh_power_is_exponential(rng):
    h = sample_rician(0.0, rng, 100_000)
    res = stats.kstest(np.abs(h) ** 2, "expon")
    assert res.pvalue > 0.01


def test_pure_los_limit(rng):
    h = sample_rician(1e9, rng, 1000)
    assert np.max(np.abs(np.abs(h) ** 2 - 1)) < 1e-3


@pytest.mark.parametrize("k", [0.0, 3.0, 10.0])
def test_unit_mean_power(k, rng):
    h = sample_rician(k, rng, 1_000_000)
    assert abs(np.mean(np.abs(h) ** 2) - 1) < 0.01


def test_scalar_draw_is_complex(rng):
    assert isinstance(sample_rician(2.0, rng), complex)


@pytest.mark.parametrize("k", [-1.0, float("nan"), float("inf")])
def test_bad_k(k, rng):
    with pytest.raises(errors.BadParameter):
        sample_rician(k, rng)


def test_outdate_perfect_csi_is_exact(rng):
    h = sample_rician(3.0, rng, 100)
    assert outdate(h, 1.0, rng, k=3.0) is h


def test_outdate_independent_at_zero(rng):
    h = sample_rician(0.0, rng, 1_000_000)
    e = outdate(h, 0.0, rng)
    assert abs(np.corrcoef(np.abs(h) ** 2, np.abs(e) ** 2)[0, 1]) < 0.01


def test_outdate_correlation_rayleigh(rng):
    h = sample_rician(0.0, rng, 1_000_000)
    e = outdate(h, 0.9, rng)
    assert np.corrcoef(h.real, e.real)[0, 1] == pytest.approx(0.9, abs=0.01)


@pytest.mark.parametrize("k", [0.0, 3.0])
def test_outdate_preserves_marginal(k, rng):
    h = sample_rician(k, rng, 100_000)
    e = outdate(h, 0.6, rng, k=k)
    ref = sample_rician(k, rng, 100_000)
    assert stats.ks_2samp(np.abs(e) ** 2, np.abs(ref) ** 2).pvalue > 0.01


@pytest.mark.parametrize("rho", [-0.1, 1.5, float("nan")])
def test_outdate_bad_rho(rho, rng):
    with pytest.raises(errors.BadParameter):
        outdate(1 + 0j, rho, rng)


def test_capacity_examples():
    assert capacity(0) == 0
    assert capacity(1) == 1.0
    assert capacity(15) == 4.0
    with pytest.raises(errors.BadParameter):
        capacity(-1)
    with pytest.raises(errors.BadParameter):
        capacity(float("nan"))


def test_secrecy_rate_examples():
    assert secrecy_rate(7, 7) == 0
    assert secrecy_rate(15, 0) == 4.0
    assert secrecy_rate(1, 3) == 0
    with pytest.raises(errors.BadParameter):
        secrecy_rate(-1, 0)


def test_slot_draw_deterministic():
    g = build_graph(two_hop_config(eve_snr_db=0))
    a = draw_slot_channels(g, np.random.default_rng(7))
    b = draw_slot_channels(g, np.random.default_rng(7))
    assert np.array_equal(a.true_gain, b.true_gain)
    assert np.array_equal(a.eve_true_gain, b.eve_true_gain)
    assert len(a) == 4 + 3
    assert set(a.as_map()) == {0, 1, 2, 3, ("eve", 0), ("eve", 1), ("eve", 2)}


def test_perfect_csi_slot():
    g = two_hop(rho=1.0, k=2.0)
    ch = draw_slot_channels(g, np.random.default_rng(1))
    assert np.array_equal(ch.est_snr, ch.inst_snr)
    s = ch.link_state(2)
    assert s.est_gain == s.true_gain and s.inst_snr == pytest.approx(s.avg_snr * abs(s.true_gain) ** 2)


def test_outdated_slot_differs():
    g = two_hop(rho=0.5)
    ch = draw_slot_channels(g, np.random.default_rng(1))
    assert not np.array_equal(ch.est_snr, ch.inst_snr)


def test_temporal_correlation():
    cfg = two_hop_config()
    for l in cfg["links"]:
        l["temporal_alpha"] = 0.95
    model = ChannelModel(build_graph(cfg))
    rng = np.random.default_rng(0)
    prev = model.draw(rng)
    xs, ys = [], []
    for _ in range(20_000):
        cur = model.draw(rng, prev=prev)
        xs.append(prev.true_gain[0].real)
        ys.append(cur.true_gain[0].real)
        prev = cur
    assert np.corrcoef(xs, ys)[0, 1] == pytest.approx(0.95, abs=0.02)
    assert np.var(ys) == pytest.approx(0.5, rel=0.1)


def test_rayleigh_on_probability():
    assert rayleigh_on_probability(10.0, 1.0) == pytest.approx(0.904837418, abs=1e-9)
    mc = rician_on_probability_mc(10.0, 0.0, 1.0, np.random.default_rng(3))
    assert mc == pytest.approx(0.9048, abs=0.002)


@pytest.mark.parametrize("k", [1.0, 5.0])
def test_rician_on_probability_closed_form_vs_mc(k):
    exact = rician_on_probability(3.0, k, 1.0)
    mc = rician_on_probability_mc(3.0, k, 1.0, np.random.default_rng(4))
    assert abs(exact - mc) < 4 * np.sqrt(exact * (1 - exact) / 1e6)
