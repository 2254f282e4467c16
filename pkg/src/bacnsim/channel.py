"""Rician block fading with outdated CSI, Shannon capacity and secrecy rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import ncx2

from .errors import BadParameter

# SNR reported for an "on" link in the quantized on/off channel model.
ONOFF_ON_SNR = 1.0e4


def _check_k(k):
    k = np.asarray(k, dtype=float)
    if not np.all(np.isfinite(k)) or np.any(k < 0):
        raise BadParameter(f"Rician K must be finite and >= 0, got {k}")
    return k


def _cn(rng, size):
    """Unit-variance circularly-symmetric complex normal samples."""
    z = rng.standard_normal(size=(2,) + tuple(np.atleast_1d(size)) if size is not None else 2)
    return (z[0] + 1j * z[1]) * math.sqrt(0.5)


def los_and_scatter(k):
    """Amplitudes of the LOS component and of the diffuse component."""
    k = _check_k(k)
    return np.sqrt(k / (k + 1.0)), np.sqrt(1.0 / (k + 1.0))


def sample_rician(k, rng, size=None):
    """Draw unit-mean-power Rician gain(s) with LOS phase 0."""
    los, sc = los_and_scatter(k)
    h = los + sc * _cn(rng, size)
    return complex(h) if size is None and np.ndim(h) == 0 else h


def outdate(true_gain, rho, rng, k=0.0):
    """Outdated estimate correlated with ``true_gain`` by ``rho``.

    The diffuse part follows a Gauss-Markov step and the LOS part is kept,
    so the estimate has the same Rician law as the true gain.  For K=0 this
    is ``rho*h + sqrt(1-rho^2)*e`` with ``e`` an independent Rayleigh draw.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho < 0) or np.any(rho > 1):
        raise BadParameter(f"rho must lie in [0, 1], got {rho}")
    if np.ndim(rho) == 0 and rho == 1.0:
        return true_gain
    los, sc = los_and_scatter(k)
    h = np.asarray(true_gain)
    fresh = _cn(rng, h.shape if h.ndim else None)
    est = los + rho * (h - los) + np.sqrt(1.0 - rho ** 2) * sc * fresh
    if np.ndim(rho) > 0:
        est = np.where(rho == 1.0, h, est)
    return complex(est) if np.ndim(est) == 0 else est


def _check_snr(snr, name="snr"):
    arr = np.asarray(snr, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise BadParameter(f"{name} must be finite and >= 0, got {snr}")
    return arr


def capacity(snr):
    """Shannon rate log2(1+snr) in bit/s/Hz."""
    out = np.log2(1.0 + _check_snr(snr))
    return float(out) if np.ndim(out) == 0 else out


def secrecy_rate(snr_main, snr_eve):
    """max(0, C(main) - C(eve))."""
    main = _check_snr(snr_main, "snr_main")
    eve = _check_snr(snr_eve, "snr_eve")
    out = np.maximum(0.0, np.log2(1.0 + main) - np.log2(1.0 + eve))
    return float(out) if np.ndim(out) == 0 else out


def snr_threshold(rate):
    """Smallest linear SNR whose capacity reaches ``rate``."""
    return 2.0 ** rate - 1.0


@dataclass(frozen=True)
class LinkChannelState:
    true_gain: complex
    est_gain: complex
    avg_snr: float
    inst_snr: float
    est_snr: float


@dataclass
class SlotChannels:
    """Channel draw for one slot, arrays aligned with ``graph.links`` / ``graph.eve_tx``."""

    true_gain: np.ndarray
    est_gain: np.ndarray
    avg_snr: np.ndarray
    inst_snr: np.ndarray
    est_snr: np.ndarray
    eve_true_gain: np.ndarray
    eve_avg_snr: np.ndarray
    eve_inst_snr: np.ndarray
    link_ids: tuple
    eve_tx: tuple

    def __len__(self):
        return len(self.link_ids) + len(self.eve_tx)

    def link_state(self, link_id):
        i = self.link_ids.index(link_id)
        return LinkChannelState(complex(self.true_gain[i]), complex(self.est_gain[i]),
                                float(self.avg_snr[i]), float(self.inst_snr[i]),
                                float(self.est_snr[i]))

    def eve_state(self, tx):
        i = self.eve_tx.index(tx)
        g = complex(self.eve_true_gain[i])
        snr = float(self.eve_inst_snr[i])
        return LinkChannelState(g, g, float(self.eve_avg_snr[i]), snr, snr)

    def as_map(self):
        """Every link state keyed by link id, eavesdropper links by ("eve", tx)."""
        out = {lid: self.link_state(lid) for lid in self.link_ids}
        out.update({("eve", tx): self.eve_state(tx) for tx in self.eve_tx})
        return out


class ChannelModel:
    """Per-graph constants for fast slot draws."""

    def __init__(self, graph):
        self.graph = graph
        self.link_ids = tuple(l.id for l in graph.links)
        self.avg = np.array([l.avg_snr for l in graph.links])
        self.los, self.sc = los_and_scatter(np.array([l.rician_k for l in graph.links]))
        self.rho = np.array([l.csi_correlation for l in graph.links])
        self.alpha = np.array([l.temporal_alpha for l in graph.links])
        self.eve_tx = graph.eve_tx
        eves = [graph.eve_links[t] for t in self.eve_tx]
        self.eve_avg = np.array([e.avg_snr for e in eves])
        self.eve_los, self.eve_sc = los_and_scatter(np.array([e.rician_k for e in eves]))

    def draw(self, rng, eve_rng=None, prev=None):
        """Fresh fading for every data link (ascending id) then every eavesdropper link.

        With ``prev`` given, links with ``temporal_alpha > 0`` evolve their
        diffuse component as a first-order Gauss-Markov process.
        """
        n = len(self.link_ids)
        diffuse = _cn(rng, n)
        if prev is not None and np.any(self.alpha > 0):
            old = (prev.true_gain - self.los) / self.sc
            diffuse = self.alpha * old + np.sqrt(1.0 - self.alpha ** 2) * diffuse
        h = self.los + self.sc * diffuse
        noise = _cn(rng, n)
        h_est = self.los + self.rho * (h - self.los) + np.sqrt(1.0 - self.rho ** 2) * self.sc * noise
        h_est = np.where(self.rho == 1.0, h, h_est)
        erng = rng if eve_rng is None else eve_rng
        m = len(self.eve_tx)
        g = self.eve_los + self.eve_sc * _cn(erng, m) if m else np.zeros(0, complex)
        return SlotChannels(
            true_gain=h, est_gain=h_est, avg_snr=self.avg,
            inst_snr=self.avg * np.abs(h) ** 2, est_snr=self.avg * np.abs(h_est) ** 2,
            eve_true_gain=g, eve_avg_snr=self.eve_avg,
            eve_inst_snr=self.eve_avg * np.abs(g) ** 2,
            link_ids=self.link_ids, eve_tx=self.eve_tx)


def draw_slot_channels(graph, rng, eve_rng=None, prev=None):
    return ChannelModel(graph).draw(rng, eve_rng, prev)


def draw_onoff_channels(graph, p_on, rng):
    """Quantized channel: link i is on with probability ``p_on[i]`` (perfect CSI)."""
    p_on = np.asarray(p_on, dtype=float)
    on = rng.random(len(graph.links)) < p_on
    snr = np.where(on, ONOFF_ON_SNR, 0.0)
    gain = np.sqrt(snr / ONOFF_ON_SNR).astype(complex)
    m = len(graph.eve_tx)
    return SlotChannels(
        true_gain=gain, est_gain=gain, avg_snr=np.full(len(snr), ONOFF_ON_SNR),
        inst_snr=snr, est_snr=snr.copy(),
        eve_true_gain=np.zeros(m, complex), eve_avg_snr=np.zeros(m), eve_inst_snr=np.zeros(m),
        link_ids=tuple(l.id for l in graph.links), eve_tx=graph.eve_tx)


def rayleigh_on_probability(avg_snr, rate):
    """Pr[log2(1 + avg_snr*|h|^2) >= rate] for Rayleigh |h|^2 ~ Exp(1)."""
    return math.exp(-snr_threshold(rate) / avg_snr)


def rician_on_probability(avg_snr, k, rate):
    """Exact link-on probability under Rician fading.

    2(K+1)|h|^2 is noncentral chi-square with 2 degrees of freedom and
    noncentrality 2K.
    """
    if k == 0:
        return rayleigh_on_probability(avg_snr, rate)
    t = snr_threshold(rate) / avg_snr
    return float(ncx2.sf(2.0 * (k + 1.0) * t, 2, 2.0 * k))


def rician_on_probability_mc(avg_snr, k, rate, rng, samples=1_000_000):
    """Monte-Carlo estimate of the link-on probability under Rician fading."""
    h = sample_rician(k, rng, samples)
    return float(np.mean(avg_snr * np.abs(h) ** 2 >= snr_threshold(rate)))
