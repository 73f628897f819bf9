"""Rate oracles the schedulers are written against.

Two implementations: a physical oracle (Shannon rate of the modeled SINR) and
a capacity-draw oracle (per-slot uniform capacity draws, power-independent).
Schedulers only ever see the shared interface, so either can back a run.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .netmodel import EDGE_ID, ChannelState, SpectrumConfig, rate


class PhysicalRateOracle:
    """Rates follow the SINR model; bookings assume an interference-free link."""

    uses_sinr = True

    def __init__(self, gains: ChannelState, cfg: SpectrumConfig):
        self.gains = gains
        self.cfg = cfg

    def booking(self, device: int, channel: int, power_w: float) -> float:
        snr = power_w * self.gains.gain(device, EDGE_ID, channel) / self.cfg.noise_power
        return rate(snr, self.cfg)

    def booking_matrix(self, devices, channels, p_max) -> np.ndarray:
        """Interference-free bookings at max power, (device x channel)."""
        rows = []
        for m in sorted(devices):
            snr = p_max[m] * self.gains.link(m, EDGE_ID) / self.cfg.noise_power
            rows.append(self.cfg.per_channel_bandwidth * np.log2(1.0 + snr))
        return np.array(rows)[:, sorted(channels)]

    def d2d_rate(self, device: int, channel: int, sinr: float) -> float:
        return rate(sinr, self.cfg)

    def realized_cellular(self, device: int, channel: int, sinr: float) -> float:
        return rate(sinr, self.cfg)


class CapacityDrawOracle:
    """Rates are exogenous per-(device, channel) draws; power and interference
    change nothing.  Bookings and realized rates coincide by construction."""

    uses_sinr = False

    def __init__(self, draws: Mapping[int, np.ndarray], cfg: SpectrumConfig):
        self.draws = {m: np.asarray(v, dtype=float) for m, v in draws.items()}
        self.cfg = cfg

    def booking(self, device: int, channel: int, power_w: float) -> float:
        return float(self.draws[device][channel])

    def booking_matrix(self, devices, channels, p_max) -> np.ndarray:
        return np.array([self.draws[m] for m in sorted(devices)])[:, sorted(channels)]

    def d2d_rate(self, device: int, channel: int, sinr: float) -> float:
        return float(self.draws[device][channel])

    def realized_cellular(self, device: int, channel: int, sinr: float) -> float:
        return float(self.draws[device][channel])
