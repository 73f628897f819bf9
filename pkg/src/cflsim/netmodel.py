"""Physical network model: topology, device roles, channel gains, SINR and rates.

Devices are either SRs (direct cellular link to the edge server) or LRs
(reach the edge only through a D2D link to an associated SR).  All types are
immutable per-slot snapshots; every operation here is a pure function of its
inputs, so they are safe to evaluate in parallel across devices and channels.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

# Distinguished receiver id for the edge server in gain tables.
EDGE_ID = -1


class Role(enum.Enum):
    SR = "SR"
    LR = "LR"


class OrphanLR(Exception):
    """Raised when an LR has no SR within association range: the topology is
    infeasible for this run."""

    def __init__(self, lr_id: int):
        self.lr_id = lr_id
        super().__init__(f"LR {lr_id} has no SR in range")


@dataclass(frozen=True)
class Device:
    """One local device and its queue bookkeeping.

    queue_bits is the backlog carried into the current slot; t_gen is the slot
    at which the oldest undelivered data was generated, t_sched the slot of
    the last channel grant.
    """

    id: int
    position: tuple[float, float]
    role: Role
    p_max: float
    queue_bits: float = 0.0
    t_gen: int | None = None
    t_sched: int | None = None

    def __post_init__(self):
        if self.p_max <= 0:
            raise ValueError(f"device {self.id}: p_max must be > 0")
        if self.queue_bits < 0:
            raise ValueError(f"device {self.id}: negative queue")


def distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class Topology:
    """Device set plus the LR->SR association x[k][h] (one SR per LR)."""

    devices: tuple[Device, ...]
    association: Mapping[int, int]  # LR id -> SR id
    sr_radius: float
    area: tuple[float, float]
    edge_position: tuple[float, float] | None = None

    def __post_init__(self):
        if self.edge_position is None:
            # Edge server sits at the area center unless placed explicitly.
            object.__setattr__(
                self, "edge_position", (self.area[0] / 2.0, self.area[1] / 2.0)
            )

    @property
    def srs(self) -> tuple[Device, ...]:
        return tuple(d for d in self.devices if d.role is Role.SR)

    @property
    def lrs(self) -> tuple[Device, ...]:
        return tuple(d for d in self.devices if d.role is Role.LR)

    def device(self, dev_id: int) -> Device:
        for d in self.devices:
            if d.id == dev_id:
                return d
        raise KeyError(dev_id)

    def check_association(self) -> None:
        """Assert the association is a 0/1 matrix with unit row sums over LRs
        and every link within sr_radius."""
        sr_ids = {d.id for d in self.srs}
        for k in self.lrs:
            if k.id not in self.association:
                raise AssertionError(f"LR {k.id} has no associated SR")
            h = self.association[k.id]
            if h not in sr_ids:
                raise AssertionError(f"LR {k.id} associated to non-SR {h}")
            if distance(k.position, self.device(h).position) > self.sr_radius + 1e-9:
                raise AssertionError(f"LR {k.id} associated beyond sr_radius")


def associate(topology: Topology, sr_radius: float | None = None) -> Topology:
    """Link every LR to its nearest in-range SR (ties: lowest SR id).

    Raises OrphanLR if some LR sees no SR within range.
    """
    radius = topology.sr_radius if sr_radius is None else sr_radius
    srs = topology.srs
    assoc: dict[int, int] = {}
    for k in topology.lrs:
        best: tuple[float, int] | None = None
        for h in srs:
            d = distance(k.position, h.position)
            if d <= radius and (best is None or (d, h.id) < best):
                best = (d, h.id)
        if best is None:
            raise OrphanLR(k.id)
        assoc[k.id] = best[1]
    out = replace(topology, association=assoc, sr_radius=radius)
    out.check_association()
    return out


@dataclass(frozen=True)
class SpectrumConfig:
    """Orthogonal sub-channel layout of the shared band."""

    n_subchannels: int
    total_bandwidth: float
    noise_power: float

    def __post_init__(self):
        if self.n_subchannels < 1:
            raise ValueError("need at least one sub-channel")
        if self.noise_power <= 0:
            raise ValueError("noise power must be > 0")

    @property
    def per_channel_bandwidth(self) -> float:
        return self.total_bandwidth / self.n_subchannels


@dataclass(frozen=True)
class DeviceState:
    """Per-slot observable state of one device: fresh arrivals (bits) and the
    instantaneous capacity estimate (bits/s)."""

    arrivals: float
    capacity: float

    def __post_init__(self):
        if self.arrivals < 0 or self.capacity < 0:
            raise ValueError("arrivals and capacity must be >= 0")


class ChannelState:
    """Linear power gains g[tx][rx][n] for every link, edge server included
    as receiver EDGE_ID.  Regenerated per slot by the fading model."""

    def __init__(self, gains: Mapping[tuple[int, int], np.ndarray], n_subchannels: int):
        self.n_subchannels = n_subchannels
        self._gains = {}
        for key, vec in gains.items():
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (n_subchannels,):
                raise ValueError(f"gain vector for {key} has shape {arr.shape}")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"gains for {key} must be finite and >= 0")
            self._gains[key] = arr

    def gain(self, tx: int, rx: int, n: int) -> float:
        return float(self._gains[(tx, rx)][n])

    def link(self, tx: int, rx: int) -> np.ndarray:
        return self._gains[(tx, rx)]

    def __contains__(self, key: tuple[int, int]) -> bool:
        return key in self._gains


def sinr_cellular(h: int, n: int, powers, gains: ChannelState, cfg: SpectrumConfig) -> float:
    """SINR of the cellular link SR h -> edge on sub-channel n.

    Interference comes from exactly the LRs scheduled on n.  `powers` is any
    decision-like object exposing power_of(device, channel) and
    cochannel_lrs(channel).
    """
    signal = powers.power_of(h, n) * gains.gain(h, EDGE_ID, n)
    interference = 0.0
    for k in powers.cochannel_lrs(n):
        interference += powers.power_of(k, n) * gains.gain(k, EDGE_ID, n)
    return signal / (cfg.noise_power + interference)


def sinr_d2d(
    k: int,
    n: int,
    powers,
    gains: ChannelState,
    cfg: SpectrumConfig,
    receiver: int,
) -> float:
    """SINR of the D2D link LR k -> SR `receiver` on sub-channel n, with
    interference from co-channel SR transmitters other than the receiver."""
    signal = powers.power_of(k, n) * gains.gain(k, receiver, n)
    interference = 0.0
    for h2 in powers.cochannel_srs(n):
        if h2 != receiver:
            interference += powers.power_of(h2, n) * gains.gain(h2, receiver, n)
    return signal / (cfg.noise_power + interference)


def rate(sinr: float, cfg: SpectrumConfig) -> float:
    """Shannon rate of one sub-channel: B/N * log2(1 + sinr), bits/s."""
    if sinr < 0:
        raise ValueError("sinr must be >= 0")
    return cfg.per_channel_bandwidth * math.log2(1.0 + sinr)


def total_rate(per_channel_rates: Mapping[int, float], granted: Sequence[int]) -> float:
    """Sum of per-channel rates over the channels granted to one device."""
    return float(sum(per_channel_rates[n] for n in granted))


@dataclass(frozen=True)
class FadingModel:
    """Log-distance path loss with log-normal shadowing and Rayleigh fading.

    Gains are path_gain(d) * S * |e|^2 with S the per-link shadowing draw and
    e a unit-variance complex Gaussian, so E[|e|^2] = 1.
    """

    exponent: float = 3.5
    ref_distance_m: float = 1.0
    ref_gain_db: float = -30.0
    shadowing_sigma_db: float = 8.0

    def path_gain(self, d: float) -> float:
        """Deterministic distance-dependent gain (no fading, no shadowing)."""
        d_eff = max(d, self.ref_distance_m)
        return 10.0 ** (self.ref_gain_db / 10.0) * (d_eff / self.ref_distance_m) ** (
            -self.exponent
        )

    def link_seed_draws(self, rng: np.random.Generator, n: int) -> tuple[float, np.ndarray]:
        """One shadowing factor plus n Rayleigh power draws."""
        shadow = 10.0 ** (rng.normal(0.0, self.shadowing_sigma_db) / 10.0)
        re = rng.normal(0.0, math.sqrt(0.5), size=n)
        im = rng.normal(0.0, math.sqrt(0.5), size=n)
        return shadow, re * re + im * im


def sample_fading(
    rng_seed: int,
    topology: Topology,
    cfg: SpectrumConfig,
    model: FadingModel | None = None,
    slot: int = 0,
) -> ChannelState:
    """Draw a full ChannelState for one slot, deterministic under the seed.

    A separate substream per directed link keeps draws stable when unrelated
    devices are added to the topology.
    """
    model = model or FadingModel()
    n = cfg.n_subchannels
    gains: dict[tuple[int, int], np.ndarray] = {}
    nodes = [(d.id, d.position) for d in topology.devices]
    receivers = nodes + [(EDGE_ID, topology.edge_position)]
    for tx_id, tx_pos in nodes:
        for rx_id, rx_pos in receivers:
            if rx_id == tx_id:
                continue
            rng = np.random.default_rng(
                np.random.SeedSequence([rng_seed & 0x7FFFFFFF, tx_id + 2, rx_id + 2, slot])
            )
            shadow, rayleigh = model.link_seed_draws(rng, n)
            gains[(tx_id, rx_id)] = model.path_gain(distance(tx_pos, rx_pos)) * shadow * rayleigh
    return ChannelState(gains, n)
