"""Interference-aware pairing and power control for LR -> SR D2D links that
reuse cellular sub-channels.

Each LR reuses the channel of the cellular SR ("victim") whose transmission
leaks least into the LR's receiver.  Transmit power is capped twice: from
below the D2D link's own SINR floor, from above the victim's SINR floor, and
the LR is skipped entirely when the resulting power is infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .netmodel import EDGE_ID, ChannelState, SpectrumConfig, rate


class NoReusableChannel(Exception):
    """Every candidate channel is already reused; the LR cannot be served."""

    def __init__(self, lr_id: int):
        self.lr_id = lr_id
        super().__init__(f"no reusable channel left for LR {lr_id}")


@dataclass
class D2DGrant:
    """Granted D2D links: (LR, victim SR whose channel is reused, channel)."""

    pairs: list[tuple[int, int, int]] = field(default_factory=list)
    receiver: dict[int, int] = field(default_factory=dict)      # lr -> its SR
    power: dict[int, float] = field(default_factory=dict)       # lr -> watts
    power_caps: dict[int, tuple[float, float]] = field(default_factory=dict)  # lr -> (floor cap, protect cap)
    admitted: dict[int, float] = field(default_factory=dict)    # lr -> bits/s
    achieved_sinr: dict[int, float] = field(default_factory=dict)
    skipped: list[tuple[int, str]] = field(default_factory=list)
    pair_scans: int = 0

    def channel_of(self, lr: int) -> int:
        for k, _, n in self.pairs:
            if k == lr:
                return n
        raise KeyError(lr)


def allocate_d2d(
    lrs: Sequence[int],
    association: Mapping[int, int],
    cellular_channels: Mapping[int, Sequence[int]],
    cellular_power: Mapping[int, Mapping[int, float]],
    cellular_admitted: Mapping[int, float],
    gains: ChannelState,
    cfg: SpectrumConfig,
    gamma_d2d_min: float,
    gamma_cell_min: float,
    p_max: Mapping[int, float],
    rate_fn: Callable[[int, int, float], float] | None = None,
    strict: bool = False,
) -> D2DGrant:
    """Greedy per-LR reuse over the current cellular allocation.

    Victim candidates are the SRs holding at least one channel; a victim and
    its reused channel leave the pool once granted, so each channel carries at
    most one D2D link.  rate_fn(lr, channel, sinr) converts the achieved SINR
    into the booked rate; by default the physical Shannon rate is used.

    With strict=True an LR that finds no candidate raises NoReusableChannel;
    by default it is recorded as skipped so one starved LR cannot void the
    whole allocation.
    """
    if rate_fn is None:
        rate_fn = lambda k, n, sinr: rate(sinr, cfg)

    grant = D2DGrant()
    # Victim pool ordered by descending admitted data, then id: ranking fixes
    # tie resolution when two victims leak equally.
    pool: list[tuple[int, list[int]]] = [
        (h, sorted(cellular_channels[h]))
        for h in sorted(
            cellular_channels, key=lambda h: (-cellular_admitted.get(h, 0.0), h)
        )
        if cellular_channels[h]
    ]

    for k in sorted(lrs):
        h_rx = association[k]
        grant.receiver[k] = h_rx
        best = None
        for h, chans in pool:
            if h == h_rx:
                continue
            grant.pair_scans += len(chans)
            link = gains.link(h, h_rx)
            for n in chans:
                cross = float(link[n])
                if best is None or cross < best[0]:
                    best = (cross, h, n)
        if best is None:
            if strict:
                raise NoReusableChannel(k)
            grant.skipped.append((k, "no_channel"))
            continue
        _, victim, n = best

        interference = cellular_power[victim][n] * gains.gain(victim, h_rx, n)
        p1 = gamma_d2d_min * (cfg.noise_power + interference) / gains.gain(k, h_rx, n)
        cell_signal = cellular_power[victim][n] * gains.gain(victim, EDGE_ID, n)
        p2 = (cell_signal - gamma_cell_min * cfg.noise_power) / (
            gamma_cell_min * gains.gain(k, EDGE_ID, n)
        )
        p = min(p1, p2)
        if p <= 0.0:
            grant.skipped.append((k, "reuse_infeasible"))
            continue
        if p > p_max[k]:
            grant.skipped.append((k, "over_power_cap"))
            continue

        sinr = p * gains.gain(k, h_rx, n) / (cfg.noise_power + interference)
        grant.pairs.append((k, victim, n))
        grant.power[k] = p
        grant.power_caps[k] = (p1, p2)
        grant.achieved_sinr[k] = sinr
        grant.admitted[k] = rate_fn(k, n, sinr)
        # A victim and its reused channel leave the pool together.
        pool = [(h, chans) for h, chans in pool if h != victim]
    return grant
