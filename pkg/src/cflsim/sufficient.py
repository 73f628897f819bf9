"""Greedy QoS-aware sub-channel and power allocation for SRs when the channel
count is at least the SR count.

Phase 1 matches every SR to its best channel by channel-mean-normalized rate;
phase 2 hands the surplus channels to whichever SR has the weakest admitted
data so far, splitting that SR's power budget evenly across its grants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

RateOracle = Callable[[int, int, float], float]  # (sr_id, channel, power_w) -> bits/s


class InsufficientChannels(Exception):
    """Fewer channels than SRs: the caller must fall back to the online
    primal-dual scheduler."""


@dataclass
class CellularAllocation:
    """Output of the greedy allocator.

    admitted holds the booked rate per SR (phase-2 grants are booked at the
    post-split power; earlier bookings are not revisited).  achieved holds the
    rate re-evaluated at the final per-channel powers, which differs from the
    booking exactly when a power split degraded an already-booked channel.
    """

    channels: dict[int, list[int]] = field(default_factory=dict)   # sr -> channels
    power: dict[int, dict[int, float]] = field(default_factory=dict)  # sr -> {ch: W}
    admitted: dict[int, float] = field(default_factory=dict)       # sr -> bits/s booked
    achieved: dict[int, float] = field(default_factory=dict)       # sr -> bits/s at final powers
    scan_count: int = 0

    def num_channels(self, sr: int) -> int:
        return len(self.channels.get(sr, ()))

    def check(self, p_max: Mapping[int, float]) -> None:
        seen: set[int] = set()
        for sr, chans in self.channels.items():
            for n in chans:
                if n in seen:
                    raise AssertionError(f"channel {n} granted twice")
                seen.add(n)
            total = sum(self.power[sr].values())
            if total > p_max[sr] * (1 + 1e-9):
                raise AssertionError(f"SR {sr} over power budget")


def allocate_sufficient(
    srs: Sequence[int],
    channels: Sequence[int],
    rate_oracle: RateOracle,
    p_max: Mapping[int, float],
    rate_matrix: np.ndarray | None = None,
    power_dependent: bool = True,
) -> CellularAllocation:
    """Run the two-phase greedy allocation over the full SR set.

    Normalizing means in both selection ratios are taken over the complete SR
    set, not the shrinking working set; a channel whose mean rate is zero
    contributes a 0/0 ratio, defined as 0.  Ties break toward the lowest
    channel index, then the lowest SR id.

    rate_matrix optionally pre-supplies rate_oracle(h, n, p_max[h]) as an
    (SR x channel) array in sorted order; power_dependent=False says the
    oracle ignores power, letting the splits skip re-quoting.
    """
    sr_list = sorted(srs)
    chan_list = sorted(channels)
    if len(chan_list) < len(sr_list):
        raise InsufficientChannels(f"{len(chan_list)} channels < {len(sr_list)} SRs")

    alloc = CellularAllocation()
    if not sr_list:
        return alloc
    for h in sr_list:
        alloc.channels[h] = []
        alloc.power[h] = {}
        alloc.admitted[h] = 0.0

    n_srs = len(sr_list)
    if rate_matrix is None:
        rate_matrix = [[rate_oracle(h, n, p_max[h]) for n in chan_list] for h in sr_list]
    rate_matrix = np.asarray(rate_matrix, dtype=float)
    col_mean = rate_matrix.mean(axis=0)
    ratio = np.divide(
        rate_matrix,
        col_mean,
        out=np.zeros_like(rate_matrix),
        where=col_mean > 0,
    )

    # Phase 1: one channel per SR at max power, strongest normalized rate
    # first.  Scanning the transposed matrix makes ties resolve to the lowest
    # channel index, then the lowest SR id.
    masked = ratio.T.copy()
    open_srs, open_chs = n_srs, len(chan_list)
    for _ in range(n_srs):
        alloc.scan_count += open_srs * open_chs
        n_i, h_i = np.unravel_index(int(np.argmax(masked)), masked.shape)
        h, n = sr_list[h_i], chan_list[n_i]
        alloc.channels[h].append(n)
        alloc.power[h][n] = p_max[h]
        alloc.admitted[h] = float(rate_matrix[h_i, n_i])
        masked[n_i, :] = -np.inf
        masked[:, h_i] = -np.inf
        open_srs -= 1
        open_chs -= 1

    # Phase 2: surplus channels go to the weakest admitted SR, power split
    # evenly; only the newly granted channel is booked, at the split power.
    granted = {n for chans in alloc.channels.values() for n in chans}
    free_mask = np.array([n not in granted for n in chan_list])
    admitted_vec = np.array([alloc.admitted[h] for h in sr_list])
    rate_free = np.where(free_mask, rate_matrix, -np.inf)
    while free_mask.any():
        alloc.scan_count += n_srs + int(free_mask.sum())
        h_i = int(np.argmin(admitted_vec))
        h = sr_list[h_i]
        n_i = int(np.argmax(rate_free[h_i]))
        n = chan_list[n_i]
        alloc.channels[h].append(n)
        num = len(alloc.channels[h])
        split = p_max[h] / num
        for m in alloc.channels[h]:
            alloc.power[h][m] = split
        if power_dependent:
            alloc.admitted[h] += rate_oracle(h, n, split)
        else:
            alloc.admitted[h] += float(rate_matrix[h_i, n_i])
        admitted_vec[h_i] = alloc.admitted[h]
        free_mask[n_i] = False
        rate_free[:, n_i] = -np.inf

    for i, h in enumerate(sr_list):
        if power_dependent:
            alloc.achieved[h] = sum(
                rate_oracle(h, n, alloc.power[h][n]) for n in alloc.channels[h]
            )
        else:
            alloc.achieved[h] = float(
                sum(rate_matrix[i, chan_list.index(n)] for n in alloc.channels[h])
            )
    alloc.check(p_max)
    return alloc
