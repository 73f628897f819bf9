"""Top-level per-slot allocator, the feasibility validator, the comparison
baselines, and the exhaustive small-instance optimum.

The dispatcher associates devices, routes SRs through the greedy allocator
when channels are plentiful or the primal-dual scheduler when they are not,
then lets LRs reuse channels over D2D.  Every scheduler funnels through the
same finalization, so admissions are always capped by both the recomputed
(interference-aware) rate and the data actually available.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import netmodel
from .d2d import D2DGrant, allocate_d2d
from .netmodel import ChannelState, Role, SpectrumConfig, Topology
from .primal_dual import PrimalDualScheduler
from .sufficient import allocate_sufficient


class InstanceTooLarge(Exception):
    """The instance exceeds the enumeration bounds of the offline optimum."""


@dataclass
class SlotState:
    """Data side of one slot: bits available for admission (backlog plus
    fresh arrivals) and the fresh arrivals alone."""

    avail: dict[int, float]
    fresh: dict[int, float]


@dataclass
class ScheduleDecision:
    """One slot's admissions, channel indicators and powers.

    Built once by a scheduler and treated as read-only afterwards; the
    accessor methods are what the SINR computations consume.
    """

    a: dict[int, float] = field(default_factory=dict)
    rho: dict[int, tuple[int, ...]] = field(default_factory=dict)
    power: dict[int, dict[int, float]] = field(default_factory=dict)
    sr_ids: frozenset[int] = frozenset()
    lr_ids: frozenset[int] = frozenset()
    realized_rate: dict[int, float] = field(default_factory=dict)
    booked_rate: dict[int, float] = field(default_factory=dict)
    mode: str = "sufficient"
    lambdas: dict[int, float] = field(default_factory=dict)
    d2d: D2DGrant | None = None

    def power_of(self, device: int, channel: int) -> float:
        return self.power.get(device, {}).get(channel, 0.0)

    def cochannel_lrs(self, channel: int) -> list[int]:
        return [m for m in self.lr_ids if channel in self.rho.get(m, ())]

    def cochannel_srs(self, channel: int) -> list[int]:
        return [m for m in self.sr_ids if channel in self.rho.get(m, ())]


@dataclass(frozen=True)
class DispatchParams:
    gamma_d2d_min: float = 10 ** (3 / 10)   # 3 dB
    gamma_cell_min: float = 10 ** (6 / 10)  # 6 dB


def _realized_rates(
    decision: ScheduleDecision,
    topology: Topology,
    gains: ChannelState,
    cfg: SpectrumConfig,
    oracle,
) -> dict[int, float]:
    """Per-device rate of the decision as actually scheduled, co-channel
    interference included."""
    out: dict[int, float] = {}
    assoc = topology.association
    uses_sinr = getattr(oracle, "uses_sinr", True)
    for m, chans in decision.rho.items():
        total = 0.0
        for n in chans:
            if m in decision.sr_ids:
                sinr = (
                    netmodel.sinr_cellular(m, n, decision, gains, cfg)
                    if uses_sinr
                    else 0.0
                )
                total += oracle.realized_cellular(m, n, sinr)
            else:
                sinr = (
                    netmodel.sinr_d2d(m, n, decision, gains, cfg, receiver=assoc[m])
                    if uses_sinr
                    else 0.0
                )
                total += oracle.d2d_rate(m, n, sinr)
        out[m] = total
    return out


def _finalize(
    decision: ScheduleDecision,
    topology: Topology,
    state: SlotState,
    gains: ChannelState,
    cfg: SpectrumConfig,
    oracle,
) -> ScheduleDecision:
    """Fill realized rates and admissions: a device may admit no more than it
    has and no more than its scheduled rate can carry."""
    decision.realized_rate = _realized_rates(decision, topology, gains, cfg, oracle)
    for d in topology.devices:
        m = d.id
        r = decision.realized_rate.get(m, 0.0)
        decision.a[m] = min(state.avail.get(m, 0.0), r)
    return decision


def _cellular_to_decision(
    channels_by_sr: Mapping[int, Sequence[int]],
    power_by_sr: Mapping[int, Mapping[int, float]],
    booked: Mapping[int, float],
    d2d: D2DGrant,
    topology: Topology,
    mode: str,
) -> ScheduleDecision:
    decision = ScheduleDecision(
        sr_ids=frozenset(d.id for d in topology.srs),
        lr_ids=frozenset(d.id for d in topology.lrs),
        mode=mode,
        d2d=d2d,
    )
    for h, chans in channels_by_sr.items():
        if chans:
            decision.rho[h] = tuple(sorted(chans))
            decision.power[h] = dict(power_by_sr[h])
    for k, _, n in d2d.pairs:
        decision.rho[k] = (n,)
        decision.power[k] = {n: d2d.power[k]}
    decision.booked_rate = dict(booked)
    for k, r in d2d.admitted.items():
        decision.booked_rate[k] = r
    return decision


def _run_d2d(
    topology: Topology,
    channels_by_sr: Mapping[int, Sequence[int]],
    power_by_sr: Mapping[int, Mapping[int, float]],
    booked: Mapping[int, float],
    gains: ChannelState,
    cfg: SpectrumConfig,
    params: DispatchParams,
    oracle,
) -> D2DGrant:
    lr_ids = [d.id for d in topology.lrs]
    if not lr_ids:
        return D2DGrant()
    return allocate_d2d(
        lr_ids,
        topology.association,
        {h: list(chans) for h, chans in channels_by_sr.items() if chans},
        power_by_sr,
        booked,
        gains,
        cfg,
        params.gamma_d2d_min,
        params.gamma_cell_min,
        p_max={d.id: d.p_max for d in topology.lrs},
        rate_fn=oracle.d2d_rate,
    )


def dispatch(
    topology: Topology,
    cfg: SpectrumConfig,
    state: SlotState,
    gains: ChannelState,
    oracle,
    params: DispatchParams = DispatchParams(),
    pd_scheduler: PrimalDualScheduler | None = None,
) -> ScheduleDecision:
    """Full per-slot allocation: greedy cellular when channels cover the SRs
    (equality included), primal-dual otherwise, then D2D reuse for LRs."""
    sr_ids = sorted(d.id for d in topology.srs)
    channels = list(range(cfg.n_subchannels))
    p_max = {d.id: d.p_max for d in topology.devices}
    rate_matrix = oracle.booking_matrix(sr_ids, channels, p_max) if sr_ids else None

    if len(channels) >= len(sr_ids):
        alloc = allocate_sufficient(
            sr_ids,
            channels,
            oracle.booking,
            p_max,
            rate_matrix=rate_matrix,
            power_dependent=getattr(oracle, "uses_sinr", True),
        )
        channels_by_sr, power_by_sr, booked = alloc.channels, alloc.power, alloc.admitted
        mode, lambdas = "sufficient", {}
    else:
        if pd_scheduler is None:
            raise ValueError("scarce regime needs a PrimalDualScheduler")
        admissions = pd_scheduler.admissions({h: state.fresh.get(h, 0.0) for h in sr_ids})
        selected = pd_scheduler.select()
        channels_by_sr = {h: [] for h in sr_ids}
        for n, h in selected.items():
            channels_by_sr[h].append(n)
        power_by_sr = {}
        booked = {}
        for h in sr_ids:
            chans = channels_by_sr[h]
            if chans:
                split = p_max[h] / len(chans)
                power_by_sr[h] = {n: split for n in chans}
                booked[h] = sum(oracle.booking(h, n, split) for n in chans)
            else:
                power_by_sr[h] = {}
                booked[h] = 0.0
        mode, lambdas = "scarce", dict(pd_scheduler.dual.lambdas)

    d2d = _run_d2d(
        topology, channels_by_sr, power_by_sr, booked, gains, cfg, params, oracle
    )
    decision = _cellular_to_decision(
        channels_by_sr, power_by_sr, booked, d2d, topology, mode
    )
    decision.lambdas = lambdas
    decision = _finalize(decision, topology, state, gains, cfg, oracle)

    if mode == "scarce":
        realized = {h: decision.realized_rate.get(h, 0.0) for h in sr_ids}
        pd_scheduler.finish_slot(selected, admissions, realized, rate_matrix)
        decision.lambdas = dict(pd_scheduler.dual.lambdas)
    return decision


def baseline_random(
    topology: Topology,
    cfg: SpectrumConfig,
    state: SlotState,
    gains: ChannelState,
    oracle,
    rng: np.random.Generator,
    params: DispatchParams = DispatchParams(),
) -> ScheduleDecision:
    """Uniformly random feasible cellular assignment at max power, then the
    same D2D pass as everyone else."""
    sr_ids = sorted(d.id for d in topology.srs)
    channels = list(range(cfg.n_subchannels))
    p_max = {d.id: d.p_max for d in topology.devices}
    channels_by_sr: dict[int, list[int]] = {h: [] for h in sr_ids}
    if len(channels) >= len(sr_ids):
        # One distinct channel each keeps the everyone-served constraint, the
        # surplus lands uniformly.
        perm = [channels[int(i)] for i in rng.permutation(len(channels))]
        for h, n in zip(sr_ids, perm):
            channels_by_sr[h].append(n)
        for n in perm[len(sr_ids):]:
            channels_by_sr[sr_ids[int(rng.integers(len(sr_ids)))]].append(n)
    else:
        for n in channels:
            channels_by_sr[sr_ids[rng.integers(len(sr_ids))]].append(n)
    power_by_sr = {}
    booked = {}
    for h in sr_ids:
        chans = channels_by_sr[h]
        power_by_sr[h] = (
            {n: p_max[h] / len(chans) for n in chans} if chans else {}
        )
        booked[h] = sum(oracle.booking(h, n, power_by_sr[h][n]) for n in chans)
    d2d = _run_d2d(topology, channels_by_sr, power_by_sr, booked, gains, cfg, params, oracle)
    mode = "sufficient" if len(channels) >= len(sr_ids) else "scarce"
    decision = _cellular_to_decision(channels_by_sr, power_by_sr, booked, d2d, topology, mode)
    return _finalize(decision, topology, state, gains, cfg, oracle)


def baseline_max_snr(
    topology: Topology,
    cfg: SpectrumConfig,
    state: SlotState,
    gains: ChannelState,
    oracle,
    params: DispatchParams = DispatchParams(),
) -> ScheduleDecision:
    """Greedy raw-SNR assignment: first pass one channel per SR, then surplus
    channels to whichever SR shouts loudest on them."""
    sr_ids = sorted(d.id for d in topology.srs)
    channels = list(range(cfg.n_subchannels))
    p_max = {d.id: d.p_max for d in topology.devices}

    # Raw SNR table at max power; ties resolve to the lowest SR id.  First
    # pass walks the channels in order, each going to the loudest SR not yet
    # holding one; leftovers go to the loudest SR outright.
    snr = np.array(
        [p_max[h] * np.asarray(gains.link(h, netmodel.EDGE_ID)) / cfg.noise_power for h in sr_ids]
    )[:, channels]

    channels_by_sr: dict[int, list[int]] = {h: [] for h in sr_ids}
    sr_open = np.ones(len(sr_ids), dtype=bool)
    for n_i, n in enumerate(channels):
        if sr_open.any():
            col = np.where(sr_open, snr[:, n_i], -np.inf)
            h_i = int(np.argmax(col))
            sr_open[h_i] = False
        else:
            h_i = int(np.argmax(snr[:, n_i]))
        channels_by_sr[sr_ids[h_i]].append(n)

    power_by_sr = {}
    booked = {}
    for h in sr_ids:
        chans = channels_by_sr[h]
        power_by_sr[h] = (
            {n: p_max[h] / len(chans) for n in chans} if chans else {}
        )
        booked[h] = sum(oracle.booking(h, n, power_by_sr[h][n]) for n in chans)
    d2d = _run_d2d(topology, channels_by_sr, power_by_sr, booked, gains, cfg, params, oracle)
    mode = "sufficient" if len(channels) >= len(sr_ids) else "scarce"
    decision = _cellular_to_decision(channels_by_sr, power_by_sr, booked, d2d, topology, mode)
    return _finalize(decision, topology, state, gains, cfg, oracle)


def validate(
    decision: ScheduleDecision,
    state: SlotState,
    topology: Topology,
    cfg: SpectrumConfig,
    gains: ChannelState,
    oracle,
) -> list[tuple[str, str]]:
    """Check every admission/assignment constraint; violations come back as
    (constraint tag, detail) pairs, an empty list meaning feasible."""
    REL = 1e-9
    violations: list[tuple[str, str]] = []
    sr_ids = decision.sr_ids
    lr_ids = decision.lr_ids
    assoc = topology.association

    rates = _realized_rates(decision, topology, gains, cfg, oracle)
    for m, a in decision.a.items():
        r = rates.get(m, 0.0)
        if a > r * (1 + REL) + 1e-12:
            violations.append(("10-1", f"device {m}: admitted {a} above rate {r}"))
        if a < 0 or a > state.avail.get(m, 0.0) * (1 + REL) + 1e-12:
            violations.append(("10-2", f"device {m}: admitted {a} outside [0, avail]"))

    for n in range(cfg.n_subchannels):
        cell = [h for h in sr_ids if n in decision.rho.get(h, ())]
        d2d_links = [k for k in lr_ids if n in decision.rho.get(k, ())]
        if len(cell) + len(d2d_links) > 2:
            violations.append(("10-3", f"channel {n}: more than two links"))
        if d2d_links and not cell:
            violations.append(("10-3", f"channel {n}: D2D link with no cellular link to reuse"))
        if len(cell) > 1:
            violations.append(("10-5", f"channel {n}: {len(cell)} cellular links"))
        if len(d2d_links) > 1:
            violations.append(("10-6", f"channel {n}: {len(d2d_links)} D2D links"))

    for k in lr_ids:
        if k not in assoc:
            violations.append(("10-4", f"LR {k}: no association"))
        elif assoc[k] not in sr_ids:
            violations.append(("10-4", f"LR {k}: associated to non-SR"))

    if decision.mode == "sufficient":
        for h in sr_ids:
            if not decision.rho.get(h, ()):
                violations.append(("10-7", f"SR {h}: no channel in sufficient regime"))

    for d in topology.devices:
        total = sum(decision.power.get(d.id, {}).values())
        if total > d.p_max * (1 + REL):
            violations.append(("10-8", f"device {d.id}: power {total} over {d.p_max}"))
    return violations


def throughput_objective(per_slot_admissions: Sequence[Mapping[int, float]]) -> float:
    """Finite-horizon value of the admission objective: the time average of
    per-slot admission sums.  Linear in every admission entry."""
    if not per_slot_admissions:
        return 0.0
    return float(
        sum(sum(a.values()) for a in per_slot_admissions) / len(per_slot_admissions)
    )


MAX_ORACLE_SRS = 3
MAX_ORACLE_LRS = 2
MAX_ORACLE_CHANNELS = 3


def offline_optimum(
    topology: Topology,
    cfg: SpectrumConfig,
    state: SlotState,
    gains: ChannelState,
    oracle,
    params: DispatchParams = DispatchParams(),
) -> tuple[float, ScheduleDecision]:
    """Exhaustive per-slot optimum on a small instance.

    Enumerates every one-hot-per-channel cellular assignment (covering each SR
    when channels suffice) crossed with every feasible D2D reuse choice under
    the same power rules the heuristics use, and maximizes the admitted sum.
    Raises InstanceTooLarge beyond 3 SRs / 2 LRs / 3 channels.
    """
    sr_ids = sorted(d.id for d in topology.srs)
    lr_ids = sorted(d.id for d in topology.lrs)
    channels = list(range(cfg.n_subchannels))
    if (
        len(sr_ids) > MAX_ORACLE_SRS
        or len(lr_ids) > MAX_ORACLE_LRS
        or len(channels) > MAX_ORACLE_CHANNELS
    ):
        raise InstanceTooLarge(
            f"{len(sr_ids)} SRs, {len(lr_ids)} LRs, {len(channels)} channels"
        )
    p_max = {d.id: d.p_max for d in topology.devices}
    sufficient = len(channels) >= len(sr_ids)
    assoc = topology.association

    best_value = -1.0
    best_decision: ScheduleDecision | None = None

    for owners in itertools.product(sr_ids, repeat=len(channels)):
        if sufficient and set(owners) != set(sr_ids):
            continue
        channels_by_sr: dict[int, list[int]] = {h: [] for h in sr_ids}
        for n, h in zip(channels, owners):
            channels_by_sr[h].append(n)
        power_by_sr = {
            h: {n: p_max[h] / len(chans) for n in chans} if chans else {}
            for h, chans in channels_by_sr.items()
        }

        # D2D options per LR: keep nothing, or reuse any other SR's channel at
        # the capped power, dropping infeasible caps.
        options: list[list[tuple[int, int, float] | None]] = []
        for k in lr_ids:
            h_rx = assoc[k]
            opts: list[tuple[int, int, float] | None] = [None]
            for h, chans in channels_by_sr.items():
                if h == h_rx:
                    continue
                for n in chans:
                    interference = power_by_sr[h][n] * gains.gain(h, h_rx, n)
                    p1 = params.gamma_d2d_min * (cfg.noise_power + interference) / gains.gain(
                        k, h_rx, n
                    )
                    cell_signal = power_by_sr[h][n] * gains.gain(h, netmodel.EDGE_ID, n)
                    p2 = (cell_signal - params.gamma_cell_min * cfg.noise_power) / (
                        params.gamma_cell_min * gains.gain(k, netmodel.EDGE_ID, n)
                    )
                    p = min(p1, p2)
                    if 0.0 < p <= p_max[k]:
                        opts.append((h, n, p))
            options.append(opts)

        for combo in itertools.product(*options):
            chosen = [c for c in combo if c is not None]
            used_channels = [c[1] for c in chosen]
            used_victims = [c[0] for c in chosen]
            if len(set(used_channels)) != len(used_channels):
                continue
            if len(set(used_victims)) != len(used_victims):
                continue
            d2d = D2DGrant()
            for k, c in zip(lr_ids, combo):
                if c is None:
                    continue
                victim, n, p = c
                d2d.pairs.append((k, victim, n))
                d2d.receiver[k] = assoc[k]
                d2d.power[k] = p
                d2d.admitted[k] = 0.0
            booked = {h: 0.0 for h in sr_ids}
            decision = _cellular_to_decision(
                channels_by_sr,
                power_by_sr,
                booked,
                d2d,
                topology,
                "sufficient" if sufficient else "scarce",
            )
            decision = _finalize(decision, topology, state, gains, cfg, oracle)
            value = sum(decision.a.values())
            if value > best_value:
                best_value = value
                best_decision = decision
    assert best_decision is not None
    return best_value, best_decision
