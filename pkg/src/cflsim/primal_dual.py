"""Online primal-dual scheduler for the scarce-channel regime (fewer channels
than SRs), driven by lagged state at the edge server.

Each SR carries a non-negative multiplier priced against its backlog-vs-rate
residual.  Admissions solve a per-device quadratic proximal step in closed
form; channel selection decouples per channel into an argmin over SRs of a
linear score built from the lagged rate and the previous assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class DualState:
    """Multipliers and step sizes of the dual iteration.

    The cap (epsilon + 1/alpha) * a_max + 1 is not enforced here; it emerges
    from the admission clamp when multipliers are refreshed at every grant,
    and the simulation harness asserts it on every slot.
    """

    lambdas: Mapping[int, float]
    epsilon: float
    alpha: float
    a_max: float

    @property
    def lambda_cap(self) -> float:
        return (self.epsilon + 1.0 / self.alpha) * self.a_max + 1.0

    def check(self) -> None:
        for h, lam in self.lambdas.items():
            if lam < 0:
                raise AssertionError(f"negative multiplier for SR {h}")
            if lam > self.lambda_cap + 1e-12:
                raise AssertionError(f"multiplier for SR {h} above cap {self.lambda_cap}")


@dataclass(frozen=True)
class PrimalState:
    """Lagged primal variables the edge schedules against."""

    a_prev: Mapping[int, float]                 # sr -> bits admitted last slot
    rho_prev: Mapping[int, frozenset[int]]      # sr -> channels held last slot
    r_prev: Mapping[int, Mapping[int, float]]   # sr -> {channel: bits/s last slot}


def update_multiplier(
    h: int, dual: DualState, queued_admissions: float, scheduled_rate: float
) -> DualState:
    """Dual ascent step for one scheduled SR: project the priced residual
    between the batch of admissions since its last grant and the rate it was
    just served at."""
    lam = dual.lambdas[h]
    new = max(0.0, lam + dual.epsilon * (queued_admissions - scheduled_rate))
    lambdas = dict(dual.lambdas)
    lambdas[h] = new
    return replace(dual, lambdas=lambdas)


def optimal_admission(
    h: int, dual: DualState, primal: PrimalState, arrivals: float
) -> float:
    """Closed-form proximal admission for one SR, clamped to [0, arrivals]."""
    proposal = dual.alpha - dual.alpha * dual.lambdas[h] + primal.a_prev.get(h, 0.0)
    if proposal <= 0.0:
        return 0.0
    if proposal >= arrivals:
        return arrivals
    return proposal


def channel_score(h: int, n: int, dual: DualState, primal: PrimalState) -> float:
    """Value a grant of channel n to SR h contributes to the proximal
    objective; the per-channel argmin of this score is the selection rule."""
    lam = dual.lambdas[h]
    r = primal.r_prev.get(h, {}).get(n, 0.0)
    held = 1.0 if n in primal.rho_prev.get(h, frozenset()) else 0.0
    return (1.0 / (2.0 * dual.alpha) - lam * r) - held / dual.alpha


def _pick_tied(tied: Sequence[int], channel_position: int) -> int:
    # Exact ties rotate across the tied SRs by channel position, so a cold
    # start (all scores equal) spreads channels over SRs instead of stacking
    # them on the lowest id.  Deterministic for fixed inputs.
    return tied[channel_position % len(tied)]


def select_channels(
    dual: DualState, primal: PrimalState, channels: Sequence[int]
) -> dict[int, int]:
    """Assign every channel to the SR minimizing its score."""
    sr_ids = sorted(dual.lambdas)
    out: dict[int, int] = {}
    for idx, n in enumerate(sorted(channels)):
        best_score = None
        tied: list[int] = []
        for h in sr_ids:
            s = channel_score(h, n, dual, primal)
            if best_score is None or s < best_score:
                best_score = s
                tied = [h]
            elif s == best_score:
                tied.append(h)
        out[n] = _pick_tied(tied, idx)
    return out


@dataclass
class SchedulerStats:
    score_evals: int = 0
    multiplier_updates: int = 0


class PrimalDualScheduler:
    """Stateful per-run wrapper: admissions accumulate per SR between grants
    and the batch is priced into the multiplier at the next grant.

    Device-side admissions are pure per-SR computations; multiplier updates
    are serialized here, the single conceptual owner being the edge server.
    The select path is vectorized but evaluates the exact score expression of
    channel_score, so it matches select_channels tie for tie.
    """

    def __init__(
        self,
        sr_ids: Sequence[int],
        channels: Sequence[int],
        epsilon: float,
        alpha: float,
        a_max: float,
    ):
        self.sr_ids = sorted(sr_ids)
        self.channels = sorted(channels)
        self._index = {h: i for i, h in enumerate(self.sr_ids)}
        self.dual = DualState(
            lambdas={h: 0.0 for h in self.sr_ids},
            epsilon=epsilon,
            alpha=alpha,
            a_max=a_max,
        )
        self.primal = PrimalState(
            a_prev={h: 0.0 for h in self.sr_ids},
            rho_prev={h: frozenset() for h in self.sr_ids},
            r_prev={h: {} for h in self.sr_ids},
        )
        self.batch: dict[int, float] = {h: 0.0 for h in self.sr_ids}
        self._lam = np.zeros(len(self.sr_ids))
        self._r_prev = np.zeros((len(self.sr_ids), len(self.channels)))
        self._held = np.zeros((len(self.sr_ids), len(self.channels)))
        self.stats = SchedulerStats()

    def admissions(self, arrivals: Mapping[int, float]) -> dict[int, float]:
        """Device-side step at slot start: each SR admits against its current
        multiplier and queues the amount into its batch."""
        out = {}
        for h in self.sr_ids:
            a = optimal_admission(h, self.dual, self.primal, arrivals.get(h, 0.0))
            self.batch[h] += a
            out[h] = a
        return out

    def select(self) -> dict[int, int]:
        n_sr, n_ch = self._r_prev.shape
        self.stats.score_evals += n_sr * n_ch
        const = 1.0 / (2.0 * self.dual.alpha)
        scores = (const - self._lam[:, None] * self._r_prev) - self._held / self.dual.alpha
        out: dict[int, int] = {}
        for idx, n in enumerate(self.channels):
            col = scores[:, idx]
            best = col.min()
            tied = np.flatnonzero(col == best)
            out[n] = self.sr_ids[int(_pick_tied(tied, idx))]
        return out

    def finish_slot(
        self,
        selected: Mapping[int, int],
        admissions: Mapping[int, float],
        realized_rate: Mapping[int, float],
        rate_matrix: np.ndarray,
    ) -> None:
        """Apply the grant-time multiplier updates and roll the lagged state.

        realized_rate carries the rate each scheduled SR was actually served
        at this slot (interference included); rate_matrix is the full per-pair
        estimate (sorted SR x sorted channel) the edge selects against next
        slot.
        """
        scheduled = set(selected.values())
        for h in sorted(scheduled):
            self.dual = update_multiplier(
                h, self.dual, self.batch[h], realized_rate.get(h, 0.0)
            )
            self.stats.multiplier_updates += 1
            self.batch[h] = 0.0
        grouped: dict[int, set[int]] = {}
        for n, h in selected.items():
            grouped.setdefault(h, set()).add(n)
        rho = {
            h: frozenset(grouped.get(h, ())) for h in self.sr_ids
        }
        self.primal = PrimalState(
            a_prev=dict(admissions),
            rho_prev=rho,
            r_prev={
                h: {n: float(rate_matrix[i, j]) for j, n in enumerate(self.channels)}
                for h, i in ((h, self._index[h]) for h in self.sr_ids)
            },
        )
        for h, i in self._index.items():
            self._lam[i] = self.dual.lambdas[h]
        self._r_prev = np.asarray(rate_matrix, dtype=float)
        self._held.fill(0.0)
        for n, h in selected.items():
            self._held[self._index[h], self.channels.index(n)] = 1.0

    def step(
        self,
        arrivals: Mapping[int, float],
        rate_table: Mapping[int, Mapping[int, float]],
    ) -> tuple[dict[int, int], dict[int, float]]:
        """One full cellular-only epoch: admissions, selection, grant-time
        updates.  Returns (channel -> SR, SR -> admitted bits)."""
        adm = self.admissions(arrivals)
        selected = self.select()
        realized = {}
        for n, h in selected.items():
            realized[h] = realized.get(h, 0.0) + rate_table.get(h, {}).get(n, 0.0)
        matrix = np.array(
            [[rate_table.get(h, {}).get(n, 0.0) for n in self.channels] for h in self.sr_ids]
        )
        self.finish_slot(selected, adm, realized, matrix)
        return selected, adm
