"""Learning plane: local gradient steps on toy convex losses and the two-level
size-weighted aggregation (device -> SR -> edge).

Local losses are per-sample averages, so the size-weighted average of local
gradients equals the gradient of the pooled average.  That identity is what
makes one synchronized hierarchical round coincide with a centralized
gradient step, and central_step_deviation measures exactly that gap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

LOSSES = ("quadratic", "logistic")


@dataclass(frozen=True)
class LocalDataset:
    """One device's samples: X is (L, d), y is (L,)."""

    samples: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("samples must be a non-empty (L, d) matrix")
        if y.shape != (x.shape[0],):
            raise ValueError("labels must match the sample count")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "labels", y)

    @property
    def size(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class ModelWeights:
    w: np.ndarray
    step: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if self.step <= 0:
            raise ValueError("learning rate must be > 0")
        object.__setattr__(self, "w", w)


def pool(datasets: Sequence[LocalDataset]) -> LocalDataset:
    return LocalDataset(
        np.concatenate([d.samples for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
    )


def loss_value(w: np.ndarray, data: LocalDataset, loss: str) -> float:
    """Per-sample average loss of one dataset."""
    z = data.samples @ w
    if loss == "quadratic":
        return float(np.mean(0.5 * (z - data.labels) ** 2))
    if loss == "logistic":
        margins = -data.labels * z
        return float(np.mean(np.logaddexp(0.0, margins)))
    raise ValueError(f"unknown loss {loss!r}")


def gradient(w: np.ndarray, data: LocalDataset, loss: str) -> np.ndarray:
    z = data.samples @ w
    if loss == "quadratic":
        return data.samples.T @ (z - data.labels) / data.size
    if loss == "logistic":
        # labels in {-1, +1}; sigmoid of the negative margin scales each sample
        s = 1.0 / (1.0 + np.exp(data.labels * z))
        return -(data.samples.T @ (data.labels * s)) / data.size
    raise ValueError(f"unknown loss {loss!r}")


def local_step(weights: ModelWeights, data: LocalDataset, loss: str) -> ModelWeights:
    """One full-gradient descent step on the device's average local loss."""
    return ModelWeights(weights.w - weights.step * gradient(weights.w, data, loss), weights.step)


def _weighted_mean(entries: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    total = sum(size for _, size in entries)
    out = np.zeros_like(entries[0][0])
    # Fixed summation order keeps aggregation bit-reproducible.
    for w, size in entries:
        out += (size / total) * w
    return out


def aggregate_sr(
    sr_weights: ModelWeights,
    sr_size: int,
    lr_weights: Sequence[tuple[ModelWeights, int]],
) -> ModelWeights:
    """Size-weighted mean of an SR's own model and its attached LRs' models."""
    entries = [(m.w, size) for m, size in lr_weights] + [(sr_weights.w, sr_size)]
    return ModelWeights(_weighted_mean(entries), sr_weights.step)


def aggregate_edge(sr_aggregates: Sequence[tuple[ModelWeights, int]]) -> ModelWeights:
    """Size-weighted mean across SR aggregates; weights sum to one exactly."""
    if not sr_aggregates:
        raise ValueError("nothing to aggregate")
    entries = [(m.w, size) for m, size in sr_aggregates]
    return ModelWeights(_weighted_mean(entries), sr_aggregates[0][0].step)


def central_step_deviation(
    sr_data: LocalDataset,
    lr_datas: Sequence[LocalDataset],
    w_start: np.ndarray,
    delta: float,
    loss: str = "quadratic",
) -> float:
    """Max relative component gap between one hierarchical round and one
    centralized step on the pooled group data.

    All devices must start from the same w_start; with unsynchronized starts
    the gradient-linearity identity behind the equivalence does not apply.
    """
    start = ModelWeights(w_start, delta)
    locals_ = [(local_step(start, d, loss), d.size) for d in lr_datas]
    agg = aggregate_sr(local_step(start, sr_data, loss), sr_data.size, locals_)

    pooled = pool([*lr_datas, sr_data])
    central = local_step(start, pooled, loss)

    scale = np.maximum(np.abs(central.w), 1.0)
    return float(np.max(np.abs(agg.w - central.w) / scale))


def global_objective(datasets: Mapping[int, LocalDataset], w: np.ndarray, loss: str) -> float:
    """Sample-weighted average loss over every device's data."""
    total = sum(d.size for d in datasets.values())
    return float(
        sum(d.size * loss_value(w, d, loss) for d in datasets.values()) / total
    )
