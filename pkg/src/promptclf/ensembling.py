"""Combining label distributions from several (template, verbalizer) models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .verbalizing import LabelDistribution


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    template_id: str
    verbalizer_id: str
    backend_id: str


@dataclass(frozen=True)
class GridSpec:
    template_ids: tuple[str, ...]
    verbalizer_ids: tuple[str, ...]
    backend_id: str

    def __post_init__(self):
        if not self.template_ids or not self.verbalizer_ids:
            raise EnsembleError("grid needs at least one template and one verbalizer")
        if len(set(self.template_ids)) != len(self.template_ids):
            raise EnsembleError("duplicate template ids in grid")
        if len(set(self.verbalizer_ids)) != len(self.verbalizer_ids):
            raise EnsembleError("duplicate verbalizer ids in grid")


def softmax_normalize(scores: Sequence[float]) -> LabelDistribution:
    """Max-subtracted softmax; safe for large-magnitude scores."""
    if len(scores) == 0:
        raise EnsembleError("cannot softmax an empty score vector")
    values = [float(s) for s in scores]
    if any(not math.isfinite(v) for v in values):
        raise EnsembleError("scores must be finite")
    m = max(values)
    exps = [math.exp(v - m) for v in values]
    total = sum(exps)
    return LabelDistribution(tuple(e / total for e in exps))


def combine_distributions(
    dists: Sequence[LabelDistribution], weights: Sequence[float] | None = None
) -> LabelDistribution:
    """Weighted sum of distributions, renormalized. Default weights are uniform."""
    if not dists:
        raise EnsembleError("no distributions to combine")
    n = len(dists[0])
    if any(len(d) != n for d in dists):
        raise EnsembleError("distributions have mismatched lengths")
    if weights is None:
        weights = [1.0] * len(dists)
    if len(weights) != len(dists):
        raise EnsembleError("one weight per distribution required")
    if any(not math.isfinite(w) or w <= 0 for w in weights):
        raise EnsembleError("weights must be positive and finite")
    summed = [0.0] * n
    for dist, w in zip(dists, weights):
        for i, p in enumerate(dist.probs):
            summed[i] += w * p
    total = sum(summed)
    return LabelDistribution(tuple(s / total for s in summed))


def predict_label(dist: LabelDistribution) -> int:
    """Argmax label; exact ties resolve to the lowest index."""
    best = max(dist.probs)
    return dist.probs.index(best)


def expand_grid(grid: GridSpec) -> list[ModelSpec]:
    """All (template, verbalizer) members, row-major with templates outermost."""
    return [
        ModelSpec(t, v, grid.backend_id)
        for t in grid.template_ids
        for v in grid.verbalizer_ids
    ]
