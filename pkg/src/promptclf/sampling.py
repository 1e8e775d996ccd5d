"""Few-shot sample selection: per-class budgets, random or centroid-nearest."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Dataset, stream_rng
from .embeddings import EmbeddingError, EmbeddingMatrix

DISTANCE_METRICS = ("euclidean", "cosine")


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingPlan:
    """Requested record count per label."""

    counts: tuple[tuple[int, int], ...]  # (label, count) pairs, label-sorted

    def __post_init__(self):
        labels = [l for l, _ in self.counts]
        if len(set(labels)) != len(labels):
            raise SamplingError("duplicate label in sampling plan")
        if any(c < 1 for _, c in self.counts):
            raise SamplingError("planned counts must be >= 1")

    def as_dict(self) -> dict[int, int]:
        return dict(self.counts)

    def total(self) -> int:
        return sum(c for _, c in self.counts)


def allocate_counts(class_counts: Mapping[int, int], proportion: float) -> SamplingPlan:
    """Per-class budget: round-half-up of proportion * class size, clamped to [1, size]."""
    if not 0 < proportion <= 1:
        raise SamplingError(f"proportion must be in (0, 1], got {proportion!r}")
    if not class_counts:
        raise SamplingError("no classes to allocate")
    plan = []
    for label in sorted(class_counts):
        size = class_counts[label]
        if size < 1:
            raise SamplingError(f"class {label} has no records")
        n = math.floor(proportion * size + 0.5)
        plan.append((label, min(max(n, 1), size)))
    return SamplingPlan(tuple(plan))


def _ids_by_label(dataset: Dataset, plan: SamplingPlan) -> dict[int, list[str]]:
    groups: dict[int, list[str]] = {label: [] for label, _ in plan.counts}
    for rec in dataset.records:
        if rec.label in groups:
            groups[rec.label].append(rec.id)
    for label, count in plan.counts:
        if count > len(groups[label]):
            raise SamplingError(
                f"label {label}: plan asks for {count} of {len(groups[label])} records"
            )
    return groups


def sample_random(dataset: Dataset, plan: SamplingPlan, seed: int) -> set[str]:
    """Uniform per-label subsets. Each label draws from its own (seed, label) stream."""
    groups = _ids_by_label(dataset, plan)
    selected: set[str] = set()
    for label, count in plan.counts:
        selected.update(stream_rng(seed, label).sample(groups[label], count))
    return selected


def class_centroid(embeddings: EmbeddingMatrix, ids: Sequence[str]) -> np.ndarray:
    """Arithmetic mean of the given rows."""
    if not ids:
        raise SamplingError("cannot take a centroid of zero ids")
    return np.mean(_gather(embeddings, ids), axis=0)


def _gather(embeddings: EmbeddingMatrix, ids: Sequence[str]) -> list[np.ndarray]:
    try:
        return [embeddings.vector(rid) for rid in ids]
    except EmbeddingError as exc:
        raise SamplingError(str(exc)) from None


def sample_active(
    dataset: Dataset,
    embeddings: EmbeddingMatrix,
    plan: SamplingPlan,
    metric: str = "euclidean",
) -> set[str]:
    """Most-central records per label: smallest distance to the label centroid.

    Distance ties resolve by lexicographic id. Deterministic; no RNG involved.
    """
    if metric not in DISTANCE_METRICS:
        raise SamplingError(f"unknown metric {metric!r}, expected one of {DISTANCE_METRICS}")
    groups = _ids_by_label(dataset, plan)
    selected: set[str] = set()
    for label, count in plan.counts:
        ids = groups[label]
        vectors = np.stack(_gather(embeddings, ids))
        centroid = np.mean(vectors, axis=0)
        if metric == "euclidean":
            dists = np.sum((vectors - centroid) ** 2, axis=1)  # squared; same order
        else:
            norms = np.linalg.norm(vectors, axis=1) * np.linalg.norm(centroid)
            with np.errstate(invalid="ignore", divide="ignore"):
                cos = np.where(norms > 0, vectors @ centroid / norms, 0.0)
            dists = 1.0 - cos
        ranked = sorted(zip(dists.tolist(), ids))
        selected.update(rid for _, rid in ranked[:count])
    return selected


def save_selection(path, selected, provenance: Mapping) -> None:
    payload = {"selected": sorted(selected), "provenance": dict(provenance)}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_selection(path) -> tuple[set[str], dict]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "selected" not in raw:
        raise SamplingError(f"{path}: missing selected ids")
    return set(raw["selected"]), dict(raw.get("provenance", {}))
