"""Verbalizers map label indices to answer words; scores aggregate per label."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping


class VerbalizerError(ValueError):
    pass


@dataclass(frozen=True)
class LabelDistribution:
    """Probabilities over the label catalog, in index order. Sums to 1."""

    probs: tuple[float, ...]

    def __post_init__(self):
        if not self.probs:
            raise VerbalizerError("empty distribution")
        if any(not math.isfinite(p) or p < 0 for p in self.probs):
            raise VerbalizerError("distribution entries must be finite and non-negative")
        total = sum(self.probs)
        if abs(total - 1.0) > 1e-9:
            raise VerbalizerError(f"distribution sums to {total!r}, expected 1")

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class Verbalizer:
    """Total map from label index to a non-empty tuple of lowercase words.

    Words may repeat across labels but not within one label.
    """

    id: str
    word_sets: tuple[tuple[str, ...], ...]  # position = label index

    def words_for(self, label: int) -> tuple[str, ...]:
        return self.word_sets[label]

    def all_words(self) -> tuple[str, ...]:
        """Distinct words, label order then word order."""
        seen: dict[str, None] = {}
        for words in self.word_sets:
            for w in words:
                seen.setdefault(w)
        return tuple(seen)

    @property
    def n_labels(self) -> int:
        return len(self.word_sets)


def parse_verbalizer(verbalizer_id: str, mapping: Mapping, n_labels: int) -> Verbalizer:
    """Validate and normalize a raw label->words mapping.

    The mapping must cover labels 0..n_labels-1 exactly; words are lowercased
    and must be unique within each label after normalization.
    """
    if not verbalizer_id:
        raise VerbalizerError("verbalizer id must be non-empty")
    try:
        keys = {int(k) for k in mapping}
    except (TypeError, ValueError):
        raise VerbalizerError(
            f"verbalizer {verbalizer_id!r}: label keys must be integers"
        ) from None
    expected = set(range(n_labels))
    missing = sorted(expected - keys)
    if missing:
        raise VerbalizerError(f"verbalizer {verbalizer_id!r}: missing labels {missing}")
    extra = sorted(keys - expected)
    if extra:
        raise VerbalizerError(f"verbalizer {verbalizer_id!r}: unknown labels {extra}")
    word_sets = []
    for label in range(n_labels):
        raw = mapping[label] if label in mapping else mapping[str(label)]
        words = tuple(str(w).lower() for w in raw)
        if not words:
            raise VerbalizerError(f"verbalizer {verbalizer_id!r}: label {label} has no words")
        if any(not w for w in words):
            raise VerbalizerError(f"verbalizer {verbalizer_id!r}: label {label} has an empty word")
        if len(set(words)) != len(words):
            raise VerbalizerError(
                f"verbalizer {verbalizer_id!r}: duplicate word within label {label}"
            )
        word_sets.append(words)
    return Verbalizer(verbalizer_id, tuple(word_sets))


def load_verbalizers(path, n_labels: int) -> dict[str, Verbalizer]:
    """Read verbalizers from a JSON array of {id, words: {label: [word, ...]}}."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise VerbalizerError(f"{path}: verbalizer file must hold a JSON array")
    out: dict[str, Verbalizer] = {}
    for item in raw:
        if not isinstance(item, dict) or "id" not in item or "words" not in item:
            raise VerbalizerError(f"{path}: verbalizer entries need id and words fields")
        vid = str(item["id"])
        if vid in out:
            raise VerbalizerError(f"{path}: duplicate verbalizer id {vid!r}")
        out[vid] = parse_verbalizer(vid, item["words"], n_labels)
    return out


def aggregate_scores(word_probs: Mapping[str, float], verbalizer: Verbalizer) -> LabelDistribution:
    """Label distribution from per-word probabilities.

    Each label's raw score is the arithmetic mean of its words' probabilities;
    the label scores are then renormalized to sum to 1. Uniform positive
    scaling of word_probs therefore cancels out.
    """
    probs = {str(k).lower(): float(v) for k, v in word_probs.items()}
    means = []
    for label, words in enumerate(verbalizer.word_sets):
        total = 0.0
        for word in words:
            if word not in probs:
                raise VerbalizerError(
                    f"verbalizer {verbalizer.id!r}: no probability for word {word!r} (label {label})"
                )
            p = probs[word]
            if not math.isfinite(p) or p < 0:
                raise VerbalizerError(f"word {word!r} has invalid probability {p!r}")
            total += p
        means.append(total / len(words))
    denom = sum(means)
    if denom <= 0:
        raise VerbalizerError("all-zero word probabilities, cannot normalize")
    return LabelDistribution(tuple(m / denom for m in means))
