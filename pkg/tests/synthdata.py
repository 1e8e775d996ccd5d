"""Synthetic corpora for tests.

build_clustered_corpus makes a 14-class corpus whose texts lean on the
shipped verbalizer words plus per-class tag tokens. Each record carries a
noise level q in [0, 1): noisier records mix in other classes' words and sit
farther from their class center in embedding space, so centroid-nearest
selection prefers cleaner training examples.
"""

from __future__ import annotations

import random

import numpy as np

from promptclf.assets import default_catalog, default_verbalizers
from promptclf.corpus import ConversationRecord, Dataset
from promptclf.embeddings import EmbeddingMatrix

_FILLERS = ("hello", "thanks", "morning", "contact", "question", "today", "chat")


def class_word_pools(catalog=None) -> list[list[str]]:
    catalog = catalog or default_catalog()
    verbalizers = default_verbalizers(catalog)
    pools = []
    for label in range(len(catalog)):
        words: list[str] = []
        for vid in sorted(verbalizers):
            for word in verbalizers[vid].words_for(label):
                if word not in words:
                    words.append(word)
        words.append(f"tag{label}a")
        words.append(f"tag{label}b")
        pools.append(words)
    return pools


def build_clustered_corpus(
    n_per_class: int = 150, seed: int = 7, dim: int = 8
) -> tuple[Dataset, EmbeddingMatrix]:
    catalog = default_catalog()
    pools = class_word_pools(catalog)
    n_classes = len(catalog)
    rng = random.Random(seed)
    npr = np.random.default_rng(seed)
    centers = npr.normal(0.0, 4.0, size=(n_classes, dim))

    records = []
    rows: dict[str, np.ndarray] = {}
    for label in range(n_classes):
        for i in range(n_per_class):
            q = rng.random()
            tokens = []
            for _ in range(6):
                if rng.random() < 1.0 - 0.75 * q:
                    tokens.append(rng.choice(pools[label]))
                else:
                    other = rng.randrange(n_classes - 1)
                    if other >= label:
                        other += 1
                    tokens.append(rng.choice(pools[other]))
            tokens.extend(rng.choice(_FILLERS) for _ in range(3))
            rng.shuffle(tokens)
            rid = f"s{label:02d}n{i:04d}"
            records.append(ConversationRecord(rid, "customer: " + " ".join(tokens), label))
            direction = npr.normal(0.0, 1.0, size=dim)
            direction /= np.linalg.norm(direction)
            rows[rid] = centers[label] + q * 3.0 * direction + npr.normal(0.0, 0.15, size=dim)

    order = list(range(len(records)))
    rng.shuffle(order)
    dataset = Dataset(catalog, tuple(records[i] for i in order))
    return dataset, EmbeddingMatrix(dim, rows)


def reference_profile_dataset() -> Dataset:
    """A corpus whose per-class sizes match the shipped catalog's source profile."""
    counts = {
        0: 951, 1: 113, 2: 108, 3: 306, 4: 907, 5: 655, 6: 1259,
        7: 997, 8: 1069, 9: 102, 10: 192, 11: 531, 12: 283, 13: 29,
    }
    catalog = default_catalog()
    records = []
    for label, n in counts.items():
        for i in range(n):
            records.append(ConversationRecord(f"p{label:02d}x{i:05d}", f"text {label} {i}", label))
    return Dataset(catalog, tuple(records))
