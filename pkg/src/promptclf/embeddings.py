"""Record embeddings: line-delimited storage and batched retrieval."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import ConversationRecord

EMBED_BATCH_SIZE = 32


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Fixed-width float vectors keyed by record id."""

    dim: int
    rows: dict[str, np.ndarray]

    def __post_init__(self):
        if self.dim < 1:
            raise EmbeddingError("embedding dimension must be >= 1")
        for rid, vec in self.rows.items():
            if vec.shape != (self.dim,):
                raise EmbeddingError(
                    f"row {rid!r} has {vec.shape[0] if vec.ndim == 1 else vec.shape} "
                    f"components, expected {self.dim}"
                )

    def __len__(self) -> int:
        return len(self.rows)

    def vector(self, record_id: str) -> np.ndarray:
        try:
            return self.rows[record_id]
        except KeyError:
            raise EmbeddingError(f"no embedding for record {record_id!r}") from None


def load_embeddings(path) -> EmbeddingMatrix:
    """Read {id, vector} lines. All vectors must share one width; values finite."""
    rows: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(row, dict) or "id" not in row or "vector" not in row:
                raise EmbeddingError(f"{path}:{lineno}: rows need id and vector fields")
            rid = str(row["id"])
            if rid in rows:
                raise EmbeddingError(f"{path}:{lineno}: duplicate id {rid!r}")
            values = row["vector"]
            if not isinstance(values, list) or not values:
                raise EmbeddingError(f"{path}:{lineno}: vector must be a non-empty array")
            if any(not isinstance(v, (int, float)) or not math.isfinite(v) for v in values):
                raise EmbeddingError(f"{path}:{lineno}: vector components must be finite numbers")
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise EmbeddingError(
                    f"{path}:{lineno}: id {rid!r} has {len(values)} components, expected {dim}"
                )
            rows[rid] = np.asarray(values, dtype=np.float64)
    if not rows:
        raise EmbeddingError(f"{path}: no embedding rows")
    return EmbeddingMatrix(dim, rows)


def save_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Write one {id, vector} line per row, 9 significant digits per component."""
    with open(path, "w", encoding="utf-8") as fh:
        for rid in matrix.rows:
            rendered = ", ".join(f"{v:.9g}" for v in matrix.rows[rid])
            fh.write('{"id": %s, "vector": [%s]}\n' % (json.dumps(rid), rendered))


def fetch_embeddings(
    client,
    records: Sequence[ConversationRecord],
    batch_size: int = EMBED_BATCH_SIZE,
    max_concurrent_batches: int = 2,
) -> EmbeddingMatrix:
    """Embed record texts through a client exposing embed(texts) -> vectors.

    Requests go out in batches of at most batch_size, at most
    max_concurrent_batches in flight, and rows keep record order.
    """
    if not records:
        raise EmbeddingError("no records to embed")
    if batch_size < 1 or batch_size > EMBED_BATCH_SIZE:
        raise EmbeddingError(f"batch_size must be in 1..{EMBED_BATCH_SIZE}")
    if max_concurrent_batches < 1:
        raise EmbeddingError("max_concurrent_batches must be at least 1")
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise EmbeddingError("duplicate record ids in embed request")
    batches = [records[i : i + batch_size] for i in range(0, len(records), batch_size)]
    with ThreadPoolExecutor(max_workers=max_concurrent_batches) as pool:
        results = list(pool.map(lambda batch: client.embed([r.text for r in batch]), batches))
    rows: dict[str, np.ndarray] = {}
    dim: int | None = None
    for batch, vectors in zip(batches, results):
        for record, vec in zip(batch, vectors):
            if not isinstance(vec, list) or not vec:
                raise EmbeddingError(f"record {record.id!r}: empty embedding vector")
            if any(not isinstance(v, (int, float)) or not math.isfinite(v) for v in vec):
                raise EmbeddingError(f"record {record.id!r}: non-finite embedding component")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise EmbeddingError(
                    f"record {record.id!r}: got {len(vec)} components, expected {dim}"
                )
            rows[record.id] = np.asarray(vec, dtype=np.float64)
    return EmbeddingMatrix(dim, rows)
