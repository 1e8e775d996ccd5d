"""Datasets, label catalogs and stratified splitting."""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class LabelEntry:
    index: int
    name: str
    description: str = ""


@dataclass(frozen=True)
class LabelCatalog:
    """Ordered label set. Indices must be exactly 0..n-1."""

    entries: tuple[LabelEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise CorpusError("catalog has no labels")
        for i, entry in enumerate(self.entries):
            if entry.index != i:
                raise CorpusError(
                    f"catalog indices must be contiguous from 0, got {entry.index} at position {i}"
                )
            if not entry.name:
                raise CorpusError(f"label {i} has an empty name")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise CorpusError("duplicate label names in catalog")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def name_of(self, index: int) -> str:
        return self.entries[index].name


@dataclass(frozen=True)
class ConversationRecord:
    id: str
    text: str
    label: int | None = None


@dataclass(frozen=True)
class Dataset:
    catalog: LabelCatalog
    records: tuple[ConversationRecord, ...]
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        seen: dict[str, ConversationRecord] = {}
        for rec in self.records:
            if not rec.id:
                raise CorpusError("record with empty id")
            if rec.id in seen:
                raise CorpusError(f"duplicate record id {rec.id!r}")
            if rec.label is not None and not (0 <= rec.label < len(self.catalog)):
                raise CorpusError(
                    f"record {rec.id!r}: label {rec.label} outside catalog (0..{len(self.catalog) - 1})"
                )
            seen[rec.id] = rec
        self._by_id.update(seen)

    def __len__(self) -> int:
        return len(self.records)

    def get(self, record_id: str) -> ConversationRecord:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise CorpusError(f"unknown record id {record_id!r}") from None

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def subset(self, ids) -> "Dataset":
        """Records restricted to `ids`, dataset order preserved."""
        wanted = set(ids)
        missing = wanted - set(self._by_id)
        if missing:
            raise CorpusError(f"unknown record ids: {sorted(missing)[:5]}")
        return Dataset(self.catalog, tuple(r for r in self.records if r.id in wanted))


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint id sets for the three experiment subsets."""

    train_dev: frozenset[str]
    validation: frozenset[str]
    test: frozenset[str]

    def __post_init__(self):
        a, b, c = self.train_dev, self.validation, self.test
        if a & b or a & c or b & c:
            raise CorpusError("split subsets overlap")

    def subset(self, name: str) -> frozenset[str]:
        try:
            return {"train_dev": self.train_dev, "validation": self.validation, "test": self.test}[name]
        except KeyError:
            raise CorpusError(f"unknown split subset {name!r}") from None

    def covers(self, dataset: Dataset) -> bool:
        return self.train_dev | self.validation | self.test == set(dataset.ids())


SUBSET_NAMES = ("train_dev", "validation", "test")


def load_catalog(path) -> LabelCatalog:
    """Read a label catalog from a JSON array of {index, name, description}."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise CorpusError(f"{path}: catalog file must hold a JSON array")
    entries = []
    for item in sorted(raw, key=lambda d: d.get("index", -1)):
        if not isinstance(item, dict) or "index" not in item or "name" not in item:
            raise CorpusError(f"{path}: catalog entries need index and name fields")
        entries.append(
            LabelEntry(int(item["index"]), str(item["name"]), str(item.get("description", "")))
        )
    return LabelCatalog(tuple(entries))


def save_catalog(catalog: LabelCatalog, path) -> None:
    rows = [
        {"index": e.index, "name": e.name, "description": e.description} for e in catalog
    ]
    Path(path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_dataset(path, catalog: LabelCatalog) -> Dataset:
    """Read line-delimited records ({id, text, label}) and validate against the catalog.

    label may be null for unlabeled records. Malformed lines are reported
    with their 1-based line number.
    """
    records = []
    seen_lines: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(row, dict) or "id" not in row or "text" not in row:
                raise CorpusError(f"{path}:{lineno}: record needs id and text fields")
            rid = row["id"]
            if not isinstance(rid, str) or not rid:
                raise CorpusError(f"{path}:{lineno}: id must be a non-empty string")
            if rid in seen_lines:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate id {rid!r} (first seen on line {seen_lines[rid]})"
                )
            seen_lines[rid] = lineno
            text = row["text"]
            if not isinstance(text, str):
                raise CorpusError(f"{path}:{lineno}: text must be a string")
            label = row.get("label")
            if label is not None:
                if not isinstance(label, int) or isinstance(label, bool):
                    raise CorpusError(f"{path}:{lineno}: label must be an integer or null")
                if not 0 <= label < len(catalog):
                    raise CorpusError(
                        f"{path}:{lineno}: label {label} outside catalog (0..{len(catalog) - 1})"
                    )
            records.append(ConversationRecord(rid, text, label))
    if not records:
        raise CorpusError(f"{path}: no records found")
    return Dataset(catalog, tuple(records))


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dataset.records:
            fh.write(
                json.dumps({"id": rec.id, "text": rec.text, "label": rec.label}, sort_keys=True)
                + "\n"
            )


def label_distribution(dataset: Dataset) -> dict[int, int]:
    """Per-label record counts. Every catalog label is present, possibly with 0."""
    counts = {entry.index: 0 for entry in dataset.catalog}
    for rec in dataset.records:
        if rec.label is not None:
            counts[rec.label] += 1
    return counts


def stream_rng(seed: int, stream: int) -> random.Random:
    """Independent RNG stream for (seed, stream).

    Derivation goes through sha256 so streams do not depend on each other,
    on iteration order, or on the platform hash.
    """
    digest = hashlib.sha256(f"{seed}:{stream}".encode("ascii")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def apportion(total: int, ratios: tuple[float, ...]) -> tuple[int, ...]:
    """Largest-remainder apportionment of `total` across `ratios`.

    Remainder seats go to the largest fractional parts; equal fractions
    resolve in ratio order. Result sums to `total` exactly.
    """
    if total < 0:
        raise CorpusError("cannot apportion a negative total")
    if not ratios:
        raise CorpusError("at least one ratio required")
    if any(r < 0 for r in ratios):
        raise CorpusError("ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-6:
        raise CorpusError(f"ratios must sum to 1, got {sum(ratios)!r}")
    shares = [total * r for r in ratios]
    base = [math.floor(s) for s in shares]
    leftover = total - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(shares[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return tuple(base)


def _check_ratios(ratios) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise CorpusError("exactly three split ratios required")
    ratios = tuple(float(r) for r in ratios)
    if any(r < 0 for r in ratios):
        raise CorpusError("split ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {sum(ratios)!r}")
    return ratios


def stratified_split(dataset: Dataset, ratios, seed: int) -> SplitAssignment:
    """Split a fully labeled dataset so each class mirrors the requested ratios.

    Per class the three counts come from largest-remainder apportionment, so
    each differs from ratio * class_size by less than one record. Ids are
    shuffled within their class by a per-class RNG stream before assignment.
    """
    ratios = _check_ratios(ratios)
    unlabeled = [r.id for r in dataset.records if r.label is None]
    if unlabeled:
        raise CorpusError(f"cannot split unlabeled records: {unlabeled[:5]}")
    by_class: dict[int, list[str]] = {entry.index: [] for entry in dataset.catalog}
    for rec in dataset.records:
        by_class[rec.label].append(rec.id)
    empty = [i for i, ids in by_class.items() if not ids]
    if empty:
        raise CorpusError(f"classes without records: {empty}")

    buckets: dict[str, set[str]] = {name: set() for name in SUBSET_NAMES}
    for label in sorted(by_class):
        ids = list(by_class[label])  # dataset order, then seeded shuffle
        stream_rng(seed, label).shuffle(ids)
        n_train, n_val, n_test = apportion(len(ids), ratios)
        buckets["train_dev"].update(ids[:n_train])
        buckets["validation"].update(ids[n_train : n_train + n_val])
        buckets["test"].update(ids[n_train + n_val :])
    return SplitAssignment(
        frozenset(buckets["train_dev"]),
        frozenset(buckets["validation"]),
        frozenset(buckets["test"]),
    )


def load_split(path) -> SplitAssignment:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    missing = [k for k in SUBSET_NAMES if k not in raw]
    if missing:
        raise CorpusError(f"{path}: split file missing subsets {missing}")
    return SplitAssignment(
        frozenset(raw["train_dev"]), frozenset(raw["validation"]), frozenset(raw["test"])
    )


def save_split(split: SplitAssignment, path) -> None:
    payload = {name: sorted(split.subset(name)) for name in SUBSET_NAMES}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
