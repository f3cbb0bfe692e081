"""Image/concept manifests, concept vocabularies and label matrices.

A manifest is a UTF-8 text file with one record per line::

    image_id<TAB>C0040405,C0221198

The trailing concept list may be empty. Prediction files use the same layout,
so :func:`load_manifest` doubles as the prediction-file reader.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ManifestError(ValueError):
    """Malformed manifest line."""


class IntegrityError(ValueError):
    """Duplicate ids or otherwise inconsistent records."""


class EmptyVocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class ImageRecord:
    id: str
    path: str
    concepts: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class ConceptVocabulary:
    concepts: tuple[str, ...]
    counts: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.concepts)

    def index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.concepts)}

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(c + "\n" for c in self.concepts), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ConceptVocabulary":
        concepts = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
        concepts = [c for c in concepts if c]
        # counts are not persisted; the order carries the ranking
        return cls(tuple(concepts), tuple(0 for _ in concepts))


@dataclass(frozen=True)
class LabelMatrix:
    ids: tuple[str, ...]
    vocabulary: ConceptVocabulary
    bits: np.ndarray  # (N, L) bool
    dropped: tuple[str, ...] = ()
    unknown: int = 0

    def __len__(self) -> int:
        return len(self.ids)

    def concept_sets(self) -> list[frozenset[str]]:
        vocab = self.vocabulary.concepts
        return [frozenset(vocab[j] for j in np.flatnonzero(row)) for row in self.bits]


@dataclass(frozen=True)
class LabelStats:
    counts: np.ndarray
    rates: np.ndarray
    top3: tuple[str, ...]


def parse_manifest_lines(lines: Iterable[str], image_root: str | Path | None = None) -> list[ImageRecord]:
    records: list[ImageRecord] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise ManifestError(f"line {lineno}: expected 'id<TAB>concepts', got {line!r}")
        image_id, concept_field = line.split("\t", 1)
        image_id = image_id.strip()
        if not image_id:
            raise ManifestError(f"line {lineno}: empty image id")
        if image_id in seen:
            raise IntegrityError(f"line {lineno}: duplicate image id {image_id!r}")
        seen.add(image_id)
        concepts = frozenset(c.strip() for c in concept_field.split(",") if c.strip())
        path = str(Path(image_root) / image_id) if image_root is not None else image_id
        records.append(ImageRecord(image_id, path, concepts))
    return records


def load_manifest(path: str | Path, image_root: str | Path | None = None) -> list[ImageRecord]:
    """Read a manifest file into records, preserving line order.

    ``path`` of each record is ``image_root / id`` when a root is given, else
    the bare id.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_manifest_lines(fh, image_root)


def write_manifest(path: str | Path, rows: Iterable[tuple[str, Iterable[str]]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for image_id, concepts in rows:
            fh.write(f"{image_id}\t{','.join(concepts)}\n")


def select_frequent_concepts(records: Sequence[ImageRecord], n: int = 750) -> ConceptVocabulary:
    """Keep the ``n`` most frequent concepts, ties broken by concept id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not records:
        raise ValueError("no records")
    counts = Counter(c for r in records for c in r.concepts)
    if not counts:
        raise EmptyVocabularyError("records contain no concept occurrences")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    return ConceptVocabulary(tuple(c for c, _ in ranked), tuple(k for _, k in ranked))


def build_label_matrix(
    records: Sequence[ImageRecord], vocab: ConceptVocabulary, drop_empty: bool = True
) -> LabelMatrix:
    """Incidence matrix of ``records`` over ``vocab``.

    Concepts outside the vocabulary are ignored and tallied in ``unknown``.
    With ``drop_empty`` a record whose concepts miss the vocabulary entirely
    is left out and listed in ``dropped``.
    """
    if len(vocab) == 0:
        raise EmptyVocabularyError("vocabulary is empty")
    index = vocab.index()
    ids: list[str] = []
    rows: list[np.ndarray] = []
    dropped: list[str] = []
    unknown = 0
    for rec in records:
        row = np.zeros(len(vocab), dtype=bool)
        for c in rec.concepts:
            j = index.get(c)
            if j is None:
                unknown += 1
            else:
                row[j] = True
        if drop_empty and not row.any():
            dropped.append(rec.id)
            continue
        ids.append(rec.id)
        rows.append(row)
    bits = np.array(rows, dtype=bool).reshape(len(rows), len(vocab))
    return LabelMatrix(tuple(ids), vocab, bits, tuple(dropped), unknown)


def label_stats(matrix: LabelMatrix) -> LabelStats:
    if len(matrix) == 0:
        raise ValueError("label matrix is empty")
    counts = matrix.bits.sum(axis=0).astype(np.int64)
    rates = counts / len(matrix)
    order = sorted(range(len(counts)), key=lambda j: (-counts[j], matrix.vocabulary.concepts[j]))
    top3 = tuple(matrix.vocabulary.concepts[j] for j in order[:3])
    return LabelStats(counts, rates, top3)
