"""Predicted concept sets and the ImageCLEF-style prediction file."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ConceptVocabulary, load_manifest, write_manifest


@dataclass(frozen=True)
class PredictionSet:
    ids: tuple[str, ...]
    concepts_per_id: tuple[frozenset[str], ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "concepts_per_id", tuple(frozenset(c) for c in self.concepts_per_id))
        if len(self.ids) != len(self.concepts_per_id):
            raise ValueError("ids and concept sets differ in length")

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_bits(cls, ids: Sequence[str], bits: np.ndarray, vocabulary: ConceptVocabulary) -> "PredictionSet":
        vocab = vocabulary.concepts
        return cls(tuple(ids), tuple(frozenset(vocab[j] for j in np.flatnonzero(row)) for row in bits))

    def to_bits(self, vocabulary: ConceptVocabulary) -> np.ndarray:
        index = vocabulary.index()
        bits = np.zeros((len(self), len(vocabulary)), dtype=bool)
        for n, concepts in enumerate(self.concepts_per_id):
            for c in concepts:
                j = index.get(c)
                if j is not None:
                    bits[n, j] = True
        return bits

    def as_dict(self) -> dict[str, frozenset[str]]:
        return dict(zip(self.ids, self.concepts_per_id))


def write_predictions(path: str | Path, preds: PredictionSet, vocabulary: ConceptVocabulary | None = None) -> None:
    """One ``id<TAB>c1,c2`` line per image; concepts in vocabulary order when given, else sorted."""
    rank = vocabulary.index() if vocabulary is not None else {}

    def ordered(cs):
        return sorted(cs, key=lambda c: (rank.get(c, len(rank)), c))

    write_manifest(path, ((i, ordered(cs)) for i, cs in zip(preds.ids, preds.concepts_per_id)))


def read_predictions(path: str | Path) -> PredictionSet:
    recs = load_manifest(path)
    return PredictionSet(tuple(r.id for r in recs), tuple(r.concepts for r in recs))
