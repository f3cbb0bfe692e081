"""Feature matrices keyed by image id, their file format, and early fusion.

Binary layout (little endian)::

    b"FEA1" | dim u32 | N u32 | provenance: u32 length + UTF-8
    N x (u32 length + UTF-8 id) | N*dim float32, row-major
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

_MAGIC = b"FEA1"


class FeatureFormatError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    ids: tuple[str, ...]
    rows: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float32)
        if rows.ndim == 1:
            rows = rows.reshape(len(self.ids), -1) if len(self.ids) else rows.reshape(0, 0)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ids", tuple(self.ids))
        if rows.shape[0] != len(self.ids):
            raise ValueError(f"{rows.shape[0]} rows for {len(self.ids)} ids")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in feature matrix")
        if not np.all(np.isfinite(rows)):
            raise ValueError("feature rows must be finite")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def select(self, ids: Sequence[str]) -> "FeatureMatrix":
        """Rows reordered (and subset) to ``ids``."""
        pos = {i: n for n, i in enumerate(self.ids)}
        missing = [i for i in ids if i not in pos]
        if missing:
            raise AlignmentError(f"{len(missing)} ids missing from features, e.g. {missing[:5]}")
        return FeatureMatrix(tuple(ids), self.rows[[pos[i] for i in ids]], self.provenance)

    def to_bytes(self) -> bytes:
        out = bytearray(_MAGIC)
        out += struct.pack("<II", self.dim, len(self.ids))
        tag = self.provenance.encode("utf-8")
        out += struct.pack("<I", len(tag)) + tag
        for i in self.ids:
            raw = i.encode("utf-8")
            out += struct.pack("<I", len(raw)) + raw
        out += self.rows.astype("<f4").tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FeatureMatrix":
        if data[:4] != _MAGIC:
            raise FeatureFormatError("bad magic, not a feature file")
        try:
            dim, n = struct.unpack_from("<II", data, 4)
            off = 12
            (tag_len,) = struct.unpack_from("<I", data, off)
            off += 4
            provenance = data[off : off + tag_len].decode("utf-8")
            off += tag_len
            ids = []
            for _ in range(n):
                (ln,) = struct.unpack_from("<I", data, off)
                off += 4
                ids.append(data[off : off + ln].decode("utf-8"))
                off += ln
        except struct.error as exc:
            raise FeatureFormatError(f"truncated header: {exc}") from exc
        if len(data) - off != n * dim * 4:
            raise FeatureFormatError(f"truncated payload: expected {n * dim * 4} bytes, found {len(data) - off}")
        if len(set(ids)) != len(ids):
            raise FeatureFormatError("duplicate ids in feature file")
        rows = np.frombuffer(data, dtype="<f4", count=n * dim, offset=off).reshape(n, dim)
        return cls(tuple(ids), rows.copy(), provenance)


def write_features(path: str | Path, m: FeatureMatrix) -> None:
    Path(path).write_bytes(m.to_bytes())


def read_features(path: str | Path) -> FeatureMatrix:
    return FeatureMatrix.from_bytes(Path(path).read_bytes())


def write_features_csv(path: str | Path, m: FeatureMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i, row in zip(m.ids, m.rows):
            w.writerow([i, *(repr(float(v)) for v in row)])


def read_features_csv(path: str | Path, provenance: str = "csv") -> FeatureMatrix:
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    dim = len(rows[0]) if rows else 0
    return FeatureMatrix(tuple(ids), np.array(rows, dtype=np.float32).reshape(len(ids), dim), provenance)


def fuse(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    """Concatenate b's rows onto a's, matched by id, in a's id order."""
    missing_b = sorted(set(a.ids) - set(b.ids))
    missing_a = sorted(set(b.ids) - set(a.ids))
    if missing_a or missing_b:
        raise AlignmentError(f"id sets differ: missing from b {missing_b[:10]}, missing from a {missing_a[:10]}")
    b_aligned = b.select(a.ids)
    rows = np.concatenate([a.rows, b_aligned.rows], axis=1)
    return FeatureMatrix(a.ids, rows, f"mix({a.provenance},{b.provenance})")
