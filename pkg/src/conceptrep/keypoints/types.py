from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ORB = "ORB"
SIFT = "SIFT"
DESCRIPTOR_WIDTH = {ORB: 32, SIFT: 128}
_KIND_BYTE = {ORB: 0, SIFT: 1}
_BYTE_KIND = {v: k for k, v in _KIND_BYTE.items()}
_MAGIC = b"DSC1"


class DescriptorFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float
    response: float


@dataclass
class DescriptorSet:
    """Descriptors of one image and the keypoints they describe.

    ``fallback_stage`` is 0 for a plain detection, 1..3 for the number of
    threshold halvings that were needed, and 4 for the dense-grid terminal case.
    ``too_small`` marks images below the minimum detector size.
    """

    kind: str
    descriptors: np.ndarray
    keypoints: list[Keypoint] = field(default_factory=list)
    fallback_stage: int = 0
    too_small: bool = False

    def __post_init__(self):
        d = DESCRIPTOR_WIDTH[self.kind]
        dtype = np.uint8 if self.kind == ORB else np.float32
        self.descriptors = np.asarray(self.descriptors, dtype=dtype).reshape(-1, d)
        if self.keypoints and len(self.keypoints) != len(self.descriptors):
            raise ValueError("keypoints and descriptors are misaligned")

    def __len__(self) -> int:
        return len(self.descriptors)

    @property
    def dim(self) -> int:
        return DESCRIPTOR_WIDTH[self.kind]

    @classmethod
    def empty(cls, kind: str, too_small: bool = False) -> "DescriptorSet":
        return cls(kind, np.zeros((0, DESCRIPTOR_WIDTH[kind])), [], 0, too_small)

    def as_float(self) -> np.ndarray:
        """Descriptors widened to float64 (ORB bytes become 0..255 values)."""
        return self.descriptors.astype(np.float64)

    def to_bytes(self) -> bytes:
        m, d = self.descriptors.shape
        header = _MAGIC + struct.pack("<BII", _KIND_BYTE[self.kind], m, d)
        dtype = "u1" if self.kind == ORB else "<f4"
        return header + self.descriptors.astype(dtype).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "DescriptorSet":
        if data[:4] != _MAGIC:
            raise DescriptorFormatError("bad magic, not a descriptor file")
        if len(data) < 13:
            raise DescriptorFormatError("truncated header")
        kind_byte, m, d = struct.unpack_from("<BII", data, 4)
        if kind_byte not in _BYTE_KIND:
            raise DescriptorFormatError(f"unknown descriptor kind {kind_byte}")
        kind = _BYTE_KIND[kind_byte]
        if d != DESCRIPTOR_WIDTH[kind]:
            raise DescriptorFormatError(f"{kind} descriptors must be {DESCRIPTOR_WIDTH[kind]} wide, got {d}")
        dtype = np.dtype("u1") if kind == ORB else np.dtype("<f4")
        payload = data[13:]
        if len(payload) != m * d * dtype.itemsize:
            raise DescriptorFormatError("truncated payload")
        rows = np.frombuffer(payload, dtype=dtype).reshape(m, d)
        return cls(kind, rows.copy())

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "DescriptorSet":
        return cls.from_bytes(Path(path).read_bytes())
