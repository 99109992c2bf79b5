"""Exact dense vector index: full-scan top-k by dot product.

Entries are unit vectors stored as float32; score accumulation is float64.
Queries need not be unit-norm (fused query vectors are not). Ties break by
ascending key so results are reproducible.

On-disk layout (little-endian): 8-byte magic ``KGCQRIX1``, u32 version,
u32 dim, u64 count, then per entry a u32 key length, the UTF-8 key bytes,
and dim float32 values.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import KgcqrError, ValidationError
from .providers import EmbeddingVector

MAGIC = b"KGCQRIX1"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ")
_KEYLEN = struct.Struct("<I")


class IndexFormatError(KgcqrError):
    """Bad magic/version or truncated index file; nothing is partially loaded."""


class VectorIndex:
    def __init__(self, dim: int):
        if dim <= 0:
            raise ValidationError("index dim must be positive")
        self.dim = dim
        self.keys: list[str] = []
        self.key_lookup: dict[str, int] = {}
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None  # float64 cache for search

    def __len__(self) -> int:
        return len(self.keys)

    def add(self, key: str, vector: EmbeddingVector) -> None:
        if vector.dim != self.dim:
            raise ValidationError(f"vector dim {vector.dim} != index dim {self.dim}")
        if key in self.key_lookup:
            raise ValidationError(f"duplicate index key {key!r}")
        self.key_lookup[key] = len(self.keys)
        self.keys.append(key)
        self._rows.append(vector.values)
        self._matrix = None

    def vector(self, key: str) -> np.ndarray:
        """Stored float32 row for a key."""
        try:
            return self._rows[self.key_lookup[key]]
        except KeyError:
            raise KeyError(f"key {key!r} not in index") from None

    def _dense(self) -> np.ndarray:
        if self._matrix is None:
            if self._rows:
                self._matrix = np.stack(self._rows).astype(np.float64)
            else:
                self._matrix = np.zeros((0, self.dim), dtype=np.float64)
        return self._matrix

    def search(self, query: np.ndarray | Sequence[float], top_n: int) -> list[tuple[str, float]]:
        """Top ``top_n`` (key, score) by descending dot product, exact full
        scan; ties by ascending key."""
        if top_n <= 0:
            raise ValidationError("top_n must be positive")
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.size != self.dim:
            raise ValidationError(f"query dim {q.size} != index dim {self.dim}")
        if not self.keys:
            return []
        scores = self._dense() @ q
        order = sorted(range(len(self.keys)), key=lambda i: (-scores[i], self.keys[i]))
        return [(self.keys[i], float(scores[i])) for i in order[:top_n]]

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, self.dim, len(self.keys)))
            for key, row in zip(self.keys, self._rows):
                kb = key.encode("utf-8")
                fh.write(_KEYLEN.pack(len(kb)))
                fh.write(kb)
                fh.write(row.astype("<f4", copy=False).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        data = path.read_bytes()
        if len(data) < _HEADER.size:
            raise IndexFormatError(f"{path}: truncated header")
        magic, version, dim, count = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise IndexFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise IndexFormatError(f"{path}: unsupported version {version}")
        ix = cls(dim)
        offset = _HEADER.size
        row_bytes = dim * 4
        for _ in range(count):
            if offset + _KEYLEN.size > len(data):
                raise IndexFormatError(f"{path}: truncated entry")
            (klen,) = _KEYLEN.unpack_from(data, offset)
            offset += _KEYLEN.size
            if offset + klen + row_bytes > len(data):
                raise IndexFormatError(f"{path}: truncated entry")
            key = data[offset : offset + klen].decode("utf-8")
            offset += klen
            row = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
            offset += row_bytes
            ix.add(key, EmbeddingVector(row))
        if offset != len(data):
            raise IndexFormatError(f"{path}: trailing bytes after {count} entries")
        return ix
