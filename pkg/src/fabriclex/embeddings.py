"""Fixed-dimension vector stores and cosine similarity kernels.

Two on-disk formats are supported. Text: a "count dim" header line, then
one "key v1 ... vdim" row per entry. Binary: little-endian magic "EMB1",
u32 count, u32 dim, then per entry a u32 byte length, the UTF-8 key, and
dim float32 values. Values are accumulated in float64 regardless of the
storage precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

MAGIC = b"EMB1"


class EmbeddingError(ValueError):
    pass


class EmbeddingStore:
    """Immutable mapping from string keys to equal-dimension vectors."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise EmbeddingError("empty embedding store")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise EmbeddingError(f"inconsistent dimensions: {sorted(dims)}")
        self.dim = dims.pop()
        self._keys = tuple(vectors.keys())
        self._index = {k: i for i, k in enumerate(self._keys)}
        self._matrix = np.array([vectors[k] for k in self._keys], dtype=np.float64)
        norms = np.linalg.norm(self._matrix, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise EmbeddingError(f"zero-norm vector for key {self._keys[zero[0]]!r}")
        self._norms = norms
        self._units = self._matrix / norms[:, None]

    @property
    def keys(self) -> tuple[str, ...]:
        return self._keys

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def index(self, key: str) -> int:
        try:
            return self._index[key]
        except KeyError:
            raise EmbeddingError(f"missing embedding key {key!r}") from None

    def vector(self, key: str) -> np.ndarray:
        return self._matrix[self.index(key)]

    def norm(self, key: str) -> float:
        return float(self._norms[self.index(key)])

    def unit(self, key: str) -> np.ndarray:
        return self._units[self.index(key)]

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def unit_matrix(self) -> np.ndarray:
        return self._units

    def subset(self, keys) -> "EmbeddingStore":
        return EmbeddingStore({k: self.vector(k) for k in keys})

    def items(self):
        for k in self._keys:
            yield k, self._matrix[self._index[k]]


def cosine(store: EmbeddingStore, u: str, v: str) -> float:
    """Cosine similarity between two stored vectors, clamped to [-1, 1]."""
    if store.index(u) == store.index(v):
        return 1.0
    value = float(np.dot(store.unit(u), store.unit(v)))
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class SimilarityBlock:
    row_keys: tuple[str, ...]
    col_keys: tuple[str, ...]
    row_start: int
    col_start: int
    values: np.ndarray


def pairwise_blocks(store: EmbeddingStore, rows: list[str], cols: list[str],
                    block_size: int = 1024) -> Iterator[SimilarityBlock]:
    """Stream the rows x cols cosine matrix as dense tiles.

    Tiles cover the full grid exactly once; the matrix is never
    materialized whole.
    """
    if block_size < 1:
        raise EmbeddingError(f"block_size must be >= 1, got {block_size}")
    ridx = np.array([store.index(k) for k in rows], dtype=np.intp)
    cidx = np.array([store.index(k) for k in cols], dtype=np.intp)
    units = store.unit_matrix
    for i0 in range(0, len(rows), block_size):
        i1 = min(i0 + block_size, len(rows))
        ru = units[ridx[i0:i1]]
        for j0 in range(0, len(cols), block_size):
            j1 = min(j0 + block_size, len(cols))
            vals = ru @ units[cidx[j0:j1]].T
            np.clip(vals, -1.0, 1.0, out=vals)
            yield SimilarityBlock(row_keys=tuple(rows[i0:i1]),
                                  col_keys=tuple(cols[j0:j1]),
                                  row_start=i0, col_start=j0, values=vals)


def load_vectors(path: str | Path, format: str = "text") -> EmbeddingStore:
    """Read a vector file. Rejects dimension mismatches, duplicate keys
    and zero vectors, naming the offending line/entry."""
    path = Path(path)
    if format == "text":
        return _load_text(path)
    if format == "binary":
        return _load_binary(path)
    raise EmbeddingError(f"unknown embedding format {format!r}")


def _load_text(path: Path) -> EmbeddingStore:
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingError(f"{path.name}:1: expected 'count dim' header")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingError(f"{path.name}:1: bad header {header}") from None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise EmbeddingError(
                    f"{path.name}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            key = parts[0]
            if key in vectors:
                raise EmbeddingError(f"{path.name}:{lineno}: duplicate key {key!r}")
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise EmbeddingError(f"{path.name}:{lineno}: non-numeric value") from None
            if not np.linalg.norm(vec) > 0:
                raise EmbeddingError(f"{path.name}:{lineno}: zero-norm vector {key!r}")
            vectors[key] = vec
    if len(vectors) != count:
        raise EmbeddingError(f"{path.name}: header says {count} entries, found {len(vectors)}")
    return EmbeddingStore(vectors)


def _load_binary(path: Path) -> EmbeddingStore:
    vectors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12 or head[:4] != MAGIC:
            raise EmbeddingError(f"{path.name}: not a {MAGIC.decode()} file")
        count, dim = struct.unpack("<II", head[4:])
        for i in range(count):
            raw = fh.read(4)
            if len(raw) != 4:
                raise EmbeddingError(f"{path.name}: truncated at entry {i}")
            (klen,) = struct.unpack("<I", raw)
            key = fh.read(klen).decode("utf-8")
            data = fh.read(4 * dim)
            if len(data) != 4 * dim:
                raise EmbeddingError(f"{path.name}: truncated vector for {key!r}")
            if key in vectors:
                raise EmbeddingError(f"{path.name}: duplicate key {key!r} at entry {i}")
            vec = np.frombuffer(data, dtype="<f4").astype(np.float64)
            if not np.linalg.norm(vec) > 0:
                raise EmbeddingError(f"{path.name}: zero-norm vector {key!r}")
            vectors[key] = vec
    return EmbeddingStore(vectors)


def save_vectors(store: EmbeddingStore, path: str | Path, format: str = "text") -> None:
    path = Path(path)
    if format == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(store)} {store.dim}\n")
            for key, vec in store.items():
                fh.write(key + " " + " ".join(repr(float(x)) for x in vec) + "\n")
    elif format == "binary":
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<II", len(store), store.dim))
            for key, vec in store.items():
                kb = key.encode("utf-8")
                fh.write(struct.pack("<I", len(kb)) + kb)
                fh.write(vec.astype("<f4").tobytes())
    else:
        raise EmbeddingError(f"unknown embedding format {format!r}")
