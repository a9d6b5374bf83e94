"""Sparse term-weight representations and their binary cache format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError, ShapeError

REPS_MAGIC = b"SPLR"


@dataclass(frozen=True)
class SparseRep:
    """Non-negative sparse vector over the vocabulary.

    Entries are (token_id, weight) with strictly positive weights and
    strictly increasing token ids; absent ids are implicit zeros.
    """

    vocab_size: int
    ids: np.ndarray  # uint32, sorted ascending
    weights: np.ndarray  # float64, all > 0

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseRep":
        nz = np.flatnonzero(dense > 0.0)
        return cls(
            vocab_size=dense.shape[0],
            ids=nz.astype(np.uint32),
            weights=dense[nz].astype(np.float64),
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.vocab_size, dtype=np.float64)
        out[self.ids] = self.weights
        return out

    @property
    def support_size(self) -> int:
        return int(self.ids.size)

    def validate(self) -> None:
        if self.ids.size != self.weights.size:
            raise ShapeError("ids/weights length mismatch")
        if self.ids.size:
            if not np.all(np.diff(self.ids.astype(np.int64)) > 0):
                raise ShapeError("token ids must be strictly increasing")
            if int(self.ids[-1]) >= self.vocab_size:
                raise ShapeError("token id out of range")
            if not np.all(self.weights > 0):
                raise ShapeError("weights must be strictly positive")


def write_reps(path, vocab_size: int, items: Iterable[tuple[str, SparseRep]]) -> None:
    """Write an encoded-representation cache file.

    Layout: magic SPLR, |V| u32, count u32, then per item a length-prefixed
    utf-8 id, n u32, token ids u32 array, f32 weights array. Little-endian.
    """
    body = bytearray()
    count = 0
    for item_id, rep in items:
        if rep.vocab_size != vocab_size:
            raise ShapeError("rep vocab size differs from file vocab size")
        raw = item_id.encode("utf-8")
        body += struct.pack("<I", len(raw)) + raw
        body += struct.pack("<I", rep.support_size)
        body += rep.ids.astype("<u4").tobytes()
        body += rep.weights.astype("<f4").tobytes()
        count += 1
    with open(path, "wb") as fh:
        fh.write(REPS_MAGIC + struct.pack("<II", vocab_size, count))
        fh.write(bytes(body))


def read_reps(path) -> tuple[int, list[tuple[str, SparseRep]]]:
    """Read a cache file written by write_reps; weights come back as f32 values."""
    data = Path(path).read_bytes()
    if data[:4] != REPS_MAGIC:
        raise DataError(f"{path}: bad magic, not a representation cache")
    vocab_size, count = struct.unpack_from("<II", data, 4)
    off = 12
    items: list[tuple[str, SparseRep]] = []
    try:
        for _ in range(count):
            (id_len,) = struct.unpack_from("<I", data, off)
            off += 4
            item_id = data[off : off + id_len].decode("utf-8")
            off += id_len
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            ids = np.frombuffer(data, dtype="<u4", count=n, offset=off).copy()
            off += 4 * n
            weights = np.frombuffer(data, dtype="<f4", count=n, offset=off)
            off += 4 * n
            items.append(
                (item_id, SparseRep(vocab_size, ids, weights.astype(np.float64)))
            )
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated representation cache") from exc
    return vocab_size, items
