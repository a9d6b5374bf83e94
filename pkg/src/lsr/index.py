"""Immutable inverted index over sparse document representations.

On-disk layout (little-endian): magic SPLI, version u32, |V| u32,
doc_count u32, doc-id table (u32 length-prefixed UTF-8 strings),
token_count u32, then per token: token_id u32, n_postings u32, LEB128
varint ordinal deltas, f32 weight array; CRC32 of all preceding bytes as
a u32 trailer.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ShapeError
from .reps import SparseRep

INDEX_MAGIC = b"SPLI"
INDEX_VERSION = 1


@dataclass(frozen=True)
class PostingList:
    token_id: int
    ordinals: np.ndarray  # uint32, strictly increasing
    weights: np.ndarray  # float32, all > 0

    def __len__(self) -> int:
        return int(self.ordinals.size)


class InvertedIndex:
    """Per-token posting lists plus the doc-id table; immutable after build."""

    def __init__(
        self,
        vocab_size: int,
        doc_ids: Sequence[str],
        postings: dict[int, PostingList],
        doc_support: np.ndarray,
    ):
        self.vocab_size = vocab_size
        self.doc_ids = list(doc_ids)
        self.postings = postings
        self.doc_support = doc_support  # per-doc L0 (support size)

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    def posting(self, token_id: int) -> PostingList | None:
        return self.postings.get(token_id)

    def doc_frequency(self) -> np.ndarray:
        """Posting-list length per vocabulary token (0 when absent)."""
        df = np.zeros(self.vocab_size, dtype=np.int64)
        for tid, pl in self.postings.items():
            df[tid] = len(pl)
        return df

    def structurally_equal(self, other: "InvertedIndex") -> bool:
        if (
            self.vocab_size != other.vocab_size
            or self.doc_ids != other.doc_ids
            or sorted(self.postings) != sorted(other.postings)
        ):
            return False
        for tid, pl in self.postings.items():
            opl = other.postings[tid]
            if not (
                np.array_equal(pl.ordinals, opl.ordinals)
                and np.array_equal(pl.weights, opl.weights)
            ):
                return False
        return np.array_equal(self.doc_support, other.doc_support)


def build_index(
    doc_reps: Iterable[tuple[str, SparseRep]], vocab_size: int | None = None
) -> InvertedIndex:
    """Group document reps into posting lists; ordinals follow input order.

    vocab_size only needs to be passed for an empty document stream.
    """
    doc_ids: list[str] = []
    seen: set[str] = set()
    per_token: dict[int, tuple[list[int], list[float]]] = {}
    support: list[int] = []
    for ordinal, (doc_id, rep) in enumerate(doc_reps):
        if doc_id in seen:
            raise DataError(f"duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        if vocab_size is None:
            vocab_size = rep.vocab_size
        elif rep.vocab_size != vocab_size:
            raise ShapeError("documents disagree on vocabulary size")
        doc_ids.append(doc_id)
        support.append(rep.support_size)
        w32 = rep.weights.astype(np.float32)
        for tid, w in zip(rep.ids.tolist(), w32.tolist()):
            slot = per_token.setdefault(tid, ([], []))
            slot[0].append(ordinal)
            slot[1].append(w)
    if vocab_size is None:
        raise DataError("no documents to index and no vocab_size given")
    postings = {
        tid: PostingList(
            tid,
            np.asarray(ords, dtype=np.uint32),
            np.asarray(ws, dtype=np.float32),
        )
        for tid, (ords, ws) in sorted(per_token.items())
    }
    return InvertedIndex(
        vocab_size, doc_ids, postings, np.asarray(support, dtype=np.int64)
    )


def _write_varint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(data: bytes, off: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if off >= len(data):
            raise DataError("truncated varint")
        byte = data[off]
        off += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, off
        shift += 7


def write_index(index: InvertedIndex, path) -> None:
    out = bytearray()
    out += INDEX_MAGIC
    out += struct.pack("<III", INDEX_VERSION, index.vocab_size, index.doc_count)
    for doc_id in index.doc_ids:
        raw = doc_id.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
    out += struct.pack("<I", len(index.postings))
    for tid in sorted(index.postings):
        pl = index.postings[tid]
        out += struct.pack("<II", tid, len(pl))
        prev = 0
        for ordinal in pl.ordinals.tolist():
            _write_varint(out, ordinal - prev)
            prev = ordinal
        out += pl.weights.astype("<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(out))


def read_index(path) -> InvertedIndex:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != INDEX_MAGIC:
        raise DataError(f"{path}: not an index file")
    body, (stored_crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"{path}: checksum failure")
    version, vocab_size, doc_count = struct.unpack_from("<III", body, 4)
    if version != INDEX_VERSION:
        raise DataError(f"{path}: unsupported index version {version}")
    off = 16
    doc_ids: list[str] = []
    try:
        for _ in range(doc_count):
            (n,) = struct.unpack_from("<I", body, off)
            off += 4
            doc_ids.append(body[off : off + n].decode("utf-8"))
            off += n
        (token_count,) = struct.unpack_from("<I", body, off)
        off += 4
        support = np.zeros(doc_count, dtype=np.int64)
        postings: dict[int, PostingList] = {}
        for _ in range(token_count):
            tid, n_post = struct.unpack_from("<II", body, off)
            off += 8
            ordinals = np.empty(n_post, dtype=np.uint32)
            prev = 0
            for k in range(n_post):
                delta, off = _read_varint(body, off)
                prev += delta
                ordinals[k] = prev
            weights = np.frombuffer(body, dtype="<f4", count=n_post, offset=off).copy()
            off += 4 * n_post
            postings[tid] = PostingList(tid, ordinals, weights)
            np.add.at(support, ordinals.astype(np.int64), 1)
    except (struct.error, ValueError, IndexError) as exc:
        raise DataError(f"{path}: truncated index file") from exc
    return InvertedIndex(vocab_size, doc_ids, postings, support)


def flops_metric(query_reps: Sequence[SparseRep], doc_source) -> float:
    """Expected multiply-adds per query-document scoring.

    Sum over tokens of p_q * p_d where p_q is the fraction of sample queries
    activating the token and p_d the fraction of documents (posting length /
    doc count when doc_source is an index, activation fraction when it is a
    sequence of document reps).
    """
    if len(query_reps) == 0:
        raise DataError("empty query sample")
    vocab_size = query_reps[0].vocab_size
    p_q = np.zeros(vocab_size, dtype=np.float64)
    for rep in query_reps:
        p_q[rep.ids] += 1.0
    p_q /= len(query_reps)

    if isinstance(doc_source, InvertedIndex):
        if doc_source.doc_count == 0:
            raise DataError("empty document sample")
        p_d = doc_source.doc_frequency().astype(np.float64) / doc_source.doc_count
    else:
        docs = list(doc_source)
        if not docs:
            raise DataError("empty document sample")
        p_d = np.zeros(vocab_size, dtype=np.float64)
        for rep in docs:
            p_d[rep.ids] += 1.0
        p_d /= len(docs)
    return float(np.dot(p_q, p_d))


@dataclass(frozen=True)
class PostingStats:
    lengths: np.ndarray
    mean: float
    variance: float  # population variance
    gini: float


def posting_stats(index: InvertedIndex) -> PostingStats:
    """Balance diagnostics over posting-list lengths (tokens with >= 1 posting)."""
    lengths = np.array(sorted(len(pl) for pl in index.postings.values()), dtype=np.int64)
    if lengths.size == 0:
        return PostingStats(lengths, 0.0, 0.0, 0.0)
    mean = float(lengths.mean())
    var = float(lengths.var())
    n = lengths.size
    # Gini via the sorted-rank identity: sum_i (2i - n - 1) x_i / (n^2 mu)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    gini = float(((2 * ranks - n - 1) * lengths).sum() / (n * n * mean)) if mean else 0.0
    return PostingStats(lengths, mean, var, gini)
