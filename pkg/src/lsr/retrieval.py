"""Exact top-k retrieval: term-at-a-time over the index, plus a brute-force
oracle scoring every document, used to verify equivalence.

Both paths accumulate in float64 over f32 stored weights, adding query-token
contributions in ascending token-id order, so scores are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ShapeError
from .index import InvertedIndex
from .reps import SparseRep


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: list[tuple[str, float]]  # (doc_id, score), score desc / doc_id asc


def _top_k(scored: Iterable[tuple[str, float]], k: int) -> list[tuple[str, float]]:
    ordered = sorted(scored, key=lambda e: (-e[1], e[0]))
    return ordered[:k]


def search(index: InvertedIndex, q: SparseRep, k: int, query_id: str = "q") -> RankedList:
    """Term-at-a-time scoring with a dense per-document accumulator.

    Documents never touched by a query token (score 0) are excluded.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    if q.vocab_size != index.vocab_size:
        raise ShapeError("query/index vocabulary size mismatch")
    acc = np.zeros(index.doc_count, dtype=np.float64)
    touched = np.zeros(index.doc_count, dtype=bool)
    for tid, wq in zip(q.ids.tolist(), q.weights.tolist()):
        pl = index.posting(tid)
        if pl is None:
            continue
        ords = pl.ordinals.astype(np.int64)
        acc[ords] += wq * pl.weights.astype(np.float64)
        touched[ords] = True
    hits = np.flatnonzero(touched)
    scored = ((index.doc_ids[i], float(acc[i])) for i in hits)
    return RankedList(query_id, _top_k(scored, k))


def brute_force_search(
    doc_reps: Sequence[tuple[str, SparseRep]], q: SparseRep, k: int, query_id: str = "q"
) -> RankedList:
    """Score every document by sparse dot product; the oracle for search.

    Document weights are rounded to f32 first, matching what the index
    stores; accumulation order (ascending token id) matches search exactly.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    qw = dict(zip(q.ids.tolist(), q.weights.tolist()))
    scored = []
    for doc_id, rep in doc_reps:
        if rep.vocab_size != q.vocab_size:
            raise ShapeError("query/document vocabulary size mismatch")
        s = 0.0
        hit = False
        w32 = rep.weights.astype(np.float32)
        for tid, wd in zip(rep.ids.tolist(), w32.tolist()):
            wq = qw.get(tid)
            if wq is not None:
                s += wq * wd
                hit = True
        if hit:
            scored.append((doc_id, s))
    return RankedList(query_id, _top_k(scored, k))


def write_run(ranked_lists: Iterable[RankedList], path, run_tag: str = "lsr") -> None:
    """TREC run format: qid Q0 docid rank score tag, 6-decimal scores."""
    with open(path, "w", encoding="utf-8") as fh:
        for rl in ranked_lists:
            for rank, (doc_id, s) in enumerate(rl.entries, start=1):
                fh.write(f"{rl.query_id} Q0 {doc_id} {rank} {s:.6f} {run_tag}\n")


def batch_search(
    index: InvertedIndex,
    queries: Sequence[tuple[str, SparseRep]],
    k: int,
    run_tag: str = "lsr",
) -> list[RankedList]:
    """Search every query; duplicate query ids are rejected."""
    seen: set[str] = set()
    results = []
    for qid, rep in queries:
        if qid in seen:
            raise DataError(f"duplicate query id {qid!r}")
        seen.add(qid)
        results.append(search(index, rep, k, query_id=qid))
    return results
