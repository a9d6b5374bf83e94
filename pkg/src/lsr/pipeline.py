"""File-level pipeline helpers shared by the CLI and the sweep harness."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .encoder import EncoderParams, encode
from .errors import DataError
from .evalir import evaluate_run, load_qrels
from .index import InvertedIndex, build_index, flops_metric
from .reps import SparseRep
from .retrieval import batch_search
from .textpipe import CorpusRecord, Vocabulary, load_corpus, load_queries, load_triples
from .trainer import TrainConfig, TrainData, TrainResult, train


@dataclass(frozen=True)
class DataPaths:
    corpus: Path
    queries: Path
    triples: Path
    qrels: Path
    vocab: Path


def train_from_files(paths: DataPaths, config: TrainConfig, log=None) -> TrainResult:
    vocab = Vocabulary.load(paths.vocab)
    data = TrainData(
        list(load_corpus(paths.corpus)),
        list(load_queries(paths.queries)),
        list(load_triples(paths.triples)),
        vocab,
        config.max_len,
    )
    return train(data, load_qrels(paths.qrels), config, log=log)


def encode_records(
    records: Sequence[CorpusRecord], params: EncoderParams, vocab: Vocabulary
) -> list[tuple[str, SparseRep]]:
    return [(r.doc_id, encode(r.text, params, vocab)) for r in records]


def evaluate_params(
    params: EncoderParams,
    vocab: Vocabulary,
    corpus: Sequence[CorpusRecord],
    eval_queries: Sequence[CorpusRecord],
    qrels,
    metrics: Sequence[str],
    k: int = 1000,
) -> tuple[dict, float, InvertedIndex]:
    """Index the corpus, search the queries and report metrics plus FLOPS."""
    doc_reps = encode_records(corpus, params, vocab)
    idx = build_index(doc_reps, vocab_size=len(vocab))
    query_reps = encode_records(eval_queries, params, vocab)
    run = batch_search(idx, query_reps, k)
    reports = evaluate_run(run, qrels, list(metrics))
    flops = flops_metric([rep for _, rep in query_reps], idx)
    return reports, flops, idx


def expansion_report(params: EncoderParams, vocab: Vocabulary, text: str) -> str:
    """Human-readable term re-weighting and expansion summary for one text.

    Shows each distinct input term with its learned weight (dropped terms
    marked), then the expansion terms the encoder activated, sorted by
    descending weight, with drop/add counts.
    """
    from .textpipe import tokenize

    seq = tokenize(text, vocab, params.config.max_len)
    dense = encode(seq, params).to_dense()
    input_ids: list[int] = []
    for tid in seq.ids:
        if tid not in input_ids:
            input_ids.append(tid)
    lines = ["original terms:"]
    dropped = 0
    for tid in input_ids:
        w = dense[tid]
        term = vocab.term_of(tid)
        if w > 0:
            lines.append(f"  {term} ({w:.3f})")
        else:
            dropped += 1
            lines.append(f"  {term} (dropped)")
    expansion = [
        (float(dense[tid]), tid)
        for tid in dense.nonzero()[0].tolist()
        if tid not in set(input_ids)
    ]
    expansion.sort(key=lambda e: (-e[0], e[1]))
    lines.append("expansion terms:")
    for w, tid in expansion:
        lines.append(f"  {vocab.term_of(tid)} ({w:.3f})")
    lines.append(f"terms dropped: {dropped}")
    lines.append(f"terms added: {len(expansion)}")
    return "\n".join(lines)


@dataclass(frozen=True)
class SweepRow:
    lambda_q: float
    lambda_d: float
    reg_kind: str
    mrr10: float
    recall: float
    recall_k: int
    flops: float


def run_sweep_point(
    paths: DataPaths,
    config: TrainConfig,
    lambda_q: float,
    lambda_d: float,
    eval_queries_path: Path | None = None,
    recall_k: int = 10,
    log=None,
) -> SweepRow:
    """Train one model for a (lambda_q, lambda_d) pair and measure it."""
    cfg = replace(config, lambda_q=lambda_q, lambda_d=lambda_d)
    result = train_from_files(paths, cfg, log=log)
    vocab = Vocabulary.load(paths.vocab)
    corpus = list(load_corpus(paths.corpus))
    eval_queries = list(load_queries(eval_queries_path or paths.queries))
    qrels = load_qrels(paths.qrels)
    reports, flops, _ = evaluate_params(
        result.params, vocab, corpus, eval_queries, qrels,
        ["mrr@10", f"recall@{recall_k}"], k=max(10, recall_k),
    )
    return SweepRow(
        lambda_q=lambda_q,
        lambda_d=lambda_d,
        reg_kind=cfg.reg_kind,
        mrr10=reports["mrr@10"].mean,
        recall=reports[f"recall@{recall_k}"].mean,
        recall_k=recall_k,
        flops=flops,
    )


def _sweep_worker(args) -> SweepRow:
    paths, config, lq, ld, eval_queries_path, recall_k = args
    return run_sweep_point(paths, config, lq, ld, eval_queries_path, recall_k)


def run_sweep(
    paths: DataPaths,
    config: TrainConfig,
    pairs: Sequence[tuple[float, float]],
    eval_queries_path: Path | None = None,
    recall_k: int = 10,
    parallel: int = 1,
    on_row=None,
    log=None,
) -> list[SweepRow]:
    """Train/evaluate one model per lambda pair; rows are independent."""
    if not pairs:
        raise DataError("empty sweep specification")
    rows: list[SweepRow] = []
    if parallel > 1:
        from concurrent.futures import ProcessPoolExecutor

        jobs = [
            (paths, config, lq, ld, eval_queries_path, recall_k) for lq, ld in pairs
        ]
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for row in pool.map(_sweep_worker, jobs):
                rows.append(row)
                if on_row:
                    on_row(row)
    else:
        for lq, ld in pairs:
            row = run_sweep_point(
                paths, config, lq, ld, eval_queries_path, recall_k, log=log
            )
            rows.append(row)
            if on_row:
                on_row(row)
    return rows
