"""IR metrics over TREC-format run files and qrels: MRR@k, Recall@k, NDCG@k."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

SUPPORTED_METRICS = ("mrr", "recall", "ndcg")


@dataclass
class MetricReport:
    """Per-query values plus their arithmetic mean.

    `missing` lists qrels queries absent from the run (scored 0 where the
    metric allows it); `excluded` lists queries left out of the mean
    (no relevant documents for recall, zero ideal DCG for NDCG).
    """

    metric: str
    per_query: dict[str, float]
    missing: list[str] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return sum(self.per_query.values()) / len(self.per_query)


Qrels = dict[str, dict[str, int]]


def load_qrels(path) -> Qrels:
    """Parse `qid 0 docid grade` lines (space- or tab-separated)."""
    qrels: Qrels = {}
    p = Path(path)
    if not p.is_file():
        raise DataError(f"missing file: {path}")
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields")
            qid, _, doc_id, grade = fields
            try:
                g = int(grade)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad grade {grade!r}") from exc
            if g < 0:
                raise DataError(f"{path}:{lineno}: negative grade")
            qrels.setdefault(qid, {})[doc_id] = g
    return qrels


def load_run(path) -> dict[str, list[tuple[str, float]]]:
    """Parse a TREC run file into per-query ranked (doc_id, score) lists."""
    run: dict[str, list[tuple[str, float]]] = {}
    p = Path(path)
    if not p.is_file():
        raise DataError(f"missing file: {path}")
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields")
            qid, _, doc_id, _rank, score, _tag = fields
            try:
                run.setdefault(qid, []).append((doc_id, float(score)))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad score {score!r}") from exc
    return run


def _as_run(run) -> dict[str, list[tuple[str, float]]]:
    if isinstance(run, dict):
        return run
    return {rl.query_id: list(rl.entries) for rl in run}


def mrr_at_k(run, qrels: Qrels, k: int = 10, min_grade: int = 1) -> MetricReport:
    """1/rank of the first relevant document within the top k, else 0."""
    run = _as_run(run)
    report = MetricReport("mrr", {})
    for qid, judged in qrels.items():
        if qid not in run:
            report.missing.append(qid)
            report.per_query[qid] = 0.0
            continue
        value = 0.0
        for rank, (doc_id, _) in enumerate(run[qid][:k], start=1):
            if judged.get(doc_id, 0) >= min_grade:
                value = 1.0 / rank
                break
        report.per_query[qid] = value
    return report


def recall_at_k(run, qrels: Qrels, k: int, min_grade: int = 1) -> MetricReport:
    """Fraction of relevant documents retrieved in the top k.

    Queries with no relevant documents are excluded from the mean.
    """
    run = _as_run(run)
    report = MetricReport("recall", {})
    for qid, judged in qrels.items():
        relevant = {d for d, g in judged.items() if g >= min_grade}
        if not relevant:
            report.excluded.append(qid)
            continue
        if qid not in run:
            report.missing.append(qid)
            report.per_query[qid] = 0.0
            continue
        top = {doc_id for doc_id, _ in run[qid][:k]}
        report.per_query[qid] = len(relevant & top) / len(relevant)
    return report


def _dcg(grades) -> float:
    return sum(
        (2**g - 1) / math.log2(rank + 1) for rank, g in enumerate(grades, start=1)
    )


def ndcg_at_k(run, qrels: Qrels, k: int = 10) -> MetricReport:
    """DCG with gain 2^grade - 1 and log2 discount, over the ideal DCG.

    Queries whose ideal DCG is zero are excluded from the mean.
    """
    run = _as_run(run)
    report = MetricReport("ndcg", {})
    for qid, judged in qrels.items():
        ideal = _dcg(sorted(judged.values(), reverse=True)[:k])
        if ideal == 0.0:
            report.excluded.append(qid)
            continue
        if qid not in run:
            report.missing.append(qid)
            report.per_query[qid] = 0.0
            continue
        gains = [judged.get(doc_id, 0) for doc_id, _ in run[qid][:k]]
        report.per_query[qid] = _dcg(gains) / ideal
    return report


def _parse_metric(spec: str) -> tuple[str, int]:
    name, _, cutoff = spec.partition("@")
    name = name.lower()
    if name not in SUPPORTED_METRICS:
        raise DataError(f"unknown metric {spec!r}")
    if not cutoff:
        return name, 10
    try:
        k = int(cutoff)
    except ValueError as exc:
        raise DataError(f"bad metric cutoff in {spec!r}") from exc
    if k < 1:
        raise DataError(f"metric cutoff must be >= 1 in {spec!r}")
    return name, k


def evaluate_run(
    run, qrels: Qrels, metrics: list[str], min_grade: int = 1
) -> dict[str, MetricReport]:
    """Compute each requested metric ('mrr@10', 'recall@1000', 'ndcg@10')."""
    run = _as_run(run)
    reports: dict[str, MetricReport] = {}
    for spec in metrics:
        name, k = _parse_metric(spec)
        if name == "mrr":
            reports[spec] = mrr_at_k(run, qrels, k, min_grade)
        elif name == "recall":
            reports[spec] = recall_at_k(run, qrels, k, min_grade)
        else:
            reports[spec] = ndcg_at_k(run, qrels, k)
    return reports


def write_report_csv(reports: dict[str, MetricReport], path) -> None:
    """CSV rows `metric,query_id,value` plus a `metric,ALL,mean` row each."""
    with open(path, "w", encoding="utf-8") as fh:
        for spec, report in reports.items():
            for qid in sorted(report.per_query):
                fh.write(f"{spec},{qid},{report.per_query[qid]:.6f}\n")
            fh.write(f"{spec},ALL,{report.mean:.6f}\n")
