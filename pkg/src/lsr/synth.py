"""Synthetic retrieval corpus with planted synonym structure.

The vocabulary is split into per-topic clusters; each cluster is further
split into document terms and disjoint query-alias terms. At
synonym_ratio=1 queries share no terms with any document, so a purely
lexical model cannot retrieve: recall requires learned expansion. Fully
determined by the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_docs: int = 2000
    n_queries: int = 250
    n_topics: int = 200
    vocab_terms: int = 1600
    synonym_ratio: float = 1.0
    doc_len: int = 12
    query_len: int = 3
    query_topics: int = 0  # topics receiving queries; 0 means all of them


@dataclass(frozen=True)
class SynthData:
    corpus: list[tuple[str, str]]
    queries: list[tuple[str, str]]
    qrels: list[tuple[str, str, int]]
    triples: list[tuple[str, str, str]]
    topic_doc_terms: list[list[str]]
    topic_alias_terms: list[list[str]]


def generate(spec: SynthSpec) -> SynthData:
    if spec.n_topics < 2:
        raise DataError("need at least 2 topics")
    if not 0.0 <= spec.synonym_ratio <= 1.0:
        raise DataError("synonym_ratio must be in [0, 1]")
    if spec.n_docs < spec.n_topics:
        raise DataError("need at least one document per topic")
    terms_per_topic = spec.vocab_terms // spec.n_topics
    if terms_per_topic < 2:
        raise DataError(
            f"cannot split {spec.vocab_terms} terms into {spec.n_topics} topics "
            "with document and alias terms each"
        )
    alias_count = max(1, terms_per_topic // 3)
    doc_term_count = terms_per_topic - alias_count

    rng = np.random.default_rng(spec.seed)
    doc_terms: list[list[str]] = []
    alias_terms: list[list[str]] = []
    for t in range(spec.n_topics):
        base = t * terms_per_topic
        block = [f"term{base + i:05d}" for i in range(terms_per_topic)]
        doc_terms.append(block[:doc_term_count])
        alias_terms.append(block[doc_term_count:])

    corpus: list[tuple[str, str]] = []
    topic_of_doc: list[int] = []
    docs_by_topic: list[list[str]] = [[] for _ in range(spec.n_topics)]
    for i in range(spec.n_docs):
        topic = i % spec.n_topics
        words = rng.choice(doc_terms[topic], size=spec.doc_len, replace=True)
        doc_id = f"d{i:05d}"
        corpus.append((doc_id, " ".join(words)))
        topic_of_doc.append(topic)
        docs_by_topic[topic].append(doc_id)

    queries: list[tuple[str, str]] = []
    qrels: list[tuple[str, str, int]] = []
    triples: list[tuple[str, str, str]] = []
    query_topics = spec.query_topics or spec.n_topics
    if query_topics > spec.n_topics:
        raise DataError("query_topics cannot exceed n_topics")
    for i in range(spec.n_queries):
        topic = i % query_topics
        words = []
        for _ in range(spec.query_len):
            pool = (
                alias_terms[topic]
                if rng.random() < spec.synonym_ratio
                else doc_terms[topic]
            )
            words.append(pool[rng.integers(len(pool))])
        qid = f"q{i:05d}"
        queries.append((qid, " ".join(words)))
        for doc_id in docs_by_topic[topic]:
            qrels.append((qid, doc_id, 1))
        pos = docs_by_topic[topic][rng.integers(len(docs_by_topic[topic]))]
        other = (topic + 1 + rng.integers(spec.n_topics - 1)) % spec.n_topics
        neg = docs_by_topic[other][rng.integers(len(docs_by_topic[other]))]
        triples.append((qid, pos, neg))
    return SynthData(corpus, queries, qrels, triples, doc_terms, alias_terms)


def write_files(data: SynthData, out_dir) -> dict[str, Path]:
    """Write corpus.tsv, queries.tsv, qrels.txt and triples.tsv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": out / "corpus.tsv",
        "queries": out / "queries.tsv",
        "qrels": out / "qrels.txt",
        "triples": out / "triples.tsv",
    }
    with paths["corpus"].open("w", encoding="utf-8") as fh:
        for doc_id, text in data.corpus:
            fh.write(f"{doc_id}\t{text}\n")
    with paths["queries"].open("w", encoding="utf-8") as fh:
        for qid, text in data.queries:
            fh.write(f"{qid}\t{text}\n")
    with paths["qrels"].open("w", encoding="utf-8") as fh:
        for qid, doc_id, grade in data.qrels:
            fh.write(f"{qid} 0 {doc_id} {grade}\n")
    with paths["triples"].open("w", encoding="utf-8") as fh:
        for qid, pos, neg in data.triples:
            fh.write(f"{qid}\t{pos}\t{neg}\n")
    return paths
