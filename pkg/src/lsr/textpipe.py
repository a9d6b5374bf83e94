"""Tokenization, vocabulary construction, and TSV corpus ingestion.

The tokenizer is deliberately simple: lowercase, split on non-alphanumeric
runs, no subwords. Out-of-vocabulary terms map to the reserved UNK id 0.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

UNK_TOKEN = "[UNK]"
UNK_ID = 0

_TOKEN_RE = re.compile(r"[0-9a-z]+")


@dataclass(frozen=True)
class CorpusRecord:
    doc_id: str
    text: str


class Vocabulary:
    """Immutable term <-> dense-id mapping with UNK at id 0."""

    def __init__(self, terms: list[str]):
        if not terms or terms[0] != UNK_TOKEN:
            raise DataError("vocabulary must start with the UNK token")
        if len(set(terms)) != len(terms):
            raise DataError("duplicate terms in vocabulary")
        self._terms = list(terms)
        self._ids = {t: i for i, t in enumerate(terms)}

    def __len__(self) -> int:
        return len(self._terms)

    def __contains__(self, term: str) -> bool:
        return term in self._ids

    def id_of(self, term: str) -> int:
        return self._ids.get(term, UNK_ID)

    def term_of(self, token_id: int) -> str:
        return self._terms[token_id]

    @property
    def terms(self) -> list[str]:
        return list(self._terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._terms == other._terms

    def save(self, path) -> None:
        """One term per line; line number is the id, line 0 is the UNK token."""
        Path(path).write_text("\n".join(self._terms) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise DataError(f"empty vocabulary file: {path}")
        return cls(lines)


def normalize_terms(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def build_vocab(
    corpus: Iterable[CorpusRecord], max_size: int, min_freq: int = 1
) -> Vocabulary:
    """Most frequent normalized terms, ties broken lexicographically.

    The result holds UNK plus at most max_size - 1 corpus terms with
    frequency >= min_freq. Deterministic for identical inputs.
    """
    if max_size < 2:
        raise DataError("max_size must be >= 2")
    counts: Counter[str] = Counter()
    seen_any = False
    for rec in corpus:
        seen_any = True
        counts.update(normalize_terms(rec.text))
    if not seen_any:
        raise DataError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [t for t, c in ranked if c >= min_freq][: max_size - 1]
    return Vocabulary([UNK_TOKEN] + kept)


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


def tokenize(text: str, vocab: Vocabulary, max_len: int = 256) -> TokenSeq:
    """Lowercase, split on non-alphanumeric runs, map OOV to UNK, truncate."""
    if max_len < 1:
        raise DataError("max_len must be >= 1")
    terms = normalize_terms(text)
    if not terms:
        raise DataError("empty token sequence")
    ids = tuple(vocab.id_of(t) for t in terms[:max_len])
    return TokenSeq(ids)


def _read_tsv(path, n_fields: int) -> Iterator[tuple[str, ...]]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"missing file: {path}")
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise DataError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated "
                    f"fields, got {len(fields)}"
                )
            yield tuple(fields)


def load_corpus(path) -> Iterator[CorpusRecord]:
    """Stream doc_id<TAB>text records; duplicate doc_ids are rejected."""
    seen: set[str] = set()
    for lineno, (doc_id, text) in enumerate(_read_tsv(path, 2), start=1):
        if doc_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        yield CorpusRecord(doc_id, text)


def load_queries(path) -> Iterator[CorpusRecord]:
    """Stream qid<TAB>text records in file order."""
    for qid, text in _read_tsv(path, 2):
        yield CorpusRecord(qid, text)


def load_triples(path) -> Iterator[tuple[str, str, str]]:
    """Stream (qid, positive doc_id, negative doc_id) training triples."""
    yield from _read_tsv(path, 3)
