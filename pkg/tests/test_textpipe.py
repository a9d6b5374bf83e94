import pytest

from lsr.errors import DataError
from lsr.textpipe import (
    CorpusRecord,
    Vocabulary,
    build_vocab,
    load_corpus,
    load_queries,
    load_triples,
    tokenize,
)


def recs(*texts):
    return [CorpusRecord(f"d{i}", t) for i, t in enumerate(texts)]


class TestBuildVocab:
    def test_frequency_and_tie_break(self):
        vocab = build_vocab(recs("a a b", "b c"), max_size=3, min_freq=1)
        # a:2, b:2, c:1; a before b lexicographically at equal frequency
        assert vocab.terms == ["[UNK]", "a", "b"]

    def test_min_freq_filters_everything(self):
        vocab = build_vocab(recs("x"), max_size=10, min_freq=2)
        assert vocab.terms == ["[UNK]"]

    def test_empty_corpus(self):
        with pytest.raises(DataError, match="empty corpus"):
            build_vocab([], max_size=10)

    def test_deterministic_serialization(self, tmp_path):
        corpus = recs("the quick brown fox", "jumps over the lazy dog", "the end")
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        build_vocab(corpus, max_size=512).save(a)
        build_vocab(corpus, max_size=512).save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_vocab_roundtrip(self, tmp_path):
        vocab = build_vocab(recs("alpha beta gamma alpha"), max_size=16)
        path = tmp_path / "v.txt"
        vocab.save(path)
        assert Vocabulary.load(path) == vocab


class TestTokenize:
    @pytest.fixture
    def vocab(self):
        return Vocabulary(["[UNK]", "bow", "legs"])

    def test_basic(self, vocab):
        seq = tokenize("Bow Legs!", vocab)
        assert seq.ids == (1, 2)

    def test_oov_maps_to_unk(self, vocab):
        assert tokenize("zzz", vocab).ids == (0,)

    def test_truncation_to_max_len(self, vocab):
        text = " ".join(["bow"] * 300)
        assert len(tokenize(text, vocab, max_len=256)) == 256

    def test_no_alphanumeric_is_error(self, vocab):
        with pytest.raises(DataError, match="empty token sequence"):
            tokenize("!!! ...", vocab)

    def test_idempotent_on_own_output(self):
        corpus = recs("alpha beta gamma delta epsilon")
        vocab = build_vocab(corpus, max_size=8)
        seq = tokenize("Alpha, BETA gamma?? delta", vocab)
        rejoined = " ".join(vocab.term_of(i) for i in seq.ids if i != 0)
        assert tokenize(rejoined, vocab).ids == seq.ids

    def test_all_ids_below_vocab_size(self, vocab):
        seq = tokenize("bow wow legs unknown words here", vocab)
        assert all(i < len(vocab) for i in seq.ids)


class TestLoaders:
    def test_corpus_roundtrip(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("d1\thello world\n", encoding="utf-8")
        assert list(load_corpus(p)) == [CorpusRecord("d1", "hello world")]

    def test_wrong_column_count_names_line(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("d1\ta\tb\n", encoding="utf-8")
        with pytest.raises(DataError, match=r":1:"):
            list(load_corpus(p))

    def test_duplicate_doc_id(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("d1\ta\nd1\tb\n", encoding="utf-8")
        with pytest.raises(DataError, match="duplicate doc_id"):
            list(load_corpus(p))

    def test_triples(self, tmp_path):
        p = tmp_path / "t.tsv"
        p.write_text("q1\td5\td9\n", encoding="utf-8")
        assert list(load_triples(p)) == [("q1", "d5", "d9")]

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="missing file"):
            list(load_queries(tmp_path / "nope.tsv"))
