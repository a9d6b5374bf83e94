import numpy as np
import pytest

from lsr.errors import DataError
from lsr.index import (
    build_index,
    flops_metric,
    posting_stats,
    read_index,
    write_index,
)
from lsr.reps import SparseRep, read_reps, write_reps


def rep(vocab_size, entries):
    ids = np.array(sorted(entries), dtype=np.uint32)
    weights = np.array([entries[i] for i in sorted(entries)], dtype=np.float64)
    return SparseRep(vocab_size, ids, weights)


def random_reps(rng, n, vocab_size, density=0.05):
    out = []
    for i in range(n):
        dense = np.where(
            rng.random(vocab_size) < density, rng.random(vocab_size) + 0.01, 0.0
        )
        out.append((f"d{i:04d}", SparseRep.from_dense(dense)))
    return out


class TestBuildIndex:
    def test_single_doc(self):
        idx = build_index([("d1", rep(8, {3: 1.5}))])
        pl = idx.posting(3)
        assert idx.doc_count == 1 and len(pl) == 1
        assert pl.ordinals[0] == 0 and pl.weights[0] == np.float32(1.5)

    def test_empty_rep_doc_in_table_no_postings(self):
        idx = build_index(
            [("d1", rep(8, {2: 1.0})), ("d2", SparseRep.from_dense(np.zeros(8)))]
        )
        assert idx.doc_ids == ["d1", "d2"]
        assert idx.doc_support[1] == 0
        assert sum(len(pl) for pl in idx.postings.values()) == 1

    def test_duplicate_doc_id(self):
        with pytest.raises(DataError, match="duplicate"):
            build_index([("d1", rep(8, {1: 1.0})), ("d1", rep(8, {2: 1.0}))])

    def test_posting_count_equals_support_sum(self):
        rng = np.random.default_rng(0)
        reps = random_reps(rng, 1000, 64)
        idx = build_index(reps)
        assert sum(len(pl) for pl in idx.postings.values()) == int(
            idx.doc_support.sum()
        )
        assert idx.doc_support.sum() == sum(r.support_size for _, r in reps)

    def test_build_is_deterministic_on_disk(self, tmp_path):
        rng = np.random.default_rng(1)
        reps = random_reps(rng, 50, 32)
        a, b = tmp_path / "a.spl", tmp_path / "b.spl"
        write_index(build_index(reps), a)
        write_index(build_index(reps), b)
        assert a.read_bytes() == b.read_bytes()


class TestIndexIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        idx = build_index(random_reps(rng, 3, 16))
        path = tmp_path / "i.spl"
        write_index(idx, path)
        assert read_index(path).structurally_equal(idx)

    def test_utf8_doc_ids_roundtrip(self, tmp_path):
        idx = build_index([("héllo-⊕", rep(8, {1: 1.0}))])
        path = tmp_path / "i.spl"
        write_index(idx, path)
        assert read_index(path).doc_ids == ["héllo-⊕"]

    def test_corruption_detected(self, tmp_path):
        rng = np.random.default_rng(3)
        idx = build_index(random_reps(rng, 10, 16))
        path = tmp_path / "i.spl"
        write_index(idx, path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF  # flip one byte in the postings region
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="checksum"):
            read_index(path)

    def test_empty_index_roundtrip(self, tmp_path):
        idx = build_index([], vocab_size=16)
        path = tmp_path / "i.spl"
        write_index(idx, path)
        loaded = read_index(path)
        assert loaded.doc_count == 0 and loaded.postings == {}

    def test_truncated_file(self, tmp_path):
        rng = np.random.default_rng(4)
        idx = build_index(random_reps(rng, 10, 16))
        path = tmp_path / "i.spl"
        write_index(idx, path)
        path.write_bytes(path.read_bytes()[:30])
        with pytest.raises(DataError):
            read_index(path)


class TestFlopsMetric:
    def test_all_active(self):
        queries = [rep(4, {0: 1, 1: 1, 2: 1, 3: 1})] * 2
        docs = [rep(4, {0: 1, 1: 1, 2: 1, 3: 1})] * 3
        assert flops_metric(queries, docs) == pytest.approx(4.0)

    def test_disjoint(self):
        assert flops_metric([rep(4, {0: 1.0})], [rep(4, {3: 1.0})]) == 0.0

    def test_arithmetic(self):
        queries = [rep(4, {1: 1.0}), rep(4, {1: 1.0, 2: 1.0})]
        docs = [rep(4, {1: 1.0}), rep(4, {2: 1.0})]
        assert flops_metric(queries, docs) == pytest.approx(0.75)

    def test_index_equals_raw_reps(self):
        rng = np.random.default_rng(5)
        doc_reps = random_reps(rng, 200, 32)
        queries = [r for _, r in random_reps(rng, 20, 32, density=0.1)]
        idx = build_index(doc_reps)
        assert flops_metric(queries, idx) == flops_metric(
            queries, [r for _, r in doc_reps]
        )

    def test_empty_sample_rejected(self):
        with pytest.raises(DataError):
            flops_metric([], [rep(4, {1: 1.0})])


class TestPostingStats:
    def test_uniform_lengths(self):
        idx = build_index([("a", rep(8, {1: 1.0, 2: 1.0})), ("b", rep(8, {1: 1.0, 2: 1.0}))])
        stats = posting_stats(idx)
        assert stats.gini == 0.0 and stats.variance == 0.0

    def test_closed_form(self):
        idx = build_index(
            [
                ("a", rep(8, {1: 1.0, 2: 1.0})),
                ("b", rep(8, {2: 1.0})),
                ("c", rep(8, {2: 1.0})),
            ]
        )
        stats = posting_stats(idx)  # lengths [1, 3]
        assert stats.mean == 2.0
        assert stats.variance == 1.0
        assert stats.gini == pytest.approx(0.25)


class TestRepsIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        items = random_reps(rng, 5, 32)
        # weights survive as f32
        items = [(i, SparseRep(32, r.ids, r.weights.astype(np.float32).astype(np.float64)))
                 for i, r in items]
        path = tmp_path / "r.bin"
        write_reps(path, 32, items)
        vocab_size, loaded = read_reps(path)
        assert vocab_size == 32
        for (i1, r1), (i2, r2) in zip(items, loaded):
            assert i1 == i2
            assert np.array_equal(r1.ids, r2.ids)
            assert np.array_equal(r1.weights, r2.weights)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "r.bin"
        path.write_bytes(b"XXXX" + b"\0" * 16)
        with pytest.raises(DataError, match="magic"):
            read_reps(path)
