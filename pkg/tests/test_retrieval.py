import numpy as np
import pytest

from oracles import oracle_top_k
from vlcap.embeddings import EmbeddingVector, EncoderId, MockProvider, normalize
from vlcap.errors import ValidationError
from vlcap.retrieval import (
    LabelIndex,
    RetrievalConfig,
    batch_retrieve,
    build_index,
    load_index,
    read_retrieval_jsonl,
    retrieve_top_k,
    save_index,
    write_retrieval_jsonl,
)
from vlcap.vocab import TokenStats, build_vocabulary


def _random_index(n, dim, seed=0, name="mock"):
    rng = np.random.default_rng(seed)
    enc = EncoderId(name, dim)
    matrix = rng.standard_normal((n, dim))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    labels = [f"l{i}" for i in range(n)]
    return LabelIndex(enc, labels, matrix.astype(np.float32))


def _query(index, seed=1):
    rng = np.random.default_rng(seed)
    return EmbeddingVector(
        index.encoder, normalize(rng.standard_normal(index.encoder.dim)).astype(np.float32)
    )


def test_build_index_from_mock(external_labels_file):
    from vlcap.vocab import load_external_labels

    vocab = build_vocabulary([], load_external_labels(external_labels_file))
    provider = MockProvider(dim=16)
    index = build_index(vocab, provider)
    assert index.labels == vocab.labels
    expected = MockProvider(dim=16).embed_texts(vocab.labels)
    assert np.array_equal(index.matrix, np.stack([v.values for v in expected]))


def test_build_index_empty_vocab_errors():
    vocab = build_vocabulary([TokenStats("كلب", 2)], [])
    vocab.entries = []
    with pytest.raises(ValidationError):
        build_index(vocab, MockProvider(dim=8))


def test_self_similarity_rank_1():
    index = _random_index(50, 16)
    row = 17
    query = EmbeddingVector(index.encoder, index.matrix[row].copy())
    [top] = retrieve_top_k(index, query, RetrievalConfig(1))
    assert top.label == index.labels[row]
    assert abs(top.score - 1.0) < 1e-6
    assert top.rank == 1


def test_orthogonal_rows():
    enc = EncoderId("mock", 2)
    index = LabelIndex(enc, ["x", "y"], np.eye(2, dtype=np.float32))
    query = EmbeddingVector(enc, np.array([1.0, 0.0], dtype=np.float32))
    results = retrieve_top_k(index, query, RetrievalConfig(2))
    assert [(r.label, round(r.score, 9), r.rank) for r in results] == [("x", 1.0, 1), ("y", 0.0, 2)]


def test_encoder_mismatch_errors():
    index = _random_index(5, 8)
    other = EmbeddingVector(EncoderId("other", 8), index.matrix[0].copy())
    with pytest.raises(ValidationError, match="mismatch"):
        retrieve_top_k(index, other, RetrievalConfig(1))


def test_k_out_of_bounds():
    index = _random_index(5, 8)
    for bad_k in (0, 6):
        with pytest.raises(ValidationError):
            retrieve_top_k(index, _query(index), RetrievalConfig(bad_k))


def test_matches_full_sort_oracle_with_ties():
    # duplicated rows force exact ties; insertion order must break them
    rng = np.random.default_rng(5)
    base = rng.standard_normal((100, 16))
    base[50:] = base[:50]  # every row duplicated once
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    enc = EncoderId("mock", 16)
    index = LabelIndex(enc, [f"l{i}" for i in range(100)], base.astype(np.float32))
    query = _query(index, seed=6)
    for k in (1, 5, 30, 100):
        got = retrieve_top_k(index, query, RetrievalConfig(k))
        expected = oracle_top_k(
            [row.astype(np.float64) for row in index.matrix],
            query.values.astype(np.float64),
            k,
        )
        assert [index.labels.index(r.label) for r in got] == [i for i, _ in expected]


def test_exactness_1000_random_vectors():
    index = _random_index(1000, 64, seed=11)
    for seed in range(5):
        query = _query(index, seed=seed + 100)
        for k in (1, 5, 30):
            got = retrieve_top_k(index, query, RetrievalConfig(k))
            expected = oracle_top_k(
                [row.astype(np.float64) for row in index.matrix],
                query.values.astype(np.float64),
                k,
            )
            assert [r.label for r in got] == [index.labels[i] for i, _ in expected]
            for r, (_, score) in zip(got, expected):
                assert abs(r.score - score) < 1e-9
                assert -1 - 1e-6 <= r.score <= 1 + 1e-6


def test_rank_invariance_under_query_scaling():
    index = _random_index(200, 32, seed=2)
    rng = np.random.default_rng(3)
    raw = rng.standard_normal(32)
    for c in (1e-3, 1.0, 7.5, 1e4):
        q = EmbeddingVector(index.encoder, normalize(c * raw).astype(np.float32))
        base = retrieve_top_k(index, EmbeddingVector(index.encoder, normalize(raw).astype(np.float32)), RetrievalConfig(20))
        scaled = retrieve_top_k(index, q, RetrievalConfig(20))
        assert [(r.label, r.rank) for r in base] == [(r.label, r.rank) for r in scaled]


def test_prefix_property_and_monotone_scores():
    index = _random_index(300, 32, seed=8)
    rng = np.random.default_rng(9)
    for case in range(100):
        query = _query(index, seed=1000 + case)
        k1 = int(rng.integers(1, 100))
        k2 = int(rng.integers(k1, 300)) + 1
        r1 = retrieve_top_k(index, query, RetrievalConfig(k1))
        r2 = retrieve_top_k(index, query, RetrievalConfig(k2))
        assert [(r.label, r.rank) for r in r2[:k1]] == [(r.label, r.rank) for r in r1]
        scores = [r.score for r in r2]
        assert all(a >= b for a, b in zip(scores, scores[1:]))
        assert [r.rank for r in r2] == list(range(1, k2 + 1))


def test_batch_matches_single_calls():
    index = _random_index(50, 16, seed=4)
    images = [("b", _query(index, 2)), ("a", _query(index, 3))]
    batch = batch_retrieve(index, images, RetrievalConfig(5))
    assert list(batch.keys()) == ["a", "b"]  # keyed by image_id
    for image_id, vec in images:
        assert batch[image_id] == retrieve_top_k(index, vec, RetrievalConfig(5))


def test_batch_empty():
    index = _random_index(5, 8)
    assert batch_retrieve(index, [], RetrievalConfig(2)) == {}


def test_jsonl_roundtrip_and_determinism(tmp_path):
    index = _random_index(50, 16, seed=4)
    images = [(f"img{i}", _query(index, 50 + i)) for i in range(10)]
    results = batch_retrieve(index, images, RetrievalConfig(5))
    p1, p2 = tmp_path / "r1.jsonl", tmp_path / "r2.jsonl"
    write_retrieval_jsonl(results, index.encoder, 5, p1)
    write_retrieval_jsonl(batch_retrieve(index, images, RetrievalConfig(5)), index.encoder, 5, p2)
    assert p1.read_bytes() == p2.read_bytes()
    loaded = read_retrieval_jsonl(p1)
    assert loaded == results


def test_index_file_roundtrip(tmp_path):
    index = _random_index(20, 8, seed=12)
    path = tmp_path / "index.vlem"
    save_index(index, path)
    loaded = load_index(path)
    assert loaded.labels == index.labels
    assert np.array_equal(loaded.matrix, index.matrix)
    assert loaded.encoder == index.encoder
