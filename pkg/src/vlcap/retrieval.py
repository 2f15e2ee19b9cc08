"""Stage-1 label retrieval: exact top-k cosine ranking over the vocabulary.

The index stores unit label vectors row-aligned with their labels, so cosine
similarity is a single matrix-vector product.  Search is exhaustive and
exact; ties break by vocabulary insertion order, which keeps runs
reproducible across platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import (
    EmbeddingVector,
    EncoderId,
    load_embedding_file,
    save_embedding_file,
)
from .errors import ValidationError
from .vocab import Vocabulary

DEFAULT_K = 30  # upper end of the typical 25-30 labels fed to the prompt


@dataclass(frozen=True)
class RetrievalResult:
    label: str
    score: float
    rank: int  # 1-based


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = DEFAULT_K


class LabelIndex:
    """Immutable (labels, unit-vector matrix) pair for one encoder."""

    def __init__(self, encoder: EncoderId, labels: list[str], matrix: np.ndarray):
        if len(labels) == 0 or matrix.shape != (len(labels), encoder.dim):
            raise ValidationError(
                f"index shape {matrix.shape} does not match {len(labels)} labels x dim {encoder.dim}"
            )
        if len(set(labels)) != len(labels):
            raise ValidationError("index labels must be unique")
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-4):
            raise ValidationError("index rows must be unit-norm")
        self.encoder = encoder
        self.labels = list(labels)
        self.matrix = matrix.astype(np.float32)
        self.matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)


def build_index(vocab: Vocabulary, provider, batch_size: int = 64) -> LabelIndex:
    """Embed every vocabulary label (in vocabulary order) into an index."""
    labels = vocab.labels
    if not labels:
        raise ValidationError("cannot build an index from an empty vocabulary")
    if len(set(labels)) != len(labels):
        raise ValidationError("vocabulary contains duplicate labels")
    vectors: list[EmbeddingVector] = []
    for start in range(0, len(labels), batch_size):
        vectors.extend(provider.embed_texts(labels[start : start + batch_size]))
    matrix = np.stack([v.values for v in vectors])
    return LabelIndex(provider.encoder, labels, matrix)


def save_index(index: LabelIndex, path: str | Path) -> None:
    vectors = [EmbeddingVector(index.encoder, row) for row in index.matrix]
    save_embedding_file(path, index.labels, vectors)


def load_index(path: str | Path) -> LabelIndex:
    encoder, labels, vectors = load_embedding_file(path)
    return LabelIndex(encoder, labels, np.stack([v.values for v in vectors]))


def retrieve_top_k(
    index: LabelIndex, image_vec: EmbeddingVector, config: RetrievalConfig
) -> list[RetrievalResult]:
    """Rank all labels by cosine similarity to the image and keep the top k.

    Scores accumulate in float64 over the float32 stored components; ties
    break by index insertion order.
    """
    if image_vec.encoder != index.encoder:
        raise ValidationError(
            f"encoder mismatch: query {image_vec.encoder} vs index {index.encoder}"
        )
    k = config.k
    if not 1 <= k <= len(index):
        raise ValidationError(f"k={k} out of bounds for index of {len(index)} labels")
    scores = index.matrix.astype(np.float64) @ image_vec.values.astype(np.float64)
    # Stable sort on (-score, insertion order): lexsort's last key is primary.
    order = np.lexsort((np.arange(len(scores)), -scores))[:k]
    return [
        RetrievalResult(index.labels[i], float(scores[i]), rank)
        for rank, i in enumerate(order, start=1)
    ]


def batch_retrieve(
    index: LabelIndex,
    images: list[tuple[str, EmbeddingVector]],
    config: RetrievalConfig,
) -> dict[str, list[RetrievalResult]]:
    """Retrieve for many images; output is keyed (and ordered) by image_id."""
    out: dict[str, list[RetrievalResult]] = {}
    for image_id, vec in sorted(images, key=lambda iv: iv[0]):
        try:
            out[image_id] = retrieve_top_k(index, vec, config)
        except ValidationError as exc:
            raise ValidationError(f"retrieval failed for image {image_id!r}: {exc}") from exc
    return out


def write_retrieval_jsonl(
    results: dict[str, list[RetrievalResult]],
    encoder: EncoderId,
    k: int,
    path: str | Path,
) -> None:
    """One JSON object per image: image_id, encoder, k, ranked labels."""
    with open(path, "w", encoding="utf-8") as f:
        for image_id, ranked in results.items():
            obj = {
                "image_id": image_id,
                "encoder": encoder.name,
                "k": k,
                "labels": [
                    {"label": r.label, "score": r.score, "rank": r.rank} for r in ranked
                ],
            }
            f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def read_retrieval_jsonl(path: str | Path) -> dict[str, list[RetrievalResult]]:
    out: dict[str, list[RetrievalResult]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out[obj["image_id"]] = [
            RetrievalResult(d["label"], d["score"], d["rank"]) for d in obj["labels"]
        ]
    return out
