"""Model registry with lazy loading and per-model forward-pass locks.

Known real encoders are loaded on first use from their published
checkpoints; any model whose name starts with ``mock`` is a deterministic
offline encoder that needs no weights or network, which is what the test
suite and local development use.  Each entry's dim is fixed for the
process lifetime once the model has produced its first vector.
"""

from __future__ import annotations

import hashlib
import io
import os
import threading
from dataclasses import dataclass, field

import numpy as np

ENV_MODELS = "VLCAP_SIDECAR_MODELS"
ENV_PORT = "VLCAP_SIDECAR_PORT"
DEFAULT_MODELS = "mock"
DEFAULT_PORT = 8901
MAX_BATCH = 64

# Checkpoints for the real encoders; the registry records whichever
# revision the installed weights resolve to.
REAL_CHECKPOINTS = {
    "mclip": "M-CLIP/XLM-Roberta-Large-Vit-B-32",
    "araclip": "Arabic-Clip/araclip",
    "jina_v4": "jinaai/jina-embeddings-v4",
}


class UnknownModelError(KeyError):
    def __init__(self, name: str, known: list[str]):
        super().__init__(name)
        self.name = name
        self.known = known


class ImageDecodeError(ValueError):
    pass


class BatchTooLargeError(ValueError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"batch of {size} texts exceeds cap of {cap}")
        self.size = size
        self.cap = cap


def _unit(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("encoder produced a zero vector")
    out = (vec / norm).astype(np.float32)
    # Server-side invariant: every vector leaves here unit-normalized.
    assert abs(float(np.linalg.norm(out.astype(np.float64))) - 1.0) < 1e-4
    return out


class MockEncoder:
    """Deterministic stand-in encoder: the vector is a seeded draw from a
    hash of (model name, payload), so identical inputs always produce
    identical vectors and no weights are required."""

    def __init__(self, name: str, dim: int = 32):
        self.name = name
        self.dim = dim

    def _vector(self, payload: bytes) -> np.ndarray:
        digest = hashlib.sha256(self.name.encode("utf-8") + b"\x00" + payload).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        return _unit(rng.standard_normal(self.dim))

    def encode_texts(self, texts: list[str]) -> list[np.ndarray]:
        return [self._vector(t.encode("utf-8")) for t in texts]

    def encode_image(self, image_bytes: bytes) -> np.ndarray:
        return self._vector(image_bytes)


class SentenceTransformerEncoder:
    """Adapter for real encoders via sentence-transformers; imported and
    loaded lazily so the sidecar starts instantly and mock-only
    deployments never touch the ML stack."""

    def __init__(self, checkpoint: str):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(checkpoint)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode_texts(self, texts: list[str]) -> list[np.ndarray]:
        matrix = self._model.encode(texts, convert_to_numpy=True)
        return [_unit(row) for row in matrix]

    def encode_image(self, image_bytes: bytes) -> np.ndarray:
        from PIL import Image

        image = Image.open(io.BytesIO(image_bytes)).convert("RGB")
        return _unit(self._model.encode([image], convert_to_numpy=True)[0])


@dataclass
class ModelRegistryEntry:
    name: str
    supports_text: bool = True
    supports_image: bool = True
    dim: int | None = None  # fixed once the first vector is produced
    _encoder: object | None = None
    # serializes each model's forward pass to bound memory
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def _load(self):
        if self._encoder is None:
            if self.name.startswith("mock"):
                self._encoder = MockEncoder(self.name)
            elif self.name in REAL_CHECKPOINTS:
                self._encoder = SentenceTransformerEncoder(REAL_CHECKPOINTS[self.name])
            else:  # registry construction should have rejected this
                raise UnknownModelError(self.name, sorted(REAL_CHECKPOINTS))
            self.dim = self._encoder.dim
        return self._encoder

    def _check_dim(self, vectors: list[np.ndarray]) -> list[np.ndarray]:
        for vec in vectors:
            assert vec.shape == (self.dim,), "encoder dim changed mid-process"
        return vectors

    def embed_texts(self, texts: list[str]) -> list[np.ndarray]:
        with self._lock:
            encoder = self._load()
            return self._check_dim(encoder.encode_texts(texts))

    def embed_image(self, image_bytes: bytes) -> np.ndarray:
        with self._lock:
            encoder = self._load()
            return self._check_dim([encoder.encode_image(image_bytes)])[0]


class ModelRegistry:
    def __init__(self, names: list[str], max_batch: int = MAX_BATCH):
        if not names:
            raise ValueError("at least one model must be configured")
        self.max_batch = max_batch
        self._entries: dict[str, ModelRegistryEntry] = {}
        for name in names:
            if not (name.startswith("mock") or name in REAL_CHECKPOINTS):
                raise ValueError(
                    f"unknown model {name!r}; known: {sorted(REAL_CHECKPOINTS)} or mock*"
                )
            self._entries.setdefault(name, ModelRegistryEntry(name))

    @property
    def names(self) -> list[str]:
        return list(self._entries)

    def get(self, name: str) -> ModelRegistryEntry:
        try:
            return self._entries[name]
        except KeyError:
            raise UnknownModelError(name, self.names) from None


def registry_from_env() -> ModelRegistry:
    raw = os.environ.get(ENV_MODELS, DEFAULT_MODELS)
    names = [n.strip() for n in raw.split(",") if n.strip()]
    return ModelRegistry(names)


def port_from_env() -> int:
    return int(os.environ.get(ENV_PORT, DEFAULT_PORT))


def decode_image(image_b64_bytes: bytes) -> bytes:
    """Validate that the bytes decode to an actual image; returns them
    unchanged so the encoder sees the original payload."""
    from PIL import Image

    try:
        with Image.open(io.BytesIO(image_b64_bytes)) as img:
            img.verify()
    except Exception as exc:
        raise ImageDecodeError(f"payload is not a decodable image: {exc}") from exc
    return image_b64_bytes
