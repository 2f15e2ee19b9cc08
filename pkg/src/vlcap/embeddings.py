"""Uniform access to text and image embeddings.

Providers hide where vectors come from (a remote encoder service or the
deterministic offline mock); this module owns unit normalization, the
on-disk cache, and the binary embedding file format.

Embedding file layout (little-endian):
    magic "VLEM" | u16 version | u16 name_len + encoder name (UTF-8)
    | u32 dim | u64 count
    | per record: u32 label_len + label (UTF-8) + dim float32
    | u32 CRC32 over all preceding bytes
"""

from __future__ import annotations

import hashlib
import os
import random
import struct
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import EmbeddingFileError, ProviderError, ValidationError

MAGIC = b"VLEM"
FORMAT_VERSION = 1

ENV_EMBED_URL = "VLCAP_EMBED_URL"
ENV_CACHE_DIR = "VLCAP_CACHE_DIR"

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 0.5
RETRY_FACTOR = 2.0


def normalize(values) -> np.ndarray:
    """Scale a vector to unit Euclidean norm (float64)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError("normalize expects a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot normalize a vector with non-finite components")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValidationError("cannot normalize the zero vector")
    return v / norm


@dataclass(frozen=True)
class EncoderId:
    name: str
    dim: int

    def __post_init__(self):
        if self.dim <= 0:
            raise ValidationError(f"encoder {self.name!r} has non-positive dim {self.dim}")


@dataclass(frozen=True)
class EmbeddingVector:
    encoder: EncoderId
    values: np.ndarray  # float32, unit norm

    def __post_init__(self):
        v = self.values
        if v.shape != (self.encoder.dim,):
            raise ValidationError(
                f"vector length {v.shape} does not match encoder dim {self.encoder.dim}"
            )
        if not np.all(np.isfinite(v)):
            raise ValidationError("embedding vector has non-finite components")
        norm = float(np.linalg.norm(v.astype(np.float64)))
        if abs(norm - 1.0) > 1e-4:
            raise ValidationError(f"embedding vector norm {norm} is not within 1e-4 of 1")


def _as_embedding(encoder: EncoderId, values) -> EmbeddingVector:
    return EmbeddingVector(encoder, normalize(values).astype(np.float32))


class MockProvider:
    """Deterministic offline provider: digest of the input seeds a PRNG that
    fills the vector.  Identical input always gives the identical vector."""

    def __init__(self, name: str = "mock", dim: int = 64):
        self.encoder = EncoderId(name, dim)
        self.calls = 0

    def _vector(self, payload: bytes) -> EmbeddingVector:
        digest = hashlib.sha256(self.encoder.name.encode() + b"\x00" + payload).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return _as_embedding(self.encoder, rng.standard_normal(self.encoder.dim))

    def embed_texts(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValidationError("embed_texts called with an empty batch")
        self.calls += 1
        return [self._vector(b"text:" + t.encode("utf-8")) for t in texts]

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector:
        if not image_bytes:
            raise ValidationError("embed_image called with empty bytes")
        self.calls += 1
        return self._vector(b"image:" + image_bytes)


def _retrying_post(url: str, payload: dict, timeout: float) -> dict:
    delay = RETRY_BASE_DELAY
    last_status = None
    for attempt in range(1, RETRY_ATTEMPTS + 1):
        try:
            resp = requests.post(url, json=payload, timeout=timeout)
            last_status = resp.status_code
            if resp.status_code == 200:
                return resp.json()
        except requests.RequestException:
            pass
        if attempt < RETRY_ATTEMPTS:
            time.sleep(delay * (1 + 0.1 * random.random()))
            delay *= RETRY_FACTOR
    raise ProviderError(
        f"POST {url} failed after {RETRY_ATTEMPTS} attempts (last status {last_status})",
        status=last_status,
        attempts=RETRY_ATTEMPTS,
    )


class RemoteProvider:
    """Client for the HTTP embedding service (see the sidecar package).

    The server normalizes vectors; the client re-verifies norm and dim.
    """

    def __init__(self, model: str, base_url: str | None = None, timeout: float = 30.0):
        base_url = base_url or os.environ.get(ENV_EMBED_URL)
        if not base_url:
            raise ValidationError(f"no embedding service URL (set {ENV_EMBED_URL})")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout
        self.calls = 0
        self._encoder: EncoderId | None = None

    @property
    def encoder(self) -> EncoderId:
        if self._encoder is None:
            # Dim is discovered from the service, never assumed.
            probe = self.embed_texts(["."])
            self._encoder = probe[0].encoder
        return self._encoder

    def _wrap(self, dim: int, vector) -> EmbeddingVector:
        enc = self._encoder or EncoderId(self.model, dim)
        if self._encoder is None:
            self._encoder = enc
        if enc.dim != dim:
            raise ProviderError(f"service dim {dim} does not match encoder dim {enc.dim}")
        return _as_embedding(enc, np.asarray(vector, dtype=np.float64))

    def embed_texts(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValidationError("embed_texts called with an empty batch")
        self.calls += 1
        body = _retrying_post(
            f"{self.base_url}/v1/embed/text",
            {"model": self.model, "texts": list(texts)},
            self.timeout,
        )
        vectors = body["vectors"]
        if len(vectors) != len(texts):
            raise ProviderError(f"service returned {len(vectors)} vectors for {len(texts)} texts")
        return [self._wrap(int(body["dim"]), v) for v in vectors]

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector:
        if not image_bytes:
            raise ValidationError("embed_image called with empty bytes")
        import base64

        self.calls += 1
        body = _retrying_post(
            f"{self.base_url}/v1/embed/image",
            {"model": self.model, "image_b64": base64.b64encode(image_bytes).decode("ascii")},
            self.timeout,
        )
        return self._wrap(int(body["dim"]), body["vector"])


class CachingProvider:
    """Content-addressed on-disk cache in front of any provider.

    Key = (encoder name, SHA-256 of the text or image bytes).  Values are
    deterministic per key, so concurrent last-writer-wins is harmless.
    """

    def __init__(self, inner, cache_dir: str | Path | None = None):
        self.inner = inner
        cache_dir = cache_dir or os.environ.get(ENV_CACHE_DIR)
        if cache_dir is None:
            raise ValidationError(f"no cache directory (set {ENV_CACHE_DIR} or pass cache_dir)")
        self.cache_dir = Path(cache_dir)
        self.hits = 0
        self.misses = 0

    @property
    def encoder(self) -> EncoderId:
        return self.inner.encoder

    @property
    def calls(self) -> int:
        return self.inner.calls

    def _path(self, kind: str, payload: bytes) -> Path:
        digest = hashlib.sha256(payload).hexdigest()
        return self.cache_dir / self.encoder.name / f"{kind}_{digest}.npy"

    def _load(self, path: Path) -> EmbeddingVector | None:
        if not path.exists():
            return None
        values = np.load(path)
        return EmbeddingVector(self.encoder, values.astype(np.float32))

    def _store(self, path: Path, vec: EmbeddingVector) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp.npy")
        np.save(tmp, vec.values)
        os.replace(tmp, path)

    def embed_texts(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValidationError("embed_texts called with an empty batch")
        out: list[EmbeddingVector | None] = []
        missing: list[int] = []
        for i, t in enumerate(texts):
            cached = self._load(self._path("t", t.encode("utf-8")))
            if cached is None:
                missing.append(i)
                out.append(None)
            else:
                self.hits += 1
                out.append(cached)
        if missing:
            self.misses += len(missing)
            fresh = self.inner.embed_texts([texts[i] for i in missing])
            for i, vec in zip(missing, fresh):
                self._store(self._path("t", texts[i].encode("utf-8")), vec)
                out[i] = vec
        return out  # type: ignore[return-value]

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector:
        if not image_bytes:
            raise ValidationError("embed_image called with empty bytes")
        path = self._path("i", image_bytes)
        cached = self._load(path)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        vec = self.inner.embed_image(image_bytes)
        self._store(path, vec)
        return vec


def save_embedding_file(
    path: str | Path, labels: list[str], vectors: list[EmbeddingVector]
) -> None:
    """Persist aligned (label, vector) pairs in the checksummed binary format."""
    if len(labels) != len(vectors):
        raise ValidationError(f"{len(labels)} labels but {len(vectors)} vectors")
    if not vectors:
        raise ValidationError("refusing to save an empty embedding file")
    encoder = vectors[0].encoder
    for v in vectors:
        if v.encoder != encoder:
            raise ValidationError("all vectors in one file must share an encoder")
    name_bytes = encoder.name.encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<H", FORMAT_VERSION),
        struct.pack("<H", len(name_bytes)),
        name_bytes,
        struct.pack("<I", encoder.dim),
        struct.pack("<Q", len(labels)),
    ]
    for label, vec in zip(labels, vectors):
        lb = label.encode("utf-8")
        parts.append(struct.pack("<I", len(lb)))
        parts.append(lb)
        parts.append(vec.values.astype("<f4").tobytes())
    payload = b"".join(parts)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(payload + struct.pack("<I", crc))


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise EmbeddingFileError(f"{self.path}: truncated (needed {n} bytes at offset {self.pos})")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def load_embedding_file(path: str | Path) -> tuple[EncoderId, list[str], list[EmbeddingVector]]:
    """Load an embedding file, verifying structure and checksum."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise EmbeddingFileError(f"{path}: file too small to be an embedding file")
    payload, crc_bytes = raw[:-4], raw[-4:]
    if zlib.crc32(payload) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise EmbeddingFileError(f"{path}: checksum mismatch")
    r = _Reader(payload, str(path))
    if r.take(4) != MAGIC:
        raise EmbeddingFileError(f"{path}: bad magic")
    version = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise EmbeddingFileError(f"{path}: unsupported format version {version}")
    name = r.take(r.unpack("<H")).decode("utf-8")
    dim = r.unpack("<I")
    count = r.unpack("<Q")
    encoder = EncoderId(name, dim)
    labels: list[str] = []
    vectors: list[EmbeddingVector] = []
    vec_bytes = 4 * dim
    for _ in range(count):
        labels.append(r.take(r.unpack("<I")).decode("utf-8"))
        values = np.frombuffer(r.take(vec_bytes), dtype="<f4").copy()
        vectors.append(EmbeddingVector(encoder, values))
    if r.pos != len(payload):
        raise EmbeddingFileError(f"{path}: {len(payload) - r.pos} trailing bytes after {count} records")
    return encoder, labels, vectors
