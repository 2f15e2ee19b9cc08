"""Stage-2 caption generation against hosted vision-language models.

One internal request shape (single user turn: one base64 image part + one
text part) is mapped onto each vendor's schema by a thin adapter.  Responses
are cached on disk so evaluation reruns never re-bill the APIs, and a token
bucket keeps the request rate under the configured limit.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import EmptyGenerationError, ProviderError, ValidationError
from .prompts import Prompt

GEMINI_KEY_ENV = "VLCAP_GEMINI_KEY"
QWEN_KEY_ENV = "VLCAP_QWEN_KEY"

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 0.5

_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n?|\n?```$")
_QUOTES = "\"'“”«»"


@dataclass(frozen=True)
class VlmConfig:
    provider: str  # gemini_pro_vision | qwen_vl | mock
    endpoint: str = ""
    model_name: str = ""
    api_key_ref: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 128
    request_timeout: float = 60.0
    rate_limit: int = 60  # requests per minute
    concurrency: int = 4

    def __post_init__(self):
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.provider not in ("gemini_pro_vision", "qwen_vl", "mock"):
            raise ValidationError(f"unknown VLM provider {self.provider!r}")


@dataclass(frozen=True)
class CaptionRecord:
    image_id: str
    caption: str
    config_id: str
    prompt_digest: str
    latency: float
    raw_response_digest: str
    cache_hit: bool = False


def post_process(raw: str) -> str:
    """Clean model output: strip fences and surrounding quotes, collapse
    whitespace runs to single spaces, trim.  Arabic text is otherwise kept
    byte-for-byte."""
    s = raw.strip()
    s = _FENCE_RE.sub("", s).strip()
    while len(s) >= 2 and s[0] in _QUOTES and s[-1] in _QUOTES:
        s = s[1:-1].strip()
    s = re.sub(r"\s+", " ", s).strip()
    if not s:
        raise EmptyGenerationError("model output empty after post-processing")
    return s


def build_gemini_request(image_bytes: bytes, prompt_text: str, config: VlmConfig) -> dict:
    return {
        "contents": [
            {
                "role": "user",
                "parts": [
                    {
                        "inline_data": {
                            "mime_type": "image/jpeg",
                            "data": base64.b64encode(image_bytes).decode("ascii"),
                        }
                    },
                    {"text": prompt_text},
                ],
            }
        ],
        "generationConfig": {
            "temperature": config.temperature,
            "maxOutputTokens": config.max_output_tokens,
        },
    }


def build_qwen_request(image_bytes: bytes, prompt_text: str, config: VlmConfig) -> dict:
    data_url = "data:image/jpeg;base64," + base64.b64encode(image_bytes).decode("ascii")
    return {
        "model": config.model_name or "qwen-vl-plus",
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "image_url", "image_url": {"url": data_url}},
                    {"type": "text", "text": prompt_text},
                ],
            }
        ],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }


def _parse_gemini_response(body: dict) -> str:
    try:
        return body["candidates"][0]["content"]["parts"][0]["text"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError(f"unexpected response shape from Gemini: {exc}") from exc


def _parse_qwen_response(body: dict) -> str:
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError(f"unexpected response shape from Qwen: {exc}") from exc


class RateLimiter:
    """Token bucket: blocks callers until a request slot is free."""

    def __init__(self, per_minute: int):
        self.capacity = max(1, per_minute)
        self.tokens = float(self.capacity)
        self.rate = self.capacity / 60.0
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


class MockVlmClient:
    """Offline stand-in: echoes the first five prompt labels as a fixed
    sentence.  ``canned`` overrides the output for error-path tests."""

    def __init__(self, canned: str | None = None):
        self.canned = canned
        self.calls = 0

    def complete(self, image_bytes: bytes, prompt: Prompt) -> str:
        self.calls += 1
        if self.canned is not None:
            return self.canned
        head = prompt.labels_used[:5]
        return "صورة تحتوي على " + "، ".join(head) + "."


class HttpVlmClient:
    """JSON-over-HTTP client for the real providers; retries with backoff
    and honors Retry-After on 429.  API keys come from the environment and
    are never written to logs or caches."""

    def __init__(self, config: VlmConfig):
        if not config.endpoint:
            raise ValidationError(f"provider {config.provider} needs an endpoint URL")
        self.config = config
        self.calls = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_ref:
            key = os.environ.get(self.config.api_key_ref)
            if not key:
                raise ValidationError(f"API key env var {self.config.api_key_ref} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, image_bytes: bytes, prompt: Prompt) -> str:
        cfg = self.config
        if cfg.provider == "gemini_pro_vision":
            body = build_gemini_request(image_bytes, prompt.text, cfg)
            parse = _parse_gemini_response
        else:
            body = build_qwen_request(image_bytes, prompt.text, cfg)
            parse = _parse_qwen_response
        delay = RETRY_BASE_DELAY
        last_status = None
        for attempt in range(1, RETRY_ATTEMPTS + 1):
            self.calls += 1
            try:
                resp = requests.post(
                    cfg.endpoint, json=body, headers=self._headers(), timeout=cfg.request_timeout
                )
                last_status = resp.status_code
                if resp.status_code == 200:
                    return parse(resp.json())
                if resp.status_code == 429 and resp.headers.get("Retry-After"):
                    delay = max(delay, float(resp.headers["Retry-After"]))
            except requests.RequestException:
                pass
            if attempt < RETRY_ATTEMPTS:
                time.sleep(delay)
                delay *= 2
        raise ProviderError(
            f"{cfg.provider} request failed after {RETRY_ATTEMPTS} attempts (last status {last_status})",
            status=last_status,
            attempts=RETRY_ATTEMPTS,
        )


@dataclass
class GenerationFailure:
    image_id: str
    error: str
    attempts: int = 1


class CaptionGenerator:
    """Drives one VLM client with caching and rate limiting."""

    def __init__(
        self,
        config: VlmConfig,
        client,
        config_id: str,
        cache_dir: str | Path | None = None,
    ):
        self.config = config
        self.client = client
        self.config_id = config_id
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.limiter = RateLimiter(config.rate_limit)

    def _cache_path(self, image_bytes: bytes, prompt: Prompt) -> Path | None:
        if self.cache_dir is None:
            return None
        key = hashlib.sha256(
            "|".join(
                [
                    self.config.provider,
                    self.config.model_name,
                    hashlib.sha256(image_bytes).hexdigest(),
                    prompt.digest(),
                ]
            ).encode("utf-8")
        ).hexdigest()
        return self.cache_dir / "captions" / f"{key}.json"

    def generate_caption(self, image_id: str, image_bytes: bytes, prompt: Prompt) -> CaptionRecord:
        if not prompt.text:
            raise ValidationError("empty prompt")
        cache_path = self._cache_path(image_bytes, prompt)
        if cache_path is not None and cache_path.exists():
            cached = json.loads(cache_path.read_text(encoding="utf-8"))
            return CaptionRecord(
                image_id=image_id,
                caption=cached["caption"],
                config_id=self.config_id,
                prompt_digest=prompt.digest(),
                latency=0.0,
                raw_response_digest=cached["raw_response_digest"],
                cache_hit=True,
            )
        self.limiter.acquire()
        start = time.monotonic()
        raw = self.client.complete(image_bytes, prompt)
        latency = time.monotonic() - start
        if not raw or not raw.strip():
            raise EmptyGenerationError(f"empty model output for image {image_id!r}")
        caption = post_process(raw)
        raw_digest = hashlib.sha256(raw.encode("utf-8")).hexdigest()
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            cache_path.write_text(
                json.dumps(
                    {"caption": caption, "raw_response_digest": raw_digest},
                    ensure_ascii=False,
                ),
                encoding="utf-8",
            )
        return CaptionRecord(
            image_id=image_id,
            caption=caption,
            config_id=self.config_id,
            prompt_digest=prompt.digest(),
            latency=latency,
            raw_response_digest=raw_digest,
        )

    def generate_all(
        self, items: list[tuple[str, bytes, Prompt]]
    ) -> tuple[list[CaptionRecord], list[GenerationFailure]]:
        """Caption every item; per-item failures go to the failure sidecar
        and do not abort the batch.  Output preserves input order."""
        if not items:
            raise ValidationError("generate_all called with no items")

        def one(item):
            image_id, image_bytes, prompt = item
            try:
                return self.generate_caption(image_id, image_bytes, prompt), None
            except ProviderError as exc:
                return None, GenerationFailure(image_id, str(exc), exc.attempts)
            except (EmptyGenerationError, ValidationError) as exc:
                return None, GenerationFailure(image_id, str(exc))

        records: list[CaptionRecord] = []
        failures: list[GenerationFailure] = []
        with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
            for record, failure in pool.map(one, items):
                if record is not None:
                    records.append(record)
                else:
                    failures.append(failure)
        return records, failures


def write_submission_csv(records: list[CaptionRecord], path: str | Path) -> None:
    """Write the shared-task submission file: header image_id,caption."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "caption"])
        for r in records:
            writer.writerow([r.image_id, r.caption])


def read_submission_csv(path: str | Path) -> list[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["image_id", "caption"]:
            raise ValidationError(f"{path}: bad header {header!r}, expected image_id,caption")
        return [(row[0], row[1]) for row in reader if row]


def write_error_sidecar(failures: list[GenerationFailure], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for fail in failures:
            f.write(
                json.dumps(
                    {"image_id": fail.image_id, "error": fail.error, "attempts": fail.attempts},
                    ensure_ascii=False,
                )
                + "\n"
            )
