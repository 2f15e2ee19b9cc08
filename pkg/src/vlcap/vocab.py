"""Arabic visual-label vocabulary built from training captions plus an
external translated concept list.

Caption-derived entries come first, ordered by descending frequency then
lexicographically; external entries follow in file order, deduplicated
against everything seen before.  The result is deterministic byte-for-byte.
"""

from __future__ import annotations

import csv
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .normalize import normalize_arabic, tokenize

CAPTION_DERIVED = "caption_derived"
EXTERNAL = "external"

_FORMAT_HEADER = "#vlcap-vocab v1"


@dataclass(frozen=True)
class CaptionExample:
    image_id: str
    text: str

    def __post_init__(self):
        if not self.image_id:
            raise ValidationError("caption example with empty image_id")
        if not self.text.strip():
            raise ValidationError(f"caption for image {self.image_id!r} is empty")


@dataclass(frozen=True)
class TokenStats:
    token: str
    frequency: int


@dataclass(frozen=True)
class VocabEntry:
    label: str
    source: str  # CAPTION_DERIVED or EXTERNAL
    frequency: int | None = None


@dataclass
class Vocabulary:
    entries: list[VocabEntry]
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_captions_csv(path: str | Path) -> list[CaptionExample]:
    """Read the training captions CSV (columns image_id, caption)."""
    examples = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "image_id" not in reader.fieldnames or "caption" not in reader.fieldnames:
            raise ValidationError(f"{path}: expected columns image_id,caption, got {reader.fieldnames}")
        for row in reader:
            examples.append(CaptionExample(row["image_id"], row["caption"]))
    return examples


def load_stopwords(path: str | Path) -> set[str]:
    """Load one stopword per line; entries are normalized on load."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        w = normalize_arabic(line.strip())
        if w:
            words.add(w)
    return words


def default_stopwords_path() -> Path:
    return Path(__file__).parent / "data" / "arabic_stopwords.txt"


def extract_content_words(
    captions: list[CaptionExample],
    stopwords: set[str],
    min_len: int = 3,
    min_freq: int = 2,
    max_words: int = 2000,
) -> list[TokenStats]:
    """Count content words across the caption corpus.

    Keeps tokens with frequency >= min_freq and length >= min_len that are
    not stopwords, sorted by descending frequency then lexicographic,
    truncated to max_words.
    """
    if min_len < 1 or min_freq < 1:
        raise ValidationError("min_len and min_freq must be >= 1")
    counts: Counter[str] = Counter()
    for ex in captions:
        counts.update(tokenize(ex.text))
    kept = [
        (token, freq)
        for token, freq in counts.items()
        if freq >= min_freq and len(token) >= min_len and token not in stopwords
    ]
    kept.sort(key=lambda tf: (-tf[1], tf[0]))
    return [TokenStats(t, f) for t, f in kept[:max_words]]


def load_external_labels(path: str | Path) -> list[str]:
    """Load the translated concept list, one label per line.

    Blank lines are skipped, each label is normalized, order is preserved.
    Duplicates are passed through; deduplication happens at merge time.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read external labels file {path}: {exc}") from exc
    labels = []
    for lineno, line in enumerate(raw.split(b"\n"), start=1):
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValidationError(f"{path}: line {lineno} is not valid UTF-8: {exc}") from exc
        label = normalize_arabic(text.strip())
        if label:
            labels.append(label)
    return labels


def build_vocabulary(
    caption_words: list[TokenStats],
    external: list[str],
    metadata: dict[str, str] | None = None,
) -> Vocabulary:
    """Merge caption-derived words with external labels.

    Caption-derived entries keep their order; external labels follow in file
    order, skipping any whose normalized form already appeared (across either
    source; first occurrence wins).
    """
    entries: list[VocabEntry] = []
    seen: set[str] = set()
    for ts in caption_words:
        if ts.token in seen:
            continue
        seen.add(ts.token)
        entries.append(VocabEntry(ts.token, CAPTION_DERIVED, ts.frequency))
    for label in external:
        if not label or label in seen:
            continue
        seen.add(label)
        entries.append(VocabEntry(label, EXTERNAL))
    if not entries:
        raise ValidationError("empty vocabulary: no caption words and no external labels")
    return Vocabulary(entries, dict(metadata or {}))


def build_vocabulary_from_files(
    captions_path: str | Path,
    external_path: str | Path,
    stopwords_path: str | Path | None = None,
    min_len: int = 3,
    min_freq: int = 2,
    max_words: int = 2000,
) -> Vocabulary:
    """End-to-end vocabulary construction with provenance metadata."""
    stopwords_path = Path(stopwords_path) if stopwords_path else default_stopwords_path()
    captions = load_captions_csv(captions_path)
    stopwords = load_stopwords(stopwords_path)
    words = extract_content_words(captions, stopwords, min_len, min_freq, max_words)
    external = load_external_labels(external_path)
    metadata = {
        "stopwords_digest": _sha256_file(stopwords_path),
        "external_digest": _sha256_file(external_path),
        "min_len": str(min_len),
        "min_freq": str(min_freq),
        "max_words": str(max_words),
    }
    return build_vocabulary(words, external, metadata)


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    """Write the line-oriented vocabulary file (header block + TSV entries)."""
    lines = [_FORMAT_HEADER]
    for key in sorted(vocab.metadata):
        lines.append(f"#{key}={vocab.metadata[key]}")
    for e in vocab.entries:
        freq = "" if e.frequency is None else str(e.frequency)
        lines.append(f"{e.label}\t{e.source}\t{freq}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path: str | Path) -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != _FORMAT_HEADER:
        raise ValidationError(f"{path}: missing vocabulary header {_FORMAT_HEADER!r}")
    metadata: dict[str, str] = {}
    entries: list[VocabEntry] = []
    for line in lines[1:]:
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            metadata[key] = value
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValidationError(f"{path}: malformed entry line {line!r}")
        label, source, freq = parts
        if source not in (CAPTION_DERIVED, EXTERNAL):
            raise ValidationError(f"{path}: unknown source {source!r}")
        entries.append(VocabEntry(label, source, int(freq) if freq else None))
    if not entries:
        raise ValidationError(f"{path}: vocabulary has no entries")
    return Vocabulary(entries, metadata)
