"""Turn retrieved labels into the Arabic instruction prompt.

The default template reads "باستخدام العناصر التالية: <labels>، صف محتوى
الصورة بدقة." with the Arabic comma joining labels in rank order.  Templates
are configurable so alternative wordings can be swapped in per experiment.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .retrieval import RetrievalResult

ARABIC_COMMA = "، "  # Arabic comma + space

DEFAULT_PREFIX = "باستخدام العناصر التالية"
DEFAULT_SUFFIX = "صف محتوى الصورة بدقة."


@dataclass(frozen=True)
class PromptTemplate:
    prefix: str = DEFAULT_PREFIX
    suffix: str = DEFAULT_SUFFIX
    separator: str = ARABIC_COMMA
    template_id: str = "default-v1"

    def __post_init__(self):
        if not self.prefix or not self.suffix:
            raise ValidationError("prompt template needs a non-empty prefix and suffix")

    def digest(self) -> str:
        payload = json.dumps(
            [self.prefix, self.suffix, self.separator], ensure_ascii=False
        ).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class Prompt:
    text: str
    labels_used: tuple[str, ...]
    template_id: str

    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def load_template(path: str | Path) -> PromptTemplate:
    """Read a template config file (JSON with prefix/suffix/separator)."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return PromptTemplate(
        prefix=obj["prefix"],
        suffix=obj["suffix"],
        separator=obj.get("separator", ARABIC_COMMA),
        template_id=obj.get("template_id", Path(path).stem),
    )


def build_prompt(results: list[RetrievalResult], template: PromptTemplate) -> Prompt:
    """Render the prompt from ranked retrieval results.

    Labels are inserted verbatim, in rank order, so the prompt shows exactly
    what was retrieved.
    """
    if not results:
        raise ValidationError("cannot build a prompt from zero labels")
    ranks = [r.rank for r in results]
    if ranks != sorted(ranks):
        raise ValidationError("retrieval results must be sorted by rank")
    labels = []
    for r in results:
        if not r.label:
            raise ValidationError("empty label in retrieval results")
        labels.append(r.label)
    text = (
        template.prefix
        + ": "
        + template.separator.join(labels)
        + ARABIC_COMMA
        + template.suffix
    )
    if "\n" in text:
        raise ValidationError("rendered prompt must be a single line")
    return Prompt(text=text, labels_used=tuple(labels), template_id=template.template_id)
