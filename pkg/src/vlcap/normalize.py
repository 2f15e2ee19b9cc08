"""Arabic orthographic normalization and tokenization.

The rule list is fixed and ordered; applying it twice gives the same result
as applying it once, which the metric code relies on.
"""

from __future__ import annotations

import re
import unicodedata

# Version tag recorded in report metadata so scores can be traced to a rule set.
RULES_VERSION = "ar-norm-v1"

# Tashkeel and Quranic annotation marks, plus the dagger alef (U+0670).
_DIACRITICS_RE = re.compile("[ؐ-ًؚ-ٰٟۖ-ۭ]")
_TATWEEL_RE = re.compile("ـ+")
_ALEF_VARIANTS_RE = re.compile("[آأإ]")  # alef madda/hamza above/below
_ALEF_MAQSURA = ("ى", "ي")  # alef maqsura -> ya
_TA_MARBUTA = ("ة", "ه")  # ta marbuta -> ha
_WS_RE = re.compile(r"\s+")

_ARABIC_RUN_RE = re.compile("[ء-ي]+")
_LATIN_RE = re.compile(r"[A-Za-z]")


def _strip_punctuation(text: str) -> str:
    out = []
    for ch in text:
        if unicodedata.category(ch).startswith("P"):
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out)


def normalize_arabic(text: str, unify_ta_marbuta: bool = True) -> str:
    """Apply the ordered normalization rules to ``text``.

    Rules, in order: remove diacritics, remove tatweel, unify alef variants
    to bare alef, unify alef maqsura to ya, unify ta marbuta to ha (optional),
    strip punctuation, collapse whitespace.  Idempotent.
    """
    s = _DIACRITICS_RE.sub("", text)
    s = _TATWEEL_RE.sub("", s)
    s = _ALEF_VARIANTS_RE.sub("ا", s)
    s = s.replace(*_ALEF_MAQSURA)
    if unify_ta_marbuta:
        s = s.replace(*_TA_MARBUTA)
    s = _strip_punctuation(s)
    s = _WS_RE.sub(" ", s).strip()
    return s


def tokenize(text: str) -> list[str]:
    """Split Arabic text into normalized word tokens.

    Tokens are maximal runs of Arabic letters after normalization; digits,
    punctuation, and Latin runs act as delimiters and are dropped.  A word
    mixing Arabic and Latin letters is dropped entirely (the vocabulary is
    Arabic-only by construction).
    """
    normalized = normalize_arabic(text)
    tokens: list[str] = []
    for chunk in normalized.split():
        if _LATIN_RE.search(chunk) and _ARABIC_RUN_RE.search(chunk):
            continue
        tokens.extend(_ARABIC_RUN_RE.findall(chunk))
    return tokens
