"""Evaluation harness: BLEU-1, TF-IDF n-gram cosine, LLM-judge scoring, and
manual-rating aggregation over candidate/reference caption pairs.

All lexical metrics run on text canonicalized by ``normalize_arabic``.
Aggregate BLEU-1 and cosine values are reported x100 (percentages); judge
scores are already on a 0-100 scale.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import JudgeError, ValidationError
from .normalize import RULES_VERSION, normalize_arabic

MANUAL_AXES = ("cultural_relevance", "conciseness", "completeness", "accuracy")
DEFAULT_MANUAL_SCALE = (1, 5)

TFIDF_NGRAM_RANGE = (1, 2)

_JUDGE_PROMPT_PATH = Path(__file__).parent / "data" / "judge_prompt.txt"
_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")


# ---------------------------------------------------------------------------
# BLEU-1

def bleu1(candidate: str, references: list[str]) -> float:
    """Modified unigram precision with a brevity penalty.

    Precision clips each candidate token's count by its maximum count in any
    single reference; BP = min(1, exp(1 - r/c)) with r the reference length
    closest to the candidate length (ties prefer the shorter reference).
    """
    if not references:
        raise ValidationError("bleu1 needs at least one reference")
    cand = candidate.split()
    refs = [r.split() for r in references]
    if not cand:
        return 0.0
    cand_counts = Counter(cand)
    max_ref_counts: Counter[str] = Counter()
    for ref in refs:
        for tok, n in Counter(ref).items():
            max_ref_counts[tok] = max(max_ref_counts[tok], n)
    clipped = sum(min(n, max_ref_counts[tok]) for tok, n in cand_counts.items())
    precision = clipped / len(cand)
    if precision == 0.0:
        return 0.0
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = min(1.0, math.exp(1.0 - r / c))
    return precision * bp


# ---------------------------------------------------------------------------
# TF-IDF n-gram cosine

def _ngrams(text: str, ngram_range: tuple[int, int]) -> Counter:
    tokens = text.split()
    grams: Counter = Counter()
    lo, hi = ngram_range
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            grams[tuple(tokens[i : i + n])] += 1
    return grams


def tfidf_cosine(
    candidates: list[str],
    references: list[str],
    ngram_range: tuple[int, int] = TFIDF_NGRAM_RANGE,
    unify_ta_marbuta: bool = True,
) -> tuple[list[float], float]:
    """Per-pair cosine between TF-IDF n-gram vectors, plus the mean x100.

    One vocabulary and one IDF table are built over all normalized candidates
    and references in the batch (raw TF; IDF = ln((1+N)/(1+df)) + 1; L2
    document normalization).  A pair where either side has no n-grams scores
    zero.
    """
    if not candidates:
        raise ValidationError("tfidf_cosine needs a non-empty batch")
    if len(candidates) != len(references):
        raise ValidationError(
            f"{len(candidates)} candidates vs {len(references)} references"
        )
    norm = lambda s: normalize_arabic(s, unify_ta_marbuta=unify_ta_marbuta)
    docs = [_ngrams(norm(t), ngram_range) for t in list(candidates) + list(references)]
    n_docs = len(docs)
    df: Counter = Counter()
    for doc in docs:
        df.update(doc.keys())
    idf = {g: math.log((1 + n_docs) / (1 + d)) + 1.0 for g, d in df.items()}

    def vectorize(doc: Counter) -> dict:
        vec = {g: tf * idf[g] for g, tf in doc.items()}
        norm2 = math.sqrt(sum(w * w for w in vec.values()))
        if norm2 == 0.0:
            return {}
        return {g: w / norm2 for g, w in vec.items()}

    n_pairs = len(candidates)
    scores = []
    for i in range(n_pairs):
        cv = vectorize(docs[i])
        rv = vectorize(docs[n_pairs + i])
        if not cv or not rv:
            scores.append(0.0)
            continue
        small, large = (cv, rv) if len(cv) <= len(rv) else (rv, cv)
        scores.append(sum(w * large.get(g, 0.0) for g, w in small.items()))
    return scores, 100.0 * sum(scores) / n_pairs


# ---------------------------------------------------------------------------
# LLM judge

def judge_prompt_template() -> str:
    return _JUDGE_PROMPT_PATH.read_text(encoding="utf-8")


def judge_prompt_digest() -> str:
    return hashlib.sha256(_JUDGE_PROMPT_PATH.read_bytes()).hexdigest()


def parse_judge_score(text: str) -> float:
    """Extract the first number in [0, 100] style output ("85", "Score: 85/100").

    Out-of-range or missing numbers raise; scores are never silently clamped.
    """
    m = _NUMBER_RE.search(text)
    if m is None:
        raise JudgeError(f"no numeric score in judge output {text!r}")
    value = float(m.group())
    if not 0.0 <= value <= 100.0:
        raise JudgeError(f"judge score {value} outside [0, 100] in output {text!r}")
    return value


class MockJudge:
    """Scripted judge for offline tests: returns canned responses in order,
    repeating the last one."""

    def __init__(self, responses: list[str]):
        if not responses:
            raise ValidationError("MockJudge needs at least one response")
        self.responses = list(responses)
        self.calls = 0

    def judge(self, prompt: str, image: bytes | None = None) -> str:
        idx = min(self.calls, len(self.responses) - 1)
        self.calls += 1
        return self.responses[idx]


def llm_judge(
    client,
    candidate: str,
    references: list[str],
    image: bytes | None = None,
    cache_dir: str | Path | None = None,
) -> float:
    """Score one pair on [0, 100] with the fixed judge prompt.

    Unparsable output gets one reprompt, then the pair fails with a
    JudgeError.  Responses are cached keyed by the rendered prompt.
    """
    if not references:
        raise ValidationError("llm_judge needs at least one reference")
    prompt = judge_prompt_template().format(
        candidate=candidate, references="\n".join(references)
    )
    cache_path = None
    if cache_dir is not None:
        key = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        cache_path = Path(cache_dir) / "judge" / f"{key}.json"
        if cache_path.exists():
            return float(json.loads(cache_path.read_text())["score"])
    last_error: JudgeError | None = None
    for _ in range(2):  # initial attempt + one reprompt
        raw = client.judge(prompt, image)
        try:
            score = parse_judge_score(raw)
            break
        except JudgeError as exc:
            last_error = exc
    else:
        raise last_error  # type: ignore[misc]
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(json.dumps({"score": score}))
    return score


# ---------------------------------------------------------------------------
# Manual ratings

@dataclass(frozen=True)
class ManualRating:
    image_id: str
    rater_id: str
    cultural_relevance: float
    conciseness: float
    completeness: float
    accuracy: float


def aggregate_manual(
    ratings: list[ManualRating], scale: tuple[int, int] = DEFAULT_MANUAL_SCALE
) -> dict[str, float]:
    """Arithmetic mean per rubric axis across all ratings."""
    if not ratings:
        raise ValidationError("aggregate_manual needs at least one rating")
    lo, hi = scale
    for row, r in enumerate(ratings, start=1):
        for axis in MANUAL_AXES:
            value = getattr(r, axis)
            if not lo <= value <= hi:
                raise ValidationError(
                    f"rating row {row} (image {r.image_id}, rater {r.rater_id}): "
                    f"{axis}={value} outside scale [{lo}, {hi}]"
                )
    return {
        axis: sum(getattr(r, axis) for r in ratings) / len(ratings)
        for axis in MANUAL_AXES
    }


def load_manual_ratings_csv(path: str | Path) -> list[ManualRating]:
    """CSV columns: image_id,rater_id,cultural_relevance,conciseness,completeness,accuracy."""
    ratings = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            ratings.append(
                ManualRating(
                    image_id=row["image_id"],
                    rater_id=row["rater_id"],
                    **{axis: float(row[axis]) for axis in MANUAL_AXES},
                )
            )
    return ratings


# ---------------------------------------------------------------------------
# Reports

@dataclass
class ScoredPair:
    image_id: str
    candidate: str
    references: list[str]
    bleu1: float
    tfidf_cosine: float
    llm_judge: float | None = None
    judge_error: str | None = None


@dataclass
class EvalReport:
    config_id: str
    pairs: list[ScoredPair]
    aggregates: dict[str, float]
    manual_means: dict[str, float] | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        obj = {
            "config_id": self.config_id,
            "metadata": self.metadata,
            "aggregates": self.aggregates,
            "manual_means": self.manual_means,
            "pairs": [
                {
                    "image_id": p.image_id,
                    "candidate": p.candidate,
                    "references": p.references,
                    "bleu1": p.bleu1,
                    "tfidf_cosine": p.tfidf_cosine,
                    "llm_judge": p.llm_judge,
                    "judge_error": p.judge_error,
                }
                for p in self.pairs
            ],
        }
        return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        obj = json.loads(text)
        pairs = [
            ScoredPair(
                image_id=p["image_id"],
                candidate=p["candidate"],
                references=p["references"],
                bleu1=p["bleu1"],
                tfidf_cosine=p["tfidf_cosine"],
                llm_judge=p.get("llm_judge"),
                judge_error=p.get("judge_error"),
            )
            for p in obj["pairs"]
        ]
        return cls(
            config_id=obj["config_id"],
            pairs=pairs,
            aggregates=obj["aggregates"],
            manual_means=obj.get("manual_means"),
            metadata=obj.get("metadata", {}),
        )


def load_references_csv(path: str | Path) -> dict[str, list[str]]:
    """CSV columns image_id,reference; repeated image_id rows stack up as
    multiple references."""
    refs: dict[str, list[str]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "image_id" not in reader.fieldnames or "reference" not in reader.fieldnames:
            raise ValidationError(f"{path}: expected columns image_id,reference, got {reader.fieldnames}")
        for row in reader:
            refs.setdefault(row["image_id"], []).append(row["reference"])
    return refs


def build_report(
    config_id: str,
    candidates: list[tuple[str, str]],
    references: dict[str, list[str]],
    judge_client=None,
    ratings: list[ManualRating] | None = None,
    cache_dir: str | Path | None = None,
    unify_ta_marbuta: bool = True,
) -> EvalReport:
    """Score every (candidate, references) pair and assemble the report.

    TF-IDF scoring uses the first reference per image as the paired document
    (all references still contribute to the IDF corpus via their pairs).
    """
    if not candidates:
        raise ValidationError("build_report needs at least one pair")
    seen: set[str] = set()
    for image_id, _ in candidates:
        if image_id in seen:
            raise ValidationError(f"duplicate image_id {image_id!r} in candidates")
        seen.add(image_id)
    missing = [i for i, _ in candidates if i not in references or not references[i]]
    if missing:
        raise ValidationError(f"no references for image ids: {missing[:5]}")

    norm = lambda s: normalize_arabic(s, unify_ta_marbuta=unify_ta_marbuta)
    cand_texts = [c for _, c in candidates]
    ref_lists = [references[i] for i, _ in candidates]
    tfidf_scores, _ = tfidf_cosine(
        cand_texts, [refs[0] for refs in ref_lists], unify_ta_marbuta=unify_ta_marbuta
    )

    pairs: list[ScoredPair] = []
    for (image_id, caption), refs, tfidf in zip(candidates, ref_lists, tfidf_scores):
        pair = ScoredPair(
            image_id=image_id,
            candidate=caption,
            references=list(refs),
            bleu1=bleu1(norm(caption), [norm(r) for r in refs]),
            tfidf_cosine=tfidf,
        )
        if judge_client is not None:
            try:
                pair.llm_judge = llm_judge(
                    judge_client, caption, list(refs), cache_dir=cache_dir
                )
            except JudgeError as exc:
                pair.judge_error = str(exc)
        pairs.append(pair)

    aggregates = {
        "bleu1_mean_x100": 100.0 * sum(p.bleu1 for p in pairs) / len(pairs),
        "tfidf_cosine_mean_x100": 100.0 * sum(p.tfidf_cosine for p in pairs) / len(pairs),
    }
    judged = [p.llm_judge for p in pairs if p.llm_judge is not None]
    if judged:
        aggregates["llm_judge_mean"] = sum(judged) / len(judged)
    manual_means = aggregate_manual(ratings) if ratings else None
    metadata = {
        "normalization_rules": RULES_VERSION,
        "unify_ta_marbuta": str(unify_ta_marbuta),
        "tfidf_ngram_range": f"{TFIDF_NGRAM_RANGE[0]}-{TFIDF_NGRAM_RANGE[1]}",
        "tfidf_idf": "ln((1+N)/(1+df))+1, raw TF, L2 doc norm",
        "judge_prompt_digest": judge_prompt_digest(),
    }
    return EvalReport(config_id, pairs, aggregates, manual_means, metadata)
