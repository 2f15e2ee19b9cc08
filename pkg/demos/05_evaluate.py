"""Scoring candidate captions against references.

Three automatic signals: BLEU-1 (clipped unigram precision with a
brevity penalty, no smoothing), TF-IDF cosine over 1-2 grams computed
on the evaluation batch itself, and an optional LLM judge (mocked here).
All text is normalized before scoring, and every setting that affects
the numbers is pinned in the report metadata so two reports are only
comparable when their metadata matches.
"""

from vlcap.evaluation import MockJudge, bleu1, build_report, tfidf_cosine

candidates = [
    ("img1", "كلب يجري في الحديقه"),
    ("img2", "ولد يقرا كتاب"),
    ("img3", "قارب صغير في البحر"),
]
references = {
    "img1": ["كلب يلعب في الحديقه الخضراء"],
    "img2": ["ولد يقرا كتابا في المكتبه"],
    "img3": ["سفينه كبيره في البحر"],
}

print("per-pair BLEU-1:")
for image_id, caption in candidates:
    print(f"  {image_id}: {bleu1(caption, references[image_id]):.4f}")

scores, mean = tfidf_cosine([c for _, c in candidates], [references[i][0] for i, _ in candidates])
print(f"\nTF-IDF cosine per pair: {[round(s, 4) for s in scores]}  (mean x100 = {mean:.2f})")

report = build_report("demo-config", candidates, references, judge_client=MockJudge(["72", "65", "80"]))
print("\naggregates:", {k: round(v, 2) for k, v in report.aggregates.items()})
print("pinned settings:", sorted(report.metadata))
