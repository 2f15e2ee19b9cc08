"""Building the label vocabulary.

The retrieval stage needs a curated list of Arabic labels.  It comes
from two sources: content words mined from the training captions
(stopwords, short tokens, and rare tokens filtered out) and an external
label list appended in file order.  Duplicates keep their first
occurrence, so caption-derived words win over external repeats.
"""

import csv
import tempfile
from pathlib import Path

from vlcap.vocab import build_vocabulary_from_files, load_vocabulary, save_vocabulary

tmp = Path(tempfile.mkdtemp())

captions = [
    ("img1", "كلب صغير يلعب في الحديقه الواسعه"),
    ("img2", "كلب يجري خلف الكره في الحديقه"),
    ("img3", "ولد يقرا كتابا تحت الشجره"),
    ("img4", "ولد صغير يلعب مع الكلب"),
]
with open(tmp / "captions.csv", "w", newline="", encoding="utf-8") as f:
    writer = csv.writer(f)
    writer.writerow(["image_id", "caption"])
    writer.writerows(captions)

(tmp / "external.txt").write_text("قطار\nجسر\nكلب\nنافذه\n", encoding="utf-8")

vocab = build_vocabulary_from_files(tmp / "captions.csv", tmp / "external.txt")
print(f"{len(vocab.entries)} labels:")
for entry in vocab.entries:
    print(f"  {entry.label:12s} source={entry.source:16s} freq={entry.frequency}")

# The TSV round-trip is lossless, including provenance metadata.
save_vocabulary(vocab, tmp / "vocab.tsv")
reloaded = load_vocabulary(tmp / "vocab.tsv")
assert reloaded.labels == vocab.labels
print("\nmetadata:", dict(sorted(vocab.metadata.items())))
