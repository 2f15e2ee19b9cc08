"""Turning retrieved labels into a caption prompt, then a caption.

The retrieved labels are joined with Arabic commas into a fixed prompt
that asks the generator to describe the image using those elements.
Here the mock VLM client stands in for a hosted model; it echoes the
top labels into a caption so the full pipeline is runnable offline.
Real providers plug in through the same interface.
"""

import tempfile
from pathlib import Path

from vlcap.generation import CaptionGenerator, MockVlmClient, VlmConfig, write_submission_csv
from vlcap.prompts import PromptTemplate, build_prompt
from vlcap.retrieval import RetrievalResult

retrieved = [
    RetrievalResult("كلب", 0.91, 1),
    RetrievalResult("حديقه", 0.85, 2),
    RetrievalResult("شجره", 0.80, 3),
]
prompt = build_prompt(retrieved, PromptTemplate())
print("prompt text:\n ", prompt.text)
print("prompt digest:", prompt.digest()[:16], "\n")

cache = Path(tempfile.mkdtemp())
config = VlmConfig(provider="mock")
generator = CaptionGenerator(config, MockVlmClient(), config_id="demo", cache_dir=cache)
records, failures = generator.generate_all(
    [("img001", b"image-bytes-1", prompt), ("img002", b"image-bytes-2", prompt)]
)
for record in records:
    print(f"{record.image_id}: {record.caption}")
assert not failures

# Captions land in a submission CSV with the exact two-column header the
# leaderboard expects; quoting handles commas and newlines in captions.
out = cache / "submission.csv"
write_submission_csv(records, out)
print("\nsubmission.csv:")
print(out.read_text(encoding="utf-8"))
