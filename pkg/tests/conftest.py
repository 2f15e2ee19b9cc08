import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

# Surface forms chosen to survive normalization unchanged (no ta marbuta,
# no alef variants) so fixtures are easy to reason about.
ARABIC_WORDS = [
    "كلب", "ولد", "بنت", "بيت", "شمس", "قمر", "بحر", "جبل", "شجر", "طفل",
    "رجل", "سوق", "كتاب", "قلم", "مسجد", "حصان", "جمل", "سماء", "نهر", "ورد",
]
ARABIC_STOPWORDS_SAMPLE = ["في", "من", "علي", "هذا", "التي"]


def make_caption_corpus(n=50, seed=7):
    """Deterministic caption texts mixing content words, stopwords, digits,
    punctuation, and Latin noise."""
    rng = random.Random(seed)
    noise = ["123", "the", "،", "!", "٤"]
    captions = []
    for i in range(n):
        words = rng.choices(ARABIC_WORDS, k=rng.randint(3, 8))
        words += rng.choices(ARABIC_STOPWORDS_SAMPLE, k=rng.randint(1, 3))
        words += rng.choices(noise, k=rng.randint(0, 2))
        rng.shuffle(words)
        captions.append((f"img{i:03d}", " ".join(words)))
    return captions


@pytest.fixture
def caption_corpus():
    return make_caption_corpus()


@pytest.fixture
def captions_csv(tmp_path, caption_corpus):
    import csv

    path = tmp_path / "captions.csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "caption"])
        writer.writerows(caption_corpus)
    return path


@pytest.fixture
def external_labels_file(tmp_path):
    labels = ["قطار", "مدينه", "حديقه", "سياره", "كلب", "طاوله", "كرسي", "نافذه", "باب", "جسر"]
    path = tmp_path / "external.txt"
    path.write_text("\n".join(labels) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def tiny_png():
    """A real 2x2 PNG so image-decoding paths can run."""
    import io

    from PIL import Image

    img = Image.new("RGB", (2, 2), (200, 30, 30))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    # expose per-phase outcome so fixtures can report PASS/FAIL verdicts
    setattr(item, "rep_" + report.when, report)
