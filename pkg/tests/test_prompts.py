import json
import random

import pytest

from vlcap.errors import ValidationError
from vlcap.prompts import ARABIC_COMMA, Prompt, PromptTemplate, build_prompt, load_template
from vlcap.retrieval import RetrievalResult

from conftest import ARABIC_WORDS


def _results(labels):
    return [RetrievalResult(label, 1.0 - 0.01 * i, i + 1) for i, label in enumerate(labels)]


def test_single_label_default_template():
    prompt = build_prompt(_results(["قطه"]), PromptTemplate())
    assert prompt.text == "باستخدام العناصر التالية: قطه، صف محتوى الصورة بدقة."


def test_two_labels_joined_with_arabic_comma():
    prompt = build_prompt(_results(["قطه", "شجر"]), PromptTemplate())
    assert "قطه" + ARABIC_COMMA.rstrip() + " شجر" in prompt.text
    assert prompt.labels_used == ("قطه", "شجر")


def test_thirty_labels_in_rank_order():
    labels = [w + "ي" * (i // len(ARABIC_WORDS)) for i, w in enumerate(ARABIC_WORDS * 2)][:30]
    assert len(set(labels)) == 30
    prompt = build_prompt(_results(labels), PromptTemplate())
    pos = -1
    for label in labels:
        nxt = prompt.text.index(label, pos + 1)
        assert nxt > pos
        pos = nxt
    assert "\n" not in prompt.text


def test_empty_results_error():
    with pytest.raises(ValidationError):
        build_prompt([], PromptTemplate())


def test_empty_label_error():
    with pytest.raises(ValidationError):
        build_prompt([RetrievalResult("", 1.0, 1)], PromptTemplate())


def test_unsorted_ranks_error():
    bad = [RetrievalResult("كلب", 0.9, 2), RetrievalResult("بيت", 1.0, 1)]
    with pytest.raises(ValidationError):
        build_prompt(bad, PromptTemplate())


def test_template_requires_prefix_and_suffix():
    with pytest.raises(ValidationError):
        PromptTemplate(prefix="", suffix="x")


def test_rendering_injective_on_label_lists():
    rng = random.Random(0)
    seen = {}
    template = PromptTemplate()
    for _ in range(300):
        labels = tuple(rng.sample(ARABIC_WORDS, k=rng.randint(1, 10)))
        text = build_prompt(_results(list(labels)), template).text
        assert seen.get(text, labels) == labels
        seen[text] = labels


def test_rendering_deterministic():
    a = build_prompt(_results(["كلب", "بيت"]), PromptTemplate())
    b = build_prompt(_results(["كلب", "بيت"]), PromptTemplate())
    assert a == b


def test_template_file_loading(tmp_path):
    path = tmp_path / "template.json"
    path.write_text(
        json.dumps({"prefix": "صف", "suffix": "بدقه.", "template_id": "alt"}, ensure_ascii=False),
        encoding="utf-8",
    )
    template = load_template(path)
    assert template.prefix == "صف" and template.template_id == "alt"
    assert template.digest() != PromptTemplate().digest()


def test_prompt_digest_stable():
    p = Prompt("نص", ("نص",), "t")
    assert p.digest() == Prompt("نص", ("نص",), "t").digest()
