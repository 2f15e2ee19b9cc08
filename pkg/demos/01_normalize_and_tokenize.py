"""Arabic text normalization and tokenization.

The whole pipeline — vocabulary building, retrieval labels, and every
evaluation metric — runs on normalized text, so this is the foundation
everything else sits on.  Normalization strips diacritics and tatweel,
unifies alef variants, maps alef maqsura to ya and ta marbuta to ha,
turns punctuation into spaces, and collapses whitespace.  It is
idempotent: normalizing twice changes nothing.
"""

from vlcap.normalize import RULES_VERSION, normalize_arabic, tokenize

samples = [
    "أَحْمَدُ يذهبُ إلى المدرسةِ.",   # diacritics, hamza forms, ta marbuta
    "الكــتاب الجديـــد",              # tatweel stretching
    "قرأتُ كتاب python المفيد 42 مرة",  # Latin and digit handling
]

print(f"normalization rules: {RULES_VERSION}\n")
for text in samples:
    norm = normalize_arabic(text)
    print(f"raw:        {text}")
    print(f"normalized: {norm}")
    print(f"tokens:     {tokenize(text)}")
    assert normalize_arabic(norm) == norm, "normalization must be idempotent"
    print()

# Mixed Arabic+Latin words are dropped entirely rather than split,
# because half a word is not a usable vocabulary label.
print("mixed-script word:", tokenize("كتابbook جديد"))
