"""Embedding labels and retrieving the top-k per image.

Labels are embedded once into a unit-normalized matrix (the LabelIndex);
each image embedding is then scored against every label by cosine
similarity, which for unit vectors is a plain dot product.  Retrieval is
exact — no approximate nearest-neighbor shortcuts — with deterministic
tie-breaking by label insertion order.

The mock provider used here is deterministic (seeded from a hash of the
input), so this demo prints the same ranking every run without any
network access or model weights.
"""

from vlcap.embeddings import MockProvider
from vlcap.retrieval import RetrievalConfig, build_index, retrieve_top_k
from vlcap.vocab import Vocabulary, VocabEntry, EXTERNAL

provider = MockProvider(dim=64)
labels = ["كلب", "قطه", "حديقه", "شجره", "بحر", "قارب", "جبل", "شمس", "ولد", "بنت"]
vocab = Vocabulary([VocabEntry(l, EXTERNAL, 0) for l in labels], metadata={})
index = build_index(vocab, provider)
print(f"index: {len(index.labels)} labels, dim={index.encoder.dim}\n")

query = provider.embed_image(b"demo-image-bytes")
for result in retrieve_top_k(index, query, RetrievalConfig(k=5)):
    print(f"  rank {result.rank}: {result.label:8s} score={result.score:+.4f}")

# Self-retrieval sanity: a label queried with its own embedding comes
# back first with score 1.
[top] = retrieve_top_k(index, provider.embed_texts(["بحر"])[0], RetrievalConfig(k=1))
print(f"\nself-retrieval: {top.label} score={top.score:.6f}")
