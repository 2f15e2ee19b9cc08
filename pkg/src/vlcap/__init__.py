"""Two-stage Arabic image captioning with interpretable visual-label retrieval.

Stage 1 ranks a curated Arabic label vocabulary against an image embedding by
cosine similarity; stage 2 turns the top-k labels into a fluent Arabic prompt
and asks a hosted vision-language model for the caption.  The package also
ships the evaluation harness (Arabic normalization, BLEU-1, TF-IDF n-gram
cosine, LLM-judge, manual-rating aggregation) and a configuration-matrix
experiment runner.
"""

__version__ = "0.1.0"
