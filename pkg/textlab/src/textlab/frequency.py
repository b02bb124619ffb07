"""Ranked word counts over the corpus tokens."""

from __future__ import annotations

from collections import Counter

from .corpus import Corpus


def word_frequency(corpus: Corpus) -> list:
    """(word, count, percent) rows, highest count first, ties alphabetical."""
    counts = Counter(t for document in corpus.documents
                     for t in document.tokens)
    total = sum(counts.values())
    return [(word, count, 100.0 * count / total)
            for word, count in sorted(counts.items(),
                                      key=lambda kv: (-kv[1], kv[0]))]
