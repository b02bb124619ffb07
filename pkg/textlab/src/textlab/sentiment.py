"""Lexicon sentiment scoring.

Scores use the raw text with only lowercasing and punctuation splitting;
no stemming and no stopword removal for this operation. A document's score
is (positive hits - negative hits) / (positive hits + negative hits),
which is bounded to [-1, 1] by construction; text with no lexicon hits
scores 0.
"""

from __future__ import annotations

from statistics import fmean, stdev
from typing import Optional

from .corpus import Corpus, load_word_list, tokenize


def positive_words() -> frozenset:
    return load_word_list("positive_words.txt")


def negative_words() -> frozenset:
    return load_word_list("negative_words.txt")


def score_text(text: str, positive: Optional[frozenset] = None,
               negative: Optional[frozenset] = None) -> float:
    positive = positive_words() if positive is None else positive
    negative = negative_words() if negative is None else negative
    tokens = tokenize(text)
    up = sum(1 for t in tokens if t in positive)
    down = sum(1 for t in tokens if t in negative)
    if up + down == 0:
        return 0.0
    return (up - down) / (up + down)


def sentiment(corpus: Corpus, positive: Optional[frozenset] = None,
              negative: Optional[frozenset] = None) -> tuple:
    """Per-document scores in corpus order plus per-source mean/sd/n."""
    positive = positive_words() if positive is None else positive
    negative = negative_words() if negative is None else negative
    scores = [score_text(document.text, positive, negative)
              for document in corpus.documents]

    by_source = {}
    for document, score in zip(corpus.documents, scores):
        by_source.setdefault(document.source, []).append(score)
    stats = {
        source: {"mean": fmean(values),
                 "sd": stdev(values) if len(values) > 1 else 0.0,
                 "n": len(values)}
        for source, values in by_source.items()
    }
    return scores, stats
