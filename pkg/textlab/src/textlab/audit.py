"""Keyword audits and per-model linguistic fingerprints.

keyword_audit tags each document speculative, fundamental, or generic by
majority dictionary hits (generic on zero hits or a tie) and reports the
percentage mix per source; the three percentages sum to 100 up to float
rounding.

fingerprints pools each source's tokens and reports dictionary hit rates
per 1,000 tokens plus the risk/profit hit ratio. Pooling makes the rates
invariant to document order and to how text is split into documents. A
source with no profit hits reports the INFINITE sentinel for the ratio.
"""

from __future__ import annotations

from typing import Optional

from .corpus import Corpus
from .dictionaries import KeywordDictionaries, count_hits, default_dictionaries

SPECULATIVE = "speculative"
FUNDAMENTAL = "fundamental"
GENERIC = "generic"

INFINITE = "INFINITE"

AUDIT_CLASSES = (SPECULATIVE, FUNDAMENTAL, GENERIC)


def classify(tokens, dicts: Optional[KeywordDictionaries] = None) -> str:
    dicts = default_dictionaries() if dicts is None else dicts
    speculative = count_hits(tokens, dicts.speculative)
    fundamental = count_hits(tokens, dicts.fundamental)
    if speculative > fundamental:
        return SPECULATIVE
    if fundamental > speculative:
        return FUNDAMENTAL
    return GENERIC


def keyword_audit(corpus: Corpus,
                  dicts: Optional[KeywordDictionaries] = None) -> dict:
    """Per-source percentage of documents in each class."""
    dicts = default_dictionaries() if dicts is None else dicts
    result = {}
    for source, documents in corpus.by_source().items():
        counts = {label: 0 for label in AUDIT_CLASSES}
        for document in documents:
            counts[classify(document.tokens, dicts)] += 1
        result[source] = {label: 100.0 * n / len(documents)
                          for label, n in counts.items()}
    return result


def fingerprints(corpus: Corpus,
                 dicts: Optional[KeywordDictionaries] = None) -> dict:
    """Per-source rates per 1,000 tokens and the risk/profit ratio."""
    dicts = default_dictionaries() if dicts is None else dicts
    result = {}
    for source, documents in corpus.by_source().items():
        pooled = [t for document in documents for t in document.tokens]
        total = len(pooled)

        def rate(terms):
            return 1000.0 * count_hits(pooled, terms) / total if total else 0.0

        risk = count_hits(pooled, dicts.risk)
        profit = count_hits(pooled, dicts.profit)
        result[source] = {
            "fundamental_per_1000": rate(dicts.fundamental),
            "speculative_per_1000": rate(dicts.speculative),
            "trade_verbs_per_1000": rate(dicts.trade_verbs),
            "risk_profit_ratio": risk / profit if profit else INFINITE,
        }
    return result
