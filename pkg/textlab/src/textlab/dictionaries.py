"""Keyword dictionaries and phrase matching over token streams.

Two published lists exist for speculative and fundamental language (the
audit table's notes and the fingerprint feature list) with partial
overlap; the defaults here merge them so every printed term counts, giving
14 speculative and 12 fundamental terms. Trade verbs, risk, and profit
lists have a single source each. Multi-word terms are matched as
consecutive tokens after the same normalization the corpus uses, never by
substring, so "rally" does not fire on "morally" and "fair value" requires
both tokens adjacent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import tokenize

SPECULATIVE_TERMS = (
    "trend", "momentum", "price rising", "price falling", "buy more",
    "bubble", "sell off", "rally",
    "pump", "breakout", "leverage", "surge", "moon", "fomo",
)

FUNDAMENTAL_TERMS = (
    "undervalued", "intrinsic", "dividend", "fair value", "discount",
    "fundamental", "14", "buy back",
    "value", "mean-revert", "fv", "discounted cash-flow",
)

TRADE_VERB_TERMS = ("buy", "sell", "long", "short", "liquidate")

RISK_TERMS = ("risk", "volatility", "drawdown")

PROFIT_TERMS = ("profit", "gain", "return")


@dataclass(frozen=True)
class KeywordDictionaries:
    speculative: tuple
    fundamental: tuple
    trade_verbs: tuple
    risk: tuple
    profit: tuple

    def __post_init__(self):
        for name in ("speculative", "fundamental", "trade_verbs", "risk",
                     "profit"):
            terms = getattr(self, name)
            if not terms:
                raise ValueError(f"{name} term list is empty")
            for term in terms:
                if not term or term != term.lower():
                    raise ValueError(f"{name} term {term!r} not lowercase")


def default_dictionaries() -> KeywordDictionaries:
    return KeywordDictionaries(
        speculative=SPECULATIVE_TERMS,
        fundamental=FUNDAMENTAL_TERMS,
        trade_verbs=TRADE_VERB_TERMS,
        risk=RISK_TERMS,
        profit=PROFIT_TERMS,
    )


def term_tokens(term: str) -> tuple:
    """A term normalized exactly like document text."""
    tokens = tuple(tokenize(term))
    if not tokens:
        raise ValueError(f"term {term!r} has no tokens")
    return tokens


def count_hits(tokens: Sequence[str], terms: Sequence[str]) -> int:
    """Total occurrences of all terms in the stream.

    Each term is counted at every starting position independently, so a
    phrase hit does not consume its tokens ("fair value" also leaves
    "value" countable when both are in the dictionary).
    """
    total = 0
    for term in terms:
        needle = term_tokens(term)
        width = len(needle)
        total += sum(1 for i in range(len(tokens) - width + 1)
                     if tuple(tokens[i:i + width]) == needle)
    return total
