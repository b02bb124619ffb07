"""Per-source fingerprints: hit rates per 1,000 tokens, risk/profit ratio."""

from textlab.audit import INFINITE, fingerprints
from textlab.corpus import Corpus

COLUMNS = ("fundamental_per_1000", "speculative_per_1000",
           "trade_verbs_per_1000", "risk_profit_ratio")


def build(rows):
    return Corpus.build([{"source": s, "agent": "a", "round": str(i), "text": t}
                         for i, (s, t) in enumerate(rows)])


class TestRates:
    def test_hand_counted_hundred_token_document(self):
        # 1 fundamental hit in exactly 100 surviving tokens
        corpus = build([("m", "dividend " + "alpha " * 99)])
        fp = fingerprints(corpus)["m"]
        assert fp["fundamental_per_1000"] == 10.0
        assert fp["speculative_per_1000"] == 0.0
        assert fp["trade_verbs_per_1000"] == 0.0

    def test_hand_counted_mixed_source(self):
        # pooled tokens: buy momentum risk profit gain
        #                sell fair value dividend drawdown   (10 total)
        # fundamental: fair value, value, dividend = 3; speculative: momentum;
        # trade: buy, sell; risk: risk, drawdown; profit: profit, gain
        corpus = build([("m", "buy momentum risk profit gain"),
                        ("m", "sell fair value dividend drawdown")])
        fp = fingerprints(corpus)["m"]
        assert fp["fundamental_per_1000"] == 300.0
        assert fp["speculative_per_1000"] == 100.0
        assert fp["trade_verbs_per_1000"] == 200.0
        assert fp["risk_profit_ratio"] == 1.0

    def test_overlapping_phrase_hits_are_not_consumed(self):
        # "fair value" scores the phrase and the bare "value" inside it
        corpus = build([("m", "fair value")])
        assert fingerprints(corpus)["m"]["fundamental_per_1000"] == 1000.0

    def test_numeric_anchor_counts(self):
        # "at" is a stopword, leaving 2 tokens with 1 fundamental hit
        corpus = build([("m", "anchor at 14")])
        assert fingerprints(corpus)["m"]["fundamental_per_1000"] == 500.0

    def test_hyphenated_term_matches_split_tokens(self):
        corpus = build([("m", "mean-revert signal value")])
        # mean-revert phrase + value, over 4 tokens
        assert fingerprints(corpus)["m"]["fundamental_per_1000"] == 500.0


class TestInvariance:
    ROWS = [("m", "buy momentum risk profit gain"),
            ("m", "sell fair value dividend drawdown"),
            ("HUMAN", "trend is up"),
            ("HUMAN", "dividend soon")]

    def test_document_order(self):
        assert fingerprints(build(self.ROWS)) == \
            fingerprints(build(list(reversed(self.ROWS))))

    def test_document_splitting(self):
        joined = build([("m", "buy momentum risk profit gain "
                              "sell fair value dividend drawdown")])
        split = build(self.ROWS[:2])
        assert fingerprints(joined)["m"] == fingerprints(split)["m"]


class TestRiskProfitRatio:
    def test_infinite_when_no_profit_hits(self):
        corpus = build([("m", "risk volatility drawdown")])
        fp = fingerprints(corpus)["m"]
        assert fp["risk_profit_ratio"] == INFINITE
        assert INFINITE == "INFINITE"

    def test_zero_risk_over_profit(self):
        corpus = build([("m", "profit and gain")])
        assert fingerprints(corpus)["m"]["risk_profit_ratio"] == 0.0

    def test_two_to_one(self):
        corpus = build([("m", "risk volatility return")])
        assert fingerprints(corpus)["m"]["risk_profit_ratio"] == 2.0


class TestEdges:
    def test_stopword_only_source(self):
        fp = fingerprints(build([("m", "the of and")]))["m"]
        assert fp == {"fundamental_per_1000": 0.0,
                      "speculative_per_1000": 0.0,
                      "trade_verbs_per_1000": 0.0,
                      "risk_profit_ratio": INFINITE}

    def test_all_columns_present_per_source(self):
        table = fingerprints(build(self.__class__.CORPUS_ROWS))
        for fp in table.values():
            assert tuple(fp) == COLUMNS

    CORPUS_ROWS = [("m", "buy low"), ("HUMAN", "sell high")]
