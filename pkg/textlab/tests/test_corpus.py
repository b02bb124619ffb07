"""Tokenization, preprocessing, and CSV loading."""

import pytest

from textlab.corpus import (
    Corpus,
    Document,
    load_documents_csv,
    preprocess,
    stopwords,
    tokenize,
)
from textlab.dictionaries import default_dictionaries, term_tokens


def rows(*texts, source="bot", agent="a1"):
    return [{"source": source, "agent": agent, "round": str(i + 1), "text": t}
            for i, t in enumerate(texts)]


class TestTokenize:
    def test_lowercases_and_splits_punctuation(self):
        assert tokenize("Mean-Revert toward FAIR value!") == \
            ["mean", "revert", "toward", "fair", "value"]

    def test_digits_survive(self):
        assert tokenize("anchor at 14.") == ["anchor", "at", "14"]

    def test_empty_and_symbol_only(self):
        assert tokenize("") == []
        assert tokenize("?!... --- ***") == []


class TestPreprocess:
    def test_stopwords_removed(self):
        stop = stopwords()
        assert preprocess("The price of the asset is rising", stop) == \
            ("price", "asset", "rising")

    def test_stopword_removal_bridges_phrases(self):
        # "price is rising" must still match the "price rising" phrase later
        assert preprocess("price is rising", stopwords()) == \
            ("price", "rising")

    def test_no_dictionary_token_is_a_stopword(self):
        # the pinned list must keep every dictionary term matchable
        stop = stopwords()
        dicts = default_dictionaries()
        for terms in (dicts.speculative, dicts.fundamental,
                      dicts.trade_verbs, dicts.risk, dicts.profit):
            for term in terms:
                for token in term_tokens(term):
                    assert token not in stop, (term, token)


class TestDocument:
    def test_rejects_malformed_tokens(self):
        with pytest.raises(ValueError):
            Document("bot", "a1", "1", "x", tokens=("Upper",))
        with pytest.raises(ValueError):
            Document("bot", "a1", "1", "x", tokens=("two words",))
        with pytest.raises(ValueError):
            Document("bot", "a1", "1", "x", tokens=("",))

    def test_accepts_clean_tokens(self):
        doc = Document("bot", "a1", "1", "buy at 14", ("buy", "14"))
        assert doc.tokens == ("buy", "14")


class TestCorpus:
    def test_build_preprocesses(self):
        corpus = Corpus.build(rows("The price is RISING fast!"))
        assert corpus.documents[0].tokens == ("price", "rising", "fast")
        assert corpus.documents[0].text == "The price is RISING fast!"

    def test_groups_by_source(self):
        corpus = Corpus.build(rows("one", source="HUMAN")
                              + rows("two", "three", source="gpt"))
        assert corpus.sources() == ["HUMAN", "gpt"]
        assert len(corpus.by_source()["gpt"]) == 2

    def test_round_coerced_to_str(self):
        corpus = Corpus.build([{"source": "bot", "agent": "a", "round": 7,
                                "text": "hi"}])
        assert corpus.documents[0].round == "7"


class TestLoadCsv:
    def test_load_and_shape(self, tmp_path):
        path = tmp_path / "docs.csv"
        path.write_text(
            "source,agent,round,text,tokens\n"
            "HUMAN,h1,END,\"Watch the trend, buy more early\",6\n"
            "gpt,g1,3,hold near fair value,4\n", encoding="utf-8")
        corpus = load_documents_csv(path)
        assert [d.source for d in corpus.documents] == ["HUMAN", "gpt"]
        assert corpus.documents[0].tokens == \
            ("watch", "trend", "buy", "more", "early")

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("source,agent,text\nbot,a,hi\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_documents_csv(path)
