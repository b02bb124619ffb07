"""Strategy-text analytics over agent trading documents."""

from .audit import INFINITE, classify, fingerprints, keyword_audit
from .corpus import Corpus, Document, load_documents_csv, preprocess, tokenize
from .dictionaries import KeywordDictionaries, default_dictionaries
from .frequency import word_frequency
from .sentiment import score_text, sentiment
from .topics import TopicAssignment, lda_two_topics

__all__ = [
    "Corpus",
    "Document",
    "INFINITE",
    "KeywordDictionaries",
    "TopicAssignment",
    "classify",
    "default_dictionaries",
    "fingerprints",
    "keyword_audit",
    "lda_two_topics",
    "load_documents_csv",
    "preprocess",
    "score_text",
    "sentiment",
    "tokenize",
    "word_frequency",
]
