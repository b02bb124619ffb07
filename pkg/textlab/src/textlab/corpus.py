"""Document corpus: CSV loading, tokenization, preprocessing.

Documents arrive as CSV rows of source (model name or HUMAN), agent id,
round label ("1".."30", "P1" for practice, "END" for reflections), and raw
text. Corpus tokens are lowercase, punctuation-free, and stopword-filtered;
every non-alphanumeric character separates tokens, so hyphenated terms
split ("mean-revert" becomes "mean", "revert") and digits survive ("14").

The stopword list is a pinned data file, not a third-party download. It
deliberately omits words that occur inside the default keyword
dictionaries ("more", "off", "back", "long", "short", "mean") so that
dictionary phrases remain matchable on filtered token streams; a test
guards that property.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Optional

_SEPARATOR_RE = re.compile(r"[^0-9a-z]+")


def load_word_list(name: str) -> frozenset:
    text = resources.files("textlab").joinpath("data", name).read_text(
        encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines()
                     if line.strip())


def stopwords() -> frozenset:
    return load_word_list("stopwords.txt")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric run."""
    return [t for t in _SEPARATOR_RE.split(text.lower()) if t]


def preprocess(text: str, stop: frozenset) -> tuple:
    return tuple(t for t in tokenize(text) if t not in stop)


@dataclass(frozen=True)
class Document:
    source: str
    agent: str
    round: str
    text: str
    tokens: tuple

    def __post_init__(self):
        for token in self.tokens:
            if not token or _SEPARATOR_RE.search(token) or \
                    token != token.lower():
                raise ValueError(f"malformed token {token!r}")


@dataclass(frozen=True)
class Corpus:
    documents: tuple

    @classmethod
    def build(cls, rows: Iterable[Mapping], stop: Optional[frozenset] = None
              ) -> "Corpus":
        """Rows need source, agent, round, text; tokens are recomputed."""
        stop = stopwords() if stop is None else stop
        documents = []
        for row in rows:
            text = row["text"]
            documents.append(Document(
                source=row["source"], agent=row["agent"],
                round=str(row["round"]), text=text,
                tokens=preprocess(text, stop)))
        return cls(documents=tuple(documents))

    def sources(self) -> list[str]:
        return sorted({d.source for d in self.documents})

    def by_source(self) -> dict:
        grouped: dict = {source: [] for source in self.sources()}
        for document in self.documents:
            grouped[document.source].append(document)
        return grouped


def load_documents_csv(path, stop: Optional[frozenset] = None) -> Corpus:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        missing = {"source", "agent", "round", "text"} - set(
            reader.fieldnames or ())
        if missing:
            raise ValueError(f"documents CSV lacks columns: {sorted(missing)}")
        return Corpus.build(reader, stop=stop)
