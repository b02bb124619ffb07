"""Two-topic LDA assignment over the corpus.

The model is scikit-learn's batch LDA with a fixed random_state, so a
given corpus and seed always produce identical assignments. Documents
whose tokens were entirely filtered away still receive an assignment (the
topic posterior is uniform; argmax picks topic 0).
"""

from __future__ import annotations

from dataclasses import dataclass

from sklearn.decomposition import LatentDirichletAllocation
from sklearn.feature_extraction.text import CountVectorizer

from .corpus import Corpus

N_TOPICS = 2
TOP_TERMS = 5


@dataclass(frozen=True)
class TopicAssignment:
    assignments: tuple           # topic index per document, corpus order
    proportions: dict            # source -> {topic: share of that source}
    top_terms: dict              # topic -> most probable terms


def lda_two_topics(corpus: Corpus, seed: int) -> TopicAssignment:
    if not corpus.documents:
        raise ValueError("empty corpus")
    vectorizer = CountVectorizer(analyzer=lambda tokens: tokens)
    matrix = vectorizer.fit_transform(
        [document.tokens for document in corpus.documents])
    if matrix.sum() == 0:
        raise ValueError("corpus has no usable tokens")

    lda = LatentDirichletAllocation(n_components=N_TOPICS, random_state=seed)
    weights = lda.fit_transform(matrix)
    assignments = tuple(int(row.argmax()) for row in weights)

    vocabulary = vectorizer.get_feature_names_out()
    top_terms = {
        topic: tuple(vocabulary[i]
                     for i in component.argsort()[::-1][:TOP_TERMS])
        for topic, component in enumerate(lda.components_)
    }

    picks_by_source = {}
    for document, topic in zip(corpus.documents, assignments):
        picks_by_source.setdefault(document.source, []).append(topic)
    proportions = {
        source: {topic: picks.count(topic) / len(picks)
                 for topic in range(N_TOPICS)}
        for source, picks in picks_by_source.items()
    }
    return TopicAssignment(assignments=assignments, proportions=proportions,
                           top_terms=top_terms)
