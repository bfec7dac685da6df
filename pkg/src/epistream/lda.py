"""Latent topic model fitted by collapsed Gibbs sampling.

Used to expand a user's investigation context with related terms; the
corpus is small (alert-linked messages), so a plain per-token sampler is
fast enough and keeps the implementation transparent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_TOPICS = 20
DEFAULT_BETA = 0.01
DEFAULT_ITERATIONS = 500


@dataclass
class TopicModel:
    n_topics: int
    alpha: float
    beta: float
    iterations: int
    seed: int
    vocabulary: list[str] = field(default_factory=list)
    topic_word: np.ndarray = None  # K x V counts
    doc_topic: np.ndarray = None  # D x K counts
    assignments: list[np.ndarray] = field(default_factory=list)

    @property
    def vocab_index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.vocabulary)}

    def topic_terms(self, k: int, n: int = 20) -> list[str]:
        """Top-n terms of topic k, count-descending, ties alphabetical."""
        counts = self.topic_word[k]
        order = sorted(range(len(self.vocabulary)), key=lambda v: (-counts[v], self.vocabulary[v]))
        return [self.vocabulary[v] for v in order[:n] if counts[v] > 0]

    def topic_word_dist(self, k: int) -> np.ndarray:
        v = len(self.vocabulary)
        return (self.topic_word[k] + self.beta) / (self.topic_word[k].sum() + v * self.beta)

    def doc_topic_dist(self, d: int) -> np.ndarray:
        row = self.doc_topic[d]
        return (row + self.alpha) / (row.sum() + self.n_topics * self.alpha)


def fit_lda(
    corpus: Sequence[Sequence[str]],
    n_topics: int = DEFAULT_TOPICS,
    alpha: float = None,
    beta: float = DEFAULT_BETA,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
) -> TopicModel:
    """Collapsed Gibbs sampler over tokenized documents, seeded.

    alpha defaults to 50/K. Documents with no tokens are allowed and
    simply contribute nothing.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if n_topics < 2:
        raise ValueError("need at least 2 topics")
    vocabulary = sorted({w for doc in corpus for w in doc})
    if n_topics > len(vocabulary):
        raise ValueError(f"n_topics={n_topics} exceeds vocabulary size {len(vocabulary)}")
    if alpha is None:
        alpha = 50.0 / n_topics
    index = {w: i for i, w in enumerate(vocabulary)}
    docs = [np.array([index[w] for w in doc], dtype=np.int64) for doc in corpus]

    rng = np.random.RandomState(seed)
    n_docs, n_vocab = len(docs), len(vocabulary)
    topic_word = np.zeros((n_topics, n_vocab), dtype=np.int64)
    doc_topic = np.zeros((n_docs, n_topics), dtype=np.int64)
    topic_total = np.zeros(n_topics, dtype=np.int64)
    assignments = [rng.randint(n_topics, size=len(doc)) for doc in docs]
    for d, (doc, z) in enumerate(zip(docs, assignments)):
        for w, k in zip(doc, z):
            topic_word[k, w] += 1
            doc_topic[d, k] += 1
            topic_total[k] += 1

    vbeta = n_vocab * beta
    for _ in range(iterations):
        for d, (doc, z) in enumerate(zip(docs, assignments)):
            for i in range(len(doc)):
                w, k_old = doc[i], z[i]
                topic_word[k_old, w] -= 1
                doc_topic[d, k_old] -= 1
                topic_total[k_old] -= 1
                probs = (doc_topic[d] + alpha) * (topic_word[:, w] + beta) / (topic_total + vbeta)
                cdf = np.cumsum(probs)
                k_new = int(np.searchsorted(cdf, rng.random_sample() * cdf[-1]))
                z[i] = k_new
                topic_word[k_new, w] += 1
                doc_topic[d, k_new] += 1
                topic_total[k_new] += 1

    return TopicModel(
        n_topics=n_topics,
        alpha=alpha,
        beta=beta,
        iterations=iterations,
        seed=seed,
        vocabulary=vocabulary,
        topic_word=topic_word,
        doc_topic=doc_topic,
        assignments=assignments,
    )
