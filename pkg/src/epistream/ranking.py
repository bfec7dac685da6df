"""Personalized ranking of alert-linked messages.

A user context (time interval, medical conditions, locations) is
expanded with LDA topic terms and co-occurring hashtags; candidates are
retrieved by term match, described by five binary features, and ranked
by a linear function trained with stochastic pairwise descent on
relevance judgments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .classifier import Hyperparams, LinearModel, SparseVector, _margin
from .ingest import Gazetteer, Message, tokenize
from .labeling import LabelTask, WorkerRecord, aggregate_labels
from .lda import TopicModel

FEATURE_NAMES = ("mc", "loc", "hashtag", "cc", "url")

_STOPWORDS = frozenset(
    """a an and are as at be but by for from has have i in is it its me my of on or rt so
    that the this to via was we were will with you your amp http https""".split()
)


@dataclass(frozen=True)
class UserContext:
    start: date
    end: date
    conditions: frozenset[str]
    locations: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ValueError("empty time interval")
        if not self.conditions:
            raise ValueError("at least one medical condition required")


@dataclass
class ExpandedContext:
    base: UserContext
    extra_conditions: set[str] = field(default_factory=set)
    extra_locations: set[str] = field(default_factory=set)
    complementary_terms: set[str] = field(default_factory=set)
    hashtags: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.extra_conditions & self.base.conditions:
            raise ValueError("extra conditions overlap base")
        if self.extra_locations & self.base.locations:
            raise ValueError("extra locations overlap base")

    def all_conditions(self) -> set[str]:
        return set(self.base.conditions) | self.extra_conditions

    def all_locations(self) -> set[str]:
        return set(self.base.locations) | self.extra_locations


@dataclass(frozen=True)
class RankFeatureVector:
    mc: bool
    loc: bool
    hashtag: bool
    cc: bool
    url: bool

    def as_sparse(self) -> SparseVector:
        flags = (self.mc, self.loc, self.hashtag, self.cc, self.url)
        idx = tuple(i for i, f in enumerate(flags) if f)
        return SparseVector(idx, tuple(1.0 for _ in idx), dim=5)

    def masked(self, keep: Sequence[str]) -> "RankFeatureVector":
        kept = set(keep)
        return RankFeatureVector(
            mc=self.mc and "mc" in kept,
            loc=self.loc and "loc" in kept,
            hashtag=self.hashtag and "hashtag" in kept,
            cc=self.cc and "cc" in kept,
            url=self.url and "url" in kept,
        )


def _condition_surfaces(condition_ids: Iterable[str], gazetteer: Gazetteer) -> set[str]:
    terms = set()
    for cid in condition_ids:
        terms.add(cid)
        terms |= gazetteer.surfaces_for(cid)
    return terms


def _location_surfaces(codes: Iterable[str], gazetteer: Gazetteer) -> set[str]:
    terms = set()
    for code in codes:
        terms |= gazetteer.surfaces_for(code)
    return terms


def expand_context(
    context: UserContext,
    topic_model: Optional[TopicModel],
    corpus: Sequence[Message],
    condition_gazetteer: Gazetteer,
    location_gazetteer: Gazetteer,
    top_n: int = 20,
    min_cooccur: int = 3,
) -> ExpandedContext:
    """Grow the context with topic terms and co-occurring hashtags.

    Topics whose top terms intersect the base condition/location terms
    contribute their remaining top terms, split into conditions,
    locations, and complementary terms by gazetteer lookup. Hashtags
    seen together with a base condition term in at least ``min_cooccur``
    messages are added. Base terms are never removed. Without a topic
    model the expansion is hashtags only.
    """
    base_condition_terms = _condition_surfaces(context.conditions, condition_gazetteer)
    base_location_terms = _location_surfaces(context.locations, location_gazetteer)
    seed_terms = base_condition_terms | base_location_terms

    expanded = ExpandedContext(base=context)
    for k in range(topic_model.n_topics if topic_model is not None else 0):
        top = topic_model.topic_terms(k, top_n)
        if not seed_terms & set(top):
            continue
        for term in top:
            if term in seed_terms or term in _STOPWORDS:
                continue
            cid = condition_gazetteer.entries.get(term)
            if cid is not None:
                if cid not in context.conditions:
                    expanded.extra_conditions.add(cid)
                continue
            code = location_gazetteer.entries.get(term)
            if code is not None:
                if code not in context.locations:
                    expanded.extra_locations.add(code)
                continue
            expanded.complementary_terms.add(term)

    cooccur: dict[str, int] = {}
    for message in corpus:
        tokens = {t.lstrip("#@") for t in tokenize(message.text)}
        if not tokens & base_condition_terms:
            continue
        for tag in message.hashtags:
            cooccur[tag] = cooccur.get(tag, 0) + 1
    expanded.hashtags = {tag for tag, n in cooccur.items() if n >= min_cooccur}
    return expanded


class MessageIndex:
    """Token-level inverted index with phrase verification."""

    def __init__(self, messages: Sequence[Message]):
        self.messages = {m.id: m for m in messages}
        self.tokens: dict[str, list[str]] = {
            m.id: [t.lstrip("#@") for t in tokenize(m.text)] for m in messages
        }
        self.index: dict[str, set[str]] = {}
        for mid, toks in self.tokens.items():
            for tok in toks:
                self.index.setdefault(tok, set()).add(mid)

    def match_term(self, term: str) -> set[str]:
        words = term.split()
        candidates = self.index.get(words[0], set())
        for w in words[1:]:
            candidates = candidates & self.index.get(w, set())
        if len(words) == 1:
            return set(candidates)
        out = set()
        for mid in candidates:
            toks = self.tokens[mid]
            for i in range(len(toks) - len(words) + 1):
                if toks[i : i + len(words)] == words:
                    out.add(mid)
                    break
        return out


def retrieve_candidates(
    expanded: ExpandedContext,
    index: MessageIndex,
    interval: Optional[tuple[date, date]] = None,
    condition_gazetteer: Optional[Gazetteer] = None,
    location_gazetteer: Optional[Gazetteer] = None,
) -> list[Message]:
    """Messages inside the interval matching at least one expanded term."""
    from .ingest import default_condition_gazetteer, default_location_gazetteer

    cond_gaz = condition_gazetteer or default_condition_gazetteer()
    loc_gaz = location_gazetteer or default_location_gazetteer()
    start, end = interval if interval else (expanded.base.start, expanded.base.end)
    terms = _condition_surfaces(expanded.all_conditions(), cond_gaz)
    terms |= _location_surfaces(expanded.all_locations(), loc_gaz)
    terms |= expanded.complementary_terms
    terms |= expanded.hashtags
    matched: set[str] = set()
    for term in terms:
        matched |= index.match_term(term)
    out = []
    for mid in matched:
        m = index.messages[mid]
        if start <= m.timestamp.date() <= end:
            out.append(m)
    return sorted(out, key=lambda m: m.id)


def extract_rank_features(
    message: Message,
    expanded: ExpandedContext,
    condition_gazetteer: Optional[Gazetteer] = None,
    location_gazetteer: Optional[Gazetteer] = None,
) -> RankFeatureVector:
    """Five presence flags: condition, location, hashtag, complementary, URL."""
    from .ingest import default_condition_gazetteer, default_location_gazetteer

    cond_gaz = condition_gazetteer or default_condition_gazetteer()
    loc_gaz = location_gazetteer or default_location_gazetteer()
    tokens = [t.lstrip("#@") for t in tokenize(message.text)]
    grams = set(tokens)
    for n in (2, 3, 4):
        grams.update(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    cond_terms = _condition_surfaces(expanded.all_conditions(), cond_gaz)
    loc_terms = _location_surfaces(expanded.all_locations(), loc_gaz)
    return RankFeatureVector(
        mc=bool(grams & cond_terms),
        loc=bool(grams & loc_terms),
        hashtag=bool(expanded.hashtags & message.hashtags),
        cc=bool(grams & expanded.complementary_terms),
        url=message.urls_present,
    )


@dataclass
class JudgedCandidate:
    message: Message
    features: RankFeatureVector
    relevance: int  # 1 relevant, 0 irrelevant


def pairwise_hinge(model: LinearModel, judged: Sequence[JudgedCandidate]) -> float:
    """Mean hinge loss over all (relevant, irrelevant) pairs."""
    pos = [j.features.as_sparse() for j in judged if j.relevance == 1]
    neg = [j.features.as_sparse() for j in judged if j.relevance == 0]
    if not pos or not neg:
        raise ValueError("need both relevance values")
    total = 0.0
    for xp in pos:
        sp = _margin(model.weights, 0.0, xp)
        for xn in neg:
            total += max(0.0, 1.0 - (sp - _margin(model.weights, 0.0, xn)))
    return total / (len(pos) * len(neg))


def train_ranker(
    judged: Sequence[JudgedCandidate], hyperparams: Optional[Hyperparams] = None
) -> LinearModel:
    """Stochastic pairwise descent: hinge steps on sampled score differences.

    The bias cancels in pairwise differences and stays zero.
    """
    h = hyperparams or Hyperparams(learning_rate=0.5, l2=1e-3, epochs=20)
    pos = [j.features.as_sparse() for j in judged if j.relevance == 1]
    neg = [j.features.as_sparse() for j in judged if j.relevance == 0]
    if not pos or not neg:
        raise ValueError("need both relevance values to form pairs")
    rng = np.random.RandomState(h.seed)
    w = np.zeros(5)
    steps = max(1, h.epochs * len(judged))
    for t in range(1, steps + 1):
        eta = h.learning_rate / math.sqrt(t)
        xp = pos[rng.randint(len(pos))]
        xn = neg[rng.randint(len(neg))]
        diff = np.zeros(5)
        for i, v in zip(xp.indices, xp.values):
            diff[i] += v
        for i, v in zip(xn.indices, xn.values):
            diff[i] -= v
        w *= 1.0 - eta * h.l2
        if float(w @ diff) < 1.0:
            w += eta * diff
    return LinearModel(weights=w, bias=0.0, hyperparams=h, version="ranker")


def rank_candidates(model: LinearModel, judged: Sequence[JudgedCandidate]) -> list[JudgedCandidate]:
    scored = [(_margin(model.weights, model.bias, j.features.as_sparse()), j) for j in judged]
    return [j for _, j in sorted(scored, key=lambda sj: (-sj[0], sj[1].message.id))]


@dataclass
class RankEvaluation:
    ranked: list[JudgedCandidate]
    p_at_n: float
    truncated: bool


def rank_and_evaluate(model: LinearModel, judged: Sequence[JudgedCandidate], n: int) -> RankEvaluation:
    """Sort by score (ties by message id) and compute precision at n.

    When fewer than n candidates exist the prefix is scored and the
    result flagged as truncated.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ranked = rank_candidates(model, judged)
    prefix = ranked[:n]
    truncated = len(prefix) < n
    denom = len(prefix) if truncated else n
    p = sum(1 for j in prefix if j.relevance == 1) / denom if denom else 0.0
    return RankEvaluation(ranked=ranked, p_at_n=p, truncated=truncated)


def tfidf_rank(
    judged: Sequence[JudgedCandidate],
    query_terms: set[str],
    corpus_tokens: Mapping[str, list[str]],
) -> list[JudgedCandidate]:
    """Baseline: cosine similarity between message tf-idf vector and query."""
    n_docs = len(corpus_tokens)
    df: dict[str, int] = {}
    for toks in corpus_tokens.values():
        for tok in set(toks):
            df[tok] = df.get(tok, 0) + 1
    idf = {tok: math.log(n_docs / d) for tok, d in df.items()}

    def score(message: Message) -> float:
        toks = corpus_tokens[message.id]
        if not toks:
            return 0.0
        tf: dict[str, int] = {}
        for tok in toks:
            tf[tok] = tf.get(tok, 0) + 1
        vec = {tok: c * idf.get(tok, 0.0) for tok, c in tf.items()}
        norm = math.sqrt(sum(v * v for v in vec.values()))
        if norm == 0.0:
            return 0.0
        return sum(vec.get(q, 0.0) for q in query_terms) / norm

    return [
        j
        for _, j in sorted(
            ((score(j.message), j) for j in judged), key=lambda sj: (-sj[0], sj[1].message.id)
        )
    ]


def cross_validate_p_at_n(
    judged: Sequence[JudgedCandidate],
    n: int = 10,
    mode: str = "full",
    partitions: int = 10,
    train_fraction: float = 0.8,
    seed: int = 0,
    query_terms: Optional[set[str]] = None,
) -> list[float]:
    """P@n over seeded 80/20 partitions for one ranking mode.

    Modes: full (all five features), mcl (condition+location), mc
    (condition only), tfidf (unsupervised baseline).
    """
    masks = {"full": FEATURE_NAMES, "mcl": ("mc", "loc"), "mc": ("mc",)}
    if mode not in masks and mode != "tfidf":
        raise ValueError(f"unknown mode {mode!r}")
    corpus_tokens = {j.message.id: [t.lstrip("#@") for t in tokenize(j.message.text)] for j in judged}
    rng = np.random.RandomState(seed)
    items = list(judged)
    scores = []
    for _ in range(partitions):
        order = rng.permutation(len(items))
        cut = int(round(train_fraction * len(items)))
        train = [items[i] for i in order[:cut]]
        test = [items[i] for i in order[cut:]]
        if mode == "tfidf":
            ranked = tfidf_rank(test, query_terms or set(), corpus_tokens)
            prefix = ranked[:n]
            denom = min(n, len(prefix)) or 1
            scores.append(sum(1 for j in prefix if j.relevance == 1) / denom)
            continue
        keep = masks[mode]
        masked_train = [
            JudgedCandidate(j.message, j.features.masked(keep), j.relevance) for j in train
        ]
        masked_test = [JudgedCandidate(j.message, j.features.masked(keep), j.relevance) for j in test]
        model = train_ranker(masked_train, Hyperparams(learning_rate=0.5, l2=1e-3, epochs=20, seed=seed))
        scores.append(rank_and_evaluate(model, masked_test, n).p_at_n)
    return scores


def resolve_judgments(
    raw: Mapping[str, Sequence[tuple[str, int]]], messages: Mapping[str, Message]
) -> dict[str, int]:
    """Majority-vote relevance per message via the labeling aggregation
    machinery (agreement threshold 0.5)."""
    tasks = []
    workers: dict[str, WorkerRecord] = {}
    for mid, votes in raw.items():
        task = LabelTask(task_id=mid, message=messages[mid], required_judgments=1)
        for worker_id, rel in votes:
            from .labeling import record_judgment

            workers.setdefault(worker_id, WorkerRecord(worker_id=worker_id))
            workers[worker_id] = record_judgment(task, workers[worker_id], str(rel))
        tasks.append(task)
    resolved, _ = aggregate_labels(tasks, workers, agreement_threshold=0.5)
    return {lm.message.id: int(lm.label) for lm in resolved}
