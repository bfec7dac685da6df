"""Hashing vectorizer and linear SVM for health-relevance classification.

Features are unigrams plus adjacent bigrams hashed into a fixed-size
space (no stored vocabulary, so the model survives unbounded streams).
Training is seeded stochastic subgradient descent on the L2-regularized
hinge loss.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ingest import Message

DEFAULT_DIM = 2**18

RELEVANT = "relevant"
IRRELEVANT = "irrelevant"


class TrainingError(Exception):
    """Raised for unusable training data (empty or single-class)."""


@dataclass(frozen=True)
class SparseVector:
    indices: tuple[int, ...]
    values: tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.values):
            raise ValueError("indices/values length mismatch")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.dim):
            raise ValueError("index out of range")

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


@dataclass
class Hyperparams:
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 5
    seed: int = 0


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    hyperparams: Hyperparams
    version: str = "untrained"
    train_digest: str = ""

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])

    def to_json(self) -> str:
        nz = np.nonzero(self.weights)[0]
        return json.dumps(
            {
                "dim": self.dim,
                "bias": self.bias,
                "weights": {int(i): float(self.weights[i]) for i in nz},
                "hyperparams": vars(self.hyperparams),
                "version": self.version,
                "train_digest": self.train_digest,
            }
        )

    @classmethod
    def from_json(cls, payload: str) -> "LinearModel":
        obj = json.loads(payload)
        w = np.zeros(obj["dim"])
        for i, v in obj["weights"].items():
            w[int(i)] = v
        return cls(
            weights=w,
            bias=obj["bias"],
            hyperparams=Hyperparams(**obj["hyperparams"]),
            version=obj.get("version", "unknown"),
            train_digest=obj.get("train_digest", ""),
        )


@dataclass
class LabeledMessage:
    message: Message
    label: str  # relevant | irrelevant
    source: str  # expert | crowd | temporary
    model_version: Optional[str] = None

    def __post_init__(self) -> None:
        if self.source == "temporary" and not self.model_version:
            raise ValueError("temporary labels must carry the producing model version")


@dataclass
class AccuracyReport:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0


def _hash_feature(feature: str, dim: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def vectorize(tokens: Sequence[str], dim: int = DEFAULT_DIM, bigrams: bool = True) -> SparseVector:
    """Unigram+bigram counts hashed into [0, dim), L2-normalized."""
    counts: dict[int, float] = {}
    features = list(tokens)
    if bigrams:
        features.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    for feat in features:
        idx = _hash_feature(feat, dim)
        counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        return SparseVector((), (), dim)
    indices = tuple(sorted(counts))
    values = np.array([counts[i] for i in indices])
    values = values / np.linalg.norm(values)
    return SparseVector(indices, tuple(float(v) for v in values), dim)


def _margin(weights: np.ndarray, bias: float, x: SparseVector) -> float:
    if x.indices:
        idx = np.fromiter(x.indices, dtype=np.int64)
        val = np.fromiter(x.values, dtype=np.float64)
        return float(weights[idx] @ val + bias)
    return float(bias)


def hinge_objective(weights: np.ndarray, bias: float, data, l2: float) -> float:
    """Full-batch L2-regularized hinge loss (used for monitoring, not training)."""
    losses = [max(0.0, 1.0 - y * _margin(weights, bias, x)) for x, y in data]
    return 0.5 * l2 * float(weights @ weights) + float(np.mean(losses))


def train_svm(data: Sequence[tuple[SparseVector, int]], hyperparams: Optional[Hyperparams] = None) -> LinearModel:
    """Seeded SGD on the hinge loss; learning rate decays as 1/sqrt(t).

    Labels are +/-1. Raises TrainingError on empty or single-class data.
    """
    h = hyperparams or Hyperparams()
    if not data:
        raise TrainingError("empty training set")
    labels = {y for _, y in data}
    if labels != {-1, 1}:
        raise TrainingError(f"need both classes, got labels {sorted(labels)}")
    dim = data[0][0].dim
    if any(x.dim != dim for x, _ in data):
        raise TrainingError("inconsistent vector dimensionality")
    rng = np.random.RandomState(h.seed)
    # w is kept as scale * base so the L2 decay is O(1) per step
    base = np.zeros(dim)
    scale = 1.0
    bias = 0.0
    t = 0
    order = np.arange(len(data))
    cached = [
        (np.fromiter(x.indices, dtype=np.int64), np.fromiter(x.values, dtype=np.float64), y)
        for x, y in data
    ]
    for _ in range(h.epochs):
        rng.shuffle(order)
        for j in order:
            t += 1
            eta = h.learning_rate / math.sqrt(t)
            idx, val, y = cached[j]
            margin = scale * float(base[idx] @ val) + bias if idx.size else bias
            scale *= 1.0 - eta * h.l2
            if scale < 1e-9:
                base *= scale
                scale = 1.0
            if y * margin < 1.0:
                if idx.size:
                    base[idx] += (eta * y / scale) * val
                bias += eta * y
    digest = hashlib.blake2b(
        b"|".join(f"{x.indices}{x.values}{y}".encode() for x, y in data), digest_size=8
    ).hexdigest()
    return LinearModel(
        weights=scale * base, bias=bias, hyperparams=h, version=f"svm-{digest}", train_digest=digest
    )


def predict(model: LinearModel, x: SparseVector) -> tuple[str, float]:
    """(label, margin); margin exactly zero classifies as irrelevant."""
    if x.dim != model.dim:
        raise ValueError(f"dimension mismatch: vector {x.dim} vs model {model.dim}")
    margin = _margin(model.weights, model.bias, x)
    return (RELEVANT if margin > 0 else IRRELEVANT, margin)


def evaluate_accuracy(model: LinearModel, test: Sequence[LabeledMessage], tokens_of=None) -> AccuracyReport:
    """Confusion counts of model predictions against the given labels."""
    from .ingest import tokenize

    if not test:
        raise ValueError("empty test set")
    if tokens_of is None:
        tokens_of = lambda m: tokenize(m.text)
    tp = tn = fp = fn = 0
    for lm in test:
        label, _ = predict(model, vectorize(tokens_of(lm.message), dim=model.dim))
        if lm.label == RELEVANT:
            if label == RELEVANT:
                tp += 1
            else:
                fn += 1
        else:
            if label == RELEVANT:
                fp += 1
            else:
                tn += 1
    return AccuracyReport(tp=tp, tn=tn, fp=fp, fn=fn)
