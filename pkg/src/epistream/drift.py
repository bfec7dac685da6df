"""Feature-change detection with a virtual classifier, novelty scoring,
and selection of messages for human labeling.

The virtual classifier separates "old" (already labeled) from "new"
(incoming) vectors; high cross-validated separability is evidence that
the term distribution has shifted. Messages far on the new side of the
hyperplane are the ones worth sending to annotators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .classifier import (
    Hyperparams,
    LinearModel,
    SparseVector,
    _margin,
    train_svm,
)
from .ingest import Message


@dataclass
class DriftParams:
    q: float = 0.05
    alpha: float = 0.01
    cv_folds: int = 5

    def __post_init__(self) -> None:
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must be in (0,1], got {self.q}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0,1], got {self.alpha}")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")


@dataclass
class DriftVerdict:
    changed: bool
    vc_accuracy: float
    p_value: float
    n_eval: int


def _vc_hyperparams(seed: int) -> Hyperparams:
    # the virtual classifier must actually fit the old/new boundary;
    # a lightly-trained model collapses toward a constant predictor
    return Hyperparams(learning_rate=0.5, l2=1e-4, epochs=15, seed=seed)


def _balanced(
    old: Sequence[SparseVector], new: Sequence[SparseVector], rng: np.random.RandomState
) -> tuple[list[SparseVector], list[SparseVector]]:
    """Downsample the larger side to the smaller side's size (seeded)."""
    m = min(len(old), len(new))
    old_list, new_list = list(old), list(new)
    if len(old_list) > m:
        old_list = [old_list[i] for i in rng.choice(len(old_list), size=m, replace=False)]
    if len(new_list) > m:
        new_list = [new_list[i] for i in rng.choice(len(new_list), size=m, replace=False)]
    return old_list, new_list


def train_virtual_classifier(
    old: Sequence[SparseVector],
    new: Sequence[SparseVector],
    seed: int = 0,
    hyperparams: Optional[Hyperparams] = None,
) -> LinearModel:
    """Binary SVM with old = -1, new = +1, after class balancing."""
    if not old or not new:
        raise ValueError("both the old and the new set must be nonempty")
    rng = np.random.RandomState(seed)
    old_b, new_b = _balanced(old, new, rng)
    h = hyperparams or _vc_hyperparams(seed)
    data = [(x, -1) for x in old_b] + [(x, 1) for x in new_b]
    return train_svm(data, h)


def novelty_score(vc: LinearModel, x: SparseVector) -> float:
    """Signed distance to the hyperplane; positive means on the new side."""
    w_norm = float(np.linalg.norm(vc.weights))
    if w_norm == 0.0:
        return 0.0
    return _margin(vc.weights, vc.bias, x) / w_norm


def _stratified_folds(n: int, k: int, rng: np.random.RandomState) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i::k] for i in range(k)]


def detect_feature_change(
    old: Sequence[SparseVector],
    new: Sequence[SparseVector],
    params: DriftParams,
    seed: int = 0,
) -> DriftVerdict:
    """Cross-validated virtual-classifier accuracy tested against chance.

    The p-value is the exact one-sided binomial tail
    P[Bin(n_eval, 0.5) >= pooled correct]; change is declared when it
    falls below alpha.
    """
    k = params.cv_folds
    if len(old) < k or len(new) < k:
        raise ValueError(f"need at least cv_folds={k} vectors on each side")
    rng = np.random.RandomState(seed)
    old_b, new_b = _balanced(old, new, rng)
    m = len(old_b)
    # identical fold structure on both classes keeps folds stratified
    folds = _stratified_folds(m, k, rng)
    correct = 0
    n_eval = 0
    for f in range(k):
        test_idx = set(folds[f].tolist())
        train = [(old_b[i], -1) for i in range(m) if i not in test_idx]
        train += [(new_b[i], 1) for i in range(m) if i not in test_idx]
        model = train_svm(train, _vc_hyperparams(seed))
        for i in folds[f]:
            n_eval += 2
            if _margin(model.weights, model.bias, old_b[i]) <= 0:
                correct += 1
            if _margin(model.weights, model.bias, new_b[i]) > 0:
                correct += 1
    p_value = float(stats.binom.sf(correct - 1, n_eval, 0.5))
    return DriftVerdict(
        changed=p_value < params.alpha,
        vc_accuracy=correct / n_eval,
        p_value=p_value,
        n_eval=n_eval,
    )


def select_for_labeling(
    batch: Sequence[Message],
    scores: Optional[Sequence[float]],
    q: float,
    strategy: str,
    seed: int = 0,
) -> list[Message]:
    """Pick ceil(q * |batch|) messages: none, seeded random, or top-novelty.

    Novelty ties break by ascending message id.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0,1], got {q}")
    if strategy == "none":
        return []
    if not batch:
        return []
    k = math.ceil(q * len(batch))
    if strategy == "random":
        rng = np.random.RandomState(seed)
        chosen = set(rng.choice(len(batch), size=k, replace=False).tolist())
        return [m for i, m in enumerate(batch) if i in chosen]
    if strategy == "novelty":
        if scores is None or len(scores) != len(batch):
            raise ValueError("novelty strategy needs one score per message")
        ranked = sorted(zip(batch, scores), key=lambda ms: (-ms[1], ms[0].id))
        return [m for m, _ in ranked[:k]]
    raise ValueError(f"unknown strategy: {strategy!r}")


# ----------------------------------------------------------------------
# Weekly replay harness: drives the adaptive classifier over a stream of
# weekly batches under a feature-change handling strategy.


@dataclass
class WeeklyBatch:
    week: int
    messages: list[Message]
    gold: dict[str, str]  # message id -> relevant/irrelevant


@dataclass
class ReplayReport:
    strategy: str
    weekly_accuracy: list[float] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)


def replay_weekly_stream(
    initial: Sequence[tuple[SparseVector, int]],
    batches: Sequence[WeeklyBatch],
    strategy: str,
    params: DriftParams,
    vectorizer: Callable[[Message], SparseVector],
    seed: int = 0,
    cumulative: bool = True,
    hyperparams: Optional[Hyperparams] = None,
) -> ReplayReport:
    """Classify each weekly batch, then retrain per the selection strategy.

    Classification always uses the model current at the start of the week;
    selected messages join the training store with their gold labels
    (standing in for the human annotators) before the next week.
    """
    h = hyperparams or Hyperparams(learning_rate=0.5, l2=1e-4, epochs=10, seed=seed)
    store = list(initial)
    model = train_svm(store, h)
    report = ReplayReport(strategy=strategy)
    for batch in batches:
        vecs = [vectorizer(m) for m in batch.messages]
        correct = 0
        for m, x in zip(batch.messages, vecs):
            margin = _margin(model.weights, model.bias, x)
            label = "relevant" if margin > 0 else "irrelevant"
            if label == batch.gold[m.id]:
                correct += 1
        report.weekly_accuracy.append(correct / len(batch.messages) if batch.messages else 1.0)

        if strategy == "none":
            report.audit.append({"week": batch.week, "n_selected": 0})
            continue
        scores = None
        audit: dict = {"week": batch.week}
        if strategy == "novelty":
            old_vecs = [x for x, _ in store]
            vc = train_virtual_classifier(old_vecs, vecs, seed=seed)
            scores = [novelty_score(vc, x) for x in vecs]
            try:
                verdict = detect_feature_change(old_vecs, vecs, params, seed=seed)
                audit.update(
                    vc_accuracy=verdict.vc_accuracy,
                    p_value=verdict.p_value,
                    changed=verdict.changed,
                )
            except ValueError:
                pass  # sides smaller than cv_folds: selection still runs
        selected = select_for_labeling(batch.messages, scores, params.q, strategy, seed=seed)
        audit["n_selected"] = len(selected)
        report.audit.append(audit)
        by_id = {m.id: x for m, x in zip(batch.messages, vecs)}
        new_examples = [
            (by_id[m.id], 1 if batch.gold[m.id] == "relevant" else -1) for m in selected
        ]
        if cumulative:
            store.extend(new_examples)
        else:
            store = list(initial) + new_examples
        if new_examples:
            model = train_svm(store, h)
    return report
