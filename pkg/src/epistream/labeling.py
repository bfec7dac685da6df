"""Human-in-the-loop label queue: gold questions, worker trust, majority
aggregation, and reconciliation of temporary machine labels.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .classifier import LabeledMessage
from .ingest import Message

OPEN = "open"
RESOLVED = "resolved"
DISCARDED = "discarded"

DEFAULT_TRUST_THRESHOLD = 0.8
DEFAULT_AGREEMENT_THRESHOLD = 0.65
DEFAULT_MIN_WORKERS = 3


@dataclass
class Judgment:
    worker_id: str
    label: str
    timestamp: datetime


@dataclass
class LabelTask:
    task_id: str
    message: Message
    is_gold: bool = False
    gold_label: Optional[str] = None
    required_judgments: int = DEFAULT_MIN_WORKERS
    judgments: list[Judgment] = field(default_factory=list)
    status: str = OPEN
    resolved_label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.is_gold and self.gold_label is None:
            raise ValueError("gold task without gold label")


@dataclass(frozen=True)
class WorkerRecord:
    worker_id: str
    gold_seen: int = 0
    gold_correct: int = 0
    trusted: bool = True
    is_expert: bool = False

    def __post_init__(self) -> None:
        if self.gold_correct > self.gold_seen:
            raise ValueError("gold_correct cannot exceed gold_seen")


@dataclass
class ReconcileResult:
    flipped: int
    unknown: int
    retrain: bool


def create_batch(
    messages: Sequence[Message],
    gold_pool: Sequence[tuple[Message, str]],
    gold_ratio: float = 0.1,
    min_workers: int = DEFAULT_MIN_WORKERS,
    seed: int = 0,
    batch_id: str = "batch",
) -> list[LabelTask]:
    """Interleave gold questions among real tasks at seeded random positions."""
    if not 0.0 <= gold_ratio <= 0.5:
        raise ValueError("gold_ratio must be in [0, 0.5]")
    if min_workers < 1:
        raise ValueError("min_workers must be >= 1")
    n_gold = int(round(gold_ratio * len(messages)))
    if n_gold > 0 and not gold_pool:
        raise ValueError("gold_ratio > 0 requires a nonempty gold pool")
    rng = np.random.RandomState(seed)
    tasks: list[LabelTask] = [
        LabelTask(task_id="", message=m, required_judgments=min_workers) for m in messages
    ]
    for _ in range(n_gold):
        gm, gl = gold_pool[rng.randint(len(gold_pool))]
        pos = rng.randint(len(tasks) + 1)
        tasks.insert(
            pos,
            LabelTask(
                task_id="",
                message=gm,
                is_gold=True,
                gold_label=gl,
                required_judgments=min_workers,
            ),
        )
    for i, task in enumerate(tasks):
        task.task_id = f"{batch_id}-{i:04d}"
    return tasks


def compute_trust(worker: WorkerRecord, threshold: float = DEFAULT_TRUST_THRESHOLD) -> WorkerRecord:
    """Trusted iff no gold seen yet (cold start) or gold accuracy >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    trusted = worker.gold_seen == 0 or worker.gold_correct / worker.gold_seen >= threshold
    return replace(worker, trusted=trusted)


def record_judgment(
    task: LabelTask,
    worker: WorkerRecord,
    label: str,
    timestamp: Optional[datetime] = None,
    trust_threshold: float = DEFAULT_TRUST_THRESHOLD,
) -> WorkerRecord:
    """Append a judgment and, on gold tasks, update the worker's trust stats."""
    if task.status != OPEN:
        raise ValueError(f"task {task.task_id} is {task.status}")
    ts = timestamp or datetime.now(timezone.utc)
    task.judgments.append(Judgment(worker_id=worker.worker_id, label=label, timestamp=ts))
    if task.is_gold:
        worker = replace(
            worker,
            gold_seen=worker.gold_seen + 1,
            gold_correct=worker.gold_correct + (1 if label == task.gold_label else 0),
        )
        worker = compute_trust(worker, trust_threshold)
    return worker


def _trusted_judgments(task: LabelTask, workers: Mapping[str, WorkerRecord]) -> list[Judgment]:
    out = []
    for j in task.judgments:
        rec = workers.get(j.worker_id)
        if rec is None or rec.trusted:
            out.append(j)
    return out


def aggregate_labels(
    tasks: Iterable[LabelTask],
    workers: Mapping[str, WorkerRecord],
    agreement_threshold: float = DEFAULT_AGREEMENT_THRESHOLD,
) -> tuple[list[LabeledMessage], int]:
    """Resolve tasks whose trusted majority share strictly exceeds the threshold.

    Gold tasks resolve to their known label but are not emitted as training
    labels. An expert judgment resolves a task by itself. Tasks with enough
    trusted judgments but no sufficient majority are discarded.
    """
    resolved: list[LabeledMessage] = []
    discarded = 0
    for task in tasks:
        if task.status != OPEN:
            continue
        expert = next(
            (
                j
                for j in task.judgments
                if workers.get(j.worker_id) is not None and workers[j.worker_id].is_expert
            ),
            None,
        )
        if expert is not None:
            task.status = RESOLVED
            task.resolved_label = expert.label
            if not task.is_gold:
                resolved.append(LabeledMessage(task.message, expert.label, source="expert"))
            continue
        trusted = _trusted_judgments(task, workers)
        if len(trusted) < task.required_judgments:
            continue
        if task.is_gold:
            task.status = RESOLVED
            task.resolved_label = task.gold_label
            continue
        shares = Counter(j.label for j in trusted)
        label, count = max(shares.items(), key=lambda kv: (kv[1], kv[0]))
        if count / len(trusted) > agreement_threshold:
            task.status = RESOLVED
            task.resolved_label = label
            resolved.append(LabeledMessage(task.message, label, source="crowd"))
        else:
            task.status = DISCARDED
            discarded += 1
    return resolved, discarded


def reconcile_temporary(
    resolved: Sequence[LabeledMessage], store: dict[str, LabeledMessage]
) -> ReconcileResult:
    """Replace temporary labels in the store with crowd/expert ones.

    Returns the flip count; a retrain is due whenever any label flipped.
    Resolved messages missing from the store are counted as unknown.
    """
    flipped = 0
    unknown = 0
    for lm in resolved:
        current = store.get(lm.message.id)
        if current is None:
            unknown += 1
            continue
        if current.source == "temporary" and current.label != lm.label:
            flipped += 1
        store[lm.message.id] = lm
    return ReconcileResult(flipped=flipped, unknown=unknown, retrain=flipped > 0)


def percent_agreement(labels_a: Mapping[str, str], labels_b: Mapping[str, str]) -> float:
    """Agreements over units judged by both sides, as a percentage."""
    units = set(labels_a) & set(labels_b)
    if not units:
        raise ValueError("no commonly judged units")
    agreements = sum(1 for u in units if labels_a[u] == labels_b[u])
    return 100.0 * agreements / len(units)
