"""Event-sourced flat-file storage for messages, labels, models, alerts,
and user contexts.

Every mutation is one appended JSON line; replaying the journals from an
empty directory reproduces the in-memory state exactly (task resolution
is re-derived deterministically from judgments during replay). A torn
trailing line -- the signature of a crash mid-append -- is ignored on
recovery; batches are single lines, so a batch is either fully visible
or not at all.
"""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from .classifier import LinearModel
from .ingest import Message
from .labeling import (
    DEFAULT_AGREEMENT_THRESHOLD,
    DEFAULT_TRUST_THRESHOLD,
    OPEN,
    RESOLVED,
    LabelTask,
    WorkerRecord,
    aggregate_labels,
    record_judgment,
)
from .pipeline import AnnotatedMessage
from .surveillance import Alert

STORE_FORMAT = 1


class StoreError(Exception):
    pass


class StoreCorruption(StoreError):
    """A non-trailing journal line failed to parse."""


class ConflictError(StoreError):
    """Operation raced with an already-final state (e.g. resolved task)."""


class NotFoundError(StoreError):
    pass


class SimulatedCrash(RuntimeError):
    """Raised by the crash-injection hook used in recovery tests."""


def _message_record(a: AnnotatedMessage, label: str, label_source: str, model_version: str) -> dict:
    m = a.message
    rec = {
        "id": m.id,
        "ts": m.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "text": m.text,
        "conditions": a.condition_ids,
        "country": a.country,
        "verdict": a.decision.verdict,
        "label": label,
        "label_source": label_source,
        "model_version": model_version,
    }
    if m.geo is not None:
        rec["lat"], rec["lon"] = m.geo
    if m.profile_location:
        rec["profile_location"] = m.profile_location
    return rec


def record_to_message(rec: dict) -> Message:
    geo = (rec["lat"], rec["lon"]) if "lat" in rec else None
    return Message.from_fields(
        rec["id"],
        datetime.fromisoformat(rec["ts"].replace("Z", "+00:00")),
        rec["text"],
        geo=geo,
        profile_location=rec.get("profile_location"),
    )


class Store:
    """Single-writer store rooted at a directory; readers share the instance."""

    def __init__(
        self,
        root: Path,
        durable: bool = True,
        segment_max_lines: int = 2000,
        agreement_threshold: float = DEFAULT_AGREEMENT_THRESHOLD,
        trust_threshold: float = DEFAULT_TRUST_THRESHOLD,
    ):
        self.root = Path(root)
        self.durable = durable
        self.segment_max_lines = segment_max_lines
        self.agreement_threshold = agreement_threshold
        self.trust_threshold = trust_threshold
        self._fail_after_bytes: Optional[int] = None
        self._bytes_written = 0

        for sub in ("messages", "labels", "alerts", "contexts", "models", "drift"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        manifest = self.root / "manifest.json"
        if not manifest.exists():
            manifest.write_text(json.dumps({"format": STORE_FORMAT}), encoding="utf-8")

        self.messages: dict[str, dict] = {}
        self.tasks: dict[str, LabelTask] = {}
        self.workers: dict[str, WorkerRecord] = {}
        self.alerts: list[dict] = []
        self.contexts: dict[str, dict] = {}
        self.retrain_log: list[dict] = []
        self._segment_index = 0
        self._segment_lines = 0
        self._replay()

    # ------------------------------------------------------------------
    # journal plumbing

    def set_crash_after_bytes(self, n: Optional[int]) -> None:
        """Test hook: the writer dies (torn write) after n more bytes."""
        self._fail_after_bytes = n
        self._bytes_written = 0

    def _append_line(self, path: Path, obj: dict) -> None:
        data = (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")
        if self._fail_after_bytes is not None:
            budget = self._fail_after_bytes - self._bytes_written
            if budget < len(data):
                with open(path, "ab") as fh:
                    fh.write(data[: max(0, budget)])
                    fh.flush()
                    os.fsync(fh.fileno())
                raise SimulatedCrash(f"simulated torn write in {path.name}")
        with open(path, "ab") as fh:
            fh.write(data)
            fh.flush()
            if self.durable:
                os.fsync(fh.fileno())
        self._bytes_written += len(data)

    @staticmethod
    def _read_journal(path: Path) -> list[dict]:
        if not path.exists():
            return []
        content = path.read_bytes()
        raw_lines = content.split(b"\n")
        # drop the final empty chunk from a well-terminated file
        if raw_lines and raw_lines[-1] == b"":
            raw_lines.pop()
        out = []
        for i, raw in enumerate(raw_lines):
            try:
                out.append(json.loads(raw.decode("utf-8")))
            except (json.JSONDecodeError, UnicodeDecodeError):
                if i == len(raw_lines) - 1:
                    # torn trailing write from a crash: repair by truncating
                    # so later appends start on a clean line boundary
                    with open(path, "r+b") as fh:
                        fh.truncate(len(content) - len(raw))
                    break
                raise StoreCorruption(f"corrupt line {i} in {path}")
        return out

    def _segment_paths(self) -> list[Path]:
        return sorted((self.root / "messages").glob("segment-*.jsonl"))

    def _current_segment(self) -> Path:
        return self.root / "messages" / f"segment-{self._segment_index:06d}.jsonl"

    # ------------------------------------------------------------------
    # replay

    def _replay(self) -> None:
        segments = self._segment_paths()
        if segments:
            self._segment_index = int(segments[-1].stem.split("-")[1])
        for seg in segments:
            events = self._read_journal(seg)
            if seg == segments[-1]:
                self._segment_lines = len(events)
            for ev in events:
                if ev["event"] == "relabel":
                    self._apply_relabel(ev)
                    continue
                for rec in ev["messages"]:
                    self.messages[rec["id"]] = rec
        for ev in self._read_journal(self.root / "labels" / "journal.jsonl"):
            self._apply_label_event(ev)
        for ev in self._read_journal(self.root / "alerts" / "alerts.jsonl"):
            self.alerts.extend(ev["alerts"])
        for ev in self._read_journal(self.root / "contexts" / "contexts.jsonl"):
            self.contexts[ev["context_id"]] = ev

    def _apply_label_event(self, ev: dict) -> None:
        kind = ev["event"]
        if kind == "task":
            msg = record_to_message(ev["message"])
            task = LabelTask(
                task_id=ev["task_id"],
                message=msg,
                is_gold=ev["is_gold"],
                gold_label=ev.get("gold_label"),
                required_judgments=ev["required"],
            )
            self.tasks[task.task_id] = task
        elif kind == "judgment":
            task = self.tasks[ev["task_id"]]
            worker = self.workers.setdefault(
                ev["worker_id"], WorkerRecord(worker_id=ev["worker_id"])
            )
            self.workers[ev["worker_id"]] = record_judgment(
                task,
                worker,
                ev["label"],
                timestamp=datetime.fromisoformat(ev["ts"]),
                trust_threshold=self.trust_threshold,
            )
            self._derive_resolution(task)
        elif kind == "worker":
            self.workers[ev["worker_id"]] = WorkerRecord(
                worker_id=ev["worker_id"], is_expert=ev.get("is_expert", False)
            )
        elif kind == "retrain":
            self.retrain_log.append(ev)
        else:
            raise StoreCorruption(f"unknown label event {kind!r}")

    def _derive_resolution(self, task: LabelTask) -> None:
        """Deterministic resolution step; rerun identically during replay."""
        if task.status != OPEN:
            return
        resolved, _ = aggregate_labels([task], self.workers, self.agreement_threshold)
        if task.status == RESOLVED and not task.is_gold and task.resolved_label is not None:
            rec = self.messages.get(task.message.id)
            if rec is not None:
                rec["label"] = task.resolved_label
                rec["label_source"] = resolved[0].source if resolved else "crowd"

    # ------------------------------------------------------------------
    # writes

    def ingest_batch(
        self, annotated: Sequence[AnnotatedMessage], labels: Sequence[tuple[str, str]], model_version: str
    ) -> dict:
        """Persist a batch atomically (one journal line). Idempotent on id."""
        records = []
        accepted = 0
        duplicates = 0
        seen: set[str] = set()
        for a, (label, source) in zip(annotated, labels):
            mid = a.message.id
            if mid in self.messages or mid in seen:
                duplicates += 1
                continue
            seen.add(mid)
            records.append(_message_record(a, label, source, model_version))
            accepted += 1
        if records:
            if self._segment_lines >= self.segment_max_lines:
                self._segment_index += 1
                self._segment_lines = 0
            self._append_line(self._current_segment(), {"event": "batch", "messages": records})
            self._segment_lines += 1
            for rec in records:
                self.messages[rec["id"]] = rec
        return {"accepted": accepted, "duplicates": duplicates}

    def _apply_relabel(self, ev: dict) -> None:
        for mid, label in ev["labels"].items():
            rec = self.messages.get(mid)
            # crowd/expert labels are authoritative; only machine labels move
            if rec is not None and rec["label_source"] in ("temporary", "filter", "none"):
                rec["label"] = label
                rec["label_source"] = "temporary"
                rec["model_version"] = ev["model_version"]

    def relabel(self, labels: dict[str, str], model_version: str) -> int:
        """Refresh temporary labels after a model change (one journal line)."""
        if not labels:
            return 0
        if self._segment_lines >= self.segment_max_lines:
            self._segment_index += 1
            self._segment_lines = 0
        ev = {"event": "relabel", "model_version": model_version, "labels": labels}
        self._append_line(self._current_segment(), ev)
        self._segment_lines += 1
        before = {mid: self.messages[mid]["label"] for mid in labels if mid in self.messages}
        self._apply_relabel(ev)
        return sum(
            1 for mid in before if self.messages[mid]["label"] != before[mid]
        )

    def enqueue_tasks(self, tasks: Sequence[LabelTask]) -> None:
        journal = self.root / "labels" / "journal.jsonl"
        for task in tasks:
            if task.task_id in self.tasks:
                raise ConflictError(f"task {task.task_id} already queued")
            ev = {
                "event": "task",
                "task_id": task.task_id,
                "message": {
                    "id": task.message.id,
                    "ts": task.message.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                    "text": task.message.text,
                },
                "is_gold": task.is_gold,
                "gold_label": task.gold_label,
                "required": task.required_judgments,
            }
            self._append_line(journal, ev)
            self._apply_label_event(ev)

    def register_worker(self, worker_id: str, is_expert: bool = False) -> None:
        if worker_id in self.workers:
            return
        ev = {"event": "worker", "worker_id": worker_id, "is_expert": is_expert}
        self._append_line(self.root / "labels" / "journal.jsonl", ev)
        self._apply_label_event(ev)

    def add_judgment(self, task_id: str, worker_id: str, label: str) -> LabelTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise NotFoundError(f"unknown task {task_id}")
        if task.status != OPEN:
            raise ConflictError(f"task {task_id} already {task.status}")
        if worker_id not in self.workers:
            self.register_worker(worker_id)
        ev = {
            "event": "judgment",
            "task_id": task_id,
            "worker_id": worker_id,
            "label": label,
            "ts": datetime.now(timezone.utc).isoformat(),
        }
        self._append_line(self.root / "labels" / "journal.jsonl", ev)
        self._apply_label_event(ev)
        if task.status == RESOLVED and not task.is_gold:
            self.request_retrain(f"task {task_id} resolved")
        return task

    def request_retrain(self, reason: str) -> None:
        ev = {
            "event": "retrain",
            "reason": reason,
            "ts": datetime.now(timezone.utc).isoformat(),
        }
        self._append_line(self.root / "labels" / "journal.jsonl", ev)
        self.retrain_log.append(ev)

    def append_alerts(self, alerts: Sequence[Alert]) -> list[dict]:
        records = []
        next_id = len(self.alerts)
        for alert in alerts:
            rec = {"alert_id": next_id, **alert.to_record()}
            records.append(rec)
            next_id += 1
        if records:
            self._append_line(self.root / "alerts" / "alerts.jsonl", {"event": "alerts", "alerts": records})
            self.alerts.extend(records)
        return records

    def add_context(self, record: dict) -> str:
        context_id = f"c{len(self.contexts):04d}"
        ev = {"event": "context", "context_id": context_id, **record}
        self._append_line(self.root / "contexts" / "contexts.jsonl", ev)
        self.contexts[context_id] = ev
        return context_id

    def append_drift_audit(self, record: dict) -> None:
        self._append_line(self.root / "drift" / "audit.jsonl", record)

    def drift_audit(self) -> list[dict]:
        return self._read_journal(self.root / "drift" / "audit.jsonl")

    # ------------------------------------------------------------------
    # model artifacts (versioned files + atomic CURRENT pointer)

    def publish_model(self, model: LinearModel) -> str:
        path = self.root / "models" / f"model-{model.version}.json"
        path.write_text(model.to_json(), encoding="utf-8")
        tmp = self.root / "models" / "CURRENT.tmp"
        tmp.write_text(model.version, encoding="utf-8")
        os.replace(tmp, self.root / "models" / "CURRENT")
        return model.version

    def current_model_version(self) -> Optional[str]:
        pointer = self.root / "models" / "CURRENT"
        if not pointer.exists():
            return None
        return pointer.read_text(encoding="utf-8").strip()

    def load_current_model(self) -> Optional[LinearModel]:
        version = self.current_model_version()
        if version is None:
            return None
        path = self.root / "models" / f"model-{version}.json"
        if not path.exists():
            raise StoreCorruption(f"CURRENT points at missing artifact {path.name}")
        return LinearModel.from_json(path.read_text(encoding="utf-8"))

    def save_topics(self, payload: dict) -> None:
        tmp = self.root / "models" / "topics.tmp"
        tmp.write_text(json.dumps(payload), encoding="utf-8")
        os.replace(tmp, self.root / "models" / "topics.json")

    def load_topics(self) -> Optional[dict]:
        path = self.root / "models" / "topics.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    # ------------------------------------------------------------------
    # state digest for recovery checks

    def state_hash(self) -> str:
        tasks = {
            tid: {
                "message": t.message.id,
                "is_gold": t.is_gold,
                "gold_label": t.gold_label,
                "required": t.required_judgments,
                "judgments": [(j.worker_id, j.label) for j in t.judgments],
                "status": t.status,
                "resolved_label": t.resolved_label,
            }
            for tid, t in sorted(self.tasks.items())
        }
        workers = {
            wid: (w.gold_seen, w.gold_correct, w.trusted, w.is_expert)
            for wid, w in sorted(self.workers.items())
        }
        state = {
            "messages": [self.messages[k] for k in sorted(self.messages)],
            "tasks": tasks,
            "workers": workers,
            "alerts": self.alerts,
            "contexts": self.contexts,
        }
        blob = json.dumps(state, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()
