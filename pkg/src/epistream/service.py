"""HTTP service over the event-sourced store: ingestion, alert search
with facets, label queue, contexts, per-alert ranked messages, series.

Single writer per store directory; background analyses (drift job,
surveillance runs) happen off the request path via the CLI before or
between serving sessions.
"""

from __future__ import annotations

import math
from datetime import date, datetime, timedelta
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware

from .classifier import Hyperparams, LinearModel
from .ingest import ParseStats, parse_messages
from .labeling import OPEN, RESOLVED
from .lda import TopicModel
from .pipeline import Annotator, classify_message
from .ranking import (
    ExpandedContext,
    JudgedCandidate,
    MessageIndex,
    UserContext,
    expand_context,
    extract_rank_features,
    rank_candidates,
    retrieve_candidates,
)
from .series import DiseaseContext, build_series
from .store import ConflictError, NotFoundError, Store, record_to_message

FACET_FIELDS = ("disease", "country", "algorithm")


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def _parse_date(value: Optional[str], field: str) -> Optional[date]:
    if value is None:
        return None
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise _error(400, "bad_date", f"{field} must be YYYY-MM-DD, got {value!r}")


def create_app(store: Store, token: Optional[str] = None, annotator: Optional[Annotator] = None) -> FastAPI:
    app = FastAPI(title="epistream service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    ann = annotator or Annotator()

    def require_writer(request: Request) -> None:
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise _error(401, "unauthorized", "missing or invalid bearer token")

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "model_version": store.current_model_version(),
            "messages": len(store.messages),
            "alerts": len(store.alerts),
            "open_tasks": sum(1 for t in store.tasks.values() if t.status == OPEN),
        }

    @app.post("/messages")
    async def post_messages(request: Request) -> dict:
        require_writer(request)
        try:
            body = (await request.body()).decode("utf-8")
        except UnicodeDecodeError:
            raise _error(400, "bad_body", "body must be UTF-8 text, one JSON record per line")
        if not body.strip():
            raise _error(400, "bad_body", "empty batch")
        stats = ParseStats()
        messages = list(parse_messages(body.splitlines(), stats))
        model = store.load_current_model()
        annotated, labels = [], []
        for m in messages:
            a = ann.annotate(m)
            annotated.append(a)
            if model is not None:
                label, _ = classify_message(model, m)
                labels.append((label, "temporary"))
            else:
                # cold start: the lexical filter verdict stands in for the model
                labels.append(("relevant" if a.passed else "irrelevant", "filter"))
        result = store.ingest_batch(annotated, labels, model_version=store.current_model_version() or "none")
        return {
            "accepted": result["accepted"],
            "duplicates": result["duplicates"],
            "malformed": stats.malformed,
        }

    # ------------------------------------------------------------------
    # alerts

    def _match(rec: dict, filters: dict) -> bool:
        if filters["disease"] and rec["disease"] != filters["disease"]:
            return False
        if filters["country"] and rec["country"] != filters["country"]:
            return False
        if filters["algorithm"] and rec["algorithm"] != filters["algorithm"]:
            return False
        d = rec["date"]
        if filters["date_from"] and d < filters["date_from"].isoformat():
            return False
        if filters["date_to"] and d > filters["date_to"].isoformat():
            return False
        return True

    @app.get("/alerts")
    def alert_query(
        disease: Optional[str] = None,
        country: Optional[str] = None,
        algorithm: Optional[str] = None,
        date_from: Optional[str] = Query(None, alias="from"),
        date_to: Optional[str] = Query(None, alias="to"),
        q: Optional[str] = None,
        page: int = 1,
        page_size: int = 50,
    ) -> dict:
        lo, hi = _parse_date(date_from, "from"), _parse_date(date_to, "to")
        if lo and hi and hi < lo:
            raise _error(400, "bad_range", "'to' precedes 'from'")
        if page < 1 or page_size < 1:
            raise _error(400, "bad_page", "page and page_size must be >= 1")
        filters = {
            "disease": disease,
            "country": country,
            "algorithm": algorithm,
            "date_from": lo,
            "date_to": hi,
        }
        pool = store.alerts
        if q:
            needle = q.lower()
            pool = [r for r in pool if needle in r["disease"].lower() or needle in r["country"].lower()]
        matched = [r for r in pool if _match(r, filters)]
        matched.sort(key=lambda r: (r["date"], r["disease"], r["country"], r["algorithm"], r["alert_id"]))
        total = len(matched)
        pages = max(1, math.ceil(total / page_size))
        start = (page - 1) * page_size
        items = matched[start : start + page_size]
        # standard faceting: each facet counts over the pool filtered by
        # every filter except its own
        facets: dict[str, dict[str, int]] = {}
        for field in FACET_FIELDS:
            relaxed = dict(filters)
            relaxed[field] = None
            counts: dict[str, int] = {}
            for rec in pool:
                if _match(rec, relaxed):
                    counts[rec[field]] = counts.get(rec[field], 0) + 1
            facets[field] = dict(sorted(counts.items()))
        return {"alerts": items, "facets": facets, "total": total, "page": page, "pages": pages}

    @app.get("/alerts/{alert_id}")
    def alert_detail(alert_id: int) -> dict:
        if alert_id < 0 or alert_id >= len(store.alerts):
            raise _error(404, "not_found", f"no alert {alert_id}")
        return store.alerts[alert_id]

    @app.get("/alerts/{alert_id}/tweets")
    def alert_tweets(alert_id: int, context: Optional[str] = None, n: int = 10) -> dict:
        if alert_id < 0 or alert_id >= len(store.alerts):
            raise _error(404, "not_found", f"no alert {alert_id}")
        if n < 1:
            raise _error(400, "bad_n", "n must be >= 1")
        alert = store.alerts[alert_id]
        alert_day = date.fromisoformat(alert["date"])
        if context is not None:
            ctx_rec = store.contexts.get(context)
            if ctx_rec is None:
                raise _error(404, "not_found", f"no context {context}")
            user_ctx = UserContext(
                start=date.fromisoformat(ctx_rec["start"]),
                end=date.fromisoformat(ctx_rec["end"]),
                conditions=frozenset(ctx_rec["conditions"]),
                locations=frozenset(ctx_rec.get("locations", [])),
            )
        else:
            user_ctx = UserContext(
                start=alert_day - timedelta(days=30),
                end=alert_day + timedelta(days=30),
                conditions=frozenset({alert["disease"]}),
                locations=frozenset({alert["country"]}),
            )
        relevant = [
            record_to_message(rec)
            for rec in store.messages.values()
            if rec["verdict"] == "pass" and rec["label"] == "relevant"
        ]
        expanded = _expanded_context(store, user_ctx, relevant, ann)
        index = MessageIndex(relevant)
        candidates = retrieve_candidates(
            expanded, index, condition_gazetteer=ann.conditions, location_gazetteer=ann.locations
        )
        ranker = _load_ranker(store)
        judged = [
            JudgedCandidate(
                message=m,
                features=extract_rank_features(m, expanded, ann.conditions, ann.locations),
                relevance=0,
            )
            for m in candidates
        ]
        ranked = rank_candidates(ranker, judged)[:n]
        items = []
        for j in ranked:
            score = float(ranker.weights @ _dense5(j))
            items.append(
                {
                    "message_id": j.message.id,
                    "score": score,
                    "text": j.message.text,
                    "features": {
                        "mc": j.features.mc,
                        "loc": j.features.loc,
                        "hashtag": j.features.hashtag,
                        "cc": j.features.cc,
                        "url": j.features.url,
                    },
                }
            )
        return {
            "alert_id": alert_id,
            "context": context,
            "expansion": {
                "extra_conditions": sorted(expanded.extra_conditions),
                "extra_locations": sorted(expanded.extra_locations),
                "complementary_terms": sorted(expanded.complementary_terms),
                "hashtags": sorted(expanded.hashtags),
            },
            "tweets": items,
        }

    # ------------------------------------------------------------------
    # contexts

    @app.get("/contexts")
    def list_contexts() -> dict:
        return {"contexts": list(store.contexts.values())}

    @app.post("/contexts")
    async def post_context(request: Request) -> dict:
        body = await request.json()
        try:
            start = date.fromisoformat(body["start"])
            end = date.fromisoformat(body["end"])
            conditions = list(body["conditions"])
            locations = list(body.get("locations", []))
            UserContext(
                start=start, end=end, conditions=frozenset(conditions), locations=frozenset(locations)
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise _error(400, "bad_context", str(exc))
        context_id = store.add_context(
            {
                "start": start.isoformat(),
                "end": end.isoformat(),
                "conditions": conditions,
                "locations": locations,
            }
        )
        return {"context_id": context_id}

    # ------------------------------------------------------------------
    # label queue

    @app.get("/labels/queue")
    def label_queue(page: int = 1, page_size: int = 20) -> dict:
        if page < 1 or page_size < 1:
            raise _error(400, "bad_page", "page and page_size must be >= 1")
        open_tasks = [t for t in store.tasks.values() if t.status == OPEN]
        open_tasks.sort(key=lambda t: t.task_id)
        start = (page - 1) * page_size
        items = [
            {
                "task_id": t.task_id,
                "message_id": t.message.id,
                "text": t.message.text,
                "required": t.required_judgments,
                "judgments": len(t.judgments),
            }
            for t in open_tasks[start : start + page_size]
        ]
        resolved = sum(1 for t in store.tasks.values() if t.status == RESOLVED)
        return {
            "tasks": items,
            "open_total": len(open_tasks),
            "resolved_total": resolved,
            "guideline": "relevant if somebody reports themselves or another person being ill",
        }

    @app.post("/labels/{task_id}/judgment")
    async def post_judgment(task_id: str, request: Request) -> dict:
        require_writer(request)
        body = await request.json()
        worker_id = body.get("worker_id")
        label = body.get("label")
        if not worker_id or label not in ("relevant", "irrelevant"):
            raise _error(400, "bad_judgment", "need worker_id and label in {relevant, irrelevant}")
        try:
            task = store.add_judgment(task_id, worker_id, label)
        except NotFoundError as exc:
            raise _error(404, "not_found", str(exc))
        except ConflictError as exc:
            raise _error(409, "conflict", str(exc))
        return {
            "task_id": task_id,
            "status": task.status,
            "resolved_label": task.resolved_label,
            "judgments": len(task.judgments),
        }

    # ------------------------------------------------------------------
    # series

    @app.get("/series/{disease}/{country}")
    def series_endpoint(
        disease: str,
        country: str,
        date_from: Optional[str] = Query(None, alias="from"),
        date_to: Optional[str] = Query(None, alias="to"),
    ) -> dict:
        rows = [
            rec
            for rec in store.messages.values()
            if rec["verdict"] == "pass"
            and rec["label"] == "relevant"
            and rec["country"] == country
            and disease in rec["conditions"]
        ]
        lo, hi = _parse_date(date_from, "from"), _parse_date(date_to, "to")
        if not rows and (lo is None or hi is None):
            raise _error(404, "not_found", f"no data for {disease}/{country}")
        days = [datetime.fromisoformat(r["ts"].replace("Z", "+00:00")).date() for r in rows]
        start = lo or min(days)
        end = hi or max(days)
        located = [
            (record_to_message(rec), rec["conditions"], rec["country"]) for rec in rows
        ]
        series = build_series(located, DiseaseContext(disease, country), start, end)
        return {
            "disease": disease,
            "country": country,
            "start": series.start_date.isoformat(),
            "counts": series.counts,
        }

    return app


def _dense5(j: JudgedCandidate) -> np.ndarray:
    v = np.zeros(5)
    sparse = j.features.as_sparse()
    for i, val in zip(sparse.indices, sparse.values):
        v[i] = val
    return v


def _load_ranker(store: Store) -> LinearModel:
    path = store.root / "models" / "ranker.json"
    if path.exists():
        return LinearModel.from_json(path.read_text(encoding="utf-8"))
    # untrained default: every feature counts equally
    return LinearModel(weights=np.ones(5), bias=0.0, hyperparams=Hyperparams())


def _expanded_context(store: Store, user_ctx, corpus, ann: Annotator) -> ExpandedContext:
    payload = store.load_topics()
    model = None
    if payload is not None:
        model = TopicModel(
            n_topics=payload["n_topics"],
            alpha=payload["alpha"],
            beta=payload["beta"],
            iterations=payload["iterations"],
            seed=payload["seed"],
            vocabulary=payload["vocabulary"],
            topic_word=np.array(payload["topic_word"]),
            doc_topic=np.zeros((1, payload["n_topics"])),
        )
    return expand_context(user_ctx, model, corpus, ann.conditions, ann.locations)
