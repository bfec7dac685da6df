"""Command-line driver for every pipeline stage plus the service.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date, datetime
from pathlib import Path
from typing import Optional

import numpy as np

from .classifier import Hyperparams, LinearModel, train_svm, vectorize
from .drift import DriftParams, detect_feature_change, novelty_score, select_for_labeling, train_virtual_classifier
from .evaluation import compute_metrics, match_alerts, parse_ground_truth
from .ingest import IngestError, ParseStats, parse_messages, tokenize
from .labeling import LabelTask
from .lda import fit_lda
from .pipeline import Annotator, classify_message
from .ranking import (
    JudgedCandidate,
    UserContext,
    cross_validate_p_at_n,
    extract_rank_features,
    rank_and_evaluate,
    resolve_judgments,
    train_ranker,
)
from .series import DiseaseContext, TimeSeries, build_series
from .simulator import PRESET_NAMES, generate_stream, preset
from .store import Store, StoreError
from .surveillance import EarsParams, FarringtonParams, SurveillanceError, run_surveillance

CLASSIFIER_DIM = 2**18


class DomainError(Exception):
    pass


def _emit(args, payload: dict, human: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload))
    else:
        print(human)


# ----------------------------------------------------------------------
# subcommand implementations


def cmd_simulate(args) -> int:
    cfg = preset(args.preset, seed=args.seed)
    bundle = generate_stream(cfg)
    paths = bundle.write(Path(args.out))
    _emit(
        args,
        {
            "preset": args.preset,
            "seed": args.seed,
            "messages": len(bundle.message_lines),
            "events": len(bundle.ground_truth_lines) - 1,
            "files": {k: str(v) for k, v in paths.items()},
        },
        f"wrote {len(bundle.message_lines)} messages, "
        f"{len(bundle.ground_truth_lines) - 1} ground-truth events to {args.out}",
    )
    return 0


def _open_store(args) -> Store:
    return Store(Path(args.store))


def cmd_ingest(args) -> int:
    store = _open_store(args)
    annotator = Annotator()
    model = store.load_current_model()
    path = Path(args.infile)
    if not path.exists():
        raise DomainError(f"input file not found: {path}")
    stats = ParseStats()
    accepted = duplicates = 0
    chunk: list = []

    def flush() -> None:
        nonlocal accepted, duplicates, chunk
        if not chunk:
            return
        annotated, labels = [], []
        for m in chunk:
            a = annotator.annotate(m)
            annotated.append(a)
            if model is not None:
                label, _ = classify_message(model, m)
                labels.append((label, "temporary"))
            else:
                labels.append(("relevant" if a.passed else "irrelevant", "filter"))
        result = store.ingest_batch(
            annotated, labels, model_version=store.current_model_version() or "none"
        )
        accepted += result["accepted"]
        duplicates += result["duplicates"]
        chunk = []

    with path.open(encoding="utf-8") as fh:
        for message in parse_messages(fh, stats):
            chunk.append(message)
            if len(chunk) >= 1000:
                flush()
    flush()
    payload = {
        "parsed": stats.ok,
        "malformed": stats.malformed,
        "duplicate_in_input": stats.duplicate,
        "accepted": accepted,
        "duplicates_in_store": duplicates,
    }
    _emit(args, payload, f"ingested {accepted} messages ({stats.malformed} malformed, "
                         f"{duplicates + stats.duplicate} duplicates)")
    return 0


def _train_from_store_labels(store: Store, seed: int = 0) -> LinearModel:
    data = []
    for rec in store.messages.values():
        if rec["label_source"] in ("crowd", "expert"):
            y = 1 if rec["label"] == "relevant" else -1
            data.append((vectorize(tokenize(rec["text"]), dim=CLASSIFIER_DIM), y))
    labels = {y for _, y in data}
    if len(data) < 2 or labels != {-1, 1}:
        raise DomainError(
            "no trainable label set in store: need crowd/expert labels of both classes "
            "(run the drift job and labeling queue first, or pass --model)"
        )
    return train_svm(data, Hyperparams(seed=seed))


def cmd_classify(args) -> int:
    store = _open_store(args)
    if args.model:
        path = Path(args.model)
        if not path.exists():
            raise DomainError(f"model file not found: {path}")
        model = LinearModel.from_json(path.read_text(encoding="utf-8"))
        store.publish_model(model)
    else:
        model = store.load_current_model()
        if model is None or args.retrain:
            model = _train_from_store_labels(store, seed=args.seed)
            store.publish_model(model)
    labels = {}
    counts = {"relevant": 0, "irrelevant": 0, "fixed": 0}
    for rec in store.messages.values():
        if rec["label_source"] in ("crowd", "expert"):
            counts["fixed"] += 1
            continue
        label, _ = classify_message(model, parse_record(rec))
        labels[rec["id"]] = label
        counts[label] += 1
    changed = store.relabel(labels, model.version)
    payload = {"model_version": model.version, "changed": changed, **counts}
    _emit(args, payload, f"classified {len(labels)} messages with {model.version}: "
                         f"{counts['relevant']} relevant, {counts['irrelevant']} irrelevant "
                         f"({changed} labels changed, {counts['fixed']} human-labeled untouched)")
    return 0


def parse_record(rec: dict):
    from .store import record_to_message

    return record_to_message(rec)


def cmd_drift(args) -> int:
    store = _open_store(args)
    if not store.messages:
        raise DomainError("store has no messages; run ingest first")
    params = DriftParams(q=args.q, alpha=args.alpha)
    records = sorted(store.messages.values(), key=lambda r: r["ts"])
    days = [datetime.fromisoformat(r["ts"].replace("Z", "+00:00")).date() for r in records]
    first = min(days)
    weeks = [(d - first).days // 7 for d in days]
    last_week = max(weeks)
    new_records = [r for r, w in zip(records, weeks) if w == last_week]
    old_records = [r for r, w in zip(records, weeks) if w < last_week]
    if not old_records or not new_records:
        raise DomainError("need at least two calendar weeks of messages for the drift job")
    old_vecs = [vectorize(tokenize(r["text"]), dim=CLASSIFIER_DIM) for r in old_records]
    new_vecs = [vectorize(tokenize(r["text"]), dim=CLASSIFIER_DIM) for r in new_records]
    try:
        verdict = detect_feature_change(old_vecs, new_vecs, params, seed=args.seed)
    except ValueError as exc:
        raise DomainError(str(exc))
    messages = [parse_record(r) for r in new_records]
    scores = None
    if args.strategy == "novelty":
        vc = train_virtual_classifier(old_vecs, new_vecs, seed=args.seed)
        scores = [novelty_score(vc, x) for x in new_vecs]
    selected = select_for_labeling(messages, scores, args.q, args.strategy, seed=args.seed)
    tasks = [
        LabelTask(task_id=f"w{last_week:03d}-{i:04d}", message=m, required_judgments=args.min_workers)
        for i, m in enumerate(selected)
        if f"w{last_week:03d}-{i:04d}" not in store.tasks
    ]
    store.enqueue_tasks(tasks)
    audit = {
        "week": int(last_week),
        "vc_accuracy": verdict.vc_accuracy,
        "p_value": verdict.p_value,
        "changed": verdict.changed,
        "n_selected": len(selected),
    }
    store.append_drift_audit(audit)
    _emit(args, audit, f"week {last_week}: vc_accuracy={verdict.vc_accuracy:.3f} "
                       f"p={verdict.p_value:.2e} changed={verdict.changed}; "
                       f"queued {len(tasks)} labeling tasks")
    return 0


def _store_series(store: Store, disease: str, country: str, lo: Optional[date], hi: Optional[date]) -> TimeSeries:
    rows = [
        rec
        for rec in store.messages.values()
        if rec["verdict"] == "pass"
        and rec["label"] == "relevant"
        and rec["country"] == country
        and disease in rec["conditions"]
    ]
    if not rows and (lo is None or hi is None):
        raise DomainError(f"no stored messages for context {disease}/{country}")
    days = [datetime.fromisoformat(r["ts"].replace("Z", "+00:00")).date() for r in rows]
    start = lo or min(days)
    end = hi or max(days)
    located = [(parse_record(r), r["conditions"], r["country"]) for r in rows]
    return build_series(located, DiseaseContext(disease, country), start, end)


def _date_arg(value: Optional[str]) -> Optional[date]:
    return date.fromisoformat(value) if value else None


def cmd_aggregate(args) -> int:
    store = _open_store(args)
    series = _store_series(store, args.disease, args.country, _date_arg(args.date_from), _date_arg(args.date_to))
    csv_text = series.to_csv()
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        _emit(args, {"rows": len(series.counts), "out": args.out},
              f"wrote {len(series.counts)} daily rows to {args.out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_surveil(args) -> int:
    if args.series:
        text = Path(args.series).read_text(encoding="utf-8")
        if not args.disease or not args.country:
            raise DomainError("--series requires --disease and --country")
        series = TimeSeries.from_csv(text, DiseaseContext(args.disease, args.country))
        store = Store(Path(args.store)) if args.store else None
    else:
        if not args.store:
            raise DomainError("need --store or --series")
        store = _open_store(args)
        if not args.disease or not args.country:
            raise DomainError("--disease and --country are required")
        series = _store_series(store, args.disease, args.country, _date_arg(args.date_from), _date_arg(args.date_to))
    algo = args.algo
    ears = EarsParams(variant=algo.upper(), k=args.k) if algo in ("c1", "c2", "c3") else None
    farrington = (
        FarringtonParams(w=args.w, b=args.b, alpha=args.bound_alpha) if algo == "farrington" else None
    )
    alerts = run_surveillance(series, algo, ears=ears, farrington=farrington)
    records = [a.to_record() for a in alerts]
    if store is not None:
        records = store.append_alerts(alerts)
    if args.out:
        Path(args.out).write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    _emit(args, {"algorithm": algo, "alerts": len(records)},
          f"{algo}: {len(records)} alerts over {len(series.counts)} days")
    return 0


def cmd_evaluate(args) -> int:
    events = parse_ground_truth(Path(args.truth).read_text(encoding="utf-8").splitlines())
    if args.alerts:
        records = [json.loads(ln) for ln in Path(args.alerts).read_text(encoding="utf-8").splitlines() if ln]
    elif args.store:
        records = Store(Path(args.store)).alerts
    else:
        raise DomainError("need --alerts or --store")
    # group alert records by (algorithm, params); rebuild Alert-likes
    from .surveillance import Alert

    groups: dict[tuple[str, str], list[Alert]] = {}
    for rec in records:
        key = (rec["algorithm"], rec["params"])
        groups.setdefault(key, []).append(
            Alert(
                context=DiseaseContext(rec["disease"], rec["country"]),
                date=date.fromisoformat(rec["date"]),
                algorithm=rec["algorithm"],
                params=rec["params"],
                statistic=rec["statistic"] if rec["statistic"] is not None else float("inf"),
                threshold=rec["threshold"] if rec["threshold"] is not None else float("inf"),
                observed=rec["observed"],
            )
        )
    rows = []
    for (algorithm, params), alerts in sorted(groups.items()):
        report = match_alerts(alerts, events, early_margin_days=args.margin)
        rows.append({"algorithm": algorithm, "params": params, **compute_metrics(report)})
    if args.json:
        print(json.dumps({"rows": rows}))
    else:
        print("precision is alarm-based; recall is event-based (detected windows / windows)")
        header = f"{'algorithm':<12} {'params':<22} {'tp':>4} {'fp':>4} {'fn':>4} {'prec':>6} {'rec':>6} {'f':>6}"
        print(header)
        for r in rows:
            print(
                f"{r['algorithm']:<12} {r['params']:<22} {r['tp']:>4} {r['fp']:>4} {r['fn']:>4} "
                f"{r['precision']:>6.3f} {r['recall']:>6.3f} {r['f_measure']:>6.3f}"
            )
    return 0


def cmd_lda(args) -> int:
    store = _open_store(args)
    corpus_records = [r for r in store.messages.values() if r["verdict"] == "pass"]
    if not corpus_records:
        raise DomainError("no filter-passed messages in store")
    docs = [tokenize(r["text"]) for r in corpus_records]
    try:
        model = fit_lda(docs, n_topics=args.k, iterations=args.iters, seed=args.seed)
    except ValueError as exc:
        raise DomainError(str(exc))
    store.save_topics(
        {
            "n_topics": model.n_topics,
            "alpha": model.alpha,
            "beta": model.beta,
            "iterations": model.iterations,
            "seed": model.seed,
            "vocabulary": model.vocabulary,
            "topic_word": model.topic_word.tolist(),
        }
    )
    top = {str(k): model.topic_terms(k, 10) for k in range(model.n_topics)}
    _emit(args, {"n_topics": model.n_topics, "documents": len(docs), "top_terms": top},
          "\n".join(f"topic {k}: {' '.join(terms)}" for k, terms in top.items()))
    return 0


def cmd_rank(args) -> int:
    store = _open_store(args)
    ctx_obj = json.loads(Path(args.context).read_text(encoding="utf-8"))
    try:
        user_ctx = UserContext(
            start=date.fromisoformat(ctx_obj["start"]),
            end=date.fromisoformat(ctx_obj["end"]),
            conditions=frozenset(ctx_obj["conditions"]),
            locations=frozenset(ctx_obj.get("locations", [])),
        )
    except (KeyError, ValueError) as exc:
        raise DomainError(f"bad context file: {exc}")
    raw: dict[str, list[tuple[str, int]]] = {}
    for ln in Path(args.judgments).read_text(encoding="utf-8").splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#") or ln.startswith("message_id"):
            continue
        parts = ln.split(",")
        if len(parts) == 3:
            mid, _ctx, rel = parts
            worker = f"w{len(raw.get(mid, []))}"
        else:
            mid, _ctx, worker, rel = parts
        raw.setdefault(mid, []).append((worker, int(rel)))
    annotator = Annotator()
    from .store import record_to_message

    messages = {mid: record_to_message(store.messages[mid]) for mid in raw if mid in store.messages}
    missing = [mid for mid in raw if mid not in store.messages]
    if missing:
        raise DomainError(f"{len(missing)} judged messages not in store (first: {missing[0]})")
    relevance = resolve_judgments({mid: votes for mid, votes in raw.items()}, messages)
    from .service import _expanded_context

    expanded = _expanded_context(store, user_ctx, list(messages.values()), annotator)
    judged = [
        JudgedCandidate(
            message=messages[mid],
            features=extract_rank_features(messages[mid], expanded, annotator.conditions, annotator.locations),
            relevance=rel,
        )
        for mid, rel in sorted(relevance.items())
    ]
    if not judged:
        raise DomainError("no resolved judgments")
    try:
        model = train_ranker(judged, Hyperparams(learning_rate=0.5, l2=1e-3, epochs=20, seed=args.seed))
    except ValueError as exc:
        raise DomainError(str(exc))
    (store.root / "models" / "ranker.json").write_text(model.to_json(), encoding="utf-8")
    result = rank_and_evaluate(model, judged, n=args.n)
    query_terms = set(ctx_obj["conditions"])
    cv = {}
    for mode in ("full", "mcl", "mc", "tfidf"):
        try:
            scores = cross_validate_p_at_n(
                judged, n=args.n, mode=mode, seed=args.seed, query_terms=query_terms
            )
            cv[mode] = float(np.mean(scores))
        except ValueError:
            cv[mode] = None
    if args.out:
        lines = [f"{j.message.id},{float(model.weights @ _dense(j)):.6f}" for j in result.ranked]
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    payload = {"p_at_n": result.p_at_n, "n": args.n, "cv_mean_p_at_n": cv, "judged": len(judged)}
    _emit(args, payload, f"P@{args.n}={result.p_at_n:.3f} on {len(judged)} judged candidates; "
                         f"cross-validated means: " + ", ".join(
                             f"{m}={v:.3f}" if v is not None else f"{m}=n/a" for m, v in cv.items()))
    return 0


def _dense(j: JudgedCandidate) -> np.ndarray:
    v = np.zeros(5)
    sparse = j.features.as_sparse()
    for i, val in zip(sparse.indices, sparse.values):
        v[i] = val
    return v


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    store = _open_store(args)
    app = create_app(store, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ----------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epistream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_json(p):
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("simulate", help="generate a synthetic stream")
    p.add_argument("--preset", required=True, choices=PRESET_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_json(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="parse, annotate, classify and persist messages")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--store", required=True)
    add_json(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("classify", help="apply (or retrain) the relevance model over the store")
    p.add_argument("--store", required=True)
    p.add_argument("--model", help="model artifact to publish and apply")
    p.add_argument("--retrain", action="store_true", help="retrain from crowd/expert labels first")
    p.add_argument("--seed", type=int, default=0)
    add_json(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("drift", help="weekly feature-change detection and labeling selection")
    p.add_argument("--store", required=True)
    p.add_argument("--q", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--strategy", choices=("none", "random", "novelty"), default="novelty")
    p.add_argument("--min-workers", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    add_json(p)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("aggregate", help="build a daily series for one context")
    p.add_argument("--disease", required=True)
    p.add_argument("--country", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--from", dest="date_from")
    p.add_argument("--to", dest="date_to")
    p.add_argument("--out")
    add_json(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("surveil", help="run a surveillance algorithm over a series")
    p.add_argument("--algo", required=True, choices=("c1", "c2", "c3", "farrington"))
    p.add_argument("--k", type=float, default=3.0)
    p.add_argument("--w", type=int, default=3)
    p.add_argument("--b", type=int, default=0)
    p.add_argument("--bound-alpha", type=float, default=0.01)
    p.add_argument("--store")
    p.add_argument("--series", help="CSV series file instead of the store")
    p.add_argument("--disease")
    p.add_argument("--country")
    p.add_argument("--from", dest="date_from")
    p.add_argument("--to", dest="date_to")
    p.add_argument("--out", help="also write alerts as JSON lines")
    add_json(p)
    p.set_defaults(func=cmd_surveil)

    p = sub.add_parser("evaluate", help="score alerts against ground-truth windows")
    p.add_argument("--truth", required=True)
    p.add_argument("--alerts")
    p.add_argument("--store")
    p.add_argument("--margin", type=int, default=10)
    add_json(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("lda", help="fit the topic model over stored messages")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--store", required=True)
    add_json(p)
    p.set_defaults(func=cmd_lda)

    p = sub.add_parser("rank", help="train and evaluate the personalized ranker")
    p.add_argument("--context", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write ranked message_id,score lines")
    add_json(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", required=True)
    p.add_argument("--token", help="bearer token required for writes")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, SurveillanceError, StoreError, IngestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
