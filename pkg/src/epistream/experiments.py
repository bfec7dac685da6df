"""Reproducible experiment harnesses over the simulator.

These drive full pipeline paths (generate -> parse -> filter/locate ->
series -> detectors, and the weekly adaptive-classification replay) so
benchmark results and the acceptance suite share one code path.
"""

from __future__ import annotations

from datetime import timedelta
from typing import Optional, Sequence

from .classifier import SparseVector, vectorize
from .drift import DriftParams, DriftVerdict, ReplayReport, WeeklyBatch, detect_feature_change, replay_weekly_stream
from .evaluation import MatchReport, match_alerts, parse_ground_truth
from .ingest import Message, parse_messages, tokenize
from .pipeline import Annotator, located_relevant
from .series import DiseaseContext, TimeSeries, build_series
from .simulator import ScenarioConfig, StreamBundle, generate_stream, preset
from .surveillance import run_surveillance

EXPERIMENT_DIM = 2**16


def _vectorize_message(message: Message) -> SparseVector:
    return vectorize(tokenize(message.text), dim=EXPERIMENT_DIM)


def bundle_series(bundle: StreamBundle, context: DiseaseContext, annotator: Optional[Annotator] = None) -> TimeSeries:
    """messages file -> parse -> filter/locate -> zero-filled daily series."""
    cfg = bundle.config
    messages = parse_messages(bundle.message_lines)
    located = located_relevant(messages, annotator or Annotator())
    return build_series(
        located,
        context,
        cfg.start_date,
        cfg.start_date + timedelta(days=cfg.duration_days - 1),
    )


def preset_benchmark(
    name: str,
    seed: int,
    grid: Sequence[tuple[str, object]],
    annotator: Optional[Annotator] = None,
    early_margin_days: int = 10,
) -> dict[str, MatchReport]:
    """Run the full pipeline on one preset and score each grid entry.

    Keys are "<algo>:<params digest>".
    """
    cfg = preset(name, seed=seed)
    bundle = generate_stream(cfg)
    ctx = DiseaseContext(cfg.contexts[0].disease, cfg.contexts[0].country)
    series = bundle_series(bundle, ctx, annotator)
    events = parse_ground_truth(bundle.ground_truth_lines)
    out: dict[str, MatchReport] = {}
    for algo, params in grid:
        if algo == "farrington":
            alerts = run_surveillance(series, algo, farrington=params)
        else:
            alerts = run_surveillance(series, algo, ears=params)
        out[f"{algo}:{params.digest()}"] = match_alerts(alerts, events, early_margin_days)
    return out


# ----------------------------------------------------------------------
# weekly adaptive-classification experiments


def weekly_batches(bundle: StreamBundle) -> list[WeeklyBatch]:
    key = bundle.label_key()
    cfg = bundle.config
    n_weeks = cfg.duration_days // 7
    buckets: dict[int, list[Message]] = {w: [] for w in range(n_weeks)}
    for message in parse_messages(bundle.message_lines):
        week = (message.timestamp.date() - cfg.start_date).days // 7
        if week in buckets:
            buckets[week].append(message)
    return [
        WeeklyBatch(week=w, messages=buckets[w], gold={m.id: key[m.id] for m in buckets[w]})
        for w in range(n_weeks)
    ]


def replay_strategies(
    seed: int,
    q: float = 0.10,
    strategies: Sequence[str] = ("none", "random", "novelty"),
    preset_name: str = "drift_royal_wedding",
) -> dict[str, ReplayReport]:
    """Week-0 batch trains the initial model; weeks 1+ replay per strategy."""
    bundle = generate_stream(preset(preset_name, seed=seed))
    batches = weekly_batches(bundle)
    initial = [
        (_vectorize_message(m), 1 if batches[0].gold[m.id] == "relevant" else -1)
        for m in batches[0].messages
    ]
    params = DriftParams(q=q, alpha=0.01)
    return {
        strategy: replay_weekly_stream(
            initial, batches[1:], strategy, params, _vectorize_message, seed=seed
        )
        for strategy in strategies
    }


def stable_two_week_config(seed: int, daily_rate: float = 12.0) -> ScenarioConfig:
    return ScenarioConfig(
        name="iid-calibration",
        duration_days=14,
        seed=seed,
        contexts=[
            _stable_context(daily_rate),
        ],
    )


def _stable_context(daily_rate: float):
    from .simulator import ContextConfig

    return ContextConfig(
        disease="fever",
        country="GB",
        base_rate=daily_rate,
        noise_rate=daily_rate,
        extra_symptoms=["sore throat", "rash", "cough", "headache"],
    )


def iid_calibration_trial(seed: int, params: Optional[DriftParams] = None) -> DriftVerdict:
    """Two iid weeks from the same distribution; detection should stay quiet."""
    bundle = generate_stream(stable_two_week_config(seed))
    batches = weekly_batches(bundle)
    old = [_vectorize_message(m) for m in batches[0].messages]
    new = [_vectorize_message(m) for m in batches[1].messages]
    return detect_feature_change(old, new, params or DriftParams(alpha=0.01), seed=seed)


def injection_trial(seed: int, params: Optional[DriftParams] = None) -> DriftVerdict:
    """Pre-drift store vs the injection week of the drift preset."""
    bundle = generate_stream(preset("drift_royal_wedding", seed=seed))
    batches = weekly_batches(bundle)
    injection_week = min(e.week for e in bundle.config.drift_events)
    old = [_vectorize_message(m) for b in batches[:injection_week] for m in b.messages]
    new = [_vectorize_message(m) for m in batches[injection_week].messages]
    return detect_feature_change(old, new, params or DriftParams(alpha=0.01), seed=seed)
