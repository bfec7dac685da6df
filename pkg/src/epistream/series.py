"""Daily time series per (disease, country) context and the
oscillation/magnitude shape taxonomy.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Optional, Sequence

import numpy as np

MIN_CHARACTERIZE_DAYS = 28
DEFAULT_MAGNITUDE_THRESHOLD = 50.0
DEFAULT_OSCILLATION_THRESHOLD = 0.10


@dataclass(frozen=True)
class DiseaseContext:
    disease: str
    country: str

    def __post_init__(self) -> None:
        if not self.disease or not self.country:
            raise ValueError("disease and country must be nonempty")

    def key(self) -> str:
        return f"{self.disease}/{self.country}"


@dataclass
class TimeSeries:
    context: DiseaseContext
    start_date: date
    counts: list[int]

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self.counts) - 1)

    def date_of(self, index: int) -> date:
        return self.start_date + timedelta(days=index)

    def to_csv(self) -> str:
        lines = ["date,count"]
        lines += [f"{self.date_of(i)},{c}" for i, c in enumerate(self.counts)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, context: DiseaseContext) -> "TimeSeries":
        rows = [ln for ln in text.strip().splitlines() if ln and not ln.startswith("date")]
        dates, counts = [], []
        for ln in rows:
            d, c = ln.split(",")
            dates.append(date.fromisoformat(d))
            counts.append(int(c))
        if not dates:
            raise ValueError("empty series file")
        start = min(dates)
        filled = [0] * ((max(dates) - start).days + 1)
        for d, c in zip(dates, counts):
            filled[(d - start).days] = c
        return cls(context=context, start_date=start, counts=filled)


@dataclass
class Quadrant:
    oscillation: str  # low | high
    magnitude: str  # low | high
    osc_score: float
    mag_score: float


def build_series(
    located: Iterable[tuple[object, Sequence[str], str]],
    context: DiseaseContext,
    start: date,
    end: date,
    dedup_by_text: bool = False,
) -> TimeSeries:
    """Zero-filled daily counts for one context.

    ``located`` yields (message, condition_ids, country) triples for
    messages that already passed the classifier and location inference.
    A message naming several diseases contributes to each matching
    context; messages outside [start, end] are ignored. With
    ``dedup_by_text`` identical texts (retweets) count once per day.
    """
    if end < start:
        raise ValueError("empty date range")
    counts = [0] * ((end - start).days + 1)
    seen_texts: set[tuple[int, int]] = set()
    for message, condition_ids, country in located:
        if country != context.country or context.disease not in condition_ids:
            continue
        day = message.timestamp.date()
        if not start <= day <= end:
            continue
        offset = (day - start).days
        if dedup_by_text:
            key = (offset, hash(message.text))
            if key in seen_texts:
                continue
            seen_texts.add(key)
        counts[offset] += 1
    return TimeSeries(context=context, start_date=start, counts=counts)


def characterize_series(
    series: TimeSeries,
    baseline_exclusion: Optional[Sequence[tuple[date, date]]] = None,
    magnitude_threshold: float = DEFAULT_MAGNITUDE_THRESHOLD,
    oscillation_threshold: float = DEFAULT_OSCILLATION_THRESHOLD,
) -> Quadrant:
    """Classify a series into the oscillation x magnitude taxonomy.

    mag_score: 95th percentile of all daily counts (peaks included).
    osc_score: fraction of evaluated days whose count deviates from the
    trailing 7-day median by more than max(2, 0.5 * median). Days inside
    ``baseline_exclusion`` windows (e.g. known outbreaks) are skipped in
    the oscillation fraction so that a single clean peak does not read
    as background volatility.
    """
    n = len(series.counts)
    if n < MIN_CHARACTERIZE_DAYS:
        raise ValueError(f"need at least {MIN_CHARACTERIZE_DAYS} days, got {n}")
    counts = np.asarray(series.counts, dtype=float)
    mag_score = float(np.percentile(counts, 95))

    excluded = np.zeros(n, dtype=bool)
    for w_start, w_end in baseline_exclusion or ():
        lo = max(0, (w_start - series.start_date).days)
        hi = min(n - 1, (w_end - series.start_date).days)
        if hi >= lo:
            excluded[lo : hi + 1] = True

    spike_days = 0
    evaluated = 0
    for t in range(7, n):
        if excluded[t]:
            continue
        evaluated += 1
        med = float(np.median(counts[t - 7 : t]))
        if abs(counts[t] - med) > max(2.0, 0.5 * med):
            spike_days += 1
    osc_score = spike_days / evaluated if evaluated else 0.0

    return Quadrant(
        oscillation="high" if osc_score >= oscillation_threshold else "low",
        magnitude="high" if mag_score >= magnitude_threshold else "low",
        osc_score=osc_score,
        mag_score=mag_score,
    )


def weekly_counts(series: TimeSeries) -> list[int]:
    """Aggregate to full 7-day blocks from the series start; trailing
    partial weeks are dropped."""
    n_weeks = len(series.counts) // 7
    return [sum(series.counts[7 * w : 7 * w + 7]) for w in range(n_weeks)]


def week_end_date(series: TimeSeries, week_index: int) -> date:
    return series.start_date + timedelta(days=7 * week_index + 6)
