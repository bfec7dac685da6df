"""Seeded synthetic message streams with injected outbreaks, vocabulary
drift, and ground-truth files.

Daily relevant-message counts are Poisson with a multiplicative outbreak
factor; texts come from phrase templates over the shipped gazetteers, so
the generated stream round-trips through the real ingest/filter/locate
pipeline. Presets cover the four oscillation x magnitude quadrants plus
a terminology-drift scenario.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ingest import default_location_gazetteer
from .labeling import LabelTask, WorkerRecord, record_judgment

RELEVANT_TEMPLATES_PLACED = [
    "{cond} outbreak in {place}",
    "so many {cond} cases in {place} right now",
    "doctor confirmed {cond} for my neighbor in {place}",
    "hospital in {place} is full of {cond} patients",
    "health officials warn about {cond} spreading in {place}",
    "#'{tag}' alert: {cond} cases rising in {place}",
]

RELEVANT_TEMPLATES_UNPLACED = [
    "my {cond} is getting worse today",
    "feeling awful, {cond} symptoms since yesterday",
    "stuck in bed with {cond}",
    "whole family came down with {cond}",
    "week two of this {cond} and still exhausted",
]

AMBIENT_TEMPLATES = [
    "reading about the history of {cond} tonight",
    "lecture on {cond} was actually interesting",
    "trivia question about {cond} stumped everyone",
    "the {cond} chapter of this book is so long",
    "documentary about the {cond} era of medicine",
]

CHATTER_TEMPLATES = [
    "pizza party with friends tonight",
    "traffic on the highway again this morning",
    "new album drops friday so hyped",
    "homework due tomorrow and netflix is calling",
    "weekend plans hiking and bbq",
    "coffee machine broke again at the office",
    "that match last night was unbelievable",
    "finally finished painting the kitchen",
]

NEGATIVE_NOISE_TEMPLATES = [
    "{neg} all over the news",
    "omg {neg} is totally real",
    "caught {neg} watching tv tonight",
    "lol {neg} again this year",
]

NOISE_NEGATIVES = [
    "bieber fever",
    "cabin fever",
    "saturday night fever",
    "spring fever",
    "gold fever",
    "night fever",
]

CONFOUNDER_TEMPLATES = [
    "feeling the {term} so bad today",
    "whole office is down with {term}",
    "caught a serious case of {term} this week",
    "stuck at home with {term} again",
]

NOVEL_TEMPLATES_PLACED = [
    "{term} quarantine announced in {place}",
    "second wave of {term} hits {place} schools",
]

NOVEL_TEMPLATES_UNPLACED = [
    "tested positive for {term} this morning",
    "never heard of {term} until i caught it",
    "everyone at work came home with {term}",
]


@dataclass
class OutbreakWindow:
    start_day: int
    end_day: int  # inclusive
    rho: float
    shape: str = "triangular"  # or flat
    ground_truth: bool = True  # media-echo bumps are injected but are not outbreaks

    def multiplier(self, day: int) -> float:
        if not self.start_day <= day <= self.end_day:
            return 1.0
        if self.shape == "flat":
            return self.rho
        span = max(1, self.end_day - self.start_day)
        pos = (day - self.start_day) / span
        tri = 1.0 - abs(2.0 * pos - 1.0)  # 0 at edges, 1 at the middle
        return 1.0 + (self.rho - 1.0) * tri


@dataclass
class ContextConfig:
    disease: str
    country: str
    base_rate: float
    windows: list[OutbreakWindow] = field(default_factory=list)
    noise_rate: float = 0.5
    ambient_rate: float = 0.0
    burst_prob: float = 0.0  # chance per quiet day that a chatter burst starts
    burst_multiplier: float = 1.0
    burst_max_len: int = 1
    daily_cap: Optional[int] = None
    extra_symptoms: list[str] = field(default_factory=list)


@dataclass
class DriftEvent:
    week: int
    terms: list[str]
    mixing_fraction: float
    kind: str = "confounder"  # or novel_relevant
    duration_weeks: Optional[int] = None  # None: active until the end

    def active(self, week: int) -> bool:
        if week < self.week:
            return False
        return self.duration_weeks is None or week < self.week + self.duration_weeks


@dataclass
class ScenarioConfig:
    name: str
    duration_days: int
    contexts: list[ContextConfig]
    drift_events: list[DriftEvent] = field(default_factory=list)
    start_date: date = date(2011, 1, 1)
    geo_fraction: float = 0.01
    text_mention_prob: float = 0.55
    profile_prob: float = 0.40
    ambiguous_noise_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        for ctx in self.contexts:
            if ctx.base_rate < 0:
                raise ValueError("base_rate must be >= 0")
            for w in ctx.windows:
                if w.rho < 1.0:
                    raise ValueError("outbreak multiplier rho must be >= 1")
                if not (0 <= w.start_day <= w.end_day < self.duration_days):
                    raise ValueError(
                        f"window [{w.start_day}, {w.end_day}] outside 0..{self.duration_days - 1}"
                    )


@dataclass
class StreamBundle:
    config: ScenarioConfig
    message_lines: list[str]
    ground_truth_lines: list[str]
    label_key_lines: list[str]

    def label_key(self) -> dict[str, str]:
        out = {}
        for line in self.label_key_lines[1:]:
            mid, label = line.split(",")
            out[mid] = label
        return out

    def write(self, out_dir: Path) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "messages": out_dir / "messages.jsonl",
            "ground_truth": out_dir / "ground_truth.csv",
            "label_key": out_dir / "label_key.csv",
        }
        paths["messages"].write_text("\n".join(self.message_lines) + "\n", encoding="utf-8")
        paths["ground_truth"].write_text("\n".join(self.ground_truth_lines) + "\n", encoding="utf-8")
        paths["label_key"].write_text("\n".join(self.label_key_lines) + "\n", encoding="utf-8")
        return paths


def _burst_schedule(cfg: ContextConfig, n_days: int, rng: np.random.RandomState) -> np.ndarray:
    mult = np.ones(n_days)
    day = 0
    while day < n_days:
        if cfg.burst_prob > 0 and rng.random_sample() < cfg.burst_prob:
            length = int(rng.randint(1, cfg.burst_max_len + 1))
            level = 1.0 + (cfg.burst_multiplier - 1.0) * rng.random_sample()
            mult[day : day + length] = level
            day += length
        else:
            day += 1
    return mult


def _format_ts(day: date, second: int) -> str:
    moment = datetime.combine(day, time(0, 0), tzinfo=timezone.utc) + timedelta(seconds=second)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


class _Emitter:
    def __init__(self, cfg: ScenarioConfig, rng: np.random.RandomState):
        self.cfg = cfg
        self.rng = rng
        self.counter = 0
        self.lines: list[str] = []
        self.key: list[str] = ["id,label"]
        gaz = default_location_gazetteer()
        self.places = {c: sorted(gaz.surfaces_for(c)) for c in {x.country for x in cfg.contexts}}
        from .ingest import default_country_boxes

        self.boxes = {b.code: b for b in default_country_boxes()}

    def emit(self, day: date, country: str, text: str, relevant: bool) -> None:
        rng = self.rng
        self.counter += 1
        rec: dict = {"id": f"m{self.counter:07d}", "ts": _format_ts(day, int(rng.randint(86400)))}
        if rng.random_sample() < 0.3:
            text = text + " http://t.co/" + "".join(rng.choice(list("abcdefghij0123456789"), 6))
        rec["text"] = text
        box = self.boxes.get(country)
        if box is not None and rng.random_sample() < self.cfg.geo_fraction:
            lat = box.lat_min + (box.lat_max - box.lat_min) * (0.2 + 0.6 * rng.random_sample())
            lon = box.lon_min + (box.lon_max - box.lon_min) * (0.2 + 0.6 * rng.random_sample())
            rec["lat"], rec["lon"] = round(float(lat), 4), round(float(lon), 4)
        if rng.random_sample() < self.cfg.profile_prob:
            rec["profile_location"] = str(rng.choice(self.places[country]))
        self.lines.append(json.dumps(rec))
        self.key.append(f"{rec['id']},{'relevant' if relevant else 'irrelevant'}")

    def pick_place(self, country: str) -> str:
        return str(self.rng.choice(self.places[country]))


def generate_stream(cfg: ScenarioConfig) -> StreamBundle:
    """Generate (messages, ground truth, label key) for a scenario.

    Byte-identical output for identical config and seed.
    """
    rng = np.random.RandomState(cfg.seed)
    emitter = _Emitter(cfg, rng)
    truth_lines = ["disease,country,start,end,note"]
    for ctx in cfg.contexts:
        for w in ctx.windows:
            if w.rho > 1.0 and w.ground_truth:
                truth_lines.append(
                    f"{ctx.disease},{ctx.country},"
                    f"{cfg.start_date + timedelta(days=w.start_day)},"
                    f"{cfg.start_date + timedelta(days=w.end_day)},"
                    f"injected {w.shape} x{w.rho:g}"
                )

    gazetteers = _condition_surface_pools(cfg)
    for ctx_i, ctx in enumerate(cfg.contexts):
        bursts = _burst_schedule(ctx, cfg.duration_days, rng)
        surfaces = gazetteers[ctx_i]
        for day_i in range(cfg.duration_days):
            day = cfg.start_date + timedelta(days=day_i)
            week = day_i // 7
            window_mult = 1.0
            for w in ctx.windows:
                window_mult = max(window_mult, w.multiplier(day_i))
            n_rel = int(rng.poisson(ctx.base_rate * window_mult * bursts[day_i]))
            n_amb = int(rng.poisson(ctx.ambient_rate * bursts[day_i])) if ctx.ambient_rate else 0
            if ctx.daily_cap is not None:
                total = n_rel + n_amb
                if total > ctx.daily_cap:
                    n_rel = min(n_rel, ctx.daily_cap)
                    n_amb = ctx.daily_cap - n_rel
            n_noise = int(rng.poisson(ctx.noise_rate))

            active = [e for e in cfg.drift_events if e.active(week)]
            for _ in range(n_rel):
                if active and _apply_drift(emitter, rng, ctx, day, active):
                    continue
                cond = str(rng.choice(surfaces))
                if rng.random_sample() < cfg.text_mention_prob:
                    tpl = str(rng.choice(RELEVANT_TEMPLATES_PLACED))
                    text = tpl.format(cond=cond, place=emitter.pick_place(ctx.country), tag=ctx.disease)
                else:
                    text = str(rng.choice(RELEVANT_TEMPLATES_UNPLACED)).format(cond=cond)
                emitter.emit(day, ctx.country, text, relevant=True)
            for _ in range(n_amb):
                cond = str(rng.choice(surfaces))
                text = str(rng.choice(AMBIENT_TEMPLATES)).format(cond=cond)
                if rng.random_sample() < cfg.text_mention_prob:
                    text += " in " + emitter.pick_place(ctx.country)
                emitter.emit(day, ctx.country, text, relevant=False)
            for _ in range(n_noise):
                if active and _apply_drift(emitter, rng, ctx, day, active):
                    continue
                if rng.random_sample() < cfg.ambiguous_noise_fraction:
                    text = str(rng.choice(NEGATIVE_NOISE_TEMPLATES)).format(
                        neg=str(rng.choice(NOISE_NEGATIVES))
                    )
                else:
                    text = str(rng.choice(CHATTER_TEMPLATES))
                emitter.emit(day, ctx.country, text, relevant=False)

    return StreamBundle(
        config=cfg,
        message_lines=emitter.lines,
        ground_truth_lines=truth_lines,
        label_key_lines=emitter.key,
    )


def _condition_surface_pools(cfg: ScenarioConfig) -> list[list[str]]:
    from .ingest import default_condition_gazetteer

    gaz = default_condition_gazetteer()
    pools = []
    for ctx in cfg.contexts:
        pool = sorted(gaz.surfaces_for(ctx.disease)) or [ctx.disease]
        pool = pool + sorted(ctx.extra_symptoms)
        pools.append(pool)
    return pools


def _apply_drift(
    emitter: _Emitter,
    rng: np.random.RandomState,
    ctx: ContextConfig,
    day: date,
    active: Sequence[DriftEvent],
) -> bool:
    """Maybe replace this draw with a drift-template message; returns True if so."""
    u = rng.random_sample()
    lo = 0.0
    for event in active:
        if u < lo + event.mixing_fraction:
            term = str(rng.choice(event.terms))
            if event.kind == "confounder":
                text = str(rng.choice(CONFOUNDER_TEMPLATES)).format(term=term)
                emitter.emit(day, ctx.country, text, relevant=False)
            else:
                if rng.random_sample() < emitter.cfg.text_mention_prob:
                    text = str(rng.choice(NOVEL_TEMPLATES_PLACED)).format(
                        term=term, place=emitter.pick_place(ctx.country)
                    )
                else:
                    text = str(rng.choice(NOVEL_TEMPLATES_UNPLACED)).format(term=term)
                emitter.emit(day, ctx.country, text, relevant=True)
            return True
        lo += event.mixing_fraction
    return False


# ----------------------------------------------------------------------
# Presets: the five 2011 outbreak shapes plus the terminology-drift week.

PRESET_NAMES = (
    "anthrax_bd",
    "botulism_fr",
    "cholera_ke",
    "ecoli_de",
    "mumps_ca",
    "drift_royal_wedding",
)


def preset(name: str, seed: int = 0) -> ScenarioConfig:
    """Quadrant-calibrated scenario configs; see PRESET_NAMES."""
    year = 365
    if name == "ecoli_de":
        # low oscillation, high magnitude: steady baseline, one towering peak,
        # then a short media-echo bump that is chatter, not an outbreak
        return ScenarioConfig(
            name=name,
            duration_days=year,
            seed=seed,
            contexts=[
                ContextConfig(
                    disease="ehec",
                    country="DE",
                    base_rate=25.0,
                    noise_rate=4.0,
                    windows=[
                        OutbreakWindow(start_day=139, end_day=183, rho=40.0),
                        OutbreakWindow(
                            start_day=192, end_day=199, rho=3.0, shape="flat", ground_truth=False
                        ),
                    ],
                )
            ],
        )
    if name == "botulism_fr":
        # low oscillation, low magnitude: tiny counts inside and outside
        return ScenarioConfig(
            name=name,
            duration_days=year,
            seed=seed,
            contexts=[
                ContextConfig(
                    disease="botulism",
                    country="FR",
                    base_rate=0.8,
                    noise_rate=0.4,
                    windows=[OutbreakWindow(start_day=243, end_day=272, rho=16.0)],
                )
            ],
        )
    if name == "cholera_ke":
        return ScenarioConfig(
            name=name,
            duration_days=year,
            seed=seed,
            contexts=[
                ContextConfig(
                    disease="cholera",
                    country="KE",
                    base_rate=1.5,
                    noise_rate=0.6,
                    windows=[OutbreakWindow(start_day=304, end_day=353, rho=18.0)],
                )
            ],
        )
    if name == "anthrax_bd":
        # high oscillation, low magnitude: 0..5 messages a day all year
        return ScenarioConfig(
            name=name,
            duration_days=year,
            seed=seed,
            contexts=[
                ContextConfig(
                    disease="anthrax",
                    country="BD",
                    base_rate=0.5,
                    ambient_rate=0.5,
                    noise_rate=0.4,
                    burst_prob=0.008,
                    burst_multiplier=7.0,
                    burst_max_len=4,
                    daily_cap=5,
                    windows=[
                        OutbreakWindow(start_day=151, end_day=181, rho=3.0, shape="flat"),
                        # recurring anniversary chatter, not outbreaks
                        OutbreakWindow(start_day=84, end_day=90, rho=8.0, shape="flat", ground_truth=False),
                        OutbreakWindow(start_day=308, end_day=314, rho=8.0, shape="flat", ground_truth=False),
                    ],
                )
            ],
        )
    if name == "mumps_ca":
        # high oscillation, high magnitude: continuous ambiguous chatter
        return ScenarioConfig(
            name=name,
            duration_days=year,
            seed=seed,
            contexts=[
                ContextConfig(
                    disease="mumps",
                    country="CA",
                    base_rate=8.0,
                    ambient_rate=14.0,
                    noise_rate=4.0,
                    burst_prob=0.05,
                    burst_multiplier=6.0,
                    burst_max_len=7,
                    windows=[
                        OutbreakWindow(start_day=151, end_day=181, rho=1.6, shape="flat"),
                        # software-release chatter bumps: ambiguous term, not outbreaks
                        OutbreakWindow(start_day=56, end_day=62, rho=3.0, shape="flat", ground_truth=False),
                        OutbreakWindow(start_day=280, end_day=286, rho=3.0, shape="flat", ground_truth=False),
                    ],
                )
            ],
        )
    if name == "drift_royal_wedding":
        # six weeks; weeks 3+ mix in novel relevant terms and an ambiguous
        # celebrity-event confounder that shares the word "fever"
        return ScenarioConfig(
            name=name,
            duration_days=42,
            seed=seed,
            contexts=[
                ContextConfig(
                    disease="fever",
                    country="GB",
                    base_rate=30.0,
                    noise_rate=30.0,
                    extra_symptoms=["sore throat", "rash", "cough", "headache"],
                )
            ],
            drift_events=[
                DriftEvent(week=3, terms=["royal wedding fever", "cup final fever"], mixing_fraction=0.11, kind="confounder"),
                DriftEvent(week=3, terms=["nodavirus", "swinepox", "marsh pox"], mixing_fraction=0.11, kind="novel_relevant"),
            ],
        )
    raise ValueError(f"unknown preset {name!r}; choose one of {', '.join(PRESET_NAMES)}")


# ----------------------------------------------------------------------
# Simulated annotators for label-queue replays.


def run_simulated_annotation(
    tasks: Sequence[LabelTask],
    truth: dict[str, str],
    n_workers: int = 12,
    per_task: int = 3,
    accuracy: float = 0.92,
    seed: int = 0,
) -> dict[str, WorkerRecord]:
    """Have a seeded worker pool judge every open task.

    Each worker answers the true label with the given probability and the
    opposite otherwise; gold tasks use their gold label as truth.
    """
    rng = np.random.RandomState(seed)
    workers = {f"w{i:03d}": WorkerRecord(worker_id=f"w{i:03d}") for i in range(n_workers)}
    ids = sorted(workers)
    for task in tasks:
        answer_key = task.gold_label if task.is_gold else truth.get(task.message.id)
        if answer_key is None:
            raise ValueError(f"no truth for task {task.task_id}")
        chosen = rng.choice(len(ids), size=min(per_task, len(ids)), replace=False)
        for wi in chosen:
            wid = ids[int(wi)]
            correct = rng.random_sample() < accuracy
            label = answer_key if correct else ("irrelevant" if answer_key == "relevant" else "relevant")
            workers[wid] = record_judgment(task, workers[wid], label)
    return workers
