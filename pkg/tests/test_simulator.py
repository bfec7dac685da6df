from collections import Counter
from datetime import date

import numpy as np
import pytest

from epistream.evaluation import parse_ground_truth
from epistream.ingest import ParseStats, parse_messages
from epistream.labeling import create_batch
from epistream.pipeline import Annotator
from epistream.series import DiseaseContext, build_series, characterize_series
from epistream.simulator import (
    PRESET_NAMES,
    ContextConfig,
    OutbreakWindow,
    ScenarioConfig,
    generate_stream,
    preset,
    run_simulated_annotation,
)


def small_config(seed=0, **ctx_kwargs):
    defaults = dict(disease="cholera", country="KE", base_rate=3.0, noise_rate=1.0)
    defaults.update(ctx_kwargs)
    return ScenarioConfig(
        name="small",
        duration_days=60,
        seed=seed,
        contexts=[ContextConfig(**defaults)],
    )


class TestGenerateStream:
    def test_byte_identical_given_seed(self):
        a = generate_stream(preset("botulism_fr", seed=7))
        b = generate_stream(preset("botulism_fr", seed=7))
        assert a.message_lines == b.message_lines
        assert a.ground_truth_lines == b.ground_truth_lines
        assert a.label_key_lines == b.label_key_lines

    def test_no_outbreak_no_events(self):
        cfg = small_config()
        bundle = generate_stream(cfg)
        assert bundle.ground_truth_lines == ["disease,country,start,end,note"]
        assert parse_ground_truth(bundle.ground_truth_lines) == []

    def test_messages_parse_cleanly(self):
        bundle = generate_stream(small_config(seed=1))
        stats = ParseStats()
        messages = list(parse_messages(bundle.message_lines, stats))
        assert stats.malformed == 0
        assert len(messages) == len(bundle.message_lines)
        key = bundle.label_key()
        assert set(key) == {m.id for m in messages}

    def test_window_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(
                name="bad",
                duration_days=30,
                contexts=[
                    ContextConfig(
                        disease="x",
                        country="KE",
                        base_rate=1.0,
                        windows=[OutbreakWindow(10, 40, 5.0)],
                    )
                ],
            )

    def test_injection_lifts_window_mean(self):
        # flat injection: mean daily relevant count inside windows should
        # clear rho/2 x the baseline mean, seed-averaged
        ratios = []
        for seed in range(20):
            cfg = ScenarioConfig(
                name="inj",
                duration_days=84,
                seed=seed,
                contexts=[
                    ContextConfig(
                        disease="cholera",
                        country="KE",
                        base_rate=2.0,
                        noise_rate=0.0,
                        windows=[OutbreakWindow(42, 69, 8.0, shape="flat")],
                    )
                ],
            )
            bundle = generate_stream(cfg)
            key = bundle.label_key()
            per_day = Counter()
            for m in parse_messages(bundle.message_lines):
                if key[m.id] == "relevant":
                    per_day[m.timestamp.date()] += 1
            start = cfg.start_date
            inside = [per_day.get(start + i * date.resolution, 0) for i in range(42, 70)]
            outside = [per_day.get(start + i * date.resolution, 0) for i in range(0, 42)]
            ratios.append(np.mean(inside) / max(np.mean(outside), 1e-9))
        assert np.mean(ratios) >= 4.0  # rho/2

    def test_geo_fraction_calibrated(self):
        cfg = ScenarioConfig(
            name="geo",
            duration_days=80,
            seed=3,
            geo_fraction=0.01,
            contexts=[ContextConfig(disease="ehec", country="DE", base_rate=150.0, noise_rate=0.0)],
        )
        bundle = generate_stream(cfg)
        messages = list(parse_messages(bundle.message_lines))
        assert len(messages) > 10_000
        frac = sum(1 for m in messages if m.geo is not None) / len(messages)
        assert abs(frac - 0.01) <= 0.005


class TestPresets:
    def test_unknown_preset_lists_names(self):
        with pytest.raises(ValueError) as err:
            preset("nope")
        for name in PRESET_NAMES:
            assert name in str(err.value)

    def test_anthrax_counts_bounded_outside_windows(self):
        cfg = preset("anthrax_bd", seed=5)
        bundle = generate_stream(cfg)
        annotator = Annotator()
        per_day = Counter()
        for m in parse_messages(bundle.message_lines):
            a = annotator.annotate(m)
            if a.passed:
                per_day[m.timestamp.date()] += 1
        window = cfg.contexts[0].windows[0]
        for day, count in per_day.items():
            day_index = (day - cfg.start_date).days
            if not window.start_day <= day_index <= window.end_day:
                assert count <= 5, f"day {day} has {count}"

    def test_ecoli_quadrant_low_osc_high_mag(self):
        cfg = preset("ecoli_de", seed=0)
        bundle = generate_stream(cfg)
        located = []
        annotator = Annotator()
        for m in parse_messages(bundle.message_lines):
            a = annotator.annotate(m)
            if a.passed and a.located:
                located.append((m, a.condition_ids, a.country))
        s = build_series(
            located,
            DiseaseContext("ehec", "DE"),
            cfg.start_date,
            cfg.start_date + (cfg.duration_days - 1) * date.resolution,
        )
        events = parse_ground_truth(bundle.ground_truth_lines)
        exclusion = [(e.start_date, e.end_date) for e in events]
        q = characterize_series(s, baseline_exclusion=exclusion)
        assert (q.oscillation, q.magnitude) == ("low", "high"), (q.osc_score, q.mag_score)

    def test_botulism_quadrant_low_low(self):
        cfg = preset("botulism_fr", seed=0)
        bundle = generate_stream(cfg)
        annotator = Annotator()
        located = [
            (m, a.condition_ids, a.country)
            for m in parse_messages(bundle.message_lines)
            for a in [annotator.annotate(m)]
            if a.passed and a.located
        ]
        s = build_series(
            located,
            DiseaseContext("botulism", "FR"),
            cfg.start_date,
            cfg.start_date + (cfg.duration_days - 1) * date.resolution,
        )
        events = parse_ground_truth(bundle.ground_truth_lines)
        q = characterize_series(s, baseline_exclusion=[(e.start_date, e.end_date) for e in events])
        assert (q.oscillation, q.magnitude) == ("low", "low"), (q.osc_score, q.mag_score)

    def test_drift_preset_labels(self):
        bundle = generate_stream(preset("drift_royal_wedding", seed=2))
        key = bundle.label_key()
        saw_confounder = saw_novel = False
        for line, m in zip(bundle.message_lines, parse_messages(bundle.message_lines)):
            if "royal wedding fever" in m.text:
                assert key[m.id] == "irrelevant"
                saw_confounder = True
            if "nodavirus" in m.text or "swinepox" in m.text:
                assert key[m.id] == "relevant"
                saw_novel = True
        assert saw_confounder and saw_novel

    def test_drift_only_after_injection_week(self):
        cfg = preset("drift_royal_wedding", seed=4)
        bundle = generate_stream(cfg)
        for m in parse_messages(bundle.message_lines):
            week = (m.timestamp.date() - cfg.start_date).days // 7
            if "royal wedding" in m.text or "nodavirus" in m.text or "swinepox" in m.text:
                assert week >= 3


class TestSimulatedAnnotators:
    def test_accuracy_close_to_target(self):
        bundle = generate_stream(small_config(seed=6))
        messages = list(parse_messages(bundle.message_lines))[:300]
        truth = bundle.label_key()
        tasks = create_batch(messages, [(messages[0], truth[messages[0].id])], gold_ratio=0.1, seed=0)
        workers = run_simulated_annotation(tasks, truth, accuracy=0.92, seed=0)
        judged = [j for t in tasks for j in t.judgments]
        correct = 0
        for t in tasks:
            answer = t.gold_label if t.is_gold else truth[t.message.id]
            correct += sum(1 for j in t.judgments if j.label == answer)
        rate = correct / len(judged)
        assert abs(rate - 0.92) < 0.03
        assert all(w.gold_seen >= 0 for w in workers.values())
