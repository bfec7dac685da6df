import json

import numpy as np
import pytest

from epistream.ingest import (
    Gazetteer,
    Message,
    ParseStats,
    annotate_conditions,
    default_condition_gazetteer,
    default_location_gazetteer,
    default_negatives,
    extract_conditions,
    geo_to_country,
    infer_location,
    keyword_filter,
    load_country_boxes,
    parse_messages,
    tokenize,
    tokenize_with_spans,
)


def msg(text, geo=None, profile=None, mid="1", ts="2011-05-23T10:00:00Z"):
    lines = [json.dumps({"id": mid, "ts": ts, "text": text})]
    m = next(parse_messages(lines))
    if geo or profile:
        from datetime import datetime, timezone

        m = Message.from_fields(mid, m.timestamp, text, geo=geo, profile_location=profile)
    return m


class TestParseMessages:
    def test_basic_line(self):
        m = msg("EHEC in Hamburg")
        assert m.id == "1"
        assert m.text == "EHEC in Hamburg"
        assert m.hashtags == frozenset()
        assert m.timestamp.hour == 10

    def test_missing_text_is_malformed(self):
        stats = ParseStats()
        out = list(parse_messages([json.dumps({"id": "1", "ts": "2011-05-23T10:00:00Z"})], stats))
        assert out == []
        assert stats.malformed == 1

    def test_counts(self):
        lines = [
            json.dumps({"id": str(i), "ts": "2011-05-23T10:00:00Z", "text": f"t{i}"})
            for i in range(3)
        ]
        lines.insert(2, "{not json")
        stats = ParseStats()
        out = list(parse_messages(lines, stats))
        assert len(out) == 3
        assert (stats.ok, stats.malformed) == (3, 1)
        assert [m.id for m in out] == ["0", "1", "2"]  # order preserved

    def test_duplicate_id_skipped(self):
        line = json.dumps({"id": "x", "ts": "2011-05-23T10:00:00Z", "text": "hi"})
        stats = ParseStats()
        out = list(parse_messages([line, line], stats))
        assert len(out) == 1
        assert stats.duplicate == 1

    def test_oversize_text_malformed(self):
        stats = ParseStats()
        line = json.dumps({"id": "1", "ts": "2011-05-23T10:00:00Z", "text": "x" * 600})
        assert list(parse_messages([line], stats)) == []
        assert stats.malformed == 1

    def test_invalid_geo_dropped(self):
        line = json.dumps(
            {"id": "1", "ts": "2011-05-23T10:00:00Z", "text": "hi", "lat": 95.0, "lon": 10.0}
        )
        (m,) = parse_messages([line])
        assert m.geo is None

    def test_hashtags_and_urls(self):
        m = msg("#EHEC news http://t.co/abc")
        assert m.hashtags == frozenset({"ehec"})
        assert m.urls_present


class TestTokenize:
    def test_punctuation_and_emoticon(self):
        assert tokenize("Sore throat & fever :(") == ["sore", "throat", "fever"]

    def test_hashtag_prefix_kept(self):
        assert tokenize("#EHEC outbreak, Hamburg!") == ["#ehec", "outbreak", "hamburg"]

    def test_empty(self):
        assert tokenize("") == []

    def test_urls_dropped(self):
        assert tokenize("see http://t.co/xyz now") == ["see", "now"]

    def test_idempotent_on_clean_tokens(self):
        rng = np.random.RandomState(7)
        pool = ["fever", "#ehec", "@who", "hamburg", "sore", "123"]
        for _ in range(50):
            toks = [pool[i] for i in rng.randint(0, len(pool), size=rng.randint(1, 8))]
            assert tokenize(" ".join(toks)) == toks

    def test_spans_are_byte_offsets(self):
        text = "café fever"
        spans = tokenize_with_spans(text)
        raw = text.encode("utf-8")
        for t in spans:
            assert raw[t.start : t.end].decode("utf-8").lower() == t.text


@pytest.fixture
def cond_gaz():
    return Gazetteer.from_tsv(
        ["sore throat\tsore_throat", "fever\tfever", "red streaks\tred_streaks", "streaks\tstreaks"],
        "condition",
    )


class TestExtractConditions:
    def test_longest_match(self, cond_gaz):
        matches = extract_conditions(["sore", "throat", "fever"], cond_gaz)
        assert [m.condition_id for m in matches] == ["sore_throat", "fever"]
        assert matches[0].surface == "sore throat"

    def test_no_entry(self, cond_gaz):
        assert extract_conditions(["pizza", "party"], cond_gaz) == []

    def test_overlap_prefers_longest(self, cond_gaz):
        matches = extract_conditions(["red", "streaks"], cond_gaz)
        assert [m.condition_id for m in matches] == ["red_streaks"]

    def test_spans_against_real_text(self, cond_gaz):
        text = "Sore throat & fever :("
        matches = annotate_conditions(text, cond_gaz)
        raw = text.encode("utf-8")
        for m in matches:
            assert m.surface == raw[m.span[0] : m.span[1]].decode("utf-8").lower()
        starts = [m.span[0] for m in matches]
        assert starts == sorted(starts)

    def test_spans_disjoint_sorted_fuzz(self):
        gaz = default_condition_gazetteer()
        rng = np.random.RandomState(3)
        words = ["sore", "throat", "fever", "rash", "red", "streaks", "x", "flu", "e", "coli"]
        for _ in range(100):
            toks = [words[i] for i in rng.randint(0, len(words), size=rng.randint(0, 12))]
            matches = extract_conditions(toks, gaz)
            prev_end = -1
            for m in matches:
                assert m.span[0] >= prev_end
                prev_end = m.span[1]


class TestKeywordFilter:
    def test_negative_hit(self, cond_gaz):
        m = msg("bieber fever is real")
        matches = annotate_conditions(m.text, cond_gaz)
        assert matches  # "fever" matched
        decision = keyword_filter(m, matches, ["bieber fever"])
        assert decision.verdict == "reject_negative"
        assert decision.matched_negative == ["bieber fever"]

    def test_no_positive(self, cond_gaz):
        m = msg("pizza party tonight")
        decision = keyword_filter(m, [], ["bieber fever"])
        assert decision.verdict == "reject_no_positive"

    def test_pass(self, cond_gaz):
        m = msg("fever in hamburg")
        matches = annotate_conditions(m.text, cond_gaz)
        decision = keyword_filter(m, matches, ["bieber fever"])
        assert decision.verdict == "pass"
        assert decision.matched_positive

    def test_negative_on_hashtag(self, cond_gaz):
        m = msg("my fever #bieberfever")
        matches = annotate_conditions(m.text, cond_gaz)
        decision = keyword_filter(m, matches, ["bieberfever"])
        assert decision.verdict == "reject_negative"

    def test_pass_implies_positive_fuzz(self):
        gaz = default_condition_gazetteer()
        negatives = default_negatives()
        rng = np.random.RandomState(11)
        vocab = ["fever", "bieber", "cabin", "party", "hamburg", "ehec", "flu", "zzz"]
        for i in range(200):
            text = " ".join(vocab[j] for j in rng.randint(0, len(vocab), size=rng.randint(0, 8)))
            m = msg(text, mid=str(i))
            decision = keyword_filter(m, annotate_conditions(text, gaz), negatives)
            if decision.verdict == "pass":
                assert decision.matched_positive


class TestInferLocation:
    def test_text_beats_profile(self):
        gaz = default_location_gazetteer()
        m = msg("cholera outbreak in Nairobi", profile="London")
        assert infer_location(m, gaz) == "KE"

    def test_geo_rule(self):
        # oracle: scan the shipped bounding-box table directly
        gaz = default_location_gazetteer()
        boxes = load_country_boxes()
        lat, lon = 52.52, 13.40
        containing = [b.code for b in boxes if b.contains(lat, lon)]
        assert "DE" in containing
        expected = min(
            (b for b in boxes if b.contains(lat, lon)), key=lambda b: (b.area(), b.code)
        ).code
        m = msg("no location words here", geo=(lat, lon))
        assert infer_location(m, gaz) == expected == "DE"

    def test_profile_rule(self):
        gaz = default_location_gazetteer()
        m = msg("no location words here", profile="Paris, France")
        assert infer_location(m, gaz) == "FR"

    def test_unlocatable(self):
        gaz = default_location_gazetteer()
        m = msg("nothing to see")
        assert infer_location(m, gaz) is None

    def test_out_of_range_geo_ignored(self):
        gaz = default_location_gazetteer()
        m = msg("hello", geo=(95.0, 10.0))
        assert infer_location(m, gaz) is None

    def test_insertion_order_invariance(self):
        lines = ["nairobi\tKE", "london\tGB", "paris\tFR"]
        g1 = Gazetteer.from_tsv(lines, "location")
        g2 = Gazetteer.from_tsv(list(reversed(lines)), "location")
        m = msg("met in Nairobi then London")
        assert infer_location(m, g1) == infer_location(m, g2) == "KE"

    def test_geo_to_country_no_match(self):
        assert geo_to_country(0.0, -160.0, load_country_boxes()) is None


class TestGazetteer:
    def test_ambiguous_surface_first_wins(self):
        g = Gazetteer.from_tsv(["london\tGB", "london\tCA"], "location")
        assert g.entries["london"] == "GB"
        assert g.ambiguous_count == 1

    def test_comments_and_blanks(self):
        g = Gazetteer.from_tsv(["# comment", "", "fever\tfever"], "condition")
        assert g.entries == {"fever": "fever"}

    def test_default_gazetteers_load(self):
        assert default_condition_gazetteer().entries["ehec"] == "ehec"
        assert default_location_gazetteer().entries["hamburg"] == "DE"
