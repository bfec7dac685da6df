"""Message parsing, tokenization, entity extraction, and keyword filtering.

The first hop of the pipeline: raw line-delimited records become Message
objects, tokens are matched against condition/location gazetteers, and a
positive/negative keyword filter decides health relevance at the lexical
level (the adaptive classifier makes the semantic call later).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from typing import Iterable, Iterator, Optional, Sequence

MAX_TEXT_BYTES = 560

_TOKEN_RE = re.compile(r"https?://\S+|[#@]?\w+")
_URL_RE = re.compile(r"https?://")
# temporal tagging is metadata-only: explicit ISO dates plus today/yesterday
_DATE_RE = re.compile(r"\b(\d{4}-\d{2}-\d{2}|today|yesterday)\b")


class IngestError(Exception):
    """Unreadable input source or invalid gazetteer data."""


@dataclass(frozen=True)
class Token:
    """One token with its byte span in the original text."""

    text: str
    start: int
    end: int


@dataclass
class Message:
    id: str
    timestamp: datetime
    text: str
    geo: Optional[tuple[float, float]] = None
    profile_location: Optional[str] = None
    hashtags: frozenset[str] = field(default_factory=frozenset)
    urls_present: bool = False

    @classmethod
    def from_fields(
        cls,
        id: str,
        timestamp: datetime,
        text: str,
        geo: Optional[tuple[float, float]] = None,
        profile_location: Optional[str] = None,
    ) -> "Message":
        """Build a Message, deriving hashtags and the URL flag from the text."""
        tags = frozenset(
            t.text[1:] for t in tokenize_with_spans(text) if t.text.startswith("#") and len(t.text) > 1
        )
        return cls(
            id=id,
            timestamp=timestamp,
            text=text,
            geo=geo,
            profile_location=profile_location,
            hashtags=tags,
            urls_present=bool(_URL_RE.search(text)),
        )

    def temporal_mentions(self) -> list[str]:
        return _DATE_RE.findall(self.text.lower())


@dataclass(frozen=True)
class ConditionMatch:
    condition_id: str
    surface: str
    span: tuple[int, int]


@dataclass
class Gazetteer:
    """Surface-form to canonical-id mapping (kind: condition or location).

    First listed mapping wins for an ambiguous surface; the number of
    shadowed remappings is kept in ``ambiguous_count``.
    """

    entries: dict[str, str]
    kind: str
    ambiguous_count: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("condition", "location"):
            raise IngestError(f"unknown gazetteer kind: {self.kind!r}")
        for surface in self.entries:
            if not surface:
                raise IngestError("empty gazetteer surface form")
            if surface != surface.lower():
                raise IngestError(f"gazetteer surface not lowercase: {surface!r}")

    @classmethod
    def from_tsv(cls, lines: Iterable[str], kind: str) -> "Gazetteer":
        entries: dict[str, str] = {}
        ambiguous = 0
        for raw in lines:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                surface, canonical = line.split("\t")
            except ValueError as exc:
                raise IngestError(f"bad gazetteer line: {line!r}") from exc
            surface = surface.strip().lower()
            canonical = canonical.strip()
            if surface in entries:
                if entries[surface] != canonical:
                    ambiguous += 1
                continue
            entries[surface] = canonical
        return cls(entries=entries, kind=kind, ambiguous_count=ambiguous)

    def max_ngram(self) -> int:
        return min(4, max((s.count(" ") + 1 for s in self.entries), default=1))

    def surfaces_for(self, canonical: str) -> set[str]:
        return {s for s, c in self.entries.items() if c == canonical}


@dataclass
class FilterDecision:
    verdict: str  # pass | reject_negative | reject_no_positive
    matched_positive: list[ConditionMatch]
    matched_negative: list[str]


@dataclass
class ParseStats:
    ok: int = 0
    malformed: int = 0
    duplicate: int = 0


def _parse_timestamp(value: str) -> datetime:
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_messages(lines: Iterable[str], stats: Optional[ParseStats] = None) -> Iterator[Message]:
    """Parse line-delimited JSON records into Messages.

    Malformed lines and duplicate ids are skipped and counted in ``stats``.
    Record fields: id, ts (ISO-8601), text, optional lat/lon/profile_location.
    """
    if stats is None:
        stats = ParseStats()
    seen: set[str] = set()
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            msg_id = str(rec["id"])
            text = rec["text"]
            if not isinstance(text, str) or len(text.encode("utf-8")) > MAX_TEXT_BYTES:
                raise ValueError("bad text")
            if not msg_id:
                raise ValueError("empty id")
            ts = _parse_timestamp(str(rec.get("ts") or rec["timestamp"]))
            geo = None
            if rec.get("lat") is not None and rec.get("lon") is not None:
                lat, lon = float(rec["lat"]), float(rec["lon"])
                if -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0:
                    geo = (lat, lon)
            profile = rec.get("profile_location")
            if profile is not None:
                profile = str(profile)
        except (KeyError, ValueError, TypeError, json.JSONDecodeError):
            stats.malformed += 1
            continue
        if msg_id in seen:
            stats.duplicate += 1
            continue
        seen.add(msg_id)
        stats.ok += 1
        yield Message.from_fields(msg_id, ts, text, geo=geo, profile_location=profile)


def tokenize_with_spans(text: str) -> list[Token]:
    """Tokenize keeping byte offsets into the UTF-8 encoding of ``text``.

    Lowercased; '#'/'@' prefixes retained; URLs and pure-punctuation
    runs (emoticons etc.) are dropped.
    """
    if not text:
        return []
    # byte offset of each character position (prefix sums of UTF-8 lengths)
    byte_at = [0]
    for ch in text:
        byte_at.append(byte_at[-1] + len(ch.encode("utf-8")))
    out = []
    for m in _TOKEN_RE.finditer(text):
        tok = m.group(0)
        if _URL_RE.match(tok):
            continue
        out.append(Token(tok.lower(), byte_at[m.start()], byte_at[m.end()]))
    return out


def tokenize(text: str) -> list[str]:
    return [t.text for t in tokenize_with_spans(text)]


def _as_tokens(tokens: Sequence) -> list[Token]:
    """Accept either Token objects or plain strings (spans over the joined text)."""
    if tokens and isinstance(tokens[0], str):
        out, pos = [], 0
        for t in tokens:
            b = len(t.encode("utf-8"))
            out.append(Token(t.lower(), pos, pos + b))
            pos += b + 1
        return out
    return list(tokens)


def _lookup_token(token: str) -> str:
    return token.lstrip("#@")


def extract_conditions(
    tokens: Sequence, gazetteer: Gazetteer, text: Optional[str] = None
) -> list[ConditionMatch]:
    """Longest-match, non-overlapping, left-to-right n-gram scan (n <= 4).

    When ``text`` is given, spans are byte offsets into it and each surface
    is the lowercased text slice; otherwise spans refer to the
    space-joined token string.
    """
    if gazetteer.kind != "condition":
        raise IngestError("extract_conditions requires a condition gazetteer")
    return _scan(tokens, gazetteer, raw_text=text)


def annotate_conditions(text: str, gazetteer: Gazetteer) -> list[ConditionMatch]:
    return extract_conditions(tokenize_with_spans(text), gazetteer, text=text)


def _scan(tokens: Sequence, gazetteer: Gazetteer, raw_text: Optional[str] = None) -> list[ConditionMatch]:
    toks = _as_tokens(tokens)
    words = [_lookup_token(t.text) for t in toks]
    raw_bytes = raw_text.encode("utf-8") if raw_text is not None else None
    max_n = gazetteer.max_ngram()
    matches = []
    i = 0
    while i < len(toks):
        hit = None
        for n in range(min(max_n, len(toks) - i), 0, -1):
            canonical = gazetteer.entries.get(" ".join(words[i : i + n]))
            if canonical is not None:
                hit = (n, canonical)
                break
        if hit is None:
            i += 1
            continue
        n, canonical = hit
        span = (toks[i].start, toks[i + n - 1].end)
        if raw_bytes is not None:
            surface = raw_bytes[span[0] : span[1]].decode("utf-8").lower()
        else:
            surface = " ".join(t.text for t in toks[i : i + n])
        matches.append(ConditionMatch(condition_id=canonical, surface=surface, span=span))
        i += n
    return matches


def keyword_filter(
    message: Message, matches: list[ConditionMatch], negatives: Sequence[str]
) -> FilterDecision:
    """Pass iff at least one condition matched and no negative keyword hit.

    Negatives are matched on token n-grams and, for single-word phrases,
    on hashtags with the '#' stripped.
    """
    tokens = [_lookup_token(t) for t in tokenize(message.text)]
    token_set = set(tokens)
    grams: set[str] = set(tokens)
    for n in (2, 3, 4):
        grams.update(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    hit = []
    for neg in negatives:
        if neg in grams or (" " not in neg and (neg in message.hashtags or neg in token_set)):
            hit.append(neg)
    if hit:
        return FilterDecision("reject_negative", matches, hit)
    if not matches:
        return FilterDecision("reject_no_positive", [], [])
    return FilterDecision("pass", matches, [])


@dataclass(frozen=True)
class CountryBox:
    code: str
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max

    def area(self) -> float:
        return (self.lat_max - self.lat_min) * (self.lon_max - self.lon_min)


def load_country_boxes(lines: Optional[Iterable[str]] = None) -> list[CountryBox]:
    if lines is None:
        lines = _read_data("country_boxes.tsv")
    boxes = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        code, lat_min, lat_max, lon_min, lon_max = line.split("\t")
        boxes.append(CountryBox(code, float(lat_min), float(lat_max), float(lon_min), float(lon_max)))
    return boxes


def geo_to_country(lat: float, lon: float, boxes: Sequence[CountryBox]) -> Optional[str]:
    """Smallest containing box wins, so city-scale boxes beat continental ones."""
    containing = [b for b in boxes if b.contains(lat, lon)]
    if not containing:
        return None
    return min(containing, key=lambda b: (b.area(), b.code)).code


def infer_location(
    message: Message,
    gazetteer: Gazetteer,
    boxes: Optional[Sequence[CountryBox]] = None,
) -> Optional[str]:
    """Resolve a message to a country code.

    Precedence: location mention in the text, then geo coordinates via the
    offline bounding-box table, then a gazetteer match in the profile
    location. None means the message is discarded downstream.
    """
    if gazetteer.kind != "location":
        raise IngestError("infer_location requires a location gazetteer")
    text_hits = _scan(tokenize_with_spans(message.text), gazetteer)
    if text_hits:
        return text_hits[0].condition_id
    if message.geo is not None:
        lat, lon = message.geo
        if -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0:
            code = geo_to_country(lat, lon, boxes if boxes is not None else default_country_boxes())
            if code is not None:
                return code
    if message.profile_location:
        profile_hits = _scan(tokenize_with_spans(message.profile_location), gazetteer)
        if profile_hits:
            return profile_hits[0].condition_id
    return None


def _read_data(name: str) -> list[str]:
    return resources.files("epistream.data").joinpath(name).read_text(encoding="utf-8").splitlines()


_DEFAULTS: dict[str, object] = {}


def default_condition_gazetteer() -> Gazetteer:
    if "conditions" not in _DEFAULTS:
        _DEFAULTS["conditions"] = Gazetteer.from_tsv(_read_data("conditions.tsv"), "condition")
    return _DEFAULTS["conditions"]  # type: ignore[return-value]


def default_location_gazetteer() -> Gazetteer:
    if "locations" not in _DEFAULTS:
        _DEFAULTS["locations"] = Gazetteer.from_tsv(_read_data("locations.tsv"), "location")
    return _DEFAULTS["locations"]  # type: ignore[return-value]


def default_negatives() -> list[str]:
    if "negatives" not in _DEFAULTS:
        _DEFAULTS["negatives"] = [
            line.strip()
            for line in _read_data("negatives.txt")
            if line.strip() and not line.startswith("#")
        ]
    return list(_DEFAULTS["negatives"])  # type: ignore[arg-type]


def default_country_boxes() -> list[CountryBox]:
    if "boxes" not in _DEFAULTS:
        _DEFAULTS["boxes"] = load_country_boxes()
    return list(_DEFAULTS["boxes"])  # type: ignore[arg-type]
