"""Shared offline pipeline steps: annotate, filter, locate, classify.

Used by the CLI, the service, and the benchmark harness so they all run
messages through the same path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

from .classifier import LinearModel, predict, vectorize
from .ingest import (
    ConditionMatch,
    FilterDecision,
    Gazetteer,
    Message,
    annotate_conditions,
    default_condition_gazetteer,
    default_country_boxes,
    default_location_gazetteer,
    default_negatives,
    infer_location,
    keyword_filter,
    tokenize,
)


@dataclass
class AnnotatedMessage:
    message: Message
    matches: list[ConditionMatch]
    decision: FilterDecision
    country: Optional[str]

    @property
    def condition_ids(self) -> list[str]:
        seen = []
        for m in self.matches:
            if m.condition_id not in seen:
                seen.append(m.condition_id)
        return seen

    @property
    def passed(self) -> bool:
        return self.decision.verdict == "pass"

    @property
    def located(self) -> bool:
        return self.country is not None


class Annotator:
    def __init__(
        self,
        condition_gazetteer: Optional[Gazetteer] = None,
        location_gazetteer: Optional[Gazetteer] = None,
        negatives: Optional[Sequence[str]] = None,
    ):
        self.conditions = condition_gazetteer or default_condition_gazetteer()
        self.locations = location_gazetteer or default_location_gazetteer()
        self.negatives = list(negatives) if negatives is not None else default_negatives()
        self.boxes = default_country_boxes()

    def annotate(self, message: Message) -> AnnotatedMessage:
        matches = annotate_conditions(message.text, self.conditions)
        decision = keyword_filter(message, matches, self.negatives)
        country = infer_location(message, self.locations, self.boxes)
        return AnnotatedMessage(message=message, matches=matches, decision=decision, country=country)


def located_relevant(
    messages: Iterable[Message], annotator: Optional[Annotator] = None
) -> Iterator[tuple[Message, list[str], str]]:
    """(message, condition ids, country) for filter-passed located messages."""
    ann = annotator or Annotator()
    for message in messages:
        a = ann.annotate(message)
        if a.passed and a.located:
            yield message, a.condition_ids, a.country


def classify_message(model: LinearModel, message: Message) -> tuple[str, float]:
    return predict(model, vectorize(tokenize(message.text), dim=model.dim))
