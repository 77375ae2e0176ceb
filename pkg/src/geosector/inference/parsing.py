"""Turning raw model output into labels, and the clue-text value type."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from ..taxonomy import SECTION_INDEX, UNKNOWN_LABEL, VIOLATION_LABEL

logger = logging.getLogger(__name__)

OUTPUT_MODES = ("text", "json")

# Case-insensitive marker for a clue agent reporting that its source holds
# nothing usable.  Containment rather than equality: models phrase the
# sentinel with and without the trailing "clues found" wording.
NO_EVIDENCE_MARKER = "no economic activity"


@dataclass(frozen=True)
class ClueText:
    """Free-form clue output of one extraction call, tagged by source."""

    source: str
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("clue text must be non-empty")


def is_no_evidence(text: str) -> bool:
    """True when a clue text declares the source carries no activity signal."""
    return NO_EVIDENCE_MARKER in text.lower()


@dataclass(frozen=True)
class Prediction:
    """Parsed classification answer.

    label is a section letter, "UNK" for a declared-uncertain answer, or
    "VIOLATION" when the response did not follow the output contract.  The
    raw response text is always preserved for audit.
    """

    label: str
    explanation: str | None
    raw: str

    @property
    def is_section(self) -> bool:
        return self.label in SECTION_INDEX


def _label_from_token(text: str) -> str | None:
    token = text.strip().upper()
    if token == UNKNOWN_LABEL:
        return UNKNOWN_LABEL
    if len(token) == 1 and token in SECTION_INDEX:
        return token
    return None


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    index = text.find("{")
    while index != -1:
        try:
            value, _ = decoder.raw_decode(text, index)
        except ValueError:
            index = text.find("{", index + 1)
            continue
        if isinstance(value, dict):
            return value
        index = text.find("{", index + 1)
    return None


def parse_prediction(raw: str, output_mode: str = "text") -> Prediction:
    """Classify a raw response as a section letter, UNK, or VIOLATION.

    Total over arbitrary input: this never raises, so downstream metrics
    can count instruction violations instead of crashing on them.
    """
    try:
        text = raw if isinstance(raw, str) else str(raw)
        if output_mode == "text":
            label = _label_from_token(text)
            if label is not None:
                return Prediction(label, None, text)
            return Prediction(VIOLATION_LABEL, None, text)
        if output_mode == "json":
            obj = _first_json_object(text)
            if obj is not None:
                explanation = obj.get("EXPLANATION")
                answer = obj.get("LLM_RESPONSE")
                if isinstance(explanation, str) and isinstance(answer, str):
                    label = _label_from_token(answer)
                    if label is not None:
                        return Prediction(label, explanation, text)
            return Prediction(VIOLATION_LABEL, None, text)
        return Prediction(VIOLATION_LABEL, None, text)
    except Exception:  # pragma: no cover - totality backstop
        logger.exception("unexpected parse failure")
        return Prediction(VIOLATION_LABEL, None, repr(raw))
