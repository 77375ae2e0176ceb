"""Prompt building, gateway client, response parsing, and pipeline runners."""

from .gateway import ChatGateway, GatewayError, GatewayResponse
from .parsing import ClueText, Prediction, is_no_evidence, parse_prediction
from .prompts import (
    CONFIGURATIONS,
    SOURCE_ORDER,
    MissingResourceError,
    PromptTemplate,
    build_clue_prompt,
    build_decision_prompt,
    build_zero_shot_prompt,
    clue_kinds_for,
)
from .runner import InferenceRecord, read_records, run_pipeline, write_records

__all__ = [
    "CONFIGURATIONS",
    "SOURCE_ORDER",
    "ChatGateway",
    "ClueText",
    "GatewayError",
    "GatewayResponse",
    "InferenceRecord",
    "MissingResourceError",
    "Prediction",
    "PromptTemplate",
    "build_clue_prompt",
    "build_decision_prompt",
    "build_zero_shot_prompt",
    "clue_kinds_for",
    "is_no_evidence",
    "parse_prediction",
    "read_records",
    "run_pipeline",
    "write_records",
]
