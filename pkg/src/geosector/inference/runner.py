"""Pipeline runners: single-call zero-shot and staged multi-turn inference.

Records stream to disk as they are produced (append, flush, fsync) so an
interrupted run loses at most the entry in flight and can resume by id.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..datasetio import Dataset, DatasetEntry
from ..replay import ReplayMiss
from ..taxonomy import Taxonomy, default_taxonomy
from .gateway import ChatGateway, GatewayError
from .parsing import ClueText, Prediction, parse_prediction
from .prompts import (
    CONFIGURATIONS,
    IMAGE_LABELS,
    PromptError,
    PromptTemplate,
    build_clue_prompt,
    build_decision_prompt,
    build_zero_shot_prompt,
    clue_kinds_for,
    image_payload,
    text_payload,
)

logger = logging.getLogger(__name__)

PIPELINES = ("zero_shot", "multi_turn")
CLUE_MAX_TOKENS = 512
RECORD_SCHEMA_VERSION = 1


class RunnerError(RuntimeError):
    """The run cannot proceed as configured (bad records file, bad args)."""


@dataclass(frozen=True)
class InferenceRecord:
    """Outcome of classifying one entry, including failures.

    A failed record keeps whatever clues were gathered before the error and
    carries no prediction; scoring skips it, resuming retries it.
    """

    entry_id: int
    pipeline: str
    config: str
    template: PromptTemplate
    model_id: str
    clues: tuple[ClueText, ...] = ()
    prediction: Prediction | None = None
    elapsed_s: float = 0.0
    usage: dict = field(default_factory=dict)
    failed: bool = False
    error: str | None = None

    def to_record(self) -> dict:
        prediction = None
        if self.prediction is not None:
            prediction = {
                "label": self.prediction.label,
                "explanation": self.prediction.explanation,
                "raw": self.prediction.raw,
            }
        return {
            "entry_id": self.entry_id,
            "pipeline": self.pipeline,
            "config": self.config,
            "template": {
                "variant": self.template.variant,
                "output_mode": self.template.output_mode,
            },
            "model_id": self.model_id,
            "clues": [{"source": c.source, "text": c.text} for c in self.clues],
            "prediction": prediction,
            "elapsed_s": self.elapsed_s,
            "usage": self.usage,
            "failed": self.failed,
            "error": self.error,
            "schema_version": RECORD_SCHEMA_VERSION,
        }

    @classmethod
    def from_record(cls, record: dict) -> InferenceRecord:
        version = record.get("schema_version")
        if version != RECORD_SCHEMA_VERSION:
            raise RunnerError("unsupported record schema version: %r" % (version,))
        template = record.get("template") or {}
        prediction = record.get("prediction")
        parsed = None
        if prediction is not None:
            parsed = Prediction(
                label=prediction["label"],
                explanation=prediction.get("explanation"),
                raw=prediction.get("raw", ""),
            )
        return cls(
            entry_id=int(record["entry_id"]),
            pipeline=record["pipeline"],
            config=record["config"],
            template=PromptTemplate(
                variant=template.get("variant", "simple"),
                output_mode=template.get("output_mode", "text"),
            ),
            model_id=record.get("model_id", ""),
            clues=tuple(
                ClueText(c["source"], c["text"]) for c in record.get("clues", ())
            ),
            prediction=parsed,
            elapsed_s=float(record.get("elapsed_s", 0.0)),
            usage=record.get("usage") or {},
            failed=bool(record.get("failed", False)),
            error=record.get("error"),
        )


def record_to_line(record: InferenceRecord) -> str:
    return json.dumps(record.to_record(), ensure_ascii=False, sort_keys=True)


def read_records(path: str | Path) -> list[InferenceRecord]:
    """Load a records file, keeping only the last record per entry id.

    Retried entries append a fresh record rather than rewriting the file,
    so the latest line wins.
    """
    by_id: dict[int, InferenceRecord] = {}
    order: list[int] = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = InferenceRecord.from_record(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise RunnerError("%s line %d: %s" % (path, number, exc)) from exc
            if record.entry_id not in by_id:
                order.append(record.entry_id)
            by_id[record.entry_id] = record
    return [by_id[entry_id] for entry_id in order]


def write_records(records: list[InferenceRecord], path: str | Path) -> None:
    """Write a records file from scratch, atomically."""
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(record_to_line(record) + "\n")
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, target)


class _RecordWriter:
    """Append-only, thread-safe, fsync-per-record sink."""

    def __init__(self, path: str | Path):
        self._handle = open(path, "a", encoding="utf-8", newline="\n")
        self._lock = threading.Lock()

    def write(self, record: InferenceRecord) -> None:
        line = record_to_line(record) + "\n"
        with self._lock:
            self._handle.write(line)
            self._handle.flush()
            os.fsync(self._handle.fileno())

    def close(self) -> None:
        self._handle.close()


def _merge_usage(total: dict, usage: dict) -> None:
    for key, value in usage.items():
        if isinstance(value, int):
            total[key] = total.get(key, 0) + value


def _check_resume_compatible(
    existing: InferenceRecord,
    pipeline: str,
    config: str,
    template: PromptTemplate,
    model_id: str,
) -> None:
    same = (
        existing.pipeline == pipeline
        and existing.config == config
        and existing.template == template
        and existing.model_id == model_id
    )
    if not same:
        raise RunnerError(
            "records file holds a %s/%s/%s/%s run, refusing to mix with %s/%s/%s/%s"
            % (
                existing.pipeline,
                existing.config,
                existing.template.variant,
                existing.model_id,
                pipeline,
                config,
                template.variant,
                model_id,
            )
        )


def run_pipeline(
    dataset: Dataset,
    pipeline: str,
    config: str,
    template: PromptTemplate,
    gateway: ChatGateway,
    *,
    taxonomy: Taxonomy | None = None,
    dataset_dir: str | Path | None = None,
    records_path: str | Path | None = None,
    workers: int = 1,
    resume: bool = True,
    max_tokens: int | None = None,
    diagnostics: list[str] | None = None,
) -> list[InferenceRecord]:
    """Classify every dataset entry, returning records in dataset order.

    zero_shot issues one gateway call per entry.  multi_turn issues one
    clue call per source the configuration selects, then a decision call
    that sees only the entity name and the clue texts.  Entries run in
    parallel up to the worker bound; a gateway failure marks that entry's
    record failed and the run continues.  With a records path, finished
    records append immediately and a rerun skips entries that already
    succeeded (failed ones are retried).
    """
    if pipeline not in PIPELINES:
        raise RunnerError("unknown pipeline: %r" % (pipeline,))
    if config not in CONFIGURATIONS:
        raise RunnerError("unknown input configuration: %r" % (config,))
    if workers < 1:
        raise RunnerError("workers must be at least 1")
    if taxonomy is None:
        taxonomy = default_taxonomy()
    base_dir = Path(dataset_dir) if dataset_dir is not None else None

    done: dict[int, InferenceRecord] = {}
    if records_path is not None and resume and Path(records_path).exists():
        for record in read_records(records_path):
            _check_resume_compatible(record, pipeline, config, template, gateway.model_id)
            if not record.failed:
                done[record.entry_id] = record
        if done:
            logger.info("resuming: %d entries already classified", len(done))

    def classify(entry: DatasetEntry) -> InferenceRecord:
        usage: dict = {}
        elapsed = 0.0
        clues: list[ClueText] = []
        try:
            if pipeline == "zero_shot":
                messages = build_zero_shot_prompt(
                    entry, config, template, taxonomy, dataset_dir=base_dir
                )
                response = gateway.complete(messages, max_tokens)
                _merge_usage(usage, response.usage)
                elapsed += response.elapsed_s
                prediction = parse_prediction(response.text, template.output_mode)
            else:
                for kind in clue_kinds_for(entry, config):
                    if kind in IMAGE_LABELS:
                        payload: bytes | str = image_payload(entry, kind, base_dir)
                    else:
                        payload = text_payload(entry, kind)
                    messages = build_clue_prompt(kind, payload, taxonomy)
                    response = gateway.complete(messages, CLUE_MAX_TOKENS)
                    _merge_usage(usage, response.usage)
                    elapsed += response.elapsed_s
                    if not response.text:
                        raise GatewayError(
                            "empty clue response for source %s" % kind
                        )
                    clues.append(ClueText(kind, response.text))
                messages = build_decision_prompt(entry.name, clues, template, taxonomy)
                response = gateway.complete(messages, max_tokens)
                _merge_usage(usage, response.usage)
                elapsed += response.elapsed_s
                prediction = parse_prediction(response.text, template.output_mode)
        except (GatewayError, ReplayMiss, PromptError, OSError) as exc:
            note = "entry %d failed: %s" % (entry.id, exc)
            logger.warning(note)
            if diagnostics is not None:
                diagnostics.append(note)
            return InferenceRecord(
                entry_id=entry.id,
                pipeline=pipeline,
                config=config,
                template=template,
                model_id=gateway.model_id,
                clues=tuple(clues),
                prediction=None,
                elapsed_s=elapsed,
                usage=usage,
                failed=True,
                error=str(exc),
            )
        return InferenceRecord(
            entry_id=entry.id,
            pipeline=pipeline,
            config=config,
            template=template,
            model_id=gateway.model_id,
            clues=tuple(clues),
            prediction=prediction,
            elapsed_s=elapsed,
            usage=usage,
        )

    pending = [entry for entry in dataset.entries if entry.id not in done]
    writer = _RecordWriter(records_path) if records_path is not None else None
    results: dict[int, InferenceRecord] = dict(done)
    try:
        if workers == 1 or len(pending) <= 1:
            produced = map(classify, pending)
            for record in produced:
                if writer is not None:
                    writer.write(record)
                results[record.entry_id] = record
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for record in pool.map(classify, pending):
                    if writer is not None:
                        writer.write(record)
                    results[record.entry_id] = record
    finally:
        if writer is not None:
            writer.close()

    return [results[entry.id] for entry in dataset.entries]
