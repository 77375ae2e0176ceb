"""Clue analysis and evaluation metrics for classification runs.

Keyword occurrences in clue texts become 21-dimensional frequency vectors,
projected at the ground-truth and predicted labels into per-source scores
(correctness, effectiveness).  Arithmetic is exact rational throughout;
reports render the fractions as decimals.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .datasetio import Dataset
from .inference.parsing import ClueText, is_no_evidence
from .inference.runner import InferenceRecord
from .taxonomy import (
    NUM_SECTIONS,
    SECTION_CODES,
    SECTION_INDEX,
    UNKNOWN_LABEL,
    VIOLATION_LABEL,
    Taxonomy,
    default_taxonomy,
    section_for_keyword,
)

logger = logging.getLogger(__name__)

SOURCES = ("osm", "satellite", "wikidata", "wikipedia", "website")
PROJECTION_KINDS = ("ground_truth", "prediction")

_BRACKET_RE = re.compile(r"\[([^\[\]]+)\]")

ZERO = Fraction(0)
ONE = Fraction(1)


class MetricsError(ValueError):
    """Inputs violate a metric precondition (unknown label, bad counts)."""


@dataclass(frozen=True)
class FrequencyVector:
    """Normalized per-section keyword counts; all zero when no evidence."""

    values: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if len(self.values) != NUM_SECTIONS:
            raise MetricsError("frequency vector needs %d components" % NUM_SECTIONS)
        if any(v < 0 for v in self.values):
            raise MetricsError("frequency vector components must be non-negative")
        total = sum(self.values)
        if total != 0 and total != 1:
            raise MetricsError("frequency vector must sum to 0 or 1, got %s" % total)

    @classmethod
    def zero(cls) -> FrequencyVector:
        return cls(values=(ZERO,) * NUM_SECTIONS)

    @property
    def is_zero(self) -> bool:
        return all(v == 0 for v in self.values)

    def at(self, code: str) -> Fraction:
        try:
            return self.values[SECTION_INDEX[code]]
        except KeyError:
            raise MetricsError("not a section code: %r" % (code,)) from None


def extract_keywords(
    clue: ClueText | str,
    taxonomy: Taxonomy,
    diagnostics: list[str] | None = None,
) -> list[tuple[str, str]]:
    """Bracketed activity keywords in a clue, with their owning sections.

    Tokens are case-folded before lookup; bracketed text that is not in the
    keyword lexicon is dropped with a diagnostic.  Occurrences keep their
    multiplicity: a keyword mentioned three times counts three times.
    """
    text = clue.text if isinstance(clue, ClueText) else clue
    found: list[tuple[str, str]] = []
    for match in _BRACKET_RE.finditer(text):
        token = match.group(1).strip().lower()
        code = section_for_keyword(taxonomy, token)
        if code is None:
            note = "unknown clue keyword dropped: %r" % (match.group(1),)
            logger.debug(note)
            if diagnostics is not None:
                diagnostics.append(note)
            continue
        found.append((token, code))
    return found


def frequency_vector(keywords: list[tuple[str, str]]) -> FrequencyVector:
    """Per-section share of keyword occurrences; zero vector when empty."""
    if not keywords:
        return FrequencyVector.zero()
    counts = [0] * NUM_SECTIONS
    for _, code in keywords:
        counts[SECTION_INDEX[code]] += 1
    total = len(keywords)
    return FrequencyVector(values=tuple(Fraction(c, total) for c in counts))


@dataclass(frozen=True)
class ClueProfile:
    """One entry's frequency vectors, keyed by the sources it actually has."""

    vectors: dict[str, FrequencyVector] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for source in self.vectors:
            if source not in SOURCES:
                raise MetricsError("unknown clue source: %r" % (source,))

    @property
    def present(self) -> frozenset[str]:
        return frozenset(self.vectors)

    @classmethod
    def from_clues(
        cls,
        clues: tuple[ClueText, ...] | list[ClueText],
        taxonomy: Taxonomy,
        diagnostics: list[str] | None = None,
    ) -> ClueProfile:
        vectors = {}
        for clue in clues:
            keywords = extract_keywords(clue, taxonomy, diagnostics)
            vectors[clue.source] = frequency_vector(keywords)
        return cls(vectors=vectors)


@dataclass(frozen=True)
class ProjectionVector:
    """Five per-source components of a frequency profile at one label."""

    values: tuple[Fraction, ...]
    kind: str
    index_label: str

    def __post_init__(self) -> None:
        if len(self.values) != len(SOURCES):
            raise MetricsError("projection needs %d components" % len(SOURCES))
        if self.kind not in PROJECTION_KINDS:
            raise MetricsError("unknown projection kind: %r" % (self.kind,))

    def component(self, source: str) -> Fraction:
        return self.values[SOURCES.index(source)]


def project(profile: ClueProfile, label: str, kind: str) -> ProjectionVector:
    """Read each source's frequency at the label; absent sources read 0."""
    if label not in SECTION_INDEX:
        raise MetricsError("projection label must be a section code, got %r" % (label,))
    values = tuple(
        profile.vectors[source].at(label) if source in profile.vectors else ZERO
        for source in SOURCES
    )
    return ProjectionVector(values=values, kind=kind, index_label=label)


def _per_source_mean(
    projections: list[ProjectionVector],
    counts: dict[str, int],
) -> dict[str, Fraction]:
    result: dict[str, Fraction] = {}
    for index, source in enumerate(SOURCES):
        total = counts.get(source, 0)
        if total < 1:
            continue
        result[source] = sum((p.values[index] for p in projections), ZERO) / total
    return result


def correctness(
    projections: list[ProjectionVector],
    counts: dict[str, int],
) -> dict[str, Fraction]:
    """Mean ground-truth projection per source; absent when I_c = 0."""
    return _per_source_mean(projections, counts)


def effectiveness(
    projections: list[ProjectionVector],
    counts: dict[str, int],
) -> dict[str, Fraction]:
    """Mean prediction projection per source; absent when I_c = 0."""
    return _per_source_mean(projections, counts)


def information_discovery(nei: int, total: int) -> Fraction:
    """Share of clue calls that surfaced any evidence: 1 - NEI_c / I_c."""
    if total < 1:
        raise MetricsError("information discovery needs at least one inference")
    if not 0 <= nei <= total:
        raise MetricsError("no-evidence count %d outside [0, %d]" % (nei, total))
    return ONE - Fraction(nei, total)


@dataclass(frozen=True)
class SourceMetrics:
    """Clue-stage metrics for one source across a run."""

    inferences: int
    labeled: int
    no_evidence: int
    correctness: Fraction | None
    effectiveness: Fraction | None
    information_discovery: Fraction | None


@dataclass(frozen=True)
class SectionMetrics:
    precision: Fraction
    recall: Fraction
    f1: Fraction
    support: int


@dataclass(frozen=True)
class MetricReport:
    """Everything score() measures over one run's records."""

    total: int
    failed: int
    correct: int
    unknown: int
    violation: int
    accuracy: Fraction
    unknown_ratio: Fraction
    violation_ratio: Fraction
    confusion: tuple[tuple[int, ...], ...]
    per_section: dict[str, SectionMetrics]
    macro_precision: Fraction
    macro_recall: Fraction
    macro_f1: Fraction
    weighted_precision: Fraction
    weighted_recall: Fraction
    weighted_f1: Fraction
    per_source: dict[str, SourceMetrics]
    notes: tuple[str, ...] = ()


CONFUSION_COLUMNS = SECTION_CODES + (UNKNOWN_LABEL,)

_EXCLUSION_NOTE = (
    "correctness and effectiveness average only records with a section-letter "
    "prediction; UNK and VIOLATION records are excluded from those means but "
    "still count toward information discovery"
)


def _safe_div(numerator: Fraction | int, denominator: int) -> Fraction:
    if denominator == 0:
        return ZERO
    return Fraction(numerator, denominator) if isinstance(numerator, int) else numerator / denominator


def score(
    records: list[InferenceRecord],
    dataset: Dataset,
    taxonomy: Taxonomy | None = None,
) -> MetricReport:
    """Evaluate a run: accuracy family, confusion, P/R/F1, clue metrics.

    Failed records are excluded from every ratio.  UNK and VIOLATION count
    as incorrect for accuracy; VIOLATION stays out of the confusion matrix
    since it names no section and is tracked by its own ratio.
    """
    if taxonomy is None:
        taxonomy = default_taxonomy()
    categories = {entry.id: entry.category for entry in dataset.entries}

    scored = [r for r in records if not r.failed]
    failed = len(records) - len(scored)
    for record in scored:
        if record.entry_id not in categories:
            raise MetricsError("record entry id %d not in dataset" % record.entry_id)
        if record.prediction is None:
            raise MetricsError("non-failed record %d has no prediction" % record.entry_id)

    total = len(scored)
    correct = unknown = violation = 0
    matrix = [[0] * len(CONFUSION_COLUMNS) for _ in range(NUM_SECTIONS)]
    support_counts = {code: 0 for code in SECTION_CODES}
    for record in scored:
        truth = categories[record.entry_id]
        label = record.prediction.label
        support_counts[truth] += 1
        if label == UNKNOWN_LABEL:
            unknown += 1
            matrix[SECTION_INDEX[truth]][len(SECTION_CODES)] += 1
        elif label == VIOLATION_LABEL:
            violation += 1
        else:
            matrix[SECTION_INDEX[truth]][SECTION_INDEX[label]] += 1
            if label == truth:
                correct += 1

    per_section: dict[str, SectionMetrics] = {}
    support_total = 0
    for code in SECTION_CODES:
        row = SECTION_INDEX[code]
        # Support counts every record whose truth is this section, including
        # VIOLATION predictions that the confusion matrix leaves out.
        support = support_counts[code]
        predicted = sum(matrix[r][row] for r in range(NUM_SECTIONS))
        if support == 0 and predicted == 0:
            continue
        true_positive = matrix[row][row]
        precision = _safe_div(true_positive, predicted)
        recall = _safe_div(true_positive, support)
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else ZERO
        )
        per_section[code] = SectionMetrics(
            precision=precision, recall=recall, f1=f1, support=support
        )
        support_total += support

    present = [m for m in per_section.values() if m.support > 0]
    macro_n = len(present)
    macro_precision = _safe_div(sum((m.precision for m in present), ZERO), macro_n)
    macro_recall = _safe_div(sum((m.recall for m in present), ZERO), macro_n)
    macro_f1 = _safe_div(sum((m.f1 for m in present), ZERO), macro_n)
    weighted_precision = _safe_div(
        sum((m.precision * m.support for m in present), ZERO), support_total
    )
    weighted_recall = _safe_div(
        sum((m.recall * m.support for m in present), ZERO), support_total
    )
    weighted_f1 = _safe_div(sum((m.f1 * m.support for m in present), ZERO), support_total)

    per_source = _clue_metrics(scored, categories, taxonomy)

    return MetricReport(
        total=total,
        failed=failed,
        correct=correct,
        unknown=unknown,
        violation=violation,
        accuracy=_safe_div(correct, total),
        unknown_ratio=_safe_div(unknown, total),
        violation_ratio=_safe_div(violation, total),
        confusion=tuple(tuple(row) for row in matrix),
        per_section=per_section,
        macro_precision=macro_precision,
        macro_recall=macro_recall,
        macro_f1=macro_f1,
        weighted_precision=weighted_precision,
        weighted_recall=weighted_recall,
        weighted_f1=weighted_f1,
        per_source=per_source,
        notes=(_EXCLUSION_NOTE,) if per_source else (),
    )


def _clue_metrics(
    scored: list[InferenceRecord],
    categories: dict[int, str],
    taxonomy: Taxonomy,
) -> dict[str, SourceMetrics]:
    staged = [r for r in scored if r.pipeline == "multi_turn" and r.clues]
    if not staged:
        return {}

    clue_counts = {source: 0 for source in SOURCES}
    labeled_counts = {source: 0 for source in SOURCES}
    nei_counts = {source: 0 for source in SOURCES}
    truth_projections: list[ProjectionVector] = []
    prediction_projections: list[ProjectionVector] = []

    for record in staged:
        profile = ClueProfile.from_clues(record.clues, taxonomy)
        label = record.prediction.label
        has_label = label in SECTION_INDEX
        for clue in record.clues:
            clue_counts[clue.source] += 1
            if is_no_evidence(clue.text):
                nei_counts[clue.source] += 1
            if has_label:
                labeled_counts[clue.source] += 1
        if has_label:
            truth_projections.append(
                project(profile, categories[record.entry_id], "ground_truth")
            )
            prediction_projections.append(project(profile, label, "prediction"))

    correctness_by_source = correctness(truth_projections, labeled_counts)
    effectiveness_by_source = effectiveness(prediction_projections, labeled_counts)

    metrics: dict[str, SourceMetrics] = {}
    for source in SOURCES:
        inferences = clue_counts[source]
        if inferences == 0:
            continue
        metrics[source] = SourceMetrics(
            inferences=inferences,
            labeled=labeled_counts[source],
            no_evidence=nei_counts[source],
            correctness=correctness_by_source.get(source),
            effectiveness=effectiveness_by_source.get(source),
            information_discovery=information_discovery(nei_counts[source], inferences),
        )
    return metrics


def _ratio(value: Fraction | None, places: int = 4) -> str:
    if value is None:
        return "-"
    return format(float(value), ".%df" % places)


def render_report(report: MetricReport) -> str:
    """Human-readable summary table."""
    lines = []
    lines.append("records scored: %d (failed: %d)" % (report.total, report.failed))
    lines.append(
        "accuracy: %s   unknown ratio: %s   violation ratio: %s"
        % (
            _ratio(report.accuracy),
            _ratio(report.unknown_ratio),
            _ratio(report.violation_ratio),
        )
    )
    lines.append(
        "macro P/R/F1: %s / %s / %s"
        % (_ratio(report.macro_precision), _ratio(report.macro_recall), _ratio(report.macro_f1))
    )
    lines.append(
        "weighted P/R/F1: %s / %s / %s"
        % (
            _ratio(report.weighted_precision),
            _ratio(report.weighted_recall),
            _ratio(report.weighted_f1),
        )
    )
    if report.per_section:
        lines.append("")
        lines.append("section  precision  recall  f1      support")
        for code in SECTION_CODES:
            metrics = report.per_section.get(code)
            if metrics is None:
                continue
            lines.append(
                "%-7s  %-9s  %-6s  %-6s  %d"
                % (
                    code,
                    _ratio(metrics.precision),
                    _ratio(metrics.recall),
                    _ratio(metrics.f1),
                    metrics.support,
                )
            )
    if report.per_source:
        lines.append("")
        lines.append("source     clues  labeled  no-evidence  correct.  effect.  discovery")
        for source in SOURCES:
            metrics = report.per_source.get(source)
            if metrics is None:
                continue
            lines.append(
                "%-9s  %-5d  %-7d  %-11d  %-8s  %-7s  %s"
                % (
                    source,
                    metrics.inferences,
                    metrics.labeled,
                    metrics.no_evidence,
                    _ratio(metrics.correctness),
                    _ratio(metrics.effectiveness),
                    _ratio(metrics.information_discovery),
                )
            )
    for note in report.notes:
        lines.append("")
        lines.append("note: %s" % note)
    return "\n".join(lines) + "\n"


def report_to_json(report: MetricReport) -> dict:
    """Machine-readable form: exact ratios as floats plus raw counts."""

    def opt(value: Fraction | None) -> float | None:
        return None if value is None else float(value)

    return {
        "counts": {
            "total": report.total,
            "failed": report.failed,
            "correct": report.correct,
            "unknown": report.unknown,
            "violation": report.violation,
        },
        "accuracy": float(report.accuracy),
        "unknown_ratio": float(report.unknown_ratio),
        "violation_ratio": float(report.violation_ratio),
        "macro": {
            "precision": float(report.macro_precision),
            "recall": float(report.macro_recall),
            "f1": float(report.macro_f1),
        },
        "weighted": {
            "precision": float(report.weighted_precision),
            "recall": float(report.weighted_recall),
            "f1": float(report.weighted_f1),
        },
        "per_section": {
            code: {
                "precision": float(m.precision),
                "recall": float(m.recall),
                "f1": float(m.f1),
                "support": m.support,
            }
            for code, m in report.per_section.items()
        },
        "confusion": {
            "rows": list(SECTION_CODES),
            "columns": list(CONFUSION_COLUMNS),
            "matrix": [list(row) for row in report.confusion],
        },
        "per_source": {
            source: {
                "inferences": m.inferences,
                "labeled": m.labeled,
                "no_evidence": m.no_evidence,
                "correctness": opt(m.correctness),
                "effectiveness": opt(m.effectiveness),
                "information_discovery": opt(m.information_discovery),
            }
            for source, m in report.per_source.items()
        },
        "notes": list(report.notes),
    }


def report_to_json_text(report: MetricReport) -> str:
    return json.dumps(report_to_json(report), ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def per_source_csv(report: MetricReport) -> str:
    """Per-source metric rows for plotting."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        [
            "source",
            "inferences",
            "labeled",
            "no_evidence",
            "correctness",
            "effectiveness",
            "information_discovery",
        ]
    )
    for source in SOURCES:
        metrics = report.per_source.get(source)
        if metrics is None:
            continue
        writer.writerow(
            [
                source,
                metrics.inferences,
                metrics.labeled,
                metrics.no_evidence,
                "" if metrics.correctness is None else repr(float(metrics.correctness)),
                "" if metrics.effectiveness is None else repr(float(metrics.effectiveness)),
                ""
                if metrics.information_discovery is None
                else repr(float(metrics.information_discovery)),
            ]
        )
    return buffer.getvalue()
