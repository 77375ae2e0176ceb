"""Prompt templates and message builders for the classification pipelines.

Messages are lists of ``{"role": ..., "content": [parts]}`` dicts.  A part is
either ``{"type": "text", "text": str}`` or ``{"type": "image", "media_type":
str, "data": base64-str}``.  Builders are pure: the same entry, configuration
and template always produce byte-identical message structures, which is what
makes gateway transcripts replayable.
"""

from __future__ import annotations

import base64
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from ..taxonomy import Taxonomy, default_taxonomy

if TYPE_CHECKING:
    from ..datasetio import DatasetEntry
    from .parsing import ClueText

logger = logging.getLogger(__name__)

CONFIGURATIONS = (
    "none",
    "satellite",
    "external",
    "satellite_osm",
    "satellite_external",
    "all",
)

CONTEXT_VARIANTS = ("simple", "extended")
OUTPUT_MODES = ("text", "json")

IMAGE_KINDS_BY_CONFIG = {
    "none": (),
    "satellite": ("satellite",),
    "external": (),
    "satellite_osm": ("osm", "satellite"),
    "satellite_external": ("satellite",),
    "all": ("osm", "satellite"),
}

TEXT_CONFIGS = frozenset({"external", "satellite_external", "all"})

# Fixed presentation order for sources across prompts, records, and metrics.
SOURCE_ORDER = ("osm", "satellite", "wikidata", "wikipedia", "website")

IMAGE_LABELS = {"osm": "OSM image", "satellite": "Satellite image"}
TEXT_LABELS = {"wikidata": "Wikidata", "wikipedia": "Wikipedia", "website": "Website"}
CLUE_SOURCE_LABELS = {
    "osm": "OSM map image",
    "satellite": "Satellite image",
    "wikidata": "Wikidata content",
    "wikipedia": "Wikipedia content",
    "website": "Website content",
}
DECISION_CLUE_LABELS = {
    "osm": "OSM",
    "satellite": "Satellite",
    "wikidata": "Wikidata",
    "wikipedia": "Wikipedia",
    "website": "Website",
}

NO_EVIDENCE_SENTENCE = "No economic activity clues found."


class PromptError(ValueError):
    """A prompt builder was given arguments outside its contract."""


class MissingResourceError(PromptError):
    """The input configuration selects a resource the entry does not have."""


@dataclass(frozen=True)
class PromptTemplate:
    """Choice of taxonomy context depth and answer encoding.

    variant selects how much of the section catalogue the model sees:
    "simple" lists codes and titles, "extended" adds the full description
    under each title.  output_mode selects the answer contract: "text" is a
    single token, "json" is a two-field object with an explanation.
    """

    variant: str = "simple"
    output_mode: str = "text"

    def __post_init__(self) -> None:
        if self.variant not in CONTEXT_VARIANTS:
            raise PromptError("unknown context variant: %r" % (self.variant,))
        if self.output_mode not in OUTPUT_MODES:
            raise PromptError("unknown output mode: %r" % (self.output_mode,))


def text_part(text: str) -> dict:
    return {"type": "text", "text": text}


def image_part(data: bytes, media_type: str = "image/png") -> dict:
    if not data:
        raise PromptError("image part needs non-empty bytes")
    return {
        "type": "image",
        "media_type": media_type,
        "data": base64.b64encode(data).decode("ascii"),
    }


def nace_context(taxonomy: Taxonomy, variant: str = "simple") -> str:
    """Render the section catalogue block for a prompt.

    The simple variant is one "CODE: Title" line per section.  The extended
    variant follows each title with the section description, indented so the
    code lines stay scannable.
    """
    if variant not in CONTEXT_VARIANTS:
        raise PromptError("unknown context variant: %r" % (variant,))
    lines = ["NACE Rev.2 Sections"]
    for section in taxonomy.sections:
        lines.append("%s: %s" % (section.code, section.title))
        if variant == "extended":
            lines.append("  %s" % section.description)
    return "\n".join(lines)


TEXT_OUTPUT_FORMAT = """You will return only the SECTOR CODE.
If you are not sure about the sector code, return "UNK" as a default value.

Example
A

SINGLE TOKEN RESPONSE ONLY"""

JSON_OUTPUT_FORMAT = """You will return a JSON output including the Sector and Explanation. Explanation should be a short description, less than 50 words, of why you chose this sector code.

{
  "EXPLANATION": "This belongs to Category A because ...",
  "LLM_RESPONSE": "A"
}

DO NOT PRINT ANYTHING OTHER THAN JSON RESPONSE"""


def output_format(mode: str) -> str:
    if mode == "text":
        return TEXT_OUTPUT_FORMAT
    if mode == "json":
        return JSON_OUTPUT_FORMAT
    raise PromptError("unknown output mode: %r" % (mode,))


_ZERO_SHOT_HEAD = """Role
You are an assistant designed to identify economic activities from heterogeneous geospatial and textual resources.

Inputs
- Images: OpenStreetMap (OSM), Satellite imagery
- Textual: Wikidata, Wikipedia, Website
- Entity name

Visual Analysis (Images)
Identify relevant geospatial features, including but not limited to:
- Buildings
- Terrain
- Streets

Contextual Analysis (Text)
Extract economic context such as:
- Products and services
- Activities
- Business type
- Industry

Task
Based on the extracted attributes and the entity name, predict the corresponding NACE Rev.2 economic activity sector code."""

_ZERO_SHOT_RESOURCES = """Available Resources
- osm: OSM image
- satellite: Satellite image
- source: Wikidata / Wikipedia / Website

If no external resources are provided, rely solely on the entity name."""


def zero_shot_system_prompt(template: PromptTemplate, taxonomy: Taxonomy) -> str:
    return "\n\n".join(
        [
            _ZERO_SHOT_HEAD,
            nace_context(taxonomy, template.variant),
            _ZERO_SHOT_RESOURCES,
            "Output Format\n\n" + output_format(template.output_mode),
        ]
    )


def keyword_catalogue(taxonomy: Taxonomy) -> str:
    """One line per section listing its activity keywords in brackets."""
    lines = []
    for section in taxonomy.sections:
        rendered = ", ".join("[%s]" % kw for kw in section.keywords)
        lines.append("%s (%s): %s" % (section.code, section.title, rendered))
    return "\n".join(lines)


_CLUE_HEAD = """You are an agent tasked with extracting explicit economic activity clues from a single information source.

General Rules
- Only extract activities with direct textual or visual evidence.
- The provided keyword list defines all valid economic activity categories.
- Match only exact keywords or clear synonyms.
- Do not infer, guess, or generalize beyond the source.
- When mentioning an activity, wrap it in [ ] exactly as in the keyword list.
- For every activity, cite the exact supporting feature, tag, phrase, or entity.
- If no activity is present, output exactly: "No economic activity clues found."
- Output language must be English.
- Maximum output length: 512 tokens."""

_CLUE_OUTPUT = """Output Format

Economic activity clues:
- [keyword] supporting evidence from the source"""


def clue_system_prompt(taxonomy: Taxonomy) -> str:
    catalogue = "Economic activity keywords\n" + keyword_catalogue(taxonomy)
    return "\n\n".join([_CLUE_HEAD, catalogue, _CLUE_OUTPUT])


_DECISION_HEAD = """Role
You are an assistant designed to identify economic activities from multiple, incremental information sources.

Inputs
You may be provided with clues from the following sources:
Wikidata, Wikipedia, Websites, OpenStreetMap (OSM) images, Satellite images

Task
Based on the provided clues and the entity name, identify the corresponding NACE economic activity sector code."""

_DECISION_NOTE = """Note that you may not be given all of the clues.
If no clues are provided, rely solely on the entity name."""


def decision_system_prompt(template: PromptTemplate, taxonomy: Taxonomy) -> str:
    return "\n\n".join(
        [
            _DECISION_HEAD,
            nace_context(taxonomy, template.variant),
            _DECISION_NOTE,
            "Output Format\n\n" + output_format(template.output_mode),
        ]
    )


def _resolve_path(path: str, dataset_dir: Path | None) -> Path:
    candidate = Path(path)
    if dataset_dir is not None and not candidate.is_absolute():
        return dataset_dir / candidate
    return candidate


def _load_image(path: str, dataset_dir: Path | None) -> dict:
    data = _resolve_path(path, dataset_dir).read_bytes()
    return image_part(data)


def _source_text(entry: DatasetEntry, kind: str) -> str:
    source = entry.sources[kind]
    if source.text is not None:
        return source.text
    return source.locator or ""


def image_payload(entry: DatasetEntry, kind: str, dataset_dir: Path | None = None) -> bytes:
    """Raw PNG bytes for one of the entry's images."""
    path = entry.image_paths.get(kind)
    if not path:
        raise MissingResourceError("entry %d has no %s image" % (entry.id, kind))
    return _resolve_path(path, dataset_dir).read_bytes()


def text_payload(entry: DatasetEntry, kind: str) -> str:
    """Stored text for one of the entry's sources, locator as fallback."""
    if kind not in entry.sources:
        raise MissingResourceError("entry %d has no %s source" % (entry.id, kind))
    return _source_text(entry, kind)


def selected_image_kinds(entry: DatasetEntry, config: str) -> tuple[str, ...]:
    """Image kinds the configuration asks for, checked against the entry.

    For every configuration except "all" a selected-but-absent image path is
    a contract violation; "all" means "everything available" and quietly
    drops what is not there.
    """
    wanted = IMAGE_KINDS_BY_CONFIG[config]
    kinds = []
    for kind in wanted:
        if entry.image_paths.get(kind):
            kinds.append(kind)
        elif config != "all":
            raise MissingResourceError(
                "config %r needs the %s image but entry %d has none"
                % (config, kind, entry.id)
            )
    return tuple(kinds)


def selected_text_kinds(entry: DatasetEntry, config: str) -> tuple[str, ...]:
    """Text source kinds the configuration asks for, in fixed order."""
    if config not in TEXT_CONFIGS:
        return ()
    kinds = tuple(k for k in SOURCE_ORDER if k in entry.sources)
    if not kinds and config != "all":
        raise MissingResourceError(
            "config %r needs text sources but entry %d has none" % (config, entry.id)
        )
    return kinds


def clue_kinds_for(entry: DatasetEntry, config: str) -> tuple[str, ...]:
    """Sources that get a clue-extraction call for this entry and config."""
    if config not in CONFIGURATIONS:
        raise PromptError("unknown input configuration: %r" % (config,))
    images = set(selected_image_kinds(entry, config))
    texts = set(selected_text_kinds(entry, config))
    return tuple(k for k in SOURCE_ORDER if k in images or k in texts)


def build_zero_shot_prompt(
    entry: DatasetEntry,
    config: str,
    template: PromptTemplate,
    taxonomy: Taxonomy | None = None,
    *,
    dataset_dir: Path | None = None,
) -> list[dict]:
    """Assemble the single-call prompt: system block plus one user turn.

    The user turn always opens with the entity name, then images in osm,
    satellite order, then text sources in wikidata, wikipedia, website
    order, restricted to what the configuration selects.
    """
    if config not in CONFIGURATIONS:
        raise PromptError("unknown input configuration: %r" % (config,))
    if taxonomy is None:
        taxonomy = default_taxonomy()

    parts = [text_part("Entity name: %s" % entry.name)]
    for kind in selected_image_kinds(entry, config):
        parts.append(text_part("%s:" % IMAGE_LABELS[kind]))
        parts.append(_load_image(entry.image_paths[kind], dataset_dir))
    for kind in selected_text_kinds(entry, config):
        parts.append(
            text_part("%s content:\n%s" % (TEXT_LABELS[kind], _source_text(entry, kind)))
        )

    return [
        {"role": "system", "content": [text_part(zero_shot_system_prompt(template, taxonomy))]},
        {"role": "user", "content": parts},
    ]


def build_clue_prompt(
    source_kind: str,
    payload: bytes | str,
    taxonomy: Taxonomy | None = None,
) -> list[dict]:
    """Assemble a clue-extraction prompt for exactly one source.

    The payload is image bytes for osm and satellite, extracted text for
    the rest.  The entity name is deliberately absent: clue agents must
    work from the source alone.
    """
    if source_kind not in SOURCE_ORDER:
        raise PromptError("unknown source kind: %r" % (source_kind,))
    if taxonomy is None:
        taxonomy = default_taxonomy()

    label = CLUE_SOURCE_LABELS[source_kind]
    if source_kind in IMAGE_LABELS:
        if not isinstance(payload, bytes):
            raise PromptError("%s clue payload must be image bytes" % source_kind)
        parts = [text_part("Source: %s" % label), image_part(payload)]
    else:
        if not isinstance(payload, str) or not payload.strip():
            raise PromptError("%s clue payload must be non-empty text" % source_kind)
        parts = [text_part("Source: %s\n\n%s" % (label, payload))]

    return [
        {"role": "system", "content": [text_part(clue_system_prompt(taxonomy))]},
        {"role": "user", "content": parts},
    ]


def build_decision_prompt(
    name: str,
    clues: list[ClueText],
    template: PromptTemplate,
    taxonomy: Taxonomy | None = None,
) -> list[dict]:
    """Assemble the final multi-turn decision prompt.

    Only the entity name and the clue texts go in; raw images and source
    documents never reach the decision call.
    """
    if taxonomy is None:
        taxonomy = default_taxonomy()
    order = {kind: rank for rank, kind in enumerate(SOURCE_ORDER)}
    for clue in clues:
        if clue.source not in order:
            raise PromptError("unknown clue source: %r" % (clue.source,))

    parts = [text_part("Entity name: %s" % name)]
    for clue in sorted(clues, key=lambda c: order[c.source]):
        parts.append(
            text_part("%s clues:\n%s" % (DECISION_CLUE_LABELS[clue.source], clue.text))
        )

    return [
        {"role": "system", "content": [text_part(decision_system_prompt(template, taxonomy))]},
        {"role": "user", "content": parts},
    ]
