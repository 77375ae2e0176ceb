"""Quality tiers, category labeling, and balanced sampling over OSM elements.

Ingestion consumes a pre-extracted element stream (one JSON record per line
with id, type, tags, and bbox or lon/lat) rather than a planet-file parser;
adapters for raw OSM extracts can feed the same stream shape.
"""

from __future__ import annotations

import json
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .taxonomy import (
    SECTION_CODES,
    UNOBTAINABLE_SECTION,
    OsmTag,
    TagMapping,
    sections_for_tag,
)

logger = logging.getLogger(__name__)

TIER_BRONZE = "bronze"
TIER_SILVER = "silver"
TIER_GOLD = "gold"

ELEMENT_TYPES = ("node", "way", "relation")
EXTERNAL_SOURCE_KEYS = ("wikidata", "wikipedia", "website", "contact:website")

# Degenerate (point) bbox axes get this half-width before tile math.
POINT_EXPANSION_DEG = 0.0005

Bbox = tuple[float, float, float, float]


class ElementStreamError(ValueError):
    """A stream line is not a well-formed element record."""


class SamplingError(RuntimeError):
    """The pool cannot satisfy the per-section quota."""


@dataclass(frozen=True)
class OsmElement:
    id: int
    element_type: str
    tags: dict[str, str]
    bbox: Bbox

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"negative element id: {self.id}")
        if self.element_type not in ELEMENT_TYPES:
            raise ValueError(f"unknown element type: {self.element_type!r}")
        min_lon, min_lat, max_lon, max_lat = self.bbox
        if min_lon > max_lon or min_lat > max_lat:
            raise ValueError(f"inverted bbox: {self.bbox}")
        if not (-180.0 <= min_lon and max_lon <= 180.0 and -90.0 <= min_lat and max_lat <= 90.0):
            raise ValueError(f"bbox outside WGS84 range: {self.bbox}")

    @property
    def name(self) -> str | None:
        value = self.tags.get("name", "").strip()
        return value or None


@dataclass(frozen=True)
class LabeledElement:
    element: OsmElement
    category: str
    # None means below bronze (no name tag); such elements never enter datasets.
    tier: str | None


def element_from_record(record: dict) -> OsmElement:
    try:
        element_id = int(record["id"])
        element_type = record["type"]
        tags = record["tags"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ElementStreamError(f"bad element record: {exc}") from exc
    if not isinstance(tags, dict):
        raise ElementStreamError("tags must be an object")
    if "bbox" in record:
        bbox = record["bbox"]
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise ElementStreamError("bbox must have four numbers")
        bbox = tuple(float(v) for v in bbox)
    elif "lon" in record and "lat" in record:
        lon, lat = float(record["lon"]), float(record["lat"])
        bbox = (lon, lat, lon, lat)
    else:
        raise ElementStreamError("record needs bbox or lon/lat")
    tags = {str(k): str(v) for k, v in tags.items()}
    try:
        return OsmElement(id=element_id, element_type=element_type, tags=tags, bbox=bbox)
    except ValueError as exc:
        raise ElementStreamError(str(exc)) from exc


def read_element_stream(
    path: str | Path, diagnostics: list[str] | None = None
) -> Iterator[OsmElement]:
    """Yield elements from a JSONL stream; malformed lines are skipped with a diagnostic."""
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                yield element_from_record(record)
            except (json.JSONDecodeError, ElementStreamError) as exc:
                message = f"{path}:{lineno}: skipped element record: {exc}"
                if diagnostics is not None:
                    diagnostics.append(message)
                logger.warning(message)


def expand_point_bbox(bbox: Bbox) -> Bbox:
    """Give zero-extent axes a +-POINT_EXPANSION_DEG half-width for tile math."""
    min_lon, min_lat, max_lon, max_lat = bbox
    if min_lon == max_lon:
        min_lon -= POINT_EXPANSION_DEG
        max_lon += POINT_EXPANSION_DEG
    if min_lat == max_lat:
        min_lat -= POINT_EXPANSION_DEG
        max_lat += POINT_EXPANSION_DEG
    return (
        max(min_lon, -180.0),
        max(min_lat, -90.0),
        min(max_lon, 180.0),
        min(max_lat, 90.0),
    )


def _activity_matches(
    element: OsmElement, mapping: TagMapping
) -> list[tuple[OsmTag, frozenset[str]]]:
    matches = []
    for key, value in element.tags.items():
        tag = OsmTag(key, value)
        sections = sections_for_tag(mapping, tag)
        if sections:
            matches.append((tag, sections))
    return matches


def tier_of(element: OsmElement, mapping: TagMapping) -> str | None:
    """Quality tier, or None when the element is below bronze.

    Bronze needs a name plus a mapped activity tag; silver additionally any
    addr:* tag; gold additionally any external source tag.
    """
    if element.name is None:
        return None
    if not _activity_matches(element, mapping):
        return None
    has_address = any(key.startswith("addr:") for key in element.tags)
    if not has_address:
        return TIER_BRONZE
    has_external = any(key in element.tags for key in EXTERNAL_SOURCE_KEYS)
    return TIER_GOLD if has_external else TIER_SILVER


def activity_tag_counts(
    elements: Iterable[OsmElement], mapping: TagMapping
) -> Counter[OsmTag]:
    """Pool-wide occurrence counts of mapped activity tags, for label priority."""
    counts: Counter[OsmTag] = Counter()
    for element in elements:
        for tag, _ in _activity_matches(element, mapping):
            counts[tag] += 1
    return counts


def label(
    element: OsmElement,
    mapping: TagMapping,
    tag_counts: Counter[OsmTag] | None = None,
    diagnostics: list[str] | None = None,
) -> LabeledElement | None:
    """Assign the element's category, or None when no tag matches the mapping.

    When several tags (or a multi-section tag) disagree, the rarer pool tag
    wins, ties break lexicographically by canonical tag; the ambiguity goes to
    the diagnostics channel.
    """
    matches = _activity_matches(element, mapping)
    if not matches:
        return None

    def priority(item: tuple[OsmTag, frozenset[str]]):
        tag = item[0]
        count = tag_counts.get(tag, 0) if tag_counts is not None else 0
        return (count, tag.canonical())

    matches.sort(key=priority)
    winner_tag, winner_sections = matches[0]
    category = min(winner_sections)
    all_sections = set()
    for _, sections in matches:
        all_sections.update(sections)
    if len(all_sections) > 1 and diagnostics is not None:
        diagnostics.append(
            f"{element.element_type}/{element.id}: tags map to sections "
            f"{sorted(all_sections)}; picked {category} via {winner_tag.canonical()}"
        )
    return LabeledElement(element=element, category=category, tier=tier_of(element, mapping))


def sample_balanced(
    pool: list[LabeledElement], per_section: int, seed: int
) -> list[LabeledElement]:
    """Draw per_section gold elements for every section except T, deterministically."""
    if per_section < 0:
        raise ValueError("per_section must be >= 0")
    sections = [code for code in SECTION_CODES if code != UNOBTAINABLE_SECTION]
    by_section: dict[str, list[LabeledElement]] = defaultdict(list)
    for labeled in pool:
        if labeled.tier == TIER_GOLD:
            by_section[labeled.category].append(labeled)
    shortfalls = [
        (code, len(by_section.get(code, ())))
        for code in sections
        if len(by_section.get(code, ())) < per_section
    ]
    if shortfalls:
        detail = ", ".join(f"section {code}: {count} available" for code, count in shortfalls)
        raise SamplingError(f"insufficient gold elements for per_section={per_section}: {detail}")
    rng = random.Random(seed)
    sampled: list[LabeledElement] = []
    for code in sections:
        candidates = sorted(
            by_section[code], key=lambda le: (le.element.id, le.element.element_type)
        )
        sampled.extend(rng.sample(candidates, per_section))
    return sampled


def resource_histogram(
    entries: Iterable, diagnostics: list[str] | None = None
) -> dict[tuple[str, ...], int]:
    """Partition entries by the exact subset of external text sources present.

    Accepts anything with a ``sources`` mapping and an ``id``; the empty subset
    is counted under the () bucket and flagged, since gold entries must carry
    at least one source.
    """
    histogram: Counter[tuple[str, ...]] = Counter()
    for entry in entries:
        kinds = tuple(k for k in ("wikidata", "wikipedia", "website") if k in entry.sources)
        if not kinds:
            message = f"entry {entry.id}: no external source attached"
            if diagnostics is not None:
                diagnostics.append(message)
            logger.warning(message)
        histogram[kinds] += 1
    return dict(histogram)
