"""Benchmark data model: entry schema, serialization, validation, summaries.

Entries persist as UTF-8 line-delimited JSON next to a manifest file; writes
are byte-stable (fixed key order, shortest round-trip floats) so dataset
diffs stay meaningful.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import corpus as corpus_mod
from . import taxonomy as taxonomy_mod
from .taxonomy import SECTION_CODES, UNOBTAINABLE_SECTION, Taxonomy

SCHEMA_VERSION = 1
SOURCE_KINDS = ("wikidata", "wikipedia", "website")
IMAGE_KINDS = ("osm", "satellite")

ENTRIES_FILENAME = "entries.jsonl"
MANIFEST_FILENAME = "manifest.json"


class SchemaError(ValueError):
    def __init__(self, entry_id, field_name: str, message: str):
        super().__init__(f"entry {entry_id}: field {field_name}: {message}")
        self.entry_id = entry_id
        self.field_name = field_name


class LeakError(SchemaError):
    """A source text states the entry's NACE assignment outright."""


@dataclass(frozen=True)
class SourceText:
    """External source payload: fetched text, locator fallback, or both."""

    text: str | None = None
    locator: str | None = None


@dataclass(frozen=True)
class DatasetEntry:
    id: int
    element_type: str
    name: str
    bbox: tuple[float, float, float, float]
    osm_tags: dict[str, str]
    category: str
    image_paths: dict[str, str]
    sources: dict[str, SourceText]


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    version: str
    created_at: str
    attributions: tuple[str, ...] = ()


@dataclass(frozen=True)
class Dataset:
    entries: tuple[DatasetEntry, ...]
    manifest: DatasetManifest


_taxonomy_cache: Taxonomy | None = None


def _leak_taxonomy() -> Taxonomy:
    global _taxonomy_cache
    if _taxonomy_cache is None:
        _taxonomy_cache = taxonomy_mod.default_taxonomy()
    return _taxonomy_cache


def scan_for_leak(text: str, category: str, title: str) -> bool:
    """Heuristic: does the text state the NACE section assignment outright?

    Flags "section <letter>" or the section title appearing near the literal
    "NACE". A flag is advisory for builders; readers treat it as fatal.
    """
    normalized = re.sub(r"\s+", " ", text.lower())
    title_low = re.sub(r"\s+", " ", title.lower())
    category_low = category.lower()
    for match in re.finditer(r"nace", normalized):
        window = normalized[max(0, match.start() - 80) : match.end() + 80]
        if re.search(rf"section\s+{category_low}\b", window):
            return True
        if title_low in window:
            return True
    return False


def validate_entry(entry: DatasetEntry, taxonomy: Taxonomy | None = None) -> None:
    """Raise SchemaError (LeakError for source leaks) on any invariant breach."""
    if not isinstance(entry.id, int) or entry.id < 0:
        raise SchemaError(entry.id, "id", "must be a non-negative integer")
    if entry.element_type not in corpus_mod.ELEMENT_TYPES:
        raise SchemaError(entry.id, "type", f"unknown element type {entry.element_type!r}")
    if not entry.name or not entry.name.strip():
        raise SchemaError(entry.id, "name", "must be non-empty")
    bbox = entry.bbox
    if len(bbox) != 4 or any(not isinstance(v, float) for v in bbox):
        raise SchemaError(entry.id, "bbox", "must be four floats")
    min_lon, min_lat, max_lon, max_lat = bbox
    if min_lon > max_lon or min_lat > max_lat:
        raise SchemaError(entry.id, "bbox", "inverted")
    if not (-180.0 <= min_lon and max_lon <= 180.0 and -90.0 <= min_lat and max_lat <= 90.0):
        raise SchemaError(entry.id, "bbox", "outside WGS84 range")
    if entry.category not in SECTION_CODES:
        raise SchemaError(entry.id, "category", f"unknown section {entry.category!r}")
    if entry.category == UNOBTAINABLE_SECTION:
        raise SchemaError(
            entry.id, "category", f"section {UNOBTAINABLE_SECTION} cannot appear in datasets"
        )
    for kind, value in entry.osm_tags.items():
        if not isinstance(kind, str) or not isinstance(value, str):
            raise SchemaError(entry.id, "osm_tags", "keys and values must be strings")
    for kind in IMAGE_KINDS:
        if not entry.image_paths.get(kind):
            raise SchemaError(entry.id, "image_paths", f"missing {kind} image path")
    if not entry.sources:
        raise SchemaError(entry.id, "sources", "gold entries need at least one source")
    for kind, source in entry.sources.items():
        if kind not in SOURCE_KINDS:
            raise SchemaError(entry.id, "sources", f"unknown source kind {kind!r}")
        if not isinstance(source, SourceText) or (source.text is None and source.locator is None):
            raise SchemaError(entry.id, "sources", f"{kind}: needs text or locator")
    title = (taxonomy or _leak_taxonomy()).section(entry.category).title
    for kind, source in entry.sources.items():
        if source.text and scan_for_leak(source.text, entry.category, title):
            raise LeakError(entry.id, "sources", f"{kind} text states the NACE assignment")


def entry_to_json(entry: DatasetEntry) -> str:
    record = {
        "id": entry.id,
        "type": entry.element_type,
        "name": entry.name,
        "bbox": list(entry.bbox),
        "osm_tags": {key: entry.osm_tags[key] for key in sorted(entry.osm_tags)},
        "category": entry.category,
        "image_paths": {kind: entry.image_paths[kind] for kind in IMAGE_KINDS},
        "sources": {
            kind: {"text": entry.sources[kind].text, "locator": entry.sources[kind].locator}
            for kind in SOURCE_KINDS
            if kind in entry.sources
        },
        "schema_version": SCHEMA_VERSION,
    }
    return json.dumps(record, ensure_ascii=False)


def entry_from_record(record: dict) -> DatasetEntry:
    entry_id = record.get("id", "?")
    version = record.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(entry_id, "schema_version", f"unsupported version {version}")
    try:
        sources = {
            kind: SourceText(text=payload.get("text"), locator=payload.get("locator"))
            for kind, payload in record["sources"].items()
        }
        entry = DatasetEntry(
            id=record["id"],
            element_type=record["type"],
            name=record["name"],
            bbox=tuple(float(v) for v in record["bbox"]),
            osm_tags=dict(record["osm_tags"]),
            category=record["category"],
            image_paths=dict(record["image_paths"]),
            sources=sources,
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise SchemaError(entry_id, "record", f"malformed entry: {exc}") from exc
    return entry


def write(dataset: Dataset, path: str | Path, taxonomy: Taxonomy | None = None) -> None:
    """Validate then persist; identical datasets produce byte-identical files."""
    seen: set[int] = set()
    for entry in dataset.entries:
        validate_entry(entry, taxonomy)
        if entry.id in seen:
            raise SchemaError(entry.id, "id", "duplicate entry id")
        seen.add(entry.id)
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        lines = [entry_to_json(entry) for entry in dataset.entries]
        body = "".join(line + "\n" for line in lines)
        (directory / ENTRIES_FILENAME).write_text(body, encoding="utf-8", newline="\n")
        manifest = {
            "name": dataset.manifest.name,
            "version": dataset.manifest.version,
            "created_at": dataset.manifest.created_at,
            "attributions": list(dataset.manifest.attributions),
            "entry_count": len(dataset.entries),
            "schema_version": SCHEMA_VERSION,
        }
        (directory / MANIFEST_FILENAME).write_text(
            json.dumps(manifest, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
            newline="\n",
        )
    except OSError as exc:
        raise OSError(f"cannot write dataset to {directory}: {exc}") from exc


def read(path: str | Path, taxonomy: Taxonomy | None = None) -> Dataset:
    directory = Path(path)
    manifest_path = directory / MANIFEST_FILENAME
    entries_path = directory / ENTRIES_FILENAME
    if not manifest_path.exists() or not entries_path.exists():
        raise FileNotFoundError(f"not a dataset directory: {directory}")
    manifest_record = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest_record.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError("manifest", "schema_version", f"unsupported version {version}")
    manifest = DatasetManifest(
        name=manifest_record.get("name", ""),
        version=manifest_record.get("version", ""),
        created_at=manifest_record.get("created_at", ""),
        attributions=tuple(manifest_record.get("attributions", ())),
    )
    entries: list[DatasetEntry] = []
    seen: set[int] = set()
    with entries_path.open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            entry = entry_from_record(json.loads(line))
            validate_entry(entry, taxonomy)
            if entry.id in seen:
                raise SchemaError(entry.id, "id", "duplicate entry id")
            seen.add(entry.id)
            entries.append(entry)
    return Dataset(entries=tuple(entries), manifest=manifest)


def summarize(dataset: Dataset) -> dict:
    """Per-section counts, per-section mean resource counts, source histogram."""
    included = [code for code in SECTION_CODES if code != UNOBTAINABLE_SECTION]
    counts = {code: 0 for code in included}
    resource_totals = {code: 0 for code in included}
    for entry in dataset.entries:
        counts[entry.category] += 1
        resource_totals[entry.category] += len(IMAGE_KINDS) + len(entry.sources)
    means = {
        code: (resource_totals[code] / counts[code] if counts[code] else 0.0)
        for code in included
    }
    histogram = corpus_mod.resource_histogram(dataset.entries)
    rendered = {"+".join(kinds) if kinds else "none": count for kinds, count in histogram.items()}
    return {
        "entry_count": len(dataset.entries),
        "per_section_counts": counts,
        "per_section_mean_resources": means,
        "source_histogram": rendered,
    }
