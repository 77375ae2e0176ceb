"""NACE section taxonomy: keyword lexicon, tag mapping, and the prompts/parsers
used to extend the mapping from official guideline extracts.

The lexicon and mapping ship as versioned data files under ``geosector/data``;
the LLM-assisted generation path (render_mapping_prompt / parse_llm_tag_list)
is tooling for extending them, not a build-time dependency.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

SECTION_CODES: tuple[str, ...] = tuple("ABCDEFGHIJKLMNOPQRSTU")
SECTION_INDEX: dict[str, int] = {code: i for i, code in enumerate(SECTION_CODES)}
NUM_SECTIONS: int = len(SECTION_CODES)

# Section with no observable business footprint in OSM; excluded from datasets.
UNOBTAINABLE_SECTION = "T"

UNKNOWN_LABEL = "UNK"
VIOLATION_LABEL = "VIOLATION"

_KEYWORD_RE = re.compile(r"[a-z]+(?:-[a-z]+)*")


class TaxonomyError(ValueError):
    """Lexicon or mapping content violates a structural invariant."""


class TagParseError(ValueError):
    """A tag string is bare (no '=') or has an empty key/value."""


class TagListFormatError(ValueError):
    """An LLM response does not contain a parseable list of strings."""


class TagListElementError(TagListFormatError):
    """A list element failed tag parsing; carries the element index."""

    def __init__(self, index: int, message: str):
        super().__init__(f"element {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class OsmTag:
    key: str
    value: str

    def canonical(self) -> str:
        return f"{self.key}={self.value}"


@dataclass(frozen=True)
class NaceSection:
    code: str
    title: str
    description: str
    keywords: tuple[str, ...]
    obtainable_from_osm: bool


@dataclass(frozen=True)
class GuidelineExtract:
    """Pre-flattened official guideline record for one section."""

    official_name: str
    alternative_name: str | None = None
    scope: str | None = None
    content: str | None = None
    additional_content: str | None = None
    exclusion: str | None = None


@dataclass(frozen=True)
class Taxonomy:
    sections: tuple[NaceSection, ...]

    def section(self, code: str) -> NaceSection:
        for section in self.sections:
            if section.code == code:
                return section
        raise KeyError(code)

    @property
    def keyword_owner(self) -> dict[str, str]:
        # Cheap to rebuild and keeps the dataclass hashable/frozen.
        return {kw: s.code for s in self.sections for kw in s.keywords}


@dataclass(frozen=True)
class TagMapping:
    entries: dict[OsmTag, frozenset[str]]

    def __len__(self) -> int:
        return len(self.entries)


def section_index(code: str) -> int:
    """Frequency-vector dimension of a section: its alphabetical rank, A=0 .. U=20."""
    try:
        return SECTION_INDEX[code]
    except KeyError:
        raise ValueError(f"not a NACE section code: {code!r}") from None


def load_taxonomy(lexicon_file: str | Path) -> Taxonomy:
    """Load the 21-section lexicon from a JSONL file, one record per section."""
    path = Path(lexicon_file)
    sections: dict[str, NaceSection] = {}
    owners: dict[str, str] = {}
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TaxonomyError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            section = _section_from_record(record, f"{path}:{lineno}")
            if section.code in sections:
                raise TaxonomyError(f"{path}:{lineno}: duplicate section {section.code}")
            for keyword in section.keywords:
                if keyword in owners:
                    raise TaxonomyError(
                        f"keyword {keyword!r} appears in sections "
                        f"{owners[keyword]} and {section.code}"
                    )
                owners[keyword] = section.code
            sections[section.code] = section
    missing = [code for code in SECTION_CODES if code not in sections]
    if missing:
        raise TaxonomyError(f"missing sections: {', '.join(missing)}")
    ordered = tuple(sections[code] for code in SECTION_CODES)
    return Taxonomy(sections=ordered)


def _section_from_record(record: dict, where: str) -> NaceSection:
    try:
        code = record["code"]
        title = record["title"]
        description = record["description"]
        keywords = record["keywords"]
        obtainable = record["obtainable_from_osm"]
    except (KeyError, TypeError) as exc:
        raise TaxonomyError(f"{where}: missing field {exc}") from exc
    if code not in SECTION_CODES:
        raise TaxonomyError(f"{where}: bad section code {code!r}")
    if not title or not description:
        raise TaxonomyError(f"{where}: empty title or description")
    if not keywords:
        raise TaxonomyError(f"{where}: section {code} has no keywords")
    for keyword in keywords:
        if not isinstance(keyword, str) or not _KEYWORD_RE.fullmatch(keyword):
            raise TaxonomyError(
                f"{where}: keyword {keyword!r} must be lowercase letters/hyphens"
            )
    if bool(obtainable) != (code != UNOBTAINABLE_SECTION):
        raise TaxonomyError(
            f"{where}: obtainable_from_osm must be false exactly for section "
            f"{UNOBTAINABLE_SECTION}"
        )
    return NaceSection(
        code=code,
        title=title,
        description=description,
        keywords=tuple(keywords),
        obtainable_from_osm=bool(obtainable),
    )


def default_taxonomy() -> Taxonomy:
    with resources.as_file(
        resources.files("geosector.data").joinpath("nace_sections.jsonl")
    ) as path:
        return load_taxonomy(path)


def section_for_keyword(taxonomy: Taxonomy, keyword: str) -> str | None:
    """Owning section of a keyword, or None if unknown. Case-insensitive."""
    return taxonomy.keyword_owner.get(keyword.strip().lower())


def parse_tag(text: str) -> OsmTag:
    """Parse "key=value", trimming whitespace around both halves."""
    if "=" not in text:
        raise TagParseError(f"bare key (no '='): {text.strip()!r}")
    key, _, value = text.partition("=")
    key = key.strip()
    value = value.strip()
    if not key or not value:
        raise TagParseError(f"malformed tag: {text.strip()!r}")
    return OsmTag(key=key, value=value)


def parse_llm_tag_list(response: str) -> list[OsmTag]:
    """Parse a model response that should be a Python list of "key=value" strings.

    Order is preserved; duplicates are dropped keeping the first occurrence.
    """
    text = response.strip()
    if text.startswith("```"):
        # The prompt forbids code markers but models emit them anyway.
        lines = text.splitlines()[1:]
        if lines and lines[-1].strip().startswith("```"):
            lines = lines[:-1]
        text = "\n".join(lines).strip()
    start = text.find("[")
    end = text.rfind("]")
    if start < 0 or end < start:
        raise TagListFormatError("response contains no bracketed list")
    try:
        value = ast.literal_eval(text[start : end + 1])
    except (SyntaxError, ValueError) as exc:
        raise TagListFormatError(f"unparseable list: {exc}") from exc
    if not isinstance(value, list) or any(not isinstance(item, str) for item in value):
        raise TagListFormatError("expected a list of strings")
    tags: list[OsmTag] = []
    seen: set[OsmTag] = set()
    for index, item in enumerate(value):
        try:
            tag = parse_tag(item)
        except TagParseError as exc:
            raise TagListElementError(index, str(exc)) from exc
        if tag not in seen:
            seen.add(tag)
            tags.append(tag)
    return tags


_MAPPING_PROMPT = """Task Description

You will be given a description of a NACE code, representing a business activity.
Your task is to identify relevant OpenStreetMap (OSM) tags that can be used to classify businesses or locations corresponding to this activity.

NACE Code Description:

{extract}

Response Format

Your response must consist only of a Python list of OSM tags, where each element is a string in the form key=value.

["landuse=retail", "shop=supermarket", "amenity=parking"]

Constraints

- Every tag must include an = sign (e.g., shop=supermarket)
- Do not include bare keys such as shop or amenity
- Do not include explanations or additional text
- Do not include Python code markers
- Do not use tags unrelated to business activities (e.g., landuse=forest)
- Output only the Python list

OSM Tags:"""

_EXTRACT_FIELDS = (
    ("Official Name", "official_name"),
    ("Alternative Name", "alternative_name"),
    ("Scope", "scope"),
    ("Content", "content"),
    ("Additional Content", "additional_content"),
    ("Exclusion", "exclusion"),
)


def render_mapping_prompt(extract: GuidelineExtract) -> str:
    """Prompt asking a model for OSM tags matching one guideline extract."""
    if not extract.official_name:
        raise ValueError("extract has no official name")
    lines = []
    for label, attr in _EXTRACT_FIELDS:
        value = getattr(extract, attr)
        if value:
            lines.append(f"{label}: {value}")
    return _MAPPING_PROMPT.format(extract="\n".join(lines))


def load_mapping(mapping_file: str | Path) -> TagMapping:
    """Load "key=value<TAB>SECTION[,SECTION...]" records; '#' lines are comments."""
    path = Path(mapping_file)
    entries: dict[OsmTag, frozenset[str]] = {}
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TaxonomyError(f"{path}:{lineno}: expected tag<TAB>sections")
            try:
                tag = parse_tag(parts[0])
            except TagParseError as exc:
                raise TaxonomyError(f"{path}:{lineno}: {exc}") from exc
            codes = [code.strip() for code in parts[1].split(",") if code.strip()]
            if not codes:
                raise TaxonomyError(f"{path}:{lineno}: empty section list")
            for code in codes:
                if code not in SECTION_CODES:
                    raise TaxonomyError(f"{path}:{lineno}: bad section {code!r}")
                if code == UNOBTAINABLE_SECTION:
                    raise TaxonomyError(
                        f"{path}:{lineno}: section {UNOBTAINABLE_SECTION} cannot be "
                        "a mapping target"
                    )
            if tag in entries:
                raise TaxonomyError(
                    f"{path}:{lineno}: duplicate mapping for {tag.canonical()}"
                )
            entries[tag] = frozenset(codes)
    return TagMapping(entries=entries)


def default_mapping() -> TagMapping:
    with resources.as_file(
        resources.files("geosector.data").joinpath("nace_osm_mapping.tsv")
    ) as path:
        return load_mapping(path)


def sections_for_tag(mapping: TagMapping, tag: OsmTag) -> frozenset[str]:
    """Sections a tag maps to; empty for non-activity tags."""
    return mapping.entries.get(tag, frozenset())
