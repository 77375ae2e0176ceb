"""External text sources per entry: Wikidata records, Wikipedia articles, and
website landing pages, each reduced to compact prompt-ready text.

Fetches resolve through the record/replay store keyed by (kind, locator), so
identical stores yield byte-identical document text with zero network.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from html.parser import HTMLParser
from urllib.parse import quote

from .datasetio import DatasetEntry, SourceText
from .replay import ResponseStore, http_get, resolve_via

logger = logging.getLogger(__name__)

KIND_ORDER = ("wikidata", "wikipedia", "website")
DEFAULT_BUDGET_CHARS = 8000

_WIKIDATA_ID_RE = re.compile(r"Q\d+")
_URL_RE = re.compile(r"https?://", re.IGNORECASE)
_LANG_RE = re.compile(r"[a-z]{2,12}(?:-[a-z0-9]+)?")


class SourceError(RuntimeError):
    """A source response arrived but holds no usable document."""


class UnsupportedContentError(SourceError):
    """Website response is not text (binary download, PDF, ...)."""


@dataclass(frozen=True)
class SourceRef:
    kind: str
    locator: str


@dataclass(frozen=True)
class SourceDocument:
    ref: SourceRef
    text: str
    retrieved_at: str
    truncated: bool


def refs_from_tags(
    tags: dict[str, str], diagnostics: list[str] | None = None
) -> list[SourceRef]:
    """Recognize source tags; order is wikidata, wikipedia, website.

    Malformed locators are skipped with a diagnostic, never fatal.
    """

    def warn(message: str) -> None:
        if diagnostics is not None:
            diagnostics.append(message)
        logger.warning(message)

    refs: list[SourceRef] = []
    wikidata = tags.get("wikidata", "").strip()
    if wikidata:
        if _WIKIDATA_ID_RE.fullmatch(wikidata):
            refs.append(SourceRef("wikidata", wikidata))
        else:
            warn(f"wikidata tag is not a Q-id: {wikidata!r}")
    wikipedia = tags.get("wikipedia", "").strip()
    if wikipedia:
        prefix, _, rest = wikipedia.partition(":")
        if rest and _LANG_RE.fullmatch(prefix):
            lang, title = prefix, rest.strip()
        else:
            lang, title = "en", wikipedia
        if title:
            refs.append(SourceRef("wikipedia", f"{lang}:{title}"))
        else:
            warn(f"wikipedia tag has no title: {wikipedia!r}")
    website = tags.get("website", "").strip() or tags.get("contact:website", "").strip()
    if website:
        if _URL_RE.match(website):
            refs.append(SourceRef("website", website))
        else:
            warn(f"website tag is not an http(s) URL: {website!r}")
    return refs


_SKIP_TAGS = {"script", "style", "noscript", "template", "head", "nav", "footer", "iframe", "svg"}
_BLOCK_TAGS = {
    "p", "div", "br", "li", "ul", "ol", "dl", "dt", "dd",
    "h1", "h2", "h3", "h4", "h5", "h6",
    "table", "tr", "td", "th",
    "section", "article", "header", "main", "aside",
    "blockquote", "pre", "form", "hr", "figure", "figcaption", "title",
}


class _TextExtractor(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self.skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self.skip_depth += 1
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            if self.skip_depth:
                self.skip_depth -= 1
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_data(self, data):
        if not self.skip_depth:
            self.parts.append(data)


def extract_visible_text(markup: str) -> str:
    """Reduce HTML to visible text: drop script/style/nav/footer subtrees,
    break on block elements, collapse whitespace. Idempotent on its own
    output (plain text passes through unchanged)."""
    parser = _TextExtractor()
    parser.feed(markup)
    parser.close()
    lines = []
    for line in "".join(parser.parts).split("\n"):
        line = re.sub(r"[ \t\r\f\v]+", " ", line).strip()
        if line:
            lines.append(line)
    return "\n".join(lines)


def _lang_order(langs) -> list[str]:
    return sorted(langs, key=lambda lang: (lang != "en", lang))


def _property_order(pid: str) -> tuple[int, str]:
    digits = pid[1:] if pid[:1] == "P" and pid[1:].isdigit() else ""
    return (int(digits) if digits else 1 << 30, pid)


def _render_snak(snak: dict) -> str:
    snaktype = snak.get("snaktype", "value")
    if snaktype == "novalue":
        return "(no value)"
    if snaktype == "somevalue":
        return "(unknown value)"
    datavalue = snak.get("datavalue", {})
    value = datavalue.get("value")
    kind = datavalue.get("type")
    if kind == "wikibase-entityid":
        return value.get("id", "")
    if kind == "string":
        return str(value)
    if kind == "monolingualtext":
        return value.get("text", "")
    if kind == "time":
        return value.get("time", "")
    if kind == "quantity":
        return value.get("amount", "")
    if kind == "globecoordinate":
        return f"{value.get('latitude')},{value.get('longitude')}"
    return json.dumps(value, sort_keys=True) if value is not None else ""


def project_wikidata(entity: dict) -> str:
    """Compact text projection: labels, descriptions, then claims as
    "property: value" lines in stable order."""
    lines: list[str] = []
    labels = entity.get("labels") or {}
    for lang in _lang_order(labels):
        lines.append(f"label[{lang}]: {labels[lang].get('value', '')}")
    descriptions = entity.get("descriptions") or {}
    for lang in _lang_order(descriptions):
        lines.append(f"description[{lang}]: {descriptions[lang].get('value', '')}")
    claims = entity.get("claims") or {}
    for pid in sorted(claims, key=_property_order):
        for statement in claims[pid]:
            rendered = _render_snak(statement.get("mainsnak", {}))
            if rendered:
                lines.append(f"{pid}: {rendered}")
    return "\n".join(lines)


def _fetch_wikidata_text(locator: str, store: ResponseStore | None, timeout: float) -> str:
    url = f"https://www.wikidata.org/wiki/Special:EntityData/{locator}.json"
    raw = resolve_via(store, ("source", "wikidata", locator), lambda: http_get(url, timeout=timeout))
    payload = json.loads(raw.decode("utf-8"))
    entities = payload.get("entities") or {}
    entity = entities.get(locator)
    if entity is None and entities:
        # Redirected ids come back under the canonical id.
        entity = next(iter(entities.values()))
    if not entity:
        raise SourceError(f"wikidata entity {locator} not in response")
    return project_wikidata(entity)


def _fetch_wikipedia_text(locator: str, store: ResponseStore | None, timeout: float) -> str:
    lang, _, title = locator.partition(":")
    url = (
        f"https://{lang}.wikipedia.org/w/api.php"
        "?action=query&prop=extracts&explaintext=1&redirects=1&format=json"
        f"&titles={quote(title)}"
    )
    raw = resolve_via(store, ("source", "wikipedia", locator), lambda: http_get(url, timeout=timeout))
    payload = json.loads(raw.decode("utf-8"))
    pages = (payload.get("query") or {}).get("pages") or {}
    for page in pages.values():
        extract = page.get("extract")
        if extract:
            return extract
    raise SourceError(f"wikipedia article {locator} has no extract")


def _fetch_website_text(locator: str, store: ResponseStore | None, timeout: float) -> str:
    raw = resolve_via(store, ("source", "website", locator), lambda: http_get(locator, timeout=timeout))
    head = raw[:1024]
    if b"\x00" in head or head.lstrip()[:5] == b"%PDF-":
        raise UnsupportedContentError(f"{locator}: response is not text")
    return extract_visible_text(raw.decode("utf-8", errors="replace"))


_FETCHERS = {
    "wikidata": _fetch_wikidata_text,
    "wikipedia": _fetch_wikipedia_text,
    "website": _fetch_website_text,
}


def fetch(
    ref: SourceRef,
    budget_chars: int = DEFAULT_BUDGET_CHARS,
    store: ResponseStore | None = None,
    timeout: float = 30.0,
) -> SourceDocument:
    """Fetch one source and reduce it to text within the character budget."""
    if ref.kind not in _FETCHERS:
        raise ValueError(f"unknown source kind {ref.kind!r}")
    text = _FETCHERS[ref.kind](ref.locator, store, timeout)
    truncated = len(text) > budget_chars
    if truncated:
        text = text[:budget_chars]
    return SourceDocument(
        ref=ref,
        text=text,
        retrieved_at=datetime.now(timezone.utc).isoformat(),
        truncated=truncated,
    )


def attach_sources(
    entry: DatasetEntry,
    docs: list[SourceDocument],
    diagnostics: list[str] | None = None,
) -> DatasetEntry:
    """Populate entry.sources from fetched documents, keyed by kind."""
    sources: dict[str, SourceText] = {}
    for doc in docs:
        sources[doc.ref.kind] = SourceText(text=doc.text or None, locator=doc.ref.locator)
    if not sources:
        message = f"entry {entry.id}: no external sources fetched; not gold-eligible"
        if diagnostics is not None:
            diagnostics.append(message)
        logger.warning(message)
    return dataclasses.replace(entry, sources=sources)
