"""Command-line interface: the full workflow as subcommands.

One executable drives everything: ``map`` turns reviewed guideline responses
into the tag mapping, ``build`` assembles a balanced dataset with stitched
map images and external texts, ``classify`` runs a pipeline against a chat
gateway, ``score`` computes the metric report, and ``summarize`` describes a
dataset.  Every run writes a manifest into its output directory recording
the tool version, the effective configuration, and digests of the inputs.

Settings resolve with precedence flags > config file > environment
(``GEOSECTOR_<KEY>``); the resolved values are echoed into the manifest so a
run can be audited and repeated.  Diagnostics go to standard error; data
goes to files only.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import datasetio
from . import sources as sources_mod
from .cluemetrics import per_source_csv, render_report, report_to_json_text, score
from .corpus import (
    EXTERNAL_SOURCE_KEYS,
    activity_tag_counts,
    expand_point_bbox,
    label,
    read_element_stream,
    sample_balanced,
)
from .datasetio import Dataset, DatasetEntry, DatasetManifest, SourceText
from .geotile import DEFAULT_MAX_TILES, TileProvider, dynamic_zoom, fetch_and_stitch, grid_for
from .inference.gateway import DEFAULT_RETRIES, DEFAULT_TIMEOUT_S, ChatGateway
from .inference.prompts import CONFIGURATIONS, CONTEXT_VARIANTS, OUTPUT_MODES, PromptTemplate
from .inference.runner import PIPELINES, read_records, run_pipeline
from .replay import MODE_RECORD, MODE_REPLAY, FetchError, ReplayMiss, ResponseStore
from .taxonomy import (
    SECTION_CODES,
    UNOBTAINABLE_SECTION,
    GuidelineExtract,
    OsmTag,
    TagListFormatError,
    default_mapping,
    default_taxonomy,
    load_mapping,
    parse_llm_tag_list,
    render_mapping_prompt,
)

logger = logging.getLogger(__name__)

PROG = "geosector"
ENV_PREFIX = "GEOSECTOR_"
RUN_MANIFEST_FILENAME = "run_manifest.json"

DEFAULT_OSM_TILE_URL = "https://tile.openstreetmap.org/{z}/{x}/{y}.png"
DEFAULT_SATELLITE_TILE_URL = (
    "https://server.arcgisonline.com/ArcGIS/rest/services/"
    "World_Imagery/MapServer/tile/{z}/{y}/{x}"
)
OSM_ATTRIBUTION = "Map data and tiles (c) OpenStreetMap contributors (ODbL)"
SATELLITE_ATTRIBUTION = "Satellite imagery (c) Esri and imagery suppliers"

# Tags that move into dedicated entry fields instead of staying in osm_tags.
_LIFTED_TAG_KEYS = ("name",) + EXTERNAL_SOURCE_KEYS

_TRUE_WORDS = frozenset({"1", "true", "yes", "on"})
_FALSE_WORDS = frozenset({"0", "false", "no", "off"})


class CliError(RuntimeError):
    """Fatal command error, already phrased for the user."""


# ---------------------------------------------------------------------------
# Settings resolution: flags > config file > environment > default.


@dataclass(frozen=True)
class Setting:
    key: str
    cast: str = "str"
    default: object = None
    required: bool = False
    choices: tuple[str, ...] | None = None


def _cast_value(key: str, value, cast: str):
    try:
        if cast == "bool":
            if isinstance(value, bool):
                return value
            word = str(value).strip().lower()
            if word in _TRUE_WORDS:
                return True
            if word in _FALSE_WORDS:
                return False
            raise ValueError("expected a boolean, got %r" % (value,))
        if cast == "int":
            if isinstance(value, bool):
                raise ValueError("expected an integer, got %r" % (value,))
            return int(value)
        if cast == "float":
            if isinstance(value, bool):
                raise ValueError("expected a number, got %r" % (value,))
            return float(value)
        if not isinstance(value, str):
            raise ValueError("expected a string, got %r" % (value,))
        return value
    except (TypeError, ValueError) as exc:
        raise CliError("bad value for %s: %s" % (key, exc)) from exc


def load_config_file(path: str | None) -> dict:
    """Read a JSON object of setting overrides; missing path means no file."""
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError("cannot read config file %s: %s" % (path, exc)) from exc
    except json.JSONDecodeError as exc:
        raise CliError("config file %s is not valid JSON: %s" % (path, exc)) from exc
    if not isinstance(data, dict):
        raise CliError("config file %s must hold a JSON object" % path)
    return data


def resolve_settings(
    args: argparse.Namespace, file_config: dict, specs: tuple[Setting, ...]
) -> dict:
    """Resolve every setting with precedence flag > config file > environment."""
    effective: dict = {}
    for spec in specs:
        value = getattr(args, spec.key, None)
        if value is None and spec.key in file_config:
            value = file_config[spec.key]
        if value is None:
            raw = os.environ.get(ENV_PREFIX + spec.key.upper())
            if raw is not None:
                value = raw
        if value is None:
            if spec.required:
                flag = "--" + spec.key.replace("_", "-")
                raise CliError(
                    "missing required setting %r: pass %s, set %r in the config file, "
                    "or export %s%s"
                    % (spec.key, flag, spec.key, ENV_PREFIX, spec.key.upper())
                )
            effective[spec.key] = spec.default
            continue
        value = _cast_value(spec.key, value, spec.cast)
        if spec.choices is not None and value not in spec.choices:
            raise CliError(
                "%s must be one of %s, got %r" % (spec.key, ", ".join(spec.choices), value)
            )
        effective[spec.key] = value
    if effective.get("replay") and effective.get("record"):
        raise CliError("replay and record are mutually exclusive")
    return effective


COMMON_SETTINGS = (
    Setting("workers", "int", default=1),
    Setting("seed", "int", default=0),
    Setting("replay"),
    Setting("record"),
    Setting("verbose", "bool", default=False),
)

MAP_SETTINGS = COMMON_SETTINGS + (
    Setting("guidelines", required=True),
    Setting("responses"),
    Setting("prompts_out"),
    Setting("out", required=True),
)

BUILD_SETTINGS = COMMON_SETTINGS + (
    Setting("elements", required=True),
    Setting("mapping"),
    Setting("out", required=True),
    Setting("per_section", "int", default=1),
    Setting("dataset_name", default="geosector"),
    Setting("dataset_version", default="1"),
    Setting("osm_tile_url", default=DEFAULT_OSM_TILE_URL),
    Setting("satellite_tile_url", default=DEFAULT_SATELLITE_TILE_URL),
    Setting("max_tiles", "int", default=DEFAULT_MAX_TILES),
    Setting("budget_chars", "int", default=sources_mod.DEFAULT_BUDGET_CHARS),
)

CLASSIFY_SETTINGS = COMMON_SETTINGS + (
    Setting("dataset", required=True),
    Setting("out", required=True),
    Setting("gateway_url", required=True),
    Setting("model", required=True),
    Setting("pipeline", default="zero_shot", choices=PIPELINES),
    Setting("inputs", default="all", choices=CONFIGURATIONS),
    Setting("context", default="simple", choices=CONTEXT_VARIANTS),
    Setting("output_mode", default="text", choices=OUTPUT_MODES),
    Setting("temperature", "float", default=0.0),
    Setting("max_tokens", "int", default=1024),
    Setting("timeout", "float", default=DEFAULT_TIMEOUT_S),
    Setting("retries", "int", default=DEFAULT_RETRIES),
    Setting("resume", "bool", default=True),
)

SCORE_SETTINGS = COMMON_SETTINGS + (
    Setting("records", required=True),
    Setting("dataset", required=True),
    Setting("out", required=True),
)

SUMMARIZE_SETTINGS = COMMON_SETTINGS + (
    Setting("dataset", required=True),
    Setting("out", required=True),
)


# ---------------------------------------------------------------------------
# Run manifest: one per output directory.


@dataclass(frozen=True)
class RunManifest:
    command: str
    tool_version: str
    started_at: str
    finished_at: str
    effective_config: dict
    config_digest: str
    input_digests: dict


@dataclass
class RunContext:
    command: str
    started_at: str
    settings: dict
    config_file: str | None
    input_digests: dict = field(default_factory=dict)

    def note_input(self, name: str, path: str | Path) -> None:
        self.input_digests[name] = digest_file(path)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def digest_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_digest(effective_config: dict) -> str:
    canonical = json.dumps(
        effective_config, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_run_manifest(context: RunContext, out_dir: str | Path) -> Path:
    """Persist the manifest for a finished command into its output directory."""
    if context.config_file is not None:
        context.note_input("config_file", context.config_file)
    manifest = RunManifest(
        command=context.command,
        tool_version=__version__,
        started_at=context.started_at,
        finished_at=_now(),
        effective_config=dict(context.settings),
        config_digest=config_digest(context.settings),
        input_digests=dict(sorted(context.input_digests.items())),
    )
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RUN_MANIFEST_FILENAME
    path.write_text(
        json.dumps(dataclasses.asdict(manifest), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
        newline="\n",
    )
    return path


def _open_store(settings: dict) -> ResponseStore | None:
    replay_dir = settings.get("replay")
    record_dir = settings.get("record")
    if replay_dir and record_dir:
        raise CliError("replay and record are mutually exclusive")
    if replay_dir:
        if not Path(replay_dir).is_dir():
            raise CliError("replay store not found: %s" % replay_dir)
        return ResponseStore(replay_dir, mode=MODE_REPLAY)
    if record_dir:
        return ResponseStore(record_dir, mode=MODE_RECORD)
    return None


# ---------------------------------------------------------------------------
# map: guideline extracts + reviewed responses -> tag mapping file.


def _load_extract(path: Path) -> GuidelineExtract:
    record = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(record, dict):
        raise CliError("%s: guideline extract must be a JSON object" % path)
    name = record.get("official_name")
    if not isinstance(name, str) or not name.strip():
        raise CliError("%s: guideline extract needs a non-empty official_name" % path)
    optional = {}
    for key in ("alternative_name", "scope", "content", "additional_content", "exclusion"):
        value = record.get(key)
        if value is not None and not isinstance(value, str):
            raise CliError("%s: field %s must be a string" % (path, key))
        optional[key] = value
    return GuidelineExtract(official_name=name, **optional)


def cmd_map(context: RunContext) -> int:
    settings = context.settings
    guidelines_dir = Path(settings["guidelines"])
    out_path = Path(settings["out"])
    responses_dir = Path(settings["responses"]) if settings["responses"] else guidelines_dir
    if not guidelines_dir.is_dir():
        raise CliError("guidelines directory not found: %s" % guidelines_dir)

    extracts: dict[str, GuidelineExtract] = {}
    for path in sorted(guidelines_dir.glob("*.json")):
        code = path.stem
        if code not in SECTION_CODES:
            logger.warning("%s: file name is not a section code, skipped", path.name)
            continue
        if code == UNOBTAINABLE_SECTION:
            logger.warning("section %s is not obtainable from map data, skipped", code)
            continue
        extracts[code] = _load_extract(path)
        context.note_input(path.name, path)
    if not extracts:
        raise CliError("no guideline extracts (<SECTION>.json) in %s" % guidelines_dir)

    if settings["prompts_out"]:
        prompts_dir = Path(settings["prompts_out"])
        prompts_dir.mkdir(parents=True, exist_ok=True)
        for code, extract in sorted(extracts.items()):
            prompt_path = prompts_dir / ("%s.prompt.txt" % code)
            prompt_path.write_text(
                render_mapping_prompt(extract) + "\n", encoding="utf-8", newline="\n"
            )
        logger.info("wrote %d mapping prompts to %s", len(extracts), prompts_dir)

    tag_sections: dict[OsmTag, set[str]] = {}
    reviewed = 0
    for code in sorted(extracts):
        response_path = responses_dir / ("%s.response.txt" % code)
        if not response_path.exists():
            logger.warning("no reviewed response for section %s (%s)", code, response_path.name)
            continue
        context.note_input(response_path.name, response_path)
        try:
            tags = parse_llm_tag_list(response_path.read_text(encoding="utf-8"))
        except TagListFormatError as exc:
            raise CliError("section %s: %s" % (code, exc)) from exc
        reviewed += 1
        for tag in tags:
            tag_sections.setdefault(tag, set()).add(code)
    if not reviewed:
        raise CliError("no reviewed responses (<SECTION>.response.txt) in %s" % responses_dir)

    lines = ["# OSM tag to NACE section mapping: key=value<TAB>comma-joined sections"]
    for tag in sorted(tag_sections, key=lambda t: (t.key, t.value)):
        lines.append("%s\t%s" % (tag.canonical(), ",".join(sorted(tag_sections[tag]))))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    try:
        mapping = load_mapping(out_path)
    except ValueError:
        out_path.unlink(missing_ok=True)
        raise
    logger.info(
        "mapping: %d tags from %d reviewed sections -> %s", len(mapping), reviewed, out_path
    )
    write_run_manifest(context, out_path.parent)
    return 0


# ---------------------------------------------------------------------------
# build: element stream -> balanced dataset with images and source texts.


def _entry_tags(tags: dict[str, str]) -> dict[str, str]:
    return {key: value for key, value in tags.items() if key not in _LIFTED_TAG_KEYS}


def _gather_source_texts(
    element_tags: dict[str, str],
    category: str,
    section_title: str,
    budget_chars: int,
    store: ResponseStore | None,
    diagnostics: list[str],
) -> dict[str, SourceText]:
    """Fetch each referenced source; failures and leaks keep the locator only."""
    gathered: dict[str, SourceText] = {}
    for ref in sources_mod.refs_from_tags(element_tags, diagnostics):
        text: str | None
        try:
            document = sources_mod.fetch(ref, budget_chars, store)
            text = document.text or None
        except (FetchError, ReplayMiss, sources_mod.SourceError, ValueError) as exc:
            message = "%s %s: fetch failed (%s); keeping locator only" % (
                ref.kind,
                ref.locator,
                exc,
            )
            diagnostics.append(message)
            logger.warning(message)
            text = None
        if text and datasetio.scan_for_leak(text, category, section_title):
            message = "%s %s: text states the NACE assignment; keeping locator only" % (
                ref.kind,
                ref.locator,
            )
            diagnostics.append(message)
            logger.warning(message)
            text = None
        gathered[ref.kind] = SourceText(text=text, locator=ref.locator)
    return gathered


def cmd_build(context: RunContext) -> int:
    settings = context.settings
    elements_path = Path(settings["elements"])
    out_dir = Path(settings["out"])
    store = _open_store(settings)
    taxonomy = default_taxonomy()
    if settings["mapping"]:
        mapping = load_mapping(settings["mapping"])
        context.note_input("mapping", settings["mapping"])
    else:
        mapping = default_mapping()
    if not elements_path.is_file():
        raise CliError("element stream not found: %s" % elements_path)
    context.note_input("elements", elements_path)

    diagnostics: list[str] = []
    elements = list(read_element_stream(elements_path, diagnostics))
    if not elements:
        raise CliError("no usable elements in %s" % elements_path)
    tag_counts = activity_tag_counts(elements, mapping)
    pool = []
    for element in elements:
        labeled = label(element, mapping, tag_counts, diagnostics)
        if labeled is not None:
            pool.append(labeled)
    sampled = sample_balanced(pool, settings["per_section"], settings["seed"])
    logger.info(
        "sampled %d of %d labeled elements (%d in stream)",
        len(sampled),
        len(pool),
        len(elements),
    )

    providers = (
        TileProvider(
            name="osm",
            url_template=settings["osm_tile_url"],
            max_parallel=settings["workers"],
            attribution=OSM_ATTRIBUTION,
        ),
        TileProvider(
            name="satellite",
            url_template=settings["satellite_tile_url"],
            max_parallel=settings["workers"],
            attribution=SATELLITE_ATTRIBUTION,
        ),
    )
    (out_dir / "images").mkdir(parents=True, exist_ok=True)

    entries = []
    for labeled in sampled:
        element = labeled.element
        tile_bbox = expand_point_bbox(element.bbox)
        zoom = dynamic_zoom(tile_bbox, settings["max_tiles"])
        image_paths = {}
        for provider in providers:
            grid = grid_for(tile_bbox, zoom)
            stitched = fetch_and_stitch(grid, provider, store)
            relative = "images/%d_%s.png" % (element.id, provider.name)
            stitched.save(out_dir / relative)
            image_paths[provider.name] = relative
        section_title = taxonomy.section(labeled.category).title
        source_texts = _gather_source_texts(
            element.tags,
            labeled.category,
            section_title,
            settings["budget_chars"],
            store,
            diagnostics,
        )
        if not source_texts:
            raise CliError(
                "entry %d (%s): no usable external source reference" % (element.id, element.name)
            )
        entries.append(
            DatasetEntry(
                id=element.id,
                element_type=element.element_type,
                name=element.name,
                bbox=element.bbox,
                osm_tags=_entry_tags(element.tags),
                category=labeled.category,
                image_paths=image_paths,
                sources=source_texts,
            )
        )

    manifest = DatasetManifest(
        name=settings["dataset_name"],
        version=settings["dataset_version"],
        created_at=_now(),
        attributions=tuple(provider.attribution for provider in providers),
    )
    datasetio.write(Dataset(entries=tuple(entries), manifest=manifest), out_dir, taxonomy)
    logger.info("wrote %d entries to %s", len(entries), out_dir)
    write_run_manifest(context, out_dir)
    return 0


# ---------------------------------------------------------------------------
# classify: dataset -> inference records via a chat gateway.


def cmd_classify(context: RunContext) -> int:
    settings = context.settings
    dataset_dir = Path(settings["dataset"])
    out_path = Path(settings["out"])
    store = _open_store(settings)
    taxonomy = default_taxonomy()
    dataset = datasetio.read(dataset_dir, taxonomy)
    context.note_input("entries", dataset_dir / datasetio.ENTRIES_FILENAME)
    template = PromptTemplate(variant=settings["context"], output_mode=settings["output_mode"])
    gateway = ChatGateway(
        settings["gateway_url"],
        settings["model"],
        temperature=settings["temperature"],
        max_tokens=settings["max_tokens"],
        timeout_s=settings["timeout"],
        retries=settings["retries"],
        store=store,
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    records = run_pipeline(
        dataset,
        settings["pipeline"],
        settings["inputs"],
        template,
        gateway,
        taxonomy=taxonomy,
        dataset_dir=dataset_dir,
        records_path=out_path,
        workers=settings["workers"],
        resume=settings["resume"],
    )
    write_run_manifest(context, out_path.parent)
    failures = sum(1 for record in records if record.failed)
    if failures:
        print(
            "%s classify: %d of %d entries failed; rerun with the same output to retry"
            % (PROG, failures, len(records)),
            file=sys.stderr,
        )
        return 1
    logger.info("classified %d entries -> %s", len(records), out_path)
    return 0


# ---------------------------------------------------------------------------
# score: records + dataset -> metric report files.


def cmd_score(context: RunContext) -> int:
    settings = context.settings
    records_path = Path(settings["records"])
    dataset_dir = Path(settings["dataset"])
    out_dir = Path(settings["out"])
    if not records_path.is_file():
        raise CliError("records file not found: %s" % records_path)
    records = read_records(records_path)
    if not records:
        raise CliError("no records in %s" % records_path)
    context.note_input("records", records_path)
    taxonomy = default_taxonomy()
    dataset = datasetio.read(dataset_dir, taxonomy)
    context.note_input("entries", dataset_dir / datasetio.ENTRIES_FILENAME)
    report = score(records, dataset, taxonomy)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(render_report(report), encoding="utf-8", newline="\n")
    (out_dir / "report.json").write_text(
        report_to_json_text(report), encoding="utf-8", newline="\n"
    )
    (out_dir / "per_source.csv").write_text(per_source_csv(report), encoding="utf-8", newline="\n")
    logger.info("scored %d records -> %s", len(records), out_dir)
    write_run_manifest(context, out_dir)
    return 0


# ---------------------------------------------------------------------------
# summarize: dataset -> composition summary.


def cmd_summarize(context: RunContext) -> int:
    settings = context.settings
    dataset_dir = Path(settings["dataset"])
    out_dir = Path(settings["out"])
    dataset = datasetio.read(dataset_dir, default_taxonomy())
    context.note_input("entries", dataset_dir / datasetio.ENTRIES_FILENAME)
    summary = datasetio.summarize(dataset)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
        newline="\n",
    )
    logger.info("summarized %d entries -> %s", len(dataset.entries), out_dir)
    write_run_manifest(context, out_dir)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch.


def build_arg_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="JSON config file; flags override it")
    common.add_argument("--workers", type=int, metavar="N", help="parallelism bound (default 1)")
    common.add_argument("--seed", type=int, metavar="N", help="sampling seed (default 0)")
    store = common.add_mutually_exclusive_group()
    store.add_argument(
        "--replay", metavar="DIR", help="serve network responses from this store, no live traffic"
    )
    store.add_argument(
        "--record", metavar="DIR", help="record live network responses into this store"
    )
    common.add_argument(
        "--verbose", action="store_const", const=True, help="log progress detail to stderr"
    )

    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Build and score a multimodal industry-classification benchmark.",
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    sub = subparsers.add_parser(
        "map",
        parents=[common],
        help="turn guideline extracts and reviewed tag lists into a mapping file",
    )
    sub.add_argument(
        "--guidelines", metavar="DIR", help="directory of <SECTION>.json guideline extracts"
    )
    sub.add_argument(
        "--responses",
        metavar="DIR",
        help="directory of <SECTION>.response.txt reviewed tag lists (default: guidelines dir)",
    )
    sub.add_argument(
        "--prompts-out", metavar="DIR", help="also write the rendered mapping prompts here"
    )
    sub.add_argument("--out", metavar="FILE", help="mapping file to write")
    sub.set_defaults(func=cmd_map, specs=MAP_SETTINGS)

    sub = subparsers.add_parser(
        "build",
        parents=[common],
        help="filter, sample, and assemble a dataset with images and source texts",
    )
    sub.add_argument("--elements", metavar="FILE", help="JSONL stream of map elements")
    sub.add_argument(
        "--mapping", metavar="FILE", help="tag mapping file (default: packaged mapping)"
    )
    sub.add_argument("--out", metavar="DIR", help="dataset directory to create")
    sub.add_argument(
        "--per-section", type=int, metavar="N", help="entries per section (default 1)"
    )
    sub.add_argument("--dataset-name", metavar="NAME", help="dataset manifest name")
    sub.add_argument("--dataset-version", metavar="V", help="dataset manifest version")
    sub.add_argument("--osm-tile-url", metavar="TPL", help="map tile URL template")
    sub.add_argument("--satellite-tile-url", metavar="TPL", help="satellite tile URL template")
    sub.add_argument(
        "--max-tiles", type=int, metavar="N", help="tile budget per image axis (default 4)"
    )
    sub.add_argument(
        "--budget-chars", type=int, metavar="N", help="character budget per source text"
    )
    sub.set_defaults(func=cmd_build, specs=BUILD_SETTINGS)

    sub = subparsers.add_parser(
        "classify", parents=[common], help="run a classification pipeline over a dataset"
    )
    sub.add_argument("--dataset", metavar="DIR", help="dataset directory")
    sub.add_argument("--out", metavar="FILE", help="records file to write (JSONL)")
    sub.add_argument("--gateway-url", metavar="URL", help="chat completions endpoint")
    sub.add_argument("--model", metavar="ID", help="model identifier sent to the gateway")
    sub.add_argument("--pipeline", metavar="NAME", help="zero_shot or multi_turn")
    sub.add_argument("--inputs", metavar="NAME", help="input configuration (default all)")
    sub.add_argument("--context", metavar="NAME", help="section context: simple or extended")
    sub.add_argument("--output-mode", metavar="NAME", help="response format: text or json")
    sub.add_argument("--temperature", type=float, metavar="X", help="sampling temperature")
    sub.add_argument("--max-tokens", type=int, metavar="N", help="completion token bound")
    sub.add_argument("--timeout", type=float, metavar="S", help="request timeout in seconds")
    sub.add_argument("--retries", type=int, metavar="N", help="attempts per request")
    sub.add_argument(
        "--no-resume",
        dest="resume",
        action="store_const",
        const=False,
        help="ignore existing records instead of resuming",
    )
    sub.set_defaults(func=cmd_classify, specs=CLASSIFY_SETTINGS)

    sub = subparsers.add_parser(
        "score", parents=[common], help="compute the metric report for finished records"
    )
    sub.add_argument("--records", metavar="FILE", help="records file from classify")
    sub.add_argument("--dataset", metavar="DIR", help="dataset directory the records refer to")
    sub.add_argument("--out", metavar="DIR", help="report directory to write")
    sub.set_defaults(func=cmd_score, specs=SCORE_SETTINGS)

    sub = subparsers.add_parser(
        "summarize", parents=[common], help="describe a dataset's composition"
    )
    sub.add_argument("--dataset", metavar="DIR", help="dataset directory")
    sub.add_argument("--out", metavar="DIR", help="summary directory to write")
    sub.set_defaults(func=cmd_summarize, specs=SUMMARIZE_SETTINGS)

    return parser


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        file_config = load_config_file(args.config)
        settings = resolve_settings(args, file_config, args.specs)
        _setup_logging(settings["verbose"])
        context = RunContext(
            command=args.command,
            started_at=_now(),
            settings=settings,
            config_file=args.config,
        )
        return args.func(context)
    except (ValueError, RuntimeError, ReplayMiss, OSError) as exc:
        print("%s %s: %s" % (PROG, args.command, exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
