"""Tests for entry validation, byte-stable serialization, and summaries."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import pytest

from geosector import datasetio as dio

FIXTURES = Path(__file__).parent / "data"


def make_entry(**overrides) -> dio.DatasetEntry:
    base = dict(
        id=42,
        element_type="way",
        name="Sample Works",
        bbox=(10.0, 50.0, 10.01, 50.01),
        osm_tags={"landuse": "quarry", "addr:city": "Town"},
        category="B",
        image_paths={"osm": "images/42_osm.png", "satellite": "images/42_satellite.png"},
        sources={"website": dio.SourceText(text="Gravel and sand supplier.", locator="https://s.test")},
    )
    base.update(overrides)
    return dio.DatasetEntry(**base)


def make_dataset(entries) -> dio.Dataset:
    manifest = dio.DatasetManifest(
        name="unit",
        version="1",
        created_at="2026-08-22T00:00:00+00:00",
        attributions=("Map data (c) OpenStreetMap contributors",),
    )
    return dio.Dataset(entries=tuple(entries), manifest=manifest)


def test_roundtrip_and_byte_stability(tmp_path):
    entries = [
        make_entry(),
        make_entry(
            id=43,
            category="K",
            osm_tags={"office": "financial"},
            name="Bank of Testing",
            sources={
                "wikidata": dio.SourceText(text="label[en]: Bank of Testing"),
                "website": dio.SourceText(text="Accounts and loans."),
            },
            image_paths={"osm": "images/43_osm.png", "satellite": "images/43_satellite.png"},
        ),
    ]
    dataset = make_dataset(entries)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    dio.write(dataset, out_a)
    dio.write(dataset, out_b)
    assert (out_a / "entries.jsonl").read_bytes() == (out_b / "entries.jsonl").read_bytes()
    assert (out_a / "manifest.json").read_bytes() == (out_b / "manifest.json").read_bytes()
    loaded = dio.read(out_a)
    assert loaded == dataset
    # Re-writing the loaded dataset is also byte-identical.
    out_c = tmp_path / "c"
    dio.write(loaded, out_c)
    assert (out_a / "entries.jsonl").read_bytes() == (out_c / "entries.jsonl").read_bytes()


def test_tag_order_does_not_change_bytes(tmp_path):
    tags = {"landuse": "quarry", "addr:city": "Town", "operator": "Op"}
    reversed_tags = dict(reversed(list(tags.items())))
    a = make_dataset([make_entry(osm_tags=tags)])
    b = make_dataset([make_entry(osm_tags=reversed_tags)])
    dio.write(a, tmp_path / "a")
    dio.write(b, tmp_path / "b")
    assert (tmp_path / "a/entries.jsonl").read_bytes() == (tmp_path / "b/entries.jsonl").read_bytes()


def test_heim_fixture_loads():
    dataset = dio.read(FIXTURES / "heim")
    assert len(dataset.entries) == 1
    entry = dataset.entries[0]
    assert entry.id == 122563530
    assert entry.element_type == "way"
    assert entry.name == "Heim Kieswerk"
    assert entry.category == "B"
    assert len(entry.osm_tags) == 8
    assert entry.osm_tags["landuse"] == "quarry"
    assert entry.osm_tags["resource"] == "sand"
    assert entry.bbox == (12.4893727, 50.9761359, 12.5089029, 50.9916218)
    assert set(entry.sources) == {"website"}
    assert entry.sources["website"].locator == "https://www.heim-gruppe.de"
    assert entry.sources["website"].text is None


def test_validation_rejections():
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(name=" "))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(category="T"))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(category="Z"))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(image_paths={"osm": "x.png"}))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(sources={}))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(sources={"ftp": dio.SourceText(text="x")}))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(sources={"website": dio.SourceText()}))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(bbox=(10.0, 50.0, 9.0, 50.01)))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(id=-1))
    with pytest.raises(dio.SchemaError):
        dio.validate_entry(make_entry(element_type="area"))


def test_category_t_rejected_before_write(tmp_path):
    dataset = make_dataset([make_entry(category="T")])
    with pytest.raises(dio.SchemaError):
        dio.write(dataset, tmp_path / "out")
    assert not (tmp_path / "out" / "entries.jsonl").exists()


def test_duplicate_ids_rejected(tmp_path):
    dataset = make_dataset([make_entry(), make_entry()])
    with pytest.raises(dio.SchemaError):
        dio.write(dataset, tmp_path / "out")


def test_leak_detection():
    leaking = make_entry(
        sources={"website": dio.SourceText(text="We are classified as NACE section B.")}
    )
    with pytest.raises(dio.LeakError):
        dio.validate_entry(leaking)
    title_leak = make_entry(
        sources={"website": dio.SourceText(text="NACE category: Mining and Quarrying business")}
    )
    with pytest.raises(dio.LeakError):
        dio.validate_entry(title_leak)
    # Sector letter far from any NACE mention is fine.
    benign = make_entry(
        sources={"website": dio.SourceText(text="Section B of the quarry opens at 8am.")}
    )
    dio.validate_entry(benign)
    # Mentioning NACE alone without the assignment is fine too.
    mentions = make_entry(
        sources={"website": dio.SourceText(text="We follow NACE-compliant bookkeeping.")}
    )
    dio.validate_entry(mentions)


def test_leak_error_on_read(tmp_path):
    entry = make_entry()
    dataset = make_dataset([entry])
    out = tmp_path / "out"
    dio.write(dataset, out)
    entries_file = out / "entries.jsonl"
    record = json.loads(entries_file.read_text(encoding="utf-8"))
    record["sources"]["website"]["text"] = "Our NACE section B registration."
    entries_file.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(dio.LeakError):
        dio.read(out)


def test_schema_error_on_read_names_field(tmp_path):
    entry = make_entry()
    out = tmp_path / "out"
    dio.write(make_dataset([entry]), out)
    entries_file = out / "entries.jsonl"
    record = json.loads(entries_file.read_text(encoding="utf-8"))
    record["name"] = ""
    entries_file.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(dio.SchemaError) as err:
        dio.read(out)
    assert err.value.field_name == "name"
    assert err.value.entry_id == 42


def test_summarize_three_entry_fixture():
    # Hand-computed: B has two entries with 3 and 4 resources (images count 2),
    # K has one entry with 5 resources.
    entries = [
        make_entry(id=1),
        make_entry(
            id=2,
            sources={
                "website": dio.SourceText(text="a"),
                "wikipedia": dio.SourceText(text="b"),
            },
        ),
        make_entry(
            id=3,
            category="K",
            osm_tags={"office": "financial"},
            sources={
                "website": dio.SourceText(text="a"),
                "wikipedia": dio.SourceText(text="b"),
                "wikidata": dio.SourceText(text="c"),
            },
        ),
    ]
    summary = dio.summarize(make_dataset(entries))
    assert summary["entry_count"] == 3
    assert summary["per_section_counts"]["B"] == 2
    assert summary["per_section_counts"]["K"] == 1
    assert summary["per_section_counts"]["A"] == 0
    assert "T" not in summary["per_section_counts"]
    assert summary["per_section_mean_resources"]["B"] == pytest.approx(3.5)
    assert summary["per_section_mean_resources"]["K"] == pytest.approx(5.0)
    assert summary["source_histogram"] == {
        "website": 1,
        "wikipedia+website": 1,
        "wikidata+wikipedia+website": 1,
    }


def test_summarize_empty():
    summary = dio.summarize(make_dataset([]))
    assert summary["entry_count"] == 0
    assert all(v == 0 for v in summary["per_section_counts"].values())
    assert all(v == 0.0 for v in summary["per_section_mean_resources"].values())
    assert summary["source_histogram"] == {}


def test_float_shortest_roundtrip(tmp_path):
    entry = make_entry(bbox=(12.4893727, 50.9761359, 12.5089029, 50.9916218))
    out = tmp_path / "out"
    dio.write(make_dataset([entry]), out)
    text = (out / "entries.jsonl").read_text(encoding="utf-8")
    assert "12.4893727" in text and "50.9916218" in text
    loaded = dio.read(out)
    assert loaded.entries[0].bbox == entry.bbox
