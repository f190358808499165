import json
import subprocess
from dataclasses import replace
from pathlib import Path

import pytest

from m3engine import DEFAULT_TEMPLATES, vocab
from m3engine.generator import (SWOT, TemplateError, bundle_closure_issues, load_template_catalog,
                                match_templates, materialize, taxonomy_subset, verify_bundle)
from m3engine.knowledge import Catalog
from m3engine.rdf import IRI, Graph, Triple, parse_turtle
from m3engine.taxonomy import Kind

TPL = "http://example.org/swot/template/"
M3X = vocab.M3X


def short(ts):
    return [t.id.value[len(TPL):] for t in ts]


def template_graph():
    return parse_turtle(DEFAULT_TEMPLATES.read_text())


def brute_force_match(sensors: set, domains: set, templates):
    hits = [t for t in templates if sensors & set(t.sensors) and domains & set(t.domains)]
    return sorted(hits, key=lambda t: (-(len(sensors & set(t.sensors)) + len(domains & set(t.domains))),
                                       t.id.value))


# -- loading ------------------------------------------------------------------------

def test_shipped_catalog_has_eight_templates(templates):
    assert len(templates) == 8
    assert all(t.sensors and t.domains and t.annotation_hints and t.rulesets and t.knowledge
               for t in templates)


def test_empty_graph(catalog, tax):
    assert load_template_catalog(Graph(), catalog, tax) == []


def test_missing_query_slot(catalog, tax):
    g = template_graph()
    victim = IRI(TPL + "home-remedies")
    slot = IRI(SWOT + "queryFile")
    g = Graph(t for t in g if not (t.subject == victim and t.predicate == slot))
    with pytest.raises(TemplateError) as info:
        load_template_catalog(g, catalog, tax, DEFAULT_TEMPLATES.parent)
    assert info.value.template_id == victim.value
    assert "queryFile" in info.value.reason


def test_dangling_sensor(catalog, tax):
    g = template_graph()
    g.add(Triple(IRI(TPL + "home-remedies"), IRI(SWOT + "sensor"), IRI(M3X + "Tricorder")))
    with pytest.raises(TemplateError, match="dangling"):
        load_template_catalog(g, catalog, tax, DEFAULT_TEMPLATES.parent)


def test_dangling_catalog_id(tax, catalog):
    smaller = Catalog([e for e in catalog if e.id != "naturopathy"], catalog.base_dir, catalog.prefixes)
    with pytest.raises(TemplateError, match="naturopathy"):
        load_template_catalog(template_graph(), smaller, tax, DEFAULT_TEMPLATES.parent)


# -- matching ------------------------------------------------------------------------

def test_thermometer_in_health(templates, tax):
    assert "home-remedies" in short(match_templates(["thermometer"], ["health"], templates, tax))


def test_thermometer_in_weather(templates, tax):
    found = short(match_templates(["thermometer"], ["weather"], templates, tax))
    assert "season-food" in found
    assert "home-remedies" not in found


def test_empty_request(templates, tax):
    assert match_templates([], [], templates, tax) == []


def test_ranking_prefers_more_overlap(templates, tax):
    found = short(match_templates(["thermometer", "heartbeat sensor"], ["health"], templates, tax))
    assert found[0] == "vital-signs-monitor"


def test_matching_agrees_with_brute_force(templates, tax):
    sensors = [e.canonical for e in tax.of_kind(Kind.SENSOR_TYPE)]
    domains = [e.canonical for e in tax.of_kind(Kind.DOMAIN)]
    for smask in range(1 << len(sensors)):
        s = {x for i, x in enumerate(sensors) if smask >> i & 1}
        for dmask in range(1 << len(domains)):
            d = {x for i, x in enumerate(domains) if dmask >> i & 1}
            assert match_templates(sorted(s), sorted(d), templates) == brute_force_match(s, d, templates)


# -- materialization ------------------------------------------------------------------

@pytest.fixture
def remedies(templates):
    return next(t for t in templates if t.id.value.endswith("home-remedies"))


def test_bundle_layout(remedies, catalog, tax, tmp_path):
    bundle = materialize(remedies, catalog, tax, tmp_path / "b")
    files = sorted(str(p.relative_to(bundle.root)) for p in bundle.root.rglob("*") if p.is_file())
    assert files == ["README.md", "knowledge/catalog.toml", "knowledge/health-ontology.ttl",
                     "knowledge/naturopathy.ttl", "manifest.json", "pipeline.toml", "query.rq",
                     "rules/health-rules.rules", "sample-readings.csv", "taxonomy.ttl"]
    manifest = json.loads((bundle.root / "manifest.json").read_text())
    assert {f["path"] for f in manifest["files"]} == set(files) - {"manifest.json"}
    assert verify_bundle(bundle.root) == []


def test_tampering_is_detected(remedies, catalog, tax, tmp_path):
    bundle = materialize(remedies, catalog, tax, tmp_path / "b")
    (bundle.root / "query.rq").write_text("SELECT * WHERE { }")
    assert verify_bundle(bundle.root) == ["digest mismatch for query.rq"]


def test_materialize_is_deterministic(templates, catalog, tax, tmp_path):
    for t in templates:
        a = materialize(t, catalog, tax, tmp_path / t.short_id / "a")
        b = materialize(t, catalog, tax, tmp_path / t.short_id / "b")
        diff = subprocess.run(["diff", "-r", str(a.root), str(b.root)], capture_output=True, text=True)
        assert diff.returncode == 0, diff.stdout


def test_bundles_are_closed(templates, catalog, tax, tmp_path):
    for t in templates:
        bundle = materialize(t, catalog, tax, tmp_path / t.short_id)
        assert bundle_closure_issues(bundle.root) == []


def test_taxonomy_subset_is_the_reachable_closure(remedies, catalog, tax, tmp_path):
    bundle = materialize(remedies, catalog, tax, tmp_path / "b")
    shipped = {t.subject for t in parse_turtle((bundle.root / "taxonomy.ttl").read_text())}
    rulesets = [catalog[i] for i in remedies.rulesets]
    assert shipped == taxonomy_subset(remedies, tax, rulesets)
    assert IRI(M3X + "BodyThermometer") in shipped
    assert IRI(M3X + "Thermometer") in shipped  # parent of the body thermometer
    assert IRI(vocab.UNIT + "Fahrenheit") in shipped  # reachable by conversion
    assert IRI(M3X + "Precipitation") not in shipped


def test_removed_catalog_entry_writes_nothing(remedies, catalog, tax, tmp_path):
    smaller = Catalog([e for e in catalog if e.id != "naturopathy"], catalog.base_dir, catalog.prefixes)
    out = tmp_path / "b"
    with pytest.raises(TemplateError):
        materialize(remedies, smaller, tax, out)
    assert not out.exists()


def test_missing_query_file_writes_nothing(remedies, catalog, tax, tmp_path):
    broken = replace(remedies, query_file=Path(tmp_path / "gone.rq"))
    out = tmp_path / "b"
    with pytest.raises(TemplateError):
        materialize(broken, catalog, tax, out)
    assert not out.exists()


def test_output_directory_must_be_empty(remedies, catalog, tax, tmp_path):
    (tmp_path / "b").mkdir()
    (tmp_path / "b" / "keep.txt").write_text("mine")
    with pytest.raises(FileExistsError):
        materialize(remedies, catalog, tax, tmp_path / "b")
    assert [p.name for p in (tmp_path / "b").iterdir()] == ["keep.txt"]


def test_runbook_uses_only_bundle_files(templates, catalog, tax, tmp_path):
    for t in templates:
        bundle = materialize(t, catalog, tax, tmp_path / t.short_id)
        for argv in bundle.runbook:
            for arg in argv:
                if arg.endswith((".ttl", ".rules", ".rq", ".toml")) and arg not in (
                        "annotated.ttl", "enriched.ttl", "linked.ttl"):
                    assert (bundle.root / arg).is_file(), arg
