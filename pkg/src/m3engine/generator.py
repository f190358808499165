"""SWoT template catalog: matching developer requests and writing bundles.

Templates live in a Turtle document using the ``swot:`` vocabulary and are
read back through the query engine.  A materialized bundle holds everything
needed to run annotate -> reason -> link -> query on its own sample data.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from . import vocab
from .annotator import CONVERSIONS, CSV_HEADER
from .knowledge import Catalog, KnowledgeEntry
from .query import QueryError, parse_query, run_query
from .rdf import IRI, Graph, Literal, parse_turtle, serialize
from .reasoner import parse_rules, rule_iris
from .taxonomy import (EMPTY_CONTEXT, Kind, Taxonomy, UnificationContext,
                       UnificationError)

SWOT = vocab.SWOT
TEMPLATE_CLASS = IRI(SWOT + "Template")

SLOTS = ("sensor", "domain", "annotationHint", "ruleset", "knowledge", "queryFile")

_PREFIXES = f"PREFIX swot: <{SWOT}>\n"


class TemplateError(Exception):
    def __init__(self, template_id: str, reason: str):
        super().__init__(f"template {template_id}: {reason}")
        self.template_id = template_id
        self.reason = reason


@dataclass(frozen=True)
class Template:
    id: IRI
    title: str
    sensors: tuple
    domains: tuple
    annotation_hints: tuple
    rulesets: tuple
    knowledge: tuple
    query_file: Path
    description: str = ""
    sample_readings: Optional[Path] = None
    promises_suggestions: bool = False

    @property
    def short_id(self) -> str:
        return self.id.value.rstrip("/#").rsplit("/", 1)[-1].rsplit("#", 1)[-1]


def _slot_values(graph: Graph, predicate: str) -> dict:
    result = run_query(
        _PREFIXES + f"SELECT ?t ?v WHERE {{ ?t a swot:Template . ?t swot:{predicate} ?v . }}", graph
    )
    out: dict = {}
    for t, v in result.rows:
        out.setdefault(t, []).append(v)
    return out


def load_template_catalog(graph: Graph, catalog: Catalog, taxonomy: Taxonomy,
                          base_dir: Union[str, Path] = ".") -> list[Template]:
    """Templates described in ``graph``, validated against catalog and taxonomy.

    Raises TemplateError for the first template (in IRI order) with a missing
    slot or a dangling reference.
    """
    base_dir = Path(base_dir)
    ids = run_query(_PREFIXES + "SELECT ?t WHERE { ?t a swot:Template . }", graph).column("t")
    slots = {name: _slot_values(graph, name) for name in
             SLOTS + ("title", "description", "sampleReadings", "promisesSuggestions")}
    templates = []
    for tid in sorted(ids):
        if not isinstance(tid, IRI):
            raise TemplateError(str(tid), "template ids must be IRIs")
        values = {name: slots[name].get(tid, []) for name in slots}
        for name in SLOTS + ("title",):
            if not values[name]:
                raise TemplateError(tid.value, f"missing slot {name}")
        template = Template(
            id=tid,
            title=_single_literal(tid, "title", values["title"]),
            sensors=_iris(tid, "sensor", values["sensor"]),
            domains=_iris(tid, "domain", values["domain"]),
            annotation_hints=_iris(tid, "annotationHint", values["annotationHint"]),
            rulesets=_strings(tid, "ruleset", values["ruleset"]),
            knowledge=_strings(tid, "knowledge", values["knowledge"]),
            query_file=base_dir / _single_literal(tid, "queryFile", values["queryFile"]),
            description=_single_literal(tid, "description", values["description"]) if values["description"] else "",
            sample_readings=(base_dir / _single_literal(tid, "sampleReadings", values["sampleReadings"])
                             if values["sampleReadings"] else None),
            promises_suggestions=bool(values["promisesSuggestions"])
            and all(isinstance(v, Literal) and v.lexical == "true" for v in values["promisesSuggestions"]),
        )
        validate_template(template, catalog, taxonomy)
        templates.append(template)
    return templates


def _single_literal(tid, slot, values) -> str:
    if len(values) != 1 or not isinstance(values[0], Literal):
        raise TemplateError(tid.value, f"slot {slot} needs exactly one literal")
    return values[0].lexical


def _iris(tid, slot, values) -> tuple:
    if not all(isinstance(v, IRI) for v in values):
        raise TemplateError(tid.value, f"slot {slot} holds non-IRI values")
    return tuple(sorted(values))


def _strings(tid, slot, values) -> tuple:
    if not all(isinstance(v, Literal) for v in values):
        raise TemplateError(tid.value, f"slot {slot} must list catalog ids as literals")
    return tuple(sorted(v.lexical for v in values))


def validate_template(t: Template, catalog: Catalog, taxonomy: Taxonomy) -> None:
    tid = t.id.value
    for slot, iris, kind in (("sensor", t.sensors, Kind.SENSOR_TYPE), ("domain", t.domains, Kind.DOMAIN)):
        for iri in iris:
            if iri not in taxonomy or taxonomy[iri].kind is not kind:
                raise TemplateError(tid, f"dangling reference: {slot} {iri.value} is not a {kind.value}")
    for iri in t.annotation_hints:
        if iri not in taxonomy:
            raise TemplateError(tid, f"dangling reference: annotation hint {iri.value} not in taxonomy")
    for entry_id in t.rulesets:
        if entry_id not in catalog or catalog[entry_id].kind != "ruleset":
            raise TemplateError(tid, f"dangling reference: ruleset {entry_id!r} not in catalog")
    for entry_id in t.knowledge:
        if entry_id not in catalog or catalog[entry_id].kind not in ("ontology", "dataset"):
            raise TemplateError(tid, f"dangling reference: knowledge {entry_id!r} not in catalog")
    if not t.query_file.is_file():
        raise TemplateError(tid, f"dangling reference: query file {t.query_file} not found")
    try:
        parse_query(t.query_file.read_text(encoding="utf-8"))
    except QueryError as exc:
        raise TemplateError(tid, f"query file does not parse: {exc}") from None
    if t.sample_readings is not None and not t.sample_readings.is_file():
        raise TemplateError(tid, f"dangling reference: sample readings {t.sample_readings} not found")


def load_template_file(path: Union[str, Path], catalog: Catalog, taxonomy: Taxonomy) -> list[Template]:
    path = Path(path)
    return load_template_catalog(parse_turtle(path.read_text(encoding="utf-8")), catalog, taxonomy, path.parent)


# -- matching ----------------------------------------------------------------

def resolve_request(sensors: Iterable[Union[str, IRI]], domains: Iterable[Union[str, IRI]],
                    taxonomy: Optional[Taxonomy]) -> tuple[set, set]:
    """Unify raw request labels to canonical IRIs.

    Domains are resolved first; each raw sensor label is then unified once
    per requested domain, so "thermometer" under health and weather yields
    both the body thermometer and the weather thermometer.
    """
    domain_iris = set()
    for d in domains:
        domain_iris.add(_resolve(d, Kind.DOMAIN, EMPTY_CONTEXT, taxonomy))
    sensor_iris = set()
    for s in sensors:
        if isinstance(s, IRI) or taxonomy is None:
            sensor_iris.add(_resolve(s, Kind.SENSOR_TYPE, EMPTY_CONTEXT, taxonomy))
            continue
        if not domain_iris:
            sensor_iris.add(taxonomy.resolve(s, Kind.SENSOR_TYPE))
            continue
        found, last_error = set(), None
        for d in sorted(domain_iris):
            try:
                found.add(taxonomy.resolve(s, Kind.SENSOR_TYPE, UnificationContext(domain=d)))
            except UnificationError as exc:
                last_error = exc
        if not found:
            raise last_error
        sensor_iris |= found
    return sensor_iris, domain_iris


def _resolve(value, kind, ctx, taxonomy):
    if isinstance(value, IRI):
        return value
    if taxonomy is None:
        return IRI(value)
    return taxonomy.resolve(value, kind, ctx)


def match_templates(sensors: Sequence[Union[str, IRI]], domains: Sequence[Union[str, IRI]],
                    templates: Iterable[Template], taxonomy: Optional[Taxonomy] = None) -> list[Template]:
    """Templates sharing at least one sensor and one domain with the request.

    Ranked by number of matched sensors plus matched domains, descending,
    then by template IRI.
    """
    sensor_iris, domain_iris = resolve_request(sensors, domains, taxonomy)
    scored = []
    for t in templates:
        s = len(sensor_iris & set(t.sensors))
        d = len(domain_iris & set(t.domains))
        if s and d:
            scored.append((-(s + d), t.id.value, t))
    scored.sort(key=lambda x: (x[0], x[1]))
    return [t for _, _, t in scored]


# -- materialization ---------------------------------------------------------

ROLES = {
    "taxonomy.ttl": "taxonomy",
    "query.rq": "query",
    "sample-readings.csv": "readings",
    "pipeline.toml": "config",
    "README.md": "runbook",
    "knowledge/catalog.toml": "catalog",
}


@dataclass
class Bundle:
    root: Path
    template: Template
    files: dict = field(default_factory=dict)  # relative path -> role
    runbook: list = field(default_factory=list)  # argv lists, run from root

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _toml_str(s: str) -> str:
    return json.dumps(s, ensure_ascii=False)


def _toml_list(items) -> str:
    return "[" + ", ".join(_toml_str(i) for i in items) + "]"


def bundle_entries(template: Template, catalog: Catalog) -> tuple[list[KnowledgeEntry], list[KnowledgeEntry]]:
    """Knowledge entries (with their namespace dependencies) and rulesets."""
    knowledge = catalog.closure(catalog[i] for i in template.knowledge)
    knowledge = [e for e in knowledge if e.kind != "ruleset"]
    rulesets = [catalog[i] for i in template.rulesets]
    return knowledge, rulesets


def _query_iris(text: str) -> set:
    return {x for p in parse_query(text).patterns for x in p.terms() if isinstance(x, IRI)}


def taxonomy_subset(template: Template, taxonomy: Taxonomy, rulesets: Sequence[KnowledgeEntry] = ()) -> set:
    """Template slots plus every taxonomy term the rules and query mention, closed."""
    seeds = set(template.sensors) | set(template.domains) | set(template.annotation_hints)
    used = _query_iris(template.query_file.read_text(encoding="utf-8"))
    for e in rulesets:
        used |= rule_iris(e.load_rules())
    seeds |= {i for i in used if i in taxonomy}
    return taxonomy.closure(seeds, conversions=CONVERSIONS.keys())


def runbook_commands(template: Template, rulesets: Sequence[KnowledgeEntry]) -> list[list[str]]:
    domains = ",".join(_curie(d) for d in template.domains)
    return [
        ["m3", "annotate", "--in", "sample-readings.csv", "--format", "csv",
         "--taxonomy", "taxonomy.ttl", "--out", "annotated.ttl"],
        ["m3", "reason", "--in", "annotated.ttl", "--rules",
         *[f"rules/{e.id}.rules" for e in rulesets],
         "--out", "enriched.ttl", "--log", "derivations.jsonl"],
        ["m3", "knowledge", "link", "--manifest", "knowledge/catalog.toml",
         "--in", "enriched.ttl", "--domains", domains, "--out", "linked.ttl"],
        ["m3", "query", "--in", "linked.ttl", "--query", "query.rq", "--out", "csv",
         "--result", "results.csv"],
    ]


def _curie(iri: IRI) -> str:
    for prefix, ns in sorted(vocab.STANDARD_PREFIXES.items()):
        if iri.value.startswith(ns):
            return f"{prefix}:{iri.value[len(ns):]}"
    return iri.value


def _readme(template: Template, commands: list[list[str]]) -> str:
    def shell(argv):
        return " ".join(a if a and all(c.isalnum() or c in "-_./:,=" for c in a) else f"'{a}'" for a in argv)

    lines = [
        f"# {template.title}",
        "",
        template.description or "SWoT application template.",
        "",
        f"Template: `{template.id.value}`",
        "",
        "## Run the pipeline",
        "",
        "From this directory, run each stage in turn:",
        "",
        "```sh",
        *[shell(c) for c in commands],
        "```",
        "",
        "or all stages at once:",
        "",
        "```sh",
        "m3 run --config pipeline.toml",
        "```",
        "",
        "Results land in `results.csv`. Replace `sample-readings.csv` with your own",
        f"readings using the header `{','.join(CSV_HEADER)}`.",
        "",
        "## Contents",
        "",
        "- `taxonomy.ttl`: the taxonomy entries this template needs",
        "- `rules/`: reasoning rules",
        "- `knowledge/`: domain ontologies and datasets, with `catalog.toml`",
        "- `query.rq`: the suggestion query",
        "- `manifest.json`: every file with its role and SHA-256 digest",
        "",
    ]
    return "\n".join(lines)


def materialize(template: Template, catalog: Catalog, taxonomy: Taxonomy,
                out_dir: Union[str, Path]) -> Bundle:
    """Write a self-contained bundle for ``template`` into an empty directory.

    References are checked before anything is written. Output is a pure
    function of the inputs, so two bundles of one template are byte-identical.
    """
    out = Path(out_dir)
    validate_template(template, catalog, taxonomy)
    knowledge, rulesets = bundle_entries(template, catalog)
    for e in knowledge + rulesets:
        if not e.path.is_file():
            raise TemplateError(template.id.value, f"dangling reference: {e.id} file {e.path} missing")
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise FileExistsError(f"output directory is not empty: {out}")

    files: dict[str, bytes] = {}
    roles: dict[str, str] = {}

    def add(rel: str, data: Union[str, bytes], role: str):
        files[rel] = data.encode("utf-8") if isinstance(data, str) else data
        roles[rel] = role

    tax_graph = taxonomy.subset_graph(taxonomy_subset(template, taxonomy, rulesets))
    add("taxonomy.ttl", serialize(tax_graph, "turtle"), "taxonomy")
    for e in rulesets:
        add(f"rules/{e.id}.rules", e.path.read_bytes(), "ruleset")
    catalog_lines = ["# Knowledge shipped with this bundle. Paths are relative to this file.", ""]
    for e in knowledge + rulesets:
        if e.kind == "ruleset":
            rel_path = f"../rules/{e.id}.rules"
        else:
            rel_path = f"{e.id}.ttl"
            add(f"knowledge/{e.id}.ttl", e.path.read_bytes(), e.kind)
        catalog_lines += [
            "[[entry]]",
            f"id = {_toml_str(e.id)}",
            f"kind = {_toml_str(e.kind)}",
            f"domains = {_toml_list(d.value for d in e.domains)}",
            f"defines = {_toml_list(e.defines)}",
            f"reuses = {_toml_list(e.reuses)}",
            f"path = {_toml_str(rel_path)}",
            f"provenance = {_toml_str(e.provenance)}",
            "",
        ]
    add("knowledge/catalog.toml", "\n".join(catalog_lines), "catalog")
    add("query.rq", template.query_file.read_bytes(), "query")
    if template.sample_readings is not None:
        add("sample-readings.csv", template.sample_readings.read_bytes(), "readings")
    else:
        add("sample-readings.csv", ",".join(CSV_HEADER) + "\n", "readings")
    commands = runbook_commands(template, rulesets)
    config = "\n".join([
        "# Pipeline configuration; paths are relative to this file.",
        'taxonomy = "taxonomy.ttl"',
        f"rules = {_toml_list(f'rules/{e.id}.rules' for e in rulesets)}",
        'knowledge_manifest = "knowledge/catalog.toml"',
        'query = "query.rq"',
        'readings = "sample-readings.csv"',
        'readings_format = "csv"',
        f"domains = {_toml_list(_curie(d) for d in template.domains)}",
        'out_dir = "."',
        'result_format = "csv"',
        "",
    ])
    add("pipeline.toml", config, "config")
    add("README.md", _readme(template, commands), "runbook")

    manifest = {
        "template": template.id.value,
        "title": template.title,
        "promises_suggestions": template.promises_suggestions,
        "files": [
            {"path": rel, "role": roles[rel], "sha256": _sha256(files[rel])}
            for rel in sorted(files)
        ],
        "digest_algorithm": "sha256",
        "runbook": commands,
    }
    manifest_bytes = (json.dumps(manifest, indent=2, ensure_ascii=False) + "\n").encode("utf-8")

    created = not out.exists()
    try:
        for rel in sorted(files):
            path = out / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(files[rel])
        (out / "manifest.json").write_bytes(manifest_bytes)
    except OSError:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        raise
    return Bundle(out, template, dict(roles), commands)


def verify_bundle(root: Union[str, Path]) -> list[str]:
    """Digest mismatches and missing files listed by a bundle manifest."""
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    problems = []
    for f in manifest["files"]:
        path = root / f["path"]
        if not path.is_file():
            problems.append(f"missing {f['path']}")
        elif _sha256(path.read_bytes()) != f["sha256"]:
            problems.append(f"digest mismatch for {f['path']}")
    return problems


def bundle_closure_issues(root: Union[str, Path]) -> list[IRI]:
    """IRIs used by bundle rules or query that no bundle taxonomy/knowledge file mentions."""
    root = Path(root)
    known = set(vocab.BUILTIN_VOCABULARY)
    for path in [root / "taxonomy.ttl", *sorted((root / "knowledge").glob("*.ttl"))]:
        for t in parse_turtle(path.read_text(encoding="utf-8")):
            known |= {x for x in t if isinstance(x, IRI)}
    used = set()
    for path in sorted((root / "rules").glob("*.rules")):
        used |= rule_iris(parse_rules(path.read_text(encoding="utf-8")))
    used |= _query_iris((root / "query.rq").read_text(encoding="utf-8"))
    return sorted(used - known)
