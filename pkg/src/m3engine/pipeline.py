"""Pipeline stages shared by the subcommands and ``m3 run``.

Every stage reads its inputs from files and writes its artifact to a file,
so running the stages one after another from the shell produces exactly the
bytes ``run_pipeline`` produces.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import DEFAULT_MANIFEST, DEFAULT_TAXONOMY, vocab
from .annotator import AnnotationError, IngestError, annotate, parse_readings
from .knowledge import CatalogError, build_cross_domain_graph, load_catalog, select_knowledge
from .query import QueryError, parse_query, execute
from .rdf import IRI, RDFError, Graph, parse_turtle, serialize
from .reasoner import (Inference, RuleSet, RuleSyntaxError, UnsafeRuleError,
                       apply_rules, parse_rules)
from .taxonomy import Kind, TaxonomyError, UnificationError, load_taxonomy_file

log = logging.getLogger("m3engine")

EXIT_OK = 0
EXIT_INGEST = 1
EXIT_ANNOTATE = 2
EXIT_REASON = 3
EXIT_QUERY = 4
EXIT_TEMPLATE = 5
EXIT_KNOWLEDGE = 6
EXIT_USAGE = 64

ENV_TAXONOMY = "M3_TAXONOMY"
ENV_MANIFEST = "M3_KNOWLEDGE_MANIFEST"


class StageError(Exception):
    """A pipeline stage failed; ``code`` is the process exit status for it."""

    def __init__(self, stage: str, code: int, cause: BaseException):
        self.stage = stage
        self.code = code
        self.cause = cause
        super().__init__(f"{stage} stage failed: {cause}")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read(path: Path) -> str:
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


def default_taxonomy_path() -> Path:
    return Path(os.environ.get(ENV_TAXONOMY) or DEFAULT_TAXONOMY)


def default_manifest_path() -> Path:
    return Path(os.environ.get(ENV_MANIFEST) or DEFAULT_MANIFEST)


# -- stages ------------------------------------------------------------------

def stage_annotate(readings: Path, format: str, taxonomy: Path, out: Optional[Path]) -> str:
    try:
        text = _read(readings)
        batch = parse_readings(text, format)
    except (OSError, IngestError, ValueError) as exc:
        raise StageError("ingest", EXIT_INGEST, exc) from exc
    try:
        tax = load_taxonomy_file(taxonomy)
        graph = annotate(batch, tax)
    except (OSError, RDFError, TaxonomyError, AnnotationError, UnificationError) as exc:
        raise StageError("annotate", EXIT_ANNOTATE, exc) from exc
    result = serialize(graph, "turtle")
    if out is not None:
        _write(out, result)
    log.info("annotate: %d readings -> %d triples", len(batch), len(graph))
    return result


def load_rule_files(paths: Sequence[Path]) -> RuleSet:
    rules = RuleSet()
    for p in paths:
        rules = rules + parse_rules(_read(p))
    return rules


def _reason_prefixes(graph: Graph, rules: RuleSet) -> None:
    taken = set(graph.prefixes.values())
    for prefix, ns in sorted(rules.prefixes.items()):
        if prefix and prefix not in graph.prefixes and ns not in taken:
            graph.prefixes[prefix] = ns
            taken.add(ns)


def stage_reason(graph_path: Path, rule_paths: Sequence[Path], out: Optional[Path],
                 log_path: Optional[Path]) -> Inference:
    try:
        graph = parse_turtle(_read(graph_path))
        if not rule_paths:
            raise ValueError("no rules files given")
        rules = load_rule_files(rule_paths)
        inference = apply_rules(graph, rules)
    except (OSError, RDFError, RuleSyntaxError, UnsafeRuleError, ValueError) as exc:
        raise StageError("reason", EXIT_REASON, exc) from exc
    for err in inference.errors:
        log.warning("reason: %s", err)
    enriched = inference.graph
    _reason_prefixes(enriched, rules)
    if out is not None:
        _write(out, serialize(enriched, "turtle"))
    if log_path is not None:
        _write(log_path, derivations_jsonl(inference))
    log.info("reason: %d derivations in %d iterations", len(inference.derivations), inference.iterations)
    return inference


def derivations_jsonl(inference: Inference) -> str:
    return "".join(json.dumps(d.to_json(), ensure_ascii=False) + "\n" for d in inference.derivations)


def parse_domains(values: Sequence[str], taxonomy: Optional[Path] = None) -> list[IRI]:
    """Domains given as IRIs, CURIEs over the standard prefixes, or taxonomy labels."""
    out, tax = [], None
    for raw in values:
        raw = raw.strip()
        if not raw:
            continue
        if raw.startswith(("http://", "https://", "urn:")):
            out.append(IRI(raw))
            continue
        prefix, sep, local = raw.partition(":")
        if sep and prefix in vocab.STANDARD_PREFIXES:
            out.append(IRI(vocab.STANDARD_PREFIXES[prefix] + local))
            continue
        if tax is None:
            tax = load_taxonomy_file(taxonomy or default_taxonomy_path())
        out.append(tax.unify(raw, Kind.DOMAIN))
    return out


def observed_domains(graph: Graph) -> list[IRI]:
    return sorted({o for _, _, o in graph.match(None, vocab.HAS_DOMAIN, None) if isinstance(o, IRI)})


def stage_link(graph_path: Path, manifest: Path, domains: Optional[Sequence[IRI]],
               out: Optional[Path]) -> str:
    try:
        graph = parse_turtle(_read(graph_path))
        catalog = load_catalog(manifest)
        chosen = list(domains) if domains else observed_domains(graph)
        entries = select_knowledge(chosen, catalog)
        linked = build_cross_domain_graph(entries, graph)
    except (OSError, RDFError, CatalogError, ValueError) as exc:
        raise StageError("knowledge", EXIT_KNOWLEDGE, exc) from exc
    taken = set(linked.graph.prefixes.values())
    for prefix, ns in sorted(catalog.prefixes.items()):
        if prefix not in linked.graph.prefixes and ns not in taken:
            linked.graph.prefixes[prefix] = ns
            taken.add(ns)
    result = serialize(linked.graph, "turtle")
    if out is not None:
        _write(out, result)
    log.info("knowledge: linked %s", ", ".join(e.id for e in entries) or "nothing")
    return result


def stage_query(graph_path: Path, query_path: Path, format: str, out: Optional[Path]) -> str:
    try:
        graph = parse_turtle(_read(graph_path))
        query = parse_query(_read(query_path))
        solutions = execute(query, graph)
        result = solutions.serialize(format)
    except (OSError, RDFError, QueryError, ValueError) as exc:
        raise StageError("query", EXIT_QUERY, exc) from exc
    for name, count in sorted(solutions.diagnostics.items()):
        if count:
            log.info("query: %s = %d", name, count)
    if out is not None:
        _write(out, result)
    return result


# -- configuration -----------------------------------------------------------

@dataclass
class PipelineConfig:
    readings: Optional[Path] = None
    readings_format: str = "csv"
    taxonomy: Optional[Path] = None
    rules: list = field(default_factory=list)
    knowledge_manifest: Optional[Path] = None
    query: Optional[Path] = None
    domains: list = field(default_factory=list)
    out_dir: Path = Path(".")
    result_format: str = "csv"
    verbosity: int = 0

    PATH_KEYS = ("readings", "taxonomy", "knowledge_manifest", "query", "out_dir")

    def missing(self) -> list[str]:
        """Required settings that are unset or name files that do not exist.

        Rules files are checked when the reason stage runs so a missing one
        still leaves the annotation artifact behind.
        """
        problems = []
        for key in ("readings", "query"):
            if getattr(self, key) is None:
                problems.append(f"{key} is not set")
        for key in ("readings", "taxonomy", "knowledge_manifest", "query"):
            value = getattr(self, key)
            if value is not None and not Path(value).is_file():
                problems.append(f"{key}: no such file {value}")
        if not self.rules:
            problems.append("rules is not set")
        if self.readings_format not in ("csv", "json"):
            problems.append(f"readings_format must be csv or json, not {self.readings_format!r}")
        if self.result_format not in ("csv", "json"):
            problems.append(f"result_format must be csv or json, not {self.result_format!r}")
        return problems


CONFIG_KEYS = {f.name for f in fields(PipelineConfig)}


def read_config_file(path: Union[str, Path]) -> dict:
    """Flat TOML key/value file; relative paths resolve against its directory."""
    path = Path(path)
    doc = tomllib.loads(_read(path))
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    nested = [k for k, v in doc.items() if isinstance(v, dict)]
    if nested:
        raise ValueError(f"config must be flat; tables found: {', '.join(nested)}")
    base = path.parent
    for key in PipelineConfig.PATH_KEYS:
        if key in doc:
            doc[key] = base / doc[key]
    if "rules" in doc:
        rules = doc["rules"] if isinstance(doc["rules"], list) else [doc["rules"]]
        doc["rules"] = [base / r for r in rules]
    if "domains" in doc and isinstance(doc["domains"], str):
        doc["domains"] = [d for d in doc["domains"].split(",") if d.strip()]
    return doc


def resolve_config(flags: dict, file_values: Optional[dict] = None,
                   environ: Optional[dict] = None) -> PipelineConfig:
    """Merge settings: flags over config file over environment over shipped defaults."""
    environ = os.environ if environ is None else environ
    merged: dict = {}
    if environ.get(ENV_TAXONOMY):
        merged["taxonomy"] = Path(environ[ENV_TAXONOMY])
    if environ.get(ENV_MANIFEST):
        merged["knowledge_manifest"] = Path(environ[ENV_MANIFEST])
    merged.update(file_values or {})
    merged.update({k: v for k, v in flags.items() if v is not None and v != []})
    merged.setdefault("taxonomy", DEFAULT_TAXONOMY)
    merged.setdefault("knowledge_manifest", DEFAULT_MANIFEST)
    for key in PipelineConfig.PATH_KEYS:
        if merged.get(key) is not None:
            merged[key] = Path(merged[key])
    merged["rules"] = [Path(r) for r in merged.get("rules", [])]
    return PipelineConfig(**merged)


ARTIFACTS = ("annotated.ttl", "enriched.ttl", "derivations.jsonl", "linked.ttl")
STATUS_FILE = "pipeline-status.json"


def run_pipeline(config: PipelineConfig) -> int:
    """Run annotate, reason, knowledge link and query; return the exit status.

    ``pipeline-status.json`` records the completed stages; after a failure it
    names the failing stage, and artifacts of earlier stages stay in place.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result_name = f"results.{config.result_format}"
    completed: list[str] = []
    try:
        stage_annotate(config.readings, config.readings_format, config.taxonomy, out / "annotated.ttl")
        completed.append("annotate")
        stage_reason(out / "annotated.ttl", config.rules, out / "enriched.ttl", out / "derivations.jsonl")
        completed.append("reason")
        domains = parse_domains(config.domains, config.taxonomy) if config.domains else None
        stage_link(out / "enriched.ttl", config.knowledge_manifest, domains, out / "linked.ttl")
        completed.append("knowledge")
        stage_query(out / "linked.ttl", config.query, config.result_format, out / result_name)
        completed.append("query")
    except (UnificationError, TaxonomyError) as exc:
        err = StageError("knowledge", EXIT_KNOWLEDGE, exc)
        _status(out, completed, err)
        raise err from exc
    except StageError as err:
        _status(out, completed, err)
        raise
    _status(out, completed, None)
    return EXIT_OK


def _status(out: Path, completed: list, err: Optional[StageError]) -> None:
    status = {
        "status": "ok" if err is None else "failed",
        "completed": completed,
        "artifacts": [a for a in (*ARTIFACTS, "results.csv", "results.json") if (out / a).exists()],
    }
    if err is not None:
        status["failed_stage"] = err.stage
        status["exit_code"] = err.code
        status["error"] = str(err.cause)
    _write(out / STATUS_FILE, json.dumps(status, indent=2, ensure_ascii=False) + "\n")
