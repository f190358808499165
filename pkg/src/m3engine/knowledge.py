"""Local catalog of domain ontologies, datasets and rulesets.

The catalog manifest is a TOML document::

    [prefixes]
    health = "http://example.org/health#"

    [[entry]]
    id = "health-ontology"
    kind = "ontology"              # ontology | dataset | ruleset
    domains = ["m3x:Health"]
    defines = ["health:"]          # namespaces this entry owns
    reuses = []                    # namespaces owned elsewhere
    path = "knowledge/health-dataset.ttl"
    provenance = "free text"

Cross-domain linking is a plain graph union: domains join wherever their
files mention the same IRIs.
"""

from __future__ import annotations

import sys
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import vocab
from .rdf import IRI, OWL, RDF, RDFS, SKOS, XSD, Graph, RDFError, merge, namespace_of, parse_turtle
from .reasoner import RuleSet, RuleSyntaxError, UnsafeRuleError, parse_rules, rule_iris

KINDS = ("ontology", "dataset", "ruleset")
GRAPH_KINDS = ("ontology", "dataset")

# namespaces every file may use without declaring them
IMPLICIT_NAMESPACES = frozenset({RDF, RDFS, XSD, OWL, SKOS, vocab.SSN, vocab.M3, vocab.M3X,
                                 vocab.UNIT, vocab.DATA})


class CatalogError(Exception):
    """Problems found while loading a catalog, as (entry id, reason) pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("invalid catalog:\n  " + "\n  ".join(f"{i}: {r}" for i, r in problems))

    @property
    def ids(self) -> set[str]:
        return {i for i, _ in self.problems}


@dataclass(frozen=True)
class KnowledgeEntry:
    id: str
    kind: str
    domains: tuple[IRI, ...]
    path: Path
    defines: tuple[str, ...] = ()
    reuses: tuple[str, ...] = ()
    provenance: str = ""

    @property
    def namespaces(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.defines) | set(self.reuses)))

    def read_text(self) -> str:
        return self.path.read_text(encoding="utf-8")

    def load_graph(self) -> Graph:
        if self.kind not in GRAPH_KINDS:
            raise ValueError(f"{self.id} is a {self.kind}, not a graph")
        return parse_turtle(self.read_text())

    def load_rules(self) -> RuleSet:
        if self.kind != "ruleset":
            raise ValueError(f"{self.id} is a {self.kind}, not a ruleset")
        return parse_rules(self.read_text())


@dataclass
class Catalog:
    entries: list[KnowledgeEntry] = field(default_factory=list)
    base_dir: Optional[Path] = None
    prefixes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.by_id = {e.id: e for e in self.entries}
        self.by_domain: dict[IRI, list[KnowledgeEntry]] = defaultdict(list)
        self.definers: dict[str, list[KnowledgeEntry]] = defaultdict(list)
        self.by_namespace: dict[str, list[KnowledgeEntry]] = defaultdict(list)
        for e in self.entries:
            for d in e.domains:
                self.by_domain[d].append(e)
            for ns in e.defines:
                self.definers[ns].append(e)
            for ns in e.namespaces:
                self.by_namespace[ns].append(e)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, entry_id: str) -> KnowledgeEntry:
        return self.by_id[entry_id]

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self.by_id

    def dependencies(self, entry: KnowledgeEntry) -> list[KnowledgeEntry]:
        """Entries defining a namespace that ``entry`` reuses."""
        out = []
        for ns in entry.reuses:
            for d in self.definers.get(ns, ()):
                if d is not entry and d not in out:
                    out.append(d)
        return out

    def closure(self, entries: Iterable[KnowledgeEntry]) -> list[KnowledgeEntry]:
        """Entries plus everything they transitively depend on, in catalog order."""
        selected = {e.id for e in entries}
        todo = list(selected)
        while todo:
            for dep in self.dependencies(self.by_id[todo.pop()]):
                if dep.id not in selected:
                    selected.add(dep.id)
                    todo.append(dep.id)
        return [e for e in self.entries if e.id in selected]


def _expand(value: str, prefixes: dict, what: str) -> str:
    if value.startswith("http://") or value.startswith("https://") or value.startswith("urn:"):
        return value
    prefix, sep, local = value.partition(":")
    if not sep or prefix not in prefixes:
        raise ValueError(f"{what} {value!r} uses an undeclared prefix")
    return prefixes[prefix] + local


def used_namespaces(entry: KnowledgeEntry, content: Union[Graph, RuleSet]) -> set[str]:
    if isinstance(content, Graph):
        iris = set()
        for t in content:
            for term in t:
                if isinstance(term, IRI):
                    iris.add(term.value)
                elif hasattr(term, "datatype"):
                    iris.add(term.datatype)
    else:
        iris = {i.value for i in rule_iris(content)}
    return {namespace_of(i) for i in iris} - IMPLICIT_NAMESPACES


def load_catalog(manifest: Union[str, Path]) -> Catalog:
    """Load and validate a catalog manifest.

    Every entry file must exist and parse under its kind's format, and the
    namespaces it uses must match the declared ``defines``/``reuses`` lists.
    All problems are collected into one CatalogError.
    """
    manifest = Path(manifest)
    try:
        doc = tomllib.loads(manifest.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CatalogError([("<manifest>", f"file not found: {manifest}")]) from None
    except tomllib.TOMLDecodeError as exc:
        raise CatalogError([("<manifest>", f"not valid TOML: {exc}")]) from None
    base = manifest.parent
    prefixes = dict(vocab.STANDARD_PREFIXES)
    prefixes.update(doc.get("prefixes", {}))
    problems: list[tuple[str, str]] = []
    entries: list[KnowledgeEntry] = []
    seen = set()
    for n, raw in enumerate(doc.get("entry", [])):
        entry_id = str(raw.get("id", "")).strip() or f"<entry {n}>"
        try:
            entry = _entry(raw, entry_id, base, prefixes)
        except (ValueError, TypeError) as exc:
            problems.append((entry_id, str(exc)))
            continue
        if entry.id in seen:
            problems.append((entry.id, "duplicate id"))
            continue
        seen.add(entry.id)
        problems.extend((entry.id, p) for p in _validate_entry(entry))
        entries.append(entry)
    if problems:
        raise CatalogError(problems)
    return Catalog(entries, base_dir=base, prefixes=doc.get("prefixes", {}))


def _entry(raw: dict, entry_id: str, base: Path, prefixes: dict) -> KnowledgeEntry:
    unknown = set(raw) - {"id", "kind", "domains", "defines", "reuses", "path", "provenance"}
    if unknown:
        raise ValueError(f"unknown fields {sorted(unknown)}")
    if "id" not in raw:
        raise ValueError("missing id")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
    if "path" not in raw:
        raise ValueError("missing path")
    domains = tuple(IRI(_expand(d, prefixes, "domain")) for d in raw.get("domains", []))
    if not domains:
        raise ValueError("no domains")
    return KnowledgeEntry(
        id=entry_id,
        kind=kind,
        domains=domains,
        path=(base / raw["path"]),
        defines=tuple(_expand(ns, prefixes, "namespace") for ns in raw.get("defines", [])),
        reuses=tuple(_expand(ns, prefixes, "namespace") for ns in raw.get("reuses", [])),
        provenance=str(raw.get("provenance", "")),
    )


def _validate_entry(entry: KnowledgeEntry) -> list[str]:
    if not entry.path.is_file():
        return [f"file not found: {entry.path}"]
    try:
        content = entry.load_rules() if entry.kind == "ruleset" else entry.load_graph()
    except (RDFError, RuleSyntaxError, UnsafeRuleError, ValueError) as exc:
        return [f"does not parse as {entry.kind}: {exc}"]
    problems = []
    overlap = set(entry.defines) & set(entry.reuses)
    if overlap:
        problems.append(f"namespaces both defined and reused: {sorted(overlap)}")
    used = used_namespaces(entry, content)
    declared = set(entry.namespaces)
    for ns in sorted(used - declared):
        problems.append(f"uses undeclared namespace {ns}")
    for ns in sorted(declared - used):
        problems.append(f"declares namespace {ns} but never uses it")
    return problems


def select_knowledge(domains: Iterable[IRI], cat: Catalog,
                     kinds: Iterable[str] = GRAPH_KINDS) -> list[KnowledgeEntry]:
    """Entries covering any requested domain, closed under namespace reuse.

    Only entries of the given kinds are returned (ontologies and datasets by
    default); the result keeps catalog order.
    """
    domains = set(domains)
    kinds = set(kinds)
    direct = [e for e in cat.entries if e.kind in kinds and set(e.domains) & domains]
    return [e for e in cat.closure(direct) if e.kind in kinds]


@dataclass
class CrossDomainGraph:
    graph: Graph
    join_surface: set  # namespaces shared by two or more merged entries
    entries: list


def build_cross_domain_graph(entries: Iterable[KnowledgeEntry], base: Graph) -> CrossDomainGraph:
    """Merge ``base`` with every entry graph and report the shared namespaces."""
    entries = list(entries)
    graph = base
    ns_users = defaultdict(set)
    for e in entries:
        if e.kind not in GRAPH_KINDS:
            raise ValueError(f"{e.id} is a {e.kind}; only ontologies and datasets are merged")
        g = e.load_graph()
        for ns in used_namespaces(e, g):
            ns_users[ns].add(e.id)
        graph = merge(graph, g)
    surface = {ns for ns, users in ns_users.items() if len(users) >= 2}
    return CrossDomainGraph(graph, surface, entries)
