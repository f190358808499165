"""The M3-style dictionary: canonical classes, their labels and synonyms.

A taxonomy is read from a Turtle graph written in the small repo vocabulary
(see ``docs/vocabulary.md``).  Raw labels coming from heterogeneous devices
are unified to canonical class IRIs by exact match on a normalized label,
narrowed by kind, then domain, then feature of interest.
"""

from __future__ import annotations

import enum
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from . import vocab
from .rdf import IRI, Graph, Literal, Triple, parse_turtle, term_sort_key


class Kind(enum.Enum):
    SENSOR_TYPE = "SensorType"
    MEASUREMENT_TYPE = "MeasurementType"
    UNIT = "Unit"
    DOMAIN = "Domain"
    FEATURE = "Feature"

    @property
    def iri(self) -> IRI:
        return IRI(vocab.M3 + self.value)

    @property
    def root(self) -> IRI:
        return _ROOTS[self]

    @classmethod
    def parse(cls, value: Union["Kind", str]) -> "Kind":
        if isinstance(value, Kind):
            return value
        key = normalize_label(value).replace(" ", "")
        for kind in cls:
            if kind.value.lower() == key or kind.name.replace("_", "").lower() == key:
                return kind
        raise ValueError(f"unknown taxonomy kind {value!r}")


_ROOTS = {
    Kind.SENSOR_TYPE: vocab.SENSOR_ROOT,
    Kind.MEASUREMENT_TYPE: vocab.OBSERVATION_VALUE_ROOT,
    Kind.FEATURE: vocab.FEATURE_ROOT,
    Kind.UNIT: vocab.UNIT_ROOT,
    Kind.DOMAIN: vocab.DOMAIN_ROOT,
}


class TaxonomyError(Exception):
    """One or more malformed entries; ``problems`` holds (reason, IRIs) pairs."""

    def __init__(self, problems: list[tuple[str, tuple[IRI, ...]]]):
        self.problems = problems
        lines = [f"{reason}: {', '.join(i.value for i in iris)}" for reason, iris in problems]
        super().__init__("invalid taxonomy:\n  " + "\n  ".join(lines))

    @property
    def reasons(self) -> set[str]:
        return {reason for reason, _ in self.problems}


class UnificationError(Exception):
    pass


class UnknownTerm(UnificationError):
    def __init__(self, raw: str, kind: Optional[Kind] = None, detail: str = ""):
        self.raw = raw
        self.kind = kind
        what = f" {kind.value}" if kind else ""
        super().__init__(f"unknown{what} term {raw!r}" + (f" ({detail})" if detail else ""))


class AmbiguousTerm(UnificationError):
    def __init__(self, raw: str, candidates: Iterable[IRI]):
        self.raw = raw
        self.candidates = tuple(sorted(candidates))
        names = ", ".join(c.value for c in self.candidates)
        super().__init__(f"ambiguous term {raw!r}: candidates {names}; supply a domain or feature")


@dataclass(frozen=True)
class TaxonomyEntry:
    canonical: IRI
    kind: Kind
    labels: tuple[str, ...]
    synonyms: tuple[str, ...] = ()
    parent: Optional[IRI] = None
    default_unit: Optional[IRI] = None
    domains: tuple[IRI, ...] = ()
    features: tuple[IRI, ...] = ()
    measures: tuple[IRI, ...] = ()

    @property
    def preferred_label(self) -> str:
        return self.labels[0]

    def all_labels(self) -> tuple[str, ...]:
        return self.labels + self.synonyms

    def valid_in(self, domain: IRI) -> bool:
        return not self.domains or domain in self.domains


@dataclass(frozen=True)
class UnificationContext:
    domain: Optional[IRI] = None
    feature: Optional[IRI] = None


EMPTY_CONTEXT = UnificationContext()


def normalize_label(raw: str) -> str:
    """Lowercase, turn punctuation into spaces, collapse whitespace, sort tokens."""
    text = unicodedata.normalize("NFKC", raw).lower()
    text = "".join(ch if ch.isalnum() else " " for ch in text)
    return " ".join(sorted(text.split()))


@dataclass
class Taxonomy:
    entries: dict[IRI, TaxonomyEntry] = field(default_factory=dict)
    version: str = ""
    source: Graph = field(default_factory=Graph, repr=False)
    lookup: dict[str, tuple[IRI, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.lookup:
            index = defaultdict(set)
            for entry in self.entries.values():
                for label in entry.all_labels():
                    index[normalize_label(label)].add(entry.canonical)
            self.lookup = {k: tuple(sorted(v)) for k, v in index.items()}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, iri) -> bool:
        return iri in self.entries

    def __getitem__(self, iri: IRI) -> TaxonomyEntry:
        return self.entries[iri]

    def of_kind(self, kind: Union[Kind, str]) -> list[TaxonomyEntry]:
        kind = Kind.parse(kind)
        return sorted((e for e in self.entries.values() if e.kind is kind), key=lambda e: e.canonical)

    def unify(self, raw: str, kind: Union[Kind, str], ctx: UnificationContext = EMPTY_CONTEXT) -> IRI:
        return unify_term(raw, kind, ctx, self)

    def resolve(self, value: Union[str, IRI], kind: Union[Kind, str],
                ctx: UnificationContext = EMPTY_CONTEXT) -> IRI:
        """Accept a canonical IRI of the right kind or a raw label."""
        kind = Kind.parse(kind)
        iri = value if isinstance(value, IRI) else _maybe_iri(value)
        if iri is not None and iri in self.entries and self.entries[iri].kind is kind:
            return iri
        if isinstance(value, IRI):
            raise UnknownTerm(value.value, kind)
        return unify_term(value, kind, ctx, self)

    def measurement_for(self, sensor: IRI, ctx: UnificationContext = EMPTY_CONTEXT) -> IRI:
        """The measurement type a sensor produces in the given context."""
        entry = self.entries[sensor]
        candidates = [self.entries[m] for m in entry.measures if m in self.entries]
        if not candidates:
            raise UnknownTerm(entry.preferred_label, Kind.MEASUREMENT_TYPE,
                              "sensor type declares no measurement")
        return _disambiguate(entry.preferred_label, Kind.MEASUREMENT_TYPE, candidates, ctx)

    def ancestors(self, iri: IRI) -> list[IRI]:
        out = []
        current = self.entries[iri].parent
        while current is not None and current in self.entries:
            out.append(current)
            current = self.entries[current].parent
        return out

    def closure(self, seeds: Iterable[IRI], conversions: Iterable[tuple[IRI, IRI]] = ()) -> set[IRI]:
        """Entries reachable from ``seeds`` through taxonomy references."""
        related = defaultdict(set)
        for a, b in conversions:
            related[a].add(b)
            related[b].add(a)
        todo = [s for s in seeds if s in self.entries]
        seen = set()
        while todo:
            iri = todo.pop()
            if iri in seen:
                continue
            seen.add(iri)
            e = self.entries[iri]
            refs = [*e.domains, *e.features, *e.measures, *related.get(iri, ())]
            if e.parent is not None:
                refs.append(e.parent)
            if e.default_unit is not None:
                refs.append(e.default_unit)
            todo.extend(r for r in refs if r in self.entries and r not in seen)
        return seen

    def subset_graph(self, iris: Iterable[IRI]) -> Graph:
        """The source triples describing the given entries."""
        keep = set(iris)
        out = Graph(prefixes=self.source.prefixes)
        for t in self.source:
            if t.subject in keep:
                out.add(t)
        return out


def _maybe_iri(value: str) -> Optional[IRI]:
    try:
        return IRI(value)
    except ValueError:
        return None


def _literal_strings(graph: Graph, s, p) -> list[str]:
    return sorted(o.lexical for o in graph.objects(s, p) if isinstance(o, Literal))


def _iris(graph: Graph, s, p) -> tuple[IRI, ...]:
    return tuple(sorted((o for o in graph.objects(s, p) if isinstance(o, IRI)), key=term_sort_key))


def load_taxonomy(graph: Graph, version: str = "") -> Taxonomy:
    """Build a Taxonomy from a graph; every malformed entry is reported."""
    problems: list[tuple[str, tuple[IRI, ...]]] = []
    kinds_of = defaultdict(set)
    by_kind_iri = {k.iri: k for k in Kind}
    for t in graph.match(None, vocab.RDF_TYPE, None):
        if t.object in by_kind_iri and isinstance(t.subject, IRI):
            kinds_of[t.subject].add(by_kind_iri[t.object])

    entries: dict[IRI, TaxonomyEntry] = {}
    for iri in sorted(kinds_of):
        kinds = kinds_of[iri]
        if len(kinds) > 1:
            problems.append(("DuplicateCanonical", (iri,)))
            continue
        (kind,) = kinds
        pref = _literal_strings(graph, iri, vocab.PREF_LABEL)
        extra = [l for l in _literal_strings(graph, iri, vocab.RDFS_LABEL) if l not in pref]
        synonyms = [l for l in _literal_strings(graph, iri, vocab.ALT_LABEL) if l not in pref + extra]
        labels = pref + extra
        if not labels or any(not normalize_label(l) for l in labels + synonyms):
            problems.append(("MissingLabel", (iri,)))
            continue
        if len(pref) > 1:
            problems.append(("DuplicateCanonical", (iri,)))
            continue
        parents = _iris(graph, iri, vocab.SUBCLASS_OF)
        if len(parents) > 1:
            problems.append(("MultipleParents", (iri,)))
            continue
        default_units = _iris(graph, iri, vocab.DEFAULT_UNIT)
        entries[iri] = TaxonomyEntry(
            canonical=iri,
            kind=kind,
            labels=tuple(labels),
            synonyms=tuple(synonyms),
            parent=parents[0] if parents else None,
            default_unit=default_units[0] if default_units else None,
            domains=_iris(graph, iri, vocab.IN_DOMAIN),
            features=_iris(graph, iri, vocab.FOR_FEATURE),
            measures=_iris(graph, iri, vocab.MEASURES),
        )

    problems.extend(_check_hierarchy(entries))
    problems.extend(_check_label_scopes(entries))
    problems.extend(_check_references(entries))
    if problems:
        raise TaxonomyError(problems)
    return Taxonomy(entries=entries, version=version, source=graph)


def _check_hierarchy(entries: dict[IRI, TaxonomyEntry]):
    reported = set()
    for iri in entries:
        chain = [iri]
        current = entries[iri]
        while True:
            parent = current.parent
            if parent is None or parent == current.kind.root:
                break
            if parent in chain:
                cycle = tuple(sorted(chain[chain.index(parent):]))
                if cycle not in reported:
                    reported.add(cycle)
                    yield ("CyclicHierarchy", cycle)
                break
            if parent not in entries or entries[parent].kind is not current.kind:
                yield ("UnrootedHierarchy", (iri, parent))
                break
            chain.append(parent)
            current = entries[parent]


def _check_label_scopes(entries: dict[IRI, TaxonomyEntry]):
    groups = defaultdict(list)
    for e in entries.values():
        for label in set(normalize_label(l) for l in e.all_labels()):
            groups[(e.kind, label)].append(e)
    reported = set()
    for (_, label), members in sorted(groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        members.sort(key=lambda e: e.canonical)
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                if not a.domains or not b.domains or set(a.domains) & set(b.domains):
                    pair = (a.canonical, b.canonical)
                    if pair not in reported:
                        reported.add(pair)
                        yield ("DuplicateLabelInScope", pair)


def _check_references(entries: dict[IRI, TaxonomyEntry]):
    expected = (
        ("domains", Kind.DOMAIN),
        ("features", Kind.FEATURE),
        ("measures", Kind.MEASUREMENT_TYPE),
    )
    for e in entries.values():
        for attr, kind in expected:
            for ref in getattr(e, attr):
                if ref not in entries or entries[ref].kind is not kind:
                    yield ("DanglingReference", (e.canonical, ref))
        if e.default_unit is not None:
            if e.kind is not Kind.MEASUREMENT_TYPE:
                yield ("DefaultUnitOnNonMeasurement", (e.canonical,))
            elif e.default_unit not in entries or entries[e.default_unit].kind is not Kind.UNIT:
                yield ("DanglingReference", (e.canonical, e.default_unit))


def load_taxonomy_file(path: Union[str, Path]) -> Taxonomy:
    path = Path(path)
    graph = parse_turtle(path.read_text(encoding="utf-8"))
    version = graph.value(IRI(vocab.M3 + "taxonomy"), IRI(vocab.M3 + "version"))
    return load_taxonomy(graph, version=version.lexical if isinstance(version, Literal) else "")


def unify_term(raw: str, kind: Union[Kind, str], ctx: UnificationContext, tax: Taxonomy) -> IRI:
    """Canonical IRI for a raw label.

    Candidates are narrowed by kind, then by ``ctx.domain``, then by
    ``ctx.feature``; a filter only runs while more than one candidate is
    left. A tie that survives all filters raises AmbiguousTerm.
    """
    kind = Kind.parse(kind)
    key = normalize_label(raw)
    candidates = [tax.entries[i] for i in tax.lookup.get(key, ()) if tax.entries[i].kind is kind]
    if not candidates:
        raise UnknownTerm(raw, kind)
    return _disambiguate(raw, kind, candidates, ctx)


def _disambiguate(raw, kind, candidates, ctx: UnificationContext) -> IRI:
    if len(candidates) > 1 and ctx.domain is not None:
        candidates = [e for e in candidates if e.valid_in(ctx.domain)]
        if not candidates:
            raise UnknownTerm(raw, kind, f"not defined in domain {ctx.domain.value}")
    if len(candidates) > 1 and ctx.feature is not None:
        candidates = [e for e in candidates if not e.features or ctx.feature in e.features]
        if not candidates:
            raise UnknownTerm(raw, kind, f"not defined for feature {ctx.feature.value}")
    if len(candidates) > 1:
        raise AmbiguousTerm(raw, (e.canonical for e in candidates))
    return candidates[0].canonical


def taxonomy_triples(entry: TaxonomyEntry) -> list[Triple]:
    """Triples that describe ``entry`` in the repo vocabulary."""
    c = entry.canonical
    out = [Triple(c, vocab.RDF_TYPE, entry.kind.iri),
           Triple(c, vocab.PREF_LABEL, Literal(entry.labels[0]))]
    out += [Triple(c, vocab.RDFS_LABEL, Literal(l)) for l in entry.labels[1:]]
    out += [Triple(c, vocab.ALT_LABEL, Literal(s)) for s in entry.synonyms]
    if entry.parent is not None:
        out.append(Triple(c, vocab.SUBCLASS_OF, entry.parent))
    if entry.default_unit is not None:
        out.append(Triple(c, vocab.DEFAULT_UNIT, entry.default_unit))
    out += [Triple(c, vocab.IN_DOMAIN, d) for d in entry.domains]
    out += [Triple(c, vocab.FOR_FEATURE, f) for f in entry.features]
    out += [Triple(c, vocab.MEASURES, m) for m in entry.measures]
    return out
