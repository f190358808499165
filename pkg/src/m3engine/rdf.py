"""RDF terms, an indexed in-memory triple store, and Turtle/N-Triples I/O.

Only the Turtle subset used by the shipped fixtures is understood: ``@prefix``
/ ``PREFIX`` declarations, prefixed names, absolute IRIs, ``a``, blank node
labels, quoted literals with datatype or language tag, bare numbers and
booleans, ``;`` and ``,`` lists and ``#`` comments.
"""

from __future__ import annotations

import hashlib
import re
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Iterable, Iterator, Optional, Union

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
XSD = "http://www.w3.org/2001/XMLSchema#"
OWL = "http://www.w3.org/2002/07/owl#"
SKOS = "http://www.w3.org/2004/02/skos/core#"

_IRI_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:[^\s<>\"{}|\\^`]*$")

NUMERIC_DATATYPES = frozenset(
    XSD + t
    for t in (
        "decimal", "integer", "double", "float", "int", "long", "short",
        "nonNegativeInteger", "positiveInteger", "negativeInteger",
        "nonPositiveInteger", "unsignedInt", "unsignedLong",
    )
)


class RDFError(Exception):
    pass


class TurtleSyntaxError(RDFError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class UnknownPrefixError(TurtleSyntaxError):
    def __init__(self, line: int, column: int, prefix: str):
        super().__init__(line, column, f"undeclared prefix {prefix!r}")
        self.prefix = prefix


@dataclass(frozen=True, order=True)
class IRI:
    value: str

    def __post_init__(self):
        if not _IRI_RE.match(self.value):
            raise ValueError(f"not an absolute IRI: {self.value!r}")

    def n3(self) -> str:
        return "<" + _escape_iri(self.value) + ">"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class BNode:
    label: str

    def n3(self) -> str:
        return "_:" + self.label

    def __str__(self) -> str:
        return "_:" + self.label


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: str = XSD + "string"
    lang: Optional[str] = None

    def __post_init__(self):
        if self.lang is not None:
            object.__setattr__(self, "lang", self.lang.lower())
            object.__setattr__(self, "datatype", RDF + "langString")
        elif self.datatype == RDF + "langString":
            raise ValueError("rdf:langString literal needs a language tag")

    @property
    def is_numeric(self) -> bool:
        return self.datatype in NUMERIC_DATATYPES and self.numeric_value() is not None

    def numeric_value(self) -> Optional[Decimal]:
        """Value of a numeric literal as a Decimal, or None.

        Lexical variants such as ``38.70`` and ``38.7`` give equal values while
        the literal itself keeps its lexical form.
        """
        if self.datatype not in NUMERIC_DATATYPES:
            return None
        try:
            value = Decimal(self.lexical.strip())
        except InvalidOperation:
            return None
        return value if value.is_finite() else None

    def n3(self) -> str:
        out = '"' + _escape_string(self.lexical) + '"'
        if self.lang is not None:
            return out + "@" + self.lang
        if self.datatype != XSD + "string":
            return out + "^^<" + _escape_iri(self.datatype) + ">"
        return out

    def __str__(self) -> str:
        return self.lexical


Term = Union[IRI, BNode, Literal]


def decimal_literal(value: Union[Decimal, int, float, str]) -> Literal:
    """xsd:decimal literal in canonical form (at least one fractional digit)."""
    d = Decimal(str(value))
    return Literal(format_decimal(d), XSD + "decimal")


def format_decimal(d: Decimal) -> str:
    d = d.normalize()
    if d == 0:
        return "0.0"
    text = format(d, "f")
    if "." not in text:
        text += ".0"
    return text


def term_sort_key(term: Term) -> tuple:
    if isinstance(term, IRI):
        return (0, term.value, "", "")
    if isinstance(term, BNode):
        return (1, term.label, "", "")
    return (2, term.lexical, term.datatype, term.lang or "")


@dataclass(frozen=True)
class Triple:
    subject: Union[IRI, BNode]
    predicate: IRI
    object: Term

    def __post_init__(self):
        if not isinstance(self.subject, (IRI, BNode)):
            raise ValueError(f"subject must be an IRI or blank node: {self.subject!r}")
        if not isinstance(self.predicate, IRI):
            raise ValueError(f"predicate must be an IRI: {self.predicate!r}")
        if not isinstance(self.object, (IRI, BNode, Literal)):
            raise ValueError(f"object must be an RDF term: {self.object!r}")

    def __iter__(self):
        yield self.subject
        yield self.predicate
        yield self.object

    def n3(self) -> str:
        return f"{self.subject.n3()} {self.predicate.n3()} {self.object.n3()} ."

    def sort_key(self) -> tuple:
        return (term_sort_key(self.subject), term_sort_key(self.predicate), term_sort_key(self.object))


def _index():
    return defaultdict(lambda: defaultdict(set))


class Graph:
    """Set of triples with SPO, POS and OSP indexes.

    Mutation is meant for a single writer while the graph is being built;
    afterwards the graph is only read and may be shared between readers.
    """

    def __init__(self, triples: Iterable[Triple] = (), prefixes: Optional[dict] = None):
        self._triples: set[Triple] = set()
        self._spo = _index()
        self._pos = _index()
        self._osp = _index()
        self.prefixes: dict[str, str] = dict(prefixes or {})
        self._merge_count = 0
        for t in triples:
            self.add(t)

    def add(self, triple: Triple) -> bool:
        if triple in self._triples:
            return False
        s, p, o = triple.subject, triple.predicate, triple.object
        self._triples.add(triple)
        self._spo[s][p].add(o)
        self._pos[p][o].add(s)
        self._osp[o][s].add(p)
        return True

    def update(self, triples: Iterable[Triple]) -> int:
        return sum(1 for t in triples if self.add(t))

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, triple) -> bool:
        if isinstance(triple, tuple) and len(triple) == 3:
            try:
                triple = Triple(*triple)
            except ValueError:
                return False
        return triple in self._triples

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self._triples == other._triples

    __hash__ = None

    def __repr__(self) -> str:
        return f"<Graph with {len(self)} triples>"

    def triples(self) -> frozenset:
        return frozenset(self._triples)

    def sorted_triples(self) -> list[Triple]:
        return sorted(self._triples, key=Triple.sort_key)

    def copy(self) -> "Graph":
        g = Graph(self._triples, self.prefixes)
        g._merge_count = self._merge_count
        return g

    def index_sizes(self) -> tuple[int, int, int]:
        def count(index):
            return sum(len(leaf) for inner in index.values() for leaf in inner.values())
        return count(self._spo), count(self._pos), count(self._osp)

    def match(self, s: Optional[Term] = None, p: Optional[Term] = None,
              o: Optional[Term] = None) -> Iterator[Triple]:
        """Triples matching the bound positions; ``None`` is a wildcard."""
        if s is not None and p is not None and o is not None:
            t = Triple(s, p, o) if isinstance(p, IRI) and not isinstance(s, Literal) else None
            if t is not None and t in self._triples:
                yield t
            return
        if s is not None:
            by_p = self._spo.get(s)
            if not by_p:
                return
            if p is not None:
                for obj in tuple(by_p.get(p, ())):
                    yield Triple(s, p, obj)
            elif o is not None:
                for pred in tuple(self._osp.get(o, {}).get(s, ())):
                    yield Triple(s, pred, o)
            else:
                for pred, objs in tuple(by_p.items()):
                    for obj in tuple(objs):
                        yield Triple(s, pred, obj)
        elif p is not None:
            by_o = self._pos.get(p)
            if not by_o:
                return
            if o is not None:
                for subj in tuple(by_o.get(o, ())):
                    yield Triple(subj, p, o)
            else:
                for obj, subjs in tuple(by_o.items()):
                    for subj in tuple(subjs):
                        yield Triple(subj, p, obj)
        elif o is not None:
            for subj, preds in tuple(self._osp.get(o, {}).items()):
                for pred in tuple(preds):
                    yield Triple(subj, pred, o)
        else:
            yield from tuple(self._triples)

    def count(self, s=None, p=None, o=None) -> int:
        """Number of matches, read off the indexes where possible."""
        if s is None and p is None and o is None:
            return len(self._triples)
        if s is not None and p is not None and o is None:
            return len(self._spo.get(s, {}).get(p, ()))
        if p is not None and o is not None and s is None:
            return len(self._pos.get(p, {}).get(o, ()))
        if o is not None and s is not None and p is None:
            return len(self._osp.get(o, {}).get(s, ()))
        if s is not None and p is None and o is None:
            return sum(len(v) for v in self._spo.get(s, {}).values())
        if p is not None and s is None and o is None:
            return sum(len(v) for v in self._pos.get(p, {}).values())
        if o is not None and s is None and p is None:
            return sum(len(v) for v in self._osp.get(o, {}).values())
        return sum(1 for _ in self.match(s, p, o))

    def subjects(self, p=None, o=None) -> set:
        return {t.subject for t in self.match(None, p, o)}

    def objects(self, s=None, p=None) -> set:
        return {t.object for t in self.match(s, p, None)}

    def value(self, s, p) -> Optional[Term]:
        objs = self.objects(s, p)
        return min(objs, key=term_sort_key) if objs else None

    def bnodes(self) -> set:
        out = set()
        for t in self._triples:
            if isinstance(t.subject, BNode):
                out.add(t.subject)
            if isinstance(t.object, BNode):
                out.add(t.object)
        return out


def merge(target: Graph, source: Graph) -> Graph:
    """Union of two graphs as a new graph.

    Source blank nodes get fresh labels ``m<k>b<i>`` so they cannot capture
    target blank nodes; ``k`` counts merges into the result and ``i`` numbers
    source labels in sorted order, which keeps the output deterministic.
    Prefixes are merged with the target winning conflicts.
    """
    result = target.copy()
    for prefix, ns in source.prefixes.items():
        result.prefixes.setdefault(prefix, ns)
    source_bnodes = sorted(source.bnodes(), key=lambda b: b.label)
    if source_bnodes:
        taken = {b.label for b in target.bnodes()}
        k = result._merge_count + 1
        while any(label.startswith(f"m{k}b") for label in taken):
            k += 1
        result._merge_count = k
        rename = {b: BNode(f"m{k}b{i}") for i, b in enumerate(source_bnodes)}
        for t in source.sorted_triples():
            result.add(Triple(rename.get(t.subject, t.subject), t.predicate,
                              rename.get(t.object, t.object)))
    else:
        result.update(source)
    return result


# -- isomorphism -------------------------------------------------------------

def _refine(triples: list[Triple], bnodes: list[BNode], colors: dict) -> dict:
    """Iterated neighbourhood hashing until the partition stops splitting."""
    def color_of(term):
        if isinstance(term, BNode):
            return colors[term]
        return "T" + (term.n3())

    while True:
        signatures = {b: [colors[b]] for b in bnodes}
        for t in triples:
            if isinstance(t.subject, BNode):
                signatures[t.subject].append("out|" + t.predicate.value + "|" + color_of(t.object))
            if isinstance(t.object, BNode):
                signatures[t.object].append("in|" + t.predicate.value + "|" + color_of(t.subject))
        new = {
            b: hashlib.sha256("\x00".join([sig[0]] + sorted(sig[1:])).encode()).hexdigest()
            for b, sig in signatures.items()
        }
        if len(set(new.values())) == len(set(colors.values())):
            return new
        colors = new


def canonical_triples(graph: Graph) -> list[str]:
    """Sorted N-Triples lines with blank nodes relabelled canonically.

    Colour refinement splits blank nodes by structure; remaining ties are
    broken by trying each candidate and keeping the lexicographically
    smallest result, so two graphs are isomorphic iff their canonical forms
    are equal.
    """
    triples = list(graph)
    bnodes = sorted(graph.bnodes(), key=lambda b: b.label)
    if not bnodes:
        return sorted(t.n3() for t in triples)
    colors = _refine(triples, bnodes, {b: "" for b in bnodes})
    return _canonical_search(triples, bnodes, colors)


def _canonical_search(triples, bnodes, colors) -> list[str]:
    groups = defaultdict(list)
    for b in bnodes:
        groups[colors[b]].append(b)
    ties = [g for c, g in sorted(groups.items()) if len(g) > 1]
    if not ties:
        order = sorted(bnodes, key=lambda b: colors[b])
        labels = {b: BNode(f"c{i}") for i, b in enumerate(order)}
        return sorted(
            Triple(labels.get(t.subject, t.subject), t.predicate, labels.get(t.object, t.object)).n3()
            for t in triples
        )
    best = None
    for candidate in ties[0]:
        forced = dict(colors)
        forced[candidate] = hashlib.sha256((colors[candidate] + "*").encode()).hexdigest()
        result = _canonical_search(triples, bnodes, _refine(triples, bnodes, forced))
        if best is None or result < best:
            best = result
    return best


def isomorphic(g1: Graph, g2: Graph) -> bool:
    if len(g1) != len(g2):
        return False
    ground1 = {t for t in g1 if not _has_bnode(t)}
    ground2 = {t for t in g2 if not _has_bnode(t)}
    if ground1 != ground2:
        return False
    return canonical_triples(g1) == canonical_triples(g2)


def _has_bnode(t: Triple) -> bool:
    return isinstance(t.subject, BNode) or isinstance(t.object, BNode)


# -- escaping ----------------------------------------------------------------

_STRING_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t",
                   "\b": "\\b", "\f": "\\f"}


def _escape_string(s: str) -> str:
    out = []
    for ch in s:
        if ch in _STRING_ESCAPES:
            out.append(_STRING_ESCAPES[ch])
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _escape_iri(s: str) -> str:
    return "".join(f"\\u{ord(ch):04X}" if ord(ch) <= 0x20 or ch in '<>"{}|^`\\' else ch for ch in s)


_UNESCAPE_RE = re.compile(r"\\(u[0-9A-Fa-f]{4}|U[0-9A-Fa-f]{8}|.)", re.S)
_SIMPLE_UNESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f",
                     '"': '"', "'": "'", "\\": "\\"}


def _unescape(s: str, line: int, column: int) -> str:
    def repl(m):
        code = m.group(1)
        if code[0] in "uU":
            return chr(int(code[1:], 16))
        if code in _SIMPLE_UNESCAPES:
            return _SIMPLE_UNESCAPES[code]
        raise TurtleSyntaxError(line, column, f"bad escape \\{code}")
    return _UNESCAPE_RE.sub(repl, s)


# -- tokenizer ---------------------------------------------------------------

_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"#[^\n]*"),
    ("IRIREF", r"<[^<>\"{}|^`\\\x00-\x20]*(?:\\u[0-9A-Fa-f]{4}[^<>\"{}|^`\\\x00-\x20]*)*>"),
    ("STRING", r'"(?:[^"\\\n\r]|\\.)*"'),
    ("LANGTAG", r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*"),
    ("DTYPE", r"\^\^"),
    ("BNODE", r"_:[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?"),
    ("NUMBER", r"[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+)"),
    ("PNAME", r"(?:[A-Za-z][A-Za-z0-9_\-]*(?:\.[A-Za-z0-9_\-]+)*)?:(?:[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?)?"),
    ("KEYWORD", r"[A-Za-z][A-Za-z0-9_\-]*"),
    ("PUNCT", r"[.;,\[\]()]"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pat})" for name, pat in _TOKEN_SPEC))


@dataclass
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise TurtleSyntaxError(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")
        kind, value = m.lastgroup, m.group()
        if kind not in ("WS", "COMMENT"):
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    return tokens


# -- Turtle parser -----------------------------------------------------------

class _TurtleParser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.graph = Graph()
        self.prefixes = self.graph.prefixes

    def peek(self) -> Optional[Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else Token("", "", 1, 1)
            raise TurtleSyntaxError(last.line, last.column + len(last.text), "unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise TurtleSyntaxError(tok.line, tok.column, f"expected {text!r}, found {tok.text!r}")
        return tok

    def parse(self) -> Graph:
        while self.peek() is not None:
            tok = self.peek()
            if tok.kind == "LANGTAG" and tok.text == "@prefix":
                self.next()
                self._prefix_decl(terminated=True)
            elif tok.kind == "KEYWORD" and tok.text.upper() == "PREFIX":
                self.next()
                self._prefix_decl(terminated=False)
            else:
                self._triples()
                self.expect(".")
        return self.graph

    def _prefix_decl(self, terminated: bool):
        tok = self.next()
        if tok.kind != "PNAME" or not tok.text.endswith(":"):
            raise TurtleSyntaxError(tok.line, tok.column, f"expected prefix name, found {tok.text!r}")
        iri_tok = self.next()
        if iri_tok.kind != "IRIREF":
            raise TurtleSyntaxError(iri_tok.line, iri_tok.column, "expected <namespace IRI>")
        self.prefixes[tok.text[:-1]] = self._iri_value(iri_tok)
        if terminated:
            self.expect(".")

    def _iri_value(self, tok: Token) -> str:
        value = _unescape(tok.text[1:-1], tok.line, tok.column)
        if not _IRI_RE.match(value):
            raise TurtleSyntaxError(tok.line, tok.column, f"relative or invalid IRI {value!r}")
        return value

    def _triples(self):
        subject = self._term(position="subject")
        self._predicate_object_list(subject)

    def _predicate_object_list(self, subject):
        while True:
            predicate = self._term(position="predicate")
            while True:
                obj = self._term(position="object")
                self.graph.add(Triple(subject, predicate, obj))
                tok = self.peek()
                if tok is not None and tok.text == ",":
                    self.next()
                    continue
                break
            tok = self.peek()
            if tok is not None and tok.text == ";":
                while tok is not None and tok.text == ";":
                    self.next()
                    tok = self.peek()
                if tok is None or tok.text == ".":
                    return
                continue
            return

    def _term(self, position: str) -> Term:
        tok = self.next()
        kind = tok.kind
        if kind == "IRIREF":
            return IRI(self._iri_value(tok))
        if kind == "PNAME":
            return self._expand(tok)
        if kind == "KEYWORD" and tok.text == "a" and position == "predicate":
            return IRI(RDF + "type")
        if position == "predicate":
            raise TurtleSyntaxError(tok.line, tok.column, f"expected predicate, found {tok.text!r}")
        if kind == "BNODE":
            return BNode(tok.text[2:])
        if position == "subject":
            raise TurtleSyntaxError(tok.line, tok.column, f"expected subject, found {tok.text!r}")
        if kind == "STRING":
            lexical = _unescape(tok.text[1:-1], tok.line, tok.column)
            nxt = self.peek()
            if nxt is not None and nxt.kind == "LANGTAG":
                self.next()
                return Literal(lexical, lang=nxt.text[1:])
            if nxt is not None and nxt.kind == "DTYPE":
                self.next()
                dt_tok = self.next()
                if dt_tok.kind == "IRIREF":
                    datatype = self._iri_value(dt_tok)
                elif dt_tok.kind == "PNAME":
                    datatype = self._expand(dt_tok).value
                else:
                    raise TurtleSyntaxError(dt_tok.line, dt_tok.column, "expected datatype IRI")
                if datatype == RDF + "langString":
                    raise TurtleSyntaxError(dt_tok.line, dt_tok.column, "rdf:langString needs a language tag")
                return Literal(lexical, datatype)
            return Literal(lexical)
        if kind == "NUMBER":
            text = tok.text
            if "e" in text or "E" in text:
                return Literal(text, XSD + "double")
            if "." in text:
                return Literal(text, XSD + "decimal")
            return Literal(text, XSD + "integer")
        if kind == "KEYWORD" and tok.text in ("true", "false"):
            return Literal(tok.text, XSD + "boolean")
        raise TurtleSyntaxError(tok.line, tok.column, f"unexpected token {tok.text!r}")

    def _expand(self, tok: Token) -> IRI:
        prefix, _, local = tok.text.partition(":")
        if prefix not in self.prefixes:
            raise UnknownPrefixError(tok.line, tok.column, prefix)
        try:
            return IRI(self.prefixes[prefix] + local)
        except ValueError as exc:
            raise TurtleSyntaxError(tok.line, tok.column, str(exc)) from None


def parse_turtle(text: str) -> Graph:
    return _TurtleParser(text).parse()


def parse_ntriples(text: str) -> Graph:
    """N-Triples is a subset of the supported Turtle, minus prefixes."""
    graph = Graph()
    # str.splitlines would also break on U+0085 and U+2028 inside literals
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parser = _TurtleParser(line)
        toks = parser.tokens
        for tok in toks:
            tok.line = lineno
            if tok.kind in ("PNAME", "KEYWORD", "NUMBER"):
                raise TurtleSyntaxError(lineno, tok.column, f"not N-Triples: {tok.text!r}")
        parser._triples()
        parser.expect(".")
        if parser.peek() is not None:
            tok = parser.peek()
            raise TurtleSyntaxError(lineno, tok.column, "one triple per line")
        graph.update(parser.graph)
    return graph


def parse(text: str, format: str = "turtle") -> Graph:
    if format == "turtle":
        return parse_turtle(text)
    if format == "ntriples":
        return parse_ntriples(text)
    raise ValueError(f"unknown RDF format {format!r}")


# -- serializers -------------------------------------------------------------

_LOCAL_RE = re.compile(r"^[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?$")


def serialize(graph: Graph, format: str = "turtle") -> str:
    if format == "ntriples":
        return "".join(line + "\n" for line in sorted(t.n3() for t in graph))
    if format != "turtle":
        raise ValueError(f"unknown RDF format {format!r}")
    return _serialize_turtle(graph)


def _serialize_turtle(graph: Graph) -> str:
    prefixes = sorted(graph.prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    used = set()

    def qname(iri: str) -> str:
        for prefix, ns in prefixes:
            if iri.startswith(ns):
                local = iri[len(ns):]
                if local == "" or _LOCAL_RE.match(local):
                    used.add(prefix)
                    return f"{prefix}:{local}"
        return "<" + _escape_iri(iri) + ">"

    def fmt(term: Term, predicate: bool = False) -> str:
        if isinstance(term, IRI):
            if predicate and term.value == RDF + "type":
                return "a"
            return qname(term.value)
        if isinstance(term, BNode):
            return term.n3()
        out = '"' + _escape_string(term.lexical) + '"'
        if term.lang is not None:
            return out + "@" + term.lang
        if term.datatype != XSD + "string":
            return out + "^^" + qname(term.datatype)
        return out

    blocks = []
    by_subject = defaultdict(list)
    for t in graph.sorted_triples():
        by_subject[t.subject].append(t)
    for subject in sorted(by_subject, key=term_sort_key):
        by_pred = defaultdict(list)
        for t in by_subject[subject]:
            by_pred[t.predicate].append(t.object)
        parts = []
        for pred in sorted(by_pred, key=lambda p: (p.value != RDF + "type", p.value)):
            objs = ", ".join(fmt(o) for o in sorted(by_pred[pred], key=term_sort_key))
            parts.append(f"{fmt(pred, predicate=True)} {objs}")
        blocks.append(fmt(subject) + " " + " ;\n    ".join(parts) + " .\n")
    header = "".join(
        f"@prefix {prefix}: <{_escape_iri(ns)}> .\n"
        for prefix, ns in sorted(graph.prefixes.items())
        if prefix in used
    )
    if header and blocks:
        header += "\n"
    return header + "\n".join(blocks)


def namespace_of(iri: str) -> str:
    """Namespace part of an IRI: everything up to the last '#' or '/'."""
    cut = max(iri.rfind("#"), iri.rfind("/"))
    return iri[: cut + 1] if cut >= 0 else iri
