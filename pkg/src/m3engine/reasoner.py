"""Rule-based enrichment of observation graphs (S-LOR style rules).

Rule files use a bracketed syntax::

    @prefix health: <http://example.org/health#> .
    [fever: (?o type m3x:BodyTemperature) (?o hasValue ?v) ge(?v, 38.0)
            -> (?o type health:Fever)]

Rules are monotone (no negation, no deletion, no value invention) and are
evaluated semi-naively to the least fixpoint.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

from . import vocab
from .rdf import (IRI, RDF, RDFS, XSD, Graph, Literal, Term, Triple,
                  TurtleSyntaxError, _unescape, term_sort_key)
from .taxonomy import Taxonomy


class RuleSyntaxError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class UnsafeRuleError(Exception):
    def __init__(self, name: str, variable: str, reason: str = "not bound by a body triple pattern"):
        super().__init__(f"rule {name!r}: variable ?{variable} {reason}")
        self.name = name
        self.variable = variable


class BuiltinTypeError(Exception):
    def __init__(self, rule: str, builtin: str, term: Term):
        super().__init__(f"rule {rule!r}: {builtin} applied to non-numeric {term.n3()}")
        self.rule = rule
        self.builtin = builtin
        self.term = term


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "?" + self.name


PatternTerm = Union[Term, Var]


@dataclass(frozen=True)
class TriplePattern:
    s: PatternTerm
    p: PatternTerm
    o: PatternTerm

    def variables(self) -> set:
        return {t for t in (self.s, self.p, self.o) if isinstance(t, Var)}

    def terms(self) -> tuple:
        return (self.s, self.p, self.o)


_COMPARATORS = {
    "greaterThan": operator.gt,
    "lessThan": operator.lt,
    "ge": operator.ge,
    "le": operator.le,
    "equal": operator.eq,
    "notEqual": operator.ne,
}
BUILTINS = frozenset(_COMPARATORS) | {"interval"}


@dataclass(frozen=True)
class Builtin:
    op: str
    args: tuple

    def __post_init__(self):
        if self.op not in BUILTINS:
            raise ValueError(f"unknown built-in {self.op!r}")
        arity = 3 if self.op == "interval" else 2
        if len(self.args) != arity:
            raise ValueError(f"{self.op} takes {arity} arguments, got {len(self.args)}")
        for a in self.args:
            if not isinstance(a, Var) and not (isinstance(a, Literal) and a.is_numeric):
                raise ValueError(f"{self.op} arguments must be variables or numeric literals")
        if self.op == "interval":
            lo, hi = self.args[1], self.args[2]
            if isinstance(lo, Literal) and isinstance(hi, Literal) and lo.numeric_value() > hi.numeric_value():
                raise ValueError("interval requires lo <= hi")

    def variables(self) -> set:
        return {a for a in self.args if isinstance(a, Var)}

    def evaluate(self, binding: dict, rule: str) -> bool:
        values = []
        for a in self.args:
            term = binding[a] if isinstance(a, Var) else a
            value = term.numeric_value() if isinstance(term, Literal) else None
            if value is None:
                raise BuiltinTypeError(rule, self.op, term)
            values.append(value)
        if self.op == "interval":
            return values[1] <= values[0] <= values[2]
        return _COMPARATORS[self.op](values[0], values[1])


Atom = Union[TriplePattern, Builtin]


@dataclass(frozen=True)
class Rule:
    name: str
    body: tuple
    head: tuple

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))
        object.__setattr__(self, "head", tuple(self.head))
        if not self.head:
            raise ValueError(f"rule {self.name!r} has an empty head")
        if not any(isinstance(a, TriplePattern) for a in self.body):
            raise ValueError(f"rule {self.name!r} needs at least one body triple pattern")
        bound: set = set()
        for atom in self.body:
            if isinstance(atom, TriplePattern):
                bound |= atom.variables()
            else:
                for v in sorted(atom.variables()):
                    if v not in bound:
                        raise UnsafeRuleError(self.name, v.name, "used in a built-in before being bound")
        for atom in self.head:
            if not isinstance(atom, TriplePattern):
                raise ValueError(f"rule {self.name!r}: head atoms must be triple patterns")
            for v in sorted(atom.variables()):
                if v not in bound:
                    raise UnsafeRuleError(self.name, v.name)
            if isinstance(atom.s, Literal) or (not isinstance(atom.p, (Var, IRI))):
                raise ValueError(f"rule {self.name!r}: head pattern cannot produce a valid triple")

    @property
    def patterns(self) -> list[TriplePattern]:
        return [a for a in self.body if isinstance(a, TriplePattern)]

    @property
    def builtins(self) -> list[Builtin]:
        return [a for a in self.body if isinstance(a, Builtin)]


@dataclass(frozen=True)
class RuleSet:
    rules: tuple = ()
    prefixes: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        seen = set()
        for r in self.rules:
            if r.name in seen:
                raise ValueError(f"duplicate rule name {r.name!r}")
            seen.add(r.name)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __add__(self, other: "RuleSet") -> "RuleSet":
        prefixes = dict(other.prefixes)
        prefixes.update(self.prefixes)
        return RuleSet(self.rules + other.rules, prefixes)


# -- parser ------------------------------------------------------------------

_RULE_TOKENS = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"#[^\n]*"),
    ("ARROW", r"->"),
    ("IRIREF", r"<[^<>\"{}|^`\\\x00-\x20]*>"),
    ("STRING", r'"(?:[^"\\\n\r]|\\.)*"'),
    ("LANGTAG", r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*"),
    ("DTYPE", r"\^\^"),
    ("VAR", r"\?[A-Za-z_][A-Za-z0-9_]*"),
    ("NUMBER", r"[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+)"),
    ("PNAME", r"(?:[A-Za-z][A-Za-z0-9_\-]*)?:(?:[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?)?"),
    ("NAME", r"[A-Za-z_][A-Za-z0-9_\-]*"),
    ("PUNCT", r"[\[\](),.]"),
]
_RULE_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _RULE_TOKENS))

DEFAULT_RULE_PREFIXES = {"rdf": RDF, "rdfs": RDFS, "xsd": XSD, "": vocab.M3,
                         "m3": vocab.M3, "m3x": vocab.M3X, "unit": vocab.UNIT}


class _RuleParser:
    def __init__(self, text: str):
        self.tokens = []
        pos, line = 0, 1
        while pos < len(text):
            m = _RULE_RE.match(text, pos)
            if m is None:
                raise RuleSyntaxError(line, f"unexpected character {text[pos]!r}")
            if m.lastgroup not in ("WS", "COMMENT"):
                self.tokens.append((m.lastgroup, m.group(), line))
            line += m.group().count("\n")
            pos = m.end()
        self.pos = 0
        self.prefixes = dict(DEFAULT_RULE_PREFIXES)
        self.declared: dict[str, str] = {}

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            last_line = self.tokens[-1][2] if self.tokens else 1
            raise RuleSyntaxError(last_line, "unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, text: str):
        tok = self.next()
        if tok[1] != text:
            raise RuleSyntaxError(tok[2], f"expected {text!r}, found {tok[1]!r}")
        return tok

    def parse(self) -> RuleSet:
        rules = []
        names = {}
        while self.peek() is not None:
            kind, text, line = self.peek()
            if kind == "LANGTAG" and text == "@prefix":
                self.next()
                ptok = self.next()
                if ptok[0] != "PNAME" or not ptok[1].endswith(":"):
                    raise RuleSyntaxError(ptok[2], "expected prefix name")
                itok = self.next()
                if itok[0] != "IRIREF":
                    raise RuleSyntaxError(itok[2], "expected <namespace IRI>")
                self.prefixes[ptok[1][:-1]] = itok[1][1:-1]
                self.declared[ptok[1][:-1]] = itok[1][1:-1]
                self.expect(".")
            elif text == "[":
                rule = self._rule()
                if rule.name in names:
                    raise RuleSyntaxError(line, f"duplicate rule name {rule.name!r} (first on line {names[rule.name]})")
                names[rule.name] = line
                rules.append(rule)
            else:
                raise RuleSyntaxError(line, f"expected '[' or @prefix, found {text!r}")
        return RuleSet(tuple(rules), dict(self.declared))

    def _rule(self) -> Rule:
        _, _, line = self.expect("[")
        kind, text, nline = self.next()
        if kind == "PNAME" and text.endswith(":") and text.count(":") == 1 and text[:-1]:
            name = text[:-1]
        elif kind == "NAME":
            name = text
            self.expect(":")
        else:
            raise RuleSyntaxError(nline, f"expected rule name, found {text!r}")
        body = []
        while self.peek() is not None and self.peek()[0] != "ARROW":
            body.append(self._atom(name))
        self.next()
        head = []
        while self.peek() is not None and self.peek()[1] != "]":
            head.append(self._atom(name))
        self.expect("]")
        if not body:
            raise RuleSyntaxError(line, f"rule {name!r} has an empty body")
        if not head:
            raise RuleSyntaxError(line, f"rule {name!r} has an empty head")
        try:
            return Rule(name, tuple(body), tuple(head))
        except UnsafeRuleError:
            raise
        except ValueError as exc:
            raise RuleSyntaxError(line, str(exc)) from None

    def _atom(self, rule_name: str) -> Atom:
        kind, text, line = self.peek()
        if text == "(":
            self.next()
            terms = [self._term() for _ in range(3)]
            self.expect(")")
            return TriplePattern(*terms)
        if kind == "NAME" and text in BUILTINS:
            self.next()
            self.expect("(")
            args = [self._term()]
            while self.peek() is not None and self.peek()[1] == ",":
                self.next()
                args.append(self._term())
            self.expect(")")
            try:
                return Builtin(text, tuple(args))
            except ValueError as exc:
                raise RuleSyntaxError(line, f"rule {rule_name!r}: {exc}") from None
        raise RuleSyntaxError(line, f"expected '(' or a built-in, found {text!r}")

    def _term(self) -> PatternTerm:
        kind, text, line = self.next()
        if kind == "VAR":
            return Var(text[1:])
        if kind == "IRIREF":
            return self._iri(text[1:-1], line)
        if kind == "PNAME":
            prefix, _, local = text.partition(":")
            if prefix not in self.prefixes:
                raise RuleSyntaxError(line, f"undeclared prefix {prefix!r}")
            return self._iri(self.prefixes[prefix] + local, line)
        if kind == "NAME":
            if text in ("a", "type"):
                return vocab.RDF_TYPE
            return self._iri(self.prefixes[""] + text, line)
        if kind == "NUMBER":
            if "e" in text or "E" in text:
                return Literal(text, XSD + "double")
            return Literal(text, XSD + ("decimal" if "." in text else "integer"))
        if kind == "STRING":
            try:
                lexical = _unescape(text[1:-1], line, 0)
            except TurtleSyntaxError as exc:
                raise RuleSyntaxError(line, exc.message) from None
            nxt = self.peek()
            if nxt is not None and nxt[0] == "LANGTAG":
                self.next()
                return Literal(lexical, lang=nxt[1][1:])
            if nxt is not None and nxt[0] == "DTYPE":
                self.next()
                dt = self._term()
                if not isinstance(dt, IRI):
                    raise RuleSyntaxError(line, "expected datatype IRI")
                return Literal(lexical, dt.value)
            return Literal(lexical)
        raise RuleSyntaxError(line, f"unexpected token {text!r}")

    @staticmethod
    def _iri(value: str, line: int) -> IRI:
        try:
            return IRI(value)
        except ValueError as exc:
            raise RuleSyntaxError(line, str(exc)) from None


def parse_rules(text: str) -> RuleSet:
    return _RuleParser(text).parse()


# -- evaluation --------------------------------------------------------------

@dataclass(frozen=True)
class Derivation:
    rule: str
    bindings: tuple  # sorted (variable name, term) pairs
    triples: tuple   # triples first derived by this binding
    iteration: int

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "bindings": {name: term.n3() for name, term in self.bindings},
            "triples": [t.n3() for t in self.triples],
        }


@dataclass
class Inference:
    graph: Graph
    derivations: list[Derivation]
    errors: list[Exception]
    iterations: int

    def __iter__(self):
        yield self.graph
        yield self.derivations


def _bind(term, binding):
    return binding.get(term) if isinstance(term, Var) else term


def _unify(pattern: TriplePattern, triple: Triple, binding: dict) -> Optional[dict]:
    out = binding
    for pt, value in zip(pattern.terms(), triple):
        if isinstance(pt, Var):
            bound = out.get(pt)
            if bound is None:
                if out is binding:
                    out = dict(binding)
                out[pt] = value
            elif bound != value:
                return None
        elif pt != value:
            return None
    return out


def _lookup(graph: Graph, pattern: TriplePattern, binding: dict) -> Iterator[Triple]:
    s, p, o = (_bind(t, binding) for t in pattern.terms())
    if isinstance(s, Literal) or (p is not None and not isinstance(p, IRI)):
        return iter(())
    return graph.match(s, p, o)


class _RuleRunner:
    """Evaluates one rule; built-in type errors are remembered, not raised."""

    def __init__(self, rule: Rule, errors: list, reported: set):
        self.rule = rule
        self.errors = errors
        self.reported = reported
        self.patterns = rule.patterns
        # built-ins attached to the first pattern position after which all their
        # variables are bound, for a given evaluation order
        self._builtin_cache: dict[tuple, list] = {}

    def _builtins_after(self, order: tuple) -> list[list[Builtin]]:
        cached = self._builtin_cache.get(order)
        if cached is not None:
            return cached
        slots: list[list[Builtin]] = [[] for _ in order]
        bound: set = set()
        pending = list(self.rule.builtins)
        for step, idx in enumerate(order):
            bound |= self.patterns[idx].variables()
            still = []
            for b in pending:
                (slots[step] if b.variables() <= bound else still).append(b)
            pending = still
        self._builtin_cache[order] = slots
        return slots

    def _check(self, builtins: Sequence[Builtin], binding: dict) -> bool:
        for b in builtins:
            try:
                if not b.evaluate(binding, self.rule.name):
                    return False
            except BuiltinTypeError as exc:
                if self.rule.name not in self.reported:
                    self.reported.add(self.rule.name)
                    self.errors.append(exc)
                return False
        return True

    def solutions(self, graph: Graph, delta: Optional[Graph] = None) -> Iterator[dict]:
        """Body bindings; with ``delta``, only those using at least one delta triple."""
        n = len(self.patterns)
        if delta is None:
            yield from self._join(graph, None, tuple(range(n)))
            return
        for first in range(n):
            order = (first,) + tuple(i for i in range(n) if i != first)
            yield from self._join(graph, delta, order)

    def _join(self, graph: Graph, delta: Optional[Graph], order: tuple) -> Iterator[dict]:
        builtins = self._builtins_after(order)

        def walk(step: int, binding: dict):
            if step == len(order):
                yield binding
                return
            pattern = self.patterns[order[step]]
            source = delta if (delta is not None and step == 0) else graph
            for triple in _lookup(source, pattern, binding):
                extended = _unify(pattern, triple, binding)
                if extended is not None and self._check(builtins[step], extended):
                    yield from walk(step + 1, extended)

        yield from walk(0, {})

    def instantiate(self, binding: dict) -> Optional[list[Triple]]:
        out = []
        for atom in self.rule.head:
            s, p, o = (_bind(t, binding) for t in atom.terms())
            if isinstance(s, Literal) or not isinstance(p, IRI):
                return None
            out.append(Triple(s, p, o))
        return out


def _binding_key(binding: dict) -> tuple:
    return tuple(sorted((v.name, term) for v, term in binding.items()))


def _sort_key_binding(key: tuple) -> tuple:
    return tuple((name, term_sort_key(term)) for name, term in key)


def apply_rules(graph: Graph, rules: RuleSet, max_iterations: Optional[int] = None) -> Inference:
    """Least fixpoint of ``graph`` under ``rules``, evaluated semi-naively.

    The input graph is not modified. Each iteration derives from the graph as
    it stood at the start of that iteration, and candidate derivations are
    sorted before being applied so the log is reproducible across runs.
    """
    result = graph.copy()
    errors: list[Exception] = []
    reported: set = set()
    runners = [_RuleRunner(r, errors, reported) for r in rules]
    log: list[Derivation] = []
    delta: Optional[Graph] = None
    iteration = 0
    while True:
        iteration += 1
        candidates = {}
        for idx, runner in enumerate(runners):
            for binding in runner.solutions(result, delta):
                key = _binding_key(binding)
                if (idx, key) in candidates:
                    continue
                triples = runner.instantiate(binding)
                if triples is not None:
                    candidates[(idx, key)] = triples
        new_delta = Graph()
        for (idx, key) in sorted(candidates, key=lambda k: (k[0], _sort_key_binding(k[1]))):
            fresh = []
            for t in candidates[(idx, key)]:
                if t not in result and t not in new_delta:
                    new_delta.add(t)
                    fresh.append(t)
            if fresh:
                log.append(Derivation(runners[idx].rule.name, key, tuple(fresh), iteration))
        if not len(new_delta):
            break
        result.update(new_delta.sorted_triples())
        delta = new_delta
        if max_iterations is not None and iteration >= max_iterations:
            break
    return Inference(result, log, errors, iteration)


# -- interoperability check --------------------------------------------------

@dataclass(frozen=True, order=True)
class VocabularyIssue:
    rule: str
    iri: IRI
    position: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.position} uses {self.iri.value}, unknown to the taxonomy"


def validate_ruleset_against_taxonomy(rules: RuleSet, tax: Taxonomy,
                                      extra_vocabulary: Iterable[IRI] = ()) -> list[VocabularyIssue]:
    """IRIs a rule consumes that neither the taxonomy nor the shape vocabulary defines.

    Body patterns must speak the unified vocabulary; heads may introduce new
    domain concepts but must use known predicates.
    """
    known = set(tax.entries) | vocab.BUILTIN_VOCABULARY | set(extra_vocabulary)
    issues = set()
    for rule in rules:
        for atom in rule.patterns:
            for pos, t in zip(("subject", "predicate", "object"), atom.terms()):
                if isinstance(t, IRI) and t not in known:
                    issues.add(VocabularyIssue(rule.name, t, "body " + pos))
        for atom in rule.head:
            if isinstance(atom.p, IRI) and atom.p not in known:
                issues.add(VocabularyIssue(rule.name, atom.p, "head predicate"))
    return sorted(issues)


def rule_iris(rules: RuleSet) -> set[IRI]:
    out = set()
    for rule in rules:
        for atom in list(rule.patterns) + list(rule.head):
            out |= {t for t in atom.terms() if isinstance(t, IRI)}
    return out


def format_rules(rules: RuleSet) -> str:
    """Rule text that parses back to an equal RuleSet (full IRIs, no prefixes)."""
    def term(t):
        if isinstance(t, Var):
            return str(t)
        if isinstance(t, Literal) and t.is_numeric and t.datatype in (XSD + "decimal", XSD + "integer"):
            return t.lexical
        return t.n3()

    lines = []
    for r in rules:
        body = " ".join(
            f"({term(a.s)} {term(a.p)} {term(a.o)})" if isinstance(a, TriplePattern)
            else f"{a.op}({', '.join(term(x) for x in a.args)})"
            for a in r.body
        )
        head = " ".join(f"({term(a.s)} {term(a.p)} {term(a.o)})" for a in r.head)
        lines.append(f"[{r.name}: {body} -> {head}]")
    return "\n".join(lines) + ("\n" if lines else "")
