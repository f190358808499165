"""A small SPARQL subset: SELECT over basic graph patterns with FILTER.

Supported: ``PREFIX``, ``SELECT [DISTINCT] ?v ... | *``, ``WHERE { ... }`` with
triple patterns (``a``, ``;`` and ``,`` allowed), ``FILTER`` over comparisons
joined by ``&&``/``||``, ``ORDER BY`` a single variable (optionally ``ASC``/``DESC``)
and ``LIMIT``.  Any other SPARQL feature raises UnsupportedFeature.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .rdf import (IRI, RDF, XSD, BNode, Graph, Literal, Term, TurtleSyntaxError,
                  _unescape, term_sort_key)
from .reasoner import TriplePattern, Var


class QueryError(Exception):
    pass


class QuerySyntaxError(QueryError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class UnsupportedFeature(QueryError):
    def __init__(self, name: str, line: int = 0):
        super().__init__(f"unsupported SPARQL feature: {name}" + (f" (line {line})" if line else ""))
        self.name = name
        self.line = line


class TypeErrorInFilter(QueryError):
    pass


_UNSUPPORTED_KEYWORDS = {
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "EXISTS",
    "NOT", "GROUP", "HAVING", "OFFSET", "CONSTRUCT", "ASK", "DESCRIBE", "FROM",
    "NAMED", "INSERT", "DELETE", "LOAD", "CLEAR", "DROP", "CREATE", "BASE",
    "REDUCED", "AS", "COUNT", "SUM", "MIN", "MAX", "AVG", "SAMPLE", "GROUP_CONCAT",
    "REGEX", "STR", "LANG", "DATATYPE", "BOUND", "IF", "COALESCE", "IN",
}

_TOKENS = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"#[^\n]*"),
    ("IRIREF", r"<[A-Za-z][A-Za-z0-9+.\-]*:[^<>\"{}|^`\\\x00-\x20]*>"),
    ("STRING", r'"(?:[^"\\\n\r]|\\.)*"'),
    ("LANGTAG", r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*"),
    ("DTYPE", r"\^\^"),
    ("VAR", r"[?$][A-Za-z_][A-Za-z0-9_]*"),
    ("NUMBER", r"[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+)"),
    ("BNODE", r"_:[A-Za-z0-9_]+"),
    ("PNAME", r"(?:[A-Za-z][A-Za-z0-9_\-]*(?:\.[A-Za-z0-9_\-]+)*)?:(?:[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?)?"),
    ("KEYWORD", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("OP", r"&&|\|\||<=|>=|!=|=|<|>|!|/|\||\^|\+"),
    ("PUNCT", r"[{}().;,*\[\]]"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKENS))


# -- filter expressions ------------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    op: str
    left: Union[Var, Term]
    right: Union[Var, Term]

    def variables(self) -> set:
        return {x for x in (self.left, self.right) if isinstance(x, Var)}


@dataclass(frozen=True)
class BoolOp:
    op: str  # "&&" or "||"
    operands: tuple

    def variables(self) -> set:
        out = set()
        for o in self.operands:
            out |= o.variables()
        return out


@dataclass(frozen=True)
class Constant:
    value: bool

    def variables(self) -> set:
        return set()


Expression = Union[Comparison, BoolOp, Constant]


def _numeric(term):
    return term.numeric_value() if isinstance(term, Literal) else None


def evaluate_filter(expr: Expression, binding: dict) -> bool:
    """Evaluate with SPARQL error semantics; raises TypeErrorInFilter."""
    if isinstance(expr, Constant):
        return expr.value
    if isinstance(expr, Comparison):
        left = binding[expr.left] if isinstance(expr.left, Var) else expr.left
        right = binding[expr.right] if isinstance(expr.right, Var) else expr.right
        lv, rv = _numeric(left), _numeric(right)
        if lv is not None and rv is not None:
            return {"=": lv == rv, "!=": lv != rv, "<": lv < rv, ">": lv > rv,
                    "<=": lv <= rv, ">=": lv >= rv}[expr.op]
        if expr.op == "=":
            return left == right
        if expr.op == "!=":
            return left != right
        raise TypeErrorInFilter(f"cannot compare {left.n3()} {expr.op} {right.n3()}")
    error = None
    for operand in expr.operands:
        try:
            value = evaluate_filter(operand, binding)
        except TypeErrorInFilter as exc:
            error = exc
            continue
        if expr.op == "||" and value:
            return True
        if expr.op == "&&" and not value:
            return False
    if error is not None:
        raise error
    return expr.op == "&&"


# -- query model -------------------------------------------------------------

@dataclass(frozen=True)
class Query:
    select: Optional[tuple]  # None means SELECT *
    patterns: tuple
    filters: tuple = ()
    distinct: bool = False
    order_by: Optional[Var] = None
    descending: bool = False
    limit: Optional[int] = None
    prefixes: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def variables(self) -> tuple:
        """Projected variables in output order."""
        if self.select is not None:
            return self.select
        seen = []
        for p in self.patterns:
            for t in p.terms():
                if isinstance(t, Var) and t not in seen:
                    seen.append(t)
        return tuple(seen)

    def pattern_variables(self) -> set:
        out = set()
        for p in self.patterns:
            out |= p.variables()
        return out


@dataclass
class SolutionSet:
    vars: tuple  # variable names, without "?"
    rows: list   # tuples of Term, one per variable
    diagnostics: dict = field(default_factory=lambda: {"filter_type_errors": 0})

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def as_dicts(self) -> list[dict]:
        return [dict(zip(self.vars, row)) for row in self.rows]

    def column(self, name: str) -> list:
        i = self.vars.index(name)
        return [row[i] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.vars)
        for row in self.rows:
            writer.writerow([t.n3() for t in row])
        return buf.getvalue()

    def to_json(self) -> str:
        def encode(term):
            if isinstance(term, IRI):
                return {"type": "uri", "value": term.value}
            if isinstance(term, BNode):
                return {"type": "bnode", "value": term.label}
            out = {"type": "literal", "value": term.lexical}
            if term.lang is not None:
                out["xml:lang"] = term.lang
            elif term.datatype != XSD + "string":
                out["datatype"] = term.datatype
            return out

        doc = {
            "head": {"vars": list(self.vars)},
            "results": {"bindings": [
                {v: encode(t) for v, t in zip(self.vars, row)} for row in self.rows
            ]},
        }
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"

    def serialize(self, format: str) -> str:
        if format == "csv":
            return self.to_csv()
        if format == "json":
            return self.to_json()
        raise ValueError(f"unknown result format {format!r}")


# -- parser ------------------------------------------------------------------

class _QueryParser:
    def __init__(self, text: str):
        self.tokens = []
        pos, line = 0, 1
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise QuerySyntaxError(line, f"unexpected character {text[pos]!r}")
            if m.lastgroup not in ("WS", "COMMENT"):
                self.tokens.append((m.lastgroup, m.group(), line))
            line += m.group().count("\n")
            pos = m.end()
        self.pos = 0
        self.prefixes: dict[str, str] = {}

    def peek(self, offset: int = 0):
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError(self.tokens[-1][2] if self.tokens else 1, "unexpected end of query")
        self.pos += 1
        self._reject(tok)
        return tok

    @staticmethod
    def _reject(tok):
        kind, text, line = tok
        if kind == "KEYWORD" and text.upper() in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(text.upper(), line)

    def is_keyword(self, word: str, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok is not None and tok[0] == "KEYWORD" and tok[1].upper() == word

    def expect(self, text: str):
        tok = self.next()
        if tok[1] != text and tok[1].upper() != text:
            raise QuerySyntaxError(tok[2], f"expected {text!r}, found {tok[1]!r}")
        return tok

    def parse(self) -> Query:
        while self.is_keyword("PREFIX"):
            self.next()
            kind, text, line = self.next()
            if kind != "PNAME" or not text.endswith(":") or text.count(":") != 1:
                raise QuerySyntaxError(line, "expected prefix name after PREFIX")
            ikind, itext, iline = self.next()
            if ikind != "IRIREF":
                raise QuerySyntaxError(iline, "expected <namespace IRI> after prefix name")
            self.prefixes[text[:-1]] = itext[1:-1]
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError(1, "empty query")
        self._reject(tok)
        if not self.is_keyword("SELECT"):
            raise QuerySyntaxError(tok[2], f"expected SELECT, found {tok[1]!r}")
        self.next()
        distinct = False
        if self.is_keyword("DISTINCT"):
            self.next()
            distinct = True
        select: Optional[list] = []
        tok = self.peek()
        if tok is not None and tok[1] == "*":
            self.next()
            select = None
        else:
            while self.peek() is not None and self.peek()[0] == "VAR":
                select.append(Var(self.next()[1][1:]))
            if not select:
                tok = self.peek()
                if tok is not None:
                    self._reject(tok)
                    if tok[1] == "(":
                        raise UnsupportedFeature("projection expression", tok[2])
                raise QuerySyntaxError(tok[2] if tok else 1, "SELECT needs variables or *")
        if self.is_keyword("WHERE"):
            self.next()
        patterns, filters = self._group()
        order_by, descending, limit = None, False, None
        if self.is_keyword("ORDER"):
            self.next()
            self.expect("BY")
            tok = self.next()
            if tok[0] == "KEYWORD" and tok[1].upper() in ("ASC", "DESC"):
                descending = tok[1].upper() == "DESC"
                self.expect("(")
                vtok = self.next()
                self.expect(")")
            elif tok[1] == "(":
                vtok = self.next()
                self.expect(")")
            else:
                vtok = tok
            if vtok[0] != "VAR":
                raise UnsupportedFeature("ORDER BY expression", vtok[2])
            order_by = Var(vtok[1][1:])
            nxt = self.peek()
            if nxt is not None and (nxt[0] == "VAR" or (nxt[0] == "KEYWORD" and nxt[1].upper() in ("ASC", "DESC"))):
                raise UnsupportedFeature("ORDER BY with several keys", nxt[2])
        if self.is_keyword("LIMIT"):
            self.next()
            kind, text, line = self.next()
            if kind != "NUMBER" or not text.isdigit():
                raise QuerySyntaxError(line, "LIMIT needs a non-negative integer")
            limit = int(text)
        tok = self.peek()
        if tok is not None:
            self._reject(tok)
            raise QuerySyntaxError(tok[2], f"unexpected {tok[1]!r} after query")

        query = Query(
            select=tuple(select) if select is not None else None,
            patterns=tuple(patterns),
            filters=tuple(filters),
            distinct=distinct,
            order_by=order_by,
            descending=descending,
            limit=limit,
            prefixes=dict(self.prefixes),
        )
        bound = query.pattern_variables()
        used = set(query.select or ())
        for f in filters:
            used |= f.variables()
        if order_by is not None:
            used.add(order_by)
        missing = sorted(v.name for v in used - bound)
        if missing:
            raise QuerySyntaxError(1, f"variables not used in any triple pattern: {', '.join('?' + m for m in missing)}")
        return query

    def _group(self):
        self.expect("{")
        patterns, filters = [], []
        while True:
            tok = self.peek()
            if tok is None:
                raise QuerySyntaxError(self.tokens[-1][2], "unterminated group pattern")
            self._reject(tok)
            kind, text, line = tok
            if text == "}":
                self.next()
                return patterns, filters
            if text == "{":
                raise UnsupportedFeature("nested group pattern", line)
            if text == ".":
                self.next()
                continue
            if kind == "KEYWORD" and text.upper() == "FILTER":
                self.next()
                self.expect("(")
                filters.append(self._or())
                self.expect(")")
                continue
            subject = self._term("subject")
            while True:
                predicate = self._term("predicate")
                self._check_path()
                while True:
                    obj = self._term("object")
                    patterns.append(TriplePattern(subject, predicate, obj))
                    if self.peek() is not None and self.peek()[1] == ",":
                        self.next()
                        continue
                    break
                if self.peek() is not None and self.peek()[1] == ";":
                    while self.peek() is not None and self.peek()[1] == ";":
                        self.next()
                    if self.peek() is not None and self.peek()[1] in (".", "}"):
                        break
                    continue
                break

    def _check_path(self):
        tok = self.peek()
        if tok is not None and tok[0] == "OP" and tok[1] in ("/", "|", "^", "+") or (tok and tok[1] == "*"):
            raise UnsupportedFeature("property path", tok[2])

    def _term(self, position: str):
        tok = self.next()
        kind, text, line = tok
        if kind == "VAR":
            return Var(text[1:])
        if kind == "IRIREF":
            return IRI(text[1:-1])
        if kind == "PNAME":
            prefix, _, local = text.partition(":")
            if prefix not in self.prefixes:
                raise QuerySyntaxError(line, f"undeclared prefix {prefix!r}")
            try:
                return IRI(self.prefixes[prefix] + local)
            except ValueError as exc:
                raise QuerySyntaxError(line, str(exc)) from None
        if kind == "KEYWORD" and text == "a" and position == "predicate":
            return IRI(RDF + "type")
        if kind == "BNODE" or text == "[":
            raise UnsupportedFeature("blank node in pattern", line)
        if kind == "OP" and text == "^" and position == "predicate":
            raise UnsupportedFeature("property path", line)
        if position == "object" or position == "expression":
            literal = self._literal(tok)
            if literal is not None:
                return literal
        raise QuerySyntaxError(line, f"unexpected {text!r} in {position} position")

    def _literal(self, tok) -> Optional[Literal]:
        kind, text, line = tok
        if kind == "NUMBER":
            if "e" in text or "E" in text:
                return Literal(text, XSD + "double")
            return Literal(text, XSD + ("decimal" if "." in text else "integer"))
        if kind == "KEYWORD" and text in ("true", "false"):
            return Literal(text, XSD + "boolean")
        if kind == "STRING":
            try:
                lexical = _unescape(text[1:-1], line, 0)
            except TurtleSyntaxError as exc:
                raise QuerySyntaxError(line, exc.message) from None
            nxt = self.peek()
            if nxt is not None and nxt[0] == "LANGTAG":
                self.next()
                return Literal(lexical, lang=nxt[1][1:])
            if nxt is not None and nxt[0] == "DTYPE":
                self.next()
                dt = self._term("datatype")
                return Literal(lexical, dt.value)
            return Literal(lexical)
        return None

    def _or(self) -> Expression:
        operands = [self._and()]
        while self.peek() is not None and self.peek()[1] == "||":
            self.next()
            operands.append(self._and())
        return operands[0] if len(operands) == 1 else BoolOp("||", tuple(operands))

    def _and(self) -> Expression:
        operands = [self._relation()]
        while self.peek() is not None and self.peek()[1] == "&&":
            self.next()
            operands.append(self._relation())
        return operands[0] if len(operands) == 1 else BoolOp("&&", tuple(operands))

    def _relation(self) -> Expression:
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError(self.tokens[-1][2], "unterminated FILTER")
        if tok[1] == "(":
            self.next()
            inner = self._or()
            self.expect(")")
            return inner
        if tok[1] == "!":
            raise UnsupportedFeature("negation in FILTER", tok[2])
        if tok[0] == "KEYWORD" and tok[1] in ("true", "false") and not self._is_comparison_op(self.peek(1)):
            self.next()
            return Constant(tok[1] == "true")
        left = self._operand()
        op_tok = self.next()
        if not self._is_comparison_op(op_tok):
            raise QuerySyntaxError(op_tok[2], f"expected comparison operator, found {op_tok[1]!r}")
        right = self._operand()
        return Comparison(op_tok[1], left, right)

    @staticmethod
    def _is_comparison_op(tok) -> bool:
        return tok is not None and tok[0] == "OP" and tok[1] in ("=", "!=", "<", ">", "<=", ">=")

    def _operand(self):
        tok = self.peek()
        if tok is not None and tok[0] == "KEYWORD" and tok[1] not in ("true", "false"):
            self._reject(tok)
            raise UnsupportedFeature(f"function {tok[1]}", tok[2])
        return self._term("expression")


def parse_query(text: str) -> Query:
    return _QueryParser(text).parse()


# -- evaluation --------------------------------------------------------------

def _row_key(row: tuple) -> tuple:
    return tuple(t.n3() for t in row)


def _order_key(term: Term) -> tuple:
    if isinstance(term, BNode):
        return (0, 0, term.label)
    if isinstance(term, IRI):
        return (1, 0, term.value)
    value = term.numeric_value()
    if value is not None:
        return (2, value, term.lexical)
    return (3, 0, term_sort_key(term))


def _estimate(graph: Graph, pattern: TriplePattern, bound: set) -> float:
    consts = [t if not isinstance(t, Var) else None for t in pattern.terms()]
    if isinstance(consts[0], Literal) or (consts[1] is not None and not isinstance(consts[1], IRI)):
        return 0.0
    n = graph.count(*consts)
    n_bound = sum(1 for t in pattern.terms() if isinstance(t, Var) and t in bound)
    return n / (10 ** n_bound)


def plan(query: Query, graph: Graph) -> list[int]:
    """Greedy join order: cheapest connected pattern first, by index counts."""
    remaining = list(range(len(query.patterns)))
    bound: set = set()
    order = []
    while remaining:
        connected = [i for i in remaining if query.patterns[i].variables() & bound]
        pool = connected or remaining
        best = min(pool, key=lambda i: (_estimate(graph, query.patterns[i], bound), i))
        order.append(best)
        remaining.remove(best)
        bound |= query.patterns[best].variables()
    return order


def execute(query: Query, graph: Graph) -> SolutionSet:
    """Evaluate ``query``; rows are deterministic (ORDER BY, then row text)."""
    order = plan(query, graph)
    patterns = [query.patterns[i] for i in order]
    # filters run on complete solutions so the error tally counts dropped rows
    attach: list[list] = [[] for _ in patterns] + [list(query.filters)]
    diagnostics = {"filter_type_errors": 0}

    def passes(filters, binding) -> bool:
        for f in filters:
            try:
                if not evaluate_filter(f, binding):
                    return False
            except TypeErrorInFilter:
                diagnostics["filter_type_errors"] += 1
                return False
        return True

    solutions = []

    def walk(step: int, binding: dict):
        if not passes(attach[step], binding):
            return
        if step == len(patterns):
            solutions.append(binding)
            return
        pattern = patterns[step]
        s, p, o = (binding.get(t) if isinstance(t, Var) else t for t in pattern.terms())
        if isinstance(s, Literal) or (p is not None and not isinstance(p, IRI)):
            return
        for triple in graph.match(s, p, o):
            extended = dict(binding)
            ok = True
            for pt, value in zip(pattern.terms(), triple):
                if isinstance(pt, Var):
                    if extended.setdefault(pt, value) != value:
                        ok = False
                        break
            if ok:
                walk(step + 1, extended)

    walk(0, {})
    variables = query.variables
    rows = [tuple(b[v] for v in variables) for b in solutions]
    if query.distinct:
        rows = list(set(rows))
    rows.sort(key=_row_key)
    if query.order_by is not None:
        key_var = query.order_by
        if key_var in variables:
            idx = variables.index(key_var)
            rows.sort(key=lambda r: _order_key(r[idx]), reverse=query.descending)
        else:
            # ordering by a non-projected variable: sort the full solutions first
            keyed = sorted(
                ((tuple(b[v] for v in variables), b[key_var]) for b in solutions),
                key=lambda rb: _row_key(rb[0]),
            )
            keyed.sort(key=lambda rb: _order_key(rb[1]), reverse=query.descending)
            rows = []
            seen = set()
            for row, _ in keyed:
                if query.distinct and row in seen:
                    continue
                seen.add(row)
                rows.append(row)
    if query.limit is not None:
        rows = rows[: query.limit]
    return SolutionSet(tuple(v.name for v in variables), rows, diagnostics)


def run_query(text: str, graph: Graph) -> SolutionSet:
    return execute(parse_query(text), graph)
