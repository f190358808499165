"""Brute-force reference implementations used as test oracles.

Each oracle is deliberately naive: no indexes, no join ordering, no deltas.
"""

import itertools

from hypothesis import strategies as st

from m3engine.rdf import IRI, Literal, Triple
from m3engine.reasoner import Builtin, Rule, RuleSet, TriplePattern, Var
from strategies import EX, numbers

RDF_TYPE = IRI("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")

# -- reasoning ---------------------------------------------------------------------

_CMP = {
    "greaterThan": lambda a, b: a > b,
    "lessThan": lambda a, b: a < b,
    "ge": lambda a, b: a >= b,
    "le": lambda a, b: a <= b,
    "equal": lambda a, b: a == b,
    "notEqual": lambda a, b: a != b,
}


def _subst(term, b):
    return b[term] if isinstance(term, Var) else term


def _builtin_holds(atom: Builtin, b: dict) -> bool:
    values = []
    for a in atom.args:
        t = _subst(a, b)
        v = t.numeric_value() if isinstance(t, Literal) else None
        if v is None:
            return False
        values.append(v)
    if atom.op == "interval":
        return values[1] <= values[0] <= values[2]
    return _CMP[atom.op](values[0], values[1])


def body_bindings(rule: Rule, triples: set):
    """Body bindings by scanning every triple for every pattern, in written order."""
    patterns = [a for a in rule.body if isinstance(a, TriplePattern)]
    builtins = [a for a in rule.body if isinstance(a, Builtin)]
    triples = list(triples)

    def walk(i, b):
        if i == len(patterns):
            if all(_builtin_holds(x, b) for x in builtins):
                yield b
            return
        for t in triples:
            ext = dict(b)
            ok = True
            for pt, value in zip(patterns[i].terms(), t):
                if isinstance(pt, Var):
                    if ext.setdefault(pt, value) != value:
                        ok = False
                elif pt != value:
                    ok = False
            if ok:
                yield from walk(i + 1, ext)

    yield from walk(0, {})


def fire(rule: Rule, b: dict):
    out = []
    for h in rule.head:
        s, p, o = (_subst(t, b) for t in h.terms())
        if isinstance(s, Literal) or not isinstance(p, IRI):
            return []
        out.append(Triple(s, p, o))
    return out


def naive_closure(triples, rules) -> set:
    """Apply every rule to the whole graph until nothing changes."""
    current = set(triples)
    while True:
        new = set()
        for r in rules:
            for b in body_bindings(r, current):
                new.update(fire(r, b))
        if new <= current:
            return current
        current |= new


# -- rule fuzzing -----------------------------------------------------------------------

VARS = [Var("x"), Var("y"), Var("z")]
R_IRIS = [IRI(EX + n) for n in ("a", "b", "c")]
R_PREDS = [IRI(EX + n) for n in ("p", "q", "r")] + [RDF_TYPE]
R_LITS = [Literal(str(i), "http://www.w3.org/2001/XMLSchema#integer") for i in (1, 3, 5, 7)] + [Literal("s")]
R_OPS = ["greaterThan", "lessThan", "ge", "le", "equal", "notEqual", "interval"]

rule_graph_triples = st.builds(
    Triple,
    st.sampled_from(R_IRIS),
    st.sampled_from(R_PREDS),
    st.one_of(st.sampled_from(R_IRIS), st.sampled_from(R_LITS), numbers),
)
rule_graphs = st.lists(rule_graph_triples, max_size=50).map(set)


@st.composite
def rules(draw, name):
    n = draw(st.integers(1, 3))
    pats = []
    for _ in range(n):
        s = draw(st.sampled_from(VARS + R_IRIS))
        p = draw(st.sampled_from(R_PREDS + VARS[:1]))
        o = draw(st.sampled_from(VARS + R_IRIS + R_LITS))
        pats.append(TriplePattern(s, p, o))
    bound = sorted({v for p in pats for v in p.variables()}, key=lambda v: v.name)
    body = list(pats)
    if bound and draw(st.booleans()):
        v = draw(st.sampled_from(bound))
        op = draw(st.sampled_from(R_OPS))
        if op == "interval":
            lo = draw(st.integers(0, 5))
            hi = lo + draw(st.integers(0, 4))
            args = (v, numbers_lit(lo), numbers_lit(hi))
        else:
            other = draw(st.one_of(st.sampled_from(bound), st.integers(0, 9).map(numbers_lit)))
            args = (v, other)
        body.append(Builtin(op, args))
    heads = []
    for _ in range(draw(st.integers(1, 2))):
        s = draw(st.sampled_from(bound + R_IRIS)) if bound else draw(st.sampled_from(R_IRIS))
        p = draw(st.sampled_from(R_PREDS))
        o = draw(st.sampled_from(bound + R_IRIS)) if bound else draw(st.sampled_from(R_IRIS))
        heads.append(TriplePattern(s, p, o))
    return Rule(name, body, heads)


def numbers_lit(i):
    return Literal(str(i), "http://www.w3.org/2001/XMLSchema#integer")


@st.composite
def rulesets(draw, max_rules=10):
    n = draw(st.integers(0, max_rules))
    return RuleSet([draw(rules(f"r{i}")) for i in range(n)])


def permute_rule(rule: Rule, perm_patterns, rnd) -> Rule:
    """Reorder body patterns, then append built-ins in shuffled order (always safe)."""
    pats = [a for a in rule.body if isinstance(a, TriplePattern)]
    builtins = [a for a in rule.body if isinstance(a, Builtin)]
    rnd.shuffle(builtins)
    return Rule(rule.name, [pats[i] for i in perm_patterns(len(pats))] + builtins, rule.head)


# -- query ------------------------------------------------------------------------------

ERROR = object()


def _value(term):
    return term.numeric_value() if isinstance(term, Literal) else None


def filter_value(expr, b):
    """Three-valued filter result: True, False or ERROR."""
    from m3engine.query import BoolOp, Comparison, Constant
    if isinstance(expr, Constant):
        return expr.value
    if isinstance(expr, Comparison):
        left, right = _subst(expr.left, b), _subst(expr.right, b)
        lv, rv = _value(left), _value(right)
        if lv is not None and rv is not None:
            return {"=": lv == rv, "!=": lv != rv, "<": lv < rv, ">": lv > rv,
                    "<=": lv <= rv, ">=": lv >= rv}[expr.op]
        if expr.op in ("=", "!="):
            return (left == right) == (expr.op == "=")
        return ERROR
    assert isinstance(expr, BoolOp)
    values = [filter_value(o, b) for o in expr.operands]
    decisive = expr.op == "||"
    if decisive in values:
        return decisive
    if ERROR in values:
        return ERROR
    return not decisive


def exhaustive_select(query, triples):
    """Counter of projected rows and the filter error tally, by trying every assignment."""
    from collections import Counter
    terms = sorted({x for t in triples for x in t}, key=lambda t: t.n3())
    pvars = sorted(query.pattern_variables(), key=lambda v: v.name)
    tset = set(triples)
    rows, errors = Counter(), 0
    for values in itertools.product(terms, repeat=len(pvars)):
        b = dict(zip(pvars, values))
        ok = True
        for p in query.patterns:
            try:
                ok = Triple(*(_subst(x, b) for x in p.terms())) in tset
            except ValueError:
                ok = False
            if not ok:
                break
        if not ok:
            continue
        verdicts = [filter_value(f, b) for f in query.filters]
        first_bad = next((v for v in verdicts if v is not True), True)
        if first_bad is ERROR:
            errors += 1
        elif first_bad is True:
            rows[tuple(b[v] for v in query.variables)] += 1
    return rows, errors


def pruned_select(query, triples):
    """Like ``exhaustive_select`` but drops a partial assignment once a fully bound pattern fails.

    Still enumerates the whole term universe per variable; used where the
    universe is too large for the plain product.
    """
    from collections import Counter
    terms = sorted({x for t in triples for x in t}, key=lambda t: t.n3())
    pvars = sorted(query.pattern_variables(), key=lambda v: v.name)
    tset = set(triples)
    rows, errors = Counter(), 0

    def holds(p, b):
        try:
            return Triple(*(_subst(x, b) for x in p.terms())) in tset
        except ValueError:
            return False

    def ready(p, bound):
        return all(not isinstance(x, type(pvars[0])) or x in bound for x in p.terms()) if pvars else True

    def walk(i, b):
        nonlocal errors
        if i == len(pvars):
            if not all(holds(p, b) for p in query.patterns):
                return
            verdicts = [filter_value(f, b) for f in query.filters]
            first_bad = next((v for v in verdicts if v is not True), True)
            if first_bad is ERROR:
                errors += 1
            elif first_bad is True:
                rows[tuple(b[v] for v in query.variables)] += 1
            return
        for term in terms:
            ext = dict(b)
            ext[pvars[i]] = term
            if all(holds(p, ext) for p in query.patterns if ready(p, ext) and not ready(p, b)):
                walk(i + 1, ext)

    walk(0, {})
    return rows, errors
