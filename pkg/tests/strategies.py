"""Hypothesis strategies shared by the property tests."""


from hypothesis import strategies as st

from m3engine.rdf import IRI, XSD, BNode, Graph, Literal, Triple

EX = "http://example.org/t#"

iris = st.sampled_from([IRI(EX + n) for n in ("a", "b", "c", "d", "e", "p", "q", "r")])
predicates = st.sampled_from([IRI(EX + n) for n in ("p", "q", "r")] + [IRI("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")])
bnodes = st.sampled_from([BNode(f"b{i}") for i in range(4)])

_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=8)
literals = st.one_of(
    _text.map(Literal),
    st.tuples(_text, st.sampled_from(["en", "fr", "en-GB"])).map(lambda x: Literal(x[0], lang=x[1])),
    st.integers(-1000, 1000).map(lambda i: Literal(str(i), XSD + "integer")),
    st.decimals(-1000, 1000, places=3).map(lambda d: Literal(str(d), XSD + "decimal")),
    st.booleans().map(lambda b: Literal("true" if b else "false", XSD + "boolean")),
    _text.map(lambda s: Literal(s, EX + "custom")),
)

subjects = st.one_of(iris, bnodes)
objects = st.one_of(iris, bnodes, literals)

triples = st.builds(Triple, subjects, predicates, objects)


def graphs(max_size=50, with_bnodes=True, with_literals=True):
    s = subjects if with_bnodes else iris
    o = st.one_of(*[x for x, keep in ((iris, True), (bnodes, with_bnodes), (literals, with_literals)) if keep])
    return st.lists(st.builds(Triple, s, predicates, o), max_size=max_size).map(Graph)


def _random_graph(rnd, size) -> Graph:
    pool_s = [IRI(EX + n) for n in "abcdepqr"] + [BNode(f"b{i}") for i in range(4)]
    pool_p = [IRI(EX + n) for n in "pqr"]
    g = Graph()
    while len(g) < size:
        kind = rnd.randrange(4)
        if kind == 0:
            o = Literal("".join(rnd.choice('ab "\\\n\u00e9') for _ in range(rnd.randrange(6))))
        elif kind == 1:
            o = Literal(str(rnd.randint(-999, 999)), XSD + "integer")
        else:
            o = rnd.choice(pool_s)
        g.add(Triple(rnd.choice(pool_s), rnd.choice(pool_p), o))
    return g


# hypothesis struggles to draw long lists, so big graphs come from a seeded generator
large_graphs = st.builds(_random_graph, st.randoms(use_true_random=False), st.integers(150, 200))

numbers = st.integers(0, 9).map(lambda i: Literal(str(i), XSD + "integer"))

RDF_TYPE = IRI("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")

# -- query fuzzing -----------------------------------------------------------------

Q_SUBJ = ["ex:a", "ex:b", "ex:c", "ex:d"]
Q_PRED = ["ex:p", "ex:q", "a"]
Q_VARS = ["?x", "?y", "?z"]

graph_triples = st.builds(
    Triple,
    st.sampled_from([IRI(EX + n) for n in "abcd"]),
    st.sampled_from([IRI(EX + "p"), IRI(EX + "q"), RDF_TYPE]),
    st.one_of(st.sampled_from([IRI(EX + n) for n in "abcd"]), numbers, st.just(Literal("s"))),
)
small_graphs = st.lists(graph_triples, max_size=40)


@st.composite
def filter_expr(draw, variables, depth=0):
    if depth < 2 and draw(st.integers(0, 3)) == 0:
        op = draw(st.sampled_from(["&&", "||"]))
        return f"({draw(filter_expr(variables, depth + 1))} {op} {draw(filter_expr(variables, depth + 1))})"
    left = draw(st.sampled_from(variables))
    right = draw(st.one_of(st.sampled_from(variables), st.integers(0, 9).map(str),
                           st.sampled_from(["ex:a", '"s"'])))
    op = draw(st.sampled_from(["=", "!=", "<", ">", "<=", ">="]))
    return f"{left} {op} {right}"


@st.composite
def queries(draw, allow_modifiers=False):
    n = draw(st.integers(1, 4))
    pats = []
    for _ in range(n):
        s = draw(st.sampled_from(Q_VARS + Q_SUBJ))
        p = draw(st.sampled_from(Q_PRED + Q_VARS[:1]))
        o = draw(st.sampled_from(Q_VARS + Q_SUBJ + ["3", '"s"']))
        pats.append(f"{s} {p} {o} .")
    used = sorted({t for pat in pats for t in pat.split() if t.startswith("?")})
    if not used:  # replace rather than append: at most four patterns
        pats[-1] = "?x ex:p ?y ."
        used = ["?x", "?y"]
    filters = [f"FILTER({draw(filter_expr(used))})" for _ in range(draw(st.integers(0, 2)))]
    select = "*" if draw(st.booleans()) else " ".join(draw(st.lists(st.sampled_from(used), min_size=1,
                                                                     max_size=3, unique=True)))
    distinct = "DISTINCT " if draw(st.booleans()) else ""
    text = f"PREFIX ex: <{EX}>\nSELECT {distinct}{select} WHERE {{ {' '.join(pats + filters)} }}"
    if allow_modifiers:
        if draw(st.booleans()):
            text += f" ORDER BY {draw(st.sampled_from(['', 'DESC', 'ASC']))}({draw(st.sampled_from(used))})"
        if draw(st.booleans()):
            text += f" LIMIT {draw(st.integers(0, 5))}"
    return text
