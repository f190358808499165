import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m3engine import vocab
from m3engine.annotator import annotate, parse_readings
from m3engine.rdf import IRI, XSD, Graph, Literal, Triple, decimal_literal, isomorphic
from m3engine.reasoner import (Builtin, Rule, RuleSet, RuleSyntaxError, TriplePattern, UnsafeRuleError,
                               Var, apply_rules, parse_rules, validate_ruleset_against_taxonomy)
from oracles import RDF_TYPE, body_bindings, naive_closure, permute_rule, rule_graphs, rulesets

HEALTH = "http://example.org/health#"
WEATHER = "http://example.org/weather#"
EX = "http://example.org/t#"
FEVER = "[fever: (?o type m3x:BodyTemperature) (?o hasValue ?v) ge(?v, 38.0) -> (?o type health:Fever)]"


def rules_file(data_dir, name):
    return parse_rules((data_dir / "rules" / name).read_text())


def body_temp(value):
    obs = IRI(vocab.DATA + "obs")
    return obs, Graph([Triple(obs, RDF_TYPE, IRI(vocab.M3X + "BodyTemperature")),
                       Triple(obs, vocab.HAS_VALUE, decimal_literal(value))])


# -- parsing -----------------------------------------------------------------

def test_parse_fever_rule():
    rs = parse_rules("@prefix health: <http://example.org/health#> .\n" + FEVER)
    (rule,) = rs
    assert rule.name == "fever"
    assert rule.builtins == [Builtin("ge", (Var("v"), Literal("38.0", XSD + "decimal")))]
    assert rule.head == (TriplePattern(Var("o"), RDF_TYPE, IRI(HEALTH + "Fever")),)


def test_empty_file():
    assert len(parse_rules("")) == 0
    assert len(parse_rules("# only a comment\n")) == 0


def test_head_variable_must_be_bound():
    with pytest.raises(UnsafeRuleError) as info:
        parse_rules("[bad: (?o type m3x:BodyTemperature) -> (?x type m3x:Body)]")
    assert info.value.variable == "x"


def test_builtin_variable_must_be_bound_earlier():
    with pytest.raises(UnsafeRuleError):
        parse_rules("[bad: ge(?v, 1) (?o hasValue ?v) -> (?o type m3x:Body)]")


def test_syntax_error_has_line():
    with pytest.raises(RuleSyntaxError) as info:
        parse_rules("\n\n[broken: (?o type m3x:Body) ->]")
    assert info.value.line == 3


def test_duplicate_rule_names_rejected():
    with pytest.raises((RuleSyntaxError, ValueError)):
        parse_rules("[a: (?o type m3x:Body) -> (?o type m3x:Air)]\n[a: (?o type m3x:Air) -> (?o type m3x:Body)]")


def test_interval_bounds_checked():
    with pytest.raises((RuleSyntaxError, ValueError)):
        parse_rules("[a: (?o hasValue ?v) interval(?v, 5, 1) -> (?o type m3x:Body)]")


def test_unknown_prefix_rejected():
    with pytest.raises(RuleSyntaxError):
        parse_rules("[a: (?o type nope:X) -> (?o type m3x:Body)]")


# -- evaluation ------------------------------------------------------------------

def test_path_a_derives_fever(tax, data_dir):
    g = annotate(parse_readings((data_dir / "samples" / "path-a.csv").read_text()), tax)
    result, log = apply_rules(g, rules_file(data_dir, "health.rules"))
    fevers = list(result.match(None, RDF_TYPE, IRI(HEALTH + "Fever")))
    assert len(fevers) == 1
    assert [d.rule for d in log] == ["fever"]


def test_path_b_derives_hot(tax, data_dir):
    g = annotate(parse_readings((data_dir / "samples" / "path-b.csv").read_text()), tax)
    result, log = apply_rules(g, rules_file(data_dir, "weather.rules"))
    assert len(list(result.match(None, RDF_TYPE, IRI(WEATHER + "Hot")))) == 1
    assert "hot" in {d.rule for d in log}


@pytest.mark.parametrize("value, fever", [("38.0", True), ("37.99", False), ("38.7", True), ("35", False)])
def test_fever_threshold_is_inclusive(data_dir, value, fever):
    obs, g = body_temp(value)
    result, _ = apply_rules(g, rules_file(data_dir, "health.rules"))
    assert ((obs, RDF_TYPE, IRI(HEALTH + "Fever")) in result) is fever


def test_empty_ruleset_is_identity():
    obs, g = body_temp("38.7")
    result, log = apply_rules(g, RuleSet())
    assert isomorphic(result, g) and log == []


def test_input_graph_is_unchanged(data_dir):
    obs, g = body_temp("39")
    before = set(g)
    apply_rules(g, rules_file(data_dir, "health.rules"))
    assert set(g) == before


def test_chain():
    rs = parse_rules(f"""
        @prefix ex: <{EX}> .
        [one: (?x type ex:A) -> (?x type ex:B)]
        [two: (?x type ex:B) -> (?x type ex:C)]
    """)
    g = Graph([Triple(IRI(EX + "i"), RDF_TYPE, IRI(EX + "A"))])
    result, log = apply_rules(g, rs)
    assert {t.object for t in result} == {IRI(EX + c) for c in "ABC"}
    assert set(result) == naive_closure(g, rs)
    assert [d.iteration for d in log] == [1, 2]


def test_builtin_type_error_is_reported_once_and_evaluation_continues():
    rs = parse_rules(f"""
        @prefix ex: <{EX}> .
        [big: (?x ex:p ?v) greaterThan(?v, 3) -> (?x type ex:Big)]
    """)
    g = Graph([Triple(IRI(EX + "a"), IRI(EX + "p"), Literal("high")),
               Triple(IRI(EX + "b"), IRI(EX + "p"), Literal("low")),
               Triple(IRI(EX + "c"), IRI(EX + "p"), Literal("9", XSD + "integer"))])
    inference = apply_rules(g, rs)
    assert len(inference.errors) == 1
    assert (IRI(EX + "c"), RDF_TYPE, IRI(EX + "Big")) in inference.graph
    assert (IRI(EX + "a"), RDF_TYPE, IRI(EX + "Big")) not in inference.graph


def test_derivation_log_is_deterministic(tax, data_dir):
    g = annotate(parse_readings((data_dir / "samples" / "weather-station.csv").read_text()), tax)
    rs = rules_file(data_dir, "weather.rules")
    one = [d.to_json() for d in apply_rules(g, rs).derivations]
    two = [d.to_json() for d in apply_rules(g.copy(), rs).derivations]
    assert one == two and one


# -- properties over fuzzed instances ------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(rule_graphs, rulesets())
def test_semi_naive_equals_naive(g, rs):
    inference = apply_rules(Graph(g), rs)
    assert set(inference.graph) == naive_closure(g, rs)


@settings(max_examples=200, deadline=None)
@given(rule_graphs, rulesets(), st.randoms(use_true_random=False))
def test_rule_and_atom_order_do_not_matter(g, rs, rnd):
    def perm(n):
        idx = list(range(n))
        rnd.shuffle(idx)
        return idx
    shuffled = [permute_rule(r, perm, rnd) for r in rs]
    rnd.shuffle(shuffled)
    assert set(apply_rules(Graph(g), RuleSet(shuffled)).graph) == set(apply_rules(Graph(g), rs).graph)


@settings(max_examples=200, deadline=None)
@given(rule_graphs, rule_graphs, rulesets())
def test_monotone(g1, g2, rs):
    small = set(apply_rules(Graph(g1), rs).graph)
    big = set(apply_rules(Graph(g1 | g2), rs).graph)
    assert small <= big


@settings(max_examples=200, deadline=None)
@given(rule_graphs, rulesets())
def test_every_derivation_replays(g, rs):
    inference = apply_rules(Graph(g), rs)
    by_name = {r.name: r for r in rs}
    derived_at = {}
    for d in inference.derivations:
        for t in d.triples:
            assert t not in derived_at, "each derived triple is logged once"
            derived_at[t] = d.iteration
    assert set(derived_at) == set(inference.graph) - g
    for d in inference.derivations:
        before = g | {t for t, it in derived_at.items() if it < d.iteration}
        binding = {Var(name): term for name, term in d.bindings}
        rule = by_name[d.rule]
        matches = [b for b in body_bindings(rule, before)
                   if all(b.get(v) == term for v, term in binding.items())]
        assert matches, f"{d.rule} does not replay"


# -- interoperability check ------------------------------------------------------------

@pytest.mark.parametrize("name", ["health.rules", "weather.rules", "smarthome.rules"])
def test_shipped_rules_are_interoperable(tax, data_dir, name):
    assert validate_ruleset_against_taxonomy(rules_file(data_dir, name), tax) == []


def test_bogus_class_reported(tax):
    rs = parse_rules("[b: (?o type m3x:Bogus) (?o hasValue ?v) ge(?v, 1) -> (?o type m3x:Body)]")
    report = validate_ruleset_against_taxonomy(rs, tax)
    assert [i.iri for i in report] == [IRI(vocab.M3X + "Bogus")]


def test_empty_ruleset_report(tax):
    assert validate_ruleset_against_taxonomy(RuleSet(), tax) == []


def test_rule_constructor_enforces_range_restriction():
    with pytest.raises(UnsafeRuleError):
        Rule("r", [TriplePattern(Var("x"), RDF_TYPE, IRI(EX + "A"))],
             [TriplePattern(Var("y"), RDF_TYPE, IRI(EX + "B"))])


def test_transitive_closure_of_a_cycle():
    g = Graph(Triple(IRI(EX + f"n{i}"), IRI(EX + "p"), IRI(EX + f"n{(i + 1) % 20}")) for i in range(20))
    rs = parse_rules(f"""
        @prefix ex: <{EX}> .
        [t: (?x ex:p ?y) (?y ex:p ?z) -> (?x ex:p ?z)]
    """)
    result = apply_rules(g, rs)
    assert len(result.graph) == 400
