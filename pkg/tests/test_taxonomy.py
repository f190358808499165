import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m3engine import vocab
from m3engine.rdf import IRI, Graph, parse_turtle
from m3engine.taxonomy import (AmbiguousTerm, Kind, TaxonomyError, UnificationContext, UnknownTerm,
                               load_taxonomy, normalize_label, taxonomy_triples)

M3X = vocab.M3X
HEALTH, WEATHER = IRI(M3X + "Health"), IRI(M3X + "Weather")
BODY = IRI(M3X + "Body")

HEAD = """
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
@prefix skos: <http://www.w3.org/2004/02/skos/core#> .
@prefix ssn: <http://www.w3.org/ns/ssn/> .
@prefix m3: <http://example.org/m3#> .
@prefix m3x: <http://example.org/m3/taxonomy#> .
m3x:Health a m3:Domain ; rdfs:subClassOf m3:Domain ; skos:prefLabel "health" .
"""


def reasons(text):
    with pytest.raises(TaxonomyError) as info:
        load_taxonomy(parse_turtle(HEAD + text))
    return info.value.reasons


def test_entry_count_matches_hand_audit(tax):
    # 5 domains, 5 features, 8 units, 11 measurement types, 10 sensor types
    assert len(tax) == 39
    counts = {k: len(tax.of_kind(k)) for k in Kind}
    assert counts == {Kind.DOMAIN: 5, Kind.FEATURE: 5, Kind.UNIT: 8,
                      Kind.MEASUREMENT_TYPE: 11, Kind.SENSOR_TYPE: 10}
    assert tax.version == "m3-lite-mini 1.0"


def test_empty_graph_gives_empty_taxonomy():
    assert len(load_taxonomy(Graph())) == 0


def test_loading_is_idempotent(tax):
    again = load_taxonomy(tax.source)
    assert again.entries == tax.entries
    assert again.lookup == tax.lookup


def test_entries_round_trip_through_triples(tax):
    g = Graph(t for e in tax.entries.values() for t in taxonomy_triples(e))
    assert load_taxonomy(g).entries == tax.entries


def test_lookup_is_inverse_of_labels(tax):
    inverse = {}
    for e in tax.entries.values():
        for label in e.all_labels():
            inverse.setdefault(normalize_label(label), set()).add(e.canonical)
    assert {k: set(v) for k, v in tax.lookup.items()} == inverse


@pytest.mark.parametrize("raw, expected", [
    ("Rainfall-Sensor", "rainfall sensor"),
    ("sensor rainfall", "rainfall sensor"),
    ("  Body   TEMP ", "body temp"),
    ("", ""),
])
def test_normalize_label(raw, expected):
    assert normalize_label(raw) == expected


@given(st.text())
def test_normalize_is_idempotent(raw):
    assert normalize_label(normalize_label(raw)) == normalize_label(raw)


@given(st.lists(st.sampled_from(["rain", "fall", "sensor", "body", "temp"]), min_size=1, max_size=4),
       st.randoms())
def test_normalize_ignores_token_order(tokens, rnd):
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    assert normalize_label(" ".join(tokens)) == normalize_label("-".join(shuffled))


def test_rainfall_and_precipitation_unify_identically(tax):
    ctx = UnificationContext(domain=WEATHER)
    a = tax.unify("rainfall sensor", Kind.SENSOR_TYPE, ctx)
    assert a == tax.unify("precipitation sensor", Kind.SENSOR_TYPE, ctx)
    assert a == IRI(M3X + "PrecipitationSensor")


def test_temperature_depends_on_context(tax):
    health_body = UnificationContext(domain=HEALTH, feature=BODY)
    assert tax.unify("temperature", Kind.MEASUREMENT_TYPE, health_body) == IRI(M3X + "BodyTemperature")
    assert tax.unify("temperature", Kind.MEASUREMENT_TYPE, UnificationContext(domain=WEATHER)) == IRI(
        M3X + "AirTemperature")


def test_ambiguity_is_an_error_not_a_guess(tax):
    with pytest.raises(AmbiguousTerm) as info:
        tax.unify("temperature", Kind.MEASUREMENT_TYPE)
    assert len(info.value.candidates) == 4


def test_unknown_term(tax):
    with pytest.raises(UnknownTerm):
        tax.unify("flux capacitor", Kind.SENSOR_TYPE)
    with pytest.raises(UnknownTerm):
        tax.unify("thermometer", Kind.UNIT)


def test_preferred_label_is_idempotent(tax):
    for e in tax.entries.values():
        ctx = UnificationContext(domain=e.domains[0] if e.domains else None)
        assert tax.unify(e.preferred_label, e.kind, ctx) == e.canonical


def test_thermometer_in_health_is_the_body_thermometer(tax):
    ctx = UnificationContext(domain=HEALTH)
    assert tax.unify("thermometer", Kind.SENSOR_TYPE, ctx) == IRI(M3X + "BodyThermometer")
    assert tax.unify("thermometer", Kind.SENSOR_TYPE, UnificationContext(domain=WEATHER)) == IRI(
        M3X + "Thermometer")


@settings(max_examples=200)
@given(st.data())
def test_unification_depends_only_on_normalized_label(tax, data):
    entry = data.draw(st.sampled_from(sorted(tax.entries.values(), key=lambda e: e.canonical)))
    label = data.draw(st.sampled_from(entry.all_labels()))
    tokens = normalize_label(label).split()
    variant = data.draw(st.permutations(tokens))
    noisy = "  ".join(t.upper() for t in variant) + " -"
    ctx = UnificationContext(domain=data.draw(st.sampled_from([None, *entry.domains])))

    def outcome(raw):
        try:
            return tax.unify(raw, entry.kind, ctx)
        except (UnknownTerm, AmbiguousTerm) as exc:
            return type(exc).__name__
    assert outcome(label) == outcome(noisy)


# -- malformed taxonomies --------------------------------------------------------

def test_duplicate_label_in_scope():
    assert reasons("""
        m3x:A a m3:MeasurementType ; rdfs:subClassOf ssn:ObservationValue ;
            skos:prefLabel "temp" ; m3:inDomain m3x:Health .
        m3x:B a m3:MeasurementType ; rdfs:subClassOf ssn:ObservationValue ;
            skos:prefLabel "a" ; skos:altLabel "Temp" ; m3:inDomain m3x:Health .
    """) == {"DuplicateLabelInScope"}


def test_missing_label():
    assert reasons("m3x:A a m3:Unit ; rdfs:subClassOf m3:Unit .") == {"MissingLabel"}


def test_cyclic_hierarchy():
    assert "CyclicHierarchy" in reasons("""
        m3x:A a m3:SensorType ; rdfs:subClassOf m3x:B ; skos:prefLabel "a" .
        m3x:B a m3:SensorType ; rdfs:subClassOf m3x:A ; skos:prefLabel "b" .
    """)


def test_duplicate_canonical_when_kinds_conflict():
    assert reasons('m3x:A a m3:Unit, m3:Domain ; skos:prefLabel "a" .') == {"DuplicateCanonical"}


def test_dangling_domain_reference():
    assert reasons("""
        m3x:A a m3:SensorType ; rdfs:subClassOf ssn:Sensor ; skos:prefLabel "a" ; m3:inDomain m3x:Nowhere .
    """) == {"DanglingReference"}


def test_every_problem_is_reported():
    found = reasons("""
        m3x:A a m3:Unit ; rdfs:subClassOf m3:Unit .
        m3x:B a m3:SensorType ; rdfs:subClassOf m3x:C ; skos:prefLabel "b" .
        m3x:C a m3:SensorType ; rdfs:subClassOf m3x:B ; skos:prefLabel "c" .
    """)
    assert found == {"MissingLabel", "CyclicHierarchy"}
