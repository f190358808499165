"""Namespaces and the fixed vocabulary shared by every stage."""

from .rdf import IRI, OWL, RDF, RDFS, SKOS, XSD

M3 = "http://example.org/m3#"
M3X = "http://example.org/m3/taxonomy#"
UNIT = "http://example.org/m3/unit#"
DATA = "http://example.org/m3/data#"
SSN = "http://www.w3.org/ns/ssn/"
SWOT = "http://example.org/swot#"

STANDARD_PREFIXES = {
    "rdf": RDF,
    "rdfs": RDFS,
    "xsd": XSD,
    "owl": OWL,
    "skos": SKOS,
    "ssn": SSN,
    "m3": M3,
    "m3x": M3X,
    "unit": UNIT,
}

RDF_TYPE = IRI(RDF + "type")
SUBCLASS_OF = IRI(RDFS + "subClassOf")
RDFS_LABEL = IRI(RDFS + "label")
PREF_LABEL = IRI(SKOS + "prefLabel")
ALT_LABEL = IRI(SKOS + "altLabel")

# observation shape; mirrors the SSN observation roles
HAS_VALUE = IRI(M3 + "hasValue")
HAS_UNIT = IRI(M3 + "hasUnit")
HAS_TIMESTAMP = IRI(M3 + "hasTimestamp")
OBSERVED_BY = IRI(M3 + "observedBy")
HAS_DOMAIN = IRI(M3 + "hasDomain")
HAS_FEATURE = IRI(M3 + "hasFeature")

# taxonomy vocabulary
DEFAULT_UNIT = IRI(M3 + "defaultUnit")
IN_DOMAIN = IRI(M3 + "inDomain")
FOR_FEATURE = IRI(M3 + "forFeature")
MEASURES = IRI(M3 + "measures")

SENSOR_ROOT = IRI(SSN + "Sensor")
OBSERVATION_VALUE_ROOT = IRI(SSN + "ObservationValue")
FEATURE_ROOT = IRI(SSN + "FeatureOfInterest")
UNIT_ROOT = IRI(M3 + "Unit")
DOMAIN_ROOT = IRI(M3 + "Domain")

SHAPE_PREDICATES = frozenset(
    {RDF_TYPE, HAS_VALUE, HAS_UNIT, HAS_TIMESTAMP, OBSERVED_BY, HAS_DOMAIN, HAS_FEATURE}
)

# IRIs every rule, query or bundle may mention without a defining file
BUILTIN_VOCABULARY = frozenset(SHAPE_PREDICATES | {
    SUBCLASS_OF, RDFS_LABEL, PREF_LABEL, ALT_LABEL, DEFAULT_UNIT, IN_DOMAIN,
    FOR_FEATURE, MEASURES, SENSOR_ROOT, OBSERVATION_VALUE_ROOT, FEATURE_ROOT,
    UNIT_ROOT, DOMAIN_ROOT, IRI(RDFS + "comment"), IRI(RDFS + "Class"),
    IRI(OWL + "Class"), IRI(RDF + "Property"),
})
