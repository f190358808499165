"""Turn raw sensor readings into M3-compliant RDF observations."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from datetime import datetime
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Callable, Optional, Sequence

from . import vocab
from .rdf import IRI, RDF, XSD, Graph, Literal, Triple, decimal_literal
from .taxonomy import Kind, Taxonomy, UnificationContext, UnificationError

CSV_HEADER = ("sensor", "value", "unit", "timestamp", "domain", "feature", "source")

QUANTUM = Decimal("0.0001")

# (from unit, to unit) -> affine conversion with positive slope
CONVERSIONS: dict[tuple[IRI, IRI], Callable[[Decimal], Decimal]] = {
    (IRI(vocab.UNIT + "Fahrenheit"), IRI(vocab.UNIT + "Cel")): lambda f: (f - 32) * 5 / Decimal(9),
    (IRI(vocab.UNIT + "Cel"), IRI(vocab.UNIT + "Fahrenheit")): lambda c: c * 9 / Decimal(5) + 32,
}


class IngestError(Exception):
    def __init__(self, index: Optional[int], reason: str):
        self.index = index
        self.reason = reason
        where = f"record {index}: " if index is not None else ""
        super().__init__(where + reason)


class AnnotationError(Exception):
    """All readings of a batch that failed to annotate, as (index, error) pairs."""

    def __init__(self, failures: list[tuple[int, Exception]]):
        self.failures = failures
        lines = [f"reading {i}: {err}" for i, err in failures]
        super().__init__("annotation failed:\n  " + "\n  ".join(lines))


class UnitMismatch(Exception):
    pass


@dataclass(frozen=True)
class RawReading:
    sensor_label: str
    value: Decimal
    unit_label: str
    timestamp: str
    domain_hint: Optional[str] = None
    feature_hint: Optional[str] = None
    source_id: str = ""

    def __post_init__(self):
        if not self.sensor_label.strip():
            raise ValueError("sensor label is empty")
        if not isinstance(self.value, Decimal):
            object.__setattr__(self, "value", Decimal(str(self.value)))
        if not self.value.is_finite():
            raise ValueError(f"value is not finite: {self.value}")
        parse_timestamp(self.timestamp)


def parse_timestamp(text: str) -> datetime:
    value = text.strip()
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(value)
    except ValueError:
        raise ValueError(f"not an ISO-8601 timestamp: {text!r}") from None


def _optional(value) -> Optional[str]:
    if value is None:
        return None
    value = str(value).strip()
    return value or None


def _reading(index: int, record: dict) -> RawReading:
    raw_value = record.get("value")
    try:
        value = Decimal(str(raw_value).strip())
    except (InvalidOperation, TypeError):
        raise IngestError(index, f"value {raw_value!r} is not a number") from None
    if isinstance(raw_value, float) and not math.isfinite(raw_value):
        raise IngestError(index, f"value {raw_value!r} is not finite")
    try:
        return RawReading(
            sensor_label=str(record.get("sensor") or ""),
            value=value,
            unit_label=str(record.get("unit") or "").strip(),
            timestamp=str(record.get("timestamp") or ""),
            domain_hint=_optional(record.get("domain")),
            feature_hint=_optional(record.get("feature")),
            source_id=str(record.get("source") or "").strip(),
        )
    except ValueError as exc:
        raise IngestError(index, str(exc)) from None


def parse_readings(text: str, format: str = "csv") -> list[RawReading]:
    """Parse a CSV or JSON readings document, keeping record order.

    A CSV header other than ``sensor,value,unit,timestamp,domain,feature,source``
    aborts the whole file; record indexes in errors count from 0.
    """
    if format == "csv":
        reader = csv.reader(io.StringIO(text))
        rows = [row for row in reader if any(cell.strip() for cell in row)]
        if not rows:
            raise IngestError(None, "missing CSV header")
        header = tuple(cell.strip() for cell in rows[0])
        if header != CSV_HEADER:
            raise IngestError(None, f"CSV header {','.join(header)!r} != {','.join(CSV_HEADER)!r}")
        readings = []
        for i, row in enumerate(rows[1:]):
            if len(row) != len(CSV_HEADER):
                raise IngestError(i, f"expected {len(CSV_HEADER)} fields, found {len(row)}")
            readings.append(_reading(i, dict(zip(CSV_HEADER, row))))
        return readings
    if format == "json":
        try:
            records = json.loads(text, parse_float=Decimal) if text.strip() else []
        except json.JSONDecodeError as exc:
            raise IngestError(None, f"invalid JSON: {exc}") from None
        if not isinstance(records, list):
            raise IngestError(None, "JSON readings must be an array of objects")
        readings = []
        for i, record in enumerate(records):
            if not isinstance(record, dict):
                raise IngestError(i, "record is not an object")
            unknown = set(record) - set(CSV_HEADER)
            if unknown:
                raise IngestError(i, f"unknown fields {sorted(unknown)}")
            readings.append(_reading(i, record))
        return readings
    raise ValueError(f"unknown readings format {format!r}")


def convert(value: Decimal, from_unit: IRI, to_unit: IRI) -> Decimal:
    """Convert between units, rounding half-even to 4 fractional digits."""
    if from_unit == to_unit:
        return value
    try:
        fn = CONVERSIONS[(from_unit, to_unit)]
    except KeyError:
        raise UnitMismatch(f"no conversion from {from_unit.value} to {to_unit.value}") from None
    return fn(value).quantize(QUANTUM, rounding=ROUND_HALF_EVEN)


def _digest(*parts: str) -> str:
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:16]


def observation_iri(r: RawReading) -> IRI:
    return IRI(f"{vocab.DATA}obs-{_digest(r.source_id, r.timestamp, r.sensor_label)}")


def sensor_iri(source_id: str, sensor_type: IRI) -> IRI:
    return IRI(f"{vocab.DATA}sensor-{_digest(source_id, sensor_type.value)}")


def annotate_reading(r: RawReading, tax: Taxonomy) -> list[Triple]:
    """Observation triples for one reading plus the sensor node typing."""
    domain = None
    if r.domain_hint is not None:
        domain = tax.unify(r.domain_hint, Kind.DOMAIN)
    feature = tax.unify(r.feature_hint, Kind.FEATURE) if r.feature_hint is not None else None
    ctx = UnificationContext(domain=domain, feature=feature)
    sensor_type = tax.unify(r.sensor_label, Kind.SENSOR_TYPE, ctx)
    if domain is None:
        domains = tax[sensor_type].domains
        if len(domains) != 1:
            raise UnificationError(
                f"no domain given and sensor type {sensor_type.value} is used in {len(domains)} domains"
            )
        domain = domains[0]
        ctx = UnificationContext(domain=domain, feature=feature)
    measurement = tax.measurement_for(sensor_type, ctx)
    unit = tax.unify(r.unit_label, Kind.UNIT)
    target_unit = tax[measurement].default_unit or unit
    value = convert(r.value, unit, target_unit)

    obs = observation_iri(r)
    sensor = sensor_iri(r.source_id, sensor_type)
    triples = [
        Triple(obs, vocab.RDF_TYPE, measurement),
        Triple(obs, vocab.HAS_VALUE, decimal_literal(value)),
        Triple(obs, vocab.HAS_UNIT, target_unit),
        Triple(obs, vocab.HAS_TIMESTAMP, Literal(r.timestamp.strip(), XSD + "dateTime")),
        Triple(obs, vocab.OBSERVED_BY, sensor),
        Triple(obs, vocab.HAS_DOMAIN, domain),
    ]
    if feature is not None:
        triples.append(Triple(obs, vocab.HAS_FEATURE, feature))
    triples.append(Triple(sensor, vocab.RDF_TYPE, sensor_type))
    return triples


def annotate(readings: Sequence[RawReading], tax: Taxonomy) -> Graph:
    """Annotate a batch; either every reading succeeds or all failures are raised."""
    graph = Graph(prefixes={
        "rdf": RDF,
        "xsd": XSD,
        "m3": vocab.M3,
        "m3x": vocab.M3X,
        "unit": vocab.UNIT,
        "data": vocab.DATA,
    })
    failures = []
    seen: dict[IRI, int] = {}
    for i, r in enumerate(readings):
        obs = observation_iri(r)
        if obs in seen:
            failures.append((i, ValueError(f"duplicate of reading {seen[obs]} (same source, timestamp and sensor)")))
            continue
        seen[obs] = i
        try:
            graph.update(annotate_reading(r, tax))
        except (UnificationError, UnitMismatch) as exc:
            failures.append((i, exc))
    if failures:
        raise AnnotationError(failures)
    return graph
