"""Schema catalog: relations, attribute types, key annotations, load statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import sexpr

INT = "INT"
DOUBLE = "DOUBLE"
DATE = "DATE"
STRING = "STRING"
CHAR = "CHAR"

COLUMN_TYPES = (INT, DOUBLE, DATE, STRING, CHAR)


class SchemaError(ValueError):
    pass


# Dates are days since 1970-01-01. The same civil-calendar arithmetic is
# implemented in the C runtime header; the two must agree bit for bit.

def days_from_civil(y, m, d):
    y -= m <= 2
    era = (y if y >= 0 else y - 399) // 400
    yoe = y - era * 400
    doy = (153 * (m + (-3 if m > 2 else 9)) + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


def civil_from_days(z):
    z += 719468
    era = (z if z >= 0 else z - 146096) // 146097
    doe = z - era * 146097
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    y = yoe + era * 400
    doy = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy + 2) // 153
    d = doy - (153 * mp + 2) // 5 + 1
    m = mp + (3 if mp < 10 else -9)
    return y + (m <= 2), m, d


def parse_date(text):
    """ISO `YYYY-MM-DD` to days-since-epoch; raises SchemaError on bad input."""
    parts = text.split("-")
    if len(parts) != 3:
        raise SchemaError(f"malformed date {text!r}")
    try:
        y, m, d = (int(p) for p in parts)
    except ValueError:
        raise SchemaError(f"malformed date {text!r}") from None
    if not (1 <= m <= 12 and 1 <= d <= 31):
        raise SchemaError(f"malformed date {text!r}")
    days = days_from_civil(y, m, d)
    if civil_from_days(days) != (y, m, d):
        raise SchemaError(f"malformed date {text!r}")
    return days


def format_date(days):
    y, m, d = civil_from_days(days)
    return f"{y:04d}-{m:02d}-{d:02d}"


def date_year(days):
    return civil_from_days(days)[0]


@dataclass
class ForeignKey:
    local_attrs: list
    target_relation: str
    target_attrs: list


@dataclass
class AttrStats:
    distinct: int = 0
    min_value: object = None
    max_value: object = None


@dataclass
class RelationStats:
    row_count: int = 0
    attrs: dict = field(default_factory=dict)  # attr name -> AttrStats


@dataclass
class Relation:
    name: str
    attributes: list  # ordered (name, type) pairs
    primary_key: list = field(default_factory=list)
    foreign_keys: list = field(default_factory=list)
    stats: RelationStats = None

    def attr_type(self, name):
        for n, t in self.attributes:
            if n == name:
                return t
        raise SchemaError(f"relation {self.name} has no attribute {name}")

    def has_attr(self, name):
        return any(n == name for n, _ in self.attributes)

    def attr_names(self):
        return [n for n, _ in self.attributes]


@dataclass
class Catalog:
    relations: dict = field(default_factory=dict)

    def relation(self, name):
        if name not in self.relations:
            raise SchemaError(f"unknown relation {name}")
        return self.relations[name]


def parse_schema(text):
    """Parse the schema DSL into a Catalog.

    Grammar (one form per relation):
      (relation NAME
        (attrs (ATTR TYPE) ...)
        (primary-key ATTR ...)
        (foreign-key (ATTR ...) TARGET (TATTR ...)) ...)
    """
    catalog = Catalog()
    forms = sexpr.parse_all(text)
    for form in forms:
        if not isinstance(form, list) or not form or form[0] != "relation":
            raise SchemaError(f"expected (relation ...), got {sexpr.dumps(form)}")
        if len(form) < 3 or isinstance(form[1], list):
            raise SchemaError("relation form needs a name and an attrs clause")
        name = form[1]
        if name in catalog.relations:
            raise SchemaError(f"duplicate relation {name}")
        rel = Relation(name=name, attributes=[])
        for clause in form[2:]:
            if not isinstance(clause, list) or not clause:
                raise SchemaError(f"bad clause in relation {name}")
            head = clause[0]
            if head == "attrs":
                seen = set()
                for spec in clause[1:]:
                    if not isinstance(spec, list) or len(spec) != 2:
                        raise SchemaError(f"bad attribute spec in {name}")
                    attr, ty = spec
                    if ty not in COLUMN_TYPES:
                        raise SchemaError(f"unknown type {ty} for {name}.{attr}")
                    if attr in seen:
                        raise SchemaError(f"duplicate attribute {name}.{attr}")
                    seen.add(attr)
                    rel.attributes.append((attr, ty))
            elif head == "primary-key":
                rel.primary_key = list(clause[1:])
            elif head == "foreign-key":
                if len(clause) != 4:
                    raise SchemaError(f"bad foreign-key clause in {name}")
                local, target, remote = clause[1], clause[2], clause[3]
                rel.foreign_keys.append(
                    ForeignKey(list(local), target, list(remote)))
            else:
                raise SchemaError(f"unknown clause {head} in relation {name}")
        if not rel.attributes:
            raise SchemaError(f"relation {name} declares no attributes")
        catalog.relations[name] = rel

    # Cross-checks after all relations are known.
    for rel in catalog.relations.values():
        for attr in rel.primary_key:
            if not rel.has_attr(attr):
                raise SchemaError(
                    f"primary key attribute {rel.name}.{attr} does not exist")
        for fk in rel.foreign_keys:
            for attr in fk.local_attrs:
                if not rel.has_attr(attr):
                    raise SchemaError(
                        f"foreign key attribute {rel.name}.{attr} does not exist")
            if fk.target_relation not in catalog.relations:
                raise SchemaError(f"unknown relation {fk.target_relation}")
            target = catalog.relations[fk.target_relation]
            for attr in fk.target_attrs:
                if not target.has_attr(attr):
                    raise SchemaError(
                        f"foreign key target {fk.target_relation}.{attr} does not exist")
    return catalog


def fk_attrs(rel):
    """Single-attribute foreign-key sources plus composite-primary-key members."""
    out = set()
    for fk in rel.foreign_keys:
        if len(fk.local_attrs) == 1:
            out.add(fk.local_attrs[0])
    if len(rel.primary_key) > 1:
        out.update(rel.primary_key)
    return out
