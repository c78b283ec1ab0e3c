"""Load-time machinery: .tbl ingestion, statistics, string dictionaries,
partitioned tables, date indices and memory-pool accounting.

Byte accounting models the layout of the emitted C programs (4-byte INT/DATE,
8-byte DOUBLE, 8-byte pointers, len+1 byte strings), independent of what the
Python objects actually weigh, so the memory bound can be checked at desk
scale.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from . import catalog as cat


class LoadError(ValueError):
    pass


_SIZES = {cat.INT: 4, cat.DATE: 4, cat.DOUBLE: 8, cat.CHAR: 1}
PTR_SIZE = 8


def value_bytes(ty, value):
    if ty == cat.STRING:
        return len(value) + 1
    return _SIZES[ty]


@dataclass
class MemoryAccounting:
    by_class: dict = field(default_factory=dict)
    critical_allocs: int = 0

    def add(self, klass, nbytes):
        self.by_class[klass] = self.by_class.get(klass, 0) + nbytes

    def total(self):
        return sum(self.by_class.values())

    def report(self):
        lines = [f"{k}: {v}" for k, v in sorted(self.by_class.items())]
        lines.append(f"total: {self.total()}")
        return "\n".join(lines)


@dataclass
class Table:
    relation: object            # catalog Relation
    attrs: list                 # loaded attribute names, catalog order
    layout: str = "row"
    rows: list = None           # row layout: list of dicts
    columns: dict = None        # column layout: attr -> list
    row_count: int = 0

    def column(self, attr):
        if self.layout == "column":
            return self.columns[attr]
        return [r[attr] for r in self.rows]


def _parse_value(ty, text, where):
    try:
        if ty == cat.INT:
            return int(text)
        if ty == cat.DOUBLE:
            return float(text)
        if ty == cat.DATE:
            return cat.parse_date(text)
        if ty == cat.CHAR:
            if len(text) != 1:
                raise ValueError(text)
            return text
        return text
    except (ValueError, cat.SchemaError):
        raise LoadError(f"{where}: cannot parse {text!r} as {ty}") from None


def load_table(path, relation, needed_attrs=None, layout="row",
               accounting=None, stats=True):
    """Load a pipe-delimited .tbl file, materializing only needed_attrs.

    Updates relation.stats (row count, per-attribute min/max/distinct) for the
    loaded attributes when stats is true.
    """
    attrs = [n for n, _ in relation.attributes
             if needed_attrs is None or n in needed_attrs]
    types = {n: t for n, t in relation.attributes}
    n_cols = len(relation.attributes)
    positions = {n: i for i, (n, _) in enumerate(relation.attributes)}

    rows = [] if layout == "row" else None
    columns = {a: [] for a in attrs} if layout == "column" else None
    distinct = {a: set() for a in attrs}
    count = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("|")
            if parts and parts[-1] == "":
                parts = parts[:-1]  # trailing delimiter tolerated
            if len(parts) != n_cols:
                raise LoadError(
                    f"{path}:{lineno}: expected {n_cols} fields, got {len(parts)}")
            if layout == "row":
                row = {}
                for a in attrs:
                    v = _parse_value(types[a], parts[positions[a]],
                                     f"{path}:{lineno} column {a}")
                    row[a] = v
                    distinct[a].add(v)
                rows.append(row)
            else:
                for a in attrs:
                    v = _parse_value(types[a], parts[positions[a]],
                                     f"{path}:{lineno} column {a}")
                    columns[a].append(v)
                    distinct[a].add(v)
            count += 1

    table = Table(relation=relation, attrs=attrs, layout=layout,
                  rows=rows, columns=columns, row_count=count)
    if stats:
        rs = relation.stats or cat.RelationStats()
        rs.row_count = count
        for a in attrs:
            vals = distinct[a]
            rs.attrs[a] = cat.AttrStats(
                distinct=len(vals),
                min_value=min(vals) if vals else None,
                max_value=max(vals) if vals else None)
        relation.stats = rs
    if accounting is not None:
        nbytes = 0
        for a in attrs:
            ty = types[a]
            if ty == cat.STRING:
                col = table.column(a)
                nbytes += sum(len(v) + 1 for v in col) + count * PTR_SIZE
            else:
                nbytes += count * _SIZES[ty]
        accounting.add(f"table:{relation.name}", nbytes)
    return table


# ---------------------------------------------------------------------------
# String dictionaries

NORMAL = "normal"
ORDERED = "ordered"
WORD = "word"


@dataclass
class StringDictionary:
    kind: str
    values: list                   # distinct values, code order
    codes: dict                    # value -> code
    tokens: list = None            # WORD: per-row token-code arrays

    @property
    def distinct_count(self):
        return len(self.values)

    def code(self, value):
        return self.codes.get(value, -1)

    def decode(self, code):
        return self.values[code]


def build_string_dictionary(values, kind):
    """Normal: first-appearance codes. Ordered: distinct, sort, re-code so
    codes ascend with lexicographic order. Word: dictionary over words, each
    row becomes an array of word codes."""
    if kind == NORMAL:
        codes = {}
        ordered = []
        for v in values:
            if v not in codes:
                codes[v] = len(ordered)
                ordered.append(v)
        return StringDictionary(NORMAL, ordered, codes)
    if kind == ORDERED:
        ordered = sorted(set(values))
        codes = {v: i for i, v in enumerate(ordered)}
        return StringDictionary(ORDERED, ordered, codes)
    if kind == WORD:
        codes = {}
        words = []
        rows = []
        for v in values:
            row = []
            for w in v.split(" "):
                if w not in codes:
                    codes[w] = len(words)
                    words.append(w)
                row.append(codes[w])
            rows.append(row)
        return StringDictionary(WORD, words, codes, rows)
    raise LoadError(f"unknown dictionary kind {kind}")


def range_for_prefix(dictionary, prefix):
    """Code range [start, end] of distinct values starting with prefix, or
    None when nothing matches. Requires an order-preserving dictionary."""
    if dictionary.kind != ORDERED:
        raise LoadError("prefix ranges need an ordered dictionary")
    values = dictionary.values
    import bisect
    lo = bisect.bisect_left(values, prefix)
    if lo >= len(values) or not values[lo].startswith(prefix):
        return None
    hi = bisect.bisect_left(values, prefix + "￿", lo)
    return (lo, hi - 1)


def suffix_table(dictionary, suffix):
    if dictionary.kind != ORDERED:
        raise LoadError("suffix tables need an ordered dictionary")
    return [v.endswith(suffix) for v in dictionary.values]


def dictionary_bytes(d):
    payload = sum(len(v) + 1 for v in d.values) + 4 * len(d.values)
    if d.tokens is not None:
        payload += sum(4 * len(t) + 4 for t in d.tokens)
    return payload


# ---------------------------------------------------------------------------
# Partitioned tables

PK1 = "pk1"
FK2 = "fk2"


@dataclass
class PartitionedTable:
    relation: object
    key_attr: str
    kind: str
    data: list                   # pk1: row or None per slot; fk2: list per slot
    counts: list = None          # fk2 only
    max_key: int = 0


def build_partitioned_table(table, key_attr, kind, max_slots=50_000_000,
                            accounting=None):
    """Repartition a loaded row-layout table by an integer key attribute."""
    if table.layout != "row":
        raise LoadError("partitioning expects a row-layout table")
    keys = [r[key_attr] for r in table.rows]
    if keys and min(keys) < 0:
        raise LoadError(f"negative key in {table.relation.name}.{key_attr}")
    max_key = max(keys) if keys else -1
    if max_key + 1 > max_slots:
        raise LoadError(
            f"partition on {table.relation.name}.{key_attr} needs "
            f"{max_key + 1} slots, over the cap {max_slots}; "
            "use fk2 buckets or keep the generic map")
    slots = max_key + 1
    if kind == PK1:
        data = [None] * slots
        for r in table.rows:
            k = r[key_attr]
            if data[k] is not None:
                raise LoadError(
                    f"duplicate primary key {k} in {table.relation.name}.{key_attr}")
            data[k] = r
        pt = PartitionedTable(table.relation, key_attr, PK1, data,
                              None, max_key)
        if accounting is not None:
            # slots point into the base table rows: pointer array only
            accounting.add(f"partition:{table.relation.name}.{key_attr}",
                           slots * PTR_SIZE)
        return pt
    if kind == FK2:
        counts = [0] * slots
        for k in keys:
            counts[k] += 1
        data = [[] for _ in range(slots)]
        for r in table.rows:
            data[r[key_attr]].append(r)
        pt = PartitionedTable(table.relation, key_attr, FK2, data,
                              counts, max_key)
        if accounting is not None:
            nbytes = slots * (PTR_SIZE + 4)  # bucket pointers + counts
            nbytes += _replica_bytes(table)
            accounting.add(f"partition:{table.relation.name}.{key_attr}", nbytes)
        return pt
    raise LoadError(f"unknown partition kind {kind}")


def _replica_bytes(table):
    types = {n: t for n, t in table.relation.attributes}
    nbytes = 0
    for a in table.attrs:
        ty = types[a]
        if ty == cat.STRING:
            # replicas share the string payloads, copy the pointers
            nbytes += table.row_count * PTR_SIZE
        else:
            nbytes += table.row_count * _SIZES[ty]
    return nbytes


# ---------------------------------------------------------------------------
# Date indices

@dataclass
class DateIndex:
    relation: object
    attr: str
    min_year: int
    buckets: list                # per year, list of rows
    counts: list

    @property
    def n_years(self):
        return len(self.buckets)


def build_date_index(table, attr, accounting=None):
    if table.relation.attr_type(attr) != cat.DATE:
        raise LoadError(f"{table.relation.name}.{attr} is not a DATE attribute")
    if table.layout != "row":
        raise LoadError("date indices expect a row-layout table")
    years = [cat.date_year(r[attr]) for r in table.rows]
    if years:
        lo, hi = min(years), max(years)
    else:
        lo, hi = 1970, 1969
    n = max(hi - lo + 1, 0)
    buckets = [[] for _ in range(n)]
    for y, r in zip(years, table.rows):
        buckets[y - lo].append(r)
    idx = DateIndex(table.relation, attr, lo, buckets,
                    [len(b) for b in buckets])
    if accounting is not None:
        accounting.add(f"dateindex:{table.relation.name}.{attr}",
                       n * (PTR_SIZE + 4) + _replica_bytes(table))
    return idx


# ---------------------------------------------------------------------------
# The loaded database handed to the interpreter

@dataclass
class RuntimeDb:
    catalog: object
    data_dir: str
    tables: dict = field(default_factory=dict)       # (rel, layout) -> Table
    partitions: dict = field(default_factory=dict)   # (rel, attr, kind)
    date_indices: dict = field(default_factory=dict) # (rel, attr)
    dictionaries: dict = field(default_factory=dict) # (rel, attr) -> dict
    accounting: MemoryAccounting = field(default_factory=MemoryAccounting)
    pool_bytes: int = 0

    def tbl_path(self, relation):
        return os.path.join(self.data_dir, relation.lower() + ".tbl")

    def raw_input_bytes(self, relations):
        return sum(os.path.getsize(self.tbl_path(r)) for r in relations)


def collect_stats(catalog, data_dir):
    """Load every relation once to fill catalog statistics (no retention)."""
    for rel in catalog.relations.values():
        path = os.path.join(data_dir, rel.name.lower() + ".tbl")
        if os.path.exists(path):
            load_table(path, rel, stats=True)
