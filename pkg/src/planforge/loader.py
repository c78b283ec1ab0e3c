"""Builds the RuntimeDb a program needs: base tables (pruned to the declared
attributes), dictionary-encoded columns, partitioned tables and date indices.

String columns are dictionary-encoded before partition/index structures are
built, so replicas carry integer codes and all derived keys are integers.
"""

from __future__ import annotations

import os

from . import catalog as cat
from . import ir
from . import runtime as rt

# parsed-table cache for small inputs; rows are shared read-only and copied
# before dictionary encoding mutates them
_CACHE_FILE_LIMIT = 24 * 1024 * 1024
_row_cache = {}


def _load_rows(path, rel, attrs):
    # load-time statistics live on the catalog via collect_stats; the
    # execution load leaves them alone
    key = None
    size = os.path.getsize(path)
    if size <= _CACHE_FILE_LIMIT:
        key = (os.path.abspath(path), os.path.getmtime(path), rel.name,
               tuple(sorted(attrs)))
        hit = _row_cache.get(key)
        if hit is not None:
            return hit
    table = rt.load_table(path, rel, attrs, layout="row", stats=False)
    if key is not None:
        if len(_row_cache) > 16:
            _row_cache.clear()
        _row_cache[key] = table
    return table


def prepare_db(program, catalog, data_dir):
    """Load exactly the structures the program's input manifest declares."""
    db = rt.RuntimeDb(catalog=catalog, data_dir=data_dir)
    acct = db.accounting

    table_decls = [d for d in program.inputs if isinstance(d, ir.TableIn)]
    part_decls = [d for d in program.inputs if isinstance(d, ir.PartIn)]
    date_decls = [d for d in program.inputs if isinstance(d, ir.DateIdxIn)]

    # One row-layout load per relation feeds every derived structure; a
    # base-table input in column layout gets its own columnar copy.
    needed_rows = {}
    for d in table_decls + part_decls + date_decls:
        rel = d.relation
        needed_rows.setdefault(rel, {"attrs": set(), "coded": {}})
        needed_rows[rel]["attrs"].update(d.attrs)
        for a, k in d.coded.items():
            needed_rows[rel]["coded"][a] = k

    loaded = {}
    for rel_name, req in needed_rows.items():
        rel = catalog.relation(rel_name)
        path = db.tbl_path(rel_name)
        if not os.path.exists(path):
            raise rt.LoadError(f"missing input file {path}")
        table = _load_rows(path, rel, req["attrs"])
        if req["coded"]:
            # dictionary encoding mutates rows: detach from the cache
            table = rt.Table(relation=table.relation, attrs=table.attrs,
                             layout="row",
                             rows=[dict(r) for r in table.rows],
                             row_count=table.row_count)
        for attr, kind in sorted(req["coded"].items()):
            values = [r[attr] for r in table.rows]
            d = rt.build_string_dictionary(values, kind)
            db.dictionaries[(rel_name, attr)] = d
            acct.add(f"dict:{rel_name}.{attr}", rt.dictionary_bytes(d))
            if kind == rt.WORD:
                for row, toks in zip(table.rows, d.tokens):
                    row[attr] = toks
                    row[attr + "__n"] = len(toks)
            else:
                for row in table.rows:
                    row[attr] = d.codes[row[attr]]
        loaded[rel_name] = table

    base_used = {d.relation for d in table_decls}
    for d in table_decls:
        table = loaded[d.relation]
        if d.layout == "column":
            cols = {}
            for a in d.attrs:
                cols[a] = [r[a] for r in table.rows]
                if d.coded.get(a) == rt.WORD:
                    cols[a + "__n"] = [r[a + "__n"] for r in table.rows]
            tbl = rt.Table(relation=table.relation, attrs=d.attrs,
                           layout="column", columns=cols,
                           row_count=table.row_count)
            db.tables[(d.relation, "column")] = tbl
            _account_table(acct, tbl, d, catalog)
        else:
            db.tables[(d.relation, "row")] = table
            _account_table(acct, table, d, catalog)

    for d in part_decls:
        table = loaded[d.relation]
        pt = rt.build_partitioned_table(table, d.key_attr,
                                        d.kind, accounting=acct)
        db.partitions[(d.relation, d.key_attr, d.kind)] = pt
        if d.relation not in base_used and d.kind == rt.PK1:
            # pk1 slots alias base rows; count the base payload once
            acct.add(f"table:{d.relation}",
                     _payload_bytes(table, d.attrs, d.coded, catalog,
                                    d.relation))

    for d in date_decls:
        table = loaded[d.relation]
        idx = rt.build_date_index(table, d.attr, accounting=acct)
        db.date_indices[(d.relation, d.attr)] = idx

    return db


_C_SIZES = {"INT": 4, "DATE": 4, "DOUBLE": 8, "BOOL": 1, "CHAR": 1,
            "STRING": 8, "RAWPTR": 8, "KEY64": 8, "UNIT": 0}


def _c_sizeof(ty, records):
    ty = ir.resolve(ty, records)
    if isinstance(ty, ir.Scalar):
        return _C_SIZES[ty.name]
    if isinstance(ty, (ir.PointerType, ir.ArrayType)):
        return 8
    if isinstance(ty, ir.RecordType):
        return sum(_c_sizeof(ft, records) for _, ft in ty.fields)
    return 8


def pool_bytes(program):
    """Capacity bytes of the setup-section memory pools, per the emitted-C
    layout model (the worst-case allocation analysis result)."""
    total = 0
    for stmt in ir.walk_stmts(program.setup):
        if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.Alloc):
            count = stmt.expr.count
            if isinstance(count, ir.Const):
                total += count.value * _c_sizeof(stmt.expr.ty, program.records)
    return total


def _payload_bytes(table, attrs, coded, catalog, relation):
    types = {n: t for n, t in catalog.relation(relation).attributes}
    nbytes = 0
    for a in attrs:
        kind = coded.get(a)
        if kind == rt.WORD:
            col = table.column(a)
            nbytes += sum(4 * len(v) + 4 for v in col)
        elif kind is not None:
            nbytes += 4 * table.row_count
        elif types[a] == cat.STRING:
            col = table.column(a)
            nbytes += (sum(len(v) + 1 for v in col)
                       + table.row_count * rt.PTR_SIZE)
        else:
            nbytes += table.row_count * rt.value_bytes(types[a], None)
    return nbytes


def _account_table(acct, table, decl, catalog):
    acct.add(f"table:{decl.relation}",
             _payload_bytes(table, decl.attrs, decl.coded, catalog,
                            decl.relation))
