"""Data layout changes.

ColumnLayoutPass turns row storage into per-attribute arrays: base tables flip
to columnar loading, and record-element arrays built by the program become one
array per field. Element reads reconstruct the record; the cleanup passes then
dissolve the reconstruction so only the touched columns are actually read.
Arrays whose elements are chained, sorted in place or null-tested keep row
form, as do partitioned replicas and date buckets.

UnusedFieldRemovalPass shrinks the loaded record of each relation to the
attributes the plan references, so dropped columns are never materialized.
"""

from __future__ import annotations

from .. import ir
from .. import transform as tr
from . import common


class ColumnLayoutPass(tr.Transformer):
    name = "column-layout"

    def __init__(self):
        super().__init__("column-layout")

    def fresh(self):
        return ColumnLayoutPass()

    def transform(self, program):
        cl = common.Cloner()
        program = ir.Program(
            level=program.level,
            inputs=[_clone_decl(d, cl) for d in program.inputs],
            setup=cl.block(program.setup),
            body=cl.block(program.body),
            records=dict(program.records),
            meta=dict(program.meta))
        program = self._columnar_tables(program)
        program = self._columnar_intermediates(program)
        return program

    # -- base tables -----------------------------------------------------------

    def _columnar_tables(self, program):
        tables = {}
        for decl in program.inputs:
            if isinstance(decl, ir.TableIn) and decl.layout == "row":
                rel_rec = program.records[decl.relation]
                fields = []
                for fn, ft in rel_rec.fields:
                    if fn == "next":
                        continue
                    base = fn[:-3] if fn.endswith("__n") else fn
                    if base in decl.attrs:
                        fields.append((fn, ir.ArrayType(ft)))
                cols_name = decl.relation + "__COLS"
                program.records[cols_name] = ir.RecordType(cols_name,
                                                           tuple(fields))
                decl.layout = "column"
                decl.sym.ty = ir.Rec(cols_name)
                tables[decl.sym] = (decl, cols_name,
                                    [fn for fn, _ in fields])

        if not tables:
            return program

        def visit(stmt):
            if not isinstance(stmt, ir.Bind):
                return stmt
            e = stmt.expr
            b = ir.Builder(program.records)
            if isinstance(e, ir.ArrayLen) and e.arr in tables:
                decl, cols_name, fields = tables[e.arr]
                c0 = b.bind(ir.FieldGet(e.arr, fields[0]), "col")
                return b.blocks[0].stmts + [
                    ir.Bind(stmt.sym, ir.ArrayLen(c0))]
            if isinstance(e, ir.ArrayGet) and e.arr in tables:
                decl, cols_name, fields = tables[e.arr]
                vals = []
                for fn in fields:
                    col = b.bind(ir.FieldGet(e.arr, fn), fn.lower())
                    vals.append((fn, b.bind(ir.ArrayGet(col, e.idx),
                                            fn.lower())))
                return b.blocks[0].stmts + [
                    ir.Bind(stmt.sym, ir.RecordNew(decl.relation,
                                                   tuple(vals)))]
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return tr.rebuild_program(program, body=body)

    # -- record-element arrays built by the program -----------------------------

    def _columnar_intermediates(self, program):
        candidates = {}
        gets = {}
        disqualified = set()

        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.ArrayNew):
                elem = ir.resolve(stmt.expr.elem, program.records)
                if isinstance(elem, ir.RecordType):
                    candidates[stmt.sym] = stmt

        if not candidates:
            return program

        def atom_positions(stmt):
            # (atom, kind) pairs: kind tags the structural role
            if isinstance(stmt, ir.Bind):
                e = stmt.expr
                if isinstance(e, ir.ArrayGet):
                    return [(e.arr, "get"), (e.idx, "read")]
                if isinstance(e, ir.ArrayLen):
                    return [(e.arr, "len")]
                return [(a, "read") for a in ir.expr_atoms(e)]
            if isinstance(stmt, ir.ArraySet):
                return [(stmt.arr, "set"), (stmt.idx, "read"),
                        (stmt.value, "read")]
            return [(a, "read") for a in ir.stmt_atoms(stmt)]

        elem_syms = {}
        for stmt in ir.walk_program_stmts(program):
            for atom, kind in atom_positions(stmt):
                if atom in candidates and kind == "read":
                    disqualified.add(atom)
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.ArrayGet) \
                    and stmt.expr.arr in candidates:
                elem_syms.setdefault(stmt.expr.arr, []).append(stmt.sym)
        for blk in ir.walk_program_blocks(program):
            for s in _block_results(blk):
                if s in candidates:
                    disqualified.add(s)

        # fetched elements may only be projected, never chained or null-tested
        elem_set = {s for syms in elem_syms.values() for s in syms}
        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.FieldGet) \
                    and stmt.expr.base in elem_set:
                continue
            for a in ir.stmt_atoms(stmt):
                if a in elem_set:
                    for arr, syms in elem_syms.items():
                        if a in syms:
                            disqualified.add(arr)

        targets = {s: c for s, c in candidates.items()
                   if s not in disqualified}
        if not targets:
            return program

        info = {}
        counter = [0]

        def visit(stmt):
            b = ir.Builder(program.records)
            if isinstance(stmt, ir.Bind) and stmt.sym in targets:
                elem = ir.resolve(stmt.expr.elem, program.records)
                counter[0] += 1
                cols_name = f"{elem.name}__SOA{counter[0]}"
                fields = tuple((fn, ir.ArrayType(ft))
                               for fn, ft in elem.fields if fn != "next")
                program.records[cols_name] = ir.RecordType(cols_name, fields)
                vals = []
                for fn, ft in elem.fields:
                    if fn == "next":
                        continue
                    vals.append((fn, b.bind(
                        ir.ArrayNew(ft, stmt.expr.size), fn.lower())))
                rec = ir.Sym(ir.Rec(cols_name), stmt.sym.hint)
                info[stmt.sym] = (rec, elem, [fn for fn, _ in fields])
                return b.blocks[0].stmts + [
                    ir.Bind(rec, ir.RecordNew(cols_name, tuple(vals)))]
            if isinstance(stmt, ir.ArraySet) and stmt.arr in info:
                rec, elem, fields = info[stmt.arr]
                for fn in fields:
                    col = b.bind(ir.FieldGet(rec, fn), fn.lower())
                    fv = b.bind(ir.FieldGet(stmt.value, fn), fn.lower())
                    b.emit(ir.ArraySet(col, stmt.idx, fv))
                return b.blocks[0].stmts
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.ArrayGet) \
                    and stmt.expr.arr in info:
                rec, elem, fields = info[stmt.expr.arr]
                vals = []
                for fn in fields:
                    col = b.bind(ir.FieldGet(rec, fn), fn.lower())
                    vals.append((fn, b.bind(ir.ArrayGet(col, stmt.expr.idx),
                                            fn.lower())))
                return b.blocks[0].stmts + [
                    ir.Bind(stmt.sym, ir.RecordNew(elem.name, tuple(vals)))]
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.ArrayLen) \
                    and stmt.expr.arr in info:
                rec, elem, fields = info[stmt.expr.arr]
                col = b.bind(ir.FieldGet(rec, fields[0]), "col")
                return b.blocks[0].stmts + [
                    ir.Bind(stmt.sym, ir.ArrayLen(col))]
            return stmt

        # statement order guarantees each declaration is seen before its uses
        body = tr.map_blocks_deep(program.body, visit)
        return tr.rebuild_program(program, body=body)


def _block_results(blk):
    out = []
    if isinstance(blk.result, ir.Sym):
        out.append(blk.result)
    for s in blk.stmts:
        for sub in ir.stmt_blocks(s):
            out.extend(_block_results(sub))
    return out


def _clone_decl(d, cl):
    import copy
    d2 = copy.copy(d)
    if isinstance(d, ir.TableIn):
        d2.sym = cl.fresh(d.sym)
    else:
        d2.data = cl.fresh(d.data)
        if d.counts is not None:
            d2.counts = cl.fresh(d.counts)
    d2.coded = dict(d.coded)
    d2.attrs = list(d.attrs)
    return d2


class UnusedFieldRemovalPass(tr.Transformer):
    name = "unused-fields"

    def __init__(self, catalog):
        super().__init__("unused-fields")
        self.catalog = catalog

    def fresh(self):
        return UnusedFieldRemovalPass(self.catalog)

    def transform(self, program):
        refs = program.meta.get("plan_refs", {})
        if not refs:
            return program
        program = tr.rebuild_program(program)
        program.inputs = [self._shrink_decl(d, refs) for d in program.inputs]
        for rel, needed in refs.items():
            if rel not in program.records:
                continue
            rt = program.records[rel]
            fields = tuple((fn, ft) for fn, ft in rt.fields
                           if fn == "next" or _base_attr(fn) in needed)
            program.records[rel] = ir.RecordType(rel, fields)
        return program

    def _shrink_decl(self, d, refs):
        import copy
        needed = refs.get(d.relation)
        if needed is None:
            return d
        d2 = copy.copy(d)
        d2.attrs = [a for a in d.attrs if a in needed]
        d2.coded = {a: k for a, k in d.coded.items() if a in needed}
        return d2


def _base_attr(field):
    return field[:-3] if field.endswith("__n") else field
