"""String dictionaries: string columns become dense integer codes at load and
the query's string operations become integer operations.

Kinds are chosen from the operations the query applies per attribute:
equality tests need plain first-appearance codes, prefix/suffix tests and
order comparisons need codes that ascend lexicographically, word containment
needs per-row token-code arrays. Attributes compared column-to-column across
different attributes are left uncompressed (their code spaces would not
align), as are word-coded attributes that something else also needs.
"""

from __future__ import annotations

import copy

from .. import catalog as cat
from .. import ir
from .. import transform as tr
from . import common

_RANK = {"normal": 1, "ordered": 2}


class DictConfigError(ValueError):
    pass


class StringDictionaryPass(tr.Transformer):
    name = "string-dictionary"

    def __init__(self, catalog, overrides=None):
        super().__init__("string-dictionary")
        self.catalog = catalog
        self.overrides = dict(overrides or {})

    def fresh(self):
        return StringDictionaryPass(self.catalog, self.overrides)

    # -- provenance -----------------------------------------------------------

    def _field_origin(self, program, rec_name, field):
        fo = program.meta.get("field_origin", {})
        if (rec_name, field) in fo:
            return fo[(rec_name, field)]
        if rec_name in self.catalog.relations:
            return (rec_name, field)
        origin = program.meta.get("attr_origin", {})
        if field in origin:
            return origin[field]
        if field.startswith("k_") and field[2:] in origin:
            return origin[field[2:]]
        return None

    def _atom_source(self, atom, defs, program):
        seen = 0
        while isinstance(atom, ir.Sym) and seen < 64:
            seen += 1
            e = defs.get(atom)
            if isinstance(e, ir.AtomExpr):
                atom = e.atom
                continue
            if isinstance(e, ir.FieldGet) and isinstance(e.base, ir.Sym):
                base_ty = ir.resolve(e.base.ty, program.records)
                if isinstance(base_ty, ir.PointerType):
                    base_ty = ir.resolve(base_ty.elem, program.records)
                if isinstance(base_ty, ir.RecordType):
                    return self._field_origin(program, base_ty.name, e.name)
                return None
            if isinstance(e, ir.ArrayGet):
                # keys_* reconstruction arrays and similar: no provenance
                return None
            return None
        return None

    # -- kind assignment --------------------------------------------------------

    def assign_kinds(self, program):
        defs = common.collect_defs(program)
        want = {}
        blocked = set()
        printed = set()

        def demand(src, kind):
            if src is None:
                return
            if kind == "word":
                prev = want.get(src)
                if prev is not None and prev != "word":
                    blocked.add(src)
                    return
                want[src] = "word"
                return
            prev = want.get(src)
            if prev == "word":
                blocked.add(src)
                return
            if prev is None or _RANK[kind] > _RANK[prev]:
                want[src] = kind

        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.StrOp):
                e = stmt.expr
                sa = self._atom_source(e.a, defs, program)
                sb = self._atom_source(e.b, defs, program)
                ca = isinstance(e.a, ir.Const)
                cb = isinstance(e.b, ir.Const)
                if e.op in ("eq", "ne"):
                    if sa and cb:
                        demand(sa, "normal")
                    elif sb and ca:
                        demand(sb, "normal")
                    elif sa and sb:
                        if sa == sb:
                            demand(sa, "normal")
                        else:
                            blocked.add(sa)
                            blocked.add(sb)
                    else:
                        blocked.update(s for s in (sa, sb) if s)
                elif e.op in ("starts", "ends"):
                    if sa and cb:
                        demand(sa, "ordered")
                    else:
                        blocked.update(s for s in (sa, sb) if s)
                elif e.op == "slice":
                    if sa and cb:
                        demand(sa, "word")
                    else:
                        blocked.update(s for s in (sa, sb) if s)
                elif e.op == "cmp":
                    if sa and sb and sa == sb:
                        demand(sa, "ordered")
                    else:
                        blocked.update(s for s in (sa, sb) if s)
            elif isinstance(stmt, ir.Bind) and isinstance(stmt.expr,
                                                          (ir.MapNew,)):
                for src in (stmt.sym.attrs.get("agg_domain") or []):
                    rel, attr = src
                    if self.catalog.relation(rel).attr_type(attr) == cat.STRING:
                        demand((rel, attr), "normal")
            elif isinstance(stmt, ir.EmitRow):
                for v in stmt.values:
                    src = self._atom_source(v, defs, program)
                    if src is not None:
                        printed.add(src)

        for src in blocked:
            want.pop(src, None)
        for src in printed:
            if want.get(src) == "word":
                del want[src]  # decoding token arrays back is out of scope
        for src, kind in self.overrides.items():
            needed = want.get(src)
            if kind is None:
                want.pop(src, None)
                continue
            if needed == "word" and kind != "word" or (
                    needed in ("ordered",) and _RANK.get(kind, 0) < _RANK[needed]):
                raise DictConfigError(
                    f"attribute {src[0]}.{src[1]} needs a {needed} dictionary "
                    f"but was configured as {kind}")
            if needed is not None:
                want[src] = kind
        return want

    # -- rewrite ---------------------------------------------------------------

    def transform(self, program):
        coded = self.assign_kinds(program)
        if not coded:
            return program

        cl = common.Cloner()
        program = ir.Program(
            level=program.level,
            inputs=[self._clone_decl(d, cl) for d in program.inputs],
            setup=cl.block(program.setup),
            body=cl.block(program.body),
            records=dict(program.records),
            meta=dict(program.meta))

        # 1. retype record fields
        new_records = {}
        for name, rt in program.records.items():
            fields = []
            for fn, ft in rt.fields:
                src = self._field_origin(program, name, fn)
                kind = coded.get(src) if ft == ir.STRING else None
                if kind == "word":
                    fields.append((fn, ir.ArrayType(ir.INT)))
                    fields.append((fn + "__n", ir.INT))
                elif kind is not None:
                    fields.append((fn, ir.INT))
                else:
                    fields.append((fn, ft))
            new_records[name] = ir.RecordType(name, tuple(fields))
        program.records = new_records

        # 2. mark loader obligations
        for decl in program.inputs:
            for attr in decl.attrs:
                kind = coded.get((decl.relation, attr))
                if kind is not None:
                    decl.coded[attr] = kind

        # 3. rewrite ops, insert setup intrinsics, propagate types; a second
        # sweep catches decodes of foreach key parameters retyped in between
        self._setup = ir.Builder(program.records)
        self._setup_cache = {}
        self._dict_source = {}
        self._coded_items = list(coded.items())
        defs = common.collect_defs(program)
        body = self._sweep_block(program.body, program, defs, coded)
        program = ir.Program(
            level=program.level, inputs=program.inputs,
            setup=program.setup, body=body,
            records=program.records, meta=program.meta)
        self._fix_containers(program)
        defs = common.collect_defs(program)
        body = self._sweep_block(program.body, program, defs, coded)
        program = ir.Program(
            level=program.level, inputs=program.inputs,
            setup=ir.Block(list(program.setup.stmts)
                           + self._setup.blocks[0].stmts),
            body=body, records=program.records, meta=program.meta)
        return program

    def _clone_decl(self, d, cl):
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

    def _intrinsic(self, op, src, arg, hint):
        key = (op, src, arg)
        if key not in self._setup_cache:
            self._setup_cache[key] = self._setup.bind(
                ir.DictIntrinsic(op, src[0], src[1], arg), hint)
        return self._setup_cache[key]

    def _sweep_block(self, block, program, defs, coded):
        out = []
        for stmt in block.stmts:
            out.extend(self._sweep_stmt(stmt, program, defs, coded))
        return ir.Block(out, block.result)

    def _sweep_stmt(self, stmt, program, defs, coded):
        records = program.records

        def retype(sym, expr):
            try:
                sym.ty = ir.type_of_expr(expr, records, None)
            except (ir.TypeError_, KeyError):
                pass
            return sym

        stmt = tr.map_stmt_blocks(
            stmt, lambda b: self._sweep_block(b, program, defs, coded))

        if isinstance(stmt, ir.Bind):
            e = stmt.expr
            if isinstance(e, ir.FieldGet):
                retype(stmt.sym, e)
                base_ty = ir.resolve(e.base.ty, records)
                if isinstance(base_ty, ir.PointerType):
                    base_ty = ir.resolve(base_ty.elem, records)
                if isinstance(base_ty, ir.RecordType):
                    src = self._field_origin(program, base_ty.name, e.name)
                    if src in coded:
                        self._dict_source[stmt.sym] = (src, coded[src])
                return [stmt]
            if isinstance(e, ir.AtomExpr) and isinstance(e.atom, ir.Sym):
                if e.atom in self._dict_source:
                    self._dict_source[stmt.sym] = self._dict_source[e.atom]
                retype(stmt.sym, e)
                return [stmt]
            if isinstance(e, ir.StrOp):
                return self._rewrite_strop(stmt, program, defs, coded)
            retype(stmt.sym, e)
            return [stmt]
        if isinstance(stmt, ir.VarDecl):
            stmt.var.ty = stmt.init.ty
            return [stmt]
        if isinstance(stmt, (ir.MapForeach, ir.MultiMapForeachAt,
                             ir.SeqForeach)):
            return [stmt]
        if isinstance(stmt, ir.EmitRow):
            b = ir.Builder(records)
            vals = []
            for v in stmt.values:
                info = self._dict_source.get(v) if isinstance(v, ir.Sym) else None
                if info is not None and v.ty == ir.INT:
                    src, kind = info
                    if kind in ("normal", "ordered"):
                        vals.append(b.bind(
                            ir.DictDecode(src[0], src[1], v), "str"))
                        continue
                vals.append(v)
            return b.blocks[0].stmts + [ir.EmitRow(tuple(vals))]
        return [stmt]

    def _rewrite_strop(self, stmt, program, defs, coded):
        e = stmt.expr
        b = ir.Builder(program.records)
        sa = self._dict_source.get(e.a) if isinstance(e.a, ir.Sym) else None
        sb = self._dict_source.get(e.b) if isinstance(e.b, ir.Sym) else None
        a_int = isinstance(e.a, ir.Sym) and e.a.ty == ir.INT
        b_int = isinstance(e.b, ir.Sym) and e.b.ty == ir.INT
        a_toks = isinstance(e.a, ir.Sym) and e.a.ty == ir.ArrayType(ir.INT)

        if e.op in ("eq", "ne") and a_int and isinstance(e.b, ir.Const) and sa:
            code = self._intrinsic("lookup", sa[0], e.b.value, "code")
            op = "==" if e.op == "eq" else "!="
            return [ir.Bind(stmt.sym, ir.Bin(op, e.a, code))]
        if e.op in ("eq", "ne") and b_int and isinstance(e.a, ir.Const) and sb:
            code = self._intrinsic("lookup", sb[0], e.a.value, "code")
            op = "==" if e.op == "eq" else "!="
            return [ir.Bind(stmt.sym, ir.Bin(op, e.b, code))]
        if e.op in ("eq", "ne") and a_int and b_int:
            op = "==" if e.op == "eq" else "!="
            return [ir.Bind(stmt.sym, ir.Bin(op, e.a, e.b))]
        if e.op == "starts" and a_int and isinstance(e.b, ir.Const) and sa:
            lo = self._intrinsic("prefix_start", sa[0], e.b.value, "start")
            hi = self._intrinsic("prefix_end", sa[0], e.b.value, "end")
            ge = b.bind(ir.Bin(">=", e.a, lo), "ge")
            le = ir.Sym(ir.BOOL, "le")
            right = ir.Block([ir.Bind(le, ir.Bin("<=", e.a, hi))], le)
            return b.blocks[0].stmts + [
                ir.Bind(stmt.sym, ir.AndThen(ge, right))]
        if e.op == "ends" and a_int and isinstance(e.b, ir.Const) and sa:
            tbl = self._intrinsic("suffix_table", sa[0], e.b.value, "sfx")
            return [ir.Bind(stmt.sym, ir.ArrayGet(tbl, e.a))]
        if e.op == "slice" and a_toks and isinstance(e.b, ir.Const) and sa:
            wc = self._intrinsic("word_code", sa[0], e.b.value, "wcode")
            base_field = None
            de = defs.get(e.a)
            if isinstance(de, ir.FieldGet):
                base_field = (de.base, de.name)
            if base_field is None:
                return [stmt]
            n = b.bind(ir.FieldGet(base_field[0], base_field[1] + "__n"), "ntok")
            found = b.var(ir.FALSE, "found")
            with b.for_range(ir.Const(0, ir.INT), n, "t") as t:
                tok = b.bind(ir.ArrayGet(e.a, t), "tok")
                m = b.bind(ir.Bin("==", tok, wc), "m")
                f = b.bind(ir.VarGet(found), "f")
                f2 = b.bind(ir.Bin("|", f, m), "f2")
                b.set(found, f2)
            return b.blocks[0].stmts + [ir.Bind(stmt.sym, ir.VarGet(found))]
        if e.op == "cmp" and a_int and b_int:
            return [ir.Bind(stmt.sym, ir.Bin("-", e.a, e.b))]
        return [stmt]

    def _fix_containers(self, program):
        """Map key types follow their (possibly re-coded) key expressions."""
        key_types = {}
        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(
                    stmt.expr, ir.MapGetOrElseUpdate):
                if isinstance(stmt.expr.map, ir.Sym):
                    key_types[stmt.expr.map] = stmt.expr.key.ty
            elif isinstance(stmt, ir.MultiMapAdd) and isinstance(
                    stmt.map, ir.Sym):
                key_types[stmt.map] = stmt.key.ty

        def visit(stmt):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.MapNew):
                kt = key_types.get(stmt.sym)
                if kt is not None and kt != stmt.expr.key:
                    stmt = ir.Bind(stmt.sym, ir.MapNew(kt, stmt.expr.value))
                stmt.sym.ty = ir.HashMapType(stmt.expr.key, stmt.expr.value)
                return stmt
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr,
                                                        ir.MultiMapNew):
                kt = key_types.get(stmt.sym)
                if kt is not None and kt != stmt.expr.key:
                    stmt = ir.Bind(stmt.sym,
                                   ir.MultiMapNew(kt, stmt.expr.value))
                stmt.sym.ty = ir.MultiMapType(stmt.expr.key, stmt.expr.value)
                return stmt
            if isinstance(stmt, ir.MapForeach):
                mt = ir.resolve(stmt.map.ty, program.records)
                if isinstance(mt, ir.HashMapType):
                    stmt.fn.params[0].ty = mt.key
                    stmt.fn.params[1].ty = mt.value
                    src = None
                    doms = stmt.map.attrs.get("agg_domain") or []
                    if len(doms) == 1:
                        src = tuple(doms[0])
                        kind = None
                        # key decode provenance for printed group keys
                        for (rel, attr), k in self._coded_items:
                            if (rel, attr) == src:
                                kind = k
                        if kind in ("normal", "ordered"):
                            self._dict_source[stmt.fn.params[0]] = (src, kind)
                return stmt
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr,
                                                        ir.MapGetOrElseUpdate):
                mt = ir.resolve(stmt.expr.map.ty, program.records)
                if isinstance(mt, ir.HashMapType):
                    stmt.sym.ty = mt.value
                return stmt
            return stmt

        program.setup.stmts[:] = [s for s in tr.map_blocks_deep(
            program.setup, visit).stmts]
        program.body.stmts[:] = [s for s in tr.map_blocks_deep(
            program.body, visit).stmts]
