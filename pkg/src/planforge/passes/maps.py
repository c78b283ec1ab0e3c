"""Hash map specialization.

SingletonMapPass turns maps whose every access uses one compile-time key into
a single value binding. MultiMapLoweringPass converts the remaining maps to
native arrays: values chain through a `next` field added to their record type,
hash and equality work is inlined at the call sites, and bucket counts come
from a worst-case size analysis. Aggregation maps whose key domain will be
enumerable at load time are left alone when the code-motion phase is enabled,
which converts them to directly indexed arrays instead.
"""

from __future__ import annotations

from .. import ir
from .. import transform as tr
from . import common


class SingletonMapPass(tr.Transformer):
    name = "singleton-map"

    def __init__(self):
        super().__init__("singleton-map")

    def fresh(self):
        return SingletonMapPass()

    def transform(self, program):
        # maps whose getOrElseUpdate keys are all the same constant
        keys = {}
        foreachs = {}
        goeus = {}
        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr,
                                                        ir.MapGetOrElseUpdate):
                e = stmt.expr
                if isinstance(e.map, ir.Sym):
                    keys.setdefault(e.map, set()).add(
                        e.key.value if isinstance(e.key, ir.Const) else object())
                    goeus.setdefault(e.map, []).append(stmt)
            elif isinstance(stmt, ir.MapForeach) and isinstance(stmt.map, ir.Sym):
                foreachs.setdefault(stmt.map, []).append(stmt)

        singles = {}
        for mm, ks in keys.items():
            if len(ks) == 1 and all(isinstance(k, (int, float, str, bool))
                                    for k in ks):
                singles[mm] = goeus[mm][0].expr
        if not singles:
            return program

        slots = {}     # map sym -> (slot sym, touched var, key const)
        self._out = {}

        def visit(stmt):
            if isinstance(stmt, ir.Bind) and stmt.sym in singles:
                goeu = singles[stmt.sym]
                b = ir.Builder(dict(program.records))
                cl = common.Cloner()
                blk = cl.block(goeu.default.body)
                b.block.stmts.extend(blk.stmts)
                slot = blk.result
                touched = b.var(ir.FALSE, "touched")
                slots[stmt.sym] = (slot, touched, goeu.key)
                return b.blocks[0].stmts
            if isinstance(stmt, ir.Bind) and isinstance(
                    stmt.expr, ir.MapGetOrElseUpdate) and \
                    stmt.expr.map in slots:
                slot, touched, _ = slots[stmt.expr.map]
                return [ir.VarSet(touched, ir.TRUE),
                        ir.Bind(stmt.sym, ir.AtomExpr(slot))]
            if isinstance(stmt, ir.MapForeach) and stmt.map in slots:
                slot, touched, key = slots[stmt.map]
                kp, vp = stmt.fn.params
                t = ir.Sym(ir.BOOL, "t")
                inner = common.clone_stmts(stmt.fn.body.stmts,
                                           {kp: key, vp: slot})
                return [ir.Bind(t, ir.VarGet(touched)),
                        ir.If(t, ir.Block(inner), None)]
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return tr.rebuild_program(program, body=body)


def agg_domain_dims(map_attrs, catalog, settings, cap=1 << 16):
    """Dense index dimensions for an aggregation map keyed by base-relation
    attributes, when load statistics make the domain enumerable and small:
    direct indexing a domain much larger than the data wastes the memory the
    two-times bound protects."""
    from .. import catalog as cat
    doms = map_attrs.get("agg_domain")
    if not doms:
        return None
    dims = []
    total = 1
    max_rows = 0
    for rel_name, attr in doms:
        rel = catalog.relations.get(rel_name)
        st = rel.stats.attrs.get(attr) if rel and rel.stats else None
        if st is None or st.min_value is None:
            return None
        max_rows = max(max_rows, rel.stats.row_count)
        ty = rel.attr_type(attr)
        if ty == cat.STRING:
            if not getattr(settings, "string_dictionary", False):
                return None
            lo, hi = 0, st.distinct - 1
        elif ty in (cat.INT, cat.DATE):
            lo, hi = st.min_value, st.max_value
        elif ty == cat.CHAR:
            lo, hi = ord(st.min_value), ord(st.max_value)
        else:
            return None
        size = hi - lo + 1
        if size <= 0:
            return None
        dims.append({"lo": lo, "size": size, "char": ty == cat.CHAR})
        total *= size
        if total > cap:
            return None
    if total > 4 * max_rows + 64:
        return None
    return dims, total


class MultiMapLoweringPass(tr.Transformer):
    name = "hash-map-lowering"

    def __init__(self, catalog, settings=None):
        super().__init__("hash-map-lowering")
        self.catalog = catalog
        self.settings = settings

    def fresh(self):
        return MultiMapLoweringPass(self.catalog, self.settings)

    def transform(self, program):
        program = self._lower_multimaps(program)
        program = self._lower_hashmaps(program)
        return program

    # -- join multimaps ------------------------------------------------------

    def _provision_next(self, program, rec_name):
        rt = program.records[rec_name]
        if not rt.has_field("next"):
            program.records[rec_name] = ir.RecordType(
                rec_name, rt.fields + (("next", ir.Rec(rec_name)),))

    def _lower_multimaps(self, program):
        targets = {}
        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.MultiMapNew):
                vt = stmt.expr.value
                if isinstance(vt, ir.Rec):
                    targets[stmt.sym] = stmt
        if not targets:
            return program
        program = tr.rebuild_program(program)
        arrays = {}

        def bucket_count(mm):
            hint = min(mm.attrs.get("size_hint", 16), 1 << 20)
            return common.pow2_at_least(max(hint, 1))

        def visit(stmt):
            b = ir.Builder(program.records)
            if isinstance(stmt, ir.Bind) and stmt.sym in targets:
                mm = stmt.sym
                rec = stmt.expr.value.name
                self._provision_next(program, rec)
                n = bucket_count(mm)
                arr = ir.Sym(ir.ArrayType(ir.Rec(rec)), "buckets",
                             {"bucket_count": n})
                arrays[mm] = (arr, n, rec)
                return [ir.Bind(arr, ir.ArrayNew(ir.Rec(rec),
                                                 ir.Const(n, ir.INT)))]
            if isinstance(stmt, ir.MultiMapAdd) and stmt.map in arrays:
                arr, n, rec = arrays[stmt.map]
                h = b.bind(ir.Un("hash", stmt.key), "h")
                hb = b.bind(ir.Bin("%", h, ir.Const(n, ir.INT)), "hb")
                old = b.bind(ir.ArrayGet(arr, hb), "old")
                b.emit(ir.FieldSet(stmt.value, "next", old))
                b.emit(ir.ArraySet(arr, hb, stmt.value))
                return b.blocks[0].stmts
            if isinstance(stmt, ir.Bind) and isinstance(
                    stmt.expr, ir.MultiMapNonEmpty) and stmt.expr.map in arrays:
                arr, n, rec = arrays[stmt.expr.map]
                h = b.bind(ir.Un("hash", stmt.expr.key), "h")
                hb = b.bind(ir.Bin("%", h, ir.Const(n, ir.INT)), "hb")
                e = b.bind(ir.ArrayGet(arr, hb), "head")
                return b.blocks[0].stmts + [
                    ir.Bind(stmt.sym, ir.Bin("!=", e, ir.null(ir.Rec(rec))))]
            if isinstance(stmt, ir.MultiMapForeachAt) and stmt.map in arrays:
                arr, n, rec = arrays[stmt.map]
                # chain walk; collisions are filtered by the residual join
                # predicate inside the consumer body
                h = b.bind(ir.Un("hash", stmt.key), "h")
                hb = b.bind(ir.Bin("%", h, ir.Const(n, ir.INT)), "hb")
                head = b.bind(ir.ArrayGet(arr, hb), "head")
                cur = b.var(head, "cur")
                with b.while_() as w:
                    cg = b.bind(ir.VarGet(cur), "cg")
                    c = b.bind(ir.Bin("!=", cg, ir.null(ir.Rec(rec))), "c")
                    w.cond(c)
                    e = b.bind(ir.VarGet(cur), "e")
                    param = stmt.fn.params[0]
                    b.block.stmts.extend(
                        common.clone_stmts(stmt.fn.body.stmts, {param: e}))
                    nx = b.bind(ir.FieldGet(e, "next"), "nx")
                    b.set(cur, nx)
                return b.blocks[0].stmts
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return tr.rebuild_program(program, body=body)

    # -- aggregation hashmaps --------------------------------------------------

    def _lower_hashmaps(self, program):
        targets = {}
        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.MapNew):
                if self.settings is not None and getattr(
                        self.settings, "ds_code_motion", False):
                    if agg_domain_dims(stmt.sym.attrs, self.catalog,
                                       self.settings):
                        continue  # direct-indexed by the hoisting phase
                targets[stmt.sym] = stmt
        if not targets:
            return program
        program = tr.rebuild_program(program)
        lowered = {}
        counter = [0]

        def key_fields(key_ty):
            kt = ir.resolve(key_ty, program.records)
            if isinstance(kt, ir.RecordType):
                return list(kt.fields)
            return [("key", kt)]

        def visit(stmt):
            b = ir.Builder(program.records)
            if isinstance(stmt, ir.Bind) and stmt.sym in targets:
                mm = stmt.sym
                kf = key_fields(stmt.expr.key)
                counter[0] += 1
                ename = f"E{counter[0]}"
                fields = tuple((f"k_{n}", t) for n, t in kf) + (
                    ("val", stmt.expr.value), ("next", ir.Rec(ename)))
                program.records[ename] = ir.RecordType(ename, fields)
                n = common.pow2_at_least(
                    max(min(mm.attrs.get("size_hint", 16), 1 << 20), 1))
                arr = ir.Sym(ir.ArrayType(ir.Rec(ename)), "dir",
                             {"bucket_count": n})
                cap = mm.attrs.get("size_hint", 1 << 16)
                lowered[mm] = (arr, n, ename, kf, cap)
                return [ir.Bind(arr, ir.ArrayNew(ir.Rec(ename),
                                                 ir.Const(n, ir.INT)))]
            if isinstance(stmt, ir.Bind) and isinstance(
                    stmt.expr, ir.MapGetOrElseUpdate) and \
                    stmt.expr.map in lowered:
                arr, n, ename, kf, cap = lowered[stmt.expr.map]
                key = stmt.expr.key
                komponents = self._key_atoms(b, key, kf)
                h = None
                for ka in komponents:
                    hk = b.bind(ir.Un("hash", ka), "h")
                    h = hk if h is None else b.bind(ir.Bin("hmix", h, hk), "h")
                hb = b.bind(ir.Bin("%", h, ir.Const(n, ir.INT)), "hb")
                head = b.bind(ir.ArrayGet(arr, hb), "head")
                cur = b.var(head, "cur")
                with b.while_() as w:
                    cg = b.bind(ir.VarGet(cur), "cg")
                    nn = b.bind(ir.Bin("!=", cg, ir.null(ir.Rec(ename))), "nn")
                    b.push()
                    eq = None
                    for (fn, _), ka in zip(kf, komponents):
                        fv = b.bind(ir.FieldGet(cg, f"k_{fn}"), "kf")
                        c = b.bind(_eq(fv, ka, b))
                        eq = c if eq is None else b.bind(ir.Bin("&", eq, c))
                    ne = b.bind(ir.Un("not", eq), "ne")
                    rb = b.pop(ne)
                    cont = b.bind(ir.AndThen(nn, rb), "cont")
                    w.cond(cont)
                    c2 = b.bind(ir.VarGet(cur), "c2")
                    nx = b.bind(ir.FieldGet(c2, "next"), "nx")
                    b.set(cur, nx)
                f = b.get(cur, "found")
                miss = b.bind(ir.Bin("==", f, ir.null(ir.Rec(ename))), "miss")
                b.push()
                cl = common.Cloner()
                dblk = cl.block(stmt.expr.default.body)
                for ds in dblk.stmts:
                    if isinstance(ds, ir.Bind) and isinstance(ds.expr, ir.ArrayNew):
                        ds.sym.attrs.setdefault("cap_hint", cap)
                b.block.stmts.extend(dblk.stmts)
                vals = tuple((f"k_{fn}", ka) for (fn, _), ka in zip(kf, komponents))
                oldh = b.bind(ir.ArrayGet(arr, hb), "oldh")
                entry = b.bind(ir.RecordNew(
                    ename, vals + (("val", dblk.result), ("next", oldh))), "e",
                    {"cap_hint": cap})
                b.emit(ir.ArraySet(arr, hb, entry))
                then_blk = b.pop(entry)
                got = b.bind(ir.Ternary(miss, then_blk, ir.Block([], f)),
                             "entry")
                return b.blocks[0].stmts + [
                    ir.Bind(stmt.sym, ir.FieldGet(got, "val"))]
            if isinstance(stmt, ir.MapForeach) and stmt.map in lowered:
                arr, n, ename, kf, cap = lowered[stmt.map]
                kp, vp = stmt.fn.params
                with b.for_range(ir.Const(0, ir.INT), ir.Const(n, ir.INT),
                                 "bx") as bx:
                    head = b.bind(ir.ArrayGet(arr, bx), "head")
                    cur = b.var(head, "cur")
                    with b.while_() as w:
                        cg = b.bind(ir.VarGet(cur), "cg")
                        c = b.bind(ir.Bin("!=", cg, ir.null(ir.Rec(ename))), "c")
                        w.cond(c)
                        e = b.bind(ir.VarGet(cur), "e")
                        v2 = b.bind(ir.FieldGet(e, "val"), "vals")
                        if len(kf) == 1:
                            k2 = b.bind(ir.FieldGet(e, f"k_{kf[0][0]}"), "k")
                        else:
                            parts = tuple(
                                (fn, b.bind(ir.FieldGet(e, f"k_{fn}"), "k"))
                                for fn, _ in kf)
                            krec = ir.resolve(kp.ty, program.records).name
                            k2 = b.bind(ir.RecordNew(krec, parts), "key")
                        b.block.stmts.extend(common.clone_stmts(
                            stmt.fn.body.stmts, {kp: k2, vp: v2}))
                        nx = b.bind(ir.FieldGet(e, "next"), "nx")
                        b.set(cur, nx)
                return b.blocks[0].stmts
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return tr.rebuild_program(program, body=body)

    def _key_atoms(self, b, key, kf):
        if len(kf) == 1 and kf[0][0] == "key":
            return [key]
        return [b.bind(ir.FieldGet(key, fn), fn.lower()) for fn, _ in kf]


def _eq(a, b2, b):
    if a.ty == ir.STRING:
        return ir.StrOp("eq", a, b2)
    return ir.Bin("==", a, b2)
