"""Lowering HIGH-level programs to the C-like level.

Records become by-reference values (pointers), record allocation becomes raw
allocation plus field stores, arrays over records split into contiguous
storage (inputs, partition buckets) and pointer arrays (program-built), and
any hash map or multimap still present maps onto the generic-map runtime
routines shipped with the C header (or is rejected when the fallback is
disabled). Scalars, loops and conditionals correspond one to one.
"""

from __future__ import annotations

from .. import ir
from .. import transform as tr


class LoweringError(ValueError):
    pass


def _is_rec(ty):
    return isinstance(ty, (ir.Rec, ir.RecordType))


def _exact_pack(parts):
    """True when the key fields pack injectively into 64 bits."""
    bits = 0
    for _, t in parts:
        if t in (ir.INT, ir.DATE):
            bits += 32
        elif t in (ir.CHAR, ir.BOOL):
            bits += 8
        elif t == ir.DOUBLE:
            bits += 64
        else:
            return False
    return bits <= 64


class Lowerer:
    def __init__(self, program, fallback=True):
        self.program = program
        self.fallback = fallback
        self.records = dict(program.records)
        self.symmap = {}
        self.gmaps = {}      # old map sym -> descriptor
        self.counter = [0]

    # -- types ----------------------------------------------------------------

    def lower_type(self, ty, input_root=False, pk1=False):
        if _is_rec(ty):
            return ir.PointerType(ty if isinstance(ty, ir.Rec)
                                  else ir.Rec(ty.name))
        if isinstance(ty, ir.ArrayType):
            if _is_rec(ty.elem):
                if input_root and not pk1:
                    return ir.ArrayType(ty.elem)      # contiguous rows
                return ir.ArrayType(ir.PointerType(
                    ty.elem if isinstance(ty.elem, ir.Rec)
                    else ir.Rec(ty.elem.name)))
            return ir.ArrayType(self.lower_type(ty.elem,
                                                input_root=input_root))
        if isinstance(ty, (ir.HashMapType, ir.MultiMapType, ir.SeqType)):
            return ir.RAWPTR
        return ty

    def map_atom(self, atom):
        if isinstance(atom, ir.Sym):
            if atom not in self.symmap:
                # symbol defined later or missing: map lazily with its type
                self.symmap[atom] = ir.Sym(self.lower_type(atom.ty),
                                           atom.hint, dict(atom.attrs))
            return self.symmap[atom]
        if isinstance(atom, ir.Const):
            if atom.value is None and _is_rec(atom.ty):
                return ir.Const(None, self.lower_type(atom.ty))
            return atom
        return atom

    def fresh_from(self, sym, ty=None):
        s2 = ir.Sym(ty if ty is not None else self.lower_type(sym.ty),
                    sym.hint, dict(sym.attrs))
        self.symmap[sym] = s2
        return s2

    # -- driver -----------------------------------------------------------------

    def run(self):
        program = self.program
        # record-typed fields become pointers (next chains, nested records)
        for name, rt in list(self.records.items()):
            fields = tuple(
                (fn, ir.PointerType(ft if isinstance(ft, ir.Rec)
                                    else ir.Rec(ft.name))
                 if _is_rec(ft) else ft)
                for fn, ft in rt.fields)
            self.records[name] = ir.RecordType(name, fields)
        inputs = []
        for decl in program.inputs:
            inputs.append(self._lower_decl(decl))
        setup = self.lower_block(program.setup)
        body = self.lower_block(program.body)
        return ir.Program(level=ir.LOW, inputs=inputs, setup=setup, body=body,
                          records=self.records, meta=dict(program.meta))

    def _lower_decl(self, decl):
        import copy
        d2 = copy.copy(decl)
        d2.coded = dict(decl.coded)
        d2.attrs = list(decl.attrs)
        if isinstance(decl, ir.TableIn):
            d2.sym = self.fresh_from(
                decl.sym, self.lower_type(decl.sym.ty, input_root=True))
        else:
            pk1 = isinstance(decl, ir.PartIn) and decl.kind == "pk1"
            d2.data = self.fresh_from(
                decl.data, self.lower_type(decl.data.ty, input_root=True,
                                           pk1=pk1))
            if decl.counts is not None:
                d2.counts = self.fresh_from(decl.counts)
        return d2

    def lower_block(self, block):
        out = []
        for stmt in block.stmts:
            out.extend(self.lower_stmt(stmt))
        return ir.Block(out, self.map_atom(block.result))

    def lam(self, fn):
        params = tuple(self.fresh_from(p) for p in fn.params)
        return ir.Lambda(params, self.lower_block(fn.body))

    # -- statements ----------------------------------------------------------------

    def lower_stmt(self, stmt):
        m = self.map_atom
        if isinstance(stmt, ir.Bind):
            return self.lower_bind(stmt)
        if isinstance(stmt, ir.VarDecl):
            return [ir.VarDecl(self.fresh_from(stmt.var), m(stmt.init))]
        if isinstance(stmt, ir.VarSet):
            return [ir.VarSet(m(stmt.var), m(stmt.value))]
        if isinstance(stmt, ir.ArraySet):
            return [ir.ArraySet(m(stmt.arr), m(stmt.idx), m(stmt.value))]
        if isinstance(stmt, ir.FieldSet):
            return [ir.FieldSet(m(stmt.base), stmt.name, m(stmt.value))]
        if isinstance(stmt, ir.While):
            return [ir.While(self.lower_block(stmt.cond),
                             self.lower_block(stmt.body))]
        if isinstance(stmt, ir.ForRange):
            var = self.fresh_from(stmt.var)
            step = m(stmt.step) if stmt.step is not None else None
            return [ir.ForRange(var, m(stmt.start), m(stmt.stop),
                                self.lower_block(stmt.body), step,
                                dict(stmt.attrs))]
        if isinstance(stmt, ir.If):
            els = self.lower_block(stmt.els) if stmt.els is not None else None
            return [ir.If(m(stmt.cond), self.lower_block(stmt.then), els)]
        if isinstance(stmt, ir.SortStmt):
            return [ir.SortStmt(m(stmt.arr), m(stmt.length),
                                self.lam(stmt.cmp))]
        if isinstance(stmt, ir.EmitRow):
            return [ir.EmitRow(tuple(m(v) for v in stmt.values))]
        if isinstance(stmt, ir.MultiMapAdd):
            return self._gmap_multimap_add(stmt)
        if isinstance(stmt, ir.MultiMapForeachAt):
            return self._gmap_multimap_foreach(stmt)
        if isinstance(stmt, ir.MapForeach):
            return self._gmap_map_foreach(stmt)
        if isinstance(stmt, (ir.SeqAppend, ir.SeqForeach)):
            return self._gvec_seq(stmt)
        raise LoweringError(f"no lowering rule for {type(stmt).__name__}")

    def lower_bind(self, stmt):
        m = self.map_atom
        e = stmt.expr
        if isinstance(e, ir.AtomExpr):
            return [ir.Bind(self.fresh_from(stmt.sym, m(e.atom).ty),
                            ir.AtomExpr(m(e.atom)))]
        if isinstance(e, ir.Bin):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.Bin(e.op, m(e.a), m(e.b)))]
        if isinstance(e, ir.Un):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.Un(e.op, m(e.a)))]
        if isinstance(e, ir.StrOp):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.StrOp(e.op, m(e.a), m(e.b)))]
        if isinstance(e, ir.RecordNew):
            # by-reference construction: allocate, then store each field
            out = []
            buf = ir.Sym(ir.ArrayType(ir.Rec(e.rec)), "m")
            alloc_attrs = {}
            if "cap_hint" in stmt.sym.attrs:
                alloc_attrs["cap_hint"] = stmt.sym.attrs["cap_hint"]
            out.append(ir.Bind(buf, ir.Alloc(ir.Rec(e.rec),
                                             ir.Const(1, ir.INT),
                                             alloc_attrs)))
            ptr = self.fresh_from(stmt.sym, ir.PointerType(ir.Rec(e.rec)))
            out.append(ir.Bind(ptr, ir.ArrayAddr(buf, ir.Const(0, ir.INT))))
            for name, a in e.values:
                out.append(ir.FieldSet(ptr, name, m(a)))
            return out
        if isinstance(e, ir.FieldGet):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.FieldGet(m(e.base), e.name))]
        if isinstance(e, ir.ArrayNew):
            elem = e.elem
            if _is_rec(elem):
                low_elem = ir.PointerType(elem if isinstance(elem, ir.Rec)
                                          else ir.Rec(elem.name))
            else:
                low_elem = self.lower_type(elem)
            sym = self.fresh_from(stmt.sym, ir.ArrayType(low_elem))
            attrs = {}
            if "cap_hint" in stmt.sym.attrs:
                attrs["cap_hint"] = stmt.sym.attrs["cap_hint"]
            return [ir.Bind(sym, ir.Alloc(low_elem, m(e.size), attrs))]
        if isinstance(e, ir.ArrayGet):
            arr = m(e.arr)
            elem = arr.ty.elem if isinstance(arr.ty, ir.ArrayType) else None
            if _is_rec(elem):
                # contiguous row storage: indexing takes the row's address
                return [ir.Bind(self.fresh_from(stmt.sym,
                                                ir.PointerType(elem)),
                                ir.ArrayAddr(arr, m(e.idx)))]
            return [ir.Bind(self.fresh_from(stmt.sym, elem),
                            ir.ArrayGet(arr, m(e.idx)))]
        if isinstance(e, ir.ArrayLen):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.ArrayLen(m(e.arr)))]
        if isinstance(e, ir.Ternary):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.Ternary(m(e.cond), self.lower_block(e.then),
                                       self.lower_block(e.els)))]
        if isinstance(e, ir.AndThen):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.AndThen(m(e.left), self.lower_block(e.right)))]
        if isinstance(e, ir.OrElse):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.OrElse(m(e.left), self.lower_block(e.right)))]
        if isinstance(e, (ir.DictIntrinsic,)):
            return [ir.Bind(self.fresh_from(stmt.sym), e)]
        if isinstance(e, ir.DictDecode):
            return [ir.Bind(self.fresh_from(stmt.sym),
                            ir.DictDecode(e.relation, e.attr, m(e.code)))]
        if isinstance(e, (ir.MapNew, ir.MultiMapNew, ir.SeqNew)):
            return self._gmap_new(stmt)
        if isinstance(e, ir.MapGetOrElseUpdate):
            return self._gmap_goeu(stmt)
        if isinstance(e, ir.MultiMapNonEmpty):
            return self._gmap_nonempty(stmt)
        if isinstance(e, (ir.Alloc, ir.ArrayAddr, ir.ArraySlice, ir.Cast,
                          ir.GKey, ir.GMapNew, ir.GMapGet, ir.GMapLen,
                          ir.GMapEntryKey, ir.GMapEntryVal, ir.GVecNew,
                          ir.GVecLen, ir.GVecGet, ir.VarGet)):
            # already C-level; remap atoms only
            new = tr.substitute_expr(e, m)
            if isinstance(e, ir.VarGet):
                new = ir.VarGet(m(e.var))
            return [ir.Bind(self.fresh_from(stmt.sym), new)]
        raise LoweringError(f"no lowering rule for {type(e).__name__}")

    # -- generic-map fallback ----------------------------------------------------

    def _require_fallback(self, sym):
        if not self.fallback:
            raise LoweringError(
                f"residual generic map {sym!r} and the fallback runtime "
                "is disabled")

    def _gmap_new(self, stmt):
        self._require_fallback(stmt.sym)
        e = stmt.expr
        if isinstance(e, ir.SeqNew):
            sym = self.fresh_from(stmt.sym, ir.RAWPTR)
            return [ir.Bind(sym, ir.GVecNew())]
        key_ty = e.key
        kt = ir.resolve(key_ty, self.records)
        if isinstance(kt, ir.RecordType):
            parts = list(kt.fields)
        else:
            parts = [("key", kt)]
        exact = _exact_pack(parts)
        desc = {
            "kind": "map" if isinstance(e, ir.MapNew) else "multimap",
            "parts": parts,
            "exact": exact,
            "key_is_record": isinstance(kt, ir.RecordType),
            "key_ty": key_ty,
        }
        if isinstance(e, ir.MapNew):
            self.counter[0] += 1
            ename = f"GE{self.counter[0]}"
            vty = self.lower_type(e.value)
            fields = tuple((f"k_{n}", self.lower_type(t)) for n, t in parts)
            fields += (("val", vty), ("next", ir.PointerType(ir.Rec(ename))))
            self.records[ename] = ir.RecordType(ename, fields)
            desc["entry"] = ename
            desc["val_ty"] = vty
        else:
            desc["value_rec"] = e.value
        self.gmaps[stmt.sym] = desc
        sym = self.fresh_from(stmt.sym, ir.RAWPTR)
        return [ir.Bind(sym, ir.GMapNew())]

    def _key_parts(self, b, key_atom, desc):
        if not desc["key_is_record"]:
            return [key_atom]
        return [b.bind(ir.FieldGet(key_atom, n), n.lower())
                for n, _ in desc["parts"]]

    def _gmap_multimap_add(self, stmt):
        if stmt.map not in self.gmaps:
            raise LoweringError(f"addBinding on unknown map {stmt.map!r}")
        desc = self.gmaps[stmt.map]
        m = self.map_atom
        b = ir.Builder(self.records)
        parts = self._key_parts(b, m(stmt.key), desc)
        k64 = b.bind(ir.GKey(tuple(parts), desc["exact"]), "k64")
        vec0 = b.bind(ir.GMapGet(m(stmt.map), k64), "vec")
        miss = b.bind(ir.Bin("==", vec0, ir.Const(None, ir.RAWPTR)), "miss")
        b.push()
        nv = b.bind(ir.GVecNew(), "nv")
        b.emit(ir.GMapPut(m(stmt.map), k64, nv))
        then = b.pop(nv)
        vec = b.bind(ir.Ternary(miss, then, ir.Block([], vec0)), "vec")
        val = b.bind(ir.Cast(ir.RAWPTR, m(stmt.value)), "vp")
        b.emit(ir.GVecPush(vec, val))
        return b.blocks[0].stmts

    def _gmap_multimap_foreach(self, stmt):
        desc = self.gmaps.get(stmt.map)
        if desc is None:
            raise LoweringError(f"foreach on unknown map {stmt.map!r}")
        m = self.map_atom
        b = ir.Builder(self.records)
        parts = self._key_parts(b, m(stmt.key), desc)
        k64 = b.bind(ir.GKey(tuple(parts), desc["exact"]), "k64")
        vec = b.bind(ir.GMapGet(m(stmt.map), k64), "vec")
        nn = b.bind(ir.Bin("!=", vec, ir.Const(None, ir.RAWPTR)), "nn")
        param = stmt.fn.params[0]
        with b.if_(nn):
            n = b.bind(ir.GVecLen(vec), "n")
            with b.for_range(ir.Const(0, ir.INT), n, "vi") as vi:
                raw = b.bind(ir.GVecGet(vec, vi), "raw")
                pty = ir.PointerType(desc["value_rec"]
                                     if isinstance(desc["value_rec"], ir.Rec)
                                     else ir.Rec(desc["value_rec"].name))
                elem = ir.Sym(pty, param.hint)
                b.emit(ir.Bind(elem, ir.Cast(pty, raw)))
                self.symmap[param] = elem
                inner = self.lower_block(stmt.fn.body)
                b.block.stmts.extend(inner.stmts)
        return b.blocks[0].stmts

    def _gmap_nonempty(self, stmt):
        desc = self.gmaps.get(stmt.expr.map)
        if desc is None:
            raise LoweringError(f"nonEmpty on unknown map {stmt.expr.map!r}")
        m = self.map_atom
        b = ir.Builder(self.records)
        parts = self._key_parts(b, m(stmt.expr.key), desc)
        k64 = b.bind(ir.GKey(tuple(parts), desc["exact"]), "k64")
        vec = b.bind(ir.GMapGet(m(stmt.expr.map), k64), "vec")
        return b.blocks[0].stmts + [
            ir.Bind(self.fresh_from(stmt.sym, ir.BOOL),
                    ir.Bin("!=", vec, ir.Const(None, ir.RAWPTR)))]

    def _gmap_goeu(self, stmt):
        e = stmt.expr
        desc = self.gmaps.get(e.map)
        if desc is None:
            raise LoweringError(f"getOrElseUpdate on unknown map {e.map!r}")
        m = self.map_atom
        b = ir.Builder(self.records)
        ename = desc["entry"]
        ept = ir.PointerType(ir.Rec(ename))
        nullp = ir.Const(None, ept)
        parts = self._key_parts(b, m(e.key), desc)
        k64 = b.bind(ir.GKey(tuple(parts), desc["exact"]), "k64")
        raw = b.bind(ir.GMapGet(m(e.map), k64), "raw")
        head = b.bind(ir.Cast(ept, raw), "head")
        cur = b.var(head, "cur")
        with b.while_() as w:
            cg = b.bind(ir.VarGet(cur), "cg")
            nn = b.bind(ir.Bin("!=", cg, nullp), "nn")
            b.push()
            eq = None
            for (n, _), ka in zip(desc["parts"], parts):
                fv = b.bind(ir.FieldGet(cg, f"k_{n}"), "kf")
                if fv.ty == ir.STRING:
                    c = b.bind(ir.StrOp("eq", fv, ka))
                else:
                    c = b.bind(ir.Bin("==", fv, ka))
                eq = c if eq is None else b.bind(ir.Bin("&", eq, c))
            ne = b.bind(ir.Un("not", eq), "ne")
            rb = b.pop(ne)
            cont = b.bind(ir.AndThen(nn, rb), "cont")
            w.cond(cont)
            c2 = b.bind(ir.VarGet(cur), "c2")
            nx = b.bind(ir.FieldGet(c2, "next"), "nx")
            b.set(cur, nx)
        f = b.get(cur, "found")
        miss = b.bind(ir.Bin("==", f, nullp), "miss")
        b.push()
        dblk = self.lower_block(e.default.body)
        b.block.stmts.extend(dblk.stmts)
        buf = ir.Sym(ir.ArrayType(ir.Rec(ename)), "m")
        b.emit(ir.Bind(buf, ir.Alloc(ir.Rec(ename), ir.Const(1, ir.INT),
                                     dict(stmt.sym.attrs))))
        entry = b.bind(ir.ArrayAddr(buf, ir.Const(0, ir.INT)), "e")
        for (n, _), ka in zip(desc["parts"], parts):
            b.emit(ir.FieldSet(entry, f"k_{n}", ka))
        b.emit(ir.FieldSet(entry, "val", dblk.result))
        b.emit(ir.FieldSet(entry, "next", head))
        b.emit(ir.GMapPut(m(e.map), k64, b.bind(ir.Cast(ir.RAWPTR, entry),
                                                "ep")))
        then = b.pop(entry)
        got = b.bind(ir.Ternary(miss, then, ir.Block([], f)), "entry")
        res = self.fresh_from(stmt.sym, desc["val_ty"])
        return b.blocks[0].stmts + [ir.Bind(res, ir.FieldGet(got, "val"))]

    def _gmap_map_foreach(self, stmt):
        desc = self.gmaps.get(stmt.map)
        if desc is None:
            raise LoweringError(f"foreach on unknown map {stmt.map!r}")
        m = self.map_atom
        b = ir.Builder(self.records)
        ename = desc["entry"]
        ept = ir.PointerType(ir.Rec(ename))
        nullp = ir.Const(None, ept)
        kp, vp = stmt.fn.params
        n = b.bind(ir.GMapLen(m(stmt.map)), "n")
        with b.for_range(ir.Const(0, ir.INT), n, "mi") as mi:
            raw = b.bind(ir.GMapEntryVal(m(stmt.map), mi), "raw")
            head = b.bind(ir.Cast(ept, raw), "head")
            cur = b.var(head, "cur")
            with b.while_() as w:
                cg = b.bind(ir.VarGet(cur), "cg")
                c = b.bind(ir.Bin("!=", cg, nullp), "c")
                w.cond(c)
                e2 = b.bind(ir.VarGet(cur), "e")
                if desc["key_is_record"]:
                    parts = tuple(
                        (nm, b.bind(ir.FieldGet(e2, f"k_{nm}"), "k"))
                        for nm, _ in desc["parts"])
                    krec = desc["key_ty"].name
                    kv = ir.Sym(ir.PointerType(ir.Rec(krec)), kp.hint)
                    buf = ir.Sym(ir.ArrayType(ir.Rec(krec)), "m")
                    b.emit(ir.Bind(buf, ir.Alloc(ir.Rec(krec),
                                                 ir.Const(1, ir.INT))))
                    b.emit(ir.Bind(kv, ir.ArrayAddr(buf, ir.Const(0, ir.INT))))
                    for nm, a in parts:
                        b.emit(ir.FieldSet(kv, nm, a))
                else:
                    kv = b.bind(ir.FieldGet(e2, f"k_{desc['parts'][0][0]}"),
                                "k")
                vv = b.bind(ir.FieldGet(e2, "val"), "vals")
                self.symmap[kp] = kv
                self.symmap[vp] = vv
                inner = self.lower_block(stmt.fn.body)
                b.block.stmts.extend(inner.stmts)
                nx = b.bind(ir.FieldGet(e2, "next"), "nx")
                b.set(cur, nx)
        return b.blocks[0].stmts

    def _gvec_seq(self, stmt):
        self._require_fallback(getattr(stmt, "seq", None))
        m = self.map_atom
        if isinstance(stmt, ir.SeqAppend):
            b = ir.Builder(self.records)
            val = b.bind(ir.Cast(ir.RAWPTR, m(stmt.value)), "vp")
            b.emit(ir.GVecPush(m(stmt.seq), val))
            return b.blocks[0].stmts
        raise LoweringError("sequence iteration has no direct lowering")


def lower_to_c_level(program, fallback=True):
    """HIGH to LOW; residual collection nodes go through the generic-map
    runtime when `fallback` is set, otherwise they are errors."""
    if program.level == ir.LOW:
        return program
    return Lowerer(program, fallback).run()
