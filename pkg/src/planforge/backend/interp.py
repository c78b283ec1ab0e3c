"""Reference interpreter: executes programs at either level against a
RuntimeDb, producing canonical result rows plus execution counters.

Statements compile to nested Python closures once, then run against an
environment dict; this keeps desk-scale runs (hundreds of thousands of
tuples) tolerable while staying an interpreter semantically.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass

from .. import catalog as cat
from .. import ir
from .. import runtime as rt


class InterpError(RuntimeError):
    """Runtime type violation; signals a compiler bug upstream."""


@dataclass
class Counters:
    tuples_visited: int = 0
    branches: int = 0
    allocs: int = 0
    bytes_touched: int = 0
    addbinding_ops: int = 0

    def as_dict(self):
        return {
            "tuples_visited": self.tuples_visited,
            "branches": self.branches,
            "allocs": self.allocs,
            "bytes_touched": self.bytes_touched,
            "addbinding_ops": self.addbinding_ops,
        }


_SCALAR_BYTES = {ir.INT: 4, ir.DATE: 4, ir.DOUBLE: 8, ir.CHAR: 1, ir.BOOL: 1}


def hash_value(v):
    """31-bit hash shared with the emitted C code (see runtime.h)."""
    if isinstance(v, bool):
        return 1 if v else 0
    if isinstance(v, int):
        return ((v & 0xFFFFFFFF) * 2654435761) & 0x7FFFFFFF
    if isinstance(v, float):
        bits = struct.unpack("<Q", struct.pack("<d", v))[0]
        return (((bits ^ (bits >> 32)) & 0xFFFFFFFF) * 2654435761) & 0x7FFFFFFF
    if isinstance(v, str):
        h = 2166136261
        for b in v.encode("utf-8"):
            h = ((h ^ b) * 16777619) & 0xFFFFFFFF
        return h & 0x7FFFFFFF
    raise InterpError(f"unhashable value {v!r}")


def gkey_pack(values, exact):
    if exact:
        k = 0
        for v in values:
            if isinstance(v, bool):
                k = ((k << 1) | int(v)) & 0xFFFFFFFFFFFFFFFF
            elif isinstance(v, int):
                k = ((k << 32) | (v & 0xFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF
            elif isinstance(v, float):
                bits = struct.unpack("<Q", struct.pack("<d", v))[0]
                k = bits if k == 0 else (k * 1099511628211 + bits) & 0xFFFFFFFFFFFFFFFF
            elif isinstance(v, str) and len(v) <= 1:
                k = ((k << 8) | (ord(v) if v else 0)) & 0xFFFFFFFFFFFFFFFF
            else:
                raise InterpError(f"inexact part {v!r} in exact key")
        return k
    h = 14695981039346656037
    for v in values:
        if isinstance(v, str):
            data = v.encode("utf-8")
        elif isinstance(v, float):
            data = struct.pack("<d", v)
        else:
            data = struct.pack("<q", int(v))
        for b in data:
            h = ((h ^ b) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
        h = (h ^ 0xFF) * 1099511628211 & 0xFFFFFFFFFFFFFFFF
    return h


class _GMap:
    """Insertion-ordered 64-bit-key map, mirroring the C runtime's rt_map."""

    __slots__ = ("index", "entries")

    def __init__(self):
        self.index = {}
        self.entries = []

    def get(self, k):
        i = self.index.get(k)
        return None if i is None else self.entries[i][1]

    def put(self, k, v):
        i = self.index.get(k)
        if i is None:
            self.index[k] = len(self.entries)
            self.entries.append((k, v))
        else:
            self.entries[i] = (k, v)


def format_value(v, ty):
    if ty == ir.DOUBLE:
        return f"{v:.4f}"
    if ty == ir.DATE:
        return cat.format_date(v)
    if ty == ir.INT:
        return str(v)
    if ty == ir.BOOL:
        return "true" if v else "false"
    return str(v)


_BIN_FUNCS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "%": lambda a, b: a % b,
    "hmix": lambda a, b: (a * 31 + b) & 0x7FFFFFFF,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "&": lambda a, b: a and b,
    "|": lambda a, b: a or b,
    "min": lambda a, b: a if a < b else b,
}


class Interpreter:
    def __init__(self, program, db):
        self.program = program
        self.db = db
        self.counters = Counters()
        self.rows = []
        self.records = program.records

    # -- compilation -------------------------------------------------------

    def _atom(self, atom):
        if isinstance(atom, ir.Const):
            v = atom.value
            return lambda env: v
        sid = atom.id
        return lambda env: env[sid]

    def _expr(self, expr, counted):
        c = self.counters
        if isinstance(expr, ir.AtomExpr):
            return self._atom(expr.atom)
        if isinstance(expr, ir.Bin):
            a, b = self._atom(expr.a), self._atom(expr.b)
            if expr.op == "/":
                ty = expr.a.ty
                if ty == ir.DOUBLE or expr.b.ty == ir.DOUBLE:
                    return lambda env: a(env) / b(env)
                return lambda env: int(a(env) / b(env))
            if expr.op == "==":
                return lambda env: a(env) == b(env)
            if expr.op == "!=":
                return lambda env: a(env) != b(env)
            f = _BIN_FUNCS[expr.op]
            return lambda env: f(a(env), b(env))
        if isinstance(expr, ir.Un):
            a = self._atom(expr.a)
            if expr.op == "not":
                return lambda env: not a(env)
            if expr.op == "neg":
                return lambda env: -a(env)
            if expr.op == "hash":
                return lambda env: hash_value(a(env))
            if expr.op == "code":
                return lambda env: ord(a(env)) if a(env) else 0
            raise InterpError(f"unknown unary {expr.op}")
        if isinstance(expr, ir.RecordNew):
            parts = [(n, self._atom(a)) for n, a in expr.values]
            rec = self.records.get(expr.rec)
            defaults = []
            if rec is not None:
                given = {n for n, _ in expr.values}
                for fn, ft in rec.fields:
                    if fn not in given:
                        defaults.append((fn, _zero_value(ft)))
            if counted:
                def mk(env):
                    c.allocs += 1
                    d = {n: g(env) for n, g in parts}
                    for fn, z in defaults:
                        d[fn] = z
                    return d
                return mk
            def mk_u(env):
                d = {n: g(env) for n, g in parts}
                for fn, z in defaults:
                    d[fn] = z
                return d
            return mk_u
        if isinstance(expr, ir.FieldGet):
            base = self._atom(expr.base)
            name = expr.name
            nb = 8
            def get(env):
                c.bytes_touched += nb
                obj = base(env)
                return obj[name]
            return get
        if isinstance(expr, ir.ArrayNew):
            size = self._atom(expr.size)
            zero = _zero_value(expr.elem)
            if counted:
                def mk(env):
                    c.allocs += 1
                    return [zero] * size(env)
                return mk
            return lambda env: [zero] * size(env)
        if isinstance(expr, (ir.ArrayGet, ir.ArrayAddr)):
            arr, idx = self._atom(expr.arr), self._atom(expr.idx)
            def get(env):
                c.bytes_touched += 8
                a = arr(env)
                i = idx(env)
                v = a[i]
                if v is None and isinstance(a, (_LazyPool, _ArrayView)):
                    try:
                        v = a.materialize(i)
                    except AttributeError:
                        pass
                return v
            if isinstance(expr, ir.ArrayAddr):
                return get
            return get
        if isinstance(expr, ir.ArrayLen):
            arr = self._atom(expr.arr)
            return lambda env: len(arr(env))
        if isinstance(expr, ir.ArraySlice):
            arr, off = self._atom(expr.arr), self._atom(expr.offset)
            return lambda env: _ArrayView(arr(env), off(env))
        if isinstance(expr, ir.MapNew):
            if counted:
                def mk(env):
                    c.allocs += 1
                    return {}
                return mk
            return lambda env: {}
        if isinstance(expr, ir.MultiMapNew):
            if counted:
                def mk(env):
                    c.allocs += 1
                    return {}
                return mk
            return lambda env: {}
        if isinstance(expr, ir.SeqNew):
            return lambda env: []
        if isinstance(expr, ir.MapGetOrElseUpdate):
            m, k = self._atom(expr.map), self._atom(expr.key)
            default = self._block(expr.default.body, counted)
            def goeu(env):
                if counted:
                    c.branches += 1
                mm = m(env)
                key = _freeze(k(env))
                v = mm.get(key, _MISS)
                if v is _MISS:
                    v = default(env)
                    mm[key] = v
                return v
            return goeu
        if isinstance(expr, ir.MultiMapNonEmpty):
            m, k = self._atom(expr.map), self._atom(expr.key)
            return lambda env: _freeze(k(env)) in m(env)
        if isinstance(expr, ir.Ternary):
            cond = self._atom(expr.cond)
            then = self._block(expr.then, counted)
            els = self._block(expr.els, counted)
            if counted:
                def tern(env):
                    c.branches += 1
                    return then(env) if cond(env) else els(env)
                return tern
            return lambda env: then(env) if cond(env) else els(env)
        if isinstance(expr, ir.AndThen):
            left = self._atom(expr.left)
            right = self._block(expr.right, counted)
            if counted:
                def andt(env):
                    c.branches += 1
                    return bool(left(env)) and bool(right(env))
                return andt
            return lambda env: bool(left(env)) and bool(right(env))
        if isinstance(expr, ir.OrElse):
            left = self._atom(expr.left)
            right = self._block(expr.right, counted)
            if counted:
                def ore(env):
                    c.branches += 1
                    return bool(left(env)) or bool(right(env))
                return ore
            return lambda env: bool(left(env)) or bool(right(env))
        if isinstance(expr, ir.StrOp):
            a, b = self._atom(expr.a), self._atom(expr.b)
            op = expr.op
            if op == "eq":
                return lambda env: a(env) == b(env)
            if op == "ne":
                return lambda env: a(env) != b(env)
            if op == "starts":
                return lambda env: a(env).startswith(b(env))
            if op == "ends":
                return lambda env: a(env).endswith(b(env))
            if op == "slice":
                # word-granularity containment, same as the token-coded form
                return lambda env: b(env) in a(env).split(" ")
            if op == "cmp":
                def scmp(env):
                    x, y = a(env), b(env)
                    return -1 if x < y else (1 if x > y else 0)
                return scmp
            raise InterpError(f"unknown string op {op}")
        if isinstance(expr, ir.Alloc):
            count = self._atom(expr.count)
            ty = expr.ty
            if counted:
                def mk(env):
                    c.allocs += 1
                    return _alloc_value(ty, count(env), self.records)
                return mk
            return lambda env: _alloc_value(ty, count(env), self.records)
        if isinstance(expr, ir.DictIntrinsic):
            return self._dict_intrinsic(expr)
        if isinstance(expr, ir.DictDecode):
            d = self.db.dictionaries[(expr.relation, expr.attr)]
            code = self._atom(expr.code)
            return lambda env: d.values[code(env)]
        if isinstance(expr, ir.GMapNew):
            if counted:
                def mk(env):
                    c.allocs += 1
                    return _GMap()
                return mk
            return lambda env: _GMap()
        if isinstance(expr, ir.GMapGet):
            m, k = self._atom(expr.map), self._atom(expr.key)
            return lambda env: m(env).get(k(env))
        if isinstance(expr, ir.GMapLen):
            m = self._atom(expr.map)
            return lambda env: len(m(env).entries)
        if isinstance(expr, ir.GMapEntryKey):
            m, i = self._atom(expr.map), self._atom(expr.idx)
            return lambda env: m(env).entries[i(env)][0]
        if isinstance(expr, ir.GMapEntryVal):
            m, i = self._atom(expr.map), self._atom(expr.idx)
            return lambda env: m(env).entries[i(env)][1]
        if isinstance(expr, ir.GKey):
            parts = [self._atom(p) for p in expr.parts]
            exact = expr.exact
            return lambda env: gkey_pack([p(env) for p in parts], exact)
        if isinstance(expr, ir.GVecNew):
            if counted:
                def mk(env):
                    c.allocs += 1
                    return []
                return mk
            return lambda env: []
        if isinstance(expr, ir.GVecLen):
            v = self._atom(expr.vec)
            return lambda env: len(v(env))
        if isinstance(expr, ir.GVecGet):
            v, i = self._atom(expr.vec), self._atom(expr.idx)
            return lambda env: v(env)[i(env)]
        if isinstance(expr, ir.Cast):
            a = self._atom(expr.a)
            return a
        if isinstance(expr, ir.VarGet):
            vid = expr.var.id
            return lambda env: env[vid]
        raise InterpError(f"cannot interpret expression {expr!r}")

    def _dict_intrinsic(self, expr):
        d = self.db.dictionaries.get((expr.relation, expr.attr))
        if d is None:
            raise InterpError(
                f"no dictionary loaded for {expr.relation}.{expr.attr}")
        if expr.op == "lookup" or expr.op == "word_code":
            v = d.code(expr.arg)
            return lambda env: v
        if expr.op == "prefix_start":
            r = rt.range_for_prefix(d, expr.arg)
            v = 0 if r is None else r[0]
            return lambda env: v
        if expr.op == "prefix_end":
            r = rt.range_for_prefix(d, expr.arg)
            v = -1 if r is None else r[1]
            return lambda env: v
        if expr.op == "suffix_table":
            tbl = rt.suffix_table(d, expr.arg)
            return lambda env: tbl
        raise InterpError(f"unknown dictionary intrinsic {expr.op}")

    def _stmt(self, stmt, counted):
        c = self.counters
        if isinstance(stmt, ir.Bind):
            f = self._expr(stmt.expr, counted)
            sid = stmt.sym.id
            def run(env):
                env[sid] = f(env)
            return run
        if isinstance(stmt, ir.VarDecl):
            init = self._atom(stmt.init)
            vid = stmt.var.id
            def run(env):
                env[vid] = init(env)
            return run
        if isinstance(stmt, ir.VarSet):
            val = self._atom(stmt.value)
            vid = stmt.var.id
            def run(env):
                env[vid] = val(env)
            return run
        if isinstance(stmt, ir.ArraySet):
            arr = self._atom(stmt.arr)
            idx = self._atom(stmt.idx)
            val = self._atom(stmt.value)
            def run(env):
                c.bytes_touched += 8
                arr(env)[idx(env)] = val(env)
            return run
        if isinstance(stmt, ir.FieldSet):
            base = self._atom(stmt.base)
            val = self._atom(stmt.value)
            name = stmt.name
            def run(env):
                base(env)[name] = val(env)
            return run
        if isinstance(stmt, ir.MultiMapAdd):
            m = self._atom(stmt.map)
            k = self._atom(stmt.key)
            v = self._atom(stmt.value)
            def run(env):
                if counted:
                    c.addbinding_ops += 1
                mm = m(env)
                key = _freeze(k(env))
                lst = mm.get(key)
                if lst is None:
                    mm[key] = lst = []
                lst.append(v(env))
            return run
        if isinstance(stmt, ir.MapForeach):
            m = self._atom(stmt.map)
            kid = stmt.fn.params[0].id
            vid = stmt.fn.params[1].id
            body = self._block_run(stmt.fn.body, counted)
            def run(env):
                for k, v in list(m(env).items()):
                    env[kid] = _thaw(k)
                    env[vid] = v
                    body(env)
            return run
        if isinstance(stmt, ir.MultiMapForeachAt):
            m = self._atom(stmt.map)
            k = self._atom(stmt.key)
            pid = stmt.fn.params[0].id
            body = self._block_run(stmt.fn.body, counted)
            def run(env):
                lst = m(env).get(_freeze(k(env)))
                if lst is not None:
                    for v in lst:
                        env[pid] = v
                        body(env)
            return run
        if isinstance(stmt, ir.SeqAppend):
            s = self._atom(stmt.seq)
            v = self._atom(stmt.value)
            return lambda env: s(env).append(v(env))
        if isinstance(stmt, ir.SeqForeach):
            s = self._atom(stmt.seq)
            pid = stmt.fn.params[0].id
            body = self._block_run(stmt.fn.body, counted)
            def run(env):
                for v in s(env):
                    env[pid] = v
                    body(env)
            return run
        if isinstance(stmt, ir.GMapPut):
            m = self._atom(stmt.map)
            k = self._atom(stmt.key)
            v = self._atom(stmt.value)
            return lambda env: m(env).put(k(env), v(env))
        if isinstance(stmt, ir.GVecPush):
            s = self._atom(stmt.vec)
            v = self._atom(stmt.value)
            return lambda env: s(env).append(v(env))
        if isinstance(stmt, ir.While):
            cond = self._block(stmt.cond, counted)
            body = self._block_run(stmt.body, counted)
            def run(env):
                while cond(env):
                    body(env)
            return run
        if isinstance(stmt, ir.ForRange):
            start = self._atom(stmt.start)
            stop = self._atom(stmt.stop)
            step = self._atom(stmt.step) if stmt.step is not None else None
            vid = stmt.var.id
            body = self._block_run(stmt.body, counted)
            scan = counted and "scan" in stmt.attrs
            def run(env):
                s = step(env) if step is not None else 1
                r = range(start(env), stop(env), s)
                if scan:
                    c.tuples_visited += len(r)
                for i in r:
                    env[vid] = i
                    body(env)
            return run
        if isinstance(stmt, ir.If):
            cond = self._atom(stmt.cond)
            then = self._block_run(stmt.then, counted)
            els = self._block_run(stmt.els, counted) if stmt.els else None
            if counted:
                def run(env):
                    c.branches += 1
                    if cond(env):
                        then(env)
                    elif els is not None:
                        els(env)
                return run
            def run_u(env):
                if cond(env):
                    then(env)
                elif els is not None:
                    els(env)
            return run_u
        if isinstance(stmt, ir.SortStmt):
            arr = self._atom(stmt.arr)
            length = self._atom(stmt.length)
            xid = stmt.cmp.params[0].id
            yid = stmt.cmp.params[1].id
            cmpf = self._block(stmt.cmp.body, counted)
            def run(env):
                a = arr(env)
                n = length(env)
                def compare(x, y):
                    env[xid] = x
                    env[yid] = y
                    return cmpf(env)
                tmp = sorted((a[k] for k in range(n)),
                             key=functools.cmp_to_key(compare))
                for k, v in enumerate(tmp):
                    a[k] = v
            return run
        if isinstance(stmt, ir.EmitRow):
            vals = [(self._atom(v), v.ty) for v in stmt.values]
            rows = self.rows
            def run(env):
                rows.append("|".join(
                    format_value(g(env), ty) for g, ty in vals))
            return run
        raise InterpError(f"cannot interpret statement {stmt!r}")

    def _block_run(self, block, counted):
        runs = [self._stmt(s, counted) for s in block.stmts]
        if len(runs) == 1:
            return runs[0]
        def run(env):
            for r in runs:
                r(env)
        return run

    def _block(self, block, counted):
        runs = [self._stmt(s, counted) for s in block.stmts]
        res = self._atom(block.result)
        def run(env):
            for r in runs:
                r(env)
            return res(env)
        return run

    # -- execution ---------------------------------------------------------

    def run(self):
        env = {}
        self._bind_inputs(env)
        setup = self._block_run(self.program.setup, counted=False)
        body = self._block_run(self.program.body, counted=True)
        setup(env)
        body(env)
        return self.rows, self.counters

    def _bind_inputs(self, env):
        db = self.db
        for decl in self.program.inputs:
            if isinstance(decl, ir.TableIn):
                tbl = db.tables[(decl.relation, decl.layout)]
                if decl.layout == "row":
                    env[decl.sym.id] = tbl.rows
                else:
                    env[decl.sym.id] = tbl.columns
            elif isinstance(decl, ir.PartIn):
                pt = db.partitions[(decl.relation, decl.key_attr, decl.kind)]
                env[decl.data.id] = pt.data
                if decl.counts is not None:
                    env[decl.counts.id] = pt.counts
            elif isinstance(decl, ir.DateIdxIn):
                idx = db.date_indices[(decl.relation, decl.attr)]
                env[decl.data.id] = idx.buckets
                env[decl.counts.id] = idx.counts


class _ArrayView:
    """Window into a pool, as the emitted C's pointer arithmetic sees it."""

    __slots__ = ("base", "off")

    def __init__(self, base, off):
        if isinstance(base, _ArrayView):
            self.base, self.off = base.base, base.off + off
        else:
            self.base, self.off = base, off

    def __getitem__(self, i):
        return self.base[self.off + i]

    def __setitem__(self, i, v):
        self.base[self.off + i] = v

    def materialize(self, i):
        return self.base.materialize(self.off + i)


class _LazyPool(list):
    """Record pool: slots materialize on first address-of access."""

    def __init__(self, n, rec, records):
        super().__init__([None] * n)
        self.rec = rec
        self.records = records

    def materialize(self, i):
        rt_ = self.records[self.rec.name] if isinstance(self.rec, ir.Rec) \
            else self.rec
        d = {fn: _zero_value(ft) for fn, ft in rt_.fields}
        self[i] = d
        return d


def _alloc_value(ty, n, records):
    if isinstance(ty, ir.PointerType):
        return [None] * n  # reference array, null-initialized
    if isinstance(ty, (ir.Rec, ir.RecordType)):
        return _LazyPool(n, ty, records)
    return [_zero_value(ty)] * n


def _zero_value(ty):
    if ty == ir.INT or ty == ir.DATE:
        return 0
    if ty == ir.DOUBLE:
        return 0.0
    if ty == ir.BOOL:
        return False
    if ty == ir.STRING:
        return ""
    if ty == ir.CHAR:
        return "\0"
    return None


_MISS = object()


def _freeze(key):
    if isinstance(key, dict):
        return tuple(sorted(key.items()))
    return key


def _thaw(key):
    if isinstance(key, tuple) and key and isinstance(key[0], tuple):
        return dict(key)
    return key


def interpret(program, db):
    """Run a program; returns (rows, counters)."""
    diags = ir.typecheck(program)
    if diags:
        raise InterpError("program does not typecheck: " + "; ".join(diags[:5]))
    return Interpreter(program, db).run()
