"""Domain-specific code motion: work moves off the per-tuple path into the
load/setup section.

DsInitHoistingPass converts an aggregation map whose key domain is enumerable
from load statistics into a directly indexed array whose slots are initialized
up front, removing the per-tuple existence branch (an unconditional touched
flag store replaces it so untouched groups still produce no output).

AllocationHoistingPass runs at the C level: every critical-path allocation is
served from a per-type memory pool allocated during setup, pools declared in
type-dependency order.
"""

from __future__ import annotations

from .. import ir
from .. import transform as tr
from . import common
from .maps import agg_domain_dims


class DsInitHoistingPass(tr.Transformer):
    name = "ds-init-hoisting"

    def __init__(self, catalog, settings=None):
        super().__init__("ds-init-hoisting")
        self.catalog = catalog
        self.settings = settings

    def fresh(self):
        return DsInitHoistingPass(self.catalog, self.settings)

    def transform(self, program):
        targets = {}
        goeus = {}
        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.MapNew):
                dims = agg_domain_dims(stmt.sym.attrs, self.catalog,
                                       self.settings or _AllOn())
                if dims is not None:
                    targets[stmt.sym] = (stmt, dims)
            elif isinstance(stmt, ir.Bind) and isinstance(
                    stmt.expr, ir.MapGetOrElseUpdate):
                if isinstance(stmt.expr.map, ir.Sym):
                    goeus.setdefault(stmt.expr.map, []).append(stmt)
        if not targets:
            return program
        program = tr.rebuild_program(program)
        state = {}

        setup = ir.Builder(program.records)
        setup.blocks = [ir.Block(list(program.setup.stmts))]

        for mm, (bind, (dims, total)) in targets.items():
            goeu = goeus.get(mm)
            if not goeu:
                continue
            default = goeu[0].expr.default
            key_ty = bind.expr.key
            kt = ir.resolve(key_ty, program.records)
            kf = (list(kt.fields) if isinstance(kt, ir.RecordType)
                  else [("key", kt)])
            data = ir.Sym(ir.ArrayType(ir.ArrayType(ir.DOUBLE)), "aggdir")
            touched = ir.Sym(ir.ArrayType(ir.BOOL), "touched")
            keys = [ir.Sym(ir.ArrayType(t), f"keys_{n.lower()}")
                    for n, t in kf]
            b = setup
            tot = ir.Const(total, ir.INT)
            b.emit(ir.Bind(data, ir.ArrayNew(ir.ArrayType(ir.DOUBLE), tot)))
            b.emit(ir.Bind(touched, ir.ArrayNew(ir.BOOL, tot)))
            for ks, (n, t) in zip(keys, kf):
                b.emit(ir.Bind(ks, ir.ArrayNew(t, tot)))
            with b.for_range(ir.Const(0, ir.INT), tot, "s") as s:
                cl = common.Cloner()
                blk = cl.block(default.body)
                b.block.stmts.extend(blk.stmts)
                b.emit(ir.ArraySet(data, s, blk.result))
            state[mm] = (data, touched, keys, dims, kf)

        def visit(stmt):
            b = ir.Builder(program.records)
            if isinstance(stmt, ir.Bind) and stmt.sym in targets and \
                    stmt.sym in state:
                return []
            if isinstance(stmt, ir.Bind) and isinstance(
                    stmt.expr, ir.MapGetOrElseUpdate) and \
                    stmt.expr.map in state:
                data, touched, keys, dims, kf = state[stmt.expr.map]
                key = stmt.expr.key
                parts = ([key] if len(kf) == 1 and kf[0][0] == "key" else
                         [b.bind(ir.FieldGet(key, n), n.lower())
                          for n, _ in kf])
                idx = None
                for part, dim in zip(parts, dims):
                    base = part
                    if dim["char"]:
                        base = b.bind(ir.Un("code", part), "cc")
                    off = b.bind(ir.Bin("-", base,
                                        ir.Const(dim["lo"], ir.INT)), "off")
                    if idx is None:
                        idx = off
                    else:
                        scaled = b.bind(ir.Bin("*", idx,
                                               ir.Const(dim["size"], ir.INT)))
                        idx = b.bind(ir.Bin("+", scaled, off), "idx")
                b.emit(ir.ArraySet(touched, idx, ir.TRUE))
                for part, ks in zip(parts, keys):
                    b.emit(ir.ArraySet(ks, idx, part))
                return b.blocks[0].stmts + [
                    ir.Bind(stmt.sym, ir.ArrayGet(data, idx))]
            if isinstance(stmt, ir.MapForeach) and stmt.map in state:
                data, touched, keys, dims, kf = state[stmt.map]
                kp, vp = stmt.fn.params
                total = 1
                for dim in dims:
                    total *= dim["size"]
                with b.for_range(ir.Const(0, ir.INT),
                                 ir.Const(total, ir.INT), "s") as s:
                    t = b.bind(ir.ArrayGet(touched, s), "t")
                    with b.if_(t):
                        kparts = [b.bind(ir.ArrayGet(ks, s), "k")
                                  for ks in keys]
                        if len(kf) == 1 and kf[0][0] == "key":
                            k2 = kparts[0]
                        else:
                            krec = ir.resolve(kp.ty, program.records).name
                            k2 = b.bind(ir.RecordNew(
                                krec, tuple((n, a) for (n, _), a in
                                            zip(kf, kparts))), "key")
                        v2 = b.bind(ir.ArrayGet(data, s), "vals")
                        b.block.stmts.extend(common.clone_stmts(
                            stmt.fn.body.stmts, {kp: k2, vp: v2}))
                return b.blocks[0].stmts
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return ir.Program(level=program.level, inputs=list(program.inputs),
                          setup=ir.Block(setup.blocks[0].stmts,
                                         program.setup.result),
                          body=body, records=dict(program.records),
                          meta=dict(program.meta))


class _AllOn:
    string_dictionary = True
    ds_code_motion = True


class AllocationHoistingPass(tr.Transformer):
    """Pools every critical-path allocation; LOW-level only."""

    name = "malloc-hoisting"

    def __init__(self, catalog=None, size_factor=1.0):
        super().__init__("malloc-hoisting")
        self.catalog = catalog
        self.size_factor = size_factor

    def fresh(self):
        return AllocationHoistingPass(self.catalog, self.size_factor)

    def transform(self, program):
        if program.level != ir.LOW:
            return program
        loop_kinds = (ir.While, ir.ForRange, ir.MapForeach,
                      ir.MultiMapForeachAt, ir.SeqForeach)
        sites = []
        for stmt, path in common.walk_with_path(program.body):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.Alloc):
                if isinstance(stmt.expr.count, ir.Const):
                    looped = any(isinstance(s, loop_kinds) for s in path)
                    sites.append((stmt, looped))
        if not sites:
            return program
        program = tr.rebuild_program(program)

        default_cap = self._default_cap(program)
        pools = {}   # type key -> dict(ty, cap, sym, cursor)
        for stmt, looped in sites:
            ty = stmt.expr.ty
            key = repr(ty)
            # worst-case executions: once outside loops, else the hinted or
            # dominating input cardinality
            execs = 1 if not looped else (
                stmt.expr.attrs.get("cap_hint")
                or stmt.sym.attrs.get("cap_hint") or default_cap)
            units = int(execs * self.size_factor) * stmt.expr.count.value
            p = pools.setdefault(key, {"ty": ty, "cap": 0})
            p["cap"] += max(units, 1)
        sites = [s for s, _ in sites]

        order = self._topo_order(pools, program.records)
        setup_stmts = list(program.setup.stmts)
        for key in order:
            p = pools[key]
            pool = ir.Sym(ir.ArrayType(p["ty"]), "pool")
            cursor = ir.Sym(ir.INT, "pcur")
            setup_stmts.append(ir.Bind(pool, ir.Alloc(
                p["ty"], ir.Const(p["cap"], ir.INT), {"pool": True})))
            setup_stmts.append(ir.VarDecl(cursor, ir.Const(0, ir.INT)))
            p["sym"], p["cursor"] = pool, cursor

        site_set = set(sites)

        def visit(stmt):
            if stmt in site_set:
                p = pools[repr(stmt.expr.ty)]
                b = ir.Builder(program.records)
                cur = b.bind(ir.VarGet(p["cursor"]), "cur")
                view = ir.Bind(stmt.sym, ir.ArraySlice(p["sym"], cur))
                b.emit(view)
                nxt = b.bind(ir.Bin("+", cur, stmt.expr.count), "ncur")
                b.emit(ir.VarSet(p["cursor"], nxt))
                return b.blocks[0].stmts
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return ir.Program(level=program.level, inputs=list(program.inputs),
                          setup=ir.Block(setup_stmts, program.setup.result),
                          body=body, records=dict(program.records),
                          meta=dict(program.meta))

    def _default_cap(self, program):
        if self.catalog is None:
            return 1024
        cap = None
        for decl in program.inputs:
            rel = self.catalog.relations.get(decl.relation)
            if rel is not None and rel.stats is not None:
                cap = max(cap or 0, rel.stats.row_count)
        return 1024 if cap is None else cap

    def _topo_order(self, pools, records):
        """Pools for types referenced by record fields come first."""
        def deps(ty):
            rt = ir.resolve(ty, records) if isinstance(ty, ir.Rec) else ty
            out = set()
            if isinstance(rt, ir.RecordType):
                for _, ft in rt.fields:
                    base = ft
                    while isinstance(base, (ir.ArrayType, ir.PointerType)):
                        base = base.elem
                    if isinstance(base, ir.Rec) and base.name == rt.name:
                        continue  # self-reference through next pointers
                    out.add(repr(base))
                    if isinstance(base, (ir.Rec, ir.RecordType)):
                        out |= deps(base)
            return out

        keys = list(pools)
        edges = {k: deps(pools[k]["ty"]) & set(keys) for k in keys}
        out = []
        seen = set()

        def emit(k, stack):
            if k in seen:
                return
            if k in stack:
                raise ValueError("cyclic type dependency between pools")
            for d in sorted(edges[k]):
                emit(d, stack | {k})
            seen.add(k)
            out.append(k)

        for k in sorted(keys):
            emit(k, frozenset())
        return out
