"""Plan-level fusion and operator inlining.

Inlining translates a resolved physical plan into one HIGH-level program in
push style: scans drive loops, selections become guards, equi joins build a
multimap over the left (build) child and probe it with the right child,
aggregations fold into per-key DOUBLE arrays, sorts materialize then sort.
"""

from __future__ import annotations

from . import catalog as cat
from . import ir
from . import plan as pl

_IR_TYPES = {cat.INT: ir.INT, cat.DOUBLE: ir.DOUBLE, cat.DATE: ir.DATE,
             cat.STRING: ir.STRING, cat.CHAR: ir.CHAR, pl.BOOL: ir.BOOL}

_DEFAULTS = {ir.INT: ir.Const(0, ir.INT), ir.DOUBLE: ir.Const(0.0, ir.DOUBLE),
             ir.DATE: ir.Const(0, ir.DATE), ir.STRING: ir.Const("", ir.STRING),
             ir.CHAR: ir.Const("\0", ir.CHAR), ir.BOOL: ir.FALSE}

MIN_INIT = ir.Const(1e308, ir.DOUBLE)
MAX_INIT = ir.Const(-1e308, ir.DOUBLE)


# ---------------------------------------------------------------------------
# Fusing an aggregate into the join that consumes its build side (the only
# pattern where the aggregation buffers can live directly in the join table).

def fuse_agg_into_join(node):
    """Rewrite HashJoin(build=Agg(x), probe) into a fused node keyed by the
    join's build-side hash over the group key. Applies across the whole tree;
    the build key must be computable from the group columns alone."""
    if isinstance(node, pl.HashJoin) and isinstance(node.left, pl.Agg):
        agg = node.left
        group_names = {n for n, _ in agg.group}
        if _refs_only(node.left_hash, group_names):
            return pl.FusedAggJoin(
                left=fuse_agg_into_join(agg.child),
                right=fuse_agg_into_join(node.right),
                group=agg.group,
                agg_funcs=agg.agg_funcs,
                join_pred=node.join_pred,
                left_hash=node.left_hash,
                right_hash=node.right_hash,
                variant=node.variant)
    if isinstance(node, pl.Scan):
        return node
    if isinstance(node, pl.Select):
        return pl.Select(fuse_agg_into_join(node.child), node.predicate)
    if isinstance(node, pl.Project):
        return pl.Project(fuse_agg_into_join(node.child), node.exprs)
    if isinstance(node, pl.HashJoin):
        return pl.HashJoin(fuse_agg_into_join(node.left),
                           fuse_agg_into_join(node.right),
                           node.join_pred, node.left_hash, node.right_hash,
                           node.variant)
    if isinstance(node, pl.Agg):
        return pl.Agg(fuse_agg_into_join(node.child), node.group,
                      node.agg_funcs)
    if isinstance(node, pl.FusedAggJoin):
        return pl.FusedAggJoin(fuse_agg_into_join(node.left),
                               fuse_agg_into_join(node.right), node.group,
                               node.agg_funcs, node.join_pred, node.left_hash,
                               node.right_hash, node.variant)
    if isinstance(node, pl.Sort):
        return pl.Sort(fuse_agg_into_join(node.child), node.keys)
    if isinstance(node, pl.Print):
        return pl.Print(fuse_agg_into_join(node.child), node.exprs, node.limit)
    raise pl.PlanError(f"unknown plan node {node!r}")


def _refs_only(expr, names):
    ok = True

    def visit(e):
        nonlocal ok
        if isinstance(e, pl.AttrRef) and e.name not in names:
            ok = False
        for c in pl._expr_children(e):
            visit(c)

    visit(expr)
    return ok


# ---------------------------------------------------------------------------
# Scalar expression normalization into ANF statements

def normalize_to_anf(expr, scope, b):
    """Emit ANF bindings for a scalar expression; returns the result atom.

    `scope` maps attribute names to zero-argument callables producing atoms.
    Compound subexpressions each get a fresh symbol, left to right.
    """
    if isinstance(expr, pl.Lit):
        return ir.Const(expr.value, _IR_TYPES[expr.ty])
    if isinstance(expr, pl.AttrRef):
        if expr.name not in scope:
            raise pl.PlanError(f"unbound attribute reference {expr.name}")
        return scope[expr.name]()
    if isinstance(expr, pl.Arith):
        a = normalize_to_anf(expr.a, scope, b)
        b2 = normalize_to_anf(expr.b, scope, b)
        return b.bind(ir.Bin(expr.op, a, b2))
    if isinstance(expr, pl.Cmp):
        a = normalize_to_anf(expr.a, scope, b)
        b2 = normalize_to_anf(expr.b, scope, b)
        return b.bind(ir.Bin(expr.op, a, b2))
    if isinstance(expr, pl.BoolOp):
        a = normalize_to_anf(expr.a, scope, b)
        b.push()
        rhs = normalize_to_anf(expr.b, scope, b)
        blk = b.pop(rhs)
        if expr.op == "and":
            return b.bind(ir.AndThen(a, blk))
        return b.bind(ir.OrElse(a, blk))
    if isinstance(expr, pl.Not):
        a = normalize_to_anf(expr.a, scope, b)
        return b.bind(ir.Un("not", a))
    if isinstance(expr, pl.StrPred):
        a = normalize_to_anf(expr.a, scope, b)
        b2 = normalize_to_anf(expr.b, scope, b)
        op = {"eq": "eq", "ne": "ne", "starts": "starts", "ends": "ends",
              "word": "slice"}[expr.op]
        return b.bind(ir.StrOp(op, a, b2))
    if isinstance(expr, pl.IfExpr):
        c = normalize_to_anf(expr.cond, scope, b)
        b.push()
        t = normalize_to_anf(expr.then, scope, b)
        then_blk = b.pop(t)
        b.push()
        f = normalize_to_anf(expr.els, scope, b)
        els_blk = b.pop(f)
        return b.bind(ir.Ternary(c, then_blk, els_blk))
    raise pl.PlanError(f"cannot inline expression {expr!r}")


# ---------------------------------------------------------------------------
# Needed output columns per plan node (projection pushdown for the records
# the engine has to materialize; load-side pruning is a separate pass).

def _expr_attr_names(expr, acc):
    if isinstance(expr, pl.AttrRef):
        acc.add(expr.name)
    for c in pl._expr_children(expr):
        _expr_attr_names(c, acc)


def compute_needed(node, needed, out, catalog):
    """out: id(node) -> set of output column names the parent requires."""
    out[id(node)] = set(needed)
    own = set()
    if isinstance(node, pl.Select):
        _expr_attr_names(node.predicate, own)
        compute_needed(node.child, needed | own, out, catalog)
    elif isinstance(node, pl.Project):
        for n, e in node.exprs:
            if n in needed:
                _expr_attr_names(e, own)
        compute_needed(node.child, own, out, catalog)
    elif isinstance(node, pl.HashJoin):
        _expr_attr_names(node.join_pred, own)
        _expr_attr_names(node.left_hash, own)
        _expr_attr_names(node.right_hash, own)
        all_needed = needed | own
        lcols = {c.name for c in pl.output_schema(node.left, catalog)}
        compute_needed(node.left, all_needed & lcols, out, catalog)
        compute_needed(node.right, all_needed - lcols, out, catalog)
    elif isinstance(node, (pl.Agg, pl.FusedAggJoin)):
        for n, e in node.group:
            _expr_attr_names(e, own)
        for f in node.agg_funcs:
            if f.expr is not None:
                _expr_attr_names(f.expr, own)
        if isinstance(node, pl.FusedAggJoin):
            _expr_attr_names(node.join_pred, own)
            _expr_attr_names(node.left_hash, own)
            _expr_attr_names(node.right_hash, own)
            lcols = {c.name for c in pl.output_schema(
                pl.Agg(node.left, node.group, node.agg_funcs), catalog)}
            build_need = set()
            for n, e in node.group:
                _expr_attr_names(e, build_need)
            for f in node.agg_funcs:
                if f.expr is not None:
                    _expr_attr_names(f.expr, build_need)
            compute_needed(node.left, build_need, out, catalog)
            compute_needed(node.right, (needed | own) - lcols, out, catalog)
        else:
            compute_needed(node.child, own, out, catalog)
    elif isinstance(node, pl.Sort):
        for k in node.keys:
            _expr_attr_names(k.expr, own)
        compute_needed(node.child, needed | own, out, catalog)
    elif isinstance(node, pl.Print):
        for e in node.exprs:
            _expr_attr_names(e, own)
        compute_needed(node.child, own, out, catalog)
    elif isinstance(node, pl.Scan):
        pass
    else:
        raise pl.PlanError(f"unknown plan node {node!r}")


# ---------------------------------------------------------------------------
# The inliner

class Inliner:
    def __init__(self, catalog):
        self.catalog = catalog
        self.b = ir.Builder()
        self.inputs = []
        self.table_syms = {}
        self.attr_origin = {}
        self.rec_counter = [0]
        self.needed = {}

    def table(self, relation):
        if relation in self.table_syms:
            return self.table_syms[relation]
        rel = self.catalog.relation(relation)
        fields = tuple((n, _IR_TYPES[t]) for n, t in rel.attributes)
        self.b.record_type(relation, fields)
        sym = ir.Sym(ir.ArrayType(ir.Rec(relation)), relation.lower(),
                     {"table": relation})
        self.inputs.append(ir.TableIn(sym, relation,
                                      [n for n, _ in rel.attributes]))
        self.table_syms[relation] = sym
        for n, _ in rel.attributes:
            self.attr_origin[n] = (relation, n)
        return sym

    def fresh_rec(self, prefix, fields):
        self.rec_counter[0] += 1
        name = f"{prefix}{self.rec_counter[0]}"
        self.b.record_type(name, tuple(fields))
        return name

    def row_scope(self, row_sym, attrs, rec):
        scope = {}
        for a in attrs:
            def get(a=a):
                return self.b.bind(ir.FieldGet(row_sym, a), a.lower())
            scope[a] = get
        return scope

    def est_rows(self, node):
        """Worst-case cardinality bound from load statistics; zero rows
        stay zero so structure capacities scale down with the data."""
        if isinstance(node, pl.Scan):
            rel = self.catalog.relation(node.relation)
            return rel.stats.row_count if rel.stats else 1024
        kids = pl.children(node)
        if isinstance(node, (pl.HashJoin, pl.FusedAggJoin)):
            left, right = (self.est_rows(k) for k in kids)
            if self._keyed_join(node):
                return max(left, right)
            return left * right
        return max(self.est_rows(k) for k in kids) if kids else 0

    def _keyed_join(self, node):
        refs = []

        def visit(e):
            if isinstance(e, pl.AttrRef):
                refs.append(e)
            for c in pl._expr_children(e):
                visit(c)

        visit(node.left_hash)
        visit(node.right_hash)
        for r in refs:
            if r.relation is None:
                continue
            rel = self.catalog.relation(r.relation)
            if rel.primary_key == [r.name]:
                return True
        return False

    # -- operators ---------------------------------------------------------

    def produce(self, node, consume):
        b = self.b
        if isinstance(node, pl.Scan):
            rel = self.catalog.relation(node.relation)
            tbl = self.table(node.relation)
            n = b.bind(ir.ArrayLen(tbl), "n")
            with b.for_range(ir.Const(0, ir.INT), n, "i",
                             {"scan": node.relation}) as i:
                row = b.bind(ir.ArrayGet(tbl, i), node.relation.lower()[0],
                             {"row_of": node.relation})
                consume(self.row_scope(row, rel.attr_names(), node.relation))
            return
        if isinstance(node, pl.Select):
            def sel_consume(scope):
                p = normalize_to_anf(node.predicate, scope, b)
                with b.if_(p):
                    consume(scope)
            self.produce(node.child, sel_consume)
            return
        if isinstance(node, pl.Project):
            for name, e in node.exprs:
                if isinstance(e, pl.AttrRef) and e.relation is not None:
                    self.attr_origin[name] = (e.relation, e.name)

            def proj_consume(scope):
                atoms = {}
                for name, e in node.exprs:
                    atoms[name] = normalize_to_anf(e, scope, b)
                consume({n: (lambda a=a: a) for n, a in atoms.items()})
            self.produce(node.child, proj_consume)
            return
        if isinstance(node, pl.HashJoin):
            self._join(node, consume)
            return
        if isinstance(node, pl.Agg):
            self._agg(node, consume)
            return
        if isinstance(node, pl.FusedAggJoin):
            self._fused_agg_join(node, consume)
            return
        if isinstance(node, pl.Sort):
            self._sort(node, consume)
            return
        raise pl.PlanError(f"unsupported operator {type(node).__name__}")

    def _value_record(self, node_child, needed, prefix):
        cols = [c for c in pl.output_schema(node_child, self.catalog)
                if c.name in needed]
        fields = [(c.name, _IR_TYPES[c.ty]) for c in cols]
        return self.fresh_rec(prefix, fields), [c.name for c in cols]

    def _join(self, node, consume):
        b = self.b
        needed = self.needed[id(node)]
        lcols = {c.name for c in pl.output_schema(node.left, self.catalog)}
        pred_names = set()
        _expr_attr_names(node.join_pred, pred_names)
        build_needed = (needed | pred_names) & lcols
        rec, rec_fields = self._value_record(node.left, build_needed, "J")
        key_ty = _IR_TYPES[pl.expr_type(node.left_hash)]
        mm = b.bind(ir.MultiMapNew(key_ty, ir.Rec(rec)), "hm", {
            "join_variant": node.variant,
            "size_hint": self.est_rows(node.left),
        })

        def build_consume(scope):
            k = normalize_to_anf(node.left_hash, scope, b)
            vals = tuple((f, scope[f]()) for f in rec_fields)
            v = b.bind(ir.RecordNew(rec, vals), "v")
            b.emit(ir.MultiMapAdd(mm, k, v))

        self.produce(node.left, build_consume)

        def joined_scope(scope, v):
            out = dict(scope)
            for f in rec_fields:
                def get(f=f):
                    return b.bind(ir.FieldGet(v, f), f.lower())
                out[f] = get
            return out

        def default_scope(scope):
            out = dict(scope)
            for f in rec_fields:
                ty = self.b.records[rec].field_type(f)
                out[f] = (lambda ty=ty: _DEFAULTS[ty])
            return out

        def probe_consume(scope):
            k2 = normalize_to_anf(node.right_hash, scope, b)
            if node.variant == "equi":
                ne = b.bind(ir.MultiMapNonEmpty(mm, k2), "ne")
                with b.if_(ne):
                    v = ir.Sym(ir.Rec(rec), "e")
                    b.push()
                    js = joined_scope(scope, v)
                    p = normalize_to_anf(node.join_pred, js, b)
                    with b.if_(p):
                        consume(js)
                    body = b.pop()
                    b.emit(ir.MultiMapForeachAt(mm, k2, ir.Lambda((v,), body)))
                return
            # semi / anti / leftOuter track whether any element matched
            found = b.var(ir.FALSE, "found")
            v = ir.Sym(ir.Rec(rec), "e")
            b.push()
            js = joined_scope(scope, v)
            p = normalize_to_anf(node.join_pred, js, b)
            with b.if_(p):
                b.set(found, ir.TRUE)
                if node.variant == "leftOuter":
                    consume(js)
            body = b.pop()
            b.emit(ir.MultiMapForeachAt(mm, k2, ir.Lambda((v,), body)))
            f = b.get(found)
            if node.variant == "semi":
                with b.if_(f):
                    consume(scope)
            elif node.variant == "anti":
                nf = b.bind(ir.Un("not", f))
                with b.if_(nf):
                    consume(scope)
            elif node.variant == "leftOuter":
                nf = b.bind(ir.Un("not", f))
                with b.if_(nf):
                    consume(default_scope(scope))

        self.produce(node.right, probe_consume)

    def _agg_domain(self, node):
        # group aliases keep their source attribute's provenance either way
        for name, e in node.group:
            if isinstance(e, pl.AttrRef) and e.relation is not None:
                self.attr_origin[name] = (e.relation, e.name)
        out = []
        for name, e in node.group:
            if isinstance(e, pl.AttrRef) and e.relation is not None:
                out.append((e.relation, e.name))
            else:
                return None
        return out

    def _agg(self, node, consume):
        b = self.b
        nfuncs = len(node.agg_funcs)
        if len(node.group) == 1:
            key_ty = _IR_TYPES[pl.expr_type(node.group[0][1])]
            key_rec = None
        else:
            key_rec = self.fresh_rec(
                "K", [(n, _IR_TYPES[pl.expr_type(e)]) for n, e in node.group])
            key_ty = ir.Rec(key_rec)
        hm = b.bind(ir.MapNew(key_ty, ir.ArrayType(ir.DOUBLE)), "hm", {
            "agg_funcs": [f.kind for f in node.agg_funcs],
            "agg_domain": self._agg_domain(node),
            "size_hint": self.est_rows(node.child),
        })

        def default_lambda():
            b.push()
            arr = b.bind(ir.ArrayNew(ir.DOUBLE, ir.Const(nfuncs, ir.INT)), "a")
            for i, f in enumerate(node.agg_funcs):
                if f.kind == "min":
                    b.emit(ir.ArraySet(arr, ir.Const(i, ir.INT), MIN_INIT))
                elif f.kind == "max":
                    b.emit(ir.ArraySet(arr, ir.Const(i, ir.INT), MAX_INIT))
            return ir.Lambda((), b.pop(arr))

        def agg_consume(scope):
            if key_rec is None:
                key = normalize_to_anf(node.group[0][1], scope, b)
            else:
                atoms = tuple((n, normalize_to_anf(e, scope, b))
                              for n, e in node.group)
                key = b.bind(ir.RecordNew(key_rec, atoms), "key")
            aggs = b.bind(ir.MapGetOrElseUpdate(hm, key, default_lambda()),
                          "aggs")
            for i, f in enumerate(node.agg_funcs):
                cur = b.bind(ir.ArrayGet(aggs, ir.Const(i, ir.INT)), "acc")
                nxt = self._fold(f, cur, scope)
                b.emit(ir.ArraySet(aggs, ir.Const(i, ir.INT), nxt))

        self.produce(node.child, agg_consume)

        k = ir.Sym(key_ty, "k")
        v = ir.Sym(ir.ArrayType(ir.DOUBLE), "vals")
        b.push()
        scope_out = {}
        if key_rec is None:
            name = node.group[0][0]
            scope_out[name] = (lambda: k)
        else:
            for n, _ in node.group:
                def get(n=n):
                    return b.bind(ir.FieldGet(k, n), n.lower())
                scope_out[n] = get
        for i, f in enumerate(node.agg_funcs):
            def get(i=i):
                return b.bind(ir.ArrayGet(v, ir.Const(i, ir.INT)),
                              node.agg_funcs[i].name.lower())
            scope_out[f.name] = get
        consume(scope_out)
        body = b.pop()
        b.emit(ir.MapForeach(hm, ir.Lambda((k, v), body)))

    def _fold(self, func, cur, scope):
        b = self.b
        if func.kind == "count":
            return b.bind(ir.Bin("+", cur, ir.Const(1.0, ir.DOUBLE)))
        e = normalize_to_anf(func.expr, scope, b)
        if func.kind == "sum":
            return b.bind(ir.Bin("+", cur, e))
        if func.kind in ("min", "max"):
            op = "<" if func.kind == "min" else ">"
            c = b.bind(ir.Bin(op, e, cur))
            return b.bind(ir.Ternary(
                c, ir.Block([], e), ir.Block([], cur)))
        raise pl.PlanError(f"unknown aggregate kind {func.kind}")

    def _fused_agg_join(self, node, consume):
        b = self.b
        for n, e in node.group:
            if isinstance(e, pl.AttrRef) and e.relation is not None:
                self.attr_origin[n] = (e.relation, e.name)
        group_fields = [(n, _IR_TYPES[pl.expr_type(e)]) for n, e in node.group]
        rec = self.fresh_rec(
            "G", group_fields + [("aggs", ir.ArrayType(ir.DOUBLE))])
        key_ty = _IR_TYPES[pl.expr_type(node.left_hash)]
        nfuncs = len(node.agg_funcs)
        mm = b.bind(ir.MultiMapNew(key_ty, ir.Rec(rec)), "hm", {
            "join_variant": node.variant,
            "size_hint": self.est_rows(node.left),
            "fused_agg": True,
        })

        def build_consume(scope):
            gatoms = [(n, normalize_to_anf(e, scope, b)) for n, e in node.group]
            gscope = {n: (lambda a=a: a) for n, a in gatoms}
            jk = normalize_to_anf(node.left_hash, gscope, b)
            found = b.var(ir.null(ir.Rec(rec)), "grp")
            e = ir.Sym(ir.Rec(rec), "e")
            b.push()
            eq = None
            for n, a in gatoms:
                fv = b.bind(ir.FieldGet(e, n), n.lower())
                this = b.bind(_eq_expr(fv, a))
                eq = this if eq is None else b.bind(ir.Bin("&", eq, this))
            with b.if_(eq):
                b.set(found, e)
            b.emit(ir.MultiMapForeachAt(mm, jk, ir.Lambda((e,), b.pop())))
            f = b.get(found)
            isnull = b.bind(ir.Bin("==", f, ir.null(ir.Rec(rec))), "miss")
            b.push()
            arr = b.bind(ir.ArrayNew(ir.DOUBLE, ir.Const(nfuncs, ir.INT)), "a")
            for i, fn in enumerate(node.agg_funcs):
                if fn.kind == "min":
                    b.emit(ir.ArraySet(arr, ir.Const(i, ir.INT), MIN_INIT))
                elif fn.kind == "max":
                    b.emit(ir.ArraySet(arr, ir.Const(i, ir.INT), MAX_INIT))
            fresh = b.bind(ir.RecordNew(
                rec, tuple(gatoms) + (("aggs", arr),)), "g")
            b.emit(ir.MultiMapAdd(mm, jk, fresh))
            then_blk = b.pop(fresh)
            entry = b.bind(ir.Ternary(isnull, then_blk, ir.Block([], f)),
                           "entry")
            aggs = b.bind(ir.FieldGet(entry, "aggs"), "aggs")
            scope2 = dict(scope)
            for i, fn in enumerate(node.agg_funcs):
                cur = b.bind(ir.ArrayGet(aggs, ir.Const(i, ir.INT)), "acc")
                nxt = self._fold(fn, cur, scope2)
                b.emit(ir.ArraySet(aggs, ir.Const(i, ir.INT), nxt))

        self.produce(node.left, build_consume)

        def probe_consume(scope):
            k2 = normalize_to_anf(node.right_hash, scope, b)
            ne = b.bind(ir.MultiMapNonEmpty(mm, k2), "ne")
            with b.if_(ne):
                v = ir.Sym(ir.Rec(rec), "e")
                b.push()
                js = dict(scope)
                for n, _ in node.group:
                    def get(n=n):
                        return b.bind(ir.FieldGet(v, n), n.lower())
                    js[n] = get
                aggs_l = [None]
                for i, fn in enumerate(node.agg_funcs):
                    def get(i=i):
                        if aggs_l[0] is None:
                            aggs_l[0] = b.bind(ir.FieldGet(v, "aggs"), "aggs")
                        return b.bind(
                            ir.ArrayGet(aggs_l[0], ir.Const(i, ir.INT)),
                            node.agg_funcs[i].name.lower())
                    js[fn.name] = get
                p = normalize_to_anf(node.join_pred, js, b)
                with b.if_(p):
                    consume(js)
                b.emit(ir.MultiMapForeachAt(mm, k2, ir.Lambda((v,), b.pop())))

        self.produce(node.right, probe_consume)

    def _sort(self, node, consume):
        b = self.b
        needed = self.needed[id(node)]
        key_names = set()
        for kk in node.keys:
            _expr_attr_names(kk.expr, key_names)
        rec, rec_fields = self._value_record(
            node.child, needed | key_names, "S")
        cap = self.est_rows(node.child)
        buf = b.bind(ir.ArrayNew(ir.Rec(rec), ir.Const(cap, ir.INT)), "buf",
                     {"sort_buffer": True})
        count = b.var(ir.Const(0, ir.INT), "cnt")

        def mat_consume(scope):
            vals = tuple((f, scope[f]()) for f in rec_fields)
            r = b.bind(ir.RecordNew(rec, vals), "r")
            c = b.get(count)
            b.emit(ir.ArraySet(buf, c, r))
            c2 = b.bind(ir.Bin("+", c, ir.Const(1, ir.INT)))
            b.set(count, c2)

        self.produce(node.child, mat_consume)

        x = ir.Sym(ir.Rec(rec), "x")
        y = ir.Sym(ir.Rec(rec), "y")
        b.push()
        res = self._cmp_chain(node.keys, x, y, rec_fields)
        cmp_blk = b.pop(res)
        total = b.get(count)
        b.emit(ir.SortStmt(buf, total, ir.Lambda((x, y), cmp_blk)))

        with b.for_range(ir.Const(0, ir.INT), total, "j") as j:
            r = b.bind(ir.ArrayGet(buf, j), "r")
            consume(self.row_scope(r, rec_fields, rec))

    def _cmp_chain(self, keys, x, y, rec_fields):
        """Lexicographic comparator returning <0, 0, >0 (stable sort input)."""
        b = self.b

        def one(key):
            sx = {f: (lambda f=f, r=x: b.bind(ir.FieldGet(r, f), f.lower()))
                  for f in rec_fields}
            sy = {f: (lambda f=f, r=y: b.bind(ir.FieldGet(r, f), f.lower()))
                  for f in rec_fields}
            ka = normalize_to_anf(key.expr, sx, b)
            kb = normalize_to_anf(key.expr, sy, b)
            if not key.asc:
                ka, kb = kb, ka
            if ka.ty == ir.STRING:
                return b.bind(ir.StrOp("cmp", ka, kb), "c")
            lt = b.bind(ir.Bin("<", ka, kb))
            gt = b.bind(ir.Bin(">", ka, kb))
            inner = b.bind(ir.Ternary(gt, ir.Block([], ir.Const(1, ir.INT)),
                                      ir.Block([], ir.Const(0, ir.INT))))
            return b.bind(ir.Ternary(lt, ir.Block([], ir.Const(-1, ir.INT)),
                                     ir.Block([], inner)), "c")

        # build the chain right to left so each tie falls through
        def chain(i):
            if i == len(keys) - 1:
                return one(keys[i])
            c = one(keys[i])
            nz = b.bind(ir.Bin("!=", c, ir.Const(0, ir.INT)))
            b.push()
            rest = chain(i + 1)
            rest_blk = b.pop(rest)
            return b.bind(ir.Ternary(nz, ir.Block([], c), rest_blk))

        return chain(0)


def _eq_expr(a, b2):
    if a.ty == ir.STRING:
        return ir.StrOp("eq", a, b2)
    return ir.Bin("==", a, b2)


def inline_plan(plan, catalog, query_name="query"):
    """Translate a resolved plan into a HIGH-level push-style Program."""
    if not isinstance(plan, pl.Print):
        raise pl.PlanError("plan root must be a print operator")
    inl = Inliner(catalog)
    b = inl.b

    root_needed = set()
    for e in plan.exprs:
        _expr_attr_names(e, root_needed)
    compute_needed(plan, root_needed, inl.needed, catalog)

    limit_var = [None]
    if plan.limit is not None:
        limit_var[0] = b.var(ir.Const(0, ir.INT), "printed")

    def print_consume(scope):
        atoms = tuple(normalize_to_anf(e, scope, b) for e in plan.exprs)
        if limit_var[0] is None:
            b.emit(ir.EmitRow(atoms))
        else:
            c = b.get(limit_var[0])
            under = b.bind(ir.Bin("<", c, ir.Const(plan.limit, ir.INT)))
            with b.if_(under):
                b.emit(ir.EmitRow(atoms))
                c2 = b.bind(ir.Bin("+", c, ir.Const(1, ir.INT)))
                b.set(limit_var[0], c2)

    inl.produce(plan.child, print_consume)

    body = b.blocks[0]
    program = ir.Program(
        level=ir.HIGH,
        inputs=inl.inputs,
        setup=ir.Block(),
        body=body,
        records=b.records,
        meta={
            "query": query_name,
            "attr_origin": inl.attr_origin,
            "print_types": [_IR_TYPES[pl.expr_type(e)] for e in plan.exprs],
            "plan_refs": {
                r: sorted(n for n in s if catalog.relation(r).has_attr(n))
                for r, s in pl.referenced_attrs(plan).items()},
            "sorted_output": isinstance(plan.child, pl.Sort),
        },
    )
    return program
