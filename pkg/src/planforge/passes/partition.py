"""Data partitioning and date indices.

Partitioning replaces the hash table of a key-eligible equi join by a
partitioned replica of one input relation, built at load. Two placements:

  * build-side: the multimap over the left input becomes the partitioned
    replica; the build loop disappears and probe lookups fetch a bucket
    directly, replaying the build loop's guards per element.
  * probe-side (equi joins over base scans only): the probe loop disappears
    instead; the build loop drives, fetching the probe relation's bucket by
    the build key. Statistics pick this form when the probe relation is the
    larger one, which puts the sequential loop on the smaller table.

Date indices rewrite a scan guarded by a year-aligned date range into a loop
over year buckets that evaluates the range once per bucket on its first row.
"""

from __future__ import annotations

from .. import catalog as cat
from .. import ir
from .. import transform as tr
from . import common

MAX_1D_SLOTS = 1 << 26


def partition_kind(catalog, relation, attr, max_slots=MAX_1D_SLOTS):
    rel = catalog.relations.get(relation)
    if rel is None:
        return None
    stats = rel.stats
    st = stats.attrs.get(attr) if stats else None
    if st is None or st.max_value is None:
        return None
    if not isinstance(st.max_value, int) or isinstance(st.max_value, bool):
        return None
    if st.min_value < 0 or st.max_value + 1 > max_slots:
        return None
    if rel.primary_key == [attr]:
        return "pk1"
    if attr in cat.fk_attrs(rel):
        return "fk2"
    return None


class _JoinMapInfo:
    def __init__(self, sym):
        self.sym = sym
        self.adds = []          # (stmt, path)
        self.foreachs = []      # (stmt, path)
        self.nonempties = []    # (bind stmt, path)


class PartitioningPass(tr.Transformer):
    """One application partitions at most one join map; the phase wrapper
    iterates until nothing fires."""

    name = "partitioning"

    def __init__(self, catalog, max_slots=MAX_1D_SLOTS):
        super().__init__("partitioning")
        self.catalog = catalog
        self.max_slots = max_slots

    def fresh(self):
        return PartitioningPass(self.catalog, self.max_slots)

    def transform(self, program):
        changed = True
        while changed:
            program, changed = self._round(program)
        return program

    # -- analysis ------------------------------------------------------------

    def _analyze(self, program):
        defs = common.collect_defs(program)
        maps = {}
        for stmt, path in common.walk_with_path(program.body):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.MultiMapNew):
                vt = stmt.expr.value
                if isinstance(vt, (ir.Rec, ir.RecordType)):
                    maps[stmt.sym] = _JoinMapInfo(stmt.sym)
            elif isinstance(stmt, ir.MultiMapAdd) and stmt.map in maps:
                maps[stmt.map].adds.append((stmt, path))
            elif isinstance(stmt, ir.MultiMapForeachAt) and stmt.map in maps:
                maps[stmt.map].foreachs.append((stmt, path))
            elif isinstance(stmt, ir.Bind) and isinstance(
                    stmt.expr, ir.MultiMapNonEmpty) and stmt.expr.map in maps:
                maps[stmt.expr.map].nonempties.append((stmt, path))
        return defs, maps

    def _scan_source(self, loop, key_atom, defs, program):
        """(relation, row sym) when key resolves to a field of the loop's row."""
        if loop is None:
            return None
        row = common.scan_row_sym(loop)
        if row is None:
            return None
        src = common.resolve_field_source(key_atom, defs)
        if src is None or src[0] is not row:
            return None
        return loop.attrs.get("scan"), row, src[1]

    def _rows(self, relation):
        rel = self.catalog.relations.get(relation)
        return rel.stats.row_count if rel and rel.stats else 0

    # -- one round -------------------------------------------------------------

    def _round(self, program):
        defs, maps = self._analyze(program)
        for mm, info in maps.items():
            if not info.adds or not info.foreachs:
                continue
            if len(info.adds) != 1:
                continue
            add, add_path = info.adds[0]
            variant = mm.attrs.get("join_variant", "equi")
            build_loop = common.scan_loop_of(add_path)
            build_src = self._scan_source(build_loop, add.key, defs, program)

            probe_src = None
            probe_loop = None
            if len(info.foreachs) == 1:
                fe, fe_path = info.foreachs[0]
                probe_loop = common.scan_loop_of(fe_path)
                probe_src = self._scan_source(probe_loop, fe.key, defs, program)

            # probe-side partitioning: equi joins whose probe loop is a clean
            # scan path; preferred when the probe relation is not smaller
            if (variant == "equi" and not mm.attrs.get("fused_agg")
                    and probe_src is not None
                    and self._clean_probe_loop(probe_loop, info)
                    and partition_kind(self.catalog, probe_src[0],
                                       probe_src[2], self.max_slots)
                    and (build_src is None
                         or self._rows(probe_src[0]) >= self._rows(build_src[0]))):
                return self._apply_probe_side(program, mm, info, defs,
                                              probe_loop, probe_src), True

            if (build_src is not None
                    and partition_kind(self.catalog, build_src[0],
                                       build_src[2], self.max_slots)
                    and self._clean_build_loop(build_loop, add)):
                return self._apply_build_side(program, mm, info, defs,
                                              build_loop, build_src, add), True
        return program, False

    def _clean_build_loop(self, loop, add):
        # deleting the loop must lose nothing but the replayed path to the add
        if not common.path_is_pure(loop.body.stmts, add):
            return False
        effects = [s for s in ir.walk_stmts(loop.body)
                   if isinstance(s, ir.EFFECT_STMTS + (ir.MultiMapAdd,))]
        return effects == [add]

    def _clean_probe_loop(self, loop, info):
        if loop is None:
            return False
        fe = info.foreachs[0][0]
        if not common.path_is_pure(loop.body.stmts, fe):
            return False
        for s in ir.walk_stmts(loop.body):
            if s is fe:
                continue
            if isinstance(s, ir.EFFECT_STMTS + (ir.MultiMapAdd,)):
                if not common.contains_stmt(fe.fn.body, s):
                    return False
            if isinstance(s, (ir.MultiMapForeachAt, ir.MapForeach)) and s is not fe:
                if not common.contains_stmt(fe.fn.body, s):
                    return False
        return True

    # -- rewrites ---------------------------------------------------------------

    def _partition_input(self, program, relation, attr):
        kind = partition_kind(self.catalog, relation, attr, self.max_slots)
        for decl in program.inputs:
            if isinstance(decl, ir.PartIn) and decl.relation == relation and \
                    decl.key_attr == attr and decl.kind == kind:
                return decl
        attrs = None
        coded = {}
        for decl in program.inputs:
            if isinstance(decl, ir.TableIn) and decl.relation == relation:
                attrs = list(decl.attrs)
                coded = dict(decl.coded)
        if attrs is None:
            attrs = [n for n, _ in self.catalog.relation(relation).attributes]
        rec = ir.Rec(relation)
        if kind == "pk1":
            data = ir.Sym(ir.ArrayType(rec), relation.lower() + "_by_" + attr.lower())
            decl = ir.PartIn(data, None, relation, attr, "pk1", attrs, coded)
        else:
            data = ir.Sym(ir.ArrayType(ir.ArrayType(rec)),
                          relation.lower() + "_by_" + attr.lower())
            counts = ir.Sym(ir.ArrayType(ir.INT), "counts")
            decl = ir.PartIn(data, counts, relation, attr, "fk2", attrs, coded)
        program.inputs.append(decl)
        return decl

    def _slots_const(self, relation, attr):
        st = self.catalog.relation(relation).stats.attrs[attr]
        return ir.Const(int(st.max_value) + 1, ir.INT)

    def _bucket_fetch(self, decl, key_atom, slots, body_builder):
        """Statements fetching the bucket for key_atom and running
        body_builder(b, element_sym) per element."""
        b = ir.Builder({})
        inb = b.bind(ir.Bin("<", key_atom, slots), "inb")
        with b.if_(inb):
            if decl.kind == "pk1":
                e = b.bind(ir.ArrayGet(decl.data, key_atom), "e",
                           {"row_of": decl.relation})
                nn = b.bind(ir.Bin("!=", e, ir.null(ir.Rec(decl.relation))), "nn")
                with b.if_(nn):
                    body_builder(b, e)
            else:
                cnt = b.bind(ir.ArrayGet(decl.counts, key_atom), "cnt")
                bucket = b.bind(ir.ArrayGet(decl.data, key_atom), "bucket")
                with b.for_range(ir.Const(0, ir.INT), cnt, "j",
                                 {"scan": decl.relation, "bucket": True}) as j:
                    e = b.bind(ir.ArrayGet(bucket, j), "e",
                               {"row_of": decl.relation})
                    body_builder(b, e)
        return b.blocks[0].stmts

    def _apply_build_side(self, program, mm, info, defs, build_loop,
                          build_src, add):
        relation, build_row, attr = build_src
        decl = self._partition_input(program, relation, attr)
        slots = self._slots_const(relation, attr)

        def replay(b, elem, body_fn):
            # re-emit the build loop's guard path with the row bound to the
            # bucket element; the add becomes the probe continuation
            def hook(stmt, cloner):
                if isinstance(stmt, ir.MultiMapAdd) and stmt.map is mm:
                    sub_val = cloner.atom(stmt.value)
                    inner = ir.Builder({})
                    body_fn(inner, sub_val)
                    return inner.blocks[0].stmts
                first = build_loop.body.stmts[0]
                if stmt is first:   # row = table(i)
                    cloner.submap[build_row] = elem
                    return []
                return None

            return common.clone_stmts(build_loop.body.stmts, {}, hook)

        def visit(stmt):
            # statement objects are rebuilt during the walk, so matching goes
            # through stable symbol identities
            if isinstance(stmt, ir.Bind) and stmt.sym is mm:
                return None
            if isinstance(stmt, ir.ForRange) and stmt.var is build_loop.var:
                return None
            if isinstance(stmt, ir.Bind) and isinstance(
                    stmt.expr, ir.MultiMapNonEmpty) and stmt.expr.map is mm:
                return ir.Bind(stmt.sym, ir.AtomExpr(ir.TRUE))
            if isinstance(stmt, ir.MultiMapForeachAt) and stmt.map is mm:
                param = stmt.fn.params[0]

                def body_fn(bb, val_atom, stmt=stmt, param=param):
                    bb.blocks[-1].stmts.extend(common.clone_stmts(
                        stmt.fn.body.stmts, {param: val_atom}))

                def per_elem(bb, e, body_fn=body_fn):
                    bb.blocks[-1].stmts.extend(replay(bb, e, body_fn))

                return self._bucket_fetch(decl, stmt.key, slots, per_elem)
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return tr.rebuild_program(program, body=body)

    def _apply_probe_side(self, program, mm, info, defs, probe_loop, probe_src):
        relation, probe_row, attr = probe_src
        decl = self._partition_input(program, relation, attr)
        slots = self._slots_const(relation, attr)

        def replay_probe(bb, elem, add_val):
            def hook(stmt, cloner):
                first = probe_loop.body.stmts[0]
                if stmt is first:
                    cloner.submap[probe_row] = elem
                    return []
                if isinstance(stmt, ir.Bind) and isinstance(
                        stmt.expr, ir.MultiMapNonEmpty) and stmt.expr.map is mm:
                    return [ir.Bind(cloner.fresh(stmt.sym),
                                    ir.AtomExpr(ir.TRUE))]
                if isinstance(stmt, ir.MultiMapForeachAt) and stmt.map is mm:
                    param = stmt.fn.params[0]
                    inner = common.Cloner(dict(cloner.submap))
                    inner.submap[param] = add_val
                    return inner.block(stmt.fn.body).stmts
                return None

            return common.clone_stmts(probe_loop.body.stmts, {}, hook)

        def visit(stmt):
            if isinstance(stmt, ir.Bind) and stmt.sym is mm:
                return None
            if isinstance(stmt, ir.ForRange) and stmt.var is probe_loop.var:
                return None
            if isinstance(stmt, ir.MultiMapAdd) and stmt.map is mm:
                def per_elem(bb, e, stmt=stmt):
                    bb.blocks[-1].stmts.extend(
                        replay_probe(bb, e, stmt.value))
                return self._bucket_fetch(decl, stmt.key, slots, per_elem)
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return tr.rebuild_program(program, body=body)


# ---------------------------------------------------------------------------
# Date indices

def _year_bound(op, days):
    y, m, d = cat.civil_from_days(days)
    if op == ">=" and (m, d) == (1, 1):
        return ("lo", y)
    if op == ">" and (m, d) == (12, 31):
        return ("lo", y + 1)
    if op == "<" and (m, d) == (1, 1):
        return ("hi", y - 1)
    if op == "<=" and (m, d) == (12, 31):
        return ("hi", y)
    return None


class DateIndexPass(tr.Transformer):
    name = "date-indices"

    def __init__(self, catalog):
        super().__init__("date-indices")
        self.catalog = catalog

    def fresh(self):
        return DateIndexPass(self.catalog)

    def transform(self, program):
        changed = True
        while changed:
            program, changed = self._round(program)
        return program

    def _conjuncts(self, cond_atom, defs, acc):
        """Flatten an AndThen chain into leaf condition binds."""
        e = defs.get(cond_atom) if isinstance(cond_atom, ir.Sym) else None
        if isinstance(e, ir.AndThen):
            self._conjuncts(e.left, defs, acc)
            # the right block must be pure straight-line bindings
            for s in e.right.stmts:
                if not isinstance(s, ir.Bind) or not ir.expr_dead_safe(s.expr):
                    acc.append(None)
                    return
            self._conjuncts(e.right.result, defs, acc)
        else:
            acc.append(cond_atom)

    def _round(self, program):
        defs = common.collect_defs(program)
        for stmt, path in common.walk_with_path(program.body):
            if not (isinstance(stmt, ir.ForRange) and "scan" in stmt.attrs
                    and not stmt.attrs.get("bucket")
                    and not stmt.attrs.get("date_index")):
                continue
            row = common.scan_row_sym(stmt)
            if row is None:
                continue
            guard = None
            for s in stmt.body.stmts:
                if isinstance(s, ir.If) and s.els is None:
                    guard = s
                    break
            if guard is None:
                continue
            leaves = []
            self._conjuncts(guard.cond, defs, leaves)
            if any(l is None for l in leaves):
                continue
            bounds = {}
            consumed = {}
            for leaf in leaves:
                e = defs.get(leaf) if isinstance(leaf, ir.Sym) else None
                if not isinstance(e, ir.Bin):
                    continue
                src = common.resolve_field_source(e.a, defs)
                if src is None or src[0] is not row:
                    continue
                if not isinstance(e.b, ir.Const) or e.b.ty != ir.DATE:
                    continue
                attr = src[1]
                rel = stmt.attrs["scan"]
                if self.catalog.relation(rel).attr_type(attr) != cat.DATE:
                    continue
                yb = _year_bound(e.op, e.b.value)
                if yb is None:
                    continue
                bounds.setdefault(attr, []).append(yb)
                consumed.setdefault(attr, []).append(leaf)
            target = None
            for attr in sorted(bounds):
                target = attr
                break
            if target is None:
                continue
            rel = stmt.attrs["scan"]
            stats = self.catalog.relation(rel).stats
            st = stats.attrs.get(target) if stats else None
            if st is None or st.min_value is None:
                continue
            return self._rewrite(program, stmt, row, guard, target,
                                 set(consumed[target]), defs), True
        return program, False

    def _date_input(self, program, relation, attr, min_year, n_years):
        for decl in program.inputs:
            if isinstance(decl, ir.DateIdxIn) and decl.relation == relation \
                    and decl.attr == attr:
                return decl
        attrs = None
        coded = {}
        for d in program.inputs:
            if isinstance(d, ir.TableIn) and d.relation == relation:
                attrs = list(d.attrs)
                coded = dict(d.coded)
        if attrs is None:
            attrs = [n for n, _ in self.catalog.relation(relation).attributes]
        rec = ir.Rec(relation)
        data = ir.Sym(ir.ArrayType(ir.ArrayType(rec)),
                      relation.lower() + "_by_year")
        counts = ir.Sym(ir.ArrayType(ir.INT), "ycounts")
        decl = ir.DateIdxIn(data, counts, relation, attr, attrs,
                            min_year, n_years)
        program.inputs.append(decl)
        return decl

    def _rewrite(self, program, loop, row, guard, attr, consumed, defs):
        rel = loop.attrs["scan"]
        stats = self.catalog.relation(rel).stats
        st = stats.attrs[attr]
        min_year = cat.date_year(st.min_value)
        n_years = cat.date_year(st.max_value) - min_year + 1
        decl = self._date_input(program, rel, attr, min_year, n_years)

        b = ir.Builder(dict(program.records))
        with b.for_range(ir.Const(0, ir.INT), ir.Const(n_years, ir.INT),
                         "y") as y:
            cnt = b.bind(ir.ArrayGet(decl.counts, y), "cnt")
            nz = b.bind(ir.Bin(">", cnt, ir.Const(0, ir.INT)), "nz")
            with b.if_(nz):
                bucket = b.bind(ir.ArrayGet(decl.data, y), "bucket")
                first = b.bind(ir.ArrayGet(bucket, ir.Const(0, ir.INT)),
                               "first", {"row_of": rel})
                d0 = b.bind(ir.FieldGet(first, attr), attr.lower())
                g = None
                for leaf in sorted(consumed, key=lambda s: s.id):
                    e = defs[leaf]
                    c = b.bind(ir.Bin(e.op, d0, e.b), "yc")
                    g = c if g is None else b.bind(ir.Bin("&", g, c))
                with b.if_(g):
                    with b.for_range(ir.Const(0, ir.INT), cnt, "j",
                                     {"scan": rel, "date_index": True}) as j:
                        row2 = b.bind(ir.ArrayGet(bucket, j),
                                      row.hint, {"row_of": rel})

                        def hook(stmt, cloner):
                            if stmt is loop.body.stmts[0]:
                                cloner.submap[row] = row2
                                return []
                            if isinstance(stmt, ir.Bind) and stmt.sym in consumed:
                                return [ir.Bind(cloner.fresh(stmt.sym),
                                                ir.AtomExpr(ir.TRUE))]
                            return None

                        b.blocks[-1].stmts.extend(
                            common.clone_stmts(loop.body.stmts, {}, hook))
        new_stmts = b.blocks[0].stmts

        def visit(stmt):
            if isinstance(stmt, ir.ForRange) and stmt.var is loop.var:
                return list(new_stmts)
            return stmt

        body = tr.map_blocks_deep(program.body, visit)
        return tr.rebuild_program(program, body=body)
