"""Independent reference paths used by the tests.

`evaluate_plan` walks the plan tree directly over plain Python rows, with
nested-loop joins and dict aggregation. It shares no code with the inliner,
passes or interpreter, so agreement between the two is meaningful.
"""

from __future__ import annotations

import functools
import os

from planforge import catalog as cat
from planforge import plan as pl


def read_table(data_dir, relation):
    rows = []
    path = os.path.join(data_dir, relation.name.lower() + ".tbl")
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("|")
            if parts[-1] == "":
                parts = parts[:-1]
            row = {}
            for (name, ty), text in zip(relation.attributes, parts):
                if ty == cat.INT:
                    row[name] = int(text)
                elif ty == cat.DOUBLE:
                    row[name] = float(text)
                elif ty == cat.DATE:
                    row[name] = cat.parse_date(text)
                else:
                    row[name] = text
            rows.append(row)
    return rows


def eval_expr(e, row):
    if isinstance(e, pl.Lit):
        return e.value
    if isinstance(e, pl.AttrRef):
        return row[e.name]
    if isinstance(e, pl.Arith):
        a, b = eval_expr(e.a, row), eval_expr(e.b, row)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b if e.ty == cat.DOUBLE else int(a / b)
        raise ValueError(e.op)
    if isinstance(e, pl.Cmp):
        a, b = eval_expr(e.a, row), eval_expr(e.b, row)
        return {"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b,
                ">": a > b, ">=": a >= b}[e.op]
    if isinstance(e, pl.BoolOp):
        if e.op == "and":
            return eval_expr(e.a, row) and eval_expr(e.b, row)
        return eval_expr(e.a, row) or eval_expr(e.b, row)
    if isinstance(e, pl.Not):
        return not eval_expr(e.a, row)
    if isinstance(e, pl.StrPred):
        a, b = eval_expr(e.a, row), eval_expr(e.b, row)
        if e.op == "eq":
            return a == b
        if e.op == "ne":
            return a != b
        if e.op == "starts":
            return a.startswith(b)
        if e.op == "ends":
            return a.endswith(b)
        if e.op == "word":
            return b in a.split(" ")
        raise ValueError(e.op)
    if isinstance(e, pl.IfExpr):
        return (eval_expr(e.then, row) if eval_expr(e.cond, row)
                else eval_expr(e.els, row))
    raise ValueError(f"cannot evaluate {e!r}")


def _agg_rows(group, agg_funcs, in_rows):
    groups = {}
    order = []
    for row in in_rows:
        key = tuple(eval_expr(e, row) for _, e in group)
        if key not in groups:
            groups[key] = [0.0 if f.kind in ("sum", "count")
                           else (1e308 if f.kind == "min" else -1e308)
                           for f in agg_funcs]
            order.append(key)
        accs = groups[key]
        for i, f in enumerate(agg_funcs):
            if f.kind == "count":
                accs[i] += 1.0
            elif f.kind == "sum":
                accs[i] += eval_expr(f.expr, row)
            elif f.kind == "min":
                accs[i] = min(accs[i], eval_expr(f.expr, row))
            elif f.kind == "max":
                accs[i] = max(accs[i], eval_expr(f.expr, row))
    out = []
    for key in order:
        row = {}
        for (name, _), v in zip(group, key):
            row[name] = v
        for f, v in zip(agg_funcs, groups[key]):
            row[f.name] = v
        out.append(row)
    return out


def eval_plan_rows(node, tables):
    """Returns the list of output rows (dicts) of a plan subtree."""
    if isinstance(node, pl.Scan):
        return [dict(r) for r in tables[node.relation]]
    if isinstance(node, pl.Select):
        return [r for r in eval_plan_rows(node.child, tables)
                if eval_expr(node.predicate, r)]
    if isinstance(node, pl.Project):
        out = []
        for r in eval_plan_rows(node.child, tables):
            out.append({n: eval_expr(e, r) for n, e in node.exprs})
        return out
    if isinstance(node, pl.HashJoin):
        left = eval_plan_rows(node.left, tables)
        right = eval_plan_rows(node.right, tables)
        out = []
        if node.variant == "equi":
            for rr in right:          # probe order drives output order
                for lr in left:
                    merged = {**lr, **rr}
                    if eval_expr(node.join_pred, merged):
                        out.append(merged)
            return out
        if node.variant in ("semi", "anti"):
            keep_match = node.variant == "semi"
            for rr in right:
                matched = any(eval_expr(node.join_pred, {**lr, **rr})
                              for lr in left)
                if matched == keep_match:
                    out.append(dict(rr))
            return out
        if node.variant == "leftOuter":
            defaults = _default_row(node.left, tables)
            for rr in right:
                matched = False
                for lr in left:
                    merged = {**lr, **rr}
                    if eval_expr(node.join_pred, merged):
                        matched = True
                        out.append(merged)
                if not matched:
                    out.append({**defaults, **rr})
            return out
        raise ValueError(node.variant)
    if isinstance(node, pl.Agg):
        return _agg_rows(node.group, node.agg_funcs,
                         eval_plan_rows(node.child, tables))
    if isinstance(node, pl.FusedAggJoin):
        agg_rows = _agg_rows(node.group, node.agg_funcs,
                             eval_plan_rows(node.left, tables))
        out = []
        for rr in eval_plan_rows(node.right, tables):
            for lr in agg_rows:
                merged = {**lr, **rr}
                if eval_expr(node.join_pred, merged):
                    out.append(merged)
        return out
    if isinstance(node, pl.Sort):
        rows = eval_plan_rows(node.child, tables)

        def compare(a, b):
            for k in node.keys:
                va, vb = eval_expr(k.expr, a), eval_expr(k.expr, b)
                if va < vb:
                    return -1 if k.asc else 1
                if va > vb:
                    return 1 if k.asc else -1
            return 0

        return sorted(rows, key=functools.cmp_to_key(compare))
    raise ValueError(f"cannot evaluate plan node {node!r}")


def _default_row(node, tables):
    # type defaults for the build side of an outer join
    schema = pl.output_schema(node, _CAT[0])
    d = {}
    for col in schema:
        if col.ty == cat.DOUBLE:
            d[col.name] = 0.0
        elif col.ty in (cat.INT, cat.DATE):
            d[col.name] = 0
        elif col.ty == cat.CHAR:
            d[col.name] = "\0"
        else:
            d[col.name] = ""
    return d


_CAT = [None]


def evaluate_plan(plan, catalog, data_dir):
    """Canonical output rows of a resolved plan over the given data dir."""
    _CAT[0] = catalog
    tables = {}
    for rel in catalog.relations.values():
        path = os.path.join(data_dir, rel.name.lower() + ".tbl")
        if os.path.exists(path):
            tables[rel.name] = read_table(data_dir, rel)
    if not isinstance(plan, pl.Print):
        raise ValueError("plan root must be print")
    rows = eval_plan_rows(plan.child, tables)
    out = []
    for i, r in enumerate(rows):
        if plan.limit is not None and i >= plan.limit:
            break
        fields = []
        for e in plan.exprs:
            v = eval_expr(e, r)
            ty = pl.expr_type(e)
            if ty == cat.DOUBLE:
                fields.append(f"{v:.4f}")
            elif ty == cat.DATE:
                fields.append(cat.format_date(v))
            elif ty == cat.INT:
                fields.append(str(v))
            elif ty == "BOOL":
                fields.append("true" if v else "false")
            else:
                fields.append(str(v))
        out.append("|".join(fields))
    return out


def rows_match(a, b, types, ordered):
    """Field-wise comparison: DOUBLE at 1e-9 relative, others exact."""
    if len(a) != len(b):
        return False

    def key(row):
        out = []
        for v, ty in zip(row.split("|"), types):
            out.append(round(float(v), 6) if ty == "DOUBLE" else v)
        return out

    xs = a if ordered else sorted(a, key=key)
    ys = b if ordered else sorted(b, key=key)
    for ra, rb in zip(xs, ys):
        fa, fb = ra.split("|"), rb.split("|")
        if len(fa) != len(fb) or len(fa) != len(types):
            return False
        for va, vb, ty in zip(fa, fb, types):
            if ty == "DOUBLE":
                x, y = float(va), float(vb)
                if x != y and abs(x - y) > 1e-9 * max(abs(x), abs(y), 1.0):
                    return False
            elif va != vb:
                return False
    return True
