"""Physical plan trees and the scalar expression language over them."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import catalog as cat
from . import sexpr


class PlanError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Scalar expressions. Types reuse the column type names from the catalog,
# plus BOOL for predicates.

BOOL = "BOOL"


@dataclass
class Lit:
    value: object
    ty: str


@dataclass
class AttrRef:
    name: str
    ty: str = None
    relation: str = None  # source relation when the attr comes from a scan


@dataclass
class Arith:
    op: str  # + - * /
    a: object
    b: object
    ty: str = None


@dataclass
class Cmp:
    op: str  # == != < <= > >=
    a: object
    b: object


@dataclass
class BoolOp:
    op: str  # and | or
    a: object
    b: object


@dataclass
class Not:
    a: object


@dataclass
class StrPred:
    op: str  # eq ne starts ends word
    a: object
    b: object


@dataclass
class IfExpr:
    cond: object
    then: object
    els: object
    ty: str = None


# Aggregate fold specs: SUM/COUNT/MIN/MAX over a scalar expression.
@dataclass
class AggFunc:
    kind: str      # sum count min max
    expr: object   # None for count
    name: str


@dataclass
class SortKey:
    expr: object
    asc: bool = True


# ---------------------------------------------------------------------------
# Plan nodes

@dataclass
class Scan:
    relation: str


@dataclass
class Select:
    child: object
    predicate: object


@dataclass
class Project:
    child: object
    exprs: list  # of (name, expr)


JOIN_VARIANTS = ("equi", "semi", "anti", "leftOuter")


@dataclass
class HashJoin:
    left: object               # build side
    right: object              # probe side
    join_pred: object
    left_hash: object          # key expression over the build row
    right_hash: object         # key expression over the probe row
    variant: str = "equi"


@dataclass
class Agg:
    child: object
    group: list                # of (name, expr); empty list = global agg
    agg_funcs: list            # of AggFunc, non-empty


@dataclass
class FusedAggJoin:
    """Aggregate feeding a join's build side, collapsed into one structure."""
    left: object               # the aggregate's child (build input)
    right: object              # probe side
    group: list
    agg_funcs: list
    join_pred: object
    left_hash: object          # over the aggregate's output record
    right_hash: object
    variant: str = "equi"


@dataclass
class Sort:
    child: object
    keys: list                 # of SortKey, compared lexicographically


@dataclass
class Print:
    child: object
    exprs: list                # of expr
    limit: int = None


def children(node):
    if isinstance(node, Scan):
        return []
    if isinstance(node, (Select, Project, Agg, Sort, Print)):
        return [node.child]
    if isinstance(node, (HashJoin, FusedAggJoin)):
        return [node.left, node.right]
    raise PlanError(f"unknown plan node {node!r}")


def count_nodes(node):
    return 1 + sum(count_nodes(c) for c in children(node))


# ---------------------------------------------------------------------------
# Output record shape of each node: ordered (name, type, source_relation)

@dataclass
class OutCol:
    name: str
    ty: str
    relation: str = None


def output_schema(node, catalog):
    if isinstance(node, Scan):
        rel = catalog.relation(node.relation)
        return [OutCol(n, t, rel.name) for n, t in rel.attributes]
    if isinstance(node, Select):
        return output_schema(node.child, catalog)
    if isinstance(node, Project):
        cols = []
        for name, expr in node.exprs:
            cols.append(OutCol(name, expr_type(expr), None))
        return cols
    if isinstance(node, HashJoin):
        if node.variant == "equi":
            return (output_schema(node.left, catalog)
                    + output_schema(node.right, catalog))
        if node.variant in ("semi", "anti"):
            return output_schema(node.right, catalog)
        if node.variant == "leftOuter":
            # probe side preserved; build side default-filled when unmatched
            return (output_schema(node.left, catalog)
                    + output_schema(node.right, catalog))
        raise PlanError(f"unknown join variant {node.variant}")
    if isinstance(node, (Agg, FusedAggJoin)):
        cols = [OutCol(name, expr_type(expr), _attr_rel(expr))
                for name, expr in node.group]
        cols += [OutCol(f.name, cat.DOUBLE, None) for f in node.agg_funcs]
        if isinstance(node, FusedAggJoin):
            cols += output_schema(node.right, catalog)
        return cols
    if isinstance(node, (Sort,)):
        return output_schema(node.child, catalog)
    if isinstance(node, Print):
        return [OutCol(f"c{i}", expr_type(e), None)
                for i, e in enumerate(node.exprs)]
    raise PlanError(f"unknown plan node {node!r}")


def _attr_rel(expr):
    return expr.relation if isinstance(expr, AttrRef) else None


def expr_type(expr):
    if isinstance(expr, Lit):
        return expr.ty
    if isinstance(expr, AttrRef):
        return expr.ty
    if isinstance(expr, Arith):
        return expr.ty
    if isinstance(expr, (Cmp, BoolOp, Not, StrPred)):
        return BOOL
    if isinstance(expr, IfExpr):
        return expr.ty
    raise PlanError(f"untyped expression {expr!r}")


# ---------------------------------------------------------------------------
# Resolution & type checking of expressions against a schema

_NUMERIC = (cat.INT, cat.DOUBLE)


def resolve_expr(expr, schema, where="expression"):
    """Resolve attribute references and compute types; returns a new tree."""
    def err(msg):
        raise PlanError(f"{where}: {msg}")

    def rec(e):
        if isinstance(e, Lit):
            return e
        if isinstance(e, AttrRef):
            hits = [c for c in schema if c.name == e.name]
            if not hits:
                err(f"unknown attribute {e.name}")
            if len(hits) > 1:
                err(f"ambiguous attribute {e.name}")
            col = hits[0]
            return AttrRef(e.name, col.ty, col.relation)
        if isinstance(e, Arith):
            a, b = rec(e.a), rec(e.b)
            ta, tb = expr_type(a), expr_type(b)
            if ta not in _NUMERIC or tb not in _NUMERIC:
                err(f"arithmetic on non-numeric types {ta}/{tb}")
            ty = cat.DOUBLE if cat.DOUBLE in (ta, tb) else cat.INT
            return Arith(e.op, a, b, ty)
        if isinstance(e, Cmp):
            a, b = rec(e.a), rec(e.b)
            ta, tb = expr_type(a), expr_type(b)
            if ta in _NUMERIC and tb in _NUMERIC:
                pass  # INT/DOUBLE mix promotes at evaluation
            elif ta != tb:
                err(f"type mismatch in comparison: {ta} vs {tb}")
            elif ta == cat.STRING:
                # string equality goes through the string-op path
                if e.op == "==":
                    return StrPred("eq", a, b)
                if e.op == "!=":
                    return StrPred("ne", a, b)
                err("only =/<> comparisons are supported on STRING")
            return Cmp(e.op, a, b)
        if isinstance(e, BoolOp):
            a, b = rec(e.a), rec(e.b)
            if expr_type(a) != BOOL or expr_type(b) != BOOL:
                err("boolean operator over non-boolean operands")
            return BoolOp(e.op, a, b)
        if isinstance(e, Not):
            a = rec(e.a)
            if expr_type(a) != BOOL:
                err("not over non-boolean operand")
            return Not(a)
        if isinstance(e, StrPred):
            a, b = rec(e.a), rec(e.b)
            if expr_type(a) != cat.STRING or expr_type(b) != cat.STRING:
                err(f"string operation {e.op} over non-string operands")
            return StrPred(e.op, a, b)
        if isinstance(e, IfExpr):
            c, t, f = rec(e.cond), rec(e.then), rec(e.els)
            if expr_type(c) != BOOL:
                err("if condition is not boolean")
            tt, tf = expr_type(t), expr_type(f)
            if tt in _NUMERIC and tf in _NUMERIC:
                ty = cat.DOUBLE if cat.DOUBLE in (tt, tf) else cat.INT
            elif tt != tf:
                err(f"if branches disagree: {tt} vs {tf}")
            else:
                ty = tt
            return IfExpr(c, t, f, ty)
        err(f"unknown expression {e!r}")

    return rec(expr)


def walk_exprs(node):
    """Yield every scalar expression appearing in a plan subtree."""
    if isinstance(node, Select):
        yield node.predicate
    elif isinstance(node, Project):
        for _, e in node.exprs:
            yield e
    elif isinstance(node, HashJoin):
        yield node.join_pred
        yield node.left_hash
        yield node.right_hash
    elif isinstance(node, (Agg, FusedAggJoin)):
        for _, e in node.group:
            yield e
        for f in node.agg_funcs:
            if f.expr is not None:
                yield f.expr
        if isinstance(node, FusedAggJoin):
            yield node.join_pred
            yield node.left_hash
            yield node.right_hash
    elif isinstance(node, Sort):
        for k in node.keys:
            yield k.expr
    elif isinstance(node, Print):
        yield from node.exprs
    for c in children(node):
        yield from walk_exprs(c)


def referenced_attrs(plan):
    """(relation -> set of attribute names) referenced anywhere in the plan."""
    refs = {}

    def visit(e):
        if isinstance(e, AttrRef) and e.relation is not None:
            refs.setdefault(e.relation, set()).add(e.name)
        for child in _expr_children(e):
            visit(child)

    for e in walk_exprs(plan):
        visit(e)
    return refs


def _expr_children(e):
    if isinstance(e, Arith):
        return [e.a, e.b]
    if isinstance(e, Cmp):
        return [e.a, e.b]
    if isinstance(e, BoolOp):
        return [e.a, e.b]
    if isinstance(e, Not):
        return [e.a]
    if isinstance(e, StrPred):
        return [e.a, e.b]
    if isinstance(e, IfExpr):
        return [e.cond, e.then, e.els]
    return []


# ---------------------------------------------------------------------------
# Parsing

_CMP_OPS = {"=": "==", "==": "==", "<>": "!=", "!=": "!=",
            "<": "<", "<=": "<=", ">": ">", ">=": ">="}
_STR_OPS = {"starts-with": "starts", "ends-with": "ends",
            "contains-word": "word"}


def parse_expr_form(form):
    if isinstance(form, sexpr.String):
        return Lit(str(form), cat.STRING)
    if isinstance(form, str):
        try:
            return Lit(int(form), cat.INT)
        except ValueError:
            pass
        try:
            return Lit(float(form), cat.DOUBLE)
        except ValueError:
            pass
        if len(form) == 3 and form[0] == form[2] == "'":
            return Lit(form[1], cat.CHAR)
        return AttrRef(form)
    if not isinstance(form, list) or not form:
        raise PlanError(f"bad expression {form!r}")
    head = form[0]
    if head == "date":
        if len(form) != 2 or not isinstance(form[1], sexpr.String):
            raise PlanError('(date "YYYY-MM-DD") expected')
        return Lit(cat.parse_date(str(form[1])), cat.DATE)
    if head in ("+", "-", "*", "/"):
        a, b = (parse_expr_form(f) for f in form[1:3])
        return Arith(head, a, b)
    if head in _CMP_OPS:
        a, b = (parse_expr_form(f) for f in form[1:3])
        return Cmp(_CMP_OPS[head], a, b)
    if head in ("and", "or"):
        parts = [parse_expr_form(f) for f in form[1:]]
        out = parts[0]
        for p in parts[1:]:
            out = BoolOp(head, out, p)
        return out
    if head == "not":
        return Not(parse_expr_form(form[1]))
    if head in _STR_OPS:
        a, b = (parse_expr_form(f) for f in form[1:3])
        return StrPred(_STR_OPS[head], a, b)
    if head == "if":
        c, t, f = (parse_expr_form(x) for x in form[1:4])
        return IfExpr(c, t, f)
    raise PlanError(f"unknown expression head {head!r}")


def _parse_aggs(forms):
    funcs = []
    for f in forms:
        if not isinstance(f, list) or len(f) != 2:
            raise PlanError(f"bad aggregate spec {f!r}")
        name, spec = f
        if isinstance(spec, list) and spec and spec[0] == "count":
            funcs.append(AggFunc("count", None, name))
        elif isinstance(spec, list) and len(spec) == 2 and spec[0] in (
                "sum", "min", "max"):
            funcs.append(AggFunc(spec[0], parse_expr_form(spec[1]), name))
        else:
            raise PlanError(f"bad aggregate spec {f!r}")
    if not funcs:
        raise PlanError("aggregate needs at least one function")
    return funcs


def _parse_group(form):
    if form[0] != "group":
        raise PlanError("(group (name expr) ...) expected")
    out = []
    for g in form[1:]:
        if not isinstance(g, list) or len(g) != 2:
            raise PlanError(f"bad group key {g!r}")
        out.append((g[0], parse_expr_form(g[1])))
    return out


def parse_plan_form(form):
    if not isinstance(form, list) or not form:
        raise PlanError(f"bad plan form {form!r}")
    head = form[0]
    if head == "scan":
        if len(form) != 2:
            raise PlanError("(scan RELATION) expected")
        return Scan(form[1])
    if head == "select":
        if len(form) != 3:
            raise PlanError("(select PRED child) expected")
        return Select(parse_plan_form(form[2]), parse_expr_form(form[1]))
    if head == "project":
        cols = [(c[0], parse_expr_form(c[1])) for c in form[1]]
        return Project(parse_plan_form(form[2]), cols)
    if head == "join":
        if len(form) != 7:
            raise PlanError(
                "(join VARIANT PRED LEFT-KEY RIGHT-KEY build probe) expected")
        variant = form[1]
        if variant == "left-outer":
            variant = "leftOuter"
        if variant not in JOIN_VARIANTS:
            raise PlanError(f"unknown join variant {form[1]}")
        return HashJoin(
            left=parse_plan_form(form[5]),
            right=parse_plan_form(form[6]),
            join_pred=parse_expr_form(form[2]),
            left_hash=parse_expr_form(form[3]),
            right_hash=parse_expr_form(form[4]),
            variant=variant)
    if head == "agg":
        if len(form) != 4:
            raise PlanError("(agg (group ...) (aggs ...) child) expected")
        group = _parse_group(form[1])
        if form[2][0] != "aggs":
            raise PlanError("(aggs (name (fn expr)) ...) expected")
        return Agg(parse_plan_form(form[3]), group, _parse_aggs(form[2][1:]))
    if head == "agg-join":
        if len(form) != 9:
            raise PlanError("(agg-join VARIANT (group ...) (aggs ...) PRED "
                            "LEFT-KEY RIGHT-KEY build probe) expected")
        variant = form[1] if form[1] != "left-outer" else "leftOuter"
        return FusedAggJoin(
            left=parse_plan_form(form[7]),
            right=parse_plan_form(form[8]),
            group=_parse_group(form[2]),
            agg_funcs=_parse_aggs(form[3][1:]),
            join_pred=parse_expr_form(form[4]),
            left_hash=parse_expr_form(form[5]),
            right_hash=parse_expr_form(form[6]),
            variant=variant)
    if head == "sort":
        if len(form) != 3 or form[1][0] != "keys":
            raise PlanError("(sort (keys (asc e)|(desc e) ...) child) expected")
        keys = []
        for k in form[1][1:]:
            if not isinstance(k, list) or len(k) != 2 or k[0] not in ("asc", "desc"):
                raise PlanError(f"bad sort key {k!r}")
            keys.append(SortKey(parse_expr_form(k[1]), k[0] == "asc"))
        return Sort(parse_plan_form(form[2]), keys)
    if head == "print":
        if len(form) not in (3, 4) or form[1][0] != "exprs":
            raise PlanError("(print (exprs e ...) [(limit N)] child) expected")
        exprs = [parse_expr_form(e) for e in form[1][1:]]
        limit = None
        child_form = form[-1]
        if len(form) == 4:
            if form[2][0] != "limit":
                raise PlanError("(limit N) expected")
            limit = int(form[2][1])
        return Print(parse_plan_form(child_form), exprs, limit)
    raise PlanError(f"unknown plan operator {head!r}")


def resolve_plan(node, catalog):
    """Resolve and type-check a parsed plan bottom-up; returns a new tree."""
    if isinstance(node, Scan):
        catalog.relation(node.relation)  # existence check
        return node
    if isinstance(node, Select):
        child = resolve_plan(node.child, catalog)
        schema = output_schema(child, catalog)
        pred = resolve_expr(node.predicate, schema, "select predicate")
        if expr_type(pred) != BOOL:
            raise PlanError("select predicate is not boolean")
        return Select(child, pred)
    if isinstance(node, Project):
        child = resolve_plan(node.child, catalog)
        schema = output_schema(child, catalog)
        cols = [(n, resolve_expr(e, schema, f"project {n}"))
                for n, e in node.exprs]
        return Project(child, cols)
    if isinstance(node, HashJoin):
        left = resolve_plan(node.left, catalog)
        right = resolve_plan(node.right, catalog)
        ls = output_schema(left, catalog)
        rs = output_schema(right, catalog)
        lh = resolve_expr(node.left_hash, ls, "join build key")
        rh = resolve_expr(node.right_hash, rs, "join probe key")
        pred = resolve_expr(node.join_pred, ls + rs, "join predicate")
        if expr_type(pred) != BOOL:
            raise PlanError("join predicate is not boolean")
        if expr_type(lh) != expr_type(rh):
            raise PlanError("join key types disagree")
        return HashJoin(left, right, pred, lh, rh, node.variant)
    if isinstance(node, Agg):
        child = resolve_plan(node.child, catalog)
        schema = output_schema(child, catalog)
        group = [(n, resolve_expr(e, schema, f"group key {n}"))
                 for n, e in node.group]
        funcs = []
        for f in node.agg_funcs:
            e = None
            if f.expr is not None:
                e = resolve_expr(f.expr, schema, f"aggregate {f.name}")
                if expr_type(e) not in _NUMERIC:
                    raise PlanError(f"aggregate {f.name} over non-numeric input")
            funcs.append(AggFunc(f.kind, e, f.name))
        return Agg(child, group, funcs)
    if isinstance(node, FusedAggJoin):
        left = resolve_plan(node.left, catalog)
        right = resolve_plan(node.right, catalog)
        ls = output_schema(left, catalog)
        rs = output_schema(right, catalog)
        group = [(n, resolve_expr(e, ls, f"group key {n}"))
                 for n, e in node.group]
        funcs = [AggFunc(f.kind,
                         resolve_expr(f.expr, ls, f"aggregate {f.name}")
                         if f.expr is not None else None, f.name)
                 for f in node.agg_funcs]
        probe = Agg(left, group, funcs)  # shape of the build output
        as_ = output_schema(probe, catalog)
        lh = resolve_expr(node.left_hash, as_, "join build key")
        rh = resolve_expr(node.right_hash, rs, "join probe key")
        pred = resolve_expr(node.join_pred, as_ + rs, "join predicate")
        return FusedAggJoin(left, right, group, funcs, pred, lh, rh, node.variant)
    if isinstance(node, Sort):
        child = resolve_plan(node.child, catalog)
        schema = output_schema(child, catalog)
        keys = [SortKey(resolve_expr(k.expr, schema, "sort key"), k.asc)
                for k in node.keys]
        return Sort(child, keys)
    if isinstance(node, Print):
        child = resolve_plan(node.child, catalog)
        schema = output_schema(child, catalog)
        exprs = [resolve_expr(e, schema, "print expression")
                 for e in node.exprs]
        return Print(child, exprs, node.limit)
    raise PlanError(f"unknown plan node {node!r}")


def parse_plan(text, catalog):
    forms = sexpr.parse_all(text)
    forms = [f for f in forms if f]
    if len(forms) != 1:
        raise PlanError(f"expected exactly one plan form, got {len(forms)}")
    return resolve_plan(parse_plan_form(forms[0]), catalog)


# ---------------------------------------------------------------------------
# Pretty printing (inverse of parsing on resolved trees)

def _pp_expr(e):
    if isinstance(e, Lit):
        if e.ty == cat.STRING:
            return sexpr.String(e.value)
        if e.ty == cat.DATE:
            return ["date", sexpr.String(cat.format_date(e.value))]
        if e.ty == cat.CHAR:
            return f"'{e.value}'"
        return repr(e.value)
    if isinstance(e, AttrRef):
        return e.name
    if isinstance(e, Arith):
        return [e.op, _pp_expr(e.a), _pp_expr(e.b)]
    if isinstance(e, Cmp):
        op = {"==": "=", "!=": "<>"}.get(e.op, e.op)
        return [op, _pp_expr(e.a), _pp_expr(e.b)]
    if isinstance(e, BoolOp):
        return [e.op, _pp_expr(e.a), _pp_expr(e.b)]
    if isinstance(e, Not):
        return ["not", _pp_expr(e.a)]
    if isinstance(e, StrPred):
        if e.op == "eq":
            return ["=", _pp_expr(e.a), _pp_expr(e.b)]
        if e.op == "ne":
            return ["<>", _pp_expr(e.a), _pp_expr(e.b)]
        name = {"starts": "starts-with", "ends": "ends-with",
                "word": "contains-word"}[e.op]
        return [name, _pp_expr(e.a), _pp_expr(e.b)]
    if isinstance(e, IfExpr):
        return ["if", _pp_expr(e.cond), _pp_expr(e.then), _pp_expr(e.els)]
    raise PlanError(f"cannot print {e!r}")


def _pp_aggs(funcs):
    out = ["aggs"]
    for f in funcs:
        spec = ["count"] if f.kind == "count" else [f.kind, _pp_expr(f.expr)]
        out.append([f.name, spec])
    return out


def _pp_group(group):
    return ["group"] + [[n, _pp_expr(e)] for n, e in group]


def _pp_plan(node):
    if isinstance(node, Scan):
        return ["scan", node.relation]
    if isinstance(node, Select):
        return ["select", _pp_expr(node.predicate), _pp_plan(node.child)]
    if isinstance(node, Project):
        return ["project", [[n, _pp_expr(e)] for n, e in node.exprs],
                _pp_plan(node.child)]
    if isinstance(node, HashJoin):
        variant = "left-outer" if node.variant == "leftOuter" else node.variant
        return ["join", variant, _pp_expr(node.join_pred),
                _pp_expr(node.left_hash), _pp_expr(node.right_hash),
                _pp_plan(node.left), _pp_plan(node.right)]
    if isinstance(node, Agg):
        return ["agg", _pp_group(node.group), _pp_aggs(node.agg_funcs),
                _pp_plan(node.child)]
    if isinstance(node, FusedAggJoin):
        variant = "left-outer" if node.variant == "leftOuter" else node.variant
        return ["agg-join", variant, _pp_group(node.group),
                _pp_aggs(node.agg_funcs), _pp_expr(node.join_pred),
                _pp_expr(node.left_hash), _pp_expr(node.right_hash),
                _pp_plan(node.left), _pp_plan(node.right)]
    if isinstance(node, Sort):
        keys = ["keys"] + [["asc" if k.asc else "desc", _pp_expr(k.expr)]
                           for k in node.keys]
        return ["sort", keys, _pp_plan(node.child)]
    if isinstance(node, Print):
        form = ["print", ["exprs"] + [_pp_expr(e) for e in node.exprs]]
        if node.limit is not None:
            form.append(["limit", str(node.limit)])
        form.append(_pp_plan(node.child))
        return form
    raise PlanError(f"cannot print {node!r}")


def pretty_print(plan):
    return sexpr.dumps(_pp_plan(plan)) + "\n"
