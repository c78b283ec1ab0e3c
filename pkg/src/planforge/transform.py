"""Rule-based transformer framework and the generic rewrite passes: dead code
elimination, common subexpression elimination, partial evaluation, scalar
replacement of records, and let-binding removal.

A transformer runs its analysis rules to completion over the whole program
before any rewrite rule fires; among rewrite rules the first match wins.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from . import ir

FIXPOINT_CAP = 100


# ---------------------------------------------------------------------------
# Rewrite actions

class Keep:
    pass


class Remove:
    pass


@dataclass
class ReplaceWith:
    stmts: list


class Transformer:
    """Bundles analysis rules (side-effecting collectors) with rewrite rules.

    Subclasses append callables to `analysis` (stmt -> None) and `rewrite`
    (stmt -> action or None). `subst` maps replaced symbols to the atoms that
    stand in for them; it is applied to every statement during the rewrite
    walk. State lives on the instance; `apply_transformer` works on a fresh
    clone so a transformer can be reused.
    """

    name = "transformer"

    def __init__(self, name=None):
        if name is not None:
            self.name = name
        self.analysis = []
        self.rewrite = []
        self.subst = {}

    def fresh(self):
        # stateful subclasses override this to rebuild their private state
        return copy.copy(self)

    # -- hooks ---------------------------------------------------------------

    def prepare(self, program):
        pass

    def rewrite_expr(self, expr, program):
        """Optional expression-level hook, applied after atom substitution."""
        return None

    def finish(self, program):
        """Last chance to touch the rebuilt program (inputs, setup, records)."""
        return program

    # -- driver ---------------------------------------------------------------

    def transform(self, program):
        self.prepare(program)
        for stmt in ir.walk_program_stmts(program):
            for rule in self.analysis:
                rule(stmt)
        new_setup = self._rewrite_block(program.setup, program)
        new_body = self._rewrite_block(program.body, program)
        out = ir.Program(level=program.level, inputs=list(program.inputs),
                         setup=new_setup, body=new_body,
                         records=dict(program.records),
                         meta=dict(program.meta))
        return self.finish(out)

    def _sub_atom(self, atom):
        while isinstance(atom, ir.Sym) and atom in self.subst:
            atom = self.subst[atom]
        return atom

    def _rewrite_block(self, block, program):
        out = []
        for stmt in block.stmts:
            stmt = substitute_stmt(stmt, self._sub_atom)
            action = None
            for rule in self.rewrite:
                action = rule(stmt)
                if action is not None:
                    break
            if action is None or isinstance(action, Keep):
                out.append(self._rewrite_children(stmt, program))
            elif isinstance(action, Remove):
                continue
            elif isinstance(action, ReplaceWith):
                out.extend(action.stmts)
            else:
                raise TypeError(f"bad rewrite action {action!r}")
        return ir.Block(out, self._sub_atom(block.result))

    def _rewrite_children(self, stmt, program):
        stmt = map_stmt_blocks(stmt, lambda b: self._rewrite_block(b, program))
        if isinstance(stmt, ir.Bind):
            new = self.rewrite_expr(stmt.expr, program)
            if new is not None:
                stmt = ir.Bind(stmt.sym, new)
        return stmt


# ---------------------------------------------------------------------------
# Structural rebuilding helpers

def substitute_expr(expr, sub):
    e = expr
    if isinstance(e, ir.AtomExpr):
        return ir.AtomExpr(sub(e.atom))
    if isinstance(e, ir.Bin):
        return ir.Bin(e.op, sub(e.a), sub(e.b))
    if isinstance(e, ir.Un):
        return ir.Un(e.op, sub(e.a))
    if isinstance(e, ir.RecordNew):
        return ir.RecordNew(e.rec, tuple((n, sub(a)) for n, a in e.values))
    if isinstance(e, ir.FieldGet):
        return ir.FieldGet(sub(e.base), e.name)
    if isinstance(e, ir.ArrayNew):
        return ir.ArrayNew(e.elem, sub(e.size))
    if isinstance(e, ir.ArrayGet):
        return ir.ArrayGet(sub(e.arr), sub(e.idx))
    if isinstance(e, ir.ArrayLen):
        return ir.ArrayLen(sub(e.arr))
    if isinstance(e, ir.ArrayAddr):
        return ir.ArrayAddr(sub(e.arr), sub(e.idx))
    if isinstance(e, ir.ArraySlice):
        return ir.ArraySlice(sub(e.arr), sub(e.offset))
    if isinstance(e, ir.MapGetOrElseUpdate):
        return ir.MapGetOrElseUpdate(sub(e.map), sub(e.key), e.default)
    if isinstance(e, ir.MultiMapNonEmpty):
        return ir.MultiMapNonEmpty(sub(e.map), sub(e.key))
    if isinstance(e, ir.Ternary):
        return ir.Ternary(sub(e.cond), e.then, e.els)
    if isinstance(e, ir.AndThen):
        return ir.AndThen(sub(e.left), e.right)
    if isinstance(e, ir.OrElse):
        return ir.OrElse(sub(e.left), e.right)
    if isinstance(e, ir.StrOp):
        return ir.StrOp(e.op, sub(e.a), sub(e.b))
    if isinstance(e, ir.Alloc):
        return ir.Alloc(e.ty, sub(e.count), dict(e.attrs))
    if isinstance(e, ir.DictDecode):
        return ir.DictDecode(e.relation, e.attr, sub(e.code))
    if isinstance(e, ir.GMapGet):
        return ir.GMapGet(sub(e.map), sub(e.key))
    if isinstance(e, ir.GMapLen):
        return ir.GMapLen(sub(e.map))
    if isinstance(e, ir.GMapEntryKey):
        return ir.GMapEntryKey(sub(e.map), sub(e.idx))
    if isinstance(e, ir.GMapEntryVal):
        return ir.GMapEntryVal(sub(e.map), sub(e.idx))
    if isinstance(e, ir.GKey):
        return ir.GKey(tuple(sub(p) for p in e.parts), e.exact)
    if isinstance(e, ir.GVecLen):
        return ir.GVecLen(sub(e.vec))
    if isinstance(e, ir.GVecGet):
        return ir.GVecGet(sub(e.vec), sub(e.idx))
    if isinstance(e, ir.Cast):
        return ir.Cast(e.ty, sub(e.a))
    if isinstance(e, ir.VarGet):
        v = sub(e.var)
        return ir.VarGet(v) if isinstance(v, ir.Sym) else ir.AtomExpr(v)
    return e  # nullary kinds (MapNew, GMapNew, DictIntrinsic, ...)


def substitute_stmt(stmt, sub):
    s = stmt
    if isinstance(s, ir.Bind):
        return ir.Bind(s.sym, substitute_expr(s.expr, sub))
    if isinstance(s, ir.VarDecl):
        return ir.VarDecl(s.var, sub(s.init))
    if isinstance(s, ir.VarSet):
        return ir.VarSet(s.var, sub(s.value))
    if isinstance(s, ir.ArraySet):
        return ir.ArraySet(sub(s.arr), sub(s.idx), sub(s.value))
    if isinstance(s, ir.FieldSet):
        return ir.FieldSet(sub(s.base), s.name, sub(s.value))
    if isinstance(s, ir.MultiMapAdd):
        return ir.MultiMapAdd(sub(s.map), sub(s.key), sub(s.value))
    if isinstance(s, ir.MapForeach):
        return ir.MapForeach(sub(s.map), s.fn)
    if isinstance(s, ir.MultiMapForeachAt):
        return ir.MultiMapForeachAt(sub(s.map), sub(s.key), s.fn)
    if isinstance(s, ir.SeqAppend):
        return ir.SeqAppend(sub(s.seq), sub(s.value))
    if isinstance(s, ir.SeqForeach):
        return ir.SeqForeach(sub(s.seq), s.fn)
    if isinstance(s, ir.GMapPut):
        return ir.GMapPut(sub(s.map), sub(s.key), sub(s.value))
    if isinstance(s, ir.GVecPush):
        return ir.GVecPush(sub(s.vec), sub(s.value))
    if isinstance(s, ir.ForRange):
        step = sub(s.step) if s.step is not None else None
        return ir.ForRange(s.var, sub(s.start), sub(s.stop), s.body, step,
                           dict(s.attrs))
    if isinstance(s, ir.If):
        return ir.If(sub(s.cond), s.then, s.els)
    if isinstance(s, ir.SortStmt):
        return ir.SortStmt(sub(s.arr), sub(s.length), s.cmp)
    if isinstance(s, ir.EmitRow):
        return ir.EmitRow(tuple(sub(v) for v in s.values))
    return s  # While carries only blocks


def map_stmt_blocks(stmt, f):
    s = stmt
    if isinstance(s, ir.Bind):
        e = s.expr
        if isinstance(e, ir.Ternary):
            return ir.Bind(s.sym, ir.Ternary(e.cond, f(e.then), f(e.els)))
        if isinstance(e, ir.AndThen):
            return ir.Bind(s.sym, ir.AndThen(e.left, f(e.right)))
        if isinstance(e, ir.OrElse):
            return ir.Bind(s.sym, ir.OrElse(e.left, f(e.right)))
        if isinstance(e, ir.MapGetOrElseUpdate):
            return ir.Bind(s.sym, ir.MapGetOrElseUpdate(
                e.map, e.key, ir.Lambda(e.default.params, f(e.default.body))))
        return s
    if isinstance(s, ir.While):
        return ir.While(f(s.cond), f(s.body))
    if isinstance(s, ir.ForRange):
        return ir.ForRange(s.var, s.start, s.stop, f(s.body), s.step,
                           dict(s.attrs))
    if isinstance(s, ir.If):
        els = f(s.els) if s.els is not None else None
        return ir.If(s.cond, f(s.then), els)
    if isinstance(s, ir.MapForeach):
        return ir.MapForeach(s.map, ir.Lambda(s.fn.params, f(s.fn.body)))
    if isinstance(s, ir.MultiMapForeachAt):
        return ir.MultiMapForeachAt(s.map, s.key,
                                    ir.Lambda(s.fn.params, f(s.fn.body)))
    if isinstance(s, ir.SeqForeach):
        return ir.SeqForeach(s.seq, ir.Lambda(s.fn.params, f(s.fn.body)))
    if isinstance(s, ir.SortStmt):
        return ir.SortStmt(s.arr, s.length, ir.Lambda(s.cmp.params, f(s.cmp.body)))
    return s


def map_blocks_deep(block, visit_stmt):
    """Rebuild a block bottom-up; visit_stmt(stmt) -> stmt | list | None."""
    out = []
    for stmt in block.stmts:
        stmt = map_stmt_blocks(stmt, lambda b: map_blocks_deep(b, visit_stmt))
        res = visit_stmt(stmt)
        if res is None:
            continue
        if isinstance(res, list):
            out.extend(res)
        else:
            out.append(res)
    return ir.Block(out, block.result)


def rebuild_program(program, setup=None, body=None):
    return ir.Program(level=program.level, inputs=list(program.inputs),
                      setup=setup if setup is not None else program.setup,
                      body=body if body is not None else program.body,
                      records=dict(program.records), meta=dict(program.meta))


class FunctionTransformer(Transformer):
    def __init__(self, name, fn):
        super().__init__(name)
        self.fn = fn

    def transform(self, program):
        return self.fn(program)


# ---------------------------------------------------------------------------
# apply / pipeline driver

def apply_transformer(program, transformer, diagnostics=None):
    """Run one transformer; on an ill-typed result, report and return the
    input unchanged. Transformer state does not leak between applications."""
    inst = transformer.fresh()
    out = inst.transform(program)
    diags = ir.typecheck(out)
    if diags:
        offender = diags[0]
        msg = f"{transformer.name}: rewrite produced ill-typed program: {offender}"
        if diagnostics is not None:
            diagnostics.append(msg)
        return program
    return out


def flatten_pipeline(pipeline):
    out = []
    for item in pipeline:
        if isinstance(item, (list, tuple)):
            out.extend(flatten_pipeline(item))
        else:
            out.append(item)
    return out


def run_pipeline(program, pipeline, trace_dir=None, diagnostics=None):
    """Fold apply_transformer over the configured order; optionally dump
    per-phase IR text files NN-phasename.ir."""
    import os
    stages = flatten_pipeline(pipeline)
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
        with open(os.path.join(trace_dir, "00-input.ir"), "w") as fh:
            fh.write(ir.dump_program(program))
    for i, t in enumerate(stages, start=1):
        program = apply_transformer(program, t, diagnostics)
        if trace_dir is not None:
            path = os.path.join(trace_dir, f"{i:02d}-{t.name}.ir")
            with open(path, "w") as fh:
                fh.write(ir.dump_program(program))
    return program


# ---------------------------------------------------------------------------
# Dead code elimination

_CTOR_EXPRS = (ir.ArrayNew, ir.RecordNew, ir.MapNew, ir.MultiMapNew,
               ir.SeqNew, ir.GMapNew, ir.GVecNew, ir.Alloc)


def _uses(program):
    """(read_uses, write_uses, var_reads) symbol-id keyed counters."""
    reads, writes, var_reads = {}, {}, set()

    def read(atom):
        if isinstance(atom, ir.Sym):
            reads[atom] = reads.get(atom, 0) + 1

    def write(atom):
        if isinstance(atom, ir.Sym):
            writes[atom] = writes.get(atom, 0) + 1

    def visit_block(blk):
        for s in blk.stmts:
            if isinstance(s, ir.ArraySet):
                write(s.arr)
                read(s.idx)
                read(s.value)
            elif isinstance(s, ir.FieldSet):
                write(s.base)
                read(s.value)
            elif isinstance(s, ir.MultiMapAdd):
                write(s.map)
                read(s.key)
                read(s.value)
            elif isinstance(s, ir.GMapPut):
                write(s.map)
                read(s.key)
                read(s.value)
            elif isinstance(s, (ir.GVecPush, ir.SeqAppend)):
                write(s.vec if isinstance(s, ir.GVecPush) else s.seq)
                read(s.value)
            elif isinstance(s, ir.VarSet):
                read(s.value)
            elif isinstance(s, ir.VarDecl):
                read(s.init)
            else:
                for a in ir.stmt_atoms(s):
                    read(a)
            if isinstance(s, ir.Bind) and isinstance(s.expr, ir.VarGet):
                var_reads.add(s.expr.var)
            for sub in ir.stmt_blocks(s):
                visit_block(sub)
        if isinstance(blk.result, ir.Sym):
            read(blk.result)

    for blk in ir.walk_program_blocks(program):
        visit_block(blk)
    return reads, writes, var_reads


def dead_code_elimination(program):
    """Remove unused pure bindings, write-only objects, unread variable cells
    and emptied control flow; iterates to a fixpoint (effects never removed)."""
    for _ in range(FIXPOINT_CAP):
        reads, writes, var_reads = _uses(program)
        changed = [False]
        dead_objects = set()

        def is_dead_bind(s):
            if not isinstance(s, ir.Bind):
                return False
            if reads.get(s.sym, 0) > 0:
                return False
            if isinstance(s.expr, _CTOR_EXPRS):
                # written to but never read: the writes die with it
                dead_objects.add(s.sym)
                return True
            return ir.expr_dead_safe(s.expr)

        def visit(s):
            if is_dead_bind(s):
                changed[0] = True
                return None
            if isinstance(s, (ir.ArraySet, ir.FieldSet, ir.MultiMapAdd,
                              ir.GMapPut, ir.GVecPush, ir.SeqAppend)):
                target = (s.arr if isinstance(s, ir.ArraySet)
                          else s.base if isinstance(s, ir.FieldSet)
                          else s.map if isinstance(s, (ir.MultiMapAdd, ir.GMapPut))
                          else s.vec if isinstance(s, ir.GVecPush) else s.seq)
                if isinstance(target, ir.Sym) and target in dead_objects:
                    changed[0] = True
                    return None
            if isinstance(s, ir.VarDecl) and s.var not in var_reads:
                changed[0] = True
                return None
            if isinstance(s, ir.VarSet) and s.var not in var_reads:
                changed[0] = True
                return None
            if isinstance(s, ir.If):
                empty_then = not s.then.stmts
                empty_els = s.els is None or not s.els.stmts
                if empty_then and empty_els:
                    changed[0] = True
                    return None
                if empty_els and s.els is not None:
                    return ir.If(s.cond, s.then, None)
            if isinstance(s, (ir.ForRange, ir.While)) and not s.body.stmts:
                if isinstance(s, ir.ForRange) or not ir.block_has_effects(s.cond):
                    changed[0] = True
                    return None
            if isinstance(s, (ir.MapForeach, ir.MultiMapForeachAt,
                              ir.SeqForeach)) and not s.fn.body.stmts:
                changed[0] = True
                return None
            return s

        # dead objects discovered while scanning binds must also kill their
        # writes; two sub-rounds per iteration keep that simple
        new_body = map_blocks_deep(program.body, visit)
        new_setup = map_blocks_deep(program.setup, visit)
        if dead_objects:
            def kill_writes(s):
                return visit(s)
            new_body = map_blocks_deep(new_body, kill_writes)
            new_setup = map_blocks_deep(new_setup, kill_writes)
        program = rebuild_program(program, setup=new_setup, body=new_body)
        if not changed[0]:
            break
    return program


# ---------------------------------------------------------------------------
# Common subexpression elimination (straight-line, load-epoch aware)

def _expr_sig(expr, sub):
    def a(atom):
        atom = sub(atom)
        if isinstance(atom, ir.Sym):
            return ("s", atom.id)
        return ("c", atom.value, repr(atom.ty))

    if isinstance(expr, ir.Bin):
        return ("bin", expr.op, a(expr.a), a(expr.b))
    if isinstance(expr, ir.Un):
        return ("un", expr.op, a(expr.a))
    if isinstance(expr, ir.StrOp):
        return ("str", expr.op, a(expr.a), a(expr.b))
    if isinstance(expr, ir.FieldGet):
        return ("fld", a(expr.base), expr.name)
    if isinstance(expr, ir.ArrayGet):
        return ("idx", a(expr.arr), a(expr.idx))
    if isinstance(expr, ir.ArrayLen):
        return ("len", a(expr.arr))
    if isinstance(expr, ir.VarGet):
        return ("var", expr.var.id)
    return None


_LOAD_KINDS = ("fld", "idx", "var", "len")


def _invalidation_keys(stmt):
    """What a single effect statement clobbers, as (kind, id) pairs."""
    out = []
    if isinstance(stmt, ir.ArraySet) and isinstance(stmt.arr, ir.Sym):
        out.append(("idx", stmt.arr.id))
    elif isinstance(stmt, ir.SortStmt) and isinstance(stmt.arr, ir.Sym):
        out.append(("idx", stmt.arr.id))
    elif isinstance(stmt, ir.FieldSet):
        out.append(("fld_name", stmt.name))
    elif isinstance(stmt, ir.VarSet):
        out.append(("var", stmt.var.id))
    elif isinstance(stmt, (ir.MultiMapAdd, ir.GMapPut, ir.GVecPush,
                           ir.SeqAppend)):
        pass  # collections are not load-CSE'd
    return out


def _block_invalidations(block):
    keys = []
    for s in ir.walk_stmts(block):
        keys.extend(_invalidation_keys(s))
    return keys


class _CseTable:
    def __init__(self):
        self.by_sig = {}

    def invalidate(self, keys):
        for key in keys:
            kind, ident = key
            for sig in list(self.by_sig):
                if kind == "idx" and sig[0] in ("idx", "len") and sig[1] == ("s", ident):
                    del self.by_sig[sig]
                elif kind == "fld_name" and sig[0] == "fld" and sig[2] == ident:
                    del self.by_sig[sig]
                elif kind == "var" and sig[0] == "var" and sig[1] == ident:
                    del self.by_sig[sig]

    def invalidate_loads(self):
        for sig in list(self.by_sig):
            if sig[0] in _LOAD_KINDS:
                del self.by_sig[sig]

    def child(self):
        c = _CseTable()
        c.by_sig = dict(self.by_sig)
        return c


def common_subexpression_elimination(program):
    """Within each block, bind syntactically identical pure expressions once.
    Loads (field/array/var reads) participate until an intervening effect
    could change them; arrays and records are assumed not to alias unless the
    same symbol is involved (single-assignment construction)."""
    subst = {}

    def sub(atom):
        while isinstance(atom, ir.Sym) and atom in subst:
            atom = subst[atom]
        return atom

    def visit_block(block, table, loop_body):
        if loop_body:
            table.invalidate_loads()
        out = []
        for stmt in block.stmts:
            stmt = substitute_stmt(stmt, sub)
            if isinstance(stmt, ir.Bind):
                sig = _expr_sig(stmt.expr, sub)
                if sig is not None and (
                        sig[0] in _LOAD_KINDS or ir.expr_cse_safe(stmt.expr)):
                    hit = table.by_sig.get(sig)
                    if hit is not None:
                        subst[stmt.sym] = hit
                        continue
                    table.by_sig[sig] = stmt.sym
            stmt = _descend(stmt, table)
            table.invalidate(_invalidation_keys(stmt))
            out.append(stmt)
        return ir.Block(out, sub(block.result))

    def _descend(stmt, table):
        if isinstance(stmt, (ir.While, ir.ForRange, ir.MapForeach,
                             ir.MultiMapForeachAt, ir.SeqForeach,
                             ir.SortStmt)):
            stmt = map_stmt_blocks(
                stmt, lambda b: visit_block(b, table.child(), True))
            for blk in ir.stmt_blocks(stmt):
                table.invalidate(_block_invalidations(blk))
            return stmt
        if isinstance(stmt, (ir.If,)) or (
                isinstance(stmt, ir.Bind) and ir.expr_blocks(stmt.expr)):
            stmt = map_stmt_blocks(
                stmt, lambda b: visit_block(b, table.child(), False))
            for blk in ir.stmt_blocks(stmt):
                table.invalidate(_block_invalidations(blk))
            return stmt
        return stmt

    new_setup = visit_block(program.setup, _CseTable(), False)
    new_body = visit_block(program.body, _CseTable(), False)
    return rebuild_program(program, setup=new_setup, body=new_body)


# ---------------------------------------------------------------------------
# Partial evaluation

def _const(v, ty):
    return ir.Const(v, ty)


def _fold_bin(op, a, b, ty):
    try:
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b if ty == ir.DOUBLE else int(a / b)
        if op == "%":
            return a % b
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "&":
            return bool(a) and bool(b)
        if op == "|":
            return bool(a) or bool(b)
        if op == "min":
            return min(a, b)
    except (ZeroDivisionError, TypeError):
        return None
    return None


def partial_evaluation(program):
    """Constant folding plus control simplification: if(true) keeps only the
    then branch, constant-false loops disappear, ternaries over constants
    splice the chosen block inline."""

    def fold_expr(e, out_ty):
        if isinstance(e, ir.Bin) and isinstance(e.a, ir.Const) and \
                isinstance(e.b, ir.Const):
            v = _fold_bin(e.op, e.a.value, e.b.value, e.a.ty)
            if v is not None or (e.op == "==" and v is not None):
                if v is None:
                    return None
                return ir.AtomExpr(_const(v, out_ty))
        if isinstance(e, ir.Bin) and e.op == "&":
            if isinstance(e.a, ir.Const):
                return ir.AtomExpr(e.b) if e.a.value else ir.AtomExpr(ir.FALSE)
            if isinstance(e.b, ir.Const):
                return ir.AtomExpr(e.a) if e.b.value else ir.AtomExpr(ir.FALSE)
        if isinstance(e, ir.Bin) and e.op == "|":
            if isinstance(e.a, ir.Const):
                return ir.AtomExpr(ir.TRUE) if e.a.value else ir.AtomExpr(e.b)
            if isinstance(e.b, ir.Const):
                return ir.AtomExpr(ir.TRUE) if e.b.value else ir.AtomExpr(e.a)
        if isinstance(e, ir.Un) and isinstance(e.a, ir.Const):
            if e.op == "not":
                return ir.AtomExpr(_const(not e.a.value, ir.BOOL))
            if e.op == "neg":
                return ir.AtomExpr(_const(-e.a.value, e.a.ty))
        if isinstance(e, ir.StrOp) and isinstance(e.a, ir.Const) and \
                isinstance(e.b, ir.Const):
            a, b = e.a.value, e.b.value
            v = {"eq": a == b, "ne": a != b, "starts": a.startswith(b),
                 "ends": a.endswith(b), "slice": b in a.split(" "),
                 "cmp": (a > b) - (a < b)}[e.op]
            ty = ir.INT if e.op == "cmp" else ir.BOOL
            return ir.AtomExpr(_const(v, ty))
        return None

    def visit(stmt):
        if isinstance(stmt, ir.Bind):
            e = stmt.expr
            folded = fold_expr(e, stmt.sym.ty)
            if folded is not None:
                return ir.Bind(stmt.sym, folded)
            if isinstance(e, ir.Ternary) and isinstance(e.cond, ir.Const):
                blk = e.then if e.cond.value else e.els
                return list(blk.stmts) + [ir.Bind(stmt.sym,
                                                  ir.AtomExpr(blk.result))]
            if isinstance(e, ir.AndThen) and isinstance(e.left, ir.Const):
                if not e.left.value:
                    return ir.Bind(stmt.sym, ir.AtomExpr(ir.FALSE))
                return list(e.right.stmts) + [
                    ir.Bind(stmt.sym, ir.AtomExpr(e.right.result))]
            if isinstance(e, ir.OrElse) and isinstance(e.left, ir.Const):
                if e.left.value:
                    return ir.Bind(stmt.sym, ir.AtomExpr(ir.TRUE))
                return list(e.right.stmts) + [
                    ir.Bind(stmt.sym, ir.AtomExpr(e.right.result))]
            if isinstance(e, ir.AndThen) and not e.right.stmts and \
                    isinstance(e.right.result, ir.Const):
                if e.right.result.value:
                    return ir.Bind(stmt.sym, ir.AtomExpr(e.left))
                return ir.Bind(stmt.sym, ir.AtomExpr(ir.FALSE))
            if isinstance(e, ir.OrElse) and not e.right.stmts and \
                    isinstance(e.right.result, ir.Const):
                if e.right.result.value:
                    return ir.Bind(stmt.sym, ir.AtomExpr(ir.TRUE))
                return ir.Bind(stmt.sym, ir.AtomExpr(e.left))
            return stmt
        if isinstance(stmt, ir.If) and isinstance(stmt.cond, ir.Const):
            if stmt.cond.value:
                return list(stmt.then.stmts)
            return list(stmt.els.stmts) if stmt.els is not None else []
        if isinstance(stmt, ir.While):
            if (not stmt.cond.stmts and
                    isinstance(stmt.cond.result, ir.Const) and
                    not stmt.cond.result.value):
                return None
            return stmt
        if isinstance(stmt, ir.ForRange) and isinstance(stmt.start, ir.Const) \
                and isinstance(stmt.stop, ir.Const) and stmt.step is None:
            if stmt.start.value >= stmt.stop.value:
                return None
            return stmt
        return stmt

    for _ in range(FIXPOINT_CAP):
        changed = [False]

        def tracking_visit(stmt):
            res = visit(stmt)
            if res is not stmt:
                changed[0] = True
            return res

        new_setup = map_blocks_deep(program.setup, tracking_visit)
        new_body = map_blocks_deep(program.body, tracking_visit)
        program = rebuild_program(program, setup=new_setup, body=new_body)
        if not changed[0]:
            break
    return program


# ---------------------------------------------------------------------------
# Scalar replacement (parameter promotion): flatten non-escaping records

def scalar_replacement(program):
    for _ in range(FIXPOINT_CAP):
        candidates = {}
        escaped = set()

        def note_read(atom):
            if isinstance(atom, ir.Sym):
                escaped.add(atom)

        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.RecordNew):
                candidates[stmt.sym] = dict(stmt.expr.values)
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.FieldGet):
                continue  # FieldGet bases do not escape
            for a in ir.stmt_atoms(stmt):
                note_read(a)

        # block results escape too
        def collect_results(block):
            if isinstance(block.result, ir.Sym):
                escaped.add(block.result)
            for s in block.stmts:
                for sub in ir.stmt_blocks(s):
                    collect_results(sub)
        for blk in ir.walk_program_blocks(program):
            collect_results(blk)

        flat = {s: v for s, v in candidates.items() if s not in escaped}
        if not flat:
            break

        def visit(stmt):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.FieldGet):
                base = stmt.expr.base
                if isinstance(base, ir.Sym) and base in flat and \
                        stmt.expr.name in flat[base]:
                    return ir.Bind(stmt.sym,
                                   ir.AtomExpr(flat[base][stmt.expr.name]))
            return stmt

        program = rebuild_program(
            program,
            setup=map_blocks_deep(program.setup, visit),
            body=map_blocks_deep(program.body, visit))
        # aliases introduced by forwarding would read as escapes next round
        program = let_binding_removal(dead_code_elimination(program))
    return program


# ---------------------------------------------------------------------------
# Let-binding removal

def let_binding_removal(program):
    """Inline bindings whose right side is a bare symbol or literal."""
    subst = {}

    def sub(atom):
        while isinstance(atom, ir.Sym) and atom in subst:
            atom = subst[atom]
        return atom

    def visit_block(block):
        out = []
        for stmt in block.stmts:
            stmt = substitute_stmt(stmt, sub)
            stmt = map_stmt_blocks(stmt, visit_block)
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.AtomExpr):
                subst[stmt.sym] = sub(stmt.expr.atom)
                continue
            out.append(stmt)
        return ir.Block(out, sub(block.result))

    return rebuild_program(program, setup=visit_block(program.setup),
                           body=visit_block(program.body))


# ---------------------------------------------------------------------------
# The composite cleanup phase interleaved through the pipeline

def cleanup_composite(program):
    """Scalar replacement, DCE, partial evaluation and let-binding removal,
    iterated to a fixpoint."""
    for _ in range(FIXPOINT_CAP):
        before = ir.node_census(program)
        program = scalar_replacement(program)
        program = dead_code_elimination(program)
        program = partial_evaluation(program)
        program = let_binding_removal(program)
        if ir.node_census(program) == before:
            break
    return program


def prune_unused_inputs(program):
    """Drop input declarations the final program never reads, so the loader
    builds exactly the structures the query uses."""
    _, used = ir.free_and_used_symbols(program.body)
    _, used_setup = ir.free_and_used_symbols(program.setup)
    used |= used_setup
    kept = []
    for decl in program.inputs:
        syms = ([decl.sym] if isinstance(decl, ir.TableIn)
                else [decl.data] + ([decl.counts] if decl.counts is not None
                                    else []))
        if any(s in used for s in syms):
            kept.append(decl)
    out = rebuild_program(program)
    out.inputs = kept
    return out


def dce_transformer():
    return FunctionTransformer("dce", dead_code_elimination)


def cse_transformer():
    return FunctionTransformer("cse", common_subexpression_elimination)


def pe_transformer():
    return FunctionTransformer("partial-eval", partial_evaluation)


def composite_transformer():
    return FunctionTransformer("promote-dce-peval", cleanup_composite)
