"""Shared analysis and cloning helpers for the domain passes."""

from __future__ import annotations

from .. import ir
from .. import transform as tr


def collect_defs(program):
    """Sym -> defining expression, across all blocks."""
    defs = {}
    for stmt in ir.walk_program_stmts(program):
        if isinstance(stmt, ir.Bind):
            defs[stmt.sym] = stmt.expr
    return defs


def resolve_field_source(atom, defs):
    """Follow let-chains to a FieldGet; returns (base sym, field) or None."""
    seen = 0
    while isinstance(atom, ir.Sym) and seen < 64:
        expr = defs.get(atom)
        if isinstance(expr, ir.AtomExpr):
            atom = expr.atom
            seen += 1
            continue
        if isinstance(expr, ir.FieldGet) and isinstance(expr.base, ir.Sym):
            return expr.base, expr.name
        return None
    return None


def scan_loop_of(path):
    """Innermost enclosing scan-tagged loop on a statement path."""
    for stmt in reversed(path):
        if isinstance(stmt, ir.ForRange) and "scan" in stmt.attrs:
            return stmt
    return None


def walk_with_path(block, path=()):
    """Yield (stmt, path) where path is the tuple of enclosing statements."""
    for stmt in block.stmts:
        yield stmt, path
        for sub in ir.stmt_blocks(stmt):
            yield from walk_with_path(sub, path + (stmt,))


def scan_row_sym(loop):
    """The row binding of an inliner-shaped scan loop, or None."""
    if not loop.body.stmts:
        return None
    first = loop.body.stmts[0]
    if isinstance(first, ir.Bind) and isinstance(first.expr, ir.ArrayGet):
        return first.sym
    return None


class Cloner:
    """Deep-copies statement lists, freshening every bound symbol and applying
    an atom substitution; `hook(stmt, cloner)` may take over one statement and
    return a replacement list."""

    def __init__(self, submap=None, hook=None):
        self.submap = dict(submap or {})
        self.hook = hook

    def atom(self, a):
        while isinstance(a, ir.Sym) and a in self.submap:
            a = self.submap[a]
        return a

    def fresh(self, sym):
        s2 = ir.Sym(sym.ty, sym.hint, dict(sym.attrs))
        self.submap[sym] = s2
        return s2

    def block(self, blk):
        out = []
        for stmt in blk.stmts:
            out.extend(self.stmt(stmt))
        return ir.Block(out, self.atom(blk.result))

    def lam(self, fn):
        params = tuple(self.fresh(p) for p in fn.params)
        return ir.Lambda(params, self.block(fn.body))

    def stmt(self, stmt):
        if self.hook is not None:
            res = self.hook(stmt, self)
            if res is not None:
                return res
        s = tr.substitute_stmt(stmt, self.atom)
        if isinstance(s, ir.Bind):
            e = s.expr
            if isinstance(e, ir.Ternary):
                e = ir.Ternary(e.cond, self.block(e.then), self.block(e.els))
            elif isinstance(e, ir.AndThen):
                e = ir.AndThen(e.left, self.block(e.right))
            elif isinstance(e, ir.OrElse):
                e = ir.OrElse(e.left, self.block(e.right))
            elif isinstance(e, ir.MapGetOrElseUpdate):
                e = ir.MapGetOrElseUpdate(e.map, e.key, self.lam(e.default))
            return [ir.Bind(self.fresh(s.sym), e)]
        if isinstance(s, ir.VarDecl):
            return [ir.VarDecl(self.fresh(s.var), self.atom(s.init))]
        if isinstance(s, ir.VarSet):
            return [ir.VarSet(self.atom(s.var), self.atom(s.value))]
        if isinstance(s, ir.While):
            return [ir.While(self.block(s.cond), self.block(s.body))]
        if isinstance(s, ir.ForRange):
            var = self.fresh(s.var)
            return [ir.ForRange(var, s.start, s.stop, self.block(s.body),
                                s.step, dict(s.attrs))]
        if isinstance(s, ir.If):
            els = self.block(s.els) if s.els is not None else None
            return [ir.If(s.cond, self.block(s.then), els)]
        if isinstance(s, (ir.MapForeach,)):
            return [ir.MapForeach(s.map, self.lam(s.fn))]
        if isinstance(s, ir.MultiMapForeachAt):
            return [ir.MultiMapForeachAt(s.map, s.key, self.lam(s.fn))]
        if isinstance(s, ir.SeqForeach):
            return [ir.SeqForeach(s.seq, self.lam(s.fn))]
        if isinstance(s, ir.SortStmt):
            return [ir.SortStmt(s.arr, s.length, self.lam(s.cmp))]
        return [s]


def clone_stmts(stmts, submap, hook=None):
    c = Cloner(submap, hook)
    out = []
    for s in stmts:
        out.extend(c.stmt(s))
    return out


def path_is_pure(stmts, stop_stmt):
    """True when every statement strictly before `stop_stmt` (recursively along
    the guard spine) is a pure binding or an If; used to decide whether a build
    or probe loop body can be replayed per bucket element."""
    for s in stmts:
        if s is stop_stmt:
            return True
        if isinstance(s, ir.Bind):
            if not ir.expr_dead_safe(s.expr):
                return False
            continue
        if isinstance(s, ir.If):
            if s.els is not None:
                return False
            if contains_stmt(s.then, stop_stmt):
                return path_is_pure(s.then.stmts, stop_stmt)
            if ir.block_has_effects(s.then):
                return False
            continue
        return False
    return True


def contains_stmt(block, target):
    for s in ir.walk_stmts(block):
        if s is target:
            return True
    return False


def pow2_at_least(n):
    b = 1
    while b < n:
        b <<= 1
    return b
