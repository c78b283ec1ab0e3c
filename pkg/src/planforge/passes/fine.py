"""Fine-grained rewrites applied to small code windows: constant-size arrays
become local variables, short-circuit boolean tests with pure right operands
become eager bitwise tests (better branch prediction), and constant-trip
loops can be tiled."""

from __future__ import annotations

from .. import ir
from .. import transform as tr

ALL_KINDS = ("array_to_locals", "bool_and_strength", "loop_tiling")


class FineGrainedPass(tr.Transformer):
    name = "fine-grained"

    def __init__(self, kinds=ALL_KINDS, max_local_slots=16, tile=64):
        super().__init__("fine-grained")
        if isinstance(kinds, str):
            kinds = (kinds,)
        self.kinds = tuple(kinds)
        self.max_local_slots = max_local_slots
        self.tile = tile

    def fresh(self):
        return FineGrainedPass(self.kinds, self.max_local_slots, self.tile)

    def transform(self, program):
        if "array_to_locals" in self.kinds:
            program = self._array_to_locals(program)
        if "bool_and_strength" in self.kinds:
            program = self._bool_strength(program)
        if "loop_tiling" in self.kinds:
            program = self._tiling(program)
        return program

    # -- arrays to locals -------------------------------------------------------

    def _array_to_locals(self, program):
        candidates = {}
        for stmt in ir.walk_program_stmts(program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.ArrayNew):
                e = stmt.expr
                if isinstance(e.size, ir.Const) and \
                        0 < e.size.value <= self.max_local_slots and \
                        not isinstance(ir.resolve(e.elem, program.records),
                                       ir.RecordType):
                    candidates[stmt.sym] = stmt

        if not candidates:
            return program

        ok = dict(candidates)

        def disqualify_uses(stmt):
            # allowed uses: indexed get/set with a constant index
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.ArrayGet) \
                    and stmt.expr.arr in ok:
                if isinstance(stmt.expr.idx, ir.Const) and \
                        0 <= stmt.expr.idx.value < \
                        candidates[stmt.expr.arr].expr.size.value:
                    if stmt.expr.idx in ok:
                        ok.pop(stmt.expr.idx, None)
                    return
                ok.pop(stmt.expr.arr, None)
                return
            if isinstance(stmt, ir.ArraySet) and stmt.arr in ok:
                if stmt.value in ok:
                    ok.pop(stmt.value, None)
                if not (isinstance(stmt.idx, ir.Const) and
                        0 <= stmt.idx.value <
                        candidates[stmt.arr].expr.size.value):
                    ok.pop(stmt.arr, None)
                return
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.ArrayNew):
                return
            for a in ir.stmt_atoms(stmt):
                if a in ok:
                    ok.pop(a, None)

        for stmt in ir.walk_program_stmts(program):
            disqualify_uses(stmt)
        for blk in ir.walk_program_blocks(program):
            for s in _results(blk):
                ok.pop(s, None)
        if not ok:
            return program

        program = tr.rebuild_program(program)
        locals_for = {}

        def visit(stmt):
            if isinstance(stmt, ir.Bind) and stmt.sym in ok:
                e = stmt.expr
                zero = {ir.INT: ir.Const(0, ir.INT),
                        ir.DOUBLE: ir.Const(0.0, ir.DOUBLE),
                        ir.BOOL: ir.FALSE,
                        ir.DATE: ir.Const(0, ir.DATE)}.get(
                            e.elem, ir.Const(0, ir.INT))
                cells = [ir.Sym(e.elem, f"{stmt.sym.hint}_{i}")
                         for i in range(e.size.value)]
                locals_for[stmt.sym] = cells
                return [ir.VarDecl(c, zero) for c in cells]
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.ArrayGet) \
                    and stmt.expr.arr in locals_for:
                cells = locals_for[stmt.expr.arr]
                return ir.Bind(stmt.sym, ir.VarGet(cells[stmt.expr.idx.value]))
            if isinstance(stmt, ir.ArraySet) and stmt.arr in locals_for:
                cells = locals_for[stmt.arr]
                return ir.VarSet(cells[stmt.idx.value], stmt.value)
            return stmt

        return tr.rebuild_program(
            program,
            setup=tr.map_blocks_deep(program.setup, visit),
            body=tr.map_blocks_deep(program.body, visit))

    # -- && to & ---------------------------------------------------------------

    def _bool_strength(self, program):
        def hoistable(block):
            # effect-free is not enough: the left operand may be the null
            # or bounds guard for a load on the right, which must then stay
            # conditional
            for s in ir.walk_stmts(block):
                if not isinstance(s, ir.Bind):
                    return False
                if not isinstance(s.expr, (ir.Bin, ir.Un, ir.StrOp,
                                           ir.AtomExpr)):
                    return False
            return True

        def visit(stmt):
            if isinstance(stmt, ir.Bind):
                e = stmt.expr
                if isinstance(e, ir.AndThen) and hoistable(e.right):
                    return list(e.right.stmts) + [
                        ir.Bind(stmt.sym, ir.Bin("&", e.left, e.right.result))]
                if isinstance(e, ir.OrElse) and hoistable(e.right):
                    return list(e.right.stmts) + [
                        ir.Bind(stmt.sym, ir.Bin("|", e.left, e.right.result))]
            return stmt

        return tr.rebuild_program(
            program,
            setup=tr.map_blocks_deep(program.setup, visit),
            body=tr.map_blocks_deep(program.body, visit))

    # -- loop tiling -------------------------------------------------------------

    def _tiling(self, program):
        tile = self.tile

        def visit(stmt):
            if isinstance(stmt, ir.ForRange) and stmt.step is None and \
                    isinstance(stmt.start, ir.Const) and \
                    isinstance(stmt.stop, ir.Const) and \
                    not stmt.attrs.get("tiled") and \
                    stmt.stop.value - stmt.start.value > 2 * tile:
                b = ir.Builder(program.records)
                with b.for_range(stmt.start, stmt.stop, "to",
                                 {"tiled": True},
                                 step=ir.Const(tile, ir.INT)) as o:
                    e = b.bind(ir.Bin("+", o, ir.Const(tile, ir.INT)), "te")
                    lt = b.bind(ir.Bin("<", e, stmt.stop), "lt")
                    m = b.bind(ir.Ternary(lt, ir.Block([], e),
                                          ir.Block([], stmt.stop)), "m")
                    b.emit(ir.ForRange(stmt.var, o, m, stmt.body, None,
                                       dict(stmt.attrs, tiled=True)))
                return b.blocks[0].stmts
            return stmt

        return tr.rebuild_program(
            program,
            setup=program.setup,
            body=tr.map_blocks_deep(program.body, visit))


def _results(blk):
    out = []
    if isinstance(blk.result, ir.Sym):
        out.append(blk.result)
    for s in blk.stmts:
        for sub in ir.stmt_blocks(s):
            out.extend(_results(sub))
    return out
