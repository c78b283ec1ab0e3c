import pytest

from planforge import inline, ir
from planforge import plan as pl


def scoped(**atoms):
    return {k: (lambda v=v: v) for k, v in atoms.items()}


def build_expr(expr_text_tree, scope_atoms):
    """Normalize a parsed scalar expression into a fresh block."""
    b = ir.Builder({})
    e = pl.parse_expr_form(expr_text_tree)
    e = pl.resolve_expr(e, [pl.OutCol(k, ty) for k, (ty, _) in
                            scope_atoms.items()])
    scope = {k: (lambda a=a: a) for k, (_, a) in scope_atoms.items()}
    res = inline.normalize_to_anf(e, scope, b)
    return b.blocks[0], res


def count_bindings_oracle(expr):
    """Independent recursive-descent count of compound subexpressions."""
    if isinstance(expr, (pl.Lit, pl.AttrRef)):
        return 0
    if isinstance(expr, pl.Arith):
        return 1 + count_bindings_oracle(expr.a) + count_bindings_oracle(expr.b)
    if isinstance(expr, pl.Cmp):
        return 1 + count_bindings_oracle(expr.a) + count_bindings_oracle(expr.b)
    if isinstance(expr, pl.Not):
        return 1 + count_bindings_oracle(expr.a)
    raise AssertionError(f"oracle does not cover {expr!r}")


def test_anf_simple_product():
    # a*(1-b): the subtraction binds first, then the product
    blk, res = build_expr(["*", "a", ["-", "1", "b"]],
                          {"a": ("DOUBLE", ir.Sym(ir.DOUBLE, "a")),
                           "b": ("DOUBLE", ir.Sym(ir.DOUBLE, "b"))})
    binds = [s for s in blk.stmts if isinstance(s, ir.Bind)]
    assert len(binds) == 2
    assert isinstance(binds[0].expr, ir.Bin) and binds[0].expr.op == "-"
    assert isinstance(binds[1].expr, ir.Bin) and binds[1].expr.op == "*"
    assert res is binds[1].sym


def test_anf_literal_emits_nothing():
    blk, res = build_expr("3", {})
    assert blk.stmts == []
    assert isinstance(res, ir.Const) and res.value == 3


def test_anf_duplicate_subexpression_counted_by_oracle():
    # (1-b) + a*(1-b): duplicates bind twice before CSE
    tree = ["+", ["-", "1", "b"], ["*", "a", ["-", "1", "b"]]]
    e = pl.resolve_expr(pl.parse_expr_form(tree),
                        [pl.OutCol("a", "DOUBLE"), pl.OutCol("b", "DOUBLE")])
    expected = count_bindings_oracle(e)
    assert expected == 4
    blk, _ = build_expr(tree, {"a": ("DOUBLE", ir.Sym(ir.DOUBLE, "a")),
                               "b": ("DOUBLE", ir.Sym(ir.DOUBLE, "b"))})
    assert len([s for s in blk.stmts if isinstance(s, ir.Bind)]) == expected


def test_anf_operands_are_atoms():
    # no compound subexpressions remain: every operand is a symbol or literal
    tree = ["*", ["+", "a", "1"], ["-", ["*", "a", "b"], "2"]]
    blk, _ = build_expr(tree, {"a": ("DOUBLE", ir.Sym(ir.DOUBLE, "a")),
                               "b": ("DOUBLE", ir.Sym(ir.DOUBLE, "b"))})
    for s in blk.stmts:
        for a in ir.expr_atoms(s.expr):
            assert isinstance(a, (ir.Sym, ir.Const))


# ---------------------------------------------------------------------------
# typecheck

def _trivial_program():
    b = ir.Builder({})
    x = b.bind(ir.Bin("+", ir.Const(1, ir.INT), ir.Const(2, ir.INT)))
    b.emit(ir.EmitRow((x,)))
    return ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)


def test_typecheck_wellformed():
    assert ir.typecheck(_trivial_program()) == []


def test_typecheck_use_before_definition():
    ghost = ir.Sym(ir.INT, "ghost")
    b = ir.Builder({})
    b.bind(ir.Bin("+", ghost, ir.Const(1, ir.INT)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    diags = ir.typecheck(prog)
    assert any("ghost" in d and "before definition" in d for d in diags)


def test_typecheck_multimap_at_low_level():
    b = ir.Builder({})
    b.bind(ir.MultiMapNew(ir.INT, ir.INT), "mm")
    prog = ir.Program(ir.LOW, [], ir.Block(), b.blocks[0], b.records)
    diags = ir.typecheck(prog)
    assert any("high-level construct at LOW level" in d for d in diags)


def test_typecheck_double_binding():
    s = ir.Sym(ir.INT, "x")
    blk = ir.Block([ir.Bind(s, ir.AtomExpr(ir.Const(1, ir.INT))),
                    ir.Bind(s, ir.AtomExpr(ir.Const(2, ir.INT)))])
    prog = ir.Program(ir.HIGH, [], ir.Block(), blk, {})
    assert any("bound more than once" in d for d in ir.typecheck(prog))


def test_typecheck_deterministic_and_idempotent():
    prog = _trivial_program()
    assert ir.typecheck(prog) == ir.typecheck(prog)


# ---------------------------------------------------------------------------
# def/use computation

def fig13_step1_block():
    """Column reads, a record rebuild and a projection out of it."""
    b = ir.Builder({})
    b.record_type("R2", (("L1", ir.DOUBLE), ("L2", ir.DOUBLE)))
    a = ir.Sym(ir.Rec("COLS"), "a")
    i = ir.Sym(ir.INT, "i")
    b.record_type("COLS", (("L1", ir.ArrayType(ir.DOUBLE)),
                           ("L2", ir.ArrayType(ir.DOUBLE))))
    a1 = b.bind(ir.FieldGet(a, "L1"), "a1")
    a2 = b.bind(ir.FieldGet(a, "L2"), "a2")
    e1 = b.bind(ir.ArrayGet(a1, i), "e1")
    e2 = b.bind(ir.ArrayGet(a2, i), "e2")
    r = b.bind(ir.RecordNew("R2", (("L1", e1), ("L2", e2))), "r")
    blk = b.blocks[0]
    return blk, dict(a=a, i=i, a1=a1, a2=a2, e1=e1, e2=e2, r=r), b.records


def test_free_and_used_fig13_block():
    blk, syms, _ = fig13_step1_block()
    blk.result = syms["r"]
    defined, used = ir.free_and_used_symbols(blk)
    assert defined == {syms["a1"], syms["a2"], syms["e1"], syms["e2"],
                       syms["r"]}
    # e1, e2 feed the record; a1, a2, i feed the array reads; a is free
    assert {syms["e1"], syms["e2"], syms["a1"], syms["a2"], syms["i"],
            syms["a"], syms["r"]} <= used


def test_free_and_used_empty_block():
    assert ir.free_and_used_symbols(ir.Block()) == (set(), set())


def test_effect_targets_count_as_uses():
    arr = ir.Sym(ir.ArrayType(ir.INT), "arr")
    i = ir.Sym(ir.INT, "i")
    v = ir.Sym(ir.INT, "v")
    blk = ir.Block([ir.ArraySet(arr, i, v)])
    defined, used = ir.free_and_used_symbols(blk)
    assert defined == set()
    assert used == {arr, i, v}


# ---------------------------------------------------------------------------
# dump format

def test_dump_is_deterministic_and_renumbered():
    prog = _trivial_program()
    d1 = ir.dump_program(prog)
    d2 = ir.dump_program(prog)
    assert d1 == d2
    assert "s0" in d1  # symbol numbering normalized from zero
