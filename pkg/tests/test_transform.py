import pytest

from planforge import inline, ir, loader
from planforge import plan as pl
from planforge import transform as tr
from planforge.pipeline import naive_program

from conftest import (ALL_QUERIES, MINI, bundled_plan_text, fresh_catalog,
                      run_program)
import oracles


def interp_rows(program, catalog, data=MINI):
    rows, _ = run_program(program, catalog, data)
    return rows


# ---------------------------------------------------------------------------
# the transformer framework

def _toy_program():
    b = ir.Builder({})
    mm = b.bind(ir.MultiMapNew(ir.INT, ir.INT), "mm")
    k = ir.Const(1, ir.INT)
    v = ir.Const(2, ir.INT)
    b.emit(ir.MultiMapAdd(mm, k, v))
    x = b.bind(ir.Bin("+", ir.Const(1, ir.INT), ir.Const(2, ir.INT)))
    b.emit(ir.EmitRow((x,)))
    return ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)


def test_identity_transformer_keeps_structure():
    prog = _toy_program()
    out = tr.apply_transformer(prog, tr.Transformer("identity"))
    assert ir.dump_program(out) == ir.dump_program(prog)


def test_remove_rule_drops_addbinding():
    prog = _toy_program()
    t = tr.Transformer("drop-addbinding")
    marked = set()
    t.analysis.append(
        lambda s: marked.add(s.sym) if isinstance(s, ir.Bind)
        and isinstance(s.expr, ir.MultiMapNew) else None)
    t.rewrite.append(
        lambda s: tr.Remove() if isinstance(s, ir.MultiMapAdd)
        and s.map in marked else None)
    out = tr.apply_transformer(prog, t)
    assert ir.node_census(out).get("MultiMapAdd", 0) == 0
    assert ir.node_census(prog).get("MultiMapAdd", 0) == 1


def test_illtyped_rewrite_reports_and_keeps_input():
    prog = _toy_program()
    ghost = ir.Sym(ir.INT, "ghost")
    t = tr.Transformer("bad")
    t.rewrite.append(
        lambda s: tr.ReplaceWith([ir.Bind(s.sym, ir.AtomExpr(ghost))])
        if isinstance(s, ir.Bind) and isinstance(s.expr, ir.Bin) else None)
    diags = []
    out = tr.apply_transformer(prog, t, diags)
    assert diags and "bad" in diags[0]
    assert ir.dump_program(out) == ir.dump_program(prog)


def test_analysis_runs_before_rewrite():
    prog = _toy_program()
    order = []
    t = tr.Transformer("phases")
    t.analysis.append(lambda s: order.append("a"))
    t.rewrite.append(lambda s: order.append("r") or None)
    tr.apply_transformer(prog, t)
    assert "r" not in order[:order.count("a")]  # all analysis first


def test_first_match_wins():
    prog = _toy_program()
    t = tr.Transformer("first")
    t.rewrite.append(lambda s: tr.Keep() if isinstance(s, ir.MultiMapAdd)
                     else None)
    t.rewrite.append(lambda s: tr.Remove() if isinstance(s, ir.MultiMapAdd)
                     else None)
    out = tr.apply_transformer(prog, t)
    assert ir.node_census(out).get("MultiMapAdd", 0) == 1


# ---------------------------------------------------------------------------
# dead code elimination

def fig13_projected_block():
    """Column reads feeding a record whose only projection was already
    forwarded: the record and the second column chain are dead."""
    b = ir.Builder({})
    b.record_type("COLS", (("L1", ir.ArrayType(ir.DOUBLE)),
                           ("L2", ir.ArrayType(ir.DOUBLE))))
    b.record_type("R2", (("L1", ir.DOUBLE), ("L2", ir.DOUBLE)))
    a = ir.Sym(ir.Rec("COLS"), "a", {"table": "A"})
    i = ir.Sym(ir.INT, "i", {"table": "I"})
    a1 = b.bind(ir.FieldGet(a, "L1"), "a1")
    a2 = b.bind(ir.FieldGet(a, "L2"), "a2")
    e1 = b.bind(ir.ArrayGet(a1, i), "e1")
    e2 = b.bind(ir.ArrayGet(a2, i), "e2")
    b.bind(ir.RecordNew("R2", (("L1", e1), ("L2", e2))), "r")
    blk = b.blocks[0]
    blk.result = e1
    prog = ir.Program(ir.HIGH, [], ir.Block(), blk, b.records)
    prog.input_syms = lambda: [a, i]  # stand-ins for loaded inputs
    return prog


def test_dce_fig13_reaches_three_statements():
    prog = fig13_projected_block()
    out = tr.dead_code_elimination(prog)
    kinds = [type(s.expr).__name__ for s in out.body.stmts]
    assert kinds == ["FieldGet", "ArrayGet"]
    assert len(out.body.stmts) == 2 and isinstance(out.body.result, ir.Sym)


def test_dce_keeps_live_chain():
    b = ir.Builder({})
    x = b.bind(ir.Bin("+", ir.Const(1, ir.INT), ir.Const(2, ir.INT)))
    y = b.bind(ir.Bin("*", x, ir.Const(3, ir.INT)))
    b.emit(ir.EmitRow((y,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.dead_code_elimination(prog)
    assert len(out.body.stmts) == 3


def test_dce_removes_chain_of_ten_in_one_run():
    b = ir.Builder({})
    prev = b.bind(ir.Bin("+", ir.Const(0, ir.INT), ir.Const(1, ir.INT)))
    for _ in range(9):
        prev = b.bind(ir.Bin("+", prev, ir.Const(1, ir.INT)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.dead_code_elimination(prog)
    assert out.body.stmts == []


def test_dce_never_removes_effects():
    b = ir.Builder({})
    arr = b.bind(ir.ArrayNew(ir.INT, ir.Const(4, ir.INT)), "arr")
    b.emit(ir.ArraySet(arr, ir.Const(0, ir.INT), ir.Const(7, ir.INT)))
    x = b.bind(ir.ArrayGet(arr, ir.Const(0, ir.INT)))
    b.emit(ir.EmitRow((x,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.dead_code_elimination(prog)
    assert ir.node_census(out)["ArraySet"] == 1


# ---------------------------------------------------------------------------
# common subexpression elimination

def _mul_count(prog):
    n = 0
    for s in ir.walk_program_stmts(prog):
        if isinstance(s, ir.Bind) and isinstance(s.expr, ir.Bin) \
                and s.expr.op == "*":
            n += 1
    return n


def test_cse_motivating_aggregations_three_to_two():
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(bundled_plan_text("q1"), c)
    prog = inline.inline_plan(tree, c, "q1")
    assert _mul_count(prog) == 3
    out = tr.common_subexpression_elimination(prog)
    assert _mul_count(out) == 2
    assert interp_rows(out, c) == interp_rows(prog, c)


def test_cse_does_not_merge_effectful_lookups():
    b = ir.Builder({})
    hm = b.bind(ir.MapNew(ir.INT, ir.ArrayType(ir.DOUBLE)), "hm")

    def default():
        bb = ir.Block()
        arr = ir.Sym(ir.ArrayType(ir.DOUBLE), "a")
        bb.stmts.append(ir.Bind(arr, ir.ArrayNew(ir.DOUBLE,
                                                 ir.Const(1, ir.INT))))
        bb.result = arr
        return ir.Lambda((), bb)

    k = ir.Const(1, ir.INT)
    v1 = b.bind(ir.MapGetOrElseUpdate(hm, k, default()), "v1")
    v2 = b.bind(ir.MapGetOrElseUpdate(hm, k, default()), "v2")
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.common_subexpression_elimination(prog)
    assert ir.node_census(out)["MapGetOrElseUpdate"] == 2


def test_cse_single_binding_unchanged():
    b = ir.Builder({})
    x = b.bind(ir.Bin("+", ir.Const(1, ir.INT), ir.Const(2, ir.INT)))
    b.emit(ir.EmitRow((x,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.common_subexpression_elimination(prog)
    assert ir.dump_program(out) == ir.dump_program(prog)


def test_cse_invalidates_loads_after_store():
    b = ir.Builder({})
    arr = b.bind(ir.ArrayNew(ir.INT, ir.Const(2, ir.INT)), "arr")
    g1 = b.bind(ir.ArrayGet(arr, ir.Const(0, ir.INT)), "g1")
    b.emit(ir.ArraySet(arr, ir.Const(0, ir.INT), ir.Const(9, ir.INT)))
    g2 = b.bind(ir.ArrayGet(arr, ir.Const(0, ir.INT)), "g2")
    b.emit(ir.EmitRow((g1, g2)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.common_subexpression_elimination(prog)
    # the second read survives: the store in between may change the value
    gets = [s for s in out.body.stmts
            if isinstance(s, ir.Bind) and isinstance(s.expr, ir.ArrayGet)]
    assert len(gets) == 2


# ---------------------------------------------------------------------------
# partial evaluation

def test_pe_if_true_keeps_then_branch():
    b = ir.Builder({})
    with b.if_(ir.TRUE):
        b.emit(ir.EmitRow((ir.Const(1, ir.INT),)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.partial_evaluation(prog)
    assert ir.node_census(out).get("If", 0) == 0
    assert ir.node_census(out)["EmitRow"] == 1


def test_pe_folds_arithmetic():
    b = ir.Builder({})
    x = b.bind(ir.Bin("+", ir.Const(1, ir.INT), ir.Const(2, ir.INT)))
    b.emit(ir.EmitRow((x,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.partial_evaluation(prog)
    binds = [s for s in out.body.stmts if isinstance(s, ir.Bind)]
    assert isinstance(binds[0].expr, ir.AtomExpr)
    assert binds[0].expr.atom.value == 3


def test_pe_folds_date_comparison():
    from planforge import catalog as c
    d1 = c.parse_date("1994-01-01")
    d2 = c.parse_date("1995-01-01")
    assert d1 < d2  # oracle: integer days comparison
    b = ir.Builder({})
    x = b.bind(ir.Bin("<", ir.Const(d1, ir.DATE), ir.Const(d2, ir.DATE)))
    b.emit(ir.EmitRow((x,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.partial_evaluation(prog)
    binds = [s for s in out.body.stmts if isinstance(s, ir.Bind)]
    assert binds[0].expr.atom.value is True


def test_pe_removes_constant_false_loop():
    b = ir.Builder({})
    with b.while_() as w:
        w.cond(ir.FALSE)
        b.emit(ir.EmitRow((ir.Const(1, ir.INT),)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.partial_evaluation(prog)
    assert out.body.stmts == []


# ---------------------------------------------------------------------------
# scalar replacement

def test_scalar_replacement_forwards_field():
    b = ir.Builder({})
    b.record_type("P", (("L1", ir.INT), ("L2", ir.INT)))
    e1 = b.bind(ir.Bin("+", ir.Const(1, ir.INT), ir.Const(0, ir.INT)), "e1")
    e2 = b.bind(ir.Bin("+", ir.Const(2, ir.INT), ir.Const(0, ir.INT)), "e2")
    r = b.bind(ir.RecordNew("P", (("L1", e1), ("L2", e2))), "r")
    x = b.bind(ir.FieldGet(r, "L1"), "x")
    b.emit(ir.EmitRow((x,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.scalar_replacement(prog)
    assert ir.node_census(out).get("RecordNew", 0) == 0  # gone after DCE
    assert ir.node_census(out).get("FieldGet", 0) == 0


def test_scalar_replacement_skips_escaping_records():
    b = ir.Builder({})
    b.record_type("P", (("L1", ir.INT),))
    arr = b.bind(ir.ArrayNew(ir.Rec("P"), ir.Const(2, ir.INT)), "arr")
    r = b.bind(ir.RecordNew("P", (("L1", ir.Const(1, ir.INT)),)), "r")
    b.emit(ir.ArraySet(arr, ir.Const(0, ir.INT), r))
    x = b.bind(ir.FieldGet(r, "L1"), "x")
    b.emit(ir.EmitRow((x,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.scalar_replacement(prog)
    assert ir.node_census(out)["RecordNew"] == 1


def test_scalar_replacement_nested_records_recursively():
    b = ir.Builder({})
    b.record_type("IN", (("V", ir.INT),))
    b.record_type("OUT", (("N", ir.Rec("IN")),))
    inner = b.bind(ir.RecordNew("IN", (("V", ir.Const(5, ir.INT)),)), "in_")
    outer = b.bind(ir.RecordNew("OUT", (("N", inner),)), "out")
    got = b.bind(ir.FieldGet(outer, "N"), "n")
    v = b.bind(ir.FieldGet(got, "V"), "v")
    b.emit(ir.EmitRow((v,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.scalar_replacement(prog)
    assert ir.typecheck(out) == []
    assert ir.node_census(out).get("RecordNew", 0) == 0


# ---------------------------------------------------------------------------
# let-binding removal

def test_let_removal_inlines_alias():
    b = ir.Builder({})
    x = b.bind(ir.Bin("+", ir.Const(1, ir.INT), ir.Const(1, ir.INT)), "x")
    s1 = b.bind(ir.AtomExpr(x), "s1")
    s2 = b.bind(ir.Bin("+", s1, ir.Const(1, ir.INT)), "s2")
    b.emit(ir.EmitRow((s2,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.let_binding_removal(prog)
    binds = [s for s in out.body.stmts if isinstance(s, ir.Bind)]
    assert len(binds) == 2
    assert binds[1].expr.a is x


def test_let_removal_keeps_effectful_bindings():
    b = ir.Builder({})
    hm = b.bind(ir.MapNew(ir.INT, ir.ArrayType(ir.DOUBLE)), "hm")
    dflt = ir.Lambda((), ir.Block(
        [ir.Bind(ir.Sym(ir.ArrayType(ir.DOUBLE), "a"),
                 ir.ArrayNew(ir.DOUBLE, ir.Const(1, ir.INT)))]))
    dflt.body.result = dflt.body.stmts[0].sym
    v = b.bind(ir.MapGetOrElseUpdate(hm, ir.Const(1, ir.INT), dflt), "v")
    x = b.bind(ir.ArrayGet(v, ir.Const(0, ir.INT)))
    b.emit(ir.EmitRow((x,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.let_binding_removal(prog)
    assert ir.node_census(out)["MapGetOrElseUpdate"] == 1


def test_let_removal_collapses_alias_chain_in_one_run():
    b = ir.Builder({})
    x = b.bind(ir.Bin("+", ir.Const(1, ir.INT), ir.Const(1, ir.INT)), "x")
    cur = x
    for _ in range(5):
        cur = b.bind(ir.AtomExpr(cur), "al")
    b.emit(ir.EmitRow((cur,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    out = tr.let_binding_removal(prog)
    binds = [s for s in out.body.stmts if isinstance(s, ir.Bind)]
    assert len(binds) == 1
    assert out.body.stmts[-1].values[0] is x


# ---------------------------------------------------------------------------
# cross-cutting properties

PASSES = [
    ("dce", tr.dead_code_elimination),
    ("cse", tr.common_subexpression_elimination),
    ("pe", tr.partial_evaluation),
    ("scalar-repl", tr.scalar_replacement),
    ("let-removal", tr.let_binding_removal),
]


@pytest.mark.parametrize("name,fn", PASSES, ids=[n for n, _ in PASSES])
def test_generic_passes_idempotent(name, fn):
    c = fresh_catalog(MINI)
    for q in ("q1", "q12", "q13"):
        tree = pl.parse_plan(bundled_plan_text(q), c)
        prog = inline.inline_plan(tree, c, q)
        once = fn(prog)
        twice = fn(once)
        assert ir.dump_program(twice) == ir.dump_program(once)


@pytest.mark.parametrize("query", ALL_QUERIES)
def test_generic_passes_preserve_semantics(query):
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(bundled_plan_text(query), c)
    prog = naive_program(tree, c, query)
    base = interp_rows(prog, c)
    types = [t.name for t in prog.meta["print_types"]]
    ordered = prog.meta["sorted_output"]
    for name, fn in PASSES:
        out = fn(prog)
        assert ir.typecheck(out) == [], name
        rows = interp_rows(out, c)
        assert oracles.rows_match(rows, base, types, ordered), (query, name)


def test_run_pipeline_is_associative():
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(bundled_plan_text("q1"), c)
    prog = inline.inline_plan(tree, c, "q1")
    a = tr.cse_transformer()
    b_ = tr.dce_transformer()
    c_ = tr.pe_transformer()
    flat = tr.run_pipeline(prog, [a, b_, c_])
    nested1 = tr.run_pipeline(prog, [[a, b_], c_])
    nested2 = tr.run_pipeline(prog, [a, [b_, c_]])
    assert ir.dump_program(flat) == ir.dump_program(nested1)
    assert ir.dump_program(flat) == ir.dump_program(nested2)


def test_trace_ir_dumps_files(tmp_path):
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(bundled_plan_text("q6"), c)
    prog = inline.inline_plan(tree, c, "q6")
    tr.run_pipeline(prog, [tr.cse_transformer(), tr.dce_transformer()],
                    trace_dir=str(tmp_path))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["00-input.ir", "01-cse.ir", "02-dce.ir"]
