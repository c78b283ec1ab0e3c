import re
import subprocess

import pytest

from planforge import catalog as cat
from planforge import inline, ir, loader
from planforge import plan as pl
from planforge import transform as tr
from planforge.backend import cc, emit, interp
from planforge.backend.intrinsics import MANIFEST, runtime_header_text
from planforge.backend.lower import LoweringError, lower_to_c_level
from planforge.pipeline import Settings, compile_plan, naive_program

from conftest import MINI, bundled_plan_text, fresh_catalog, run_program
import oracles


# ---------------------------------------------------------------------------
# lowering

def test_lowering_joins_to_pointer_chains():
    # after chain specialization: an allocation of a pointer array, pointer
    # typed locals and arrow-style field access
    c = fresh_catalog(MINI)
    from planforge.passes import MultiMapLoweringPass
    prog = inline.inline_plan(pl.parse_plan(bundled_plan_text("q12"), c), c,
                              "q12")
    chained = tr.apply_transformer(prog, MultiMapLoweringPass(c, Settings()))
    low = lower_to_c_level(chained)
    assert low.level == ir.LOW
    assert ir.typecheck(low) == []
    cen = ir.node_census(low)
    assert cen.get("Alloc", 0) >= 1
    ptr_syms = [s for s in ir.walk_program_stmts(low)
                if isinstance(s, ir.Bind)
                and isinstance(s.sym.ty, ir.PointerType)]
    assert ptr_syms
    assert ir.dump_program(low).count(".next")


def test_lowering_keeps_integer_arithmetic():
    b = ir.Builder({})
    x = b.bind(ir.Bin("+", ir.Const(20, ir.INT), ir.Const(22, ir.INT)))
    b.emit(ir.EmitRow((x,)))
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    low = lower_to_c_level(prog)
    kinds = [type(s.expr).__name__ for s in low.body.stmts
             if isinstance(s, ir.Bind)]
    assert kinds == ["Bin"]


def test_lowering_residual_map_without_fallback_errors():
    b = ir.Builder({})
    b.bind(ir.MultiMapNew(ir.INT, ir.INT), "leftover")
    prog = ir.Program(ir.HIGH, [], ir.Block(), b.blocks[0], b.records)
    with pytest.raises(LoweringError, match="leftover"):
        lower_to_c_level(prog, fallback=False)


def test_lowering_preserves_interpreter_semantics():
    c = fresh_catalog(MINI)
    for q in ("q1", "q12", "q13", "q22"):
        tree = pl.parse_plan(bundled_plan_text(q), c)
        high = naive_program(tree, c, q)
        low = lower_to_c_level(high)
        rows_h, _ = run_program(high, c, MINI)
        rows_l, _ = run_program(low, c, MINI)
        types = [t.name for t in high.meta["print_types"]]
        assert oracles.rows_match(rows_h, rows_l, types,
                                  high.meta["sorted_output"]), q


# ---------------------------------------------------------------------------
# the interpreter against independent oracles

def test_naive_q6_matches_rowbyrow_oracle(tmp_path):
    # ten handcrafted rows; the revenue is summed by hand below
    rows = [
        # ok pk ln qty price disc tax rf ls ship commit receipt instr mode com
        (1, 1, 1, 10.0, 100.0, 0.06, 0.02, "N", "O", "1994-02-01"),
        (1, 1, 2, 30.0, 300.0, 0.05, 0.02, "N", "O", "1994-03-01"),
        (2, 1, 1, 23.0, 250.0, 0.07, 0.02, "N", "O", "1994-12-31"),
        (2, 1, 2, 24.0, 400.0, 0.06, 0.02, "N", "O", "1994-06-15"),  # qty 24
        (3, 1, 1, 5.0, 120.0, 0.04, 0.02, "N", "O", "1994-07-01"),   # disc
        (3, 1, 2, 5.0, 120.0, 0.08, 0.02, "N", "O", "1994-07-01"),   # disc
        (4, 1, 1, 5.0, 500.0, 0.05, 0.02, "N", "O", "1993-12-31"),   # year
        (4, 1, 2, 5.0, 500.0, 0.05, 0.02, "N", "O", "1995-01-01"),   # year
        (5, 1, 1, 1.0, 80.0, 0.07, 0.02, "N", "O", "1994-01-01"),
        (5, 1, 2, 2.0, 90.0, 0.055, 0.02, "N", "O", "1994-11-11"),   # disc
    ]
    lines = []
    for ok, pk, ln, qty, price, disc, tax, rf, ls, ship in rows:
        lines.append(f"{ok}|{pk}|{ln}|{qty:.2f}|{price:.2f}|{disc}|{tax:.2f}|"
                     f"{rf}|{ls}|{ship}|1994-06-01|1994-06-20|NONE|MAIL|c|")
    (tmp_path / "lineitem.tbl").write_text("\n".join(lines) + "\n")
    for other in ("orders", "customer", "part"):
        (tmp_path / f"{other}.tbl").write_text("")
    # qualifying rows: 1, 3, 9 and 10 (discount in [0.05, 0.07],
    # quantity under 24, shipped inside 1994)
    expected = 100.0 * 0.06 + 250.0 * 0.07 + 80.0 * 0.07 + 90.0 * 0.055
    c = fresh_catalog(str(tmp_path))
    tree = pl.parse_plan(bundled_plan_text("q6"), c)
    prog = naive_program(tree, c, "q6")
    out, _ = run_program(prog, c, str(tmp_path))
    assert out == [f"{expected:.4f}"]


def test_q6_empty_table_no_rows(tmp_path):
    for name in ("lineitem", "orders", "customer", "part"):
        (tmp_path / f"{name}.tbl").write_text("")
    c = fresh_catalog(str(tmp_path))
    tree = pl.parse_plan(bundled_plan_text("q6"), c)
    prog = naive_program(tree, c, "q6")
    out, _ = run_program(prog, c, str(tmp_path))
    assert out == []


def test_join_count_matches_nested_loop_oracle():
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(
        '(print (exprs CNT) (agg (group (K "Total")) (aggs (CNT (count)))'
        " (join equi (= O_ORDERKEY L_ORDERKEY) O_ORDERKEY L_ORDERKEY"
        " (scan ORDERS) (scan LINEITEM))))", c)
    prog = naive_program(tree, c, "joincount")
    out, _ = run_program(prog, c, MINI)
    orders = oracles.read_table(MINI, c.relation("ORDERS"))
    lineitem = oracles.read_table(MINI, c.relation("LINEITEM"))
    brute = sum(1 for o in orders for l in lineitem
                if o["O_ORDERKEY"] == l["L_ORDERKEY"])
    assert out == [f"{float(brute):.4f}"]


def test_counters_date_index_monotonic():
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(bundled_plan_text("q6"), c)
    base = naive_program(tree, c, "q6")
    _, before = run_program(base, c, MINI)
    opt = compile_plan(tree, c, Settings(date_indices=True), "q6",
                       lower=False)
    _, after = run_program(opt, c, MINI)
    assert after.tuples_visited <= before.tuples_visited


# ---------------------------------------------------------------------------
# emission

def test_emit_requires_low_level():
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(bundled_plan_text("q6"), c)
    prog = inline.inline_plan(tree, c, "q6")
    with pytest.raises(emit.EmitError, match="LOW"):
        emit.emit_c(prog, c)


def test_emit_is_deterministic():
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(bundled_plan_text("q12"), c)
    prog = lower_to_c_level(naive_program(tree, c, "q12"))
    assert emit.emit_c(prog, c) == emit.emit_c(prog, c)


def test_empty_program_compiles_and_returns_zero(tmp_path):
    prog = ir.Program(ir.LOW, [], ir.Block(), ir.Block(), {})
    text = emit.emit_c(prog, fresh_catalog())
    src = cc.write_sources(text, str(tmp_path))
    binary, _ = cc.compile_c(src, werror=True)
    proc = subprocess.run([binary, "."], capture_output=True)
    assert proc.returncode == 0
    assert proc.stdout == b""


@pytest.mark.slow
@pytest.mark.parametrize("query", ["q1", "q6", "q12", "q13"])
def test_emitted_c_byte_equals_interpreter(query, tmp_path):
    c = fresh_catalog(MINI)
    tree = pl.parse_plan(bundled_plan_text(query), c)
    prog = lower_to_c_level(naive_program(tree, c, query))
    irows, _ = run_program(prog, c, MINI)
    text = emit.emit_c(prog, c)
    crows, timings, warnings = cc.compile_and_run(text, str(tmp_path), MINI,
                                                  werror=True)
    assert crows == irows
    assert not warnings.strip()
    assert set(timings) == {"load", "setup", "query"}


def test_emitter_rejects_unknown_intrinsics():
    e = emit.Emitter(ir.Program(ir.LOW, [], ir.Block(), ir.Block(), {}),
                     fresh_catalog())
    with pytest.raises(emit.EmitError, match="manifest"):
        e.rt("rt_not_a_thing")


# ---------------------------------------------------------------------------
# intrinsic manifest vs runtime header

def test_manifest_names_are_defined_by_header():
    header = runtime_header_text()
    for name, signature in MANIFEST.items():
        assert re.search(rf"\b{name}\s*\(", header), name
        ret = signature.split(name)[0].strip()
        assert ret.split()[0].rstrip("*") in header


def test_header_declares_no_undocumented_rt_functions():
    header = runtime_header_text()
    defined = set(re.findall(
        r"^static inline [A-Za-z_0-9* ]+?\b(rt_[a-z_0-9]+)\s*\(",
        header, re.M))
    internal = {n for n in defined if n.endswith("_")}
    assert defined - internal - set(MANIFEST) in (set(),), \
        defined - internal - set(MANIFEST)
