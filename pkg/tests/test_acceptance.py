"""Acceptance criteria, one test per criterion, each printing a PASS line.

Paper-scale results are not reproducible at desk scale; these are property
checks plus directional measurements on generated data at scale factor 0.1
and below. Run with `pytest tests/test_acceptance.py -s` to see the verdict
lines.
"""

import os
import random
import re
import time

import pytest

from planforge import catalog as cat
from planforge import inline, ir, loader
from planforge import plan as pl
from planforge import runtime as rt
from planforge import transform as tr
from planforge.backend import cc, emit, interp
from planforge.backend.lower import lower_to_c_level
from planforge.pipeline import Settings, compile_plan, naive_program

from conftest import ALL_QUERIES, MINI, bundled_plan_text, fresh_catalog
import oracles

FLAGS = ["partitioning", "hash_map_lowering", "string_dictionary",
         "column_store", "ds_code_motion", "date_indices", "unused_fields",
         "fine_grained"]


def verdict(name, ok, detail=""):
    state = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {name}: {state}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def _prep(query, data_dir):
    c = fresh_catalog(data_dir)
    tree = pl.parse_plan(bundled_plan_text(query), c)
    return c, tree


def _interp(prog, c, data_dir):
    db = loader.prepare_db(prog, c, data_dir)
    rows, counters = interp.interpret(prog, db)
    return rows, counters, db


# ---------------------------------------------------------------------------
# Criterion 1: three-way equivalence on three datasets

def test_c1_three_way_equivalence(empty_dir, sf001_dir, tmp_path_factory):
    datasets = [("empty", empty_dir), ("handcrafted", MINI),
                ("sf001", sf001_dir)]
    assert len(ALL_QUERIES) >= 10
    interp_seconds = 0.0
    checked = 0
    for ds_name, data in datasets:
        for query in ALL_QUERIES:
            c, tree = _prep(query, data)
            t0 = time.perf_counter()
            naive = naive_program(tree, c, query)
            base, _, _ = _interp(naive, c, data)
            opt = compile_plan(tree, c, Settings.all(), query)
            rows_opt, _, _ = _interp(opt, c, data)
            interp_seconds += time.perf_counter() - t0
            types = [t.name for t in naive.meta["print_types"]]
            ordered = naive.meta["sorted_output"]
            assert oracles.rows_match(rows_opt, base, types, ordered), \
                (ds_name, query, "interpreter")
            text = emit.emit_c(opt, c)
            work = tmp_path_factory.mktemp(f"c1_{ds_name}_{query}")
            crows, _, _ = cc.compile_and_run(text, str(work), data)
            assert crows == rows_opt, (ds_name, query, "compiled C")
            checked += 1
    verdict("three-way-equivalence", checked == len(ALL_QUERIES) * 3
            and interp_seconds < 300.0,
            f"{checked} query/dataset pairs, interpretation+pipeline "
            f"{interp_seconds:.0f}s (< 300s excluding C compilation)")


# ---------------------------------------------------------------------------
# Criterion 2: pass-subset robustness

def test_c2_pass_subset_robustness(sf001_dir):
    rng = random.Random(20260810)
    failures = []
    for query in ALL_QUERIES:
        c, tree = _prep(query, MINI)
        naive = naive_program(tree, c, query)
        base, _, _ = _interp(naive, c, MINI)
        types = [t.name for t in naive.meta["print_types"]]
        ordered = naive.meta["sorted_output"]
        for i in range(8):
            s = Settings()
            for f in FLAGS:
                setattr(s, f, rng.random() < 0.5)
            prog = compile_plan(tree, c, s, query)
            rows, _, _ = _interp(prog, c, MINI)
            if not oracles.rows_match(rows, base, types, ordered):
                failures.append((query, i, [f for f in FLAGS
                                            if getattr(s, f)]))
    verdict("pass-subset-robustness", not failures,
            f"{len(ALL_QUERIES)}x8 random flag subsets" +
            (f"; failures: {failures[:3]}" if failures else ""))


# ---------------------------------------------------------------------------
# Criterion 3: structural post-conditions on IR

MAP_NODE_KINDS = ("MapNew", "MultiMapNew", "MapGetOrElseUpdate",
                  "MultiMapNonEmpty", "MapForeach", "MultiMapForeachAt",
                  "MultiMapAdd")


def test_c3_structural_postconditions(sf001_dir):
    relations = set(fresh_catalog().relations)
    all_ok = True
    details = []
    for query in ALL_QUERIES:
        c, tree = _prep(query, sf001_dir)
        prog = compile_plan(tree, c, Settings.all(), query)
        cen = ir.node_census(prog)
        maps = sum(cen.get(k, 0) for k in MAP_NODE_KINDS)
        _, counters, _ = _interp(prog, c, sf001_dir)
        # record reconstructions on the column-apply path: no row-typed
        # record is ever rebuilt once the cleanup passes ran
        rebuilds = [s for s in ir.walk_program_stmts(prog)
                    if isinstance(s, ir.Bind)
                    and isinstance(s.expr, ir.RecordNew)
                    and s.expr.rec in relations]
        if maps or counters.allocs or rebuilds:
            all_ok = False
            details.append((query, maps, counters.allocs, len(rebuilds)))
    # the exact three-statement end state of the column-apply chain
    fig_ok = _column_apply_three_statement_form()
    verdict("structural-postconditions", all_ok and fig_ok,
            "0 map nodes, 0 critical-path allocs, 0 row reconstructions; "
            "column-apply chain reaches its three-statement form"
            + (f"; offenders: {details}" if details else ""))


def _column_apply_three_statement_form():
    b = ir.Builder({})
    b.record_type("COLS", (("L1", ir.ArrayType(ir.DOUBLE)),
                           ("L2", ir.ArrayType(ir.DOUBLE))))
    b.record_type("ROW", (("L1", ir.DOUBLE), ("L2", ir.DOUBLE)))
    a = ir.Sym(ir.Rec("COLS"), "a")
    i = ir.Sym(ir.INT, "i")
    a1 = b.bind(ir.FieldGet(a, "L1"), "a1")
    a2 = b.bind(ir.FieldGet(a, "L2"), "a2")
    e1 = b.bind(ir.ArrayGet(a1, i), "e1")
    e2 = b.bind(ir.ArrayGet(a2, i), "e2")
    r = b.bind(ir.RecordNew("ROW", (("L1", e1), ("L2", e2))), "r")
    out = b.bind(ir.FieldGet(r, "L1"), "out")
    blk = b.blocks[0]
    blk.result = out
    prog = ir.Program(ir.HIGH, [], ir.Block(), blk, b.records)
    prog.input_syms = lambda: [a, i]
    final = tr.cleanup_composite(prog)
    kinds = [(type(s.expr).__name__,
              s.expr.name if isinstance(s.expr, ir.FieldGet) else None)
             for s in final.body.stmts]
    return kinds == [("FieldGet", "L1"), ("ArrayGet", None)] and \
        isinstance(final.body.result, ir.Sym)


# ---------------------------------------------------------------------------
# Criterion 4: string-operation mapping and prefix ranges

def test_c4_string_operation_mapping():
    c = fresh_catalog(MINI)
    tree = pl.parse_plan("""
    (print (exprs CNT)
      (agg (group (K 1)) (aggs (CNT (count)))
        (select (and (= L_SHIPMODE "MAIL")
                     (<> L_SHIPINSTRUCT "NONE")
                     (starts-with L_SHIPMODE "M")
                     (contains-word L_COMMENT "special"))
          (scan LINEITEM))))
    """, c)
    prog = inline.inline_plan(tree, c, "tableii")
    from planforge.passes import StringDictionaryPass
    out = tr.apply_transformer(prog, StringDictionaryPass(c))
    body = ir.dump_program(out).split("body:")[1]
    forms = {
        "equals -> x == y": re.search(r"== code\d", body),
        "notEquals -> x != y": re.search(r"!= code\d", body),
        "startsWith -> x >= start": re.search(r">= start\d", body),
        "startsWith -> x <= end": re.search(r"<= end\d", body),
        "indexOfSlice -> token loop": re.search(r"== wcode\d", body),
    }
    residual = any(op in body for op in
                   ("str.eq", "str.ne", "str.starts", "str.slice"))

    # 1000 random string sets: compiled prefix ranges equal a linear scan
    rng = random.Random(424242)
    alphabet = "abcdefgh"
    range_ok = True
    for _ in range(1000):
        values = sorted({"".join(rng.choice(alphabet)
                                 for _ in range(rng.randint(0, 5)))
                         for _ in range(rng.randint(1, 30))})
        d = rt.StringDictionary(rt.ORDERED, values,
                                {v: i for i, v in enumerate(values)})
        prefix = "".join(rng.choice(alphabet)
                         for _ in range(rng.randint(0, 3)))
        hits = [i for i, v in enumerate(values) if v.startswith(prefix)]
        expected = (hits[0], hits[-1]) if hits else None
        if rt.range_for_prefix(d, prefix) != expected:
            range_ok = False
            break
    ok = all(forms.values()) and not residual and range_ok
    verdict("string-operation-mapping", ok,
            "all mapped rows in integer form; 1000 random prefix ranges "
            "match the scan oracle")


# ---------------------------------------------------------------------------
# Criterion 5: memory bound

def test_c5_memory_bound(empty_dir, sf001_dir):
    datasets = [("empty", empty_dir), ("handcrafted", MINI),
                ("sf001", sf001_dir)]
    worst = 0.0
    all_ok = True
    details = []
    for ds_name, data in datasets:
        for query in ALL_QUERIES:
            c, tree = _prep(query, data)
            prog = compile_plan(tree, c, Settings.all(), query)
            db = loader.prepare_db(prog, c, data)
            accounted = db.accounting.total() + loader.pool_bytes(prog)
            raw = sum(os.path.getsize(db.tbl_path(r))
                      for r in {d.relation for d in prog.inputs})
            # a few dozen bytes of single-slot residue remain at zero scale
            bound = 2.0 * raw + 256
            ratio = accounted / raw if raw else 0.0
            worst = max(worst, ratio)
            if accounted > bound:
                all_ok = False
                details.append((ds_name, query, accounted, raw))
    verdict("memory-bound", all_ok,
            f"worst accounted/raw ratio {worst:.2f} (bound 2.0)"
            + (f"; offenders {details[:3]}" if details else ""))


# ---------------------------------------------------------------------------
# Criterion 6: directional counter improvements at SF 0.1

@pytest.mark.slow
def test_c6_directional_counters(sf01_dir):
    # date indices: a one-of-seven-years filter visits >= 5x fewer tuples
    c, tree = _prep("q6", sf01_dir)
    naive = naive_program(tree, c, "q6")
    _, ctr_naive, _ = _interp(naive, c, sf01_dir)
    dated = compile_plan(tree, c, Settings(date_indices=True), "q6",
                         lower=False)
    _, ctr_dated, _ = _interp(dated, c, sf01_dir)
    date_factor = ctr_naive.tuples_visited / max(ctr_dated.tuples_visited, 1)

    # init hoisting: at least one consume-path branch per tuple disappears
    c2, tree2 = _prep("q12", sf01_dir)
    s_no_motion = Settings.all(ds_code_motion=False)
    before = compile_plan(tree2, c2, s_no_motion, "q12", lower=False)
    _, ctr_before, _ = _interp(before, c2, sf01_dir)
    after = compile_plan(tree2, c2, Settings.all(), "q12", lower=False)
    _, ctr_after, _ = _interp(after, c2, sf01_dir)
    # tuples reaching the aggregation = lineitem rows passing the filter
    consumed = _q12_consumed(c2, sf01_dir)
    branch_drop = ctr_before.branches - ctr_after.branches

    # partitioning: probe work becomes direct bucket access, no map builds
    part = compile_plan(tree2, c2, Settings(partitioning=True), "q12",
                        lower=False)
    _, ctr_part, _ = _interp(part, c2, sf01_dir)
    _, ctr_nv12, _ = _interp(naive_program(tree2, c2, "q12"), c2, sf01_dir)

    ok = (date_factor >= 5.0 and branch_drop >= consumed
          and ctr_part.addbinding_ops == 0 and ctr_nv12.addbinding_ops > 0)
    verdict("directional-counters", ok,
            f"date-index tuple reduction {date_factor:.1f}x (>=5); "
            f"init-hoisting branch drop {branch_drop} over {consumed} "
            f"consumed tuples; partitioned addBinding ops "
            f"{ctr_part.addbinding_ops} (naive {ctr_nv12.addbinding_ops})")


def _q12_consumed(c, data_dir):
    rows = oracles.read_table(data_dir, c.relation("LINEITEM"))
    lo = cat.parse_date("1994-01-01")
    hi = cat.parse_date("1995-01-01")
    return sum(1 for r in rows
               if lo <= r["L_RECEIPTDATE"] < hi
               and r["L_SHIPMODE"] in ("MAIL", "SHIP")
               and r["L_SHIPDATE"] < r["L_COMMITDATE"] < r["L_RECEIPTDATE"])


# ---------------------------------------------------------------------------
# Criterion 7: wall-clock direction at SF 0.1

@pytest.mark.slow
def test_c7_wall_clock_direction(sf01_dir, tmp_path_factory):
    c, tree = _prep("q12", sf01_dir)
    naive = lower_to_c_level(naive_program(tree, c, "q12"))
    opt = compile_plan(tree, c, Settings.all(), "q12")

    def run_five(prog, tag):
        text = emit.emit_c(prog, c)
        work = tmp_path_factory.mktemp(f"c7_{tag}")
        src = cc.write_sources(text, str(work))
        binary, _ = cc.compile_c(src)
        times = []
        rows = None
        for _ in range(5):
            rows, timings = cc.run_binary(binary, sf01_dir)
            times.append(timings["query"])
        return rows, sum(times) / len(times)

    rows_naive, ms_naive = run_five(naive, "naive")
    rows_opt, ms_opt = run_five(opt, "opt")
    types = [t.name for t in naive.meta["print_types"]]
    same = oracles.rows_match(rows_naive, rows_opt, types,
                              naive.meta["sorted_output"])
    speedup = ms_naive / ms_opt if ms_opt > 0 else float("inf")
    verdict("wall-clock-direction", same and speedup >= 2.0,
            f"naive {ms_naive:.2f}ms vs optimized {ms_opt:.2f}ms "
            f"({speedup:.1f}x, need >= 2x)")


# ---------------------------------------------------------------------------
# Secondary-tagged criterion: emitted C is warning-clean and byte-exact

def test_cs_emitted_c_clean_and_byte_exact(tmp_path_factory):
    all_ok = True
    details = []
    for query in ALL_QUERIES:
        for label, settings in (("opt", Settings.all()),
                                ("fallback", Settings.none())):
            c, tree = _prep(query, MINI)
            if label == "fallback":
                prog = lower_to_c_level(naive_program(tree, c, query))
            else:
                prog = compile_plan(tree, c, settings, query)
            irows, _, _ = _interp(prog, c, MINI)
            text = emit.emit_c(prog, c)
            work = tmp_path_factory.mktemp(f"cs_{query}_{label}")
            try:
                crows, _, warnings = cc.compile_and_run(
                    text, str(work), MINI, werror=True)
            except cc.CompileError as exc:
                all_ok = False
                details.append((query, label, str(exc)[:80]))
                continue
            if warnings.strip() or crows != irows:
                all_ok = False
                details.append((query, label, "mismatch-or-warning"))
    verdict("emitted-c-clean-and-byte-exact", all_ok,
            f"{len(ALL_QUERIES)}x2 programs compile under -Wall -Wextra "
            "-Werror and match the interpreter byte for byte"
            + (f"; {details[:3]}" if details else ""))


# ---------------------------------------------------------------------------
# Criterion 8: compilation overhead

def test_c8_compilation_overhead(sf001_dir):
    worst = 0.0
    for query in ALL_QUERIES:
        c, tree = _prep(query, sf001_dir)
        t0 = time.perf_counter()
        prog = compile_plan(tree, c, Settings.all(), query)
        emit.emit_c(prog, c)
        worst = max(worst, time.perf_counter() - t0)
    verdict("compilation-overhead", worst < 2.0,
            f"worst plan-to-C time {worst * 1000:.0f}ms (< 2000ms)")
