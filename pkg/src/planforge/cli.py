"""End-to-end driver.

Modes:
  interpret  execute a plan at a chosen pipeline stage and print the rows
  emit       write query.c + runtime.h for the configured pipeline
  diff       naive interpreter vs optimized interpreter vs compiled C binary
  bench      per-stage timings and counters as CSV (query,config,metric,value)
  gen-data   write TPC-H style .tbl files at a scale factor
  intrinsics dump the emitter/runtime intrinsic manifest as JSON
"""

from __future__ import annotations

import argparse
import importlib.resources as res
import json
import os
import sys
import tempfile
import time

from . import catalog as cat
from . import datagen, loader, plan as pl, runtime
from .pipeline import Settings, compile_plan, naive_program
from .backend import cc, emit, interp
from .backend.intrinsics import MANIFEST


def bundled_queries():
    qdir = res.files("planforge") / "queries"
    return sorted(p.name[:-5] for p in qdir.iterdir()
                  if p.name.endswith(".plan"))


def load_bundled(name):
    qdir = res.files("planforge") / "queries"
    return (qdir / f"{name}.plan").read_text()


def bundled_schema():
    return (res.files("planforge") / "queries" / "tpch.schema").read_text()


def make_parser():
    p = argparse.ArgumentParser(
        prog="planforge",
        description="Compile physical query plans to optimized C, "
                    "with a reference interpreter.")
    p.add_argument("--mode", required=True,
                   choices=["interpret", "emit", "diff", "bench", "gen-data",
                            "intrinsics"])
    p.add_argument("--schema", help="schema DSL file (default: bundled)")
    p.add_argument("--plan", help="plan DSL file")
    p.add_argument("--query", help="bundled query name (e.g. q6)")
    p.add_argument("--data", help="directory with .tbl files")
    p.add_argument("--out", help="output directory (emit / gen-data)")
    p.add_argument("--stage", type=int, default=None,
                   help="interpret after this many pipeline phases "
                        "(0 = plain inlined program)")
    p.add_argument("--trace-ir", metavar="DIR",
                   help="dump per-phase IR text files into DIR")
    p.add_argument("--mem-report", action="store_true",
                   help="print the memory accounting report to stderr")
    p.add_argument("--scale", type=float, default=0.01,
                   help="scale factor for gen-data")
    p.add_argument("--seed", type=int, default=704)
    p.add_argument("--reps", type=int, default=5,
                   help="repetitions for bench timings")
    # pass toggles (all off by default)
    p.add_argument("--partitioning", action="store_true")
    p.add_argument("--hash-map-lowering", action="store_true")
    p.add_argument("--string-dictionary", action="store_true")
    p.add_argument("--column-store", action="store_true")
    p.add_argument("--ds-code-motion", action="store_true")
    p.add_argument("--date-indices", action="store_true")
    p.add_argument("--unused-fields", action="store_true")
    p.add_argument("--fine-grained", action="store_true")
    p.add_argument("--all-opts", action="store_true",
                   help="enable every optimization pass")
    p.add_argument("--no-fuse", action="store_true",
                   help="disable aggregate-into-join fusion")
    p.add_argument("--size-factor", type=float, default=1.0,
                   help="multiplier on worst-case pool capacities")
    p.add_argument("--max-1d-slots", type=int, default=1 << 26,
                   help="cap on direct-indexed partition slots")
    return p


def settings_from_args(args):
    if args.all_opts:
        s = Settings.all()
    else:
        s = Settings(
            partitioning=args.partitioning,
            hash_map_lowering=args.hash_map_lowering,
            string_dictionary=args.string_dictionary,
            column_store=args.column_store,
            ds_code_motion=args.ds_code_motion,
            date_indices=args.date_indices,
            unused_fields=args.unused_fields,
            fine_grained=args.fine_grained,
        )
    s.fuse_agg_joins = not args.no_fuse
    s.size_factor = args.size_factor
    s.max_1d_slots = args.max_1d_slots
    return s


def load_inputs(args):
    schema_text = (open(args.schema).read() if args.schema
                   else bundled_schema())
    catalog = cat.parse_schema(schema_text)
    if args.plan:
        name = os.path.splitext(os.path.basename(args.plan))[0]
        plan_text = open(args.plan).read()
    elif args.query:
        name = args.query
        plan_text = load_bundled(args.query)
    else:
        raise SystemExit("one of --plan or --query is required")
    tree = pl.parse_plan(plan_text, catalog)
    return catalog, tree, name


def require_data(args):
    if not args.data:
        raise SystemExit("--data DIR is required for this mode")
    return args.data


def canonical_match(a, b, types, ordered):
    if len(a) != len(b):
        return False
    xs = a if ordered else sorted(a)
    ys = b if ordered else sorted(b)
    for ra, rb in zip(xs, ys):
        fa, fb = ra.split("|"), rb.split("|")
        if len(fa) != len(fb):
            return False
        for va, vb, ty in zip(fa, fb, types):
            if ty == "DOUBLE":
                x, y = float(va), float(vb)
                if x != y and abs(x - y) > 1e-9 * max(abs(x), abs(y), 1.0):
                    return False
            elif va != vb:
                return False
    return True


def mode_interpret(args):
    catalog, tree, name = load_inputs(args)
    data = require_data(args)
    runtime.collect_stats(catalog, data)
    settings = settings_from_args(args)
    if args.stage == 0:
        prog = naive_program(tree, catalog, name)
    else:
        diags = []
        prog = compile_plan(tree, catalog, settings, name,
                            trace_dir=args.trace_ir, diagnostics=diags,
                            stages=args.stage)
        for d in diags:
            print(f"warning: {d}", file=sys.stderr)
    db = loader.prepare_db(prog, catalog, data)
    rows, counters = interp.interpret(prog, db)
    for r in rows:
        print(r)
    print(f"counters: {counters.as_dict()}", file=sys.stderr)
    if args.mem_report:
        print(db.accounting.report(), file=sys.stderr)
    return 0


def mode_emit(args):
    catalog, tree, name = load_inputs(args)
    data = require_data(args)
    runtime.collect_stats(catalog, data)
    settings = settings_from_args(args)
    diags = []
    prog = compile_plan(tree, catalog, settings, name,
                        trace_dir=args.trace_ir, diagnostics=diags)
    for d in diags:
        print(f"warning: {d}", file=sys.stderr)
    text = emit.emit_c(prog, catalog)
    out = args.out or "."
    src = cc.write_sources(text, out)
    print(src)
    return 0


def mode_diff(args):
    catalog, tree, name = load_inputs(args)
    data = require_data(args)
    runtime.collect_stats(catalog, data)
    settings = settings_from_args(args)

    naive = naive_program(tree, catalog, name)
    db = loader.prepare_db(naive, catalog, data)
    base, _ = interp.interpret(naive, db)
    types = [t.name for t in naive.meta["print_types"]]
    ordered = naive.meta["sorted_output"]

    diags = []
    opt = compile_plan(tree, catalog, settings, name,
                       trace_dir=args.trace_ir, diagnostics=diags)
    db2 = loader.prepare_db(opt, catalog, data)
    rows_opt, _ = interp.interpret(opt, db2)
    if args.mem_report:
        print(db2.accounting.report(), file=sys.stderr)

    text = emit.emit_c(opt, catalog)
    workdir = args.out or tempfile.mkdtemp(prefix="planforge-")
    rows_c, _, _ = cc.compile_and_run(text, workdir, data)

    ok_opt = canonical_match(base, rows_opt, types, ordered)
    ok_c = rows_c == rows_opt
    print(f"{name}: naive={len(base)} rows, optimized={len(rows_opt)} rows, "
          f"c={len(rows_c)} rows")
    print(f"{name}: interpreter match: {'yes' if ok_opt else 'NO'}")
    print(f"{name}: compiled C match:  {'yes' if ok_c else 'NO'}")
    if diags:
        for d in diags:
            print(f"warning: {d}", file=sys.stderr)
    return 0 if (ok_opt and ok_c) else 1


def mode_bench(args):
    catalog, tree, name = load_inputs(args)
    data = require_data(args)
    runtime.collect_stats(catalog, data)
    settings = settings_from_args(args)
    config = "all" if args.all_opts else "custom"
    out = []

    t0 = time.perf_counter()
    diags = []
    prog = compile_plan(tree, catalog, settings, name, diagnostics=diags)
    out.append((name, config, "pipeline_ms",
                (time.perf_counter() - t0) * 1000))

    db = loader.prepare_db(prog, catalog, data)
    times = []
    counters = None
    for _ in range(args.reps):
        t1 = time.perf_counter()
        rows, counters = interp.interpret(prog, db)
        times.append((time.perf_counter() - t1) * 1000)
    out.append((name, config, "interp_ms", sum(times) / len(times)))
    for k, v in counters.as_dict().items():
        out.append((name, config, k, v))
    out.append((name, config, "accounted_bytes", db.accounting.total()))

    t2 = time.perf_counter()
    text = emit.emit_c(prog, catalog)
    out.append((name, config, "emit_ms", (time.perf_counter() - t2) * 1000))
    workdir = args.out or tempfile.mkdtemp(prefix="planforge-")
    t3 = time.perf_counter()
    src = cc.write_sources(text, workdir)
    binary, _ = cc.compile_c(src)
    out.append((name, config, "cc_ms", (time.perf_counter() - t3) * 1000))
    qtimes = []
    for _ in range(args.reps):
        _, timings = cc.run_binary(binary, data)
        qtimes.append(timings.get("query", 0.0))
    out.append((name, config, "c_query_ms", sum(qtimes) / len(qtimes)))

    print("query,config,metric,value")
    for row in out:
        print(",".join(str(x) for x in row))
    return 0


def mode_gen_data(args):
    out = args.out or require_data(args)
    if args.scale <= 0:
        datagen.generate_empty(out)
    else:
        datagen.generate(out, scale=args.scale, seed=args.seed)
    print(out)
    return 0


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.mode == "intrinsics":
        print(json.dumps(MANIFEST, indent=2, sort_keys=True))
        return 0
    if args.mode == "gen-data":
        return mode_gen_data(args)
    if args.mode == "interpret":
        return mode_interpret(args)
    if args.mode == "emit":
        return mode_emit(args)
    if args.mode == "diff":
        return mode_diff(args)
    if args.mode == "bench":
        return mode_bench(args)
    raise SystemExit(f"unknown mode {args.mode}")


if __name__ == "__main__":
    sys.exit(main())
