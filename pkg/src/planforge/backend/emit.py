"""C code emission: stringify a LOW-level program into one translation unit.

The emitted program includes runtime.h, loads its .tbl inputs from the
directory given as argv[1] (building dictionaries, partitioned replicas and
date indices as declared by the program's input manifest), runs the setup and
query sections, prints result rows to stdout in the canonical format and
phase timings to stderr as `query,phase,millis` lines.

Emission is deterministic: the same program object yields byte-identical text.
"""

from __future__ import annotations

import re

from .. import catalog as cat
from .. import ir
from .intrinsics import MANIFEST


class EmitError(ValueError):
    pass


_CTYPE_SCALAR = {
    ir.INT: "int32_t", ir.DOUBLE: "double", ir.BOOL: "bool",
    ir.DATE: "int32_t", ir.STRING: "const char*", ir.CHAR: "char",
    ir.RAWPTR: "void*", ir.KEY64: "uint64_t",
}

_COL_PARSERS = {
    cat.INT: "rt_f_int", cat.DOUBLE: "rt_f_double", cat.DATE: "rt_f_date",
    cat.CHAR: "rt_f_char", cat.STRING: "rt_f_str",
}


class Writer:
    def __init__(self):
        self.lines = []
        self.depth = 0

    def w(self, text=""):
        self.lines.append("    " * self.depth + text if text else "")

    def open(self, text):
        self.w(text + " {")
        self.depth += 1

    def close(self, suffix=""):
        self.depth -= 1
        self.w("}" + suffix)

    def text(self):
        return "\n".join(self.lines) + "\n"


def _ident(text):
    out = re.sub(r"[^A-Za-z0-9_]", "", text)
    return out or "s"


class Emitter:
    def __init__(self, program, catalog):
        if program.level != ir.LOW:
            raise EmitError("emission requires a LOW-level program")
        self.program = program
        self.catalog = catalog
        self.names = {}
        self.lengths = {}
        self.cmp_fns = []       # (name, lambda, free syms)
        self.used = self._use_counts()
        self.dead = self._dead_set()
        self.intrinsics_used = set()

    # -- naming ------------------------------------------------------------

    def name(self, sym):
        if sym not in self.names:
            self.names[sym] = f"{_ident(sym.hint)}{sym.id}"
        return self.names[sym]

    def rt(self, fn):
        if fn not in MANIFEST:
            raise EmitError(f"intrinsic {fn} missing from the manifest")
        self.intrinsics_used.add(fn)
        return fn

    def ctype(self, ty):
        ty = self._resolve(ty)
        if isinstance(ty, ir.Scalar):
            try:
                return _CTYPE_SCALAR[ty]
            except KeyError:
                raise EmitError(f"no C type for {ty!r}") from None
        if isinstance(ty, ir.RecordType):
            return f"struct {ty.name}"
        if isinstance(ty, ir.PointerType):
            return self.ctype(ty.elem) + "*"
        if isinstance(ty, ir.ArrayType):
            return self.ctype(ty.elem) + "*"
        raise EmitError(f"no C type for {ty!r}")

    def _resolve(self, ty):
        if isinstance(ty, ir.Rec):
            return self.program.records[ty.name]
        return ty

    # -- atoms -------------------------------------------------------------

    def atom(self, a):
        if isinstance(a, ir.Sym):
            return self.name(a)
        v, ty = a.value, a.ty
        if v is None:
            return "NULL"
        if ty == ir.BOOL:
            return "true" if v else "false"
        if ty in (ir.INT, ir.DATE):
            return str(int(v))
        if ty == ir.DOUBLE:
            r = repr(float(v))
            if r in ("inf", "-inf"):
                return "(1e308*10)" if v > 0 else "(-1e308*10)"
            return r if ("." in r or "e" in r or "E" in r) else r + ".0"
        if ty == ir.STRING:
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if ty == ir.CHAR:
            if v == "\0":
                return r"'\0'"
            return "'" + v.replace("\\", "\\\\").replace("'", "\\'") + "'"
        if ty == ir.KEY64:
            return f"{int(v)}ULL"
        raise EmitError(f"cannot emit constant {a!r}")

    # -- expressions (pure C expression forms) --------------------------------

    def expr(self, e):
        a = self.atom
        if isinstance(e, ir.AtomExpr):
            return a(e.atom)
        if isinstance(e, ir.Bin):
            if e.op == "hmix":
                return f"{self.rt('rt_hmix')}({a(e.a)}, {a(e.b)})"
            if e.op == "min":
                return f"(({a(e.a)}) < ({a(e.b)}) ? ({a(e.a)}) : ({a(e.b)}))"
            op = e.op
            return f"({a(e.a)} {op} {a(e.b)})"
        if isinstance(e, ir.Un):
            if e.op == "not":
                return f"(!{a(e.a)})"
            if e.op == "neg":
                return f"(-{a(e.a)})"
            if e.op == "code":
                return f"((int32_t)(unsigned char){a(e.a)})"
            if e.op == "hash":
                ty = self._resolve(e.a.ty)
                fn = {ir.INT: "rt_hash_int", ir.DATE: "rt_hash_int",
                      ir.CHAR: "rt_hash_char", ir.DOUBLE: "rt_hash_double",
                      ir.STRING: "rt_hash_str"}.get(ty)
                if fn is None:
                    raise EmitError(f"no hash for {ty!r}")
                return f"{self.rt(fn)}({a(e.a)})"
        if isinstance(e, ir.FieldGet):
            return f"{a(e.base)}->{e.name}"
        if isinstance(e, ir.ArrayGet):
            return f"{a(e.arr)}[{a(e.idx)}]"
        if isinstance(e, ir.ArrayAddr):
            return f"(&{a(e.arr)}[{a(e.idx)}])"
        if isinstance(e, ir.ArraySlice):
            return f"({a(e.arr)} + {a(e.offset)})"
        if isinstance(e, ir.ArrayLen):
            if isinstance(e.arr, ir.Sym) and e.arr in self.lengths:
                return self.lengths[e.arr]
            raise EmitError(f"no length expression for {e.arr!r}")
        if isinstance(e, ir.StrOp):
            fn = {"eq": "rt_streq", "ne": "rt_streq",
                  "starts": "rt_str_starts", "ends": "rt_str_ends",
                  "slice": "rt_str_contains_word", "cmp": "rt_strcmp"}[e.op]
            call = f"{self.rt(fn)}({a(e.a)}, {a(e.b)})"
            return f"(!{call})" if e.op == "ne" else call
        if isinstance(e, ir.Alloc):
            ct = self.ctype(e.ty)
            return (f"({ct}*){self.rt('rt_alloc')}"
                    f"((size_t)({a(e.count)}) * sizeof({ct}))")
        if isinstance(e, ir.DictIntrinsic):
            d = f"dict_{e.relation}_{e.attr}"
            arg = '"' + e.arg.replace("\\", "\\\\").replace('"', '\\"') + '"'
            fn = {"lookup": "rt_dict_code", "word_code": "rt_dict_code",
                  "prefix_start": "rt_dict_prefix_start",
                  "prefix_end": "rt_dict_prefix_end",
                  "suffix_table": "rt_dict_suffix_table"}[e.op]
            return f"{self.rt(fn)}({d}, {arg})"
        if isinstance(e, ir.DictDecode):
            d = f"dict_{e.relation}_{e.attr}"
            return f"{self.rt('rt_dict_value')}({d}, {a(e.code)})"
        if isinstance(e, ir.GMapNew):
            return f"{self.rt('rt_map_new')}()"
        if isinstance(e, ir.GMapGet):
            return f"{self.rt('rt_map_get')}({a(e.map)}, {a(e.key)})"
        if isinstance(e, ir.GMapLen):
            return f"{self.rt('rt_map_len')}({a(e.map)})"
        if isinstance(e, ir.GMapEntryKey):
            return f"{self.rt('rt_map_entry_key')}({a(e.map)}, {a(e.idx)})"
        if isinstance(e, ir.GMapEntryVal):
            return f"{self.rt('rt_map_entry_val')}({a(e.map)}, {a(e.idx)})"
        if isinstance(e, ir.GKey):
            out = "0ULL"
            for p in e.parts:
                ty = self._resolve(p.ty)
                if ty == ir.STRING:
                    out = f"{self.rt('rt_key_mix_str')}({out}, {a(p)})"
                elif ty == ir.DOUBLE:
                    out = f"{self.rt('rt_key_double')}({out}, {a(p)})"
                elif ty == ir.CHAR:
                    out = f"{self.rt('rt_key_char')}({out}, {a(p)})"
                elif ty == ir.BOOL:
                    out = f"{self.rt('rt_key_bool')}({out}, {a(p)})"
                else:
                    out = f"{self.rt('rt_key_int')}({out}, {a(p)})"
            return out
        if isinstance(e, ir.GVecNew):
            return f"{self.rt('rt_vec_new')}()"
        if isinstance(e, ir.GVecLen):
            return f"{self.rt('rt_vec_len')}((rt_vec*){a(e.vec)})"
        if isinstance(e, ir.GVecGet):
            return f"{self.rt('rt_vec_get')}((rt_vec*){a(e.vec)}, {a(e.idx)})"
        if isinstance(e, ir.Cast):
            return f"(({self.ctype(e.ty)})({a(e.a)}))"
        if isinstance(e, ir.VarGet):
            return self.name(e.var)
        raise EmitError(f"cannot emit expression {type(e).__name__}")

    # -- statements -------------------------------------------------------------

    def _use_counts(self):
        reads = {}

        def read(atom):
            if isinstance(atom, ir.Sym):
                reads[atom] = reads.get(atom, 0) + 1

        def visit(blk):
            for s in blk.stmts:
                if isinstance(s, ir.Bind) and isinstance(s.expr, ir.ArrayLen):
                    pass  # lengths resolve symbolically, not via the operand
                else:
                    for at in ir.stmt_atoms(s):
                        read(at)
                if isinstance(s, ir.Bind) and isinstance(s.expr, ir.VarGet):
                    read(s.expr.var)
                if isinstance(s, ir.VarSet):
                    read(s.var)
                for sub in ir.stmt_blocks(s):
                    visit(sub)
            read(blk.result)

        for blk in ir.walk_program_blocks(self.program):
            visit(blk)
        return reads

    def _dead_set(self):
        """Pure bindings that are transitively unused; never emitted."""
        counts = dict(self.used)
        binds = {}
        for s in ir.walk_program_stmts(self.program):
            if isinstance(s, ir.Bind) and ir.expr_dead_safe(s.expr) and \
                    not ir.expr_blocks(s.expr):
                binds[s.sym] = s
        dead = set()
        changed = True
        while changed:
            changed = False
            for sym, s in binds.items():
                if sym in dead or counts.get(sym, 0) > 0:
                    continue
                dead.add(sym)
                changed = True
                for at in ir.expr_atoms(s.expr):
                    if isinstance(at, ir.Sym):
                        counts[at] = counts.get(at, 0) - 1
                if isinstance(s.expr, ir.VarGet):
                    counts[s.expr.var] = counts.get(s.expr.var, 0) - 1
        return dead

    def stmt(self, s, w):
        a = self.atom
        if isinstance(s, ir.Bind):
            self.bind(s, w)
        elif isinstance(s, ir.VarDecl):
            w.w(f"{self.ctype(s.var.ty)} {self.name(s.var)} = {a(s.init)};")
        elif isinstance(s, ir.VarSet):
            w.w(f"{self.name(s.var)} = {a(s.value)};")
        elif isinstance(s, ir.ArraySet):
            w.w(f"{a(s.arr)}[{a(s.idx)}] = {a(s.value)};")
        elif isinstance(s, ir.FieldSet):
            w.w(f"{a(s.base)}->{s.name} = {a(s.value)};")
        elif isinstance(s, ir.GMapPut):
            w.w(f"{self.rt('rt_map_put')}({a(s.map)}, {a(s.key)}, "
                f"{a(s.value)});")
        elif isinstance(s, ir.GVecPush):
            w.w(f"{self.rt('rt_vec_push')}((rt_vec*){a(s.vec)}, {a(s.value)});")
        elif isinstance(s, ir.While):
            w.open("for (;;)")
            for st in s.cond.stmts:
                self.stmt(st, w)
            w.w(f"if (!({a(s.cond.result)})) break;")
            for st in s.body.stmts:
                self.stmt(st, w)
            w.close()
        elif isinstance(s, ir.ForRange):
            v = self.name(s.var)
            step = a(s.step) if s.step is not None else "1"
            w.open(f"for (int32_t {v} = {a(s.start)}; {v} < {a(s.stop)}; "
                   f"{v} += {step})")
            for st in s.body.stmts:
                self.stmt(st, w)
            w.close()
        elif isinstance(s, ir.If):
            w.open(f"if ({a(s.cond)})")
            for st in s.then.stmts:
                self.stmt(st, w)
            if s.els is not None and s.els.stmts:
                w.close(" else {")
                w.depth += 1
                for st in s.els.stmts:
                    self.stmt(st, w)
                w.close()
            else:
                w.close()
        elif isinstance(s, ir.SortStmt):
            fname = f"cmp_{len(self.cmp_fns)}"
            defined, used = ir.free_and_used_symbols(s.cmp.body)
            free = [sym for sym in used
                    if sym not in defined and sym not in s.cmp.params]
            free.sort(key=lambda sym: sym.id)
            self.cmp_fns.append((fname, s.cmp, free))
            for sym in free:
                w.w(f"g_{self.name(sym)} = {self.name(sym)};")
            w.w(f"{self.rt('rt_sort')}((void**){a(s.arr)}, {a(s.length)}, "
                f"{fname});")
        elif isinstance(s, ir.EmitRow):
            self.emit_row(s, w)
        else:
            raise EmitError(f"cannot emit statement {type(s).__name__}")

    def bind(self, s, w):
        if s.sym in self.dead:
            return
        e = s.expr
        name = self.name(s.sym)
        ct = self.ctype(s.sym.ty)
        unused = self.used.get(s.sym, 0) == 0
        if isinstance(e, ir.Ternary):
            w.w(f"{ct} {name};")
            w.open(f"if ({self.atom(e.cond)})")
            for st in e.then.stmts:
                self.stmt(st, w)
            w.w(f"{name} = {self.atom(e.then.result)};")
            w.close(" else {")
            w.depth += 1
            for st in e.els.stmts:
                self.stmt(st, w)
            w.w(f"{name} = {self.atom(e.els.result)};")
            w.close()
            if unused:
                w.w(f"(void){name};")
            return
        if isinstance(e, (ir.AndThen, ir.OrElse)):
            is_and = isinstance(e, ir.AndThen)
            w.w(f"{ct} {name} = {'false' if is_and else 'true'};")
            w.open(f"if ({'' if is_and else '!'}{self.atom(e.left)})")
            for st in e.right.stmts:
                self.stmt(st, w)
            w.w(f"{name} = {self.atom(e.right.result)};")
            w.close()
            if unused:
                w.w(f"(void){name};")
            return
        if unused and ir.expr_dead_safe(e) and not isinstance(
                e, (ir.Alloc, ir.ArraySlice)):
            return  # dead pure binding: nothing to emit
        # track lengths for ArrayLen resolution
        if isinstance(e, ir.Alloc):
            self.lengths[s.sym] = self.atom(e.count)
        if isinstance(e, ir.AtomExpr) and isinstance(e.atom, ir.Sym) and \
                e.atom in self.lengths:
            self.lengths[s.sym] = self.lengths[e.atom]
        w.w(f"{ct} {name} = {self.expr(e)};")
        if unused:
            w.w(f"(void){name};")

    def emit_row(self, s, w):
        # the INT marker splices PRId32 into the literal via concatenation
        INT_MARK = '%" PRId32 "'
        fmt = []
        args = []
        date_bufs = []
        for i, v in enumerate(s.values):
            ty = self._resolve(v.ty)
            if ty == ir.DOUBLE:
                fmt.append("%.4f")
                args.append(self.atom(v))
            elif ty == ir.DATE:
                buf = f"db{i}"
                date_bufs.append((buf, self.atom(v)))
                fmt.append("%s")
                args.append(buf)
            elif ty == ir.INT:
                fmt.append(INT_MARK)
                args.append(self.atom(v))
            elif ty == ir.BOOL:
                fmt.append("%s")
                args.append(f'({self.atom(v)} ? "true" : "false")')
            elif ty == ir.CHAR:
                fmt.append("%c")
                args.append(self.atom(v))
            elif ty == ir.STRING:
                fmt.append("%s")
                args.append(self.atom(v))
            else:
                raise EmitError(f"cannot print value of type {ty!r}")
        literal = '"' + "|".join(fmt) + '\\n"'
        w.open("")
        for buf, val in date_bufs:
            w.w(f"char {buf}[16];")
            w.w(f"{self.rt('rt_date_str')}({val}, {buf});")
        w.w(f"printf({literal}{''.join(', ' + x for x in args)});")
        w.close()

    # -- program ------------------------------------------------------------

    def emit(self):
        w = Writer()
        q = self.program.meta.get("query", "query")
        w.w("/* generated query program; compile with runtime.h alongside */")
        w.w('#include "runtime.h"')
        w.w()
        self._emit_structs(w)
        body_w = Writer()
        body_w.depth = 1
        self._emit_main_body(body_w)
        self._emit_cmp_fns(w)
        w.w()
        w.open("int main(int argc, char **argv)")
        w.open("if (argc < 2)")
        w.w('fprintf(stderr, "usage: %s DATA_DIR\\n", argv[0]);')
        w.w("return 2;")
        w.close()
        w.w("const char *rt_dir = argv[1];")
        w.w("(void)rt_dir;")
        w.lines.extend(body_w.lines)
        w.w(f'fprintf(stderr, "{q},load,%.3f\\n", rt_t1 - rt_t0);')
        w.w(f'fprintf(stderr, "{q},setup,%.3f\\n", rt_t2 - rt_t1);')
        w.w(f'fprintf(stderr, "{q},query,%.3f\\n", rt_t3 - rt_t2);')
        w.w("return 0;")
        w.close()
        return w.text()

    def _emit_structs(self, w):
        names = sorted(self.program.records)
        for n in names:
            w.w(f"struct {n};")
        w.w()
        for n in names:
            rt_ = self.program.records[n]
            w.open(f"struct {n}")
            for fn, ft in rt_.fields:
                w.w(f"{self.ctype(ft)} {fn};")
            w.close(";")
            w.w()

    def _emit_cmp_fns(self, w):
        # globals capturing comparator free variables
        seen = set()
        for fname, fn, free in self.cmp_fns:
            for sym in free:
                if sym not in seen:
                    seen.add(sym)
                    w.w(f"static {self.ctype(sym.ty)} g_{self.name(sym)};")
        for fname, fn, free in self.cmp_fns:
            x, y = fn.params
            w.open(f"static int {fname}(const void *va, const void *vb)")
            w.w(f"{self.ctype(x.ty)} {self.name(x)} = "
                f"({self.ctype(x.ty)})(uintptr_t)va;")
            w.w(f"{self.ctype(y.ty)} {self.name(y)} = "
                f"({self.ctype(y.ty)})(uintptr_t)vb;")
            for sym in free:
                w.w(f"{self.ctype(sym.ty)} {self.name(sym)} = g_{self.name(sym)};")
            inner = Writer()
            inner.depth = w.depth
            for st in fn.body.stmts:
                self.stmt(st, inner)
            w.lines.extend(inner.lines)
            w.w(f"return {self.atom(fn.body.result)};")
            w.close()
            w.w()

    def _emit_main_body(self, w):
        w.w("double rt_t0 = rt_now_ms();")
        self.rt("rt_now_ms")
        self._emit_loads(w)
        w.w("double rt_t1 = rt_now_ms();")
        for s in self.program.setup.stmts:
            self.stmt(s, w)
        w.w("double rt_t2 = rt_now_ms();")
        for s in self.program.body.stmts:
            self.stmt(s, w)
        w.w("double rt_t3 = rt_now_ms();")

    # -- data loading ----------------------------------------------------------

    def _emit_loads(self, w):
        decls = self.program.inputs
        by_rel = {}
        for d in decls:
            by_rel.setdefault(d.relation, []).append(d)

        for rel_name in sorted(by_rel):
            group = by_rel[rel_name]
            self._emit_relation_load(w, rel_name, group)

    def _emit_relation_load(self, w, rel_name, group):
        rel = self.catalog.relation(rel_name)
        attrs = []
        coded = {}
        for d in group:
            for a_ in d.attrs:
                if a_ not in attrs:
                    attrs.append(a_)
            coded.update(d.coded)
        attrs = [n for n, _ in rel.attributes if n in attrs]
        types = {n: t for n, t in rel.attributes}
        n_var = f"n_{rel_name}"
        tb_var = f"tb_{rel_name}"
        rec = f"struct {rel_name}"

        w.w(f"/* load {rel_name} */")
        w.w(f"int32_t {n_var} = 0;")
        w.w(f"{rec} *{tb_var} = NULL;")
        for a_ in attrs:
            if a_ in coded:
                w.w(f"rt_dict *dict_{rel_name}_{a_} = {self.rt('rt_dict_new')}();")
        w.open("")
        w.w(f'rt_text t = {self.rt("rt_slurp")}(rt_dir, "{rel_name.lower()}.tbl");')
        w.w(f"{n_var} = {self.rt('rt_count_rows')}(t);")
        w.w(f"{tb_var} = ({rec}*){self.rt('rt_alloc')}"
            f"((size_t){n_var} * sizeof({rec}));")
        w.w("char *p = t.data;")
        w.open(f"for (int32_t r = 0; r < {n_var}; r++)")
        w.w(f"{rec} *row = &{tb_var}[r];")
        for name, ty in rel.attributes:
            if name not in attrs:
                w.w(f"{self.rt('rt_f_skip')}(&p); /* {name} */")
                continue
            kind = coded.get(name)
            if kind == "word":
                w.w(f"char *s_{name} = {self.rt('rt_f_str')}(&p);")
                w.w(f"row->{name} = {self.rt('rt_tok_intern')}"
                    f"(dict_{rel_name}_{name}, s_{name}, &row->{name}__n);")
            elif kind is not None:
                w.w(f"char *s_{name} = {self.rt('rt_f_str')}(&p);")
                w.w(f"row->{name} = {self.rt('rt_dict_intern')}"
                    f"(dict_{rel_name}_{name}, s_{name});")
            else:
                w.w(f"row->{name} = {self.rt(_COL_PARSERS[ty])}(&p);")
        w.w(f"{self.rt('rt_f_endrow')}(&p);")
        w.close()
        w.close()
        for a_, kind in sorted(coded.items()):
            if kind == "ordered":
                w.open("")
                w.w(f"int32_t *remap = {self.rt('rt_dict_order')}"
                    f"(dict_{rel_name}_{a_});")
                w.open(f"for (int32_t r = 0; r < {n_var}; r++)")
                w.w(f"{tb_var}[r].{a_} = remap[{tb_var}[r].{a_}];")
                w.close()
                w.close()

        for d in group:
            if isinstance(d, ir.TableIn):
                self._emit_table_bind(w, d, rel_name, n_var, tb_var)
            elif isinstance(d, ir.PartIn):
                self._emit_partition(w, d, rel_name, n_var, tb_var)
            elif isinstance(d, ir.DateIdxIn):
                self._emit_date_index(w, d, rel_name, n_var, tb_var)
        w.w()

    def _emit_table_bind(self, w, d, rel_name, n_var, tb_var):
        rec = f"struct {rel_name}"
        if self.used.get(d.sym, 0) == 0:
            return
        if d.layout == "row":
            w.w(f"{rec} *{self.name(d.sym)} = {tb_var};")
            self.lengths[d.sym] = n_var
            return
        cols_rec = self._resolve(d.sym.ty.elem if isinstance(d.sym.ty, ir.PointerType) else d.sym.ty)
        cname = cols_rec.name
        w.w(f"struct {cname} cols_{rel_name};")
        for fn, ft in cols_rec.fields:
            ct = self.ctype(ft.elem)
            w.w(f"cols_{rel_name}.{fn} = ({ct}*){self.rt('rt_alloc')}"
                f"((size_t){n_var} * sizeof({ct}));")
        w.open(f"for (int32_t r = 0; r < {n_var}; r++)")
        for fn, ft in cols_rec.fields:
            w.w(f"cols_{rel_name}.{fn}[r] = {tb_var}[r].{fn};")
        w.close()
        w.w(f"struct {cname} *{self.name(d.sym)} = &cols_{rel_name};")
        # column arrays all have the table's length
        for stmt in ir.walk_program_stmts(self.program):
            if isinstance(stmt, ir.Bind) and isinstance(stmt.expr, ir.FieldGet):
                if stmt.expr.base is d.sym:
                    self.lengths[stmt.sym] = n_var

    def _slots(self, rel_name, attr):
        st = self.catalog.relation(rel_name).stats.attrs[attr]
        return int(st.max_value) + 1 if st.max_value is not None else 0

    def _emit_partition(self, w, d, rel_name, n_var, tb_var):
        rec = f"struct {rel_name}"
        slots = self._slots(rel_name, d.key_attr)
        data = self.name(d.data)
        w.w(f"/* partition {rel_name} by {d.key_attr} ({d.kind}) */")
        if d.kind == "pk1":
            w.w(f"{rec} **{data} = ({rec}**){self.rt('rt_alloc')}"
                f"((size_t){slots} * sizeof({rec}*));")
            w.open(f"for (int32_t r = 0; r < {n_var}; r++)")
            w.w(f"int32_t k = {tb_var}[r].{d.key_attr};")
            w.w(f'if (k < 0 || k >= {slots}) rt_fail("partition key out of range");')
            w.w(f'if ({data}[k] != NULL) rt_fail("duplicate primary key");')
            w.w(f"{data}[k] = &{tb_var}[r];")
            w.close()
            return
        counts = self.name(d.counts)
        w.w(f"int32_t *{counts} = (int32_t*){self.rt('rt_alloc')}"
            f"((size_t){slots} * sizeof(int32_t));")
        w.w(f"{rec} **{data} = ({rec}**){self.rt('rt_alloc')}"
            f"((size_t){slots} * sizeof({rec}*));")
        w.open("")
        w.w(f"{rec} *replica = ({rec}*){self.rt('rt_alloc')}"
            f"((size_t){n_var} * sizeof({rec}));")
        w.w(f"int32_t *fill = (int32_t*){self.rt('rt_alloc')}"
            f"((size_t){slots} * sizeof(int32_t));")
        w.open(f"for (int32_t r = 0; r < {n_var}; r++)")
        w.w(f"int32_t k = {tb_var}[r].{d.key_attr};")
        w.w(f'if (k < 0 || k >= {slots}) rt_fail("partition key out of range");')
        w.w(f"{counts}[k]++;")
        w.close()
        w.w("int32_t off = 0;")
        w.open(f"for (int32_t s = 0; s < {slots}; s++)")
        w.w(f"{data}[s] = replica + off;")
        w.w(f"off += {counts}[s];")
        w.close()
        w.open(f"for (int32_t r = 0; r < {n_var}; r++)")
        w.w(f"int32_t k = {tb_var}[r].{d.key_attr};")
        w.w(f"{data}[k][fill[k]++] = {tb_var}[r];")
        w.close()
        w.close()

    def _emit_date_index(self, w, d, rel_name, n_var, tb_var):
        rec = f"struct {rel_name}"
        data = self.name(d.data)
        counts = self.name(d.counts)
        ny = d.n_years
        w.w(f"/* date index {rel_name} by {d.attr} */")
        w.w(f"int32_t *{counts} = (int32_t*){self.rt('rt_alloc')}"
            f"((size_t){ny if ny else 1} * sizeof(int32_t));")
        w.w(f"{rec} **{data} = ({rec}**){self.rt('rt_alloc')}"
            f"((size_t){ny if ny else 1} * sizeof({rec}*));")
        w.open("")
        w.w(f"{rec} *replica = ({rec}*){self.rt('rt_alloc')}"
            f"((size_t){n_var} * sizeof({rec}));")
        w.w(f"int32_t *fill = (int32_t*){self.rt('rt_alloc')}"
            f"((size_t){ny if ny else 1} * sizeof(int32_t));")
        w.open(f"for (int32_t r = 0; r < {n_var}; r++)")
        w.w(f"int32_t y = {self.rt('rt_date_year')}({tb_var}[r].{d.attr}) "
            f"- {d.min_year};")
        w.w(f'if (y < 0 || y >= {ny}) rt_fail("date outside indexed years");')
        w.w(f"{counts}[y]++;")
        w.close()
        w.w("int32_t off = 0;")
        w.open(f"for (int32_t s = 0; s < {ny}; s++)")
        w.w(f"{data}[s] = replica + off;")
        w.w(f"off += {counts}[s];")
        w.close()
        w.open(f"for (int32_t r = 0; r < {n_var}; r++)")
        w.w(f"int32_t y = {self.rt('rt_date_year')}({tb_var}[r].{d.attr}) "
            f"- {d.min_year};")
        w.w(f"{data}[y][fill[y]++] = {tb_var}[r];")
        w.close()
        w.close()


def emit_c(program, catalog):
    """Deterministic C text for a LOW-level, typechecked program."""
    diags = ir.typecheck(program)
    if diags:
        raise EmitError("program does not typecheck: " + "; ".join(diags[:3]))
    return Emitter(program, catalog).emit()
