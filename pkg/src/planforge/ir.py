"""Two-level ANF intermediate representation.

HIGH-level programs use records, arrays, hash maps and multimaps; LOW-level
programs are C-like: records by reference, raw allocation, no collection
nodes. Every compound expression is bound to a fresh single-assignment
symbol; mutation goes through explicit effect statements (array/field/var
stores, map inserts, loops).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

HIGH = "HIGH"
LOW = "LOW"


# ---------------------------------------------------------------------------
# Types

class IrType:
    pass


@dataclass(frozen=True)
class Scalar(IrType):
    name: str

    def __repr__(self):
        return self.name


INT = Scalar("INT")
DOUBLE = Scalar("DOUBLE")
BOOL = Scalar("BOOL")
DATE = Scalar("DATE")
STRING = Scalar("STRING")
CHAR = Scalar("CHAR")
UNIT = Scalar("UNIT")
RAWPTR = Scalar("RAWPTR")  # opaque runtime handle, LOW only
KEY64 = Scalar("KEY64")    # packed generic-map key, LOW only


@dataclass(frozen=True)
class RecordType(IrType):
    name: str
    fields: tuple  # of (name, IrType); a field typed by the record's own
                   # name (self reference) is expressed as Rec(name)

    def field_type(self, fname):
        for n, t in self.fields:
            if n == fname:
                return t
        raise KeyError(f"record {self.name} has no field {fname}")

    def has_field(self, fname):
        return any(n == fname for n, _ in self.fields)

    def __repr__(self):
        return f"Rec({self.name})"


@dataclass(frozen=True)
class Rec(IrType):
    """Named reference to a record type; resolved through Program.records."""
    name: str

    def __repr__(self):
        return f"Rec({self.name})"


@dataclass(frozen=True)
class ArrayType(IrType):
    elem: IrType

    def __repr__(self):
        return f"Array[{self.elem!r}]"


@dataclass(frozen=True)
class HashMapType(IrType):
    key: IrType
    value: IrType

    def __repr__(self):
        return f"HashMap[{self.key!r},{self.value!r}]"


@dataclass(frozen=True)
class MultiMapType(IrType):
    key: IrType
    value: IrType

    def __repr__(self):
        return f"MultiMap[{self.key!r},{self.value!r}]"


@dataclass(frozen=True)
class SeqType(IrType):
    elem: IrType

    def __repr__(self):
        return f"Seq[{self.elem!r}]"


@dataclass(frozen=True)
class PointerType(IrType):
    elem: IrType

    def __repr__(self):
        return f"Ptr[{self.elem!r}]"


def contains_collection(ty):
    if isinstance(ty, (HashMapType, MultiMapType, SeqType)):
        return True
    if isinstance(ty, ArrayType):
        return contains_collection(ty.elem)
    if isinstance(ty, PointerType):
        return contains_collection(ty.elem)
    return False


# ---------------------------------------------------------------------------
# Atoms

class Atom:
    pass


_sym_counter = [0]


@dataclass(eq=False)
class Sym(Atom):
    ty: IrType
    hint: str = "s"
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        _sym_counter[0] += 1
        self.id = _sym_counter[0]

    def __repr__(self):
        return f"{self.hint}{self.id}"


@dataclass(frozen=True)
class Const(Atom):
    value: object
    ty: IrType

    def __repr__(self):
        return f"{self.value!r}:{self.ty!r}"


def lit(value, ty=None):
    if ty is None:
        if isinstance(value, bool):
            ty = BOOL
        elif isinstance(value, int):
            ty = INT
        elif isinstance(value, float):
            ty = DOUBLE
        elif isinstance(value, str):
            ty = STRING
        else:
            raise TypeError(f"no literal type for {value!r}")
    return Const(value, ty)


TRUE = Const(True, BOOL)
FALSE = Const(False, BOOL)
UNIT_VAL = Const(None, UNIT)


def null(rec_ty):
    return Const(None, rec_ty)


def is_null_const(atom):
    return isinstance(atom, Const) and atom.value is None and atom.ty is not UNIT


# ---------------------------------------------------------------------------
# Expressions (right-hand sides of bindings)

class Expr:
    pass


@dataclass(eq=False)
class AtomExpr(Expr):
    atom: Atom


# ops: + - * / % == != < <= > >= & | min
@dataclass(eq=False)
class Bin(Expr):
    op: str
    a: Atom
    b: Atom


# ops: not neg hash code (CHAR -> INT)
@dataclass(eq=False)
class Un(Expr):
    op: str
    a: Atom


@dataclass(eq=False)
class RecordNew(Expr):
    rec: str                      # record type name
    values: tuple                 # of (field name, Atom)


@dataclass(eq=False)
class FieldGet(Expr):
    base: Atom
    name: str


@dataclass(eq=False)
class ArrayNew(Expr):
    elem: IrType
    size: Atom                    # elements zero/null-initialized


@dataclass(eq=False)
class ArrayGet(Expr):
    arr: Atom
    idx: Atom


@dataclass(eq=False)
class ArrayLen(Expr):
    arr: Atom


@dataclass(eq=False)
class ArrayAddr(Expr):            # LOW: address of arr[idx], used by pools
    arr: Atom
    idx: Atom


@dataclass(eq=False)
class ArraySlice(Expr):           # LOW: arr + offset, a view into a pool
    arr: Atom
    offset: Atom


@dataclass(eq=False)
class MapNew(Expr):
    key: IrType
    value: IrType


@dataclass(eq=False)
class MapGetOrElseUpdate(Expr):   # effectful: inserts default() on miss
    map: Atom
    key: Atom
    default: "Lambda"


@dataclass(eq=False)
class MultiMapNew(Expr):
    key: IrType
    value: IrType


@dataclass(eq=False)
class MultiMapNonEmpty(Expr):     # read-only probe
    map: Atom
    key: Atom


@dataclass(eq=False)
class SeqNew(Expr):
    elem: IrType


@dataclass(eq=False)
class Ternary(Expr):              # lazily evaluated branch blocks
    cond: Atom
    then: "Block"
    els: "Block"


@dataclass(eq=False)
class AndThen(Expr):              # short-circuit &&: right block lazy
    left: Atom
    right: "Block"


@dataclass(eq=False)
class OrElse(Expr):               # short-circuit ||
    left: Atom
    right: "Block"


# ops: eq ne starts ends slice cmp
@dataclass(eq=False)
class StrOp(Expr):
    op: str
    a: Atom
    b: Atom


@dataclass(eq=False)
class Alloc(Expr):                # LOW only
    ty: IrType
    count: Atom
    attrs: dict = field(default_factory=dict)


# Dictionary intrinsics: resolved against the loaded data, setup-phase only.
@dataclass(eq=False)
class DictIntrinsic(Expr):
    op: str                       # lookup | prefix_start | prefix_end |
                                  # suffix_table | word_code
    relation: str
    attr: str
    arg: str


@dataclass(eq=False)
class DictDecode(Expr):           # code back to the string value (prints)
    relation: str
    attr: str
    code: Atom


# Generic-map runtime routines (LOW fallback lowering).
@dataclass(eq=False)
class GMapNew(Expr):
    pass


@dataclass(eq=False)
class GMapGet(Expr):              # 64-bit key -> RAWPTR (null on miss)
    map: Atom
    key: Atom


@dataclass(eq=False)
class GMapLen(Expr):
    map: Atom


@dataclass(eq=False)
class GMapEntryKey(Expr):         # key of i-th inserted entry
    map: Atom
    idx: Atom


@dataclass(eq=False)
class GMapEntryVal(Expr):
    map: Atom
    idx: Atom


@dataclass(eq=False)
class GKey(Expr):                 # pack atoms into a 64-bit generic-map key;
    parts: tuple                  # exact when every part packs losslessly
    exact: bool = True


@dataclass(eq=False)
class GVecNew(Expr):
    pass


@dataclass(eq=False)
class GVecLen(Expr):
    vec: Atom


@dataclass(eq=False)
class GVecGet(Expr):
    vec: Atom
    idx: Atom


@dataclass(eq=False)
class Cast(Expr):                 # reinterpret RAWPTR <-> Rec pointers (LOW)
    ty: IrType
    a: Atom


@dataclass(eq=False)
class VarGet(Expr):
    var: Sym


@dataclass(eq=False)
class Lambda:
    params: tuple                 # of Sym
    body: "Block"


# ---------------------------------------------------------------------------
# Statements

class Stmt:
    pass


@dataclass(eq=False)
class Bind(Stmt):
    sym: Sym
    expr: Expr


@dataclass(eq=False)
class VarDecl(Stmt):
    var: Sym
    init: Atom


@dataclass(eq=False)
class VarSet(Stmt):
    var: Sym
    value: Atom


@dataclass(eq=False)
class ArraySet(Stmt):
    arr: Atom
    idx: Atom
    value: Atom


@dataclass(eq=False)
class FieldSet(Stmt):
    base: Atom
    name: str
    value: Atom


@dataclass(eq=False)
class MultiMapAdd(Stmt):
    map: Atom
    key: Atom
    value: Atom


@dataclass(eq=False)
class MapForeach(Stmt):
    map: Atom
    fn: Lambda                    # (key, value)


@dataclass(eq=False)
class MultiMapForeachAt(Stmt):    # iterate the values bound to one key
    map: Atom
    key: Atom
    fn: Lambda                    # (value)


@dataclass(eq=False)
class SeqAppend(Stmt):
    seq: Atom
    value: Atom


@dataclass(eq=False)
class SeqForeach(Stmt):
    seq: Atom
    fn: Lambda


@dataclass(eq=False)
class GMapPut(Stmt):
    map: Atom
    key: Atom
    value: Atom


@dataclass(eq=False)
class GVecPush(Stmt):
    vec: Atom
    value: Atom


@dataclass(eq=False)
class While(Stmt):
    cond: "Block"                 # re-evaluated each iteration, BOOL result
    body: "Block"


@dataclass(eq=False)
class ForRange(Stmt):
    var: Sym                      # INT, scoped to body
    start: Atom
    stop: Atom
    body: "Block"
    step: Atom = None
    attrs: dict = field(default_factory=dict)


@dataclass(eq=False)
class If(Stmt):
    cond: Atom
    then: "Block"
    els: "Block" = None


@dataclass(eq=False)
class SortStmt(Stmt):             # stable in-place sort of arr[0:length]
    arr: Atom
    length: Atom
    cmp: Lambda                   # (a, b) -> INT


@dataclass(eq=False)
class EmitRow(Stmt):              # push one result row, canonical format
    values: tuple                 # of Atom


@dataclass(eq=False)
class Block:
    stmts: list = field(default_factory=list)
    result: Atom = UNIT_VAL


# ---------------------------------------------------------------------------
# Program inputs

@dataclass
class TableIn:
    sym: Sym
    relation: str
    attrs: list                   # loaded attribute names, catalog order
    layout: str = "row"           # row | column
    coded: dict = field(default_factory=dict)  # attr -> normal|ordered|word


@dataclass
class PartIn:
    data: Sym
    counts: Sym                   # None for pk1
    relation: str
    key_attr: str
    kind: str                     # pk1 | fk2
    attrs: list
    coded: dict = field(default_factory=dict)


@dataclass
class DateIdxIn:
    data: Sym
    counts: Sym
    relation: str
    attr: str
    attrs: list
    min_year: int
    n_years: int
    coded: dict = field(default_factory=dict)


@dataclass
class Program:
    level: str
    inputs: list
    setup: Block
    body: Block
    records: dict = field(default_factory=dict)   # name -> RecordType
    meta: dict = field(default_factory=dict)

    def record(self, name):
        return self.records[name]

    def input_syms(self):
        out = []
        for decl in self.inputs:
            if isinstance(decl, TableIn):
                out.append(decl.sym)
            elif isinstance(decl, PartIn):
                out.append(decl.data)
                if decl.counts is not None:
                    out.append(decl.counts)
            elif isinstance(decl, DateIdxIn):
                out.extend([decl.data, decl.counts])
        return out


def resolve(ty, records):
    """Resolve Rec name references to full RecordTypes (one level)."""
    if isinstance(ty, Rec):
        return records[ty.name]
    return ty


# ---------------------------------------------------------------------------
# Structural walkers

def expr_blocks(expr):
    if isinstance(expr, Ternary):
        return [expr.then, expr.els]
    if isinstance(expr, (AndThen, OrElse)):
        return [expr.right]
    if isinstance(expr, MapGetOrElseUpdate):
        return [expr.default.body]
    return []


def expr_atoms(expr):
    if isinstance(expr, AtomExpr):
        return [expr.atom]
    if isinstance(expr, Bin):
        return [expr.a, expr.b]
    if isinstance(expr, Un):
        return [expr.a]
    if isinstance(expr, RecordNew):
        return [a for _, a in expr.values]
    if isinstance(expr, FieldGet):
        return [expr.base]
    if isinstance(expr, ArrayNew):
        return [expr.size]
    if isinstance(expr, (ArrayGet, ArrayAddr)):
        return [expr.arr, expr.idx]
    if isinstance(expr, ArraySlice):
        return [expr.arr, expr.offset]
    if isinstance(expr, ArrayLen):
        return [expr.arr]
    if isinstance(expr, MapGetOrElseUpdate):
        return [expr.map, expr.key]
    if isinstance(expr, MultiMapNonEmpty):
        return [expr.map, expr.key]
    if isinstance(expr, Ternary):
        return [expr.cond]
    if isinstance(expr, AndThen):
        return [expr.left]
    if isinstance(expr, OrElse):
        return [expr.left]
    if isinstance(expr, StrOp):
        return [expr.a, expr.b]
    if isinstance(expr, Alloc):
        return [expr.count]
    if isinstance(expr, (GMapGet, GMapEntryKey, GMapEntryVal)):
        return [expr.map, expr.key if isinstance(expr, GMapGet) else expr.idx]
    if isinstance(expr, GMapLen):
        return [expr.map]
    if isinstance(expr, GKey):
        return list(expr.parts)
    if isinstance(expr, GVecLen):
        return [expr.vec]
    if isinstance(expr, GVecGet):
        return [expr.vec, expr.idx]
    if isinstance(expr, DictDecode):
        return [expr.code]
    if isinstance(expr, Cast):
        return [expr.a]
    if isinstance(expr, VarGet):
        return []
    return []


def stmt_atoms(stmt):
    if isinstance(stmt, Bind):
        return expr_atoms(stmt.expr)
    if isinstance(stmt, VarDecl):
        return [stmt.init]
    if isinstance(stmt, VarSet):
        return [stmt.value]
    if isinstance(stmt, ArraySet):
        return [stmt.arr, stmt.idx, stmt.value]
    if isinstance(stmt, FieldSet):
        return [stmt.base, stmt.value]
    if isinstance(stmt, MultiMapAdd):
        return [stmt.map, stmt.key, stmt.value]
    if isinstance(stmt, MapForeach):
        return [stmt.map]
    if isinstance(stmt, MultiMapForeachAt):
        return [stmt.map, stmt.key]
    if isinstance(stmt, SeqAppend):
        return [stmt.seq, stmt.value]
    if isinstance(stmt, GMapPut):
        return [stmt.map, stmt.key, stmt.value]
    if isinstance(stmt, GVecPush):
        return [stmt.vec, stmt.value]
    if isinstance(stmt, SeqForeach):
        return [stmt.seq]
    if isinstance(stmt, ForRange):
        out = [stmt.start, stmt.stop]
        if stmt.step is not None:
            out.append(stmt.step)
        return out
    if isinstance(stmt, If):
        return [stmt.cond]
    if isinstance(stmt, SortStmt):
        return [stmt.arr, stmt.length]
    if isinstance(stmt, EmitRow):
        return list(stmt.values)
    return []


def stmt_blocks(stmt):
    if isinstance(stmt, Bind):
        return expr_blocks(stmt.expr)
    if isinstance(stmt, While):
        return [stmt.cond, stmt.body]
    if isinstance(stmt, ForRange):
        return [stmt.body]
    if isinstance(stmt, If):
        return [stmt.then] + ([stmt.els] if stmt.els is not None else [])
    if isinstance(stmt, (MapForeach, MultiMapForeachAt, SeqForeach)):
        return [stmt.fn.body]
    if isinstance(stmt, SortStmt):
        return [stmt.cmp.body]
    return []


def stmt_lambda_params(stmt):
    if isinstance(stmt, (MapForeach, MultiMapForeachAt, SeqForeach)):
        return list(stmt.fn.params)
    if isinstance(stmt, SortStmt):
        return list(stmt.cmp.params)
    if isinstance(stmt, Bind) and isinstance(stmt.expr, MapGetOrElseUpdate):
        return list(stmt.expr.default.params)
    return []


def walk_stmts(block):
    """Yield every statement in the block, depth first, loops/lambdas included."""
    for stmt in block.stmts:
        yield stmt
        for sub in stmt_blocks(stmt):
            yield from walk_stmts(sub)


def walk_program_blocks(program):
    yield program.setup
    yield program.body


def walk_program_stmts(program):
    for blk in walk_program_blocks(program):
        yield from walk_stmts(blk)


def free_and_used_symbols(block):
    """(defined set, used set) over a block, including nested blocks, lambda
    captures and effect targets. Lambda parameters and loop variables count
    as defined."""
    defined, used = set(), set()

    def use(atom):
        if isinstance(atom, Sym):
            used.add(atom)

    def visit_block(blk):
        for stmt in blk.stmts:
            visit_stmt(stmt)
        if isinstance(blk.result, Sym):
            used.add(blk.result)

    def visit_stmt(stmt):
        for a in stmt_atoms(stmt):
            use(a)
        if isinstance(stmt, Bind):
            defined.add(stmt.sym)
            if isinstance(stmt.expr, VarGet):
                used.add(stmt.expr.var)
        elif isinstance(stmt, VarDecl):
            defined.add(stmt.var)
        elif isinstance(stmt, VarSet):
            used.add(stmt.var)
        elif isinstance(stmt, ForRange):
            defined.add(stmt.var)
        for p in stmt_lambda_params(stmt):
            defined.add(p)
        for sub in stmt_blocks(stmt):
            visit_block(sub)

    visit_block(block)
    return defined, used


# ---------------------------------------------------------------------------
# Effect / purity classification

EFFECT_STMTS = (VarSet, ArraySet, FieldSet, MultiMapAdd, SeqAppend, GMapPut,
                GVecPush, SortStmt, EmitRow)


def block_has_effects(block):
    for stmt in walk_stmts(block):
        if isinstance(stmt, EFFECT_STMTS):
            return True
        if isinstance(stmt, Bind) and not expr_dead_safe(stmt.expr):
            return True
        if isinstance(stmt, (MapForeach, MultiMapForeachAt, SeqForeach)):
            return True  # iteration itself is pure but treated opaquely
    return False


def expr_dead_safe(expr):
    """True when an unused binding of this expression may be dropped."""
    if isinstance(expr, MapGetOrElseUpdate):
        return False  # may insert
    for blk in expr_blocks(expr):
        if block_has_effects(blk):
            return False
    return True


def expr_cse_safe(expr):
    """True for expressions that may be merged when syntactically equal.

    Loads (field/array/var reads) are handled separately by the CSE pass via
    effect-epoch tracking; everything stateful or block-bearing is excluded.
    """
    return isinstance(expr, (Bin, Un, StrOp)) or (
        isinstance(expr, AtomExpr))


# ---------------------------------------------------------------------------
# Type computation

class TypeError_(Exception):
    pass


def type_of_expr(expr, records, env):
    """Type of an expression; env maps Sym -> IrType for var cells."""
    def aty(a):
        return a.ty

    def rec_of(a):
        ty = aty(a)
        if isinstance(ty, Rec):
            return records[ty.name]
        if isinstance(ty, RecordType):
            return ty
        if isinstance(ty, PointerType):
            return rec_of_ty(ty.elem)
        raise TypeError_(f"expected record, got {ty!r}")

    def rec_of_ty(ty):
        if isinstance(ty, Rec):
            return records[ty.name]
        if isinstance(ty, RecordType):
            return ty
        raise TypeError_(f"expected record type, got {ty!r}")

    if isinstance(expr, AtomExpr):
        return aty(expr.atom)
    if isinstance(expr, Bin):
        if expr.op in ("==", "!=", "<", "<=", ">", ">="):
            return BOOL
        if expr.op in ("&", "|"):
            return BOOL
        ta, tb = aty(expr.a), aty(expr.b)
        if DOUBLE in (ta, tb):
            return DOUBLE
        return ta
    if isinstance(expr, Un):
        if expr.op == "not":
            return BOOL
        if expr.op == "hash":
            return INT
        if expr.op == "code":
            return INT
        if expr.op == "neg":
            return aty(expr.a)
        raise TypeError_(f"unknown unary op {expr.op}")
    if isinstance(expr, RecordNew):
        return Rec(expr.rec)
    if isinstance(expr, FieldGet):
        return rec_of(expr.base).field_type(expr.name)
    if isinstance(expr, ArrayNew):
        return ArrayType(expr.elem)
    if isinstance(expr, ArrayGet):
        ty = aty(expr.arr)
        if not isinstance(ty, ArrayType):
            raise TypeError_(f"indexing non-array {ty!r}")
        return ty.elem
    if isinstance(expr, ArrayLen):
        return INT
    if isinstance(expr, ArrayAddr):
        ty = aty(expr.arr)
        if not isinstance(ty, ArrayType):
            raise TypeError_(f"addressing non-array {ty!r}")
        if isinstance(ty.elem, (Rec, RecordType)):
            return PointerType(ty.elem)
        return ArrayType(ty.elem)
    if isinstance(expr, ArraySlice):
        ty = aty(expr.arr)
        if not isinstance(ty, ArrayType):
            raise TypeError_(f"slicing non-array {ty!r}")
        return ty
    if isinstance(expr, MapNew):
        return HashMapType(expr.key, expr.value)
    if isinstance(expr, MapGetOrElseUpdate):
        ty = aty(expr.map)
        if not isinstance(ty, HashMapType):
            raise TypeError_(f"getOrElseUpdate on {ty!r}")
        return ty.value
    if isinstance(expr, MultiMapNew):
        return MultiMapType(expr.key, expr.value)
    if isinstance(expr, MultiMapNonEmpty):
        return BOOL
    if isinstance(expr, SeqNew):
        return SeqType(expr.elem)
    if isinstance(expr, Ternary):
        t1 = block_result_type(expr.then)
        return t1
    if isinstance(expr, (AndThen, OrElse)):
        return BOOL
    if isinstance(expr, StrOp):
        if expr.op == "cmp":
            return INT
        return BOOL
    if isinstance(expr, Alloc):
        if isinstance(expr.ty, (Rec, RecordType)):
            return ArrayType(expr.ty)
        return ArrayType(expr.ty)
    if isinstance(expr, DictIntrinsic):
        if expr.op == "suffix_table":
            return ArrayType(BOOL)
        return INT
    if isinstance(expr, DictDecode):
        return STRING
    if isinstance(expr, GMapNew):
        return RAWPTR
    if isinstance(expr, (GMapGet, GMapEntryVal)):
        return RAWPTR
    if isinstance(expr, (GMapLen,)):
        return INT
    if isinstance(expr, GMapEntryKey):
        return KEY64
    if isinstance(expr, GKey):
        return KEY64
    if isinstance(expr, GVecNew):
        return RAWPTR
    if isinstance(expr, GVecLen):
        return INT
    if isinstance(expr, GVecGet):
        return RAWPTR
    if isinstance(expr, Cast):
        return expr.ty
    if isinstance(expr, VarGet):
        return expr.var.ty
    raise TypeError_(f"unknown expression {expr!r}")


def block_result_type(block):
    return block.result.ty if block.result is not None else UNIT


# ---------------------------------------------------------------------------
# Type checking (returns diagnostics, never raises)

def typecheck(program):
    """Structural and level checks; empty list means the program is well formed."""
    diags = []
    records = program.records
    defined = set(program.input_syms())
    bound_once = set()

    for name, rt in records.items():
        seen = set()
        for fname, _ in rt.fields:
            if fname in seen:
                diags.append(f"record {name}: duplicate field {fname}")
            seen.add(fname)
        if rt.name != name:
            diags.append(f"record registry mismatch for {name}")

    def check_type(ty, where):
        if program.level == LOW and isinstance(ty, (HashMapType, MultiMapType, SeqType)):
            diags.append(f"{where}: high-level construct at LOW level: {ty!r}")
        if program.level == HIGH and isinstance(ty, PointerType):
            diags.append(f"{where}: pointer type at HIGH level")
        if program.level == HIGH and ty in (RAWPTR, KEY64):
            diags.append(f"{where}: low-level scalar {ty!r} at HIGH level")
        if isinstance(ty, (ArrayType, PointerType)):
            check_type(ty.elem, where)
        if isinstance(ty, Rec) and ty.name not in records:
            diags.append(f"{where}: unknown record type {ty.name}")

    def check_atom(atom, scope, where):
        if isinstance(atom, Sym):
            if atom not in scope:
                diags.append(f"{where}: symbol {atom!r} used before definition")
        check_type(atom.ty, where)

    def check_block(block, scope):
        scope = set(scope)
        for stmt in block.stmts:
            where = type(stmt).__name__
            for a in stmt_atoms(stmt):
                check_atom(a, scope, where)
            if isinstance(stmt, Bind) and isinstance(stmt.expr, VarGet):
                check_atom(stmt.expr.var, scope, where)
            if isinstance(stmt, VarSet):
                check_atom(stmt.var, scope, where)

            inner_scope = set(scope)
            if isinstance(stmt, ForRange):
                inner_scope.add(stmt.var)
            for p in stmt_lambda_params(stmt):
                inner_scope.add(p)
            for sub in stmt_blocks(stmt):
                check_block(sub, inner_scope)

            if isinstance(stmt, Bind):
                if stmt.sym in bound_once:
                    diags.append(f"symbol {stmt.sym!r} bound more than once")
                bound_once.add(stmt.sym)
                scope.add(stmt.sym)
                check_type(stmt.sym.ty, where)
                if program.level == LOW and isinstance(
                        stmt.expr, (MapNew, MultiMapNew, SeqNew,
                                    MapGetOrElseUpdate, MultiMapNonEmpty)):
                    diags.append(
                        f"high-level construct at LOW level: {type(stmt.expr).__name__}")
                if program.level == HIGH and isinstance(
                        stmt.expr, (Alloc, ArrayAddr, ArraySlice, Cast)):
                    diags.append(
                        f"low-level construct at HIGH level: {type(stmt.expr).__name__}")
                try:
                    ty = type_of_expr(stmt.expr, records, None)
                    if ty != stmt.sym.ty and not _compat(ty, stmt.sym.ty, records):
                        diags.append(
                            f"binding {stmt.sym!r}: expression type {ty!r} "
                            f"!= symbol type {stmt.sym.ty!r}")
                except (TypeError_, KeyError) as exc:
                    diags.append(f"binding {stmt.sym!r}: {exc}")
            elif isinstance(stmt, VarDecl):
                scope.add(stmt.var)
            elif isinstance(stmt, (MultiMapAdd, MapForeach, MultiMapForeachAt)):
                if program.level == LOW:
                    diags.append(
                        f"high-level construct at LOW level: {type(stmt).__name__}")
        if isinstance(block.result, Sym) and block.result not in scope:
            diags.append(f"block result {block.result!r} not in scope")

    check_block(program.setup, defined)
    setup_defs, _ = free_and_used_symbols(program.setup)
    check_block(program.body, defined | setup_defs)
    return diags


def _compat(actual, declared, records):
    a = records.get(actual.name) if isinstance(actual, Rec) else actual
    d = records.get(declared.name) if isinstance(declared, Rec) else declared
    if isinstance(actual, Rec) and isinstance(declared, Rec):
        return actual.name == declared.name
    return a == d


# ---------------------------------------------------------------------------
# Builder

class Builder:
    """Emits ANF statements into the current block."""

    def __init__(self, records=None):
        self.records = records if records is not None else {}
        self.blocks = [Block()]

    @property
    def block(self):
        return self.blocks[-1]

    def push(self):
        self.blocks.append(Block())
        return self.blocks[-1]

    def pop(self, result=UNIT_VAL):
        blk = self.blocks.pop()
        blk.result = result
        return blk

    def emit(self, stmt):
        self.block.stmts.append(stmt)
        return stmt

    def bind(self, expr, hint="s", attrs=None):
        ty = type_of_expr(expr, self.records, None)
        sym = Sym(ty, hint, attrs or {})
        self.emit(Bind(sym, expr))
        return sym

    def record_type(self, name, fields):
        rt = RecordType(name, tuple(fields))
        self.records[name] = rt
        return rt

    def var(self, init, hint="v"):
        var = Sym(init.ty, hint)
        self.emit(VarDecl(var, init))
        return var

    def get(self, var, hint=None):
        return self.bind(VarGet(var), hint or var.hint)

    def set(self, var, value):
        self.emit(VarSet(var, value))

    def if_(self, cond):
        return _IfCtx(self, cond)

    def for_range(self, start, stop, hint="i", attrs=None, step=None):
        return _ForCtx(self, start, stop, hint, attrs or {}, step)

    def while_(self):
        return _WhileCtx(self)


class _IfCtx:
    def __init__(self, b, cond):
        self.b, self.cond = b, cond
        self.then, self.els = None, None

    def __enter__(self):
        self.b.push()
        return self

    def __exit__(self, *exc):
        if not exc[0]:
            blk = self.b.pop()
            if self.then is None:
                self.then = blk
                self.b.emit(If(self.cond, self.then, self.els))
        return False

    def else_(self):
        # close the then-block, open the else-block
        self.then = self.b.pop()
        self.b.push()
        return _ElseCtx(self)


class _ElseCtx:
    def __init__(self, ifctx):
        self.ifctx = ifctx

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if not exc[0]:
            ifctx = self.ifctx
            ifctx.els = ifctx.b.pop()
            ifctx.b.emit(If(ifctx.cond, ifctx.then, ifctx.els))
        return False


class _ForCtx:
    def __init__(self, b, start, stop, hint, attrs, step):
        self.b = b
        self.var = Sym(INT, hint)
        self.start, self.stop, self.attrs, self.step = start, stop, attrs, step

    def __enter__(self):
        self.b.push()
        return self.var

    def __exit__(self, *exc):
        if not exc[0]:
            body = self.b.pop()
            self.b.emit(ForRange(self.var, self.start, self.stop, body,
                                 self.step, self.attrs))
        return False


class _WhileCtx:
    def __init__(self, b):
        self.b = b
        self.cond_block = None

    def __enter__(self):
        self.b.push()
        return self

    def cond(self, atom):
        self.cond_block = self.b.pop(atom)
        self.b.push()

    def __exit__(self, *exc):
        if not exc[0]:
            body = self.b.pop()
            self.b.emit(While(self.cond_block, body))
        return False


# ---------------------------------------------------------------------------
# Deterministic text dump (one statement per line) and node census

def dump_program(program):
    out = []
    renum = {}

    def nm(atom):
        if isinstance(atom, Sym):
            if atom.id not in renum:
                renum[atom.id] = len(renum)
            return f"{atom.hint}{renum[atom.id]}"
        if isinstance(atom, Const):
            if atom.ty == STRING and isinstance(atom.value, str):
                return f'"{atom.value}"'
            if atom.value is None:
                return "null" if atom.ty is not UNIT else "unit"
            return repr(atom.value)
        return repr(atom)

    def ex(expr):
        k = type(expr).__name__
        if isinstance(expr, AtomExpr):
            return nm(expr.atom)
        if isinstance(expr, Bin):
            return f"({nm(expr.a)} {expr.op} {nm(expr.b)})"
        if isinstance(expr, Un):
            return f"{expr.op}({nm(expr.a)})"
        if isinstance(expr, RecordNew):
            inner = ", ".join(f"{n}={nm(a)}" for n, a in expr.values)
            return f"record {expr.rec}({inner})"
        if isinstance(expr, FieldGet):
            return f"{nm(expr.base)}.{expr.name}"
        if isinstance(expr, ArrayNew):
            return f"new Array[{expr.elem!r}]({nm(expr.size)})"
        if isinstance(expr, ArrayGet):
            return f"{nm(expr.arr)}({nm(expr.idx)})"
        if isinstance(expr, ArrayLen):
            return f"len({nm(expr.arr)})"
        if isinstance(expr, ArrayAddr):
            return f"&{nm(expr.arr)}({nm(expr.idx)})"
        if isinstance(expr, ArraySlice):
            return f"({nm(expr.arr)} + {nm(expr.offset)})"
        if isinstance(expr, MapNew):
            return f"new HashMap[{expr.key!r},{expr.value!r}]"
        if isinstance(expr, MultiMapNew):
            return f"new MultiMap[{expr.key!r},{expr.value!r}]"
        if isinstance(expr, SeqNew):
            return f"new Seq[{expr.elem!r}]"
        if isinstance(expr, MapGetOrElseUpdate):
            return (f"{nm(expr.map)}.getOrElseUpdate({nm(expr.key)}, "
                    f"{lam(expr.default)})")
        if isinstance(expr, MultiMapNonEmpty):
            return f"{nm(expr.map)}.get({nm(expr.key)}).nonEmpty"
        if isinstance(expr, Ternary):
            return f"if {nm(expr.cond)} {blk_inline(expr.then)} else {blk_inline(expr.els)}"
        if isinstance(expr, AndThen):
            return f"({nm(expr.left)} && {blk_inline(expr.right)})"
        if isinstance(expr, OrElse):
            return f"({nm(expr.left)} || {blk_inline(expr.right)})"
        if isinstance(expr, StrOp):
            return f"str.{expr.op}({nm(expr.a)}, {nm(expr.b)})"
        if isinstance(expr, Alloc):
            return f"alloc[{expr.ty!r}]({nm(expr.count)})"
        if isinstance(expr, DictIntrinsic):
            return f"dict.{expr.op}({expr.relation}.{expr.attr}, {expr.arg!r})"
        if isinstance(expr, GMapNew):
            return "gmap.new()"
        if isinstance(expr, GMapGet):
            return f"gmap.get({nm(expr.map)}, {nm(expr.key)})"
        if isinstance(expr, GMapLen):
            return f"gmap.len({nm(expr.map)})"
        if isinstance(expr, GMapEntryKey):
            return f"gmap.key({nm(expr.map)}, {nm(expr.idx)})"
        if isinstance(expr, GMapEntryVal):
            return f"gmap.val({nm(expr.map)}, {nm(expr.idx)})"
        if isinstance(expr, GKey):
            inner = ", ".join(nm(p) for p in expr.parts)
            return f"gkey{'' if expr.exact else '~'}({inner})"
        if isinstance(expr, GVecNew):
            return "gvec.new()"
        if isinstance(expr, GVecLen):
            return f"gvec.len({nm(expr.vec)})"
        if isinstance(expr, GVecGet):
            return f"gvec.get({nm(expr.vec)}, {nm(expr.idx)})"
        if isinstance(expr, DictDecode):
            return f"dict.decode({expr.relation}.{expr.attr}, {nm(expr.code)})"
        if isinstance(expr, Cast):
            return f"cast[{expr.ty!r}]({nm(expr.a)})"
        if isinstance(expr, VarGet):
            return f"*{nm(expr.var)}"
        return k

    def lam(fn):
        ps = ", ".join(nm(p) for p in fn.params)
        return f"fun({ps}) {blk_inline(fn.body)}"

    def blk_inline(blk):
        parts = []
        for s in blk.stmts:
            parts.append(st_text(s))
        parts.append(nm(blk.result))
        return "{ " + "; ".join(parts) + " }"

    def st_text(stmt):
        if isinstance(stmt, Bind):
            return f"val {nm(stmt.sym)} = {ex(stmt.expr)}"
        if isinstance(stmt, VarDecl):
            return f"var {nm(stmt.var)} = {nm(stmt.init)}"
        if isinstance(stmt, VarSet):
            return f"{nm(stmt.var)} := {nm(stmt.value)}"
        if isinstance(stmt, ArraySet):
            return f"{nm(stmt.arr)}({nm(stmt.idx)}) = {nm(stmt.value)}"
        if isinstance(stmt, FieldSet):
            return f"{nm(stmt.base)}.{stmt.name} = {nm(stmt.value)}"
        if isinstance(stmt, MultiMapAdd):
            return f"{nm(stmt.map)}.addBinding({nm(stmt.key)}, {nm(stmt.value)})"
        if isinstance(stmt, MapForeach):
            return f"{nm(stmt.map)}.foreach({lam(stmt.fn)})"
        if isinstance(stmt, MultiMapForeachAt):
            return (f"{nm(stmt.map)}.get({nm(stmt.key)}).get"
                    f".foreach({lam(stmt.fn)})")
        if isinstance(stmt, SeqAppend):
            return f"{nm(stmt.seq)}.append({nm(stmt.value)})"
        if isinstance(stmt, SeqForeach):
            return f"{nm(stmt.seq)}.foreach({lam(stmt.fn)})"
        if isinstance(stmt, GMapPut):
            return f"gmap.put({nm(stmt.map)}, {nm(stmt.key)}, {nm(stmt.value)})"
        if isinstance(stmt, GVecPush):
            return f"gvec.push({nm(stmt.vec)}, {nm(stmt.value)})"
        if isinstance(stmt, While):
            return f"while {blk_inline(stmt.cond)} {blk_inline(stmt.body)}"
        if isinstance(stmt, ForRange):
            tag = f" /*{stmt.attrs}*/" if stmt.attrs else ""
            st = f" step {nm(stmt.step)}" if stmt.step is not None else ""
            return (f"for {nm(stmt.var)} in {nm(stmt.start)}..{nm(stmt.stop)}"
                    f"{st}{tag} {blk_inline(stmt.body)}")
        if isinstance(stmt, If):
            e = f" else {blk_inline(stmt.els)}" if stmt.els is not None else ""
            return f"if {nm(stmt.cond)} {blk_inline(stmt.then)}{e}"
        if isinstance(stmt, SortStmt):
            return f"sort({nm(stmt.arr)}, {nm(stmt.length)}, {lam(stmt.cmp)})"
        if isinstance(stmt, EmitRow):
            return "emit(" + ", ".join(nm(v) for v in stmt.values) + ")"
        return type(stmt).__name__

    def blk_lines(blk, depth):
        pad = "  " * depth
        for s in blk.stmts:
            if isinstance(s, (While, ForRange, If)) or (
                    isinstance(s, (MapForeach, MultiMapForeachAt, SeqForeach))):
                out.append(pad + st_head(s))
                for sub in stmt_blocks(s):
                    blk_lines(sub, depth + 1)
                out.append(pad + "end")
            else:
                out.append(pad + st_text(s))
        if blk.result is not UNIT_VAL:
            out.append(pad + "-> " + nm(blk.result))

    def st_head(stmt):
        if isinstance(stmt, While):
            return "while:"
        if isinstance(stmt, ForRange):
            tag = f" /*{sorted(stmt.attrs)}*/" if stmt.attrs else ""
            st = f" step {nm(stmt.step)}" if stmt.step is not None else ""
            return f"for {nm(stmt.var)} in {nm(stmt.start)}..{nm(stmt.stop)}{st}{tag}:"
        if isinstance(stmt, If):
            return f"if {nm(stmt.cond)}:"
        if isinstance(stmt, MapForeach):
            ps = ", ".join(nm(p) for p in stmt.fn.params)
            return f"{nm(stmt.map)}.foreach({ps}):"
        if isinstance(stmt, MultiMapForeachAt):
            ps = ", ".join(nm(p) for p in stmt.fn.params)
            return f"{nm(stmt.map)}.get({nm(stmt.key)}).get.foreach({ps}):"
        if isinstance(stmt, SeqForeach):
            ps = ", ".join(nm(p) for p in stmt.fn.params)
            return f"{nm(stmt.seq)}.foreach({ps}):"
        return st_text(stmt)

    out.append(f"program level={program.level}")
    for decl in program.inputs:
        if isinstance(decl, TableIn):
            out.append(f"input table {nm(decl.sym)} = {decl.relation}"
                       f"[{','.join(decl.attrs)}] layout={decl.layout}"
                       + (f" coded={sorted(decl.coded.items())}" if decl.coded else ""))
        elif isinstance(decl, PartIn):
            cnt = f" counts={nm(decl.counts)}" if decl.counts is not None else ""
            out.append(f"input partition {nm(decl.data)} = {decl.relation}"
                       f" by {decl.key_attr} kind={decl.kind}{cnt}")
        elif isinstance(decl, DateIdxIn):
            out.append(f"input dateindex {nm(decl.data)} = {decl.relation}"
                       f" by {decl.attr} years={decl.min_year}+{decl.n_years}"
                       f" counts={nm(decl.counts)}")
    out.append("setup:")
    blk_lines(program.setup, 1)
    out.append("body:")
    blk_lines(program.body, 1)
    return "\n".join(out) + "\n"


def node_census(program):
    """Count statement and expression node kinds across the whole program."""
    counts = {}

    def bump(k):
        counts[k] = counts.get(k, 0) + 1

    def visit_expr(expr):
        bump(type(expr).__name__)
        for blk in expr_blocks(expr):
            visit_block(blk)

    def visit_block(blk):
        for stmt in blk.stmts:
            bump(type(stmt).__name__)
            if isinstance(stmt, Bind):
                visit_expr(stmt.expr)
            for sub in stmt_blocks(stmt):
                if not (isinstance(stmt, Bind)):
                    visit_block(sub)

    for blk in walk_program_blocks(program):
        visit_block(blk)
    return counts
