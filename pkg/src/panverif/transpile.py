"""Pancake to verification-language transpiler.

Encoding strategy:

* machine words become unbounded integers; every arithmetic step is
  unrolled to three-address form and, under the default `fail` policy,
  immediately followed by a bounds assertion, so any overflow is a
  verification failure. The `wrap` policy instead wraps each step modulo
  2**width and asserts nothing.
* bit masks and logical shifts are rewritten into `%`, `/` and `*` before
  unrolling; whatever survives becomes a call to an uninterpreted `bv_*`
  function plus a bounds assumption, and is listed in the residual report.
* local memory is one word-array; a word access at `a` asserts
  `a % word_bytes == 0` and touches `slot(heap, a / word_bytes)`. Byte
  accesses extract or splice the byte with `/`, `%` and `byte_shift`.
  Permissions come from `local_rw(lo, hi)` / `local_ro(lo, hi)` contract
  atoms that expand to iterated separating conjunctions over slot ranges.
* shared-memory operations never touch the heap array: each one resolves,
  through the declared region table, to a call of `store_<region>` /
  `load_<region>` on the user-supplied device/neighbour model, passing
  (heap, device, address, value).
* break/continue/return lower to auxiliary condition flags: the output
  language has no jumps.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ast, words
from .ast import (
    Annot, Annotation, App, Assign, BaseAddr, Break, BytesInWord, Call, Cmp,
    Composite, Const, Continue, Dec, DecCall, Diagnostic, Expr, ExtCall,
    Field, Function, If, IndexAt, Label, Load, LoadByte, NamedField, Old, Op,
    Program, Raise, Return, Seq, Shape, SharedRegionDecl, Shift, ShMemLoad,
    ShMemStore, Skip, Span, Stmt, Store, StoreByte, Struct, Tick, Var, While,
    WORD, Word, seq_to_list, shape_size,
)
from .validate import infer_shape
from .vdoc import (
    BOOL, INT, RESIDUAL_FUNCS, VAssert, VAssign, VAssume, VBin, VBool, VCall,
    VComment, VCond, VDecl, VerifDoc, VExpr, VField, VFold, VIf, VIndex,
    VInt, VIterAcc, VMethod, VMethodCall, VNot, VOld, VStmt, VUnfold, VVar,
    VWhile, slot_read,
)

_PY_OPS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "mod": "%"}
_CMP_OPS = {"eq": "==", "ne": "!=", "lt": "<", "le": "<=",
            "gt": ">", "ge": ">="}


@dataclass(frozen=True)
class EncodingConfig:
    word_width: int = 64
    overflow: str = "fail"  # "fail" (default) or "wrap"
    rewrite_bitops: bool = True
    ffi_methods: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.word_width not in ast.WORD_WIDTHS:
            raise ValueError("word width must be 32 or 64")
        if self.overflow not in ("fail", "wrap"):
            raise ValueError("overflow policy must be 'fail' or 'wrap'")

    @property
    def word_bytes(self) -> int:
        return self.word_width // 8

    @property
    def modulus(self) -> int:
        return 1 << self.word_width


@dataclass
class DispatchTable:
    """Ordered shared-region declarations; lookup by address interval."""

    entries: tuple[SharedRegionDecl, ...]

    def lookup(self, lo: int, hi: int) -> SharedRegionDecl | None:
        """The unique declaration whose range covers [lo, hi], if any.
        Declared ranges are pairwise disjoint, so containment of lo decides."""
        for d in self.entries:
            if d.lo <= lo and hi <= d.hi:
                return d
        return None


@dataclass(frozen=True)
class ResidualBitop:
    op: str
    span: Span


@dataclass
class TranspileResult:
    doc: VerifDoc
    residuals: list[ResidualBitop]
    diagnostics: list[Diagnostic]

    def residual_json(self) -> str:
        import json
        return json.dumps([
            {"op": r.op, "file": r.span.file, "line": r.span.line,
             "col": r.span.col}
            for r in self.residuals
        ], indent=2)


# ---------------------------------------------------------------------------
# Constant folding and bit-operation rewriting
# ---------------------------------------------------------------------------


def fold_constants(e: Expr, width: int = 64) -> Expr:
    """Reduce constant subtrees modulo 2**width; no algebraic rules beyond
    that, so non-constant structure is preserved exactly."""
    match e:
        case Op(op, args):
            folded = tuple(fold_constants(a, width) for a in args)
            out: Expr = Op(op, folded, e.span)
        case Cmp(cmp, lhs, rhs):
            out = Cmp(cmp, fold_constants(lhs, width),
                      fold_constants(rhs, width), e.span)
        case Shift(kind, value, amount):
            out = Shift(kind, fold_constants(value, width), amount, e.span)
        case BytesInWord():
            return Const(width // 8, e.span)
        case Struct(elements):
            return Struct(tuple(fold_constants(x, width) for x in elements),
                          e.span)
        case Field(index, base):
            return Field(index, fold_constants(base, width), e.span)
        case Load(shape, addr):
            return Load(shape, fold_constants(addr, width), e.span)
        case LoadByte(addr):
            return LoadByte(fold_constants(addr, width), e.span)
        case App(name, args):
            return App(name, tuple(fold_constants(a, width) for a in args),
                       e.span)
        case Old(arg):
            return Old(fold_constants(arg, width), e.span)
        case NamedField(base, name):
            return NamedField(fold_constants(base, width), name, e.span)
        case IndexAt(base, index):
            return IndexAt(fold_constants(base, width),
                           fold_constants(index, width), e.span)
        case _:
            return e
    value = words.const_value(out, width)
    if value is not None:
        return Const(value, e.span)
    return out


def _mask_bits(m: int) -> int | None:
    """k such that m == 2**k - 1, else None."""
    if m < 0 or (m & (m + 1)) != 0:
        return None
    return m.bit_length()


def rewrite_bitop(e: Expr, width: int = 64) -> Expr:
    """Rewrite SMT-unfriendly bit operations into integer arithmetic:
    `x & (2**k - 1)` becomes `x % 2**k`, logical shifts become division and
    multiplication. Unmatched bit operations are left in place for the
    residual report."""
    match e:
        case Op("and", (a, b)) | Op("and", (b, a)) if isinstance(b, Const):
            a = rewrite_bitop(a, width)
            m = b.value
            if m == 0:
                return Const(0, e.span)
            if m == words.mask(width):
                return a
            k = _mask_bits(m)
            if k is not None:
                return Op("mod", (a, Const(1 << k, b.span)), e.span)
            return Op("and", (a, b), e.span)
        case Op(op, args):
            return Op(op, tuple(rewrite_bitop(x, width) for x in args),
                      e.span)
        case Shift(kind, value, amount):
            value = rewrite_bitop(value, width)
            if amount == 0 and kind in ("lsl", "lsr"):
                return value
            if kind == "lsl":
                return Op("mul", (value, Const(1 << amount, e.span)), e.span)
            if kind == "lsr":
                return Op("div", (value, Const(1 << amount, e.span)), e.span)
            return Shift(kind, value, amount, e.span)
        case Cmp(cmp, lhs, rhs):
            return Cmp(cmp, rewrite_bitop(lhs, width),
                       rewrite_bitop(rhs, width), e.span)
        case Struct(elements):
            return Struct(tuple(rewrite_bitop(x, width) for x in elements),
                          e.span)
        case Field(index, base):
            return Field(index, rewrite_bitop(base, width), e.span)
        case Load(shape, addr):
            return Load(shape, rewrite_bitop(addr, width), e.span)
        case LoadByte(addr):
            return LoadByte(rewrite_bitop(addr, width), e.span)
        case App(name, args):
            return App(name, tuple(rewrite_bitop(a, width) for a in args),
                       e.span)
        case Old(arg):
            return Old(rewrite_bitop(arg, width), e.span)
        case NamedField(base, name):
            return NamedField(rewrite_bitop(base, width), name, e.span)
        case IndexAt(base, index):
            return IndexAt(rewrite_bitop(base, width),
                           rewrite_bitop(index, width), e.span)
        case _:
            return e


# ---------------------------------------------------------------------------
# Static address intervals (shared-memory dispatch)
# ---------------------------------------------------------------------------


def value_interval(e: Expr, width: int) -> tuple[int, int]:
    """Conservative inclusive bounds of an expression's value: constants are
    exact, `x % c` and masked values are bounded, anything else is the full
    word range. Used to resolve shared accesses to one declared region."""
    full = (0, words.mask(width))
    match e:
        case Const(value):
            return (value, value)
        case Op("add", args):
            lo = hi = 0
            for a in args:
                alo, ahi = value_interval(a, width)
                lo, hi = lo + alo, hi + ahi
            if hi > words.mask(width):
                return full
            return (lo, hi)
        case Op("sub", (a, b)):
            alo, ahi = value_interval(a, width)
            blo, bhi = value_interval(b, width)
            if alo >= bhi:
                return (alo - bhi, ahi - blo)
            return full
        case Op("mul", (a, b)):
            alo, ahi = value_interval(a, width)
            blo, bhi = value_interval(b, width)
            if ahi * bhi > words.mask(width):
                return full
            return (alo * blo, ahi * bhi)
        case Op("mod", (_, Const(c))) if c > 0:
            return (0, c - 1)
        case Op("and", (_, Const(c))) | Op("and", (Const(c), _)):
            return (0, c)
        case Op("div", (a, Const(c))) if c > 0:
            alo, ahi = value_interval(a, width)
            return (alo // c, ahi // c)
        case _:
            return full


# ---------------------------------------------------------------------------
# Expression and statement encoding
# ---------------------------------------------------------------------------


class _Fresh:
    """Output-name supply.

    `reserved` holds source names that generated temporaries must avoid;
    `used` holds names already emitted, which nothing may reuse.
    """

    def __init__(self, reserved: set[str] | None = None,
                 used: set[str] | None = None):
        self.reserved = set(reserved or ())
        self.used = set(used or ())
        self.counters: dict[str, int] = {}

    def take(self, prefix: str) -> str:
        n = self.counters.get(prefix, 0)
        while True:
            n += 1
            name = f"{prefix}{n}"
            if name not in self.used and name not in self.reserved:
                self.counters[prefix] = n
                self.used.add(name)
                return name

    def claim(self, name: str) -> str:
        """Emit a source name, suffixing only when it is already in use
        (shadowing declarations)."""
        if name not in self.used:
            self.used.add(name)
            return name
        k = 2
        while f"{name}_{k}" in self.used:
            k += 1
        self.used.add(f"{name}_{k}")
        return f"{name}_{k}"


@dataclass
class _LoopCtx:
    brk: str | None = None
    cont: str | None = None


class _Encoder:
    """Shared encoding machinery; `_FnEncoder` adds per-function state."""

    def __init__(self, cfg: EncodingConfig, table: DispatchTable,
                 fresh: _Fresh | None = None):
        self.cfg = cfg
        self.table = table
        self.fresh = fresh or _Fresh(set())
        self.diags: list[Diagnostic] = []
        self.residuals: list[ResidualBitop] = []
        self.var_map: dict[str, list[str]] = {}
        self.shape_env: dict[str, Shape] = {}

    # -- helpers -------------------------------------------------------------

    def error(self, span: Span, code: str, message: str) -> None:
        self.diags.append(Diagnostic(span, code, message))

    def resolve_var(self, name: str) -> list[str]:
        if name in self.var_map:
            return self.var_map[name]
        # Standalone expression encoding treats free names as word atoms.
        return [name]

    def bounds(self, atom: VExpr, bound: int | None = None) -> VExpr:
        hi = VInt(bound if bound is not None else self.cfg.modulus)
        return VBin("&&", VBin("<=", VInt(0), atom), VBin("<", atom, hi))

    def arith_temp(self, rhs: VExpr, span: Span | None,
                   out: list[VStmt]) -> VExpr:
        """Assign an arithmetic result to a fresh temporary under the
        configured overflow policy."""
        t = self.fresh.take("t")
        if self.cfg.overflow == "wrap":
            out.append(VDecl(t, INT, VBin("%", rhs, VInt(self.cfg.modulus)),
                             span))
        else:
            out.append(VDecl(t, INT, rhs, span))
            out.append(VAssert(self.bounds(VVar(t)), span))
        return VVar(t)

    def residual_call(self, op: str, args: list[VExpr], span: Span,
                      out: list[VStmt]) -> VExpr:
        self.residuals.append(ResidualBitop(op, span))
        t = self.fresh.take("t")
        out.append(VDecl(t, INT, VCall(RESIDUAL_FUNCS[op], tuple(args)),
                         span))
        out.append(VAssume(self.bounds(VVar(t)), span))
        return VVar(t)

    def prepare(self, e: Expr) -> Expr:
        e = fold_constants(e, self.cfg.word_width)
        if self.cfg.rewrite_bitops:
            e = rewrite_bitop(e, self.cfg.word_width)
        return e

    def expr_shape(self, e: Expr) -> Shape:
        try:
            return infer_shape(e, self.shape_env)
        except Exception:
            return WORD

    # -- unrolling -----------------------------------------------------------

    def unroll(self, e: Expr) -> tuple[list[VStmt], list[VExpr]]:
        """Three-address statements computing `e`, and one atom per word of
        its shape (composites are flattened depth-first)."""
        out: list[VStmt] = []
        atoms = self._unroll(e, out)
        return out, atoms

    def word(self, e: Expr) -> tuple[list[VStmt], VExpr]:
        stmts, atoms = self.unroll(self.prepare(e))
        if len(atoms) != 1:
            self.error(getattr(e, "span", ast.SYNTHETIC), "shape-mismatch",
                       "a single word is required here")
            return stmts, VInt(0)
        return stmts, atoms[0]

    def _unroll(self, e: Expr, out: list[VStmt]) -> list[VExpr]:
        wb = self.cfg.word_bytes
        match e:
            case Const(value):
                return [VInt(value & words.mask(self.cfg.word_width))]
            case Var(name):
                return [VVar(v) for v in self.resolve_var(name)]
            case Label(name):
                self.error(e.span, "label-value",
                           f"label '{name}' used as a value; labels are not "
                           "encodable")
                return [VInt(0)]
            case Struct(elements):
                atoms: list[VExpr] = []
                for x in elements:
                    atoms.extend(self._unroll(x, out))
                return atoms
            case Field(index, base):
                shape = self.expr_shape(base)
                base_atoms = self._unroll(base, out)
                if not isinstance(shape, Composite) or index >= len(
                        shape.elements):
                    self.error(e.span, "field-index",
                               "field access on a non-composite value")
                    return [VInt(0)]
                offset = sum(shape_size(s) for s in shape.elements[:index])
                count = shape_size(shape.elements[index])
                return base_atoms[offset:offset + count]
            case Op(op, args):
                arg_atoms = [self._word_atom(a, out) for a in args]
                acc = arg_atoms[0]
                for rhs in arg_atoms[1:]:
                    if op in _PY_OPS:
                        acc = self.arith_temp(VBin(_PY_OPS[op], acc, rhs),
                                              e.span, out)
                    else:
                        acc = self.residual_call(op, [acc, rhs], e.span, out)
                return [acc]
            case Cmp(cmp, lhs, rhs):
                a = self._word_atom(lhs, out)
                b = self._word_atom(rhs, out)
                t = self.fresh.take("t")
                out.append(VDecl(t, INT, VCond(VBin(_CMP_OPS[cmp], a, b),
                                               VInt(1), VInt(0)), e.span))
                return [VVar(t)]
            case Shift(kind, value, amount):
                a = self._word_atom(value, out)
                return [self.residual_call(kind, [a, VInt(amount)], e.span,
                                           out)]
            case Load(shape, addr):
                a = self._word_atom(addr, out)
                out.append(VAssert(VBin("==", VBin("%", a, VInt(wb)),
                                        VInt(0)), e.span))
                base = VBin("/", a, VInt(wb))
                atoms = []
                for i in range(shape_size(shape)):
                    idx = base if i == 0 else VBin("+", base, VInt(i))
                    t = self.fresh.take("t")
                    out.append(VDecl(t, INT, slot_read(VVar("heap"), idx),
                                     e.span))
                    out.append(VAssume(self.bounds(VVar(t)), e.span))
                    atoms.append(VVar(t))
                return atoms
            case LoadByte(addr):
                a = self._word_atom(addr, out)
                w = self.fresh.take("t")
                out.append(VDecl(w, INT,
                                 slot_read(VVar("heap"),
                                           VBin("/", a, VInt(wb))), e.span))
                out.append(VAssume(self.bounds(VVar(w)), e.span))
                shifted = self.arith_temp(
                    VBin("/", VVar(w),
                         VCall("byte_shift", (VBin("%", a, VInt(wb)),))),
                    e.span, out)
                byte = self.arith_temp(VBin("%", shifted, VInt(256)),
                                       e.span, out)
                return [byte]
            case BaseAddr():
                # The verification heap is zero-based.
                return [VInt(0)]
            case BytesInWord():
                return [VInt(wb)]
            case _:
                self.error(getattr(e, "span", ast.SYNTHETIC), "ann-in-code",
                           "annotation atom in executable position")
                return [VInt(0)]

    def _word_atom(self, e: Expr, out: list[VStmt]) -> VExpr:
        atoms = self._unroll(e, out)
        if len(atoms) != 1:
            self.error(getattr(e, "span", ast.SYNTHETIC), "shape-mismatch",
                       "operand must be a single word")
            return VInt(0)
        return atoms[0]

    # -- memory accesses ------------------------------------------------------

    def encode_store(self, s: Store) -> list[VStmt]:
        out, a = self.word(s.addr)
        vstmts, atoms = self.unroll(self.prepare(s.value))
        out += vstmts
        wb = self.cfg.word_bytes
        out.append(VAssert(VBin("==", VBin("%", a, VInt(wb)), VInt(0)),
                           s.span))
        base = VBin("/", a, VInt(wb))
        for i, atom in enumerate(atoms):
            idx = base if i == 0 else VBin("+", base, VInt(i))
            out.append(VAssign(slot_read(VVar("heap"), idx), atom, s.span))
        return out

    def encode_store_byte(self, s: StoreByte) -> list[VStmt]:
        out, a = self.word(s.addr)
        vstmts, v = self.word(s.value)
        out += vstmts
        wb = self.cfg.word_bytes
        word = self.fresh.take("t")
        idx = VBin("/", a, VInt(wb))
        out.append(VDecl(word, INT, slot_read(VVar("heap"), idx), s.span))
        out.append(VAssume(self.bounds(VVar(word)), s.span))
        bs = self.fresh.take("t")
        out.append(VDecl(bs, INT,
                         VCall("byte_shift", (VBin("%", a, VInt(wb)),)),
                         s.span))
        shifted = self.arith_temp(VBin("/", VVar(word), VVar(bs)), s.span,
                                  out)
        old_byte = self.arith_temp(VBin("%", shifted, VInt(256)), s.span,
                                   out)
        removed = self.arith_temp(VBin("*", old_byte, VVar(bs)), s.span, out)
        cleared = self.arith_temp(VBin("-", VVar(word), removed), s.span,
                                  out)
        new_byte = self.arith_temp(VBin("%", v, VInt(256)), s.span, out)
        added = self.arith_temp(VBin("*", new_byte, VVar(bs)), s.span, out)
        merged = self.arith_temp(VBin("+", cleared, added), s.span, out)
        out.append(VAssign(slot_read(VVar("heap"), idx), merged, s.span))
        return out

    # -- shared-memory dispatch ----------------------------------------------

    def _dispatch(self, addr: Expr, span: Span,
                  opsize: int, is_store: bool) -> SharedRegionDecl | None:
        folded = fold_constants(addr, self.cfg.word_width)
        lo, hi = value_interval(folded, self.cfg.word_width)
        decl = self.table.lookup(lo, hi)
        if decl is None:
            self.error(span, "undeclared-shared-region",
                       "shared access does not resolve to a declared region")
            return None
        if decl.width != opsize:
            self.error(span, "shared-width-mismatch",
                       f"{opsize}-bit access to u{decl.width} region "
                       f"'{decl.name}'")
            return None
        if is_store and decl.access == "ro":
            self.error(span, "shared-mode-violation",
                       f"store to read-only region '{decl.name}'")
            return None
        if not is_store and decl.access == "wo":
            self.error(span, "shared-mode-violation",
                       f"load from write-only region '{decl.name}'")
            return None
        return decl

    def encode_shmem_store(self, s: ShMemStore) -> list[VStmt]:
        out, a = self.word(s.addr)
        vstmts, v = self.word(s.value)
        out += vstmts
        decl = self._dispatch(s.addr, s.span, s.opsize, is_store=True)
        if decl is None:
            return out
        if s.opsize < self.cfg.word_width:
            if isinstance(v, VInt):
                v = VInt(v.value % (1 << s.opsize))
            else:
                t = self.fresh.take("t")
                out.append(VDecl(t, INT, VBin("%", v, VInt(1 << s.opsize)),
                                 s.span))
                if self.cfg.overflow == "fail":
                    out.append(VAssert(self.bounds(VVar(t)), s.span))
                v = VVar(t)
        out.append(VMethodCall((), decl.store_method,
                               (VVar("heap"), VVar("device"), a, v), s.span))
        return out

    def encode_shmem_load(self, s: ShMemLoad) -> list[VStmt]:
        out, a = self.word(s.addr)
        decl = self._dispatch(s.addr, s.span, s.opsize, is_store=False)
        if decl is None:
            return out
        if s.name in self.var_map:
            targets = self.var_map[s.name]
            if len(targets) != 1:
                self.error(s.span, "shape-mismatch",
                           f"shared load target '{s.name}' is not a word")
                return out
            target = targets[0]
        else:
            # A shared load may introduce its target for the rest of the
            # function body.
            target = self.fresh.claim(s.name)
            self.var_map[s.name] = [target]
            self.shape_env[s.name] = WORD
            out.append(VDecl(target, INT, None, s.span))
        out.append(VMethodCall((target,), decl.load_method,
                               (VVar("heap"), VVar("device"), a), s.span))
        out.append(VAssume(self.bounds(VVar(target), 1 << s.opsize), s.span))
        return out


def _collect_assigned(s: Stmt, acc: set[str]) -> None:
    match s:
        case Assign(name, _):
            acc.add(name)
        case Call(ret, _, _) if ret is not None:
            acc.add(ret)
        case ShMemLoad(_, name, _):
            acc.add(name)
        case Seq(a, b):
            _collect_assigned(a, acc)
            _collect_assigned(b, acc)
        case If(_, t, e):
            _collect_assigned(t, acc)
            _collect_assigned(e, acc)
        case While(_, b):
            _collect_assigned(b, acc)
        case Dec(_, _, b) | DecCall(_, _, _, _, b):
            _collect_assigned(b, acc)
        case _:
            pass


def _collect_names(s: Stmt, acc: set[str]) -> None:
    match s:
        case Dec(name, _, b) | DecCall(name, _, _, _, b):
            acc.add(name)
            _collect_names(b, acc)
        case Assign(name, _):
            acc.add(name)
        case ShMemLoad(_, name, _):
            acc.add(name)
        case Call(ret, _, _) if ret is not None:
            acc.add(ret)
        case Seq(a, b):
            _collect_names(a, acc)
            _collect_names(b, acc)
        case If(_, t, e):
            _collect_names(t, acc)
            _collect_names(e, acc)
        case While(_, b):
            _collect_names(b, acc)
        case _:
            pass


def _may_break(s: Stmt) -> bool:
    match s:
        case Break():
            return True
        case Seq(a, b):
            return _may_break(a) or _may_break(b)
        case If(_, t, e):
            return _may_break(t) or _may_break(e)
        case Dec(_, _, b) | DecCall(_, _, _, _, b):
            return _may_break(b)
        case _:
            return False


def _may_continue(s: Stmt) -> bool:
    match s:
        case Continue():
            return True
        case Seq(a, b):
            return _may_continue(a) or _may_continue(b)
        case If(_, t, e):
            return _may_continue(t) or _may_continue(e)
        case Dec(_, _, b) | DecCall(_, _, _, _, b):
            return _may_continue(b)
        case _:
            return False


def _may_return(s: Stmt) -> bool:
    match s:
        case Return():
            return True
        case Seq(a, b):
            return _may_return(a) or _may_return(b)
        case If(_, t, e):
            return _may_return(t) or _may_return(e)
        case While(_, b):
            return _may_return(b)
        case Dec(_, _, b) | DecCall(_, _, _, _, b):
            return _may_return(b)
        case _:
            return False


def _has_nontail_return(stmts: list[Stmt]) -> bool:
    if not stmts:
        return False
    head, rest = stmts[0], stmts[1:]
    if isinstance(head, (Dec, DecCall)):
        return _has_nontail_return(seq_to_list(head.body) + rest)
    if rest:
        if _may_return(head):
            return True
        return _has_nontail_return(rest)
    match head:
        case Return():
            return False
        case If(_, t, e):
            return (_has_nontail_return(seq_to_list(t))
                    or _has_nontail_return(seq_to_list(e)))
        case _:
            return _may_return(head)


def _return_shapes(f: Function, program: Program) -> list[Shape]:
    shapes: list[Shape] = []

    def walk(s: Stmt, env: dict[str, Shape]) -> dict[str, Shape]:
        match s:
            case Return(value):
                try:
                    shapes.append(infer_shape(value, env))
                except Exception:
                    shapes.append(WORD)
            case Dec(name, value, body):
                try:
                    sh = infer_shape(value, env)
                except Exception:
                    sh = WORD
                walk(body, {**env, name: sh})
            case DecCall(name, shape, _, _, body):
                walk(body, {**env, name: shape})
            case ShMemLoad(_, name, _):
                return {**env, name: WORD}
            case Seq(a, b):
                env = walk(a, env)
                env = walk(b, env)
            case If(_, t, e):
                walk(t, env)
                walk(e, env)
            case While(_, b):
                walk(b, env)
            case _:
                pass
        return env

    walk(f.body, {name: shape for name, shape in f.params})
    return shapes


class _FnEncoder(_Encoder):
    def __init__(self, program: Program, cfg: EncodingConfig,
                 table: DispatchTable, return_shapes: dict[str, Shape]):
        super().__init__(cfg, table)
        self.program = program
        self.return_shapes = return_shapes
        self.ret_flag: str | None = None
        self.ret_vars: list[str] = []

    def resolve_var(self, name: str) -> list[str]:
        if name in self.var_map:
            return self.var_map[name]
        # Unknown names inside annotations pass through to the backend.
        return [name]

    # -- annotation encoding --------------------------------------------------

    def ann_bool(self, e: Expr) -> VExpr:
        e = self.prepare(e)
        match e:
            case App(("local_rw" | "local_ro") as which, args):
                if len(args) != 2:
                    self.error(e.span, "region-atom",
                               f"{which} takes (lo, hi) byte bounds")
                    return VBool(True)
                lo = self.ann_int(args[0])
                hi = self.ann_int(args[1])
                wb = VInt(self.cfg.word_bytes)
                lo_slot = (VInt(lo.value // self.cfg.word_bytes)
                           if isinstance(lo, VInt) else VBin("/", lo, wb))
                hi_slot = (VInt(hi.value // self.cfg.word_bytes)
                           if isinstance(hi, VInt) else VBin("/", hi, wb))
                return VIterAcc(lo_slot, hi_slot, which == "local_rw")
            case App():
                return self.ann_app(e)
            case Old(arg):
                return VOld(self.ann_bool(arg))
            case Cmp(cmp, lhs, rhs):
                return VBin(_CMP_OPS[cmp], self.ann_int(lhs),
                            self.ann_int(rhs))
            case Const(value):
                return VBool(value != 0)
            case _:
                return VBin("!=", self.ann_int(e), VInt(0))

    def ann_app(self, e: App) -> VExpr:
        # Nullary atoms name() stand for device-state predicates and
        # receive the device handle.
        if not e.args:
            return VCall(e.name, (VVar("device"),))
        return VCall(e.name, tuple(self.ann_int(a) for a in e.args))

    def ann_int(self, e: Expr) -> VExpr:
        atoms = self.ann_atoms(e)
        if len(atoms) != 1:
            self.error(getattr(e, "span", ast.SYNTHETIC), "shape-mismatch",
                       "annotation expression must be a single word here")
            return VInt(0)
        return atoms[0]

    def ann_atoms(self, e: Expr) -> list[VExpr]:
        wb = self.cfg.word_bytes
        match e:
            case Const(value):
                return [VInt(value)]
            case Var(name):
                return [VVar(v) for v in self.resolve_var(name)]
            case Struct(elements):
                out: list[VExpr] = []
                for x in elements:
                    out.extend(self.ann_atoms(x))
                return out
            case Field(index, base):
                shape = self.expr_shape(base)
                base_atoms = self.ann_atoms(base)
                if isinstance(shape, Composite) and index < len(
                        shape.elements):
                    offset = sum(shape_size(s)
                                 for s in shape.elements[:index])
                    return base_atoms[offset:
                                      offset + shape_size(
                                          shape.elements[index])]
                if len(base_atoms) == 1:
                    # Backend-resolved: device.something
                    return [VIndex(base_atoms[0], VInt(index))]
                self.error(e.span, "field-index", "bad field in annotation")
                return [VInt(0)]
            case Op(op, args):
                vals = [self.ann_int(a) for a in args]
                acc = vals[0]
                for rhs in vals[1:]:
                    if op in _PY_OPS:
                        acc = VBin(_PY_OPS[op], acc, rhs)
                    else:
                        self.residuals.append(ResidualBitop(op, e.span))
                        acc = VCall(RESIDUAL_FUNCS[op], (acc, rhs))
                return [acc]
            case Cmp(cmp, lhs, rhs):
                return [VCond(VBin(_CMP_OPS[cmp], self.ann_int(lhs),
                                   self.ann_int(rhs)), VInt(1), VInt(0))]
            case Shift(kind, value, amount):
                self.residuals.append(ResidualBitop(kind, e.span))
                return [VCall(RESIDUAL_FUNCS[kind],
                              (self.ann_int(value), VInt(amount)))]
            case Load(shape, addr) if shape == WORD:
                a = self.ann_int(addr)
                return [slot_read(VVar("heap"), VBin("/", a, VInt(wb)))]
            case LoadByte(addr):
                a = self.ann_int(addr)
                w = slot_read(VVar("heap"), VBin("/", a, VInt(wb)))
                return [VBin("%", VBin("/", w,
                                       VCall("byte_shift",
                                             (VBin("%", a, VInt(wb)),))),
                             VInt(256))]
            case BaseAddr():
                return [VInt(0)]
            case BytesInWord():
                return [VInt(wb)]
            case App():
                return [self.ann_app(e)]
            case Old(arg):
                return [VOld(self.ann_int(arg))]
            case NamedField(base, name):
                return [VField(self.ann_int(base), name)]
            case IndexAt(base, index):
                return [VIndex(self.ann_int(base), self.ann_int(index))]
            case _:
                self.error(getattr(e, "span", ast.SYNTHETIC), "annotation",
                           "unsupported annotation expression")
                return [VInt(0)]

    # -- statement lowering ----------------------------------------------------

    def abrupt_flags(self, s: Stmt, loop: _LoopCtx) -> list[str]:
        flags = []
        if loop.brk and _may_break(s):
            flags.append(loop.brk)
        if loop.cont and _may_continue(s):
            flags.append(loop.cont)
        if self.ret_flag and _may_return(s):
            flags.append(self.ret_flag)
        return flags

    def lower_block(self, s: Stmt, loop: _LoopCtx) -> list[VStmt]:
        return self.lower_list(seq_to_list(s), loop)

    def lower_list(self, stmts: list[Stmt], loop: _LoopCtx) -> list[VStmt]:
        if not stmts:
            return []
        head, rest = stmts[0], stmts[1:]
        if isinstance(head, (Dec, DecCall)):
            return self.lower_scoped(head, rest, loop)
        out = self.lower_stmt(head, loop)
        if not rest:
            return out
        flags = self.abrupt_flags(head, loop)
        tail = self.lower_list(rest, loop)
        if flags and tail:
            cond: VExpr = VNot(VVar(flags[0]))
            for f in flags[1:]:
                cond = VBin("&&", cond, VNot(VVar(f)))
            return out + [VIf(cond, tuple(tail), (), head.span)]
        return out + tail

    def lower_scoped(self, head: Dec | DecCall, rest: list[Stmt],
                     loop: _LoopCtx) -> list[VStmt]:
        out: list[VStmt] = []
        if isinstance(head, Dec):
            shape = self.expr_shape(head.value)
            stmts, atoms = self.unroll(self.prepare(head.value))
            out += stmts
            names = self.bind(head.name, shape)
            for name, atom in zip(names, atoms):
                out.append(VDecl(name, INT, atom, head.span))
        else:
            shape = head.shape
            names = self.bind(head.name, shape)
            for name in names:
                out.append(VDecl(name, INT, None, head.span))
            out += self.lower_call(head.fn, head.args, names, shape,
                                   head.span)
        saved_map = dict(self.var_map)
        saved_env = dict(self.shape_env)
        self.var_map[head.name] = names
        self.shape_env[head.name] = shape
        try:
            body = self.lower_list(seq_to_list(head.body) + rest, loop)
        finally:
            self.var_map = saved_map
            self.shape_env = saved_env
        return out + body

    def bind(self, name: str, shape: Shape) -> list[str]:
        if shape_size(shape) == 1:
            return [self.fresh.claim(name)]
        return [self.fresh.claim(f"{name}_{i}")
                for i in range(shape_size(shape))]

    def lower_call(self, fn: Expr, args: tuple[Expr, ...],
                   targets: list[str], want_shape: Shape | None,
                   span: Span) -> list[VStmt]:
        if not isinstance(fn, Label):
            self.error(span, "indirect-call",
                       "verified functions may only call known functions "
                       "directly")
            return []
        callee = self.program.function(fn.name)
        if callee is None:
            self.error(span, "unknown-function",
                       f"call to unknown function '{fn.name}'")
            return []
        out: list[VStmt] = []
        flat_args: list[VExpr] = []
        if len(args) != len(callee.params):
            self.error(span, "call-arity",
                       f"'{fn.name}' takes {len(callee.params)} arguments")
            return []
        for a, (pname, pshape) in zip(args, callee.params):
            stmts, atoms = self.unroll(self.prepare(a))
            out += stmts
            if len(atoms) != shape_size(pshape):
                self.error(span, "shape-mismatch",
                           f"argument '{pname}' of '{fn.name}' has the "
                           "wrong shape")
                return out
            flat_args.extend(atoms)
        ret_shape = self.return_shapes.get(fn.name, WORD)
        if want_shape is not None and want_shape != ret_shape:
            self.error(span, "shape-mismatch",
                       f"'{fn.name}' returns a different shape than "
                       "declared")
        if len(targets) != shape_size(ret_shape):
            # Result ignored or arity mismatch: absorb into scratch vars.
            targets = [self.fresh.take("junk")
                       for _ in range(shape_size(ret_shape))]
            for t in targets:
                out.append(VDecl(t, INT, None, span))
        out.append(VMethodCall(tuple(targets), fn.name,
                               (VVar("heap"), VVar("device"),
                                *flat_args), span))
        return out

    def lower_stmt(self, s: Stmt, loop: _LoopCtx) -> list[VStmt]:
        match s:
            case Skip() | Tick():
                return []
            case Annot(annotation):
                return self.lower_annot(annotation, s.span)
            case Assign(name, value):
                return self.lower_assign(name, value, s.span)
            case Store():
                return self.encode_store(s)
            case StoreByte():
                return self.encode_store_byte(s)
            case If(cond, then, els):
                stmts, atom = self.word(cond)
                then_v = self.lower_block(then, loop)
                els_v = self.lower_block(els, loop)
                return stmts + [VIf(VBin("!=", atom, VInt(0)),
                                    tuple(then_v), tuple(els_v), s.span)]
            case While():
                return self.lower_while(s, loop)
            case Break():
                assert loop.brk is not None
                return [VAssign(VVar(loop.brk), VBool(True), s.span)]
            case Continue():
                assert loop.cont is not None
                return [VAssign(VVar(loop.cont), VBool(True), s.span)]
            case Return(value):
                stmts, atoms = self.unroll(self.prepare(value))
                if len(atoms) != len(self.ret_vars):
                    self.error(s.span, "shape-mismatch",
                               "return value shape differs between returns")
                    return stmts
                for name, atom in zip(self.ret_vars, atoms):
                    stmts.append(VAssign(VVar(name), atom, s.span))
                if self.ret_flag:
                    stmts.append(VAssign(VVar(self.ret_flag), VBool(True),
                                         s.span))
                return stmts
            case Call(ret, fn, args):
                targets: list[str] = []
                want: Shape | None = None
                if ret is not None:
                    if ret not in self.var_map:
                        self.error(s.span, "unbound-var",
                                   f"call result assigned to unbound "
                                   f"'{ret}'")
                        return []
                    targets = self.var_map[ret]
                    want = self.shape_env.get(ret, WORD)
                return self.lower_call(fn, args, targets, want, s.span)
            case Raise(exn, _):
                self.error(s.span, "raise-unsupported",
                           f"raise '{exn}' cannot appear in verified "
                           "functions")
                return []
            case ShMemStore():
                return self.encode_shmem_store(s)
            case ShMemLoad():
                return self.encode_shmem_load(s)
            case ExtCall(name, a, b, c, d):
                if name not in self.cfg.ffi_methods:
                    self.error(s.span, "undeclared-ffi",
                               f"foreign call '@{name}' has no declared "
                               f"model method 'ffi_{name}'")
                    return []
                out: list[VStmt] = []
                atoms = []
                for x in (a, b, c, d):
                    stmts, atom = self.word(x)
                    out += stmts
                    atoms.append(atom)
                out.append(VMethodCall((), f"ffi_{name}",
                                       (VVar("heap"), VVar("device"),
                                        *atoms), s.span))
                return out
            case _:
                self.error(s.span, "bad-stmt", "unsupported statement")
                return []

    def lower_assign(self, name: str, value: Expr, span: Span) -> list[VStmt]:
        if name not in self.var_map:
            self.error(span, "unbound-var",
                       f"assignment to unbound variable '{name}'")
            return []
        targets = self.var_map[name]
        out, atoms = self.unroll(self.prepare(value))
        if len(atoms) != len(targets):
            self.error(span, "shape-mismatch",
                       f"assignment to '{name}' changes its shape")
            return out
        if len(targets) == 1:
            out.append(VAssign(VVar(targets[0]), atoms[0], span))
            return out
        # Stage multi-word assignments so overlapping reads see old values.
        staged = []
        for atom in atoms:
            t = self.fresh.take("t")
            out.append(VDecl(t, INT, atom, span))
            staged.append(t)
        for target, t in zip(targets, staged):
            out.append(VAssign(VVar(target), VVar(t), span))
        return out

    def lower_annot(self, annotation: Annotation, span: Span) -> list[VStmt]:
        match annotation.kind:
            case "assert":
                return [VAssert(self.ann_bool(annotation.payload), span,
                                origin="user")]
            case "fold":
                return [VFold(self.ann_bool(annotation.payload), span)]
            case "unfold":
                return [VUnfold(self.ann_bool(annotation.payload), span)]
            case "invariant":
                # Loop lowering consumes leading invariants; anything left
                # over here is misplaced and validate reports it.
                return []
            case _:
                return []

    def lower_while(self, s: While, loop: _LoopCtx) -> list[VStmt]:
        body_stmts = seq_to_list(s.body)
        invariants: list[tuple[VExpr, Span | None]] = []
        while body_stmts and isinstance(body_stmts[0], Annot) \
                and body_stmts[0].annotation.kind == "invariant":
            annot = body_stmts[0].annotation
            invariants.append((self.ann_bool(annot.payload), annot.span))
            body_stmts = body_stmts[1:]
        rest = ast.list_to_seq(body_stmts)
        brk = self.fresh.take("brk") if _may_break(rest) else None
        cont = self.fresh.take("cont") if _may_continue(rest) else None
        inner = _LoopCtx(brk, cont)

        out: list[VStmt] = []
        if brk:
            out.append(VDecl(brk, BOOL, VBool(False), s.span))
        if cont:
            out.append(VDecl(cont, BOOL, VBool(False), s.span))
        cond_stmts, atom = self.word(s.cond)
        out += cond_stmts

        cond: VExpr = VBin("!=", atom, VInt(0))
        if self.ret_flag and _may_return(rest):
            cond = VBin("&&", VNot(VVar(self.ret_flag)), cond)
        if brk:
            cond = VBin("&&", VNot(VVar(brk)), cond)

        body_v = self.lower_list(body_stmts, inner)
        recompute: list[VStmt] = []
        if cont:
            recompute.append(VAssign(VVar(cont), VBool(False), s.span))
        recompute += _redecl_to_assign(cond_stmts)
        exit_flags = [f for f in (brk, self.ret_flag if _may_return(rest)
                                  else None) if f]
        if recompute:
            if exit_flags:
                guard: VExpr = VNot(VVar(exit_flags[0]))
                for f in exit_flags[1:]:
                    guard = VBin("&&", guard, VNot(VVar(f)))
                body_v.append(VIf(guard, tuple(recompute), (), s.span))
            else:
                body_v += recompute
        out.append(VWhile(cond, tuple(invariants), tuple(body_v), s.span))
        return out


def _redecl_to_assign(stmts: list[VStmt]) -> list[VStmt]:
    out: list[VStmt] = []
    for s in stmts:
        if isinstance(s, VDecl) and s.init is not None:
            out.append(VAssign(VVar(s.name), s.init, s.span))
        else:
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def unroll_expr(e: Expr, cfg: EncodingConfig,
                fresh: _Fresh | None = None) -> tuple[list[VStmt], VExpr]:
    """Three-address statements computing a word-shaped expression, plus the
    atom holding its value. Free variables map to themselves."""
    enc = _Encoder(cfg, DispatchTable(()), fresh)
    stmts, atom = enc.word(e)
    if enc.diags:
        raise ValueError(enc.diags[0].message)
    return stmts, atom


def encode_mem_access(s: Stmt, cfg: EncodingConfig
                      ) -> tuple[list[VStmt], list[Diagnostic]]:
    """Heap encoding of a local-memory statement (Store/StoreByte), or of a
    Load wrapped in a statement via unroll."""
    enc = _Encoder(cfg, DispatchTable(()))
    match s:
        case Store():
            out = enc.encode_store(s)
        case StoreByte():
            out = enc.encode_store_byte(s)
        case _:
            raise ValueError("encode_mem_access takes Store or StoreByte")
    return out, enc.diags


def dispatch_shared(s: Stmt, table: DispatchTable, cfg: EncodingConfig
                    ) -> tuple[list[VStmt], list[Diagnostic]]:
    """Model-method call encoding of one shared-memory operation."""
    enc = _Encoder(cfg, table)
    match s:
        case ShMemStore():
            out = enc.encode_shmem_store(s)
        case ShMemLoad():
            out = enc.encode_shmem_load(s)
        case _:
            raise ValueError("dispatch_shared takes ShMemStore or ShMemLoad")
    return out, enc.diags


def transpile_function(f: Function, p: Program, cfg: EncodingConfig,
                       table: DispatchTable,
                       return_shapes: dict[str, Shape] | None = None
                       ) -> tuple[VMethod | None, list[Diagnostic],
                                  list[ResidualBitop]]:
    if return_shapes is None:
        return_shapes = _program_return_shapes(p)
    enc = _FnEncoder(p, cfg, table, return_shapes)

    reserved: set[str] = set()
    _collect_names(f.body, reserved)
    reserved.update(name for name, _ in f.params)
    ret_shape = return_shapes.get(f.name, WORD)
    k = shape_size(ret_shape)
    ret_names = ["retval"] if k == 1 else [f"retval_{i}" for i in range(k)]
    enc.fresh = _Fresh(reserved, {"heap", "device", "qi", *ret_names})

    assigned: set[str] = set()
    _collect_assigned(f.body, assigned)

    # Parameters: flattened words; mutated ones get body-local copies so the
    # signature parameter keeps its (immutable) argument value.
    params: list[tuple[str, str]] = [("heap", "IArray"), ("device", "Ref")]
    param_map: dict[str, list[str]] = {}
    copies: list[VStmt] = []
    for name, shape in f.params:
        n_words = shape_size(shape)
        base_names = [enc.fresh.claim(name)] if n_words == 1 else \
            [enc.fresh.claim(f"{name}_{i}") for i in range(n_words)]
        if name in assigned:
            sig_names = [enc.fresh.claim(f"{n}_in") for n in base_names]
            for sig, local in zip(sig_names, base_names):
                copies.append(VDecl(local, INT, VVar(sig), None))
        else:
            sig_names = base_names
        params.extend((n, INT) for n in sig_names)
        param_map[name] = sig_names
        enc.var_map[name] = base_names
        enc.shape_env[name] = shape

    enc.ret_vars = ret_names
    if _has_nontail_return(seq_to_list(f.body)):
        enc.ret_flag = enc.fresh.take("ret")

    # Contracts see parameters (pre-state), not body copies.
    body_map = dict(enc.var_map)
    enc.var_map = dict(param_map)
    requires: list[tuple[VExpr, Span | None]] = []
    ensures: list[tuple[VExpr, Span | None]] = []
    for annotation in f.contract:
        encoded = enc.ann_bool(annotation.payload)
        if annotation.kind == "requires":
            requires.append((encoded, annotation.span))
        elif annotation.kind == "ensures":
            ensures.append((encoded, annotation.span))
    enc.var_map = body_map

    body: list[VStmt] = []
    body += copies
    for name in ret_names:
        body.append(VAssign(VVar(name), VInt(0), None))
    if enc.ret_flag:
        body.append(VDecl(enc.ret_flag, BOOL, VBool(False), None))
    body += enc.lower_block(f.body, _LoopCtx())

    method = VMethod(f.name, tuple(params),
                     tuple((n, INT) for n in ret_names),
                     tuple(requires), tuple(ensures), tuple(body), f.span)
    if enc.diags:
        return None, enc.diags, enc.residuals
    return method, [], enc.residuals


def _program_return_shapes(p: Program) -> dict[str, Shape]:
    out: dict[str, Shape] = {}
    for f in p.functions:
        shapes = _return_shapes(f, p)
        out[f.name] = shapes[0] if shapes else WORD
    return out


def transpile_program(p: Program, cfg: EncodingConfig,
                      device_model: str | None = None,
                      neighbour_model: str | None = None,
                      source_name: str = "<program>") -> TranspileResult:
    """Transpile every function; functions with diagnostics are omitted from
    the document and reported."""
    table = DispatchTable(p.shared_decls)
    doc = VerifDoc(source_name, cfg.word_width, device_model,
                   neighbour_model)
    diagnostics: list[Diagnostic] = []
    residuals: list[ResidualBitop] = []
    return_shapes = _program_return_shapes(p)
    for f in p.functions:
        return_list = _return_shapes(f, p)
        if len({shape_size(s) for s in return_list}) > 1:
            diagnostics.append(Diagnostic(
                f.span, "return-shape",
                f"function '{f.name}' returns values of different shapes"))
            continue
        method, diags, res = transpile_function(f, p, cfg, table,
                                                return_shapes)
        residuals.extend(res)
        if method is None:
            diagnostics.extend(diags)
        else:
            doc.methods.append(method)
    return TranspileResult(doc, residuals, diagnostics)
