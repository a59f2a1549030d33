"""Pancake abstract syntax.

Expressions, statements, shapes, annotations, shared-region declarations and
whole programs, plus the JSON dump used by the `parse --json` tool path.

All nodes are frozen dataclasses. Every node carries a source span; spans
compare as equal everywhere (``compare=False``) so structural equality of two
ASTs ignores where they were parsed from. Hand-built ASTs in tests simply
omit the span and get a synthetic one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Union

WORD_WIDTHS = (32, 64)

BINOPS = ("add", "sub", "mul", "div", "mod", "and", "or", "xor")
ASSOCIATIVE_OPS = ("add", "and", "or", "xor")
CMPS = ("eq", "ne", "lt", "le", "gt", "ge")
SHIFTS = ("lsl", "lsr", "asr")
OPSIZES = (8, 16, 32, 64)

ANNOTATION_KINDS = (
    "requires", "ensures", "invariant", "assert", "fold", "unfold", "shared",
)
ACCESS_MODES = ("ro", "wo", "rw")


@dataclass(frozen=True)
class Span:
    """Source location: file, 1-based line, 1-based column range on that line."""

    file: str
    line: int
    col: int
    end_col: int

    def __repr__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


SYNTHETIC = Span("<synthetic>", 0, 0, 0)


def _span_field() -> Span:
    return field(default=SYNTHETIC, compare=False)  # type: ignore[return-value]


@dataclass(frozen=True)
class Diagnostic:
    """A problem found in a program, with a stable machine-readable code."""

    span: Span
    code: str
    message: str

    def render(self) -> str:
        return f"{self.span.file}:{self.span.line}:{self.span.col}: error[{self.code}]: {self.message}"


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Shape:
    """Word-count structure of a value: a single word or a tree of words."""


@dataclass(frozen=True)
class Word(Shape):
    pass


@dataclass(frozen=True)
class Composite(Shape):
    elements: tuple[Shape, ...]


WORD = Word()


def shape_size(shape: Shape) -> int:
    """Total machine words occupied by a value of this shape."""
    if isinstance(shape, Word):
        return 1
    assert isinstance(shape, Composite)
    return sum(shape_size(s) for s in shape.elements)


def words_shape(n: int) -> Shape:
    """Shape denoted by a bare numeral: 1 is a word, n > 1 a flat composite."""
    if n == 1:
        return WORD
    return Composite(tuple(WORD for _ in range(n)))


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Const(Expr):
    value: int
    span: Span = _span_field()


@dataclass(frozen=True)
class Var(Expr):
    name: str
    span: Span = _span_field()


@dataclass(frozen=True)
class Label(Expr):
    """Code label: the value of a function name."""

    name: str
    span: Span = _span_field()


@dataclass(frozen=True)
class Struct(Expr):
    elements: tuple[Expr, ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class Field(Expr):
    index: int
    base: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class Load(Expr):
    """Multi-word load from local memory at a word-aligned address."""

    shape: Shape
    addr: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class LoadByte(Expr):
    addr: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class Op(Expr):
    """N-ary for add/and/or/xor, exactly binary for sub/mul/div/mod."""

    op: str
    args: tuple[Expr, ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class Cmp(Expr):
    """Unsigned comparison yielding word 1 or 0."""

    cmp: str
    lhs: Expr
    rhs: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class Shift(Expr):
    kind: str
    value: Expr
    amount: int
    span: Span = _span_field()


@dataclass(frozen=True)
class BaseAddr(Expr):
    span: Span = _span_field()


@dataclass(frozen=True)
class BytesInWord(Expr):
    span: Span = _span_field()


# ---------------------------------------------------------------------------
# Annotation expressions
#
# Annotation payloads reuse the expression nodes above and extend them with
# atoms that pass through to the output verification language unresolved.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class App(Expr):
    """Opaque predicate or function application, e.g. valid_device()."""

    name: str
    args: tuple[Expr, ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class Old(Expr):
    """Pre-state value of an expression in an ensures clause."""

    arg: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class NamedField(Expr):
    """Backend-resolved field access, e.g. device.hw_ring_tx."""

    base: Expr
    name: str
    span: Span = _span_field()


@dataclass(frozen=True)
class IndexAt(Expr):
    """Backend-resolved indexing, e.g. hw_ring_tx[tail]."""

    base: Expr
    index: Expr
    span: Span = _span_field()


AnnExpr = Expr


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stmt:
    pass


@dataclass(frozen=True)
class Skip(Stmt):
    span: Span = _span_field()


@dataclass(frozen=True)
class Dec(Stmt):
    """Declare a local, scoping over the rest of the enclosing block."""

    name: str
    value: Expr
    body: Stmt
    span: Span = _span_field()


@dataclass(frozen=True)
class Assign(Stmt):
    name: str
    value: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class Store(Stmt):
    addr: Expr
    value: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class StoreByte(Stmt):
    addr: Expr
    value: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class Seq(Stmt):
    first: Stmt
    second: Stmt
    span: Span = _span_field()


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then: Stmt
    els: Stmt
    span: Span = _span_field()


@dataclass(frozen=True)
class While(Stmt):
    cond: Expr
    body: Stmt
    span: Span = _span_field()


@dataclass(frozen=True)
class Break(Stmt):
    span: Span = _span_field()


@dataclass(frozen=True)
class Continue(Stmt):
    span: Span = _span_field()


@dataclass(frozen=True)
class Call(Stmt):
    """Function call; ret is the variable assigned the result, or None to
    ignore it."""

    ret: str | None
    fn: Expr
    args: tuple[Expr, ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class Raise(Stmt):
    exn: str
    value: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class Return(Stmt):
    value: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class Tick(Stmt):
    span: Span = _span_field()


@dataclass(frozen=True)
class ShMemStore(Stmt):
    """Observable store of `opsize` bits to shared memory."""

    opsize: int
    addr: Expr
    value: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class ShMemLoad(Stmt):
    """Observable load of `opsize` bits from shared memory into a local."""

    opsize: int
    name: str
    addr: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class DecCall(Stmt):
    """Declare a local holding a call result of declared shape, scoping over
    the rest of the enclosing block."""

    name: str
    shape: Shape
    fn: Expr
    args: tuple[Expr, ...]
    body: Stmt
    span: Span = _span_field()


@dataclass(frozen=True)
class ExtCall(Stmt):
    """Foreign call: (in-ptr, in-len, out-ptr, out-len) into local memory."""

    name: str
    in_ptr: Expr
    in_len: Expr
    out_ptr: Expr
    out_len: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class SharedRegionDecl:
    """Annotated shared address range dispatching to named model methods.

    The range is inclusive; the single-address form has lo == hi. lo/hi are
    kept both as the (constant) expressions written in the source and as the
    folded addresses used for dispatch and disjointness checks.
    """

    name: str
    access: str
    width: int
    lo_expr: Expr
    hi_expr: Expr
    lo: int
    hi: int
    span: Span = _span_field()

    @property
    def store_method(self) -> str:
        return f"store_{self.name}"

    @property
    def load_method(self) -> str:
        return f"load_{self.name}"

    def contains(self, addr: int) -> bool:
        return self.lo <= addr <= self.hi


@dataclass(frozen=True)
class Annotation:
    """A `/@ ... @/` block: contract clause, invariant, proof hint or
    shared-region declaration."""

    kind: str
    payload: Union[Expr, SharedRegionDecl]
    span: Span = _span_field()


@dataclass(frozen=True)
class Annot(Stmt):
    """Annotation in statement position; a null statement when executed."""

    annotation: Annotation
    span: Span = _span_field()


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[tuple[str, Shape], ...]
    contract: tuple[Annotation, ...]
    body: Stmt
    exported: bool = False
    span: Span = _span_field()


@dataclass(frozen=True)
class Program:
    functions: tuple[Function, ...]
    shared_decls: tuple[SharedRegionDecl, ...] = ()
    word_width: int = 64

    def function(self, name: str) -> Function | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    @property
    def word_bytes(self) -> int:
        return self.word_width // 8


# ---------------------------------------------------------------------------
# Traversal helpers
# ---------------------------------------------------------------------------


def seq_to_list(s: Stmt) -> list[Stmt]:
    """Flatten a right-nested Seq chain into a statement list."""
    out: list[Stmt] = []
    while isinstance(s, Seq):
        out.append(s.first)
        s = s.second
    out.append(s)
    return out


def list_to_seq(stmts: list[Stmt], span: Span = SYNTHETIC) -> Stmt:
    """Rebuild the canonical right-nested Seq chain; [] becomes Skip."""
    if not stmts:
        return Skip(span)
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out, span)
    return out


def strip_annotations(p: Program) -> Program:
    """The program with every annotation removed: no Annot statements, no
    contracts, no shared declarations. Mirrors deleting all /@...@/ blocks
    from the source text."""

    def strip_stmt(s: Stmt) -> Stmt:
        match s:
            case Seq(a, b):
                parts = [t for t in (strip_stmt(a), strip_stmt(b))
                         if not isinstance(t, Annot)]
                parts = [t for t in parts if not isinstance(t, Skip)] or parts
                if not parts:
                    return Skip(s.span)
                if len(parts) == 1:
                    return parts[0]
                return Seq(parts[0], parts[1], s.span)
            case Annot():
                return Skip(s.span)
            case Dec(n, v, body):
                return Dec(n, v, strip_stmt(body), s.span)
            case DecCall(n, sh, fn, args, body):
                return DecCall(n, sh, fn, args, strip_stmt(body), s.span)
            case If(c, t, e):
                return If(c, strip_stmt(t), strip_stmt(e), s.span)
            case While(c, body):
                return While(c, strip_stmt(body), s.span)
            case _:
                return s

    def strip_body(s: Stmt) -> Stmt:
        out = strip_stmt(s)
        # A body reduced to nothing is a bare Skip.
        if isinstance(out, Annot):
            return Skip(out.span)
        return out

    funcs = tuple(
        Function(f.name, f.params, (), strip_body(f.body), f.exported, f.span)
        for f in p.functions
    )
    return Program(funcs, (), p.word_width)


# ---------------------------------------------------------------------------
# JSON serialisation
# ---------------------------------------------------------------------------


def _to_json(node: object) -> object:
    if isinstance(node, (int, str, bool)) or node is None:
        return node
    if isinstance(node, Span):
        return {"file": node.file, "line": node.line,
                "col": node.col, "end_col": node.end_col}
    if isinstance(node, tuple):
        return [_to_json(x) for x in node]
    d: dict[str, object] = {"kind": type(node).__name__}
    for f in fields(node):  # type: ignore[arg-type]
        d[f.name] = _to_json(getattr(node, f.name))
    return d


def program_to_json(p: Program) -> str:
    """Stable JSON dump of a program, one object per AST node, kind-tagged."""
    return json.dumps(_to_json(p), indent=2)
