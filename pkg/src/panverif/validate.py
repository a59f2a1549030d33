"""Static well-formedness checks over parsed programs.

`validate_program` is pure and deterministic: diagnostics come back in
source order for the same input. An empty list means the program is
accepted by the interpreter and transpiler (modulo runtime failures).
"""

from __future__ import annotations

from . import ast
from .ast import (
    Annot, Annotation, Assign, BaseAddr, Break, BytesInWord, Call, Cmp,
    Composite, Const, Continue, Dec, DecCall, Diagnostic, ExtCall, Expr,
    Field, Function, If, Label, Load, LoadByte, Op, Program, Raise, Return,
    Seq, Shape, Shift, ShMemLoad, ShMemStore, Skip, Stmt, Store, StoreByte,
    Struct, Tick, Var, While, WORD, Word, shape_size, seq_to_list,
)


class ShapeError(Exception):
    """Raised by infer_shape on malformed expressions."""

    def __init__(self, diag: Diagnostic):
        super().__init__(diag.message)
        self.diag = diag


def infer_shape(e: Expr, env: dict[str, Shape]) -> Shape:
    """Shape of an expression under a local shape environment.

    Unbound variables are reported as Word by the caller's scope check;
    here they default to Word so inference can continue.
    """
    match e:
        case Const() | Label() | LoadByte() | Op() | Cmp() | Shift() | \
                BaseAddr() | BytesInWord():
            return WORD
        case Var(name):
            return env.get(name, WORD)
        case Struct(elements):
            return Composite(tuple(infer_shape(x, env) for x in elements))
        case Field(index, base):
            base_shape = infer_shape(base, env)
            if not isinstance(base_shape, Composite):
                raise ShapeError(Diagnostic(
                    e.span, "field-of-word",
                    "field access on a value that is not a composite"))
            if not (0 <= index < len(base_shape.elements)):
                raise ShapeError(Diagnostic(
                    e.span, "field-index",
                    f"field index {index} out of range for composite of "
                    f"{len(base_shape.elements)} elements"))
            return base_shape.elements[index]
        case Load(shape, _):
            return shape
        case _:
            # Annotation-only atoms never appear in code positions.
            return WORD


class _Validator:
    def __init__(self, p: Program):
        self.program = p
        self.diags: list[Diagnostic] = []
        self.function_names = {f.name for f in p.functions}

    def error(self, span: ast.Span, code: str, message: str) -> None:
        self.diags.append(Diagnostic(span, code, message))

    # -- expressions --------------------------------------------------------

    def check_expr(self, e: Expr, env: dict[str, Shape]) -> Shape:
        match e:
            case Const(value):
                if not (0 <= value < 2 ** self.program.word_width):
                    self.error(e.span, "const-range",
                               f"constant {value} does not fit in "
                               f"{self.program.word_width} bits")
            case Var(name):
                if name not in env:
                    self.error(e.span, "unbound-var",
                               f"variable '{name}' is not bound")
            case Label():
                pass
            case Struct(elements):
                for x in elements:
                    self.check_expr(x, env)
            case Field(_, base):
                self.check_expr(base, env)
            case Load(shape, addr):
                if shape_size(shape) < 1:
                    self.error(e.span, "empty-shape", "shape has no words")
                self.check_expr(addr, env)
            case LoadByte(addr):
                self.check_expr(addr, env)
            case Op(op, args):
                if op not in ast.BINOPS:
                    self.error(e.span, "bad-op", f"unknown operator '{op}'")
                elif op in ast.ASSOCIATIVE_OPS:
                    if len(args) < 2:
                        self.error(e.span, "op-arity",
                                   f"'{op}' needs at least 2 arguments")
                elif len(args) != 2:
                    self.error(e.span, "op-arity",
                               f"'{op}' takes exactly 2 arguments")
                for x in args:
                    self.check_expr(x, env)
            case Cmp(cmp, lhs, rhs):
                if cmp not in ast.CMPS:
                    self.error(e.span, "bad-cmp", f"unknown comparison '{cmp}'")
                self.check_expr(lhs, env)
                self.check_expr(rhs, env)
            case Shift(kind, value, amount):
                if kind not in ast.SHIFTS:
                    self.error(e.span, "bad-shift", f"unknown shift '{kind}'")
                if not (0 <= amount < self.program.word_width):
                    self.error(e.span, "shift-range",
                               f"shift amount {amount} not in "
                               f"[0, {self.program.word_width})")
                self.check_expr(value, env)
            case BaseAddr() | BytesInWord():
                pass
            case _:
                self.error(e.span, "ann-atom-in-code",
                           "annotation-only expression in code position")
        try:
            return infer_shape(e, env)
        except ShapeError as exc:
            self.diags.append(exc.diag)
            return WORD

    # -- statements ---------------------------------------------------------

    def check_opsize(self, opsize: int, span: ast.Span) -> None:
        if opsize not in ast.OPSIZES:
            self.error(span, "opsize", f"operation size {opsize} is not one "
                       "of 8, 16, 32, 64")
        elif opsize > self.program.word_width:
            self.error(span, "opsize",
                       f"operation size {opsize} exceeds word width "
                       f"{self.program.word_width}")

    def check_stmt(self, s: Stmt, env: dict[str, Shape], in_loop: bool) -> dict[str, Shape]:
        """Check one statement; returns the environment for what follows it
        in the enclosing sequence (ShMemLoad introduces its target)."""
        match s:
            case Skip() | Tick():
                pass
            case Dec(name, value, body):
                shape = self.check_expr(value, env)
                self.check_stmt(body, {**env, name: shape}, in_loop)
            case DecCall(name, shape, fn, args, body):
                self.check_expr(fn, env)
                for a in args:
                    self.check_expr(a, env)
                self.check_stmt(body, {**env, name: shape}, in_loop)
            case Assign(name, value):
                if name not in env:
                    self.error(s.span, "unbound-var",
                               f"assignment to unbound variable '{name}'")
                self.check_expr(value, env)
            case Store(addr, value) | StoreByte(addr, value):
                self.check_expr(addr, env)
                self.check_expr(value, env)
            case Seq():
                for part in seq_to_list(s):
                    env = self.check_stmt(part, env, in_loop)
            case If(cond, then, els):
                self.check_expr(cond, env)
                self.check_stmt(then, env, in_loop)
                self.check_stmt(els, env, in_loop)
            case While(cond, body):
                self.check_expr(cond, env)
                self.check_while_body(body, env)
            case Break() | Continue():
                if not in_loop:
                    kw = "break" if isinstance(s, Break) else "continue"
                    self.error(s.span, f"{kw}-outside-loop",
                               f"{kw} outside loop")
            case Call(_, fn, args):
                self.check_expr(fn, env)
                for a in args:
                    self.check_expr(a, env)
            case Raise(_, value) | Return(value):
                self.check_expr(value, env)
            case ShMemStore(opsize, addr, value):
                self.check_opsize(opsize, s.span)
                self.check_expr(addr, env)
                self.check_expr(value, env)
            case ShMemLoad(opsize, name, addr):
                self.check_opsize(opsize, s.span)
                self.check_expr(addr, env)
                return {**env, name: WORD}
            case ExtCall(_, a, b, c, d):
                for x in (a, b, c, d):
                    self.check_expr(x, env)
            case Annot(annotation):
                self.check_statement_annotation(annotation)
            case _:
                self.error(s.span, "bad-stmt", "unknown statement kind")
        return env

    def check_while_body(self, body: Stmt, env: dict[str, Shape]) -> None:
        # Leading invariant annotations are the only legal placement for
        # `invariant`; anything after a non-annotation statement is not.
        stmts = seq_to_list(body)
        leading = True
        for part in stmts:
            if isinstance(part, Annot) and part.annotation.kind == "invariant":
                if not leading:
                    self.error(part.span, "annotation-placement",
                               "invariant must come first in a loop body")
            elif not (isinstance(part, Annot) or isinstance(part, Skip)):
                leading = False
            env = self.check_stmt(part, env, in_loop=True)

    def check_statement_annotation(self, annotation: Annotation) -> None:
        if annotation.kind in ("requires", "ensures"):
            self.error(annotation.span, "annotation-placement",
                       f"'{annotation.kind}' is only valid in a function "
                       "contract")
        elif annotation.kind == "shared":
            self.error(annotation.span, "annotation-placement",
                       "shared region declarations are only valid at the "
                       "top level")
        elif annotation.kind not in ast.ANNOTATION_KINDS:
            self.error(annotation.span, "annotation-kind",
                       f"unknown annotation kind '{annotation.kind}'")

    # -- top level ----------------------------------------------------------

    def check_function(self, f: Function) -> None:
        seen: set[str] = set()
        env: dict[str, Shape] = {}
        for name, shape in f.params:
            if name in seen:
                self.error(f.span, "duplicate-param",
                           f"duplicate parameter '{name}' in '{f.name}'")
            seen.add(name)
            env[name] = shape
        for annotation in f.contract:
            if annotation.kind not in ("requires", "ensures"):
                self.error(annotation.span, "annotation-placement",
                           f"'{annotation.kind}' cannot appear in a function "
                           "contract")
        self.check_stmt(f.body, env, in_loop=False)

    def run(self) -> list[Diagnostic]:
        p = self.program
        if p.word_width not in ast.WORD_WIDTHS:
            self.error(ast.SYNTHETIC, "word-width",
                       f"word width must be 32 or 64, not {p.word_width}")
            return self.diags
        seen: set[str] = set()
        for f in p.functions:
            if f.name in seen:
                self.error(f.span, "duplicate-function",
                           f"duplicate function '{f.name}'")
            seen.add(f.name)
        for d in p.shared_decls:
            if d.access not in ast.ACCESS_MODES:
                self.error(d.span, "shared-access",
                           f"unknown access mode '{d.access}'")
            if d.width not in ast.OPSIZES or d.width > p.word_width:
                self.error(d.span, "shared-width",
                           f"shared region width u{d.width} invalid for "
                           f"{p.word_width}-bit words")
            if d.lo > d.hi:
                self.error(d.span, "shared-range",
                           f"region '{d.name}' has lo {d.lo} > hi {d.hi}")
        for i, a in enumerate(p.shared_decls):
            for b in p.shared_decls[i + 1:]:
                if a.lo <= b.hi and b.lo <= a.hi:
                    self.error(b.span, "overlapping-shared-regions",
                               f"shared regions '{a.name}' and '{b.name}' "
                               "overlap")
        for f in p.functions:
            self.check_function(f)
        return self.diags


def validate_program(p: Program) -> list[Diagnostic]:
    """All well-formedness diagnostics for a program, in source order."""
    return _Validator(p).run()
