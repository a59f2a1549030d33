"""Canonical Pancake pretty-printer.

Output is the parser's fixed point: 4-space indents, one statement per
line, annotations on their own lines, parens only where precedence needs
them. `parse(print(p))` equals `p` up to source spans.
"""

from __future__ import annotations

from . import ast
from .ast import (
    Annot, Annotation, App, Assign, BaseAddr, Break, BytesInWord, Call, Cmp,
    Composite, Const, Continue, Dec, DecCall, ExtCall, Expr, Field, Function,
    If, IndexAt, Label, Load, LoadByte, NamedField, Old, Op, Program, Raise,
    Return, Seq, Shape, SharedRegionDecl, Shift, ShMemLoad, ShMemStore, Skip,
    Stmt, Store, StoreByte, Struct, Tick, Var, While, Word, seq_to_list,
)

_OP_TOKENS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "mod": "%",
              "and": "&", "or": "|", "xor": "^"}
_CMP_TOKENS = {"eq": "==", "ne": "!=", "lt": "<", "le": "<=",
               "gt": ">", "ge": ">="}
_SHIFT_TOKENS = {"lsl": "<<", "lsr": ">>", "asr": ">>>"}

_OP_LEVEL = {"or": 0, "xor": 1, "and": 2, "add": 6, "sub": 6,
             "mul": 7, "div": 7, "mod": 7}
_CMP_LEVEL = {"eq": 3, "ne": 3, "lt": 4, "le": 4, "gt": 4, "ge": 4}
_SHIFT_LEVEL = 5
_ATOM_LEVEL = 9
# Struct elements parse above the comparison levels so the closing '>' is
# unambiguous; print them with parens below this level.
_ELEMENT_LEVEL = 5
_POSTFIX_LEVEL = 8


def print_const(value: int) -> str:
    return hex(value) if value >= 4096 else str(value)


def print_shape(shape: Shape) -> str:
    if isinstance(shape, Word):
        return "1"
    assert isinstance(shape, Composite)
    return "{" + ", ".join(print_shape(s) for s in shape.elements) + "}"


def _level(e: Expr) -> int:
    match e:
        case Op(op, _):
            return _OP_LEVEL[op]
        case Cmp(cmp, _, _):
            return _CMP_LEVEL[cmp]
        case Shift():
            return _SHIFT_LEVEL
        case _:
            return _ATOM_LEVEL


def print_expr(e: Expr, min_level: int = 0) -> str:
    text = _render(e)
    if _level(e) < min_level:
        return f"({text})"
    return text


def _addr_operand(e: Expr) -> str:
    """Load addresses and raise payloads sit in unary position: atoms may go
    bare, everything else is parenthesised."""
    if isinstance(e, (Const, Var, BaseAddr, BytesInWord)):
        return _render(e)
    return f"({_render(e)})"


def _render(e: Expr) -> str:
    match e:
        case Const(value):
            return print_const(value)
        case Var(name):
            return name
        case Label(name):
            return f"&{name}"
        case Struct(elements):
            inner = ", ".join(print_expr(x, _ELEMENT_LEVEL) for x in elements)
            return f"<{inner}>"
        case Field(index, base):
            return f"{print_expr(base, _POSTFIX_LEVEL)}.{index}"
        case Load(shape, addr):
            return f"ld {print_shape(shape)} {_addr_operand(addr)}"
        case LoadByte(addr):
            return f"ld8 {_addr_operand(addr)}"
        case Op(op, args):
            level = _OP_LEVEL[op]
            parts = [print_expr(args[0], level)]
            parts += [print_expr(a, level + 1) for a in args[1:]]
            return f" {_OP_TOKENS[op]} ".join(parts)
        case Cmp(cmp, lhs, rhs):
            level = _CMP_LEVEL[cmp]
            return (f"{print_expr(lhs, level)} {_CMP_TOKENS[cmp]} "
                    f"{print_expr(rhs, level + 1)}")
        case Shift(kind, value, amount):
            return (f"{print_expr(value, _SHIFT_LEVEL)} "
                    f"{_SHIFT_TOKENS[kind]} {amount}")
        case BaseAddr():
            return "@base"
        case BytesInWord():
            return "@biw"
        case App(name, args):
            return f"{name}({', '.join(print_expr(a) for a in args)})"
        case Old(arg):
            return f"old({print_expr(arg)})"
        case NamedField(base, name):
            return f"{print_expr(base, _POSTFIX_LEVEL)}.{name}"
        case IndexAt(base, index):
            return f"{print_expr(base, _POSTFIX_LEVEL)}[{print_expr(index)}]"
    raise ValueError(f"cannot print expression {e!r}")


def print_annotation(annotation: Annotation) -> str:
    if isinstance(annotation.payload, SharedRegionDecl):
        d = annotation.payload
        if d.lo_expr == d.hi_expr:
            rng = print_expr(d.lo_expr)
        else:
            rng = f"{print_expr(d.lo_expr)}..{print_expr(d.hi_expr)}"
        return f"/@ shared {d.access} u{d.width} {d.name}[{rng}] @/"
    return f"/@ {annotation.kind} {print_expr(annotation.payload)} @/"


class _Printer:
    def __init__(self, program: Program):
        self.function_names = {f.name for f in program.functions}

    def callee(self, fn: Expr) -> str:
        if isinstance(fn, Label) and fn.name in self.function_names:
            return fn.name
        return f"({_render(fn)})"

    def call_text(self, fn: Expr, args: tuple[Expr, ...]) -> str:
        return f"{self.callee(fn)}({', '.join(print_expr(a) for a in args)})"

    def stmt_lines(self, s: Stmt, indent: int) -> list[str]:
        pad = "    " * indent
        out: list[str] = []
        for part in seq_to_list(s):
            out.extend(self.one_stmt(part, indent, pad))
        return out

    def one_stmt(self, s: Stmt, indent: int, pad: str) -> list[str]:
        match s:
            case Skip():
                return [f"{pad}skip;"]
            case Tick():
                return [f"{pad}tick;"]
            case Break():
                return [f"{pad}break;"]
            case Continue():
                return [f"{pad}continue;"]
            case Dec(name, value, body):
                lines = [f"{pad}var {name} = {print_expr(value)};"]
                if not isinstance(body, Skip):
                    lines += self.stmt_lines(body, indent)
                return lines
            case DecCall(name, shape, fn, args, body):
                lines = [f"{pad}var {print_shape(shape)} {name} = "
                         f"{self.call_text(fn, args)};"]
                if not isinstance(body, Skip):
                    lines += self.stmt_lines(body, indent)
                return lines
            case Assign(name, value):
                return [f"{pad}{name} = {print_expr(value)};"]
            case Store(addr, value):
                return [f"{pad}st {print_expr(addr)}, {print_expr(value)};"]
            case StoreByte(addr, value):
                return [f"{pad}st8 {print_expr(addr)}, {print_expr(value)};"]
            case If(cond, then, els):
                lines = [f"{pad}if ({print_expr(cond)}) {{"]
                lines += self.stmt_lines(then, indent + 1)
                while isinstance(els, If):
                    lines.append(f"{pad}}} else if ({print_expr(els.cond)}) {{")
                    lines += self.stmt_lines(els.then, indent + 1)
                    els = els.els
                if not isinstance(els, Skip):
                    lines.append(f"{pad}}} else {{")
                    lines += self.stmt_lines(els, indent + 1)
                lines.append(f"{pad}}}")
                return lines
            case While(cond, body):
                lines = [f"{pad}while ({print_expr(cond)}) {{"]
                lines += self.stmt_lines(body, indent + 1)
                lines.append(f"{pad}}}")
                return lines
            case Call(None, fn, args):
                return [f"{pad}{self.call_text(fn, args)};"]
            case Call(ret, fn, args):
                return [f"{pad}{ret} = {self.call_text(fn, args)};"]
            case Raise(exn, value):
                return [f"{pad}raise {exn} {_addr_operand(value)};"]
            case Return(value):
                return [f"{pad}return {print_expr(value)};"]
            case ShMemStore(opsize, addr, value):
                return [f"{pad}!st{opsize} {print_expr(addr)}, "
                        f"{print_expr(value)};"]
            case ShMemLoad(opsize, name, addr):
                return [f"{pad}!ld{opsize} {name}, {print_expr(addr)};"]
            case ExtCall(name, a, b, c, d):
                args = ", ".join(print_expr(x) for x in (a, b, c, d))
                return [f"{pad}@{name}({args});"]
            case Annot(annotation):
                return [f"{pad}{print_annotation(annotation)}"]
        raise ValueError(f"cannot print statement {s!r}")

    def function_lines(self, f: Function) -> list[str]:
        params = ", ".join(f"{print_shape(shape)} {name}"
                           for name, shape in f.params)
        head = "export fun" if f.exported else "fun"
        lines = [f"{head} {f.name}({params})", "{"]
        for annotation in f.contract:
            lines.append(f"    {print_annotation(annotation)}")
        lines += self.stmt_lines(f.body, 1) if not isinstance(f.body, Skip) \
            else []
        lines.append("}")
        return lines


def pretty_print(p: Program) -> str:
    """Canonical source text for a program; re-parses to an equal AST."""
    printer = _Printer(p)
    chunks: list[str] = []
    if p.shared_decls:
        chunks.append("\n".join(
            print_annotation(Annotation("shared", d, d.span))
            for d in p.shared_decls))
    for f in p.functions:
        chunks.append("\n".join(printer.function_lines(f)))
    return "\n\n".join(chunks) + "\n"
