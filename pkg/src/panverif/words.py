"""Machine-word arithmetic: every operation reduces modulo 2**width.

Shared by the interpreter, the constant folder and the parser's constant
declarations so there is exactly one definition of word semantics.
"""

from __future__ import annotations

from .ast import (
    BaseAddr, BytesInWord, Cmp, Const, Expr, Op, Shift,
)


def mask(width: int) -> int:
    return (1 << width) - 1


def apply_binop(op: str, a: int, b: int, width: int) -> int | None:
    """a op b reduced mod 2**width; None for division or modulo by zero."""
    m = mask(width)
    match op:
        case "add":
            return (a + b) & m
        case "sub":
            return (a - b) & m
        case "mul":
            return (a * b) & m
        case "div":
            return a // b if b else None
        case "mod":
            return a % b if b else None
        case "and":
            return a & b
        case "or":
            return a | b
        case "xor":
            return a ^ b
    raise ValueError(f"unknown binop {op!r}")


def apply_cmp(cmp: str, a: int, b: int) -> int:
    """Unsigned comparison as word 1 or 0."""
    match cmp:
        case "eq":
            return int(a == b)
        case "ne":
            return int(a != b)
        case "lt":
            return int(a < b)
        case "le":
            return int(a <= b)
        case "gt":
            return int(a > b)
        case "ge":
            return int(a >= b)
    raise ValueError(f"unknown comparison {cmp!r}")


def apply_shift(kind: str, a: int, amount: int, width: int) -> int:
    m = mask(width)
    match kind:
        case "lsl":
            return (a << amount) & m
        case "lsr":
            return a >> amount
        case "asr":
            # Sign-extend from the top bit, then shift.
            sign = a >> (width - 1)
            signed = a - (sign << width)
            return (signed >> amount) & m
    raise ValueError(f"unknown shift {kind!r}")


def const_value(e: Expr, width: int) -> int | None:
    """Value of a constant expression, or None if it is not constant
    (or divides by zero)."""
    match e:
        case Const(value):
            return value & mask(width)
        case BytesInWord():
            return width // 8
        case BaseAddr():
            return None
        case Op(op, args):
            vals = [const_value(a, width) for a in args]
            if any(v is None for v in vals):
                return None
            acc = vals[0]
            for v in vals[1:]:
                acc = apply_binop(op, acc, v, width)  # type: ignore[arg-type]
                if acc is None:
                    return None
            return acc
        case Cmp(cmp, lhs, rhs):
            a, b = const_value(lhs, width), const_value(rhs, width)
            if a is None or b is None:
                return None
            return apply_cmp(cmp, a, b)
        case Shift(kind, value, amount):
            a = const_value(value, width)
            if a is None:
                return None
            return apply_shift(kind, a, amount, width)
        case _:
            return None
