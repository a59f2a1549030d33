"""Structured verification-language output.

The transpiler builds these documents; `render` turns them into concrete
Viper-style text plus a source map from output lines back to Pancake spans.
Lines without a span are synthetic (preamble, flags, defaults).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .ast import Span

INT = "Int"
BOOL = "Bool"
REF = "Ref"
HEAP_TYPE = "IArray"

# Uninterpreted stand-ins for bitvector operations that no rewrite removed.
RESIDUAL_FUNCS = {
    "and": "bv_and", "or": "bv_or", "xor": "bv_xor",
    "asr": "bv_asr", "lsl": "bv_lsl", "lsr": "bv_lsr",
}

ARITH_OPS = ("+", "-", "*", "/", "%")


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VExpr:
    pass


@dataclass(frozen=True)
class VInt(VExpr):
    value: int


@dataclass(frozen=True)
class VBool(VExpr):
    value: bool


@dataclass(frozen=True)
class VVar(VExpr):
    name: str


@dataclass(frozen=True)
class VBin(VExpr):
    op: str
    lhs: VExpr
    rhs: VExpr


@dataclass(frozen=True)
class VNot(VExpr):
    arg: VExpr


@dataclass(frozen=True)
class VCond(VExpr):
    cond: VExpr
    then: VExpr
    els: VExpr


@dataclass(frozen=True)
class VCall(VExpr):
    name: str
    args: tuple[VExpr, ...]


@dataclass(frozen=True)
class VField(VExpr):
    base: VExpr
    name: str


@dataclass(frozen=True)
class VIndex(VExpr):
    base: VExpr
    index: VExpr


@dataclass(frozen=True)
class VOld(VExpr):
    arg: VExpr


@dataclass(frozen=True)
class VIterAcc(VExpr):
    """Iterated separating conjunction over a contiguous slot range:
    forall i :: lo <= i < hi ==> acc(slot(heap, i).val [, wildcard])."""

    lo: VExpr
    hi: VExpr
    write: bool


def slot_read(heap: VExpr, index: VExpr) -> VExpr:
    return VField(VCall("slot", (heap, index)), "val")


_LEVELS = {"?": 0, "==>": 1, "||": 2, "&&": 3,
           "==": 4, "!=": 4, "<": 5, "<=": 5, ">": 5, ">=": 5,
           "+": 6, "-": 6, "*": 7, "/": 7, "%": 7}
_ATOM = 9


def _level(e: VExpr) -> int:
    match e:
        case VBin(op, _, _):
            return _LEVELS[op]
        case VCond():
            return 0
        case VNot():
            return 8
        case VIterAcc():
            return 0
        case _:
            return _ATOM


def render_expr(e: VExpr, min_level: int = 0) -> str:
    text = _render(e)
    if _level(e) < min_level:
        return f"({text})"
    return text


def _render(e: VExpr) -> str:
    match e:
        case VInt(value):
            return str(value)
        case VBool(value):
            return "true" if value else "false"
        case VVar(name):
            return name
        case VBin(op, lhs, rhs):
            level = _LEVELS[op]
            return (f"{render_expr(lhs, level)} {op} "
                    f"{render_expr(rhs, level + 1)}")
        case VNot(arg):
            return f"!{render_expr(arg, 9)}"
        case VCond(cond, then, els):
            return (f"{render_expr(cond, 1)} ? {render_expr(then, 1)} : "
                    f"{render_expr(els, 1)}")
        case VCall(name, args):
            return f"{name}({', '.join(render_expr(a) for a in args)})"
        case VField(base, name):
            return f"{render_expr(base, _ATOM)}.{name}"
        case VIndex(base, index):
            return f"{render_expr(base, _ATOM)}[{render_expr(index)}]"
        case VOld(arg):
            return f"old({render_expr(arg)})"
        case VIterAcc(lo, hi, write):
            perm = "" if write else ", wildcard"
            return (f"forall qi: Int :: {render_expr(lo, 6)} <= qi && "
                    f"qi < {render_expr(hi, 6)} ==> "
                    f"acc(slot(heap, qi).val{perm})")
    raise ValueError(f"cannot render {e!r}")


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VStmt:
    pass


@dataclass(frozen=True)
class VDecl(VStmt):
    name: str
    typ: str
    init: VExpr | None
    span: Span | None = None


@dataclass(frozen=True)
class VAssign(VStmt):
    target: VExpr
    value: VExpr
    span: Span | None = None


@dataclass(frozen=True)
class VAssert(VStmt):
    cond: VExpr
    span: Span | None = None
    origin: str = "check"  # check | user


@dataclass(frozen=True)
class VAssume(VStmt):
    cond: VExpr
    span: Span | None = None


@dataclass(frozen=True)
class VIf(VStmt):
    cond: VExpr
    then: tuple[VStmt, ...]
    els: tuple[VStmt, ...]
    span: Span | None = None


@dataclass(frozen=True)
class VWhile(VStmt):
    cond: VExpr
    invariants: tuple[tuple[VExpr, Span | None], ...]
    body: tuple[VStmt, ...]
    span: Span | None = None


@dataclass(frozen=True)
class VMethodCall(VStmt):
    targets: tuple[str, ...]
    method: str
    args: tuple[VExpr, ...]
    span: Span | None = None


@dataclass(frozen=True)
class VFold(VStmt):
    pred: VExpr
    span: Span | None = None


@dataclass(frozen=True)
class VUnfold(VStmt):
    pred: VExpr
    span: Span | None = None


@dataclass(frozen=True)
class VComment(VStmt):
    text: str
    span: Span | None = None


@dataclass(frozen=True)
class VMethod:
    name: str
    params: tuple[tuple[str, str], ...]
    returns: tuple[tuple[str, str], ...]
    requires: tuple[tuple[VExpr, Span | None], ...]
    ensures: tuple[tuple[VExpr, Span | None], ...]
    body: tuple[VStmt, ...]
    span: Span | None = None


@dataclass
class VerifDoc:
    """One output document: preamble, model-file references and methods."""

    source_name: str
    word_width: int
    device_model: str | None = None
    neighbour_model: str | None = None
    methods: list[VMethod] = field(default_factory=list)

    def method(self, name: str) -> VMethod | None:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    def restricted_to(self, names: set[str]) -> VerifDoc:
        doc = VerifDoc(self.source_name, self.word_width,
                       self.device_model, self.neighbour_model)
        doc.methods = [m for m in self.methods if m.name in names]
        return doc

    def render(self) -> tuple[str, "SourceMap"]:
        return _Renderer(self).render()


# ---------------------------------------------------------------------------
# Source map
# ---------------------------------------------------------------------------


@dataclass
class SourceMap:
    """Maps 1-based output lines to Pancake spans; unmapped lines are
    synthetic. Also records each method's line range for error
    attribution."""

    mappings: dict[int, Span] = field(default_factory=dict)
    synthetic: list[int] = field(default_factory=list)
    method_ranges: dict[str, tuple[int, int]] = field(default_factory=dict)

    def lookup(self, line: int) -> Span | None:
        return self.mappings.get(line)

    def method_at(self, line: int) -> str | None:
        for name, (lo, hi) in self.method_ranges.items():
            if lo <= line <= hi:
                return name
        return None

    def to_json(self) -> str:
        return json.dumps({
            "mappings": {
                str(line): {"file": s.file, "line": s.line, "col": s.col}
                for line, s in sorted(self.mappings.items())
            },
            "synthetic": self.synthetic,
            "methods": {name: list(rng)
                        for name, rng in self.method_ranges.items()},
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "SourceMap":
        data = json.loads(text)
        sm = SourceMap()
        for line, s in data.get("mappings", {}).items():
            sm.mappings[int(line)] = Span(s["file"], s["line"], s["col"],
                                          s["col"])
        sm.synthetic = list(data.get("synthetic", []))
        sm.method_ranges = {name: (rng[0], rng[1])
                            for name, rng in data.get("methods", {}).items()}
        return sm


class _Renderer:
    def __init__(self, doc: VerifDoc):
        self.doc = doc
        self.lines: list[str] = []
        self.map = SourceMap()

    def emit(self, text: str, span: Span | None = None) -> None:
        self.lines.append(text)
        line_no = len(self.lines)
        if span is not None:
            self.map.mappings[line_no] = span
        else:
            self.map.synthetic.append(line_no)

    def render(self) -> tuple[str, SourceMap]:
        doc = self.doc
        self.emit(f"// generated from {doc.source_name} "
                  f"({doc.word_width}-bit words)")
        if doc.device_model:
            self.emit(f'import "{doc.device_model}"')
        if doc.neighbour_model:
            self.emit(f'import "{doc.neighbour_model}"')
        self.emit("")
        self.preamble()
        for m in doc.methods:
            self.emit("")
            start = len(self.lines) + 1
            self.method(m)
            self.map.method_ranges[m.name] = (start, len(self.lines))
        return "\n".join(self.lines) + "\n", self.map

    def preamble(self) -> None:
        wb = self.doc.word_width // 8
        shifts = " && ".join(f"byte_shift({k}) == {256 ** k}"
                             for k in range(wb))
        for line in [
            "field val: Int",
            "",
            "domain IArray {",
            "  function slot(a: IArray, i: Int): Ref",
            "  function slot_array(r: Ref): IArray",
            "  function slot_index(r: Ref): Int",
            "  axiom slot_injective {",
            "    forall a: IArray, i: Int :: {slot(a, i)}",
            "      slot_array(slot(a, i)) == a && "
            "slot_index(slot(a, i)) == i",
            "  }",
            "}",
            "",
            "domain WordOps {",
            "  function byte_shift(k: Int): Int",
            "  function bv_and(a: Int, b: Int): Int",
            "  function bv_or(a: Int, b: Int): Int",
            "  function bv_xor(a: Int, b: Int): Int",
            "  function bv_asr(a: Int, k: Int): Int",
            "  function bv_lsl(a: Int, k: Int): Int",
            "  function bv_lsr(a: Int, k: Int): Int",
            f"  axiom byte_shift_values {{ {shifts} }}",
            "}",
        ]:
            self.emit(line)

    def method(self, m: VMethod) -> None:
        params = ", ".join(f"{n}: {t}" for n, t in m.params)
        rets = ", ".join(f"{n}: {t}" for n, t in m.returns)
        head = f"method {m.name}({params})"
        if rets:
            head += f" returns ({rets})"
        self.emit(head, m.span)
        for cond, span in m.requires:
            self.emit(f"  requires {render_expr(cond)}", span)
        for cond, span in m.ensures:
            self.emit(f"  ensures {render_expr(cond)}", span)
        self.emit("{", m.span)
        self.stmts(m.body, 1)
        self.emit("}", m.span)

    def stmts(self, body: tuple[VStmt, ...], depth: int) -> None:
        pad = "  " * depth
        for s in body:
            self.stmt(s, depth, pad)

    def stmt(self, s: VStmt, depth: int, pad: str) -> None:
        match s:
            case VDecl(name, typ, None, span):
                self.emit(f"{pad}var {name}: {typ}", span)
            case VDecl(name, typ, init, span):
                self.emit(f"{pad}var {name}: {typ} := {render_expr(init)}",
                          span)
            case VAssign(target, value, span):
                self.emit(f"{pad}{render_expr(target, _ATOM)} := "
                          f"{render_expr(value)}", span)
            case VAssert(cond, span, _):
                self.emit(f"{pad}assert {render_expr(cond)}", span)
            case VAssume(cond, span):
                self.emit(f"{pad}assume {render_expr(cond)}", span)
            case VIf(cond, then, els, span):
                self.emit(f"{pad}if ({render_expr(cond)}) {{", span)
                self.stmts(then, depth + 1)
                if els:
                    self.emit(f"{pad}}} else {{", span)
                    self.stmts(els, depth + 1)
                self.emit(f"{pad}}}", span)
            case VWhile(cond, invariants, body, span):
                self.emit(f"{pad}while ({render_expr(cond)})", span)
                for inv, inv_span in invariants:
                    self.emit(f"{pad}  invariant {render_expr(inv)}",
                              inv_span)
                self.emit(f"{pad}{{", span)
                self.stmts(body, depth + 1)
                self.emit(f"{pad}}}", span)
            case VMethodCall(targets, method, args, span):
                call = f"{method}({', '.join(render_expr(a) for a in args)})"
                if targets:
                    call = f"{', '.join(targets)} := {call}"
                self.emit(f"{pad}{call}", span)
            case VFold(pred, span):
                self.emit(f"{pad}fold {render_expr(pred)}", span)
            case VUnfold(pred, span):
                self.emit(f"{pad}unfold {render_expr(pred)}", span)
            case VComment(text, span):
                self.emit(f"{pad}// {text}", span)
            case _:
                raise ValueError(f"cannot render statement {s!r}")


# ---------------------------------------------------------------------------
# Structure scan used by the encoding test-suite
# ---------------------------------------------------------------------------


def _is_arith(e: VExpr) -> bool:
    return isinstance(e, VBin) and e.op in ARITH_OPS


def _assign_target(s: VStmt) -> str | None:
    if isinstance(s, VDecl) and s.init is not None:
        return s.name
    if isinstance(s, VAssign) and isinstance(s.target, VVar):
        return s.target.name
    return None


def _mentions(e: VExpr, name: str) -> bool:
    match e:
        case VVar(n):
            return n == name
        case VBin(_, a, b):
            return _mentions(a, name) or _mentions(b, name)
        case VNot(a) | VOld(a):
            return _mentions(a, name)
        case VCond(a, b, c):
            return any(_mentions(x, name) for x in (a, b, c))
        case VCall(_, args):
            return any(_mentions(a, name) for a in args)
        case VField(base, _):
            return _mentions(base, name)
        case VIndex(base, index):
            return _mentions(base, name) or _mentions(index, name)
        case _:
            return False


def unguarded_arithmetic(doc: VerifDoc) -> list[tuple[str, VStmt]]:
    """Arithmetic assignments not immediately followed by a bounds assertion
    on their target. Empty on every fail-mode document."""
    bad: list[tuple[str, VStmt]] = []

    def rhs_of(s: VStmt) -> VExpr | None:
        if isinstance(s, VDecl):
            return s.init
        if isinstance(s, VAssign):
            return s.value
        return None

    def scan(stmts: tuple[VStmt, ...], method: str) -> None:
        for i, s in enumerate(stmts):
            rhs = rhs_of(s)
            target = _assign_target(s)
            if rhs is not None and target is not None and _is_arith(rhs):
                nxt = stmts[i + 1] if i + 1 < len(stmts) else None
                ok = (isinstance(nxt, VAssert)
                      and _mentions(nxt.cond, target))
                if not ok:
                    bad.append((method, s))
            match s:
                case VIf(_, then, els, _):
                    scan(then, method)
                    scan(els, method)
                case VWhile(_, _, body, _):
                    scan(body, method)
                case _:
                    pass

    for m in doc.methods:
        scan(m.body, m.name)
    return bad
