"""Pancake concrete-syntax parser.

The grammar is reconstructed around the published snippet style: statement
keywords `var/if/while/break/continue/return/raise/tick/skip/fun`,
shared-memory forms `!stN addr, value` / `!ldN var, addr`, annotations in
`/@ ... @/` blocks, C operator precedence, `true`/`false` as sugar for 1/0.

Reconstructed forms not shown in that style are documented in the README:
struct literals `<e1, e2>`, field access `e.0`, local loads `ld <shape> (e)`
and `ld8 (e)`, local stores `st a, v` / `st8 a, v`, foreign calls
`@name(a, b, c, d)`, label values `&f`, and top-level `const NAME = expr;`
declarations which the parser substitutes into the AST.

Errors are reported as `Diagnostic`s carried by `ParseError`; after an error
the parser skips to the next top-level item and keeps going (no partial
ASTs are produced).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ast, words
from .ast import (
    Annot, Annotation, App, Assign, BaseAddr, Break, BytesInWord, Call, Cmp,
    Composite, Const, Continue, Dec, DecCall, Diagnostic, ExtCall, Expr,
    Field, Function, If, IndexAt, Label, Load, LoadByte, NamedField, Old, Op,
    Program, Raise, Return, Seq, Shape, SharedRegionDecl, Shift, ShMemLoad,
    ShMemStore, Skip, Span, Stmt, Store, StoreByte, Struct, Tick, Var, While,
    Word, list_to_seq,
)


@dataclass
class SourceFile:
    """A source text with the line-offset index used to build spans."""

    path: str
    text: str

    def __post_init__(self) -> None:
        self.line_offsets = [0]
        for i, ch in enumerate(self.text):
            if ch == "\n":
                self.line_offsets.append(i + 1)

    def span(self, start: int, end: int) -> Span:
        line = self._line_of(start)
        col = start - self.line_offsets[line - 1] + 1
        line_end = (self.line_offsets[line] - 1 if line < len(self.line_offsets)
                    else len(self.text))
        end_col = min(end, line_end) - self.line_offsets[line - 1] + 1
        return Span(self.path, line, col, max(end_col, col))

    def _line_of(self, offset: int) -> int:
        lo, hi = 0, len(self.line_offsets) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.line_offsets[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("\n".join(d.render() for d in diagnostics))
        self.diagnostics = diagnostics


KEYWORDS = {
    "fun", "export", "var", "if", "else", "while", "break", "continue",
    "return", "raise", "tick", "skip", "true", "false", "st", "st8",
    "ld", "ld8", "const",
}

_PUNCT = [
    "<<", ">>>", ">>", "<=", ">=", "==", "!=", "..",
    "(", ")", "{", "}", "[", "]", "<", ">", ",", ";", "=",
    "+", "-", "*", "/", "%", "&", "|", "^", "!", ".",
]


@dataclass(frozen=True)
class Token:
    kind: str  # 'num' | 'ident' | 'kw' | 'shmem' | 'at' | 'annot-open' | 'annot-close' | 'eof' | punctuation text
    text: str
    value: int | None
    span: Span


def _lex(src: SourceFile) -> tuple[list[Token], list[Diagnostic]]:
    text, n = src.text, len(src.text)
    toks: list[Token] = []
    diags: list[Diagnostic] = []
    i = 0
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if text.startswith("/*", i):
            j = text.find("*/", i)
            if j < 0:
                diags.append(Diagnostic(src.span(i, i + 2), "comment",
                                        "unterminated block comment"))
                break
            i = j + 2
            continue
        if text.startswith("/@", i):
            toks.append(Token("annot-open", "/@", None, src.span(i, i + 2)))
            i += 2
            continue
        if text.startswith("@/", i):
            toks.append(Token("annot-close", "@/", None, src.span(i, i + 2)))
            i += 2
            continue
        if c == "!" and text[i + 1:i + 3] in ("st", "ld"):
            j = i + 3
            while j < n and text[j].isdigit():
                j += 1
            if j > i + 3:
                toks.append(Token("shmem", text[i:j], None, src.span(i, j)))
                i = j
                continue
        if c == "@":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            if j == i + 1:
                diags.append(Diagnostic(src.span(i, i + 1), "lex",
                                        "stray '@'"))
                i += 1
                continue
            toks.append(Token("at", text[i + 1:j], None, src.span(i, j)))
            i = j
            continue
        if c.isdigit():
            j = i
            if text.startswith("0x", i) or text.startswith("0X", i):
                j = i + 2
                while j < n and text[j] in "0123456789abcdefABCDEF_":
                    j += 1
                value = int(text[i:j].replace("_", ""), 16)
            else:
                while j < n and (text[j].isdigit() or text[j] == "_"):
                    j += 1
                value = int(text[i:j].replace("_", ""))
            toks.append(Token("num", text[i:j], value, src.span(i, j)))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in KEYWORDS else "ident"
            toks.append(Token(kind, word, None, src.span(i, j)))
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append(Token(p, p, None, src.span(i, i + len(p))))
                i += len(p)
                break
        else:
            diags.append(Diagnostic(src.span(i, i + 1), "lex",
                                    f"unexpected character {c!r}"))
            i += 1
    toks.append(Token("eof", "", None, src.span(n, n)))
    return toks, diags


class _Fail(Exception):
    def __init__(self, span: Span, code: str, message: str):
        super().__init__(message)
        self.diag = Diagnostic(span, code, message)


# Precedence levels, loosest first. Shifts take a literal amount and are
# handled separately inside the climber.
_LEVELS: list[tuple[dict[str, tuple[str, str]], bool]] = [
    ({"|": ("op", "or")}, True),
    ({"^": ("op", "xor")}, True),
    ({"&": ("op", "and")}, True),
    ({"==": ("cmp", "eq"), "!=": ("cmp", "ne")}, False),
    ({"<": ("cmp", "lt"), "<=": ("cmp", "le"),
      ">": ("cmp", "gt"), ">=": ("cmp", "ge")}, False),
    ({"<<": ("shift", "lsl"), ">>": ("shift", "lsr"),
      ">>>": ("shift", "asr")}, False),
    ({"+": ("op", "add"), "-": ("op", "sub")}, True),
    ({"*": ("op", "mul"), "/": ("op", "div"), "%": ("op", "mod")}, True),
]
# Level index where struct-literal elements and similar contexts stop so the
# closing '>' of the literal is not eaten as a comparison.
LEVEL_SHIFT = 5
LEVEL_TOP = 0


class _Parser:
    def __init__(self, src: SourceFile, word_width: int):
        self.src = src
        self.width = word_width
        self.toks, self.diags = _lex(src)
        self.pos = 0
        self.consts: dict[str, int] = {}
        self.function_names = self._prescan_functions()
        self.annotation: bool = False  # inside /@ ... @/

    # -- token plumbing -----------------------------------------------------

    def _prescan_functions(self) -> set[str]:
        names = set()
        for i, t in enumerate(self.toks[:-1]):
            if t.kind == "kw" and t.text == "fun":
                nxt = self.toks[i + 1]
                if nxt.kind == "ident":
                    names.add(nxt.text)
        return names

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.peek()
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def eat(self, kind: str, text: str | None = None) -> Token:
        if not self.at(kind, text):
            got = self.peek()
            want = text or kind
            raise _Fail(got.span, "syntax",
                        f"expected '{want}', found '{got.text or got.kind}'")
        return self.next()

    def matching_paren_is_call(self) -> bool:
        """At a '(' token: does a '(' follow the matching ')'?"""
        depth = 0
        i = self.pos
        while i < len(self.toks):
            k = self.toks[i].kind
            if k == "(":
                depth += 1
            elif k == ")":
                depth -= 1
                if depth == 0:
                    return self.toks[i + 1].kind == "("
            elif k == "eof":
                return False
            i += 1
        return False

    # -- expressions --------------------------------------------------------

    def parse_expr(self, level: int = LEVEL_TOP) -> Expr:
        if level >= len(_LEVELS):
            return self.parse_unary()
        table, nary = _LEVELS[level]
        lhs = self.parse_expr(level + 1)
        while self.peek().kind in table:
            t = self.next()
            group, name = table[t.kind]
            if group == "shift":
                amt = self.eat("num")
                lhs = Shift(name, lhs, amt.value or 0, t.span)
                continue
            rhs = self.parse_expr(level + 1)
            if group == "cmp":
                lhs = Cmp(name, lhs, rhs, t.span)
            elif (nary and isinstance(lhs, Op) and lhs.op == name
                    and name in ast.ASSOCIATIVE_OPS):
                lhs = Op(name, lhs.args + (rhs,), lhs.span)
            else:
                lhs = Op(name, (lhs, rhs), t.span)
        return lhs

    def parse_unary(self) -> Expr:
        t = self.peek()
        if t.kind == "!":
            self.next()
            arg = self.parse_unary()
            return Cmp("eq", arg, Const(0, t.span), t.span)
        if t.kind == "-":
            self.next()
            arg = self.parse_unary()
            return Op("sub", (Const(0, t.span), arg), t.span)
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        e = self.parse_primary()
        while True:
            if self.at("."):
                dot = self.next()
                if self.at("num"):
                    idx = self.next()
                    e = Field(idx.value or 0, e, dot.span)
                elif self.annotation and self.at("ident"):
                    name = self.next()
                    e = NamedField(e, name.text, dot.span)
                else:
                    raise _Fail(self.peek().span, "syntax",
                                "expected field index after '.'")
            elif self.annotation and self.at("["):
                br = self.next()
                idx = self.parse_expr()
                self.eat("]")
                e = IndexAt(e, idx, br.span)
            else:
                return e

    def parse_primary(self) -> Expr:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return Const(t.value or 0, t.span)
        if t.kind == "kw" and t.text in ("true", "false"):
            self.next()
            return Const(1 if t.text == "true" else 0, t.span)
        if t.kind == "kw" and t.text == "ld":
            self.next()
            shape = self.parse_shape()
            addr = self.parse_unary()
            return Load(shape, addr, t.span)
        if t.kind == "kw" and t.text == "ld8":
            self.next()
            return LoadByte(self.parse_unary(), t.span)
        if t.kind == "at":
            if t.text == "base":
                self.next()
                return BaseAddr(t.span)
            if t.text == "biw":
                self.next()
                return BytesInWord(t.span)
            raise _Fail(t.span, "syntax",
                        f"foreign call '@{t.text}' is a statement")
        if t.kind == "&":
            self.next()
            name = self.eat("ident")
            return Label(name.text, t.span)
        if t.kind == "(":
            self.next()
            e = self.parse_expr()
            self.eat(")")
            return e
        if t.kind == "<":
            self.next()
            elements = [self.parse_expr(LEVEL_SHIFT)]
            while self.at(","):
                self.next()
                elements.append(self.parse_expr(LEVEL_SHIFT))
            self.eat(">")
            return Struct(tuple(elements), t.span)
        if t.kind == "ident":
            if self.annotation:
                if t.text == "old" and self.peek(1).kind == "(":
                    self.next()
                    self.next()
                    arg = self.parse_expr()
                    self.eat(")")
                    return Old(arg, t.span)
                if self.peek(1).kind == "(":
                    self.next()
                    self.next()
                    args: list[Expr] = []
                    if not self.at(")"):
                        args.append(self.parse_expr())
                        while self.at(","):
                            self.next()
                            args.append(self.parse_expr())
                    self.eat(")")
                    return App(t.text, tuple(args), t.span)
            self.next()
            if t.text in self.consts:
                return Const(self.consts[t.text], t.span)
            return Var(t.text, t.span)
        raise _Fail(t.span, "syntax",
                    f"expected expression, found '{t.text or t.kind}'")

    def parse_shape(self) -> Shape:
        t = self.peek()
        if t.kind == "num":
            self.next()
            n = t.value or 0
            if n < 1:
                raise _Fail(t.span, "shape", "shape word count must be >= 1")
            return ast.words_shape(n)
        if t.kind == "{":
            self.next()
            elements = [self.parse_shape()]
            while self.at(","):
                self.next()
                elements.append(self.parse_shape())
            self.eat("}")
            return Composite(tuple(elements))
        raise _Fail(t.span, "shape", "expected shape (number or {...})")

    # -- statements ---------------------------------------------------------

    def parse_block(self) -> Stmt:
        open_tok = self.eat("{")
        stmts = self.parse_stmts_until("}")
        self.eat("}")
        return list_to_seq(stmts, open_tok.span)

    def parse_stmts_until(self, closer: str) -> list[Stmt]:
        stmts: list[Stmt] = []
        while not self.at(closer) and not self.at("eof"):
            s = self.parse_stmt(closer)
            if s is not None:
                stmts.append(s)
        return stmts

    def parse_stmt(self, closer: str) -> Stmt | None:
        t = self.peek()
        if t.kind == "annot-open":
            annotation = self.parse_annotation()
            return Annot(annotation, annotation.span)
        if t.kind == "kw":
            return self.parse_keyword_stmt(t, closer)
        if t.kind == "shmem":
            return self.parse_shmem_stmt()
        if t.kind == "at":
            return self.parse_extcall()
        if t.kind == "ident":
            return self.parse_ident_stmt(closer)
        if t.kind == "(":
            span = t.span
            fn, args = self.parse_call_tail()
            self.eat(";")
            return Call(None, fn, args, span)
        raise _Fail(t.span, "syntax",
                    f"expected statement, found '{t.text or t.kind}'")

    def parse_keyword_stmt(self, t: Token, closer: str) -> Stmt:
        match t.text:
            case "skip":
                self.next()
                self.eat(";")
                return Skip(t.span)
            case "tick":
                self.next()
                self.eat(";")
                return Tick(t.span)
            case "break":
                self.next()
                self.eat(";")
                return Break(t.span)
            case "continue":
                self.next()
                self.eat(";")
                return Continue(t.span)
            case "return":
                self.next()
                value = self.parse_expr()
                self.eat(";")
                return Return(value, t.span)
            case "raise":
                self.next()
                exn = self.eat("ident")
                value = self.parse_unary()
                self.eat(";")
                return Raise(exn.text, value, t.span)
            case "if":
                return self.parse_if(t)
            case "while":
                self.next()
                self.eat("(")
                cond = self.parse_expr()
                self.eat(")")
                body = self.parse_block()
                return While(cond, body, t.span)
            case "var":
                return self.parse_var(t, closer)
            case "st":
                self.next()
                addr = self.parse_expr()
                self.eat(",")
                value = self.parse_expr()
                self.eat(";")
                return Store(addr, value, t.span)
            case "st8":
                self.next()
                addr = self.parse_expr()
                self.eat(",")
                value = self.parse_expr()
                self.eat(";")
                return StoreByte(addr, value, t.span)
        raise _Fail(t.span, "syntax", f"unexpected keyword '{t.text}'")

    def parse_if(self, t: Token) -> Stmt:
        self.next()
        self.eat("(")
        cond = self.parse_expr()
        self.eat(")")
        then = self.parse_block()
        els: Stmt = Skip(t.span)
        if self.at("kw", "else"):
            self.next()
            if self.at("kw", "if"):
                els = self.parse_if(self.peek())
            else:
                els = self.parse_block()
        return If(cond, then, els, t.span)

    def parse_var(self, t: Token, closer: str) -> Stmt:
        self.next()
        shape: Shape | None = None
        if self.peek().kind in ("num", "{"):
            shape = self.parse_shape()
        name = self.eat("ident")
        self.eat("=")
        if self.rhs_is_call():
            fn, args = self.parse_call_tail()
            self.eat(";")
            rest = self.parse_stmts_until(closer)
            return DecCall(name.text, shape or Word(), fn, args,
                           list_to_seq(rest, t.span), t.span)
        if shape is not None:
            raise _Fail(t.span, "shape",
                        "shape annotations are only for call declarations; "
                        "plain 'var' infers its shape")
        value = self.parse_expr()
        self.eat(";")
        rest = self.parse_stmts_until(closer)
        return Dec(name.text, value, list_to_seq(rest, t.span), t.span)

    def rhs_is_call(self) -> bool:
        t = self.peek()
        if t.kind == "ident" and self.peek(1).kind == "(":
            return True
        if t.kind == "(":
            return self.matching_paren_is_call()
        return False

    def parse_call_tail(self) -> tuple[Expr, tuple[Expr, ...]]:
        """Parse `callee ( args )` where callee is an identifier or a
        parenthesised expression."""
        t = self.peek()
        if t.kind == "ident":
            self.next()
            fn: Expr = (Label(t.text, t.span) if t.text in self.function_names
                        else Var(t.text, t.span))
        else:
            self.eat("(")
            fn = self.parse_expr()
            self.eat(")")
        self.eat("(")
        args: list[Expr] = []
        if not self.at(")"):
            args.append(self.parse_expr())
            while self.at(","):
                self.next()
                args.append(self.parse_expr())
        self.eat(")")
        return fn, tuple(args)

    def parse_ident_stmt(self, closer: str) -> Stmt:
        t = self.peek()
        if self.peek(1).kind == "(":
            span = t.span
            fn, args = self.parse_call_tail()
            self.eat(";")
            return Call(None, fn, args, span)
        name = self.eat("ident")
        self.eat("=")
        if self.rhs_is_call():
            fn, args = self.parse_call_tail()
            self.eat(";")
            return Call(name.text, fn, args, name.span)
        value = self.parse_expr()
        self.eat(";")
        return Assign(name.text, value, name.span)

    def parse_shmem_stmt(self) -> Stmt:
        t = self.next()
        opsize = int(t.text[3:])
        if t.text.startswith("!st"):
            addr = self.parse_expr()
            self.eat(",")
            value = self.parse_expr()
            self.eat(";")
            return ShMemStore(opsize, addr, value, t.span)
        name = self.eat("ident")
        self.eat(",")
        addr = self.parse_expr()
        self.eat(";")
        return ShMemLoad(opsize, name.text, addr, t.span)

    def parse_extcall(self) -> Stmt:
        t = self.next()
        if t.text in ("base", "biw"):
            raise _Fail(t.span, "syntax", f"'@{t.text}' is an expression")
        self.eat("(")
        args = [self.parse_expr()]
        while self.at(","):
            self.next()
            args.append(self.parse_expr())
        self.eat(")")
        self.eat(";")
        if len(args) != 4:
            raise _Fail(t.span, "extcall",
                        "foreign calls take exactly 4 arguments "
                        "(in-ptr, in-len, out-ptr, out-len)")
        return ExtCall(t.text, args[0], args[1], args[2], args[3], t.span)

    # -- annotations --------------------------------------------------------

    def parse_annotation(self) -> Annotation:
        open_tok = self.eat("annot-open")
        self.annotation = True
        try:
            kind_tok = self.peek()
            if kind_tok.kind == "kw" and kind_tok.text == "assert":
                kind = "assert"
                self.next()
            elif kind_tok.kind == "ident" and kind_tok.text in ast.ANNOTATION_KINDS:
                kind = kind_tok.text
                self.next()
            else:
                raise _Fail(kind_tok.span, "annotation-kind",
                            f"unknown annotation kind "
                            f"'{kind_tok.text or kind_tok.kind}'")
            if kind == "shared":
                payload: Expr | SharedRegionDecl = self.parse_shared_decl()
            else:
                payload = self.parse_expr()
            self.eat("annot-close")
            return Annotation(kind, payload, open_tok.span)
        finally:
            self.annotation = False

    def parse_shared_decl(self) -> SharedRegionDecl:
        access_tok = self.eat("ident")
        if access_tok.text not in ast.ACCESS_MODES:
            raise _Fail(access_tok.span, "shared-access",
                        f"expected access mode ro/wo/rw, found "
                        f"'{access_tok.text}'")
        width_tok = self.eat("ident")
        if width_tok.text not in ("u8", "u16", "u32", "u64"):
            raise _Fail(width_tok.span, "shared-width",
                        f"expected width u8/u16/u32/u64, found "
                        f"'{width_tok.text}'")
        width = int(width_tok.text[1:])
        name = self.eat("ident")
        self.eat("[")
        lo_expr = self.parse_expr()
        hi_expr = lo_expr
        if self.at(".."):
            self.next()
            hi_expr = self.parse_expr()
        self.eat("]")
        lo = words.const_value(lo_expr, self.width)
        hi = words.const_value(hi_expr, self.width)
        if lo is None or hi is None:
            raise _Fail(name.span, "shared-range",
                        f"bounds of shared region '{name.text}' must be "
                        "constant expressions")
        return SharedRegionDecl(name.text, access_tok.text, width,
                                lo_expr, hi_expr, lo, hi, name.span)

    # -- top level ----------------------------------------------------------

    def parse_const_decl(self) -> None:
        t = self.eat("kw", "const")
        name = self.eat("ident")
        self.eat("=")
        e = self.parse_expr()
        self.eat(";")
        value = words.const_value(e, self.width)
        if value is None:
            raise _Fail(t.span, "const",
                        f"initialiser of const '{name.text}' is not constant")
        self.consts[name.text] = value

    def parse_function(self, pending: list[Annotation]) -> Function:
        exported = False
        start = self.peek()
        if self.at("kw", "export"):
            exported = True
            self.next()
        self.eat("kw", "fun")
        name = self.eat("ident")
        self.eat("(")
        params: list[tuple[str, Shape]] = []
        if not self.at(")"):
            while True:
                shape: Shape = Word()
                if self.peek().kind in ("num", "{"):
                    shape = self.parse_shape()
                pname = self.eat("ident")
                params.append((pname.text, shape))
                if not self.at(","):
                    break
                self.next()
        self.eat(")")
        open_tok = self.eat("{")
        contract = list(pending)
        while self.at("annot-open"):
            save = self.pos
            annotation = self.parse_annotation()
            if annotation.kind in ("requires", "ensures"):
                contract.append(annotation)
            else:
                self.pos = save
                break
        stmts = self.parse_stmts_until("}")
        self.eat("}")
        return Function(name.text, tuple(params), tuple(contract),
                        list_to_seq(stmts, open_tok.span), exported,
                        start.span)

    def skip_to_next_item(self) -> None:
        depth = 0
        while not self.at("eof"):
            t = self.peek()
            if depth == 0 and (t.kind == "kw" and t.text in ("fun", "export",
                                                             "const")):
                return
            if t.kind == "{":
                depth += 1
            elif t.kind == "}":
                depth = max(0, depth - 1)
            self.next()

    def parse_program(self) -> Program:
        functions: list[Function] = []
        shared: list[SharedRegionDecl] = []
        pending: list[Annotation] = []
        while not self.at("eof"):
            try:
                t = self.peek()
                if t.kind == "kw" and t.text == "const":
                    self.parse_const_decl()
                elif t.kind == "annot-open":
                    annotation = self.parse_annotation()
                    if isinstance(annotation.payload, SharedRegionDecl):
                        shared.append(annotation.payload)
                    else:
                        pending.append(annotation)
                elif t.kind == "kw" and t.text in ("fun", "export"):
                    functions.append(self.parse_function(pending))
                    pending = []
                else:
                    raise _Fail(t.span, "syntax",
                                f"expected top-level item, found "
                                f"'{t.text or t.kind}'")
            except _Fail as exc:
                self.diags.append(exc.diag)
                self.skip_to_next_item()
        if pending:
            self.diags.append(Diagnostic(pending[0].span,
                                         "annotation-placement",
                                         "annotation is not attached to any "
                                         "function"))
        if self.diags:
            raise ParseError(self.diags)
        return Program(tuple(functions), tuple(shared), self.width)


def parse_program(src: SourceFile | str, word_width: int = 64,
                  path: str = "<string>") -> Program:
    """Parse a source file (or raw text) into a Program.

    Raises ParseError carrying one diagnostic per problem found.
    """
    if isinstance(src, str):
        src = SourceFile(path, src)
    if word_width not in ast.WORD_WIDTHS:
        raise ValueError(f"word width must be one of {ast.WORD_WIDTHS}")
    return _Parser(src, word_width).parse_program()
