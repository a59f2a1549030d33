"""Concrete executor for emitted verification documents.

Runs method bodies on integer inputs: the heap array is a slot->word map,
model-method calls are bridged to an `EnvOracle`, and the uninterpreted
`bv_*` functions get their real bitvector meaning. Used to check
differentially that transpiled code computes what the reference
interpreter computes.

Only synthetic check assertions execute; user annotation asserts (which may
mention abstract predicates) are skipped, as are contracts, invariants and
fold/unfold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import words
from .ast import Program, SharedRegionDecl
from .interp import EnvOracle
from .vdoc import (
    VAssert, VAssign, VAssume, VBin, VBool, VCall, VComment, VCond, VDecl,
    VerifDoc, VExpr, VField, VFold, VIf, VIndex, VInt, VMethodCall, VNot,
    VStmt, VUnfold, VVar, VWhile,
)


class VerifExecFailure(Exception):
    """A run of emitted code failed (assertion violation, division by zero,
    or an inexecutable construct)."""

    def __init__(self, kind: str, detail: str = ""):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind


_HEAP = object()
_DEVICE = object()


@dataclass
class VerifExecutor:
    doc: VerifDoc
    oracle: EnvOracle
    program: Program
    fuel: int = 1_000_000
    heap: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.word_bytes = self.doc.word_width // 8
        self.regions: dict[str, SharedRegionDecl] = {
            d.name: d for d in self.program.shared_decls}

    # -- entry ---------------------------------------------------------------

    def run_method(self, name: str, args: list[int]) -> list[int]:
        method = self.doc.method(name)
        if method is None:
            raise VerifExecFailure("unknown-method", name)
        value_params = [p for p, t in method.params if t == "Int"]
        if len(args) != len(value_params):
            raise VerifExecFailure("call-arity",
                                   f"{name} takes {len(value_params)} words")
        env: dict[str, object] = {"heap": _HEAP, "device": _DEVICE}
        env.update(zip(value_params, args))
        for r, _ in method.returns:
            env[r] = 0
        self.exec_stmts(method.body, env)
        return [int(env[r]) for r, _ in method.returns]  # type: ignore

    # -- statements ------------------------------------------------------------

    def exec_stmts(self, stmts: tuple[VStmt, ...],
                   env: dict[str, object]) -> None:
        for s in stmts:
            self.exec_stmt(s, env)

    def exec_stmt(self, s: VStmt, env: dict[str, object]) -> None:
        match s:
            case VDecl(name, typ, init, _):
                if init is not None:
                    env[name] = self.eval(init, env)
                else:
                    env[name] = False if typ == "Bool" else 0
            case VAssign(VVar(name), value, _):
                env[name] = self.eval(value, env)
            case VAssign(VField(VCall("slot", (_, idx)), "val"), value, _):
                self.heap[int(self.eval(idx, env))] = \
                    int(self.eval(value, env))  # type: ignore[arg-type]
            case VAssert(cond, _, origin):
                if origin == "user":
                    return
                if not self.eval(cond, env):
                    raise VerifExecFailure("assert-failed",
                                           f"at {s.span}" if s.span else "")
            case VAssume(cond, _):
                # Synthetic assumptions hold by construction; evaluating them
                # is a free check on the encoder.
                if not self.eval(cond, env):
                    raise VerifExecFailure("assume-violated",
                                           f"at {s.span}" if s.span else "")
            case VIf(cond, then, els, _):
                if self.eval(cond, env):
                    self.exec_stmts(then, env)
                else:
                    self.exec_stmts(els, env)
            case VWhile(cond, _, body, _):
                while self.eval(cond, env):
                    self.fuel -= 1
                    if self.fuel <= 0:
                        raise VerifExecFailure("fuel-exhausted")
                    self.exec_stmts(body, env)
            case VMethodCall(targets, method, args, _):
                results = self.call(method, [self.eval(a, env)
                                             for a in args])
                for t, v in zip(targets, results):
                    env[t] = v
            case VFold() | VUnfold() | VComment():
                return
            case _:
                raise VerifExecFailure("bad-stmt", repr(s))

    def call(self, method: str, args: list[object]) -> list[object]:
        if method.startswith("store_") and method[6:] in self.regions:
            region = self.regions[method[6:]]
            _, _, addr, value = args
            self.oracle.shared_store(int(addr), region.width,  # type: ignore
                                     int(value))  # type: ignore[arg-type]
            return []
        if method.startswith("load_") and method[5:] in self.regions:
            region = self.regions[method[5:]]
            _, _, addr = args
            v = self.oracle.shared_load(int(addr), region.width)  # type: ignore
            return [v & words.mask(region.width)]
        if method.startswith("ffi_"):
            _, _, in_ptr, in_len, out_ptr, out_len = args
            data = self.read_bytes(int(in_ptr), int(in_len))  # type: ignore
            out = self.oracle.ffi(method[4:], data)
            self.write_bytes(int(out_ptr), out[:int(out_len)])  # type: ignore
            return []
        if self.doc.method(method) is not None:
            return list(self.run_method(
                method, [int(a) for a in args  # type: ignore[arg-type]
                         if a is not _HEAP and a is not _DEVICE]))
        raise VerifExecFailure("unknown-method", method)

    # -- heap byte view (mirrors the interpreter's little-endian memory) ------

    def read_bytes(self, addr: int, count: int) -> bytes:
        wb = self.word_bytes
        return bytes(
            (self.heap.get((addr + i) // wb, 0) >> (8 * ((addr + i) % wb)))
            & 0xFF
            for i in range(count))

    def write_bytes(self, addr: int, data: bytes) -> None:
        wb = self.word_bytes
        for i, b in enumerate(data):
            a = addr + i
            slot, k = a // wb, a % wb
            word = self.heap.get(slot, 0)
            word = word - (word & (0xFF << (8 * k))) + (b << (8 * k))
            self.heap[slot] = word

    # -- expressions -----------------------------------------------------------

    def eval(self, e: VExpr, env: dict[str, object]) -> object:
        match e:
            case VInt(v):
                return v
            case VBool(v):
                return v
            case VVar(name):
                if name not in env:
                    raise VerifExecFailure("unbound", name)
                return env[name]
            case VBin(op, lhs, rhs):
                return self.binop(op, lhs, rhs, env)
            case VNot(arg):
                return not self.eval(arg, env)
            case VCond(cond, then, els):
                return self.eval(then if self.eval(cond, env) else els, env)
            case VField(VCall("slot", (_, idx)), "val"):
                return self.heap.get(int(self.eval(idx, env)), 0)  # type: ignore
            case VCall("byte_shift", (k,)):
                return 256 ** int(self.eval(k, env))  # type: ignore[arg-type]
            case VCall(name, args) if name.startswith("bv_"):
                vals = [int(self.eval(a, env)) for a in args]  # type: ignore
                return self.bitop(name, vals)
            case _:
                raise VerifExecFailure("inexecutable", repr(e))

    def binop(self, op: str, lhs: VExpr, rhs: VExpr,
              env: dict[str, object]) -> object:
        if op == "&&":
            return bool(self.eval(lhs, env)) and bool(self.eval(rhs, env))
        if op == "||":
            return bool(self.eval(lhs, env)) or bool(self.eval(rhs, env))
        if op == "==>":
            return (not self.eval(lhs, env)) or bool(self.eval(rhs, env))
        a = self.eval(lhs, env)
        b = self.eval(rhs, env)
        match op:
            case "+":
                return a + b  # type: ignore[operator]
            case "-":
                return a - b  # type: ignore[operator]
            case "*":
                return a * b  # type: ignore[operator]
            case "/" | "%":
                if b == 0:
                    raise VerifExecFailure("div-by-zero")
                # SMT-style Euclidean semantics; identical to Python's
                # floor semantics for the positive divisors we emit.
                return a // b if op == "/" else a % b  # type: ignore
            case "==":
                return a == b
            case "!=":
                return a != b
            case "<":
                return a < b  # type: ignore[operator]
            case "<=":
                return a <= b  # type: ignore[operator]
            case ">":
                return a > b  # type: ignore[operator]
            case ">=":
                return a >= b  # type: ignore[operator]
        raise VerifExecFailure("bad-op", op)

    def bitop(self, name: str, vals: list[int]) -> int:
        width = self.doc.word_width
        a = vals[0]
        b = vals[1] if len(vals) > 1 else 0
        match name:
            case "bv_and":
                return a & b
            case "bv_or":
                return a | b
            case "bv_xor":
                return a ^ b
            case "bv_lsl":
                return words.apply_shift("lsl", a, b, width)
            case "bv_lsr":
                return words.apply_shift("lsr", a, b, width)
            case "bv_asr":
                return words.apply_shift("asr", a, b, width)
        raise VerifExecFailure("bad-op", name)
