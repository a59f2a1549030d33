"""Reference big-step interpreter.

Execution is an evaluation function from a program, argument values, an
environment oracle and a fuel budget to a `RunResult` carrying the I/O
event trace. There is no undefined behaviour: every run ends in exactly one
of Returned / Raised / Failed / OutOfFuel. Fuel is spent at loop
back-edges, calls and `tick`, which makes every run finite.

Words are unsigned and reduced modulo 2**width everywhere. Local memory is
a byte array (little-endian words) starting at the configured base
address; shared regions are reachable only through `!ldN` / `!stN`, which
consult the oracle and append events to the trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ast, words
from .ast import (
    Annot, Assign, BaseAddr, Break, BytesInWord, Call, Cmp, Composite, Const,
    Continue, Dec, DecCall, Expr, ExtCall, Field, If, Label, Load, LoadByte,
    Op, Program, Raise, Return, Seq, Shape, Shift, ShMemLoad, ShMemStore,
    Skip, Span, Stmt, Store, StoreByte, Struct, Tick, Var, While, WORD,
    Word, shape_size,
)

FAILURE_KINDS = (
    "unbound-var", "misaligned-access", "out-of-range-access",
    "shape-mismatch", "undeclared-shared-region", "div-by-zero",
)


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Value:
    pass


@dataclass(frozen=True)
class WordVal(Value):
    n: int


@dataclass(frozen=True)
class LabelVal(Value):
    name: str


@dataclass(frozen=True)
class StructVal(Value):
    elements: tuple[Value, ...]


def value_shape(v: Value) -> Shape:
    if isinstance(v, StructVal):
        return Composite(tuple(value_shape(x) for x in v.elements))
    return WORD


def flatten_value(v: Value) -> list[Value]:
    """Depth-first word/label leaves of a value."""
    if isinstance(v, StructVal):
        out: list[Value] = []
        for x in v.elements:
            out.extend(flatten_value(x))
        return out
    return [v]


def build_value(shape: Shape, leaves: list[Value]) -> Value:
    """Rebuild a shaped value from depth-first leaves; consumes from the
    front of the list."""
    if isinstance(shape, Word):
        return leaves.pop(0)
    assert isinstance(shape, Composite)
    return StructVal(tuple(build_value(s, leaves) for s in shape.elements))


# ---------------------------------------------------------------------------
# Events and oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    pass


@dataclass(frozen=True)
class SharedLoadEv(Event):
    addr: int
    opsize: int
    value: int


@dataclass(frozen=True)
class SharedStoreEv(Event):
    addr: int
    opsize: int
    value: int


@dataclass(frozen=True)
class FfiEv(Event):
    name: str
    bytes_in: bytes
    bytes_out: bytes


class EnvOracle:
    """Deterministic model of the outside world.

    Responses must fit the requested operation size; the interpreter masks
    defensively. Implementations may raise to abort a run from the outside
    (the interpreter itself never raises through `run_function`).
    """

    def shared_load(self, addr: int, opsize: int) -> int:
        raise NotImplementedError

    def shared_store(self, addr: int, opsize: int, value: int) -> None:
        raise NotImplementedError

    def ffi(self, name: str, data: bytes) -> bytes:
        raise NotImplementedError


class PermissiveOracle(EnvOracle):
    """Answers every load with a value derived from a fixed response list
    (cycled), accepts every store, and echoes FFI input. Deterministic."""

    def __init__(self, load_values: list[int] | None = None):
        self.load_values = load_values or [0]
        self.index = 0

    def shared_load(self, addr: int, opsize: int) -> int:
        v = self.load_values[self.index % len(self.load_values)]
        self.index += 1
        return v & words.mask(opsize)

    def shared_store(self, addr: int, opsize: int, value: int) -> None:
        return None

    def ffi(self, name: str, data: bytes) -> bytes:
        return data


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunResult:
    trace: tuple[Event, ...]


@dataclass(frozen=True)
class Returned(RunResult):
    value: Value


@dataclass(frozen=True)
class Raised(RunResult):
    exn: str
    value: Value


@dataclass(frozen=True)
class Failed(RunResult):
    kind: str
    span: Span


@dataclass(frozen=True)
class OutOfFuel(RunResult):
    pass


class EvalFailure(Exception):
    """Raised by eval_expr / statement execution; run_function converts it
    into a Failed result."""

    def __init__(self, kind: str, span: Span, message: str = ""):
        assert kind in FAILURE_KINDS
        super().__init__(message or kind)
        self.kind = kind
        self.span = span


class _OutOfFuelSig(Exception):
    pass


class _BreakSig(Exception):
    pass


class _ContinueSig(Exception):
    pass


class _ReturnSig(Exception):
    def __init__(self, value: Value):
        self.value = value


class _RaiseSig(Exception):
    def __init__(self, exn: str, value: Value):
        self.exn = exn
        self.value = value


# ---------------------------------------------------------------------------
# Machine state
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    memory_bytes: int = 65536
    base_addr: int = 0


@dataclass
class MachineState:
    program: Program
    oracle: EnvOracle
    config: RunConfig
    fuel: int
    locals: dict[str, Value] = field(default_factory=dict)
    memory: bytearray = field(default_factory=bytearray)
    trace: list[Event] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.memory:
            self.memory = bytearray(self.config.memory_bytes)

    @property
    def width(self) -> int:
        return self.program.word_width

    @property
    def word_bytes(self) -> int:
        return self.program.word_bytes

    def spend_fuel(self) -> None:
        if self.fuel <= 0:
            raise _OutOfFuelSig()
        self.fuel -= 1

    # -- local memory -------------------------------------------------------

    def _check_range(self, addr: int, size: int, span: Span) -> int:
        off = addr - self.config.base_addr
        if off < 0 or off + size > len(self.memory):
            raise EvalFailure("out-of-range-access", span,
                              f"address {addr:#x} outside local memory")
        return off

    def load_word(self, addr: int, span: Span) -> int:
        if addr % self.word_bytes:
            raise EvalFailure("misaligned-access", span,
                              f"unaligned word access at {addr:#x}")
        off = self._check_range(addr, self.word_bytes, span)
        return int.from_bytes(self.memory[off:off + self.word_bytes],
                              "little")

    def store_word(self, addr: int, value: int, span: Span) -> None:
        if addr % self.word_bytes:
            raise EvalFailure("misaligned-access", span,
                              f"unaligned word access at {addr:#x}")
        off = self._check_range(addr, self.word_bytes, span)
        self.memory[off:off + self.word_bytes] = value.to_bytes(
            self.word_bytes, "little")

    def load_byte(self, addr: int, span: Span) -> int:
        off = self._check_range(addr, 1, span)
        return self.memory[off]

    def store_byte(self, addr: int, value: int, span: Span) -> None:
        off = self._check_range(addr, 1, span)
        self.memory[off] = value & 0xFF

    def read_bytes(self, addr: int, count: int, span: Span) -> bytes:
        off = self._check_range(addr, count, span)
        return bytes(self.memory[off:off + count])

    def write_bytes(self, addr: int, data: bytes, span: Span) -> None:
        off = self._check_range(addr, len(data), span)
        self.memory[off:off + len(data)] = data


# ---------------------------------------------------------------------------
# Expression evaluation
# ---------------------------------------------------------------------------


def _as_word(v: Value, span: Span, what: str) -> int:
    if not isinstance(v, WordVal):
        raise EvalFailure("shape-mismatch", span,
                          f"{what} must be a single word")
    return v.n


def eval_expr(state: MachineState, e: Expr) -> Value:
    """Evaluate an expression; raises EvalFailure on explicit failures.

    Expressions are effect-free: they never consult the oracle and never
    append events. Argument lists evaluate left to right.
    """
    match e:
        case Const(value):
            return WordVal(value & words.mask(state.width))
        case Var(name):
            if name not in state.locals:
                raise EvalFailure("unbound-var", e.span,
                                  f"variable '{name}' is not bound")
            return state.locals[name]
        case Label(name):
            return LabelVal(name)
        case Struct(elements):
            return StructVal(tuple(eval_expr(state, x) for x in elements))
        case Field(index, base):
            v = eval_expr(state, base)
            if not isinstance(v, StructVal) or index >= len(v.elements):
                raise EvalFailure("shape-mismatch", e.span,
                                  f"field {index} of a non-composite value")
            return v.elements[index]
        case Load(shape, addr):
            a = _as_word(eval_expr(state, addr), e.span, "load address")
            leaves: list[Value] = []
            for i in range(shape_size(shape)):
                leaves.append(WordVal(state.load_word(
                    a + i * state.word_bytes, e.span)))
            return build_value(shape, leaves)
        case LoadByte(addr):
            a = _as_word(eval_expr(state, addr), e.span, "load address")
            return WordVal(state.load_byte(a, e.span))
        case Op(op, args):
            acc = _as_word(eval_expr(state, args[0]), e.span, "operand")
            for x in args[1:]:
                rhs = _as_word(eval_expr(state, x), e.span, "operand")
                result = words.apply_binop(op, acc, rhs, state.width)
                if result is None:
                    raise EvalFailure("div-by-zero", e.span,
                                      "division or modulo by zero")
                acc = result
            return WordVal(acc)
        case Cmp(cmp, lhs, rhs):
            a = _as_word(eval_expr(state, lhs), e.span, "operand")
            b = _as_word(eval_expr(state, rhs), e.span, "operand")
            return WordVal(words.apply_cmp(cmp, a, b))
        case Shift(kind, value, amount):
            a = _as_word(eval_expr(state, value), e.span, "operand")
            return WordVal(words.apply_shift(kind, a, amount, state.width))
        case BaseAddr():
            return WordVal(state.config.base_addr & words.mask(state.width))
        case BytesInWord():
            return WordVal(state.word_bytes)
        case _:
            raise EvalFailure("shape-mismatch", getattr(e, "span",
                                                        ast.SYNTHETIC),
                              "annotation atom evaluated as code")


# ---------------------------------------------------------------------------
# Statement execution
# ---------------------------------------------------------------------------


def _find_region(state: MachineState, addr: int,
                 span: Span) -> ast.SharedRegionDecl:
    for d in state.program.shared_decls:
        if d.contains(addr):
            return d
    raise EvalFailure("undeclared-shared-region", span,
                      f"shared access at {addr:#x} hits no declared region")


def exec_stmt(state: MachineState, s: Stmt) -> None:
    match s:
        case Skip() | Annot():
            return
        case Tick():
            state.spend_fuel()
        case Dec(name, value, body):
            v = eval_expr(state, value)
            _scoped(state, name, v, body)
        case DecCall(name, shape, fn, args, body):
            v = _do_call(state, fn, args, s.span)
            if value_shape(v) != shape:
                raise EvalFailure("shape-mismatch", s.span,
                                  "call result does not have declared shape")
            _scoped(state, name, v, body)
        case Assign(name, value):
            if name not in state.locals:
                raise EvalFailure("unbound-var", s.span,
                                  f"assignment to unbound variable '{name}'")
            state.locals[name] = eval_expr(state, value)
        case Store(addr, value):
            a = _as_word(eval_expr(state, addr), s.span, "store address")
            v = eval_expr(state, value)
            for i, leaf in enumerate(flatten_value(v)):
                w = _as_word(leaf, s.span, "stored word")
                state.store_word(a + i * state.word_bytes, w, s.span)
        case StoreByte(addr, value):
            a = _as_word(eval_expr(state, addr), s.span, "store address")
            v = _as_word(eval_expr(state, value), s.span, "stored byte")
            state.store_byte(a, v, s.span)
        case Seq(first, second):
            exec_stmt(state, first)
            exec_stmt(state, second)
        case If(cond, then, els):
            c = _as_word(eval_expr(state, cond), s.span, "condition")
            exec_stmt(state, then if c else els)
        case While():
            _do_while(state, s)
        case Break():
            raise _BreakSig()
        case Continue():
            raise _ContinueSig()
        case Call(ret, fn, args):
            v = _do_call(state, fn, args, s.span)
            if ret is not None:
                if ret not in state.locals:
                    raise EvalFailure("unbound-var", s.span,
                                      f"call result assigned to unbound "
                                      f"variable '{ret}'")
                state.locals[ret] = v
        case Raise(exn, value):
            raise _RaiseSig(exn, eval_expr(state, value))
        case Return(value):
            raise _ReturnSig(eval_expr(state, value))
        case ShMemStore(opsize, addr, value):
            a = _as_word(eval_expr(state, addr), s.span, "shared address")
            v = _as_word(eval_expr(state, value), s.span, "shared value")
            region = _find_region(state, a, s.span)
            if region.access == "ro":
                raise EvalFailure("undeclared-shared-region", s.span,
                                  f"store to read-only region "
                                  f"'{region.name}'")
            v &= words.mask(opsize)
            state.oracle.shared_store(a, opsize, v)
            state.trace.append(SharedStoreEv(a, opsize, v))
        case ShMemLoad(opsize, name, addr):
            a = _as_word(eval_expr(state, addr), s.span, "shared address")
            region = _find_region(state, a, s.span)
            if region.access == "wo":
                raise EvalFailure("undeclared-shared-region", s.span,
                                  f"load from write-only region "
                                  f"'{region.name}'")
            v = state.oracle.shared_load(a, opsize) & words.mask(opsize)
            state.trace.append(SharedLoadEv(a, opsize, v))
            state.locals[name] = WordVal(v)
        case ExtCall(name, in_ptr, in_len, out_ptr, out_len):
            ip = _as_word(eval_expr(state, in_ptr), s.span, "in pointer")
            il = _as_word(eval_expr(state, in_len), s.span, "in length")
            op_ = _as_word(eval_expr(state, out_ptr), s.span, "out pointer")
            ol = _as_word(eval_expr(state, out_len), s.span, "out length")
            data = state.read_bytes(ip, il, s.span)
            out = state.oracle.ffi(name, data)
            state.write_bytes(op_, out[:ol], s.span)
            state.trace.append(FfiEv(name, data, out))
        case _:
            raise EvalFailure("shape-mismatch", s.span,
                              "unknown statement kind")


def _scoped(state: MachineState, name: str, value: Value, body: Stmt) -> None:
    missing = object()
    saved = state.locals.get(name, missing)
    state.locals[name] = value
    try:
        exec_stmt(state, body)
    finally:
        if saved is missing:
            state.locals.pop(name, None)
        else:
            state.locals[name] = saved  # type: ignore[assignment]


def _do_while(state: MachineState, s: While) -> None:
    while True:
        state.spend_fuel()
        c = _as_word(eval_expr(state, s.cond), s.span, "loop condition")
        if not c:
            return
        try:
            exec_stmt(state, s.body)
        except _BreakSig:
            return
        except _ContinueSig:
            continue


def _do_call(state: MachineState, fn: Expr, args: tuple[Expr, ...],
             span: Span) -> Value:
    fv = eval_expr(state, fn)
    if not isinstance(fv, LabelVal):
        raise EvalFailure("shape-mismatch", span,
                          "call target is not a code label")
    callee = state.program.function(fv.name)
    if callee is None:
        raise EvalFailure("unbound-var", span,
                          f"call to unknown function '{fv.name}'")
    arg_values = [eval_expr(state, a) for a in args]
    if len(arg_values) != len(callee.params):
        raise EvalFailure("shape-mismatch", span,
                          f"'{fv.name}' takes {len(callee.params)} "
                          f"arguments, got {len(arg_values)}")
    for v, (pname, pshape) in zip(arg_values, callee.params):
        if value_shape(v) != pshape:
            raise EvalFailure("shape-mismatch", span,
                              f"argument '{pname}' of '{fv.name}' has the "
                              "wrong shape")
    state.spend_fuel()
    saved = state.locals
    state.locals = {pname: v
                    for v, (pname, _) in zip(arg_values, callee.params)}
    try:
        exec_stmt(state, callee.body)
        return WordVal(0)  # fell off the end of the body
    except _ReturnSig as r:
        return r.value
    except (_BreakSig, _ContinueSig):
        return WordVal(0)  # validate flags these; runtime treats as done
    finally:
        state.locals = saved


def run_function(p: Program, entry: str, args: list[Value],
                 oracle: EnvOracle, fuel: int,
                 config: RunConfig | None = None,
                 memory: bytearray | None = None) -> RunResult:
    """Big-step execution of `entry` applied to `args`.

    Always returns exactly one RunResult; never raises except through a
    raising oracle. Passing `memory` shares (and mutates) an existing local
    memory image, e.g. for successive entry calls of a driver session.
    """
    state = MachineState(p, oracle, config or RunConfig(), fuel,
                         memory=memory or bytearray())
    f = p.function(entry)
    try:
        if f is None:
            raise EvalFailure("unbound-var", ast.SYNTHETIC,
                              f"no function named '{entry}'")
        v = _call_with_values(state, f, args)
        return Returned(tuple(state.trace), v)
    except EvalFailure as exc:
        return Failed(tuple(state.trace), exc.kind, exc.span)
    except _OutOfFuelSig:
        return OutOfFuel(tuple(state.trace))
    except _RaiseSig as r:
        return Raised(tuple(state.trace), r.exn, r.value)


def _call_with_values(state: MachineState, f: ast.Function,
                      args: list[Value]) -> Value:
    if len(args) != len(f.params):
        raise EvalFailure("shape-mismatch", f.span,
                          f"'{f.name}' takes {len(f.params)} arguments, "
                          f"got {len(args)}")
    for v, (pname, pshape) in zip(args, f.params):
        if value_shape(v) != pshape:
            raise EvalFailure("shape-mismatch", f.span,
                              f"argument '{pname}' has the wrong shape")
    state.spend_fuel()
    state.locals = {pname: v for v, (pname, _) in zip(args, f.params)}
    try:
        exec_stmt(state, f.body)
        return WordVal(0)
    except _ReturnSig as r:
        return r.value
    except (_BreakSig, _ContinueSig):
        return WordVal(0)


# ---------------------------------------------------------------------------
# Scripted oracles and replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadReq:
    addr: int
    opsize: int

    def render(self) -> str:
        return f"load {self.addr:#x} {self.opsize}"


@dataclass(frozen=True)
class StoreReq:
    addr: int
    opsize: int
    value: int

    def render(self) -> str:
        return f"store {self.addr:#x} {self.opsize} {self.value:#x}"


@dataclass(frozen=True)
class FfiReq:
    name: str
    data: bytes

    def render(self) -> str:
        return f"ffi {self.name} {_hex(self.data)}"


Request = LoadReq | StoreReq | FfiReq
ScriptEntry = tuple[Request, "int | bytes | None"]


@dataclass(frozen=True)
class ScriptMismatch:
    """Replay stopped: the program's request differs from the script's."""

    index: int
    expected: Request | None  # None: the script ran out
    actual: Request

    def render(self) -> str:
        want = self.expected.render() if self.expected else "end of script"
        return (f"script mismatch at event {self.index}: expected {want}, "
                f"program did {self.actual.render()}")


class _MismatchSig(Exception):
    def __init__(self, mismatch: ScriptMismatch):
        self.mismatch = mismatch


class ScriptedOracle(EnvOracle):
    """Replays a script of (expected request, response) pairs, aborting on
    the first divergence."""

    def __init__(self, script: list[ScriptEntry]):
        self.script = script
        self.index = 0

    def _step(self, actual: Request) -> int | bytes | None:
        if self.index >= len(self.script):
            raise _MismatchSig(ScriptMismatch(self.index, None, actual))
        expected, response = self.script[self.index]
        if expected != actual:
            raise _MismatchSig(ScriptMismatch(self.index, expected, actual))
        self.index += 1
        return response

    def shared_load(self, addr: int, opsize: int) -> int:
        v = self._step(LoadReq(addr, opsize))
        return int(v) & words.mask(opsize)  # type: ignore[arg-type]

    def shared_store(self, addr: int, opsize: int, value: int) -> None:
        self._step(StoreReq(addr, opsize, value))

    def ffi(self, name: str, data: bytes) -> bytes:
        v = self._step(FfiReq(name, data))
        return bytes(v)  # type: ignore[arg-type]


def replay_script(p: Program, entry: str, args: list[Value],
                  script: list[ScriptEntry], fuel: int,
                  config: RunConfig | None = None
                  ) -> RunResult | ScriptMismatch:
    """Drive run_function with a scripted oracle; a request that deviates
    from the script aborts with a report naming the position and both
    requests."""
    oracle = ScriptedOracle(script)
    try:
        return run_function(p, entry, args, oracle, fuel, config)
    except _MismatchSig as sig:
        return sig.mismatch


# -- script text format ------------------------------------------------------
#
#   load <addr-hex> <opsize> -> <value-hex>
#   store <addr-hex> <opsize> <value-hex>
#   ffi <name> <in-hex> -> <out-hex>
#
# '-' stands for an empty byte string; '#' starts a comment line.


def _hex(data: bytes) -> str:
    return data.hex() or "-"


def _unhex(text: str) -> bytes:
    return b"" if text == "-" else bytes.fromhex(text)


def parse_script(text: str) -> list[ScriptEntry]:
    entries: list[ScriptEntry] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            match parts:
                case ["load", addr, opsize, "->", value]:
                    entries.append((LoadReq(int(addr, 16), int(opsize)),
                                    int(value, 16)))
                case ["store", addr, opsize, value]:
                    entries.append((StoreReq(int(addr, 16), int(opsize),
                                             int(value, 16)), None))
                case ["ffi", name, data, "->", out]:
                    entries.append((FfiReq(name, _unhex(data)), _unhex(out)))
                case _:
                    raise ValueError("unrecognised record")
        except ValueError as exc:
            raise ValueError(f"oracle script line {lineno}: {exc}") from exc
    return entries


def format_script(trace: tuple[Event, ...] | list[Event]) -> str:
    """Render a trace as a script that replays to the same run."""
    lines = []
    for ev in trace:
        match ev:
            case SharedLoadEv(addr, opsize, value):
                lines.append(f"load {addr:#x} {opsize} -> {value:#x}")
            case SharedStoreEv(addr, opsize, value):
                lines.append(f"store {addr:#x} {opsize} {value:#x}")
            case FfiEv(name, data, out):
                lines.append(f"ffi {name} {_hex(data)} -> {_hex(out)}")
    return "\n".join(lines) + ("\n" if lines else "")


def script_from_trace(trace: tuple[Event, ...] | list[Event]
                      ) -> list[ScriptEntry]:
    entries: list[ScriptEntry] = []
    for ev in trace:
        match ev:
            case SharedLoadEv(addr, opsize, value):
                entries.append((LoadReq(addr, opsize), value))
            case SharedStoreEv(addr, opsize, value):
                entries.append((StoreReq(addr, opsize, value), None))
            case FfiEv(name, data, out):
                entries.append((FfiReq(name, data), out))
    return entries
