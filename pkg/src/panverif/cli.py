"""Command-line front end.

Subcommands: `parse` (canonical form or JSON AST dump), `run` (interpret
against an oracle script), `transpile` (emit the verification document plus
source-map and residual-report sidecars) and `verify` (transpile, then
drive the external backend and map its errors back to Pancake spans).

Exit codes: 0 success/verified, 1 verification failure or script mismatch,
2 usage/parse/validation error, 3 backend unavailable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from . import interp
from .ast import Program, program_to_json
from .backend import (
    BackendResult, BackendUnavailable, run_backend, run_backend_per_method,
)
from .parser import ParseError, SourceFile, parse_program
from .printer import pretty_print
from .transpile import EncodingConfig, TranspileResult, transpile_program
from .validate import validate_program

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NO_BACKEND = 3

BACKEND_ENV = "PANVERIF_BACKEND"


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _load_program(path: str, word_width: int) -> Program | None:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        _err(f"cannot read {path}: {exc}")
        return None
    try:
        program = parse_program(SourceFile(path, text), word_width)
    except ParseError as exc:
        for d in exc.diagnostics:
            _err(d.render())
        return None
    diags = validate_program(program)
    if diags:
        for d in diags:
            _err(d.render())
        return None
    return program


def _add_transpile_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--device-model", required=True,
                     help="path of the device-model file referenced by the "
                          "output")
    sub.add_argument("--neighbour-model",
                     help="path of the neighbour-model file")
    sub.add_argument("--word-width", type=int, choices=(32, 64), default=64)
    sub.add_argument("--overflow", choices=("fail", "wrap"), default="fail")
    sub.add_argument("--no-bitop-rewrite", action="store_true")
    sub.add_argument("--ffi", action="append", default=[],
                     metavar="NAME",
                     help="declare a foreign-call model method ffi_<NAME> "
                          "(repeatable)")


def _config(args: argparse.Namespace) -> EncodingConfig:
    return EncodingConfig(word_width=args.word_width,
                          overflow=args.overflow,
                          rewrite_bitops=not args.no_bitop_rewrite,
                          ffi_methods=frozenset(args.ffi))


def _transpile(args: argparse.Namespace,
               program: Program) -> TranspileResult | None:
    result = transpile_program(program, _config(args),
                               device_model=args.device_model,
                               neighbour_model=args.neighbour_model,
                               source_name=os.path.basename(args.file))
    if result.diagnostics:
        for d in result.diagnostics:
            _err(d.render())
        return None
    return result


def cmd_parse(args: argparse.Namespace) -> int:
    program = _load_program(args.file, args.word_width)
    if program is None:
        return EXIT_USAGE
    if args.json:
        print(program_to_json(program))
    else:
        sys.stdout.write(pretty_print(program))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    program = _load_program(args.file, args.word_width)
    if program is None:
        return EXIT_USAGE
    try:
        with open(args.oracle, encoding="utf-8") as fh:
            script = interp.parse_script(fh.read())
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    arg_values = [interp.WordVal(int(a, 0)) for a in args.arg]
    config = interp.RunConfig(memory_bytes=args.memory)
    result = interp.replay_script(program, args.entry, arg_values, script,
                                  args.fuel, config)
    if isinstance(result, interp.ScriptMismatch):
        _err(result.render())
        return EXIT_FAILED
    trace_text = interp.format_script(result.trace)
    if trace_text:
        sys.stdout.write(trace_text)
    match result:
        case interp.Returned(_, value):
            print(f"returned {_value_text(value)}")
            return EXIT_OK
        case interp.Raised(_, exn, value):
            print(f"raised {exn} {_value_text(value)}")
            return EXIT_FAILED
        case interp.Failed(_, kind, span):
            _err(f"{span.file}:{span.line}:{span.col}: failed: {kind}")
            return EXIT_FAILED
        case _:
            _err("out of fuel")
            return EXIT_FAILED


def _value_text(v: interp.Value) -> str:
    match v:
        case interp.WordVal(n):
            return f"{n:#x}"
        case interp.LabelVal(name):
            return f"&{name}"
        case interp.StructVal(elements):
            return "<" + ", ".join(_value_text(x) for x in elements) + ">"
    return repr(v)


def cmd_transpile(args: argparse.Namespace) -> int:
    program = _load_program(args.file, args.word_width)
    if program is None:
        return EXIT_USAGE
    result = _transpile(args, program)
    if result is None:
        return EXIT_USAGE
    text, source_map = result.doc.render()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(args.out + ".map.json", "w", encoding="utf-8") as fh:
        fh.write(source_map.to_json())
    with open(args.out + ".residual.json", "w", encoding="utf-8") as fh:
        fh.write(result.residual_json())
    if result.residuals:
        _err(f"note: {len(result.residuals)} residual bitvector "
             f"operation(s); see {args.out}.residual.json")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    backend_cmd = args.backend_cmd or os.environ.get(BACKEND_ENV)
    if not backend_cmd:
        _err(f"no backend configured: pass --backend-cmd or set "
             f"{BACKEND_ENV}")
        return EXIT_NO_BACKEND
    program = _load_program(args.file, args.word_width)
    if program is None:
        return EXIT_USAGE
    result = _transpile(args, program)
    if result is None:
        return EXIT_USAGE

    method_names = [m.name for m in result.doc.methods]
    if args.function:
        if args.function not in method_names:
            _err(f"no function named '{args.function}'")
            return EXIT_USAGE
        method_names = [args.function]

    with tempfile.TemporaryDirectory(prefix="panverif.") as tmp:
        try:
            if args.function or args.jobs > 1:
                doc_paths: dict[str, str] = {}
                maps = {}
                for name in method_names:
                    doc = result.doc.restricted_to({name})
                    text, source_map = doc.render()
                    path = os.path.join(tmp, f"{name}.vpr")
                    with open(path, "w", encoding="utf-8") as fh:
                        fh.write(text)
                    doc_paths[name] = path
                    maps[name] = source_map
                report = run_backend_per_method(doc_paths, maps, backend_cmd,
                                                args.timeout, args.jobs)
            else:
                text, source_map = result.doc.render()
                path = os.path.join(tmp, "program.vpr")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(text)
                report = run_backend(path, source_map, method_names,
                                     backend_cmd, args.timeout).sorted()
        except BackendUnavailable as exc:
            _err(str(exc))
            return EXIT_NO_BACKEND

    _print_report(report, args.json)
    return EXIT_OK if report.ok else EXIT_FAILED


def _print_report(report: BackendResult, as_json: bool) -> None:
    if as_json:
        print(json.dumps({
            "methods": [
                {
                    "method": v.method,
                    "verdict": v.verdict,
                    "seconds": round(v.seconds, 3),
                    "errors": [
                        {"message": e.message,
                         "line": e.line,
                         "span": None if e.span is None else {
                             "file": e.span.file, "line": e.span.line,
                             "col": e.span.col}}
                        for e in v.errors
                    ],
                }
                for v in report.verdicts
            ],
            "unattributed": [e.render() for e in report.unattributed],
            "ok": report.ok,
        }, indent=2))
        return
    for v in report.verdicts:
        print(f"{v.method}: {v.verdict} ({v.seconds:.2f}s)")
        for e in v.errors:
            print(f"  {e.render()}")
    for e in report.unattributed:
        print(f"unattributed: {e.render()}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panverif",
        description="Pancake verification front-end: parse, interpret, "
                    "transpile, verify.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and echo canonical form")
    p.add_argument("file")
    p.add_argument("--json", action="store_true",
                   help="dump the AST as JSON")
    p.add_argument("--word-width", type=int, choices=(32, 64), default=64)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("run", help="interpret against an oracle script")
    p.add_argument("file")
    p.add_argument("--entry", required=True)
    p.add_argument("--oracle", required=True,
                   help="oracle script file (load/store/ffi records)")
    p.add_argument("--fuel", type=int, required=True)
    p.add_argument("--arg", action="append", default=[],
                   help="word argument (repeatable)")
    p.add_argument("--word-width", type=int, choices=(32, 64), default=64)
    p.add_argument("--memory", type=int, default=65536,
                   help="local memory size in bytes")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("transpile",
                       help="emit the verification document")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    _add_transpile_flags(p)
    p.set_defaults(fn=cmd_transpile)

    p = sub.add_parser("verify",
                       help="transpile and run the external backend")
    p.add_argument("file")
    _add_transpile_flags(p)
    p.add_argument("--function", help="verify one function only")
    p.add_argument("--timeout", type=float, default=None,
                   help="per-process timeout in seconds")
    p.add_argument("--backend-cmd",
                   help=f"backend command (default: ${BACKEND_ENV})")
    p.add_argument("--jobs", type=int, default=1,
                   help="concurrent backend processes")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_verify)
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.fn(args)


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
