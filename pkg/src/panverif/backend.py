"""External verification backend orchestration.

The backend is an external process with a line-oriented contract: it is
invoked with the path of one verification document, prints `verified` or
`error <line> <message>` lines, and exits 0 (all proved) or 1. Anything
else is reported as backend misbehaviour. Error line numbers refer to the
generated document and are mapped back to Pancake spans through the source
map.
"""

from __future__ import annotations

import shlex
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .ast import Span
from .vdoc import SourceMap

VERDICT_VERIFIED = "verified"
VERDICT_FAILED = "failed"
VERDICT_TIMEOUT = "timeout"


class BackendUnavailable(Exception):
    pass


@dataclass
class BackendError:
    line: int | None
    message: str
    span: Span | None = None

    def render(self) -> str:
        if self.span is not None:
            return (f"{self.span.file}:{self.span.line}:{self.span.col}: "
                    f"{self.message}")
        if self.line is not None:
            return f"<generated>:{self.line}: {self.message}"
        return self.message


@dataclass
class MethodVerdict:
    method: str
    verdict: str
    seconds: float
    errors: list[BackendError] = field(default_factory=list)


@dataclass
class BackendResult:
    verdicts: list[MethodVerdict]
    unattributed: list[BackendError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v.verdict == VERDICT_VERIFIED for v in self.verdicts) \
            and not self.unattributed

    def sorted(self) -> "BackendResult":
        return BackendResult(sorted(self.verdicts, key=lambda v: v.method),
                             self.unattributed)


def _parse_output(stdout: str) -> list[BackendError]:
    errors = []
    for line in stdout.splitlines():
        parts = line.strip().split(maxsplit=2)
        if not parts or parts[0] == "verified":
            continue
        if parts[0] == "error" and len(parts) >= 2:
            try:
                lineno: int | None = int(parts[1])
            except ValueError:
                lineno = None
            message = parts[2] if len(parts) > 2 else "verification error"
            errors.append(BackendError(lineno, message))
        else:
            # Best-effort for real backends whose grammar we do not know.
            errors.append(BackendError(None, line.strip()))
    return errors


def run_backend(doc_path: str, source_map: SourceMap, methods: list[str],
                backend_cmd: str, timeout: float | None = None
                ) -> BackendResult:
    """Run the backend over one document; attribute its errors to methods
    via the source map's method line ranges."""
    argv = shlex.split(backend_cmd) + [doc_path]
    started = time.monotonic()
    try:
        proc = subprocess.run(argv, capture_output=True, text=True,
                              timeout=timeout)
    except FileNotFoundError as exc:
        raise BackendUnavailable(f"backend command not found: {argv[0]}") \
            from exc
    except subprocess.TimeoutExpired:
        elapsed = time.monotonic() - started
        return BackendResult([
            MethodVerdict(m, VERDICT_TIMEOUT, elapsed) for m in methods])
    elapsed = time.monotonic() - started

    errors = _parse_output(proc.stdout)
    for err in errors:
        if err.line is not None:
            err.span = source_map.lookup(err.line)

    per_method: dict[str, list[BackendError]] = {m: [] for m in methods}
    unattributed: list[BackendError] = []
    for err in errors:
        owner = (source_map.method_at(err.line)
                 if err.line is not None else None)
        if owner in per_method:
            per_method[owner].append(err)
        else:
            unattributed.append(err)
    failed_exit = proc.returncode != 0
    verdicts = []
    for m in methods:
        if per_method[m]:
            verdicts.append(MethodVerdict(m, VERDICT_FAILED, elapsed,
                                          per_method[m]))
        else:
            verdicts.append(MethodVerdict(m, VERDICT_VERIFIED, elapsed))
    if failed_exit and not errors:
        # Backend signalled failure without naming a line.
        unattributed.append(BackendError(None, "backend reported failure"))
    return BackendResult(verdicts, unattributed)


def run_backend_per_method(doc_paths: dict[str, str],
                           source_maps: dict[str, SourceMap],
                           backend_cmd: str, timeout: float | None = None,
                           jobs: int = 1) -> BackendResult:
    """One backend process per method document; results are deterministic
    after sorting by method name regardless of completion order."""

    def one(item: tuple[str, str]) -> BackendResult:
        method, path = item
        return run_backend(path, source_maps[method], [method],
                           backend_cmd, timeout)

    results: list[BackendResult] = []
    if jobs <= 1:
        results = [one(item) for item in doc_paths.items()]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, doc_paths.items()))
    merged = BackendResult([])
    for r in results:
        merged.verdicts.extend(r.verdicts)
        merged.unattributed.extend(r.unattributed)
    return merged.sorted()
