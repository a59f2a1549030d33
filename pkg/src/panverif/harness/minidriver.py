"""Mini-driver corpus access and planted mutants.

Each mutant is a single textual patch over the driver source, introducing
one protocol bug that at least one checker must catch.
"""

from __future__ import annotations

from pathlib import Path

from ..ast import Program
from ..parser import SourceFile, parse_program

CORPUS_DIR = Path(__file__).resolve().parent.parent / "corpus"


def corpus_path(name: str) -> Path:
    return CORPUS_DIR / name


def minidriver_source() -> str:
    return corpus_path("minidriver.pnk").read_text(encoding="utf-8")


def load_minidriver() -> Program:
    return parse_program(SourceFile("minidriver.pnk", minidriver_source()))


# name -> (needle, replacement); every needle occurs exactly once.
MUTANTS: dict[str, tuple[str, str]] = {
    # Signals the OS whenever it published, ignoring the request flag.
    "signal_unconditional": (
        """        var req = 0;
        !ld64 req, RX_USED + 16;
        if (req) {
            @notify_rx(0, 0, 0, 0);
            !st64 RX_USED + 16, 0;
        }""",
        """        @notify_rx(0, 0, 0, 0);
        !st64 RX_USED + 16, 0;""",
    ),
    # Notifies but never drops the request flag (double-signal hazard).
    "skip_clear": (
        """            @notify_rx(0, 0, 0, 0);
            !st64 RX_USED + 16, 0;""",
        """            @notify_rx(0, 0, 0, 0);""",
    ),
    # Truncates the buffer length to 8 bits when filling the RX ring.
    "truncate_len": (
        "!st64 RX_RING + 8 + tail % RING_CAP * 24, l;",
        "!st64 RX_RING + 8 + tail % RING_CAP * 24, l & 255;",
    ),
    # Drops the queue-full check before publishing into rx_used.
    "no_full_check": (
        "        if (ut - uh >= QUEUE_CAP) { break; }",
        "        skip;",
    ),
    # Swaps address and length words when filling the RX ring.
    "swap_addr_len": (
        """        !st64 RX_RING + tail % RING_CAP * 24, a;
        !st64 RX_RING + 8 + tail % RING_CAP * 24, l;""",
        """        !st64 RX_RING + tail % RING_CAP * 24, l;
        !st64 RX_RING + 8 + tail % RING_CAP * 24, a;""",
    ),
}


def mutant_source(name: str) -> str:
    needle, replacement = MUTANTS[name]
    source = minidriver_source()
    if source.count(needle) != 1:
        raise AssertionError(f"mutant '{name}' needle not unique")
    return source.replace(needle, replacement)


def load_mutant(name: str) -> Program:
    return parse_program(SourceFile(f"minidriver[{name}].pnk",
                                    mutant_source(name)))
