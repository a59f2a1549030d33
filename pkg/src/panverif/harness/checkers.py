"""Protocol checkers over driver traces and queue histories.

Each checker returns a Verdict listing every violation it found; an empty
verdict is a pass. The checkers only consume observable behaviour (the
I/O event trace and the world's queue journal), so they apply equally to
the correct driver and to planted mutants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..interp import Event, FfiEv, SharedLoadEv, SharedStoreEv
from .simworld import (
    Q_ENTRIES, QUEUE_CAP, QueueEvent, REG_BASE, RING_CAP, RX_FREE, RX_RING,
    RX_USED, SLOT_STRIDE, SimWorld, TX_AVAIL, TX_DONE, TX_RING,
)


@dataclass(frozen=True)
class Finding:
    kind: str
    detail: str


@dataclass
class Verdict:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, kind: str, detail: str) -> None:
        self.findings.append(Finding(kind, detail))

    def extend(self, other: "Verdict") -> None:
        self.findings.extend(other.findings)


# ---------------------------------------------------------------------------
# Signalling
# ---------------------------------------------------------------------------

_PRODUCED_QUEUES = ("rx_used", "tx_done")


def check_signal_protocol(trace: list[Event],
                          history: dict[str, list[QueueEvent]]) -> Verdict:
    """Signal iff (requested and state changed); requests cleared after
    notification. Judged per driver-produced queue from its journal."""
    verdict = Verdict()
    for queue in _PRODUCED_QUEUES:
        events = history.get(queue, [])
        changed_since_notify = False
        flagged_change_pending = False
        for i, ev in enumerate(events):
            if ev.kind == "notify":
                if not ev.flag:
                    verdict.add("signal-without-request",
                                f"{queue}: notified while no signal was "
                                "requested")
                if not changed_since_notify:
                    verdict.add("signal-without-state-change",
                                f"{queue}: notified without publishing "
                                "anything")
                if not any(e.kind == "clear" for e in events[i + 1:]):
                    verdict.add("uncleaned-request",
                                f"{queue}: request flag not cleared after "
                                "notification")
                changed_since_notify = False
                flagged_change_pending = False
            elif ev.kind == "change":
                changed_since_notify = True
                if ev.flag:
                    flagged_change_pending = True
        if flagged_change_pending:
            verdict.add("missed-mandatory-signal",
                        f"{queue}: state changed while a signal was "
                        "requested, but no notification followed")
    return verdict


def check_queue_bounds(history: dict[str, list[QueueEvent]],
                       capacity: int = QUEUE_CAP) -> Verdict:
    verdict = Verdict()
    for queue, events in history.items():
        for ev in events:
            used = ev.tail - ev.head
            if not 0 <= used <= capacity:
                verdict.add("queue-bounds",
                            f"{queue}: tail - head = {used} outside "
                            f"[0, {capacity}] after a {ev.kind}")
                break
    return verdict


def check_wakeup_requests(world: SimWorld, memory: bytes,
                          vacancy_threshold: int = 1) -> Verdict:
    """After a driver pass, the feed-queue request flag must be set whenever
    the hardware ring has at least `vacancy_threshold` free slots (the exact
    threshold is a policy knob, so it is a parameter)."""
    verdict = Verdict()
    cursors = [int.from_bytes(memory[i * 8:(i + 1) * 8], "little")
               for i in range(4)]
    for queue, head, tail in (("rx_free", cursors[0], cursors[1]),
                              ("tx_avail", cursors[2], cursors[3])):
        vacancy = RING_CAP - (tail - head)
        if vacancy >= vacancy_threshold \
                and not world.queues[queue].signal_requested:
            verdict.add("missing-wakeup-request",
                        f"{queue}: ring has vacancy {vacancy} but no "
                        "wake-up signal was requested")
    return verdict


# ---------------------------------------------------------------------------
# Data integrity
# ---------------------------------------------------------------------------


def _pairs(trace: list[Event], *, load: bool, base: int, entry_area: bool
           ) -> list[tuple[int, int]]:
    """(address, length) pairs read from or written to one region: ring
    slots pair offset 0 with offset 8 within a slot; queue entry areas pair
    offset 0 with offset 8 within an entry."""
    stride = 16 if entry_area else SLOT_STRIDE
    area_lo = base + (Q_ENTRIES if entry_area else 0)
    area_hi = area_lo + stride * (QUEUE_CAP if entry_area else RING_CAP)
    pending: int | None = None
    out: list[tuple[int, int]] = []
    for ev in trace:
        if load and isinstance(ev, SharedLoadEv):
            addr, value = ev.addr, ev.value
        elif not load and isinstance(ev, SharedStoreEv):
            addr, value = ev.addr, ev.value
        else:
            continue
        if not area_lo <= addr < area_hi:
            continue
        off = (addr - area_lo) % stride
        if off == 0:
            pending = value
        elif off == 8 and pending is not None:
            out.append((pending, value))
            pending = None
    return out


def check_data_integrity(trace: list[Event]) -> Verdict:
    """Per transfer flow, the (address, length) pair crossing the driver is
    preserved, and the number of queue operations matches the number of
    ring state changes."""
    verdict = Verdict()
    flows = [
        ("rx-provide", _pairs(trace, load=True, base=RX_FREE,
                              entry_area=True),
         _pairs(trace, load=False, base=RX_RING, entry_area=False)),
        ("rx-return", _pairs(trace, load=True, base=RX_RING,
                             entry_area=False),
         _pairs(trace, load=False, base=RX_USED, entry_area=True)),
        ("tx-provide", _pairs(trace, load=True, base=TX_AVAIL,
                              entry_area=True),
         _pairs(trace, load=False, base=TX_RING, entry_area=False)),
        ("tx-return", _pairs(trace, load=True, base=TX_RING,
                             entry_area=False),
         _pairs(trace, load=False, base=TX_DONE, entry_area=True)),
    ]
    for flow, taken, written in flows:
        if len(taken) != len(written):
            verdict.add("transfer-count-mismatch",
                        f"{flow}: {len(taken)} descriptors taken but "
                        f"{len(written)} written")
        for k, (src, dst) in enumerate(zip(taken, written)):
            if src != dst:
                verdict.add("data-integrity",
                            f"{flow}[{k}]: read (addr={src[0]:#x}, "
                            f"len={src[1]}) but wrote (addr={dst[0]:#x}, "
                            f"len={dst[1]})")
    return verdict


# ---------------------------------------------------------------------------
# Region separation and device validity
# ---------------------------------------------------------------------------

_RX_RANGES = ((RX_RING, RX_RING + RING_CAP * SLOT_STRIDE),
              (RX_FREE, RX_FREE + Q_ENTRIES + QUEUE_CAP * 16),
              (RX_USED, RX_USED + Q_ENTRIES + QUEUE_CAP * 16))
_TX_RANGES = ((TX_RING, TX_RING + RING_CAP * SLOT_STRIDE),
              (TX_AVAIL, TX_AVAIL + Q_ENTRIES + QUEUE_CAP * 16),
              (TX_DONE, TX_DONE + Q_ENTRIES + QUEUE_CAP * 16))


def _within(addr: int, ranges: tuple[tuple[int, int], ...]) -> bool:
    return any(lo <= addr < hi for lo, hi in ranges)


def check_path_separation(trace: list[Event], path: str) -> Verdict:
    """RX-path runs must never touch TX state, and vice versa."""
    allowed = _RX_RANGES if path == "rx" else _TX_RANGES
    forbidden = _TX_RANGES if path == "rx" else _RX_RANGES
    notify = f"notify_{path}"
    verdict = Verdict()
    for ev in trace:
        match ev:
            case SharedLoadEv(addr, _, _) | SharedStoreEv(addr, _, _):
                if _within(addr, forbidden):
                    verdict.add("rx-tx-separation",
                                f"{path} path touched opposite-path "
                                f"address {addr:#x}")
                elif not (_within(addr, allowed) or addr == REG_BASE):
                    verdict.add("rx-tx-separation",
                                f"{path} path touched unexpected address "
                                f"{addr:#x}")
            case FfiEv(name, _, _):
                if name != notify:
                    verdict.add("rx-tx-separation",
                                f"{path} path raised foreign call "
                                f"'{name}'")
    return verdict


def check_device_valid(world: SimWorld) -> Verdict:
    verdict = Verdict()
    if not world.valid_device():
        verdict.add("valid-device", "device invariant broken")
    for why in world.rejections:
        verdict.add("valid-device", f"model rejection: {why}")
    return verdict


def check_all(session) -> Verdict:
    """Every session-level property at once (separation is checked by
    dedicated per-path runs instead). Oracle rejections surface through
    check_device_valid."""
    verdict = Verdict()
    verdict.extend(check_queue_bounds(session.world.history))
    verdict.extend(check_signal_protocol(session.trace,
                                         session.world.history))
    verdict.extend(check_data_integrity(session.trace))
    verdict.extend(check_device_valid(session.world))
    return verdict
