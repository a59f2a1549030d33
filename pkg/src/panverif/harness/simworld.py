"""Executable device/OS world used as the mini-driver's oracle.

The world owns the simulated NIC (rings + interrupt register) and the four
SPSC queues shared with the OS. It answers the interpreter's shared-memory
and foreign-call requests, journals everything the protocol checkers need,
and rejects any driver store that violates the device model's
preconditions.

Device/OS nondeterminism is a schedule of actions; `run_session` applies
one action between successive driver passes, which keeps runs deterministic
and lets small exhaustive enumerations reach deep interleavings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from ..interp import EnvOracle
from .rings import DEV_OWN, DescriptorRing, SpscQueue


class OracleRejection(Exception):
    """The driver violated a model `requires` (bad register value, invalid
    device state)."""


# Address layout; mirrors the constants in corpus/minidriver.pnk.
REG_BASE = 0x1000_0000
IRQ_MASK = 3
EIR_RXF = 1
EIR_TXF = 2

RX_RING = 0x2000_0000
TX_RING = 0x2100_0000
RING_CAP = 2
SLOT_STRIDE = 24  # addr, len, flags: three words per slot

RX_FREE = 0x3000_0000
RX_USED = 0x3100_0000
TX_AVAIL = 0x3200_0000
TX_DONE = 0x3300_0000
QUEUE_CAP = 2
# queue block: head +0, tail +8, signal flag +16, entries +24 (addr, len)
Q_HEAD, Q_TAIL, Q_FLAG, Q_ENTRIES = 0, 8, 16, 24

RX_BUF_BASE = 0x4000_0000
TX_BUF_BASE = 0x5000_0000

ACTIONS = ("dev", "os_rx", "os_tx", "os_req")

RX_REGIONS = ("rx_ring", "rx_free", "rx_used")
TX_REGIONS = ("tx_ring", "tx_avail", "tx_done")


@dataclass
class SimDevice:
    """The NIC: RX/TX descriptor rings plus the interrupt event register."""

    rx: DescriptorRing = field(default_factory=lambda: DescriptorRing(RING_CAP))
    tx: DescriptorRing = field(default_factory=lambda: DescriptorRing(RING_CAP))
    eir: int = 0
    rx_len_seq: int = 0

    def valid(self) -> bool:
        return self.rx.valid() and self.tx.valid() and 0 <= self.eir < 4

    def receive(self) -> bool:
        """Complete one driver-provided RX slot: the device writes the
        received length and hands the descriptor back."""
        owned = self.rx.owned_by_device()
        if not owned:
            return False
        i = owned[0]
        self.rx_len_seq += 1
        self.rx.lens[i] = (100 + self.rx_len_seq * 531) % (1 << 16)
        self.rx.flags[i] = 0
        self.eir |= EIR_RXF
        return True

    def send(self) -> bool:
        owned = self.tx.owned_by_device()
        if not owned:
            return False
        self.tx.flags[owned[0]] = 0
        self.eir |= EIR_TXF
        return True


@dataclass
class QueueEvent:
    kind: str        # change | os-change | notify | clear | request
    flag: int        # request flag at the time of the event
    head: int
    tail: int


class SimWorld(EnvOracle):
    """EnvOracle over the simulated device and OS queues."""

    def __init__(self, schedule: tuple[str, ...] = ()):
        self.device = SimDevice()
        self.queues: dict[str, SpscQueue] = {
            "rx_free": SpscQueue(QUEUE_CAP),
            "rx_used": SpscQueue(QUEUE_CAP),
            "tx_avail": SpscQueue(QUEUE_CAP),
            "tx_done": SpscQueue(QUEUE_CAP),
        }
        self.queue_bases = {"rx_free": RX_FREE, "rx_used": RX_USED,
                            "tx_avail": TX_AVAIL, "tx_done": TX_DONE}
        self.pending = list(schedule)
        self.history: dict[str, list[QueueEvent]] = {
            name: [] for name in self.queues}
        self.rejections: list[str] = []
        self.buf_seq = 0
        self.txbuf_seq = 0

    # -- schedule -------------------------------------------------------------

    def step(self, action: str) -> None:
        """Apply one environment action."""
        match action:
            case "dev":
                self.device.receive()
                self.device.send()
            case "os_rx":
                q = self.queues["rx_free"]
                if not q.full:
                    self.buf_seq += 1
                    q.push(RX_BUF_BASE + self.buf_seq * 0x1000, 2048)
                    self._journal("rx_free", "os-change")
            case "os_tx":
                q = self.queues["tx_avail"]
                if not q.full:
                    self.txbuf_seq += 1
                    q.push(TX_BUF_BASE + self.txbuf_seq * 0x1000,
                           300 + (self.txbuf_seq * 993) % 60000)
                    self._journal("tx_avail", "os-change")
            case "os_req":
                for name in ("rx_used", "tx_done"):
                    self.queues[name].signal_requested = 1
                    self._journal(name, "request")
            case other:
                raise ValueError(f"unknown schedule action {other!r}")

    def _journal(self, name: str, kind: str) -> None:
        q = self.queues[name]
        self.history[name].append(
            QueueEvent(kind, q.signal_requested, q.head, q.tail))

    # -- device state checks ----------------------------------------------------

    def _require(self, ok: bool, why: str) -> None:
        if not ok:
            self.rejections.append(why)
            raise OracleRejection(why)

    def valid_device(self) -> bool:
        return self.device.valid()

    # -- EnvOracle ---------------------------------------------------------------

    def shared_load(self, addr: int, opsize: int) -> int:
        return self._read(addr)

    def shared_store(self, addr: int, opsize: int, value: int) -> None:
        self._write(addr, value)

    def ffi(self, name: str, data: bytes) -> bytes:
        if name == "notify_rx":
            self._journal("rx_used", "notify")
        elif name == "notify_tx":
            self._journal("tx_done", "notify")
        return b""

    # -- address decoding ----------------------------------------------------------

    def _ring_at(self, addr: int) -> tuple[DescriptorRing, int, int] | None:
        for base, ring in ((RX_RING, self.device.rx),
                           (TX_RING, self.device.tx)):
            off = addr - base
            if 0 <= off < RING_CAP * SLOT_STRIDE:
                return ring, off // SLOT_STRIDE, off % SLOT_STRIDE
        return None

    def _queue_at(self, addr: int) -> tuple[str, SpscQueue, int] | None:
        for name, base in self.queue_bases.items():
            off = addr - base
            if 0 <= off < Q_ENTRIES + QUEUE_CAP * 16:
                return name, self.queues[name], off
        return None

    def _read(self, addr: int) -> int:
        if addr == REG_BASE:
            return self.device.eir
        ring_hit = self._ring_at(addr)
        if ring_hit:
            ring, slot, off = ring_hit
            return (ring.addrs[slot], ring.lens[slot],
                    ring.flags[slot])[off // 8]
        queue_hit = self._queue_at(addr)
        if queue_hit:
            _, q, off = queue_hit
            if off == Q_HEAD:
                return q.head
            if off == Q_TAIL:
                return q.tail
            if off == Q_FLAG:
                return q.signal_requested
            k, f = divmod(off - Q_ENTRIES, 16)
            return q.entries[k][f // 8]
        raise OracleRejection(f"load outside the modelled world: {addr:#x}")

    def _write(self, addr: int, value: int) -> None:
        if addr == REG_BASE:
            self._require(value == IRQ_MASK,
                          f"EIR store of {value:#x}, not IRQ_MASK")
            self.device.eir &= ~value
            return
        ring_hit = self._ring_at(addr)
        if ring_hit:
            ring, slot, off = ring_hit
            if off == 0:
                ring.addrs[slot] = value
            elif off == 8:
                ring.lens[slot] = value
            else:
                ring.flags[slot] = value
            self._require(ring.slot_valid(slot),
                          f"descriptor slot {slot} left invalid "
                          f"(addr={ring.addrs[slot]:#x}, "
                          f"len={ring.lens[slot]}, "
                          f"flags={ring.flags[slot]})")
            return
        queue_hit = self._queue_at(addr)
        if queue_hit:
            name, q, off = queue_hit
            if off == Q_HEAD:
                q.head = value
                self._journal(name, "change")
            elif off == Q_TAIL:
                q.tail = value
                self._journal(name, "change")
            elif off == Q_FLAG:
                q.signal_requested = value
                self._journal(name, "clear" if value == 0 else "request")
            else:
                k, f = divmod(off - Q_ENTRIES, 16)
                a, l = q.entries[k]
                q.entries[k] = (value, l) if f // 8 == 0 else (a, value)
            return
        raise OracleRejection(f"store outside the modelled world: {addr:#x}")


def device_oracle(sim: SimDevice | None = None,
                  schedule: tuple[str, ...] = ()) -> SimWorld:
    """An EnvOracle over the simulated world; `schedule` enumerates the
    device's and OS's nondeterministic choices (consumed by run_session)."""
    world = SimWorld(schedule)
    if sim is not None:
        world.device = sim
    return world


def enumerate_schedules(max_len: int,
                        actions: tuple[str, ...] = ACTIONS
                        ) -> Iterator[tuple[str, ...]]:
    """All action sequences of length 0..max_len, in deterministic order."""
    def rec(prefix: tuple[str, ...], budget: int) -> Iterator[tuple[str, ...]]:
        yield prefix
        if budget == 0:
            return
        for a in actions:
            yield from rec(prefix + (a,), budget - 1)

    yield from rec((), max_len)


@dataclass
class SessionResult:
    """One simulated driver session: world state, concatenated event trace
    and the local-memory image after the last pass."""

    world: SimWorld
    trace: list
    results: list
    memory: bytearray
    rejection: str | None = None

    @property
    def completed(self) -> bool:
        return self.rejection is None and all(
            type(r).__name__ == "Returned" for r in self.results)


def run_session(program, schedule: tuple[str, ...], entry: str = "drive",
                fuel: int = 100_000, memory_bytes: int = 256
                ) -> SessionResult:
    """Apply each schedule action, then run one driver pass, sharing the
    driver's local memory across passes."""
    from ..interp import RunConfig, run_function

    world = SimWorld(schedule)
    memory = bytearray(memory_bytes)
    config = RunConfig(memory_bytes=memory_bytes)
    trace: list = []
    results: list = []
    rejection: str | None = None
    for action in schedule:
        world.step(action)
        try:
            r = run_function(program, entry, [], world, fuel, config, memory)
        except OracleRejection as exc:
            rejection = str(exc)
            break
        results.append(r)
        trace.extend(r.trace)
        if type(r).__name__ != "Returned":
            break
    return SessionResult(world, trace, results, memory, rejection)
