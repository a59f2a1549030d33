"""DMA descriptor rings and SPSC queues of the simulated device world.

Desk-scale versions of the driver's data structures: rings decompose into
three integer sequences (data addresses, lengths, flag bitfields), queues
use free-running head/tail counters with a signal-request flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

ADDR_BOUND = 1 << 32   # data pointers are 32-bit
LEN_BOUND = 1 << 16    # data lengths are 16-bit
DEV_OWN = 1            # flag bit: descriptor owned by the device


@dataclass
class DescriptorRing:
    """Hardware descriptor ring: one (address, length, flags) triple per
    slot. head/tail are the device's scan cursors; the driver keeps its own
    indices in driver memory."""

    capacity: int
    addrs: list[int] = field(default_factory=list)
    lens: list[int] = field(default_factory=list)
    flags: list[int] = field(default_factory=list)
    head: int = 0
    tail: int = 0

    def __post_init__(self) -> None:
        self.addrs = self.addrs or [0] * self.capacity
        self.lens = self.lens or [0] * self.capacity
        self.flags = self.flags or [0] * self.capacity

    def slot_valid(self, i: int) -> bool:
        return (0 <= self.addrs[i] < ADDR_BOUND
                and 0 <= self.lens[i] < LEN_BOUND
                and self.flags[i] in (0, DEV_OWN))

    def valid(self) -> bool:
        """The device-state invariant: bitfields clean, addresses 32-bit,
        lengths 16-bit."""
        return (0 <= self.head < self.capacity
                and 0 <= self.tail < self.capacity
                and all(self.slot_valid(i) for i in range(self.capacity)))

    def owned_by_device(self) -> list[int]:
        return [i for i in range(self.capacity)
                if self.flags[i] & DEV_OWN]


@dataclass
class SpscQueue:
    """Bounded single-producer single-consumer queue with free-running
    counters. entries[k % capacity] holds (address, length)."""

    capacity: int
    head: int = 0
    tail: int = 0
    entries: list[tuple[int, int]] = field(default_factory=list)
    signal_requested: int = 0

    def __post_init__(self) -> None:
        if self.capacity & (self.capacity - 1):
            raise ValueError("queue capacity must be a power of two")
        self.entries = self.entries or [(0, 0)] * self.capacity

    @property
    def used(self) -> int:
        return self.tail - self.head

    def bounds_ok(self) -> bool:
        return 0 <= self.used <= self.capacity

    @property
    def full(self) -> bool:
        return self.used >= self.capacity

    @property
    def empty(self) -> bool:
        return self.used == 0

    def push(self, addr: int, length: int) -> None:
        """Producer side; caller checks for space first."""
        self.entries[self.tail % self.capacity] = (addr, length)
        self.tail += 1

    def pop(self) -> tuple[int, int]:
        entry = self.entries[self.head % self.capacity]
        self.head += 1
        return entry
