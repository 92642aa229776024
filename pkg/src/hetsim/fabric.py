"""Simulated FPGA side of the platform.

The fabric owns a fixed address map (one register window per IP slot plus a
byte-addressed memory region), a first-fit allocator over that memory and
the simulated-time ledger every transfer and computation is charged to.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import BadFree, BadSlot, BusError, OutOfFabricMemory, SlotOccupied
from .ipcore import IpCore, IpModel

log = logging.getLogger(__name__)

REG_BASE = 0x4000_0000
REG_STRIDE = 0x1_0000
MAX_SLOTS = 16
MEM_BASE = 0x8000_0000
MEM_SIZE = 256 * 1024 * 1024
ALIGN = 64

CORE_CLOCK_HZ = 62.5e6
BUS_WIDTH_BYTES = 2
# Effective transfer rate of the 16-bit host bus: one word per bus beat.
DEFAULT_BUS_CLOCK_HZ = 2e6
CONFIG_LATENCY_S = 2.0


@dataclass(frozen=True)
class AddressMap:
    reg_base: int = REG_BASE
    reg_stride: int = REG_STRIDE
    max_slots: int = MAX_SLOTS
    mem_base: int = MEM_BASE
    mem_size: int = MEM_SIZE

    def __post_init__(self):
        if self.mem_size <= 0 or self.mem_size % ALIGN:
            raise ValueError(f"mem_size must be a positive multiple of {ALIGN}")
        reg_end = self.reg_base + self.reg_stride * self.max_slots
        mem_end = self.mem_base + self.mem_size
        if self.reg_base < mem_end and self.mem_base < reg_end:
            raise ValueError("register windows overlap the memory region")
        if mem_end > 1 << 32 or reg_end > 1 << 32:
            raise ValueError("address map exceeds the 32-bit space")

    def slot_base(self, slot: int) -> int:
        if not 0 <= slot < self.max_slots:
            raise BadSlot(f"slot {slot} outside 0..{self.max_slots - 1}")
        return self.reg_base + slot * self.reg_stride

    def encode(self, slot: int, offset: int) -> int:
        if not 0 <= offset < self.reg_stride:
            raise BusError(f"offset {offset:#x} outside a slot window")
        return self.slot_base(slot) + offset

    def decode(self, addr: int) -> tuple[int, int]:
        """Split a register address into (slot, offset within window)."""
        rel = addr - self.reg_base
        if rel < 0 or rel >= self.reg_stride * self.max_slots:
            raise BusError(f"{addr:#010x} is not in a register window")
        return divmod(rel, self.reg_stride)


class Kind(enum.Enum):
    CONFIG = "config"
    TX = "tx"
    COMPUTE = "compute"
    RX = "rx"


@dataclass(frozen=True)
class LedgerEntry:
    kind: Kind
    duration: Fraction
    payload: int  # bytes for TX/RX, cycles for COMPUTE, 0 for CONFIG

    @property
    def seconds(self) -> float:
        return float(self.duration)


@dataclass
class TimingLedger:
    """Simulated-time account. Durations are exact rationals in seconds."""

    core_clock_hz: float = CORE_CLOCK_HZ
    bus_width_bytes: int = BUS_WIDTH_BYTES
    bus_clock_hz: float = DEFAULT_BUS_CLOCK_HZ
    config_latency_s: float = CONFIG_LATENCY_S
    entries: list[LedgerEntry] = field(default_factory=list)

    def _append(self, kind: Kind, duration: Fraction, payload: int) -> LedgerEntry:
        entry = LedgerEntry(kind, duration, payload)
        self.entries.append(entry)
        log.debug("ledger %s %s (%s s)", kind.value, payload, float(duration))
        return entry

    def bus_duration(self, nbytes: int) -> Fraction:
        beats = math.ceil(nbytes / self.bus_width_bytes)
        return Fraction(beats) / Fraction(self.bus_clock_hz)

    def compute_duration(self, cycles: int) -> Fraction:
        return Fraction(cycles) / Fraction(self.core_clock_hz)

    def charge_config(self, latency_s: float | None = None) -> LedgerEntry:
        latency = self.config_latency_s if latency_s is None else latency_s
        return self._append(Kind.CONFIG, Fraction(latency), 0)

    def charge_tx(self, nbytes: int) -> LedgerEntry:
        return self._append(Kind.TX, self.bus_duration(nbytes), nbytes)

    def charge_rx(self, nbytes: int) -> LedgerEntry:
        return self._append(Kind.RX, self.bus_duration(nbytes), nbytes)

    def charge_compute(self, cycles: int) -> LedgerEntry:
        return self._append(Kind.COMPUTE, self.compute_duration(cycles), cycles)

    def total(self) -> Fraction:
        return sum((e.duration for e in self.entries), Fraction(0))

    def breakdown(self) -> dict[str, Fraction]:
        out = {k.value: Fraction(0) for k in Kind}
        for e in self.entries:
            out[e.kind.value] += e.duration
        out["total"] = self.total()
        return out

    def payload(self, kind: Kind) -> int:
        return sum(e.payload for e in self.entries if e.kind is kind)

    def clear(self):
        self.entries.clear()


@dataclass
class _Block:
    offset: int
    length: int
    free: bool


class FabricMemory:
    """Byte-addressed fabric memory with a first-fit, 64-byte aligned allocator."""

    def __init__(self, size: int = MEM_SIZE):
        if size <= 0 or size % ALIGN:
            raise ValueError(f"memory size must be a positive multiple of {ALIGN}")
        self.size = size
        # np.zeros maps pages lazily, so a large arena costs nothing until touched
        self.data = np.zeros(size, dtype=np.uint8)
        self.blocks = [_Block(0, size, True)]

    def check_range(self, offset: int, length: int):
        if offset < 0 or length < 0 or offset + length > self.size:
            raise BusError(f"range [{offset}, {offset + length}) outside fabric memory")

    def read(self, offset: int, length: int) -> bytes:
        self.check_range(offset, length)
        return self.data[offset:offset + length].tobytes()

    def write(self, offset: int, payload) -> None:
        buf = np.frombuffer(memoryview(payload).cast("B"), dtype=np.uint8)
        self.check_range(offset, buf.size)
        self.data[offset:offset + buf.size] = buf

    def alloc(self, size: int) -> int:
        if size <= 0:
            raise ValueError("allocation size must be positive")
        need = -(-size // ALIGN) * ALIGN
        for i, blk in enumerate(self.blocks):
            if blk.free and blk.length >= need:
                if blk.length > need:
                    self.blocks.insert(i + 1, _Block(blk.offset + need, blk.length - need, True))
                blk.length = need
                blk.free = False
                return blk.offset
        raise OutOfFabricMemory(f"no free block of {need} bytes")

    def free(self, offset: int) -> None:
        for i, blk in enumerate(self.blocks):
            if blk.offset == offset and not blk.free:
                break
        else:
            raise BadFree(f"offset {offset} is not a live allocation")
        blk.free = True
        if i + 1 < len(self.blocks) and self.blocks[i + 1].free:
            blk.length += self.blocks.pop(i + 1).length
        if i > 0 and self.blocks[i - 1].free:
            self.blocks[i - 1].length += self.blocks.pop(i).length

    def live_blocks(self) -> list[tuple[int, int]]:
        return [(b.offset, b.length) for b in self.blocks if not b.free]

    def block_length(self, offset: int) -> int:
        for b in self.blocks:
            if b.offset == offset and not b.free:
                return b.length
        raise BadFree(f"offset {offset} is not a live allocation")


class Direction(enum.Enum):
    HOST_TO_FABRIC = "host->fabric"
    FABRIC_TO_HOST = "fabric->host"


class Fabric:
    """Register windows, fabric memory and ledger of one simulated FPGA."""

    def __init__(self, address_map: AddressMap | None = None, ledger: TimingLedger | None = None):
        self.map = address_map or AddressMap()
        self.memory = FabricMemory(self.map.mem_size)
        self.ledger = ledger if ledger is not None else TimingLedger()
        self.slots: dict[int, IpCore] = {}

    def mount_ip(self, slot: int, ip: IpModel, deferred: bool = False) -> int:
        base = self.map.slot_base(slot)
        if slot in self.slots:
            raise SlotOccupied(f"slot {slot} already holds {self.slots[slot].name}")
        self.slots[slot] = IpCore(ip, self.memory, self.ledger, deferred=deferred)
        log.info("mounted %s at slot %d (%#010x)", self.slots[slot].name, slot, base)
        return base

    def unmount_all(self):
        self.slots.clear()

    def core(self, slot: int) -> IpCore:
        if slot not in self.slots:
            raise BusError(f"slot {slot} is empty")
        return self.slots[slot]

    def _route(self, addr: int) -> tuple[IpCore, int]:
        if addr % 4:
            raise BusError(f"misaligned register access at {addr:#010x}")
        slot, offset = self.map.decode(addr)
        if slot not in self.slots:
            raise BusError(f"{addr:#010x}: slot {slot} is empty")
        return self.slots[slot], offset

    def reg_read(self, addr: int) -> int:
        core, offset = self._route(addr)
        return core.read(offset)

    def reg_write(self, addr: int, value: int) -> None:
        core, offset = self._route(addr)
        core.write(offset, value)

    def mem_alloc(self, size: int) -> int:
        return self.memory.alloc(size)

    def mem_free(self, offset: int) -> None:
        self.memory.free(offset)

    def mem_copy(self, direction: Direction, offset: int, buffer, length: int) -> None:
        """Copy `length` bytes between a host buffer and fabric memory, charging the bus."""
        self.memory.check_range(offset, length)
        view = memoryview(buffer).cast("B")
        if len(view) < length:
            raise BusError(f"host buffer holds {len(view)} bytes, need {length}")
        if direction is Direction.HOST_TO_FABRIC:
            self.memory.write(offset, view[:length])
            self.ledger.charge_tx(length)
        else:
            view[:length] = self.memory.read(offset, length)
            self.ledger.charge_rx(length)
