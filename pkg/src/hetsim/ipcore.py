"""IP behavioral-model contract and the block-level start/done/idle handshake.

Every IP window carries a CTRL register at offset 0x00:

    bit0 AP_START  host writes 1 to start; self-clearing
    bit1 AP_DONE   set when a run completes; cleared by reading CTRL
    bit2 AP_IDLE   1 while the core is idle
    bit3 AP_READY  1 while the core can accept a start
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass
from typing import Mapping, Protocol

from .errors import BusError, StartIgnored, WriteIgnored

log = logging.getLogger(__name__)

CTRL = 0x00
AP_START = 1 << 0
AP_DONE = 1 << 1
AP_IDLE = 1 << 2
AP_READY = 1 << 3
WORD_MASK = 0xFFFF_FFFF
WINDOW_SIZE = 0x1_0000


class ControlState(enum.Enum):
    IDLE = "idle"
    BUSY = "busy"
    DONE_LATCHED = "done"


@dataclass(frozen=True)
class Register:
    offset: int
    name: str
    access: str = "RW"  # "RW" or "RO"
    width: int = 32


class RegisterSpec:
    """Ordered register layout of one slot window."""

    def __init__(self, registers):
        self.registers = tuple(registers)
        self.by_offset = {}
        self.by_name = {}
        for reg in self.registers:
            if reg.offset % 4 or not 0 <= reg.offset < WINDOW_SIZE:
                raise ValueError(f"register {reg.name}: bad offset {reg.offset:#x}")
            if reg.access not in ("RW", "RO"):
                raise ValueError(f"register {reg.name}: access must be RW or RO")
            if reg.width != 32:
                raise ValueError(f"register {reg.name}: only 32-bit registers are modeled")
            if reg.offset in self.by_offset or reg.name in self.by_name:
                raise ValueError(f"duplicate register {reg.name} at {reg.offset:#x}")
            self.by_offset[reg.offset] = reg
            self.by_name[reg.name] = reg
        ctrl = self.by_offset.get(CTRL)
        if ctrl is None or ctrl.name != "CTRL":
            raise ValueError("register spec must place CTRL at offset 0x00")

    def __iter__(self):
        return iter(self.registers)

    def __len__(self):
        return len(self.registers)

    def offset(self, name: str) -> int:
        return self.by_name[name].offset


class IpModel(Protocol):
    """Behavioral plugin mounted in a slot.

    `execute` gets a snapshot of the non-CTRL registers and the fabric memory
    and returns the number of core clock cycles the run took. It must be
    deterministic in its inputs.
    """

    name: str
    register_spec: RegisterSpec

    def execute(self, registers: Mapping[str, int], memory) -> int: ...


class IpCore:
    """Register file plus handshake state machine wrapped around one IpModel.

    With ``deferred=False`` the model runs inside the start write, so the next
    CTRL read already reports DONE. With ``deferred=True`` the run is pending
    until `advance()` or the next CTRL read, which reports BUSY first.
    """

    def __init__(self, model: IpModel, memory, ledger, deferred: bool = False):
        self.model = model
        self.memory = memory
        self.ledger = ledger
        self.deferred = deferred
        self.state = ControlState.IDLE
        self.executions = 0
        self._pending: dict[str, int] | None = None
        self.regs = {r.name: 0 for r in model.register_spec if r.offset != CTRL}

    @property
    def name(self) -> str:
        return self.model.name

    @property
    def spec(self) -> RegisterSpec:
        return self.model.register_spec

    def ctrl_word(self) -> int:
        word = 0
        if self.state is ControlState.DONE_LATCHED:
            word |= AP_DONE
        if self.state is ControlState.IDLE:
            word |= AP_IDLE
        if self.state is not ControlState.BUSY:
            word |= AP_READY
        return word

    def read(self, offset: int) -> int:
        reg = self.spec.by_offset.get(offset)
        if reg is None:
            raise BusError(f"{self.name}: no register at offset {offset:#x}")
        if offset != CTRL:
            return self.regs[reg.name]
        word = self.ctrl_word()
        if self.state is ControlState.DONE_LATCHED:
            self.state = ControlState.IDLE
        elif self.state is ControlState.BUSY:
            self.advance()
        return word

    def write(self, offset: int, value: int) -> None:
        reg = self.spec.by_offset.get(offset)
        if reg is None:
            raise BusError(f"{self.name}: no register at offset {offset:#x}")
        value &= WORD_MASK
        if offset == CTRL:
            if value & ~AP_START:
                log.warning("%s: CTRL status bits are device-owned, write ignored", self.name)
                warnings.warn(f"{self.name}: CTRL status bits are read-only", WriteIgnored, stacklevel=2)
            if value & AP_START:
                self.start()
            return
        if reg.access == "RO":
            log.warning("%s: %s is read-only, write ignored", self.name, reg.name)
            warnings.warn(f"{self.name}: {reg.name} is read-only", WriteIgnored, stacklevel=2)
            return
        self.regs[reg.name] = value

    def start(self) -> bool:
        """Accept a start pulse. Returns False (and warns) if the core is not idle."""
        if self.state is not ControlState.IDLE:
            log.warning("%s: start while %s ignored", self.name, self.state.value)
            warnings.warn(f"{self.name}: start while {self.state.value}", StartIgnored, stacklevel=2)
            return False
        self.state = ControlState.BUSY
        self._pending = dict(self.regs)
        if not self.deferred:
            self.advance()
        return True

    def advance(self) -> None:
        """Finish the in-flight run, if any."""
        if self.state is not ControlState.BUSY:
            return
        snapshot, self._pending = self._pending, None
        cycles = int(self.model.execute(snapshot, self.memory))
        self.executions += 1
        self.ledger.charge_compute(cycles)
        self.state = ControlState.DONE_LATCHED

    def reset(self) -> None:
        self._pending = None
        self.state = ControlState.IDLE
        for name in self.regs:
            self.regs[name] = 0

    def poll_done(self) -> bool:
        return self.state is ControlState.DONE_LATCHED
