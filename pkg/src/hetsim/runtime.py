"""Host API of the heterogeneous platform.

A `Platform` wraps one simulated fabric and exposes the host-side entry
points: configure from a manifest, set algorithm parameters, request and
release fabric memory, move images in and results out, start, reset and
wait for a core. `surf_detect` composes them into a single call for users
who only want keypoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
import yaml

from . import surf_core
from .errors import (
    BadFree,
    BadManifest,
    Busy,
    BusError,
    ConfigFileNotFound,
    NotRunning,
    SlotOccupied,
    UnknownParameter,
)
from .fabric import AddressMap, Direction, Fabric, TimingLedger
from .ipcore import AP_START, CTRL, ControlState, IpCore, IpModel, Register, RegisterSpec
from .surf_core import InterestPoint, SurfDetect, SurfParams

log = logging.getLogger(__name__)

DEFAULT_MANIFEST = Path(__file__).parent / "manifests" / "surf_detect.yaml"

# factories for the `model` key of a manifest IP entry
MODELS: dict[str, Callable[[], IpModel]] = {"surf_detect": SurfDetect}


def register_model(key: str, factory: Callable[[], IpModel]) -> None:
    MODELS[key] = factory


MANIFEST_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lib_name", "ips"],
    "properties": {
        "lib_name": {"type": "string"},
        "config_latency_s": {"type": "number", "minimum": 0},
        "ips": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "model", "slot"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "model": {"type": "string"},
                    "slot": {"type": "integer", "minimum": 0},
                    "registers": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["name", "offset"],
                            "properties": {
                                "name": {"type": "string"},
                                "offset": {"type": "integer", "minimum": 0},
                                "access": {"enum": ["RW", "RO"]},
                                "width": {"const": 32},
                            },
                        },
                    },
                    "parameters": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["register"],
                            "properties": {
                                "register": {"type": "string"},
                                "encoding": {"enum": ["u32", "i32", "q16.16"]},
                            },
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class ParamSpec:
    register: str
    encoding: str = "u32"

    def encode(self, value) -> int:
        if self.encoding == "q16.16":
            raw = surf_core.to_q16(float(value))
            lo, hi = -(1 << 31), (1 << 31) - 1
        else:
            if int(value) != value:
                raise ValueError(f"{self.register}: {self.encoding} needs an integer, got {value!r}")
            raw = int(value)
            lo, hi = (0, (1 << 32) - 1) if self.encoding == "u32" else (-(1 << 31), (1 << 31) - 1)
        if not lo <= raw <= hi:
            raise ValueError(f"{self.register}: {value!r} does not fit {self.encoding}")
        return raw & 0xFFFF_FFFF


@dataclass(frozen=True)
class IpEntry:
    name: str
    model: str
    slot: int
    registers: RegisterSpec | None
    parameters: dict[str, ParamSpec]


@dataclass(frozen=True)
class IpManifest:
    lib_name: str
    ips: tuple[IpEntry, ...]
    config_latency_s: float = 2.0


def load_manifest(path) -> IpManifest:
    path = Path(path)
    if not path.is_file():
        raise ConfigFileNotFound(str(path))
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
        jsonschema.validate(doc, MANIFEST_SCHEMA)
    except (yaml.YAMLError, UnicodeDecodeError) as exc:
        raise BadManifest(f"{path}: {exc}") from exc
    except jsonschema.ValidationError as exc:
        raise BadManifest(f"{path}: {exc.message}") from exc
    ips = []
    for entry in doc["ips"]:
        regs = None
        if "registers" in entry:
            try:
                regs = RegisterSpec(Register(r["offset"], r["name"], r.get("access", "RW")) for r in entry["registers"])
            except ValueError as exc:
                raise BadManifest(f"{entry['name']}: {exc}") from exc
        params = {k: ParamSpec(v["register"], v.get("encoding", "u32")) for k, v in entry.get("parameters", {}).items()}
        ips.append(IpEntry(entry["name"], entry["model"], entry["slot"], regs, params))
    names = [ip.name for ip in ips]
    if len(set(names)) != len(names):
        raise BadManifest(f"{path}: duplicate IP names")
    return IpManifest(doc["lib_name"], tuple(ips), float(doc.get("config_latency_s", 2.0)))


@dataclass(eq=False)
class IpHandle:
    name: str
    slot: int
    base: int
    registers: RegisterSpec
    parameters: dict[str, ParamSpec]
    core: IpCore = field(repr=False)

    def addr(self, register: str) -> int:
        return self.base + self.registers.offset(register)


@dataclass
class AlgorithmInfo:
    lib_name: str
    ips: dict[str, IpHandle]
    ledger: TimingLedger

    def __getitem__(self, name: str) -> IpHandle:
        return self.ips[name]


@dataclass(frozen=True, eq=False)
class MemHandle:
    offset: int
    length: int

    @property
    def nbytes(self) -> int:
        return self.length


class Platform:
    """One simulated ARM+FPGA board. Calls must be serialized by the caller."""

    def __init__(self, fabric: Fabric | None = None, deferred: bool = False, **ledger_opts):
        if fabric is None:
            fabric = Fabric(AddressMap(), TimingLedger(**ledger_opts))
        elif ledger_opts:
            raise TypeError("pass ledger options or a fabric, not both")
        self.fabric = fabric
        self.deferred = deferred
        self.info: AlgorithmInfo | None = None
        self._live: dict[int, MemHandle] = {}

    @property
    def ledger(self) -> TimingLedger:
        return self.fabric.ledger

    def _check_entry(self, ip: IpEntry, manifest_path) -> IpModel:
        if ip.model not in MODELS:
            raise BadManifest(f"{manifest_path}: unknown model {ip.model!r}")
        if not 0 <= ip.slot < self.fabric.map.max_slots:
            raise BadManifest(f"{manifest_path}: slot {ip.slot} outside 0..{self.fabric.map.max_slots - 1}")
        model = MODELS[ip.model]()
        spec = model.register_spec
        if ip.registers is not None:
            declared = [(r.offset, r.name, r.access) for r in ip.registers]
            actual = [(r.offset, r.name, r.access) for r in spec]
            if sorted(declared) != sorted(actual):
                raise BadManifest(f"{ip.name}: declared registers do not match model {ip.model!r}")
        for pname, p in ip.parameters.items():
            if p.register not in spec.by_name or p.register == "CTRL":
                raise BadManifest(f"{ip.name}: parameter {pname} maps to unknown register {p.register}")
        return model

    def config(self, lib_name: str, manifest_file=DEFAULT_MANIFEST) -> AlgorithmInfo:
        manifest = load_manifest(manifest_file)
        slots = [ip.slot for ip in manifest.ips]
        if len(set(slots)) != len(slots):
            raise SlotOccupied(f"{manifest_file}: two IPs share a slot")
        models = [self._check_entry(ip, manifest_file) for ip in manifest.ips]
        if lib_name != manifest.lib_name:
            log.info("config label %r differs from manifest lib_name %r", lib_name, manifest.lib_name)
        self.fabric.unmount_all()
        handles = {}
        for ip, model in zip(manifest.ips, models):
            base = self.fabric.mount_ip(ip.slot, model, deferred=self.deferred)
            handles[ip.name] = IpHandle(ip.name, ip.slot, base, model.register_spec,
                                        dict(ip.parameters), self.fabric.core(ip.slot))
        self.ledger.charge_config(manifest.config_latency_s)
        self.info = AlgorithmInfo(lib_name, handles, self.ledger)
        return self.info

    def _mounted(self, ip: IpHandle) -> IpCore:
        if self.fabric.slots.get(ip.slot) is not ip.core:
            raise BusError(f"{ip.name} is no longer mounted (stale handle)")
        return ip.core

    def algorithm_set(self, ip: IpHandle, parameter_name: str, parameter_value) -> None:
        core = self._mounted(ip)
        if parameter_name not in ip.parameters:
            raise UnknownParameter(f"{ip.name} has no parameter {parameter_name!r}")
        if core.state is not ControlState.IDLE:
            raise Busy(f"{ip.name} is {core.state.value}")
        spec = ip.parameters[parameter_name]
        self.fabric.reg_write(ip.addr(spec.register), spec.encode(parameter_value))

    def fpga_mem_request(self, size: int) -> MemHandle:
        handle = MemHandle(self.fabric.mem_alloc(size), size)
        self._live[handle.offset] = handle
        return handle

    def fpga_mem_release(self, handle: MemHandle) -> None:
        if self._live.get(getattr(handle, "offset", None)) is not handle:
            raise BadFree(f"{handle!r} is not a live handle of this platform")
        self.fabric.mem_free(handle.offset)
        del self._live[handle.offset]

    def _live_handle(self, handle: MemHandle) -> MemHandle:
        if self._live.get(getattr(handle, "offset", None)) is not handle:
            raise BusError(f"{handle!r} is not a live handle of this platform")
        return handle

    def arm_tx(self, host_source, fabric_destination: MemHandle, ncols: int, nrows: int) -> None:
        """Pack nrows*ncols 8-bit pixels one per 32-bit word and copy them to the fabric."""
        dest = self._live_handle(fabric_destination)
        n = ncols * nrows
        if ncols <= 0 or nrows <= 0:
            raise ValueError("ncols and nrows must be positive")
        src = np.asarray(host_source).reshape(-1)
        if src.size < n:
            raise ValueError(f"host buffer holds {src.size} pixels, need {n}")
        if 4 * n > dest.length:
            raise BusError(f"destination block of {dest.length} bytes cannot hold {4 * n}")
        words = (src[:n].astype(np.int64) & 0xFF).astype("<u4")
        self.fabric.mem_copy(Direction.HOST_TO_FABRIC, dest.offset, words, 4 * n)

    def arm_rx(self, host_destination, fabric_source: MemHandle, ncols: int, nrows: int) -> np.ndarray:
        """Copy nrows*ncols raw 32-bit words back to the host. Returns the destination array."""
        src = self._live_handle(fabric_source)
        n = ncols * nrows
        if ncols <= 0 or nrows <= 0:
            raise ValueError("ncols and nrows must be positive")
        if 4 * n > src.length:
            raise BusError(f"{4 * n} bytes requested from a {src.length}-byte block")
        if host_destination is None:
            host_destination = np.zeros(n, dtype="<u4")
        self.fabric.mem_copy(Direction.FABRIC_TO_HOST, src.offset, host_destination, 4 * n)
        return host_destination

    def start(self, ip: IpHandle) -> None:
        core = self._mounted(ip)
        if core.state is not ControlState.IDLE:
            raise Busy(f"{ip.name} is {core.state.value}")
        self.fabric.reg_write(ip.base + CTRL, AP_START)

    def reset(self, ip: IpHandle) -> None:
        self._mounted(ip).reset()

    def poll_done(self, ip: IpHandle) -> bool:
        return self._mounted(ip).poll_done()

    def wait_done(self, ip: IpHandle) -> None:
        """Block (in simulated time) until the run finishes, then consume AP_DONE."""
        core = self._mounted(ip)
        if core.state is ControlState.IDLE:
            raise NotRunning(f"{ip.name} has no run in flight")
        core.advance()
        self.fabric.reg_read(ip.base + CTRL)


def config(lib_name: str, manifest_file, platform: Platform) -> AlgorithmInfo:
    return platform.config(lib_name, manifest_file)


def surf_detect(platform: Platform, image, params: SurfParams = SurfParams(),
                ip_name: str = "SURF_detect") -> list[InterestPoint]:
    """Detect keypoints on the fabric: transfer, configure, run, read back, decode."""
    params.validate()
    if platform.info is None:
        raise NotRunning("platform is not configured")
    ip = platform.info[ip_name]
    img = surf_core.check_pixels(image)
    rows, cols = img.shape
    capacity = surf_core.result_capacity_words(rows, cols, params)
    src = platform.fpga_mem_request(4 * rows * cols)
    dst = platform.fpga_mem_request(4 * capacity)
    try:
        platform.arm_tx(img, src, cols, rows)
        for name, value in (("rows", rows), ("cols", cols),
                            ("byte_rdoffset", src.offset), ("byte_wroffset", dst.offset),
                            ("MinHessian", params.min_hessian), ("nOctaves", params.n_octaves),
                            ("Intervals", params.intervals), ("PyramidalLevel", params.levels)):
            platform.algorithm_set(ip, name, value)
        platform.start(ip)
        platform.wait_done(ip)
        head = platform.arm_rx(None, dst, 1, 1)
        count = int(head[0])
        if count == surf_core.ERROR_SENTINEL:
            raise BusError(f"{ip_name} rejected its register values")
        if count == 0:
            return []
        words = platform.arm_rx(None, dst, 1 + surf_core.RECORD_WORDS * count, 1)
        return surf_core.decode_words(words)
    finally:
        platform.fpga_mem_release(src)
        platform.fpga_mem_release(dst)
