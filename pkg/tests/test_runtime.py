from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from hetsim import runtime
from hetsim.errors import (BadFree, BadManifest, Busy, BusError, ConfigFileNotFound, NotRunning, OutOfFabricMemory,
                           SimError, SlotOccupied, UnknownParameter)
from hetsim.fabric import Kind
from hetsim.ipcore import ControlState
from hetsim.runtime import DEFAULT_MANIFEST, Platform, load_manifest, surf_detect
from hetsim.surf_core import SurfParams, decode_words, detect_fixed, surf_cycles
from hetsim.synth import blob_image

HEADER = "lib_name: surf\nips:\n"
IP = "  - name: {name}\n    model: {model}\n    slot: {slot}\n"


def write_manifest(tmp_path, text, name="m.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_config_base_address(platform, surf_ip):
    assert surf_ip.base == 0x4000_0000
    assert surf_ip.addr("ROWS") == 0x4000_0020
    assert platform.fabric.core(0) is surf_ip.core


def test_config_charges_one_event(platform):
    assert [(e.kind, e.duration) for e in platform.ledger.entries] == [(Kind.CONFIG, 2)]


def test_module_level_config():
    p = Platform()
    info = runtime.config("surf", DEFAULT_MANIFEST, p)
    assert info["SURF_detect"].base == 0x4000_0000
    assert info.ledger is p.ledger


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigFileNotFound):
        Platform().config("surf", tmp_path / "nope.yaml")


@pytest.mark.parametrize("text", [
    HEADER + IP.format(name="A", model="surf_detect", slot=0) + "    colour: red\n",
    HEADER + IP.format(name="A", model="no_such_core", slot=0),
    HEADER + IP.format(name="A", model="surf_detect", slot=16),
    "lib_name: surf\nips: []\n",
    "ips: [{name: A, model: surf_detect, slot: 0}]\n",
    HEADER + IP.format(name="A", model="surf_detect", slot=0) + "    registers:\n      - {name: CTRL, offset: 0}\n",
    HEADER + IP.format(name="A", model="surf_detect", slot=0) + "    parameters:\n      x: {register: NOPE}\n",
    "lib_name: [unclosed\n",
])
def test_config_bad_manifest(tmp_path, text):
    with pytest.raises(BadManifest):
        Platform().config("surf", write_manifest(tmp_path, text))


def test_config_slot_clash_leaves_previous_mounts(tmp_path, platform, surf_ip):
    text = HEADER + IP.format(name="A", model="surf_detect", slot=3) + IP.format(name="B", model="surf_detect", slot=3)
    with pytest.raises(SlotOccupied):
        platform.config("surf", write_manifest(tmp_path, text))
    assert platform.fabric.core(0) is surf_ip.core
    assert len(platform.ledger.entries) == 1


def test_reconfig_tears_down(tmp_path, platform):
    text = HEADER + IP.format(name="A", model="surf_detect", slot=2) + IP.format(name="B", model="surf_detect", slot=5)
    info = platform.config("other", write_manifest(tmp_path, text))
    assert sorted(platform.fabric.slots) == [2, 5]
    assert info["B"].base == 0x4005_0000
    assert [e.kind for e in platform.ledger.entries] == [Kind.CONFIG, Kind.CONFIG]


def test_stale_handle_rejected(tmp_path, platform, surf_ip):
    platform.config("again", DEFAULT_MANIFEST)
    with pytest.raises(BusError):
        platform.start(surf_ip)


def test_shipped_manifest_loads():
    m = load_manifest(DEFAULT_MANIFEST)
    assert m.lib_name == "surf" and m.config_latency_s == 2.0
    assert m.ips[0].parameters["MinHessian"].encoding == "q16.16"


def test_algorithm_set(platform, surf_ip):
    platform.algorithm_set(surf_ip, "MinHessian", 10)
    assert platform.fabric.reg_read(surf_ip.addr("MIN_HESSIAN")) == 655360
    platform.algorithm_set(surf_ip, "rows", 480)
    assert platform.fabric.reg_read(surf_ip.addr("ROWS")) == 480
    platform.algorithm_set(surf_ip, "MinHessian", -1.5)
    assert platform.fabric.reg_read(surf_ip.addr("MIN_HESSIAN")) == (-98304) & 0xFFFFFFFF
    with pytest.raises(UnknownParameter):
        platform.algorithm_set(surf_ip, "bogus", 1)
    with pytest.raises(ValueError):
        platform.algorithm_set(surf_ip, "rows", -1)
    with pytest.raises(ValueError):
        platform.algorithm_set(surf_ip, "rows", 2.5)


def test_algorithm_set_busy():
    p = Platform(deferred=True)
    ip = p.config("surf")["SURF_detect"]
    p.start(ip)
    with pytest.raises(Busy):
        p.algorithm_set(ip, "rows", 10)
    with pytest.raises(Busy):
        p.start(ip)


def test_mem_request_release(platform):
    a = platform.fpga_mem_request(100)
    b = platform.fpga_mem_request(100)
    assert (a.offset, b.offset) == (0, 128)
    platform.fpga_mem_release(a)
    assert platform.fpga_mem_request(10).offset == 0
    with pytest.raises(BadFree):
        platform.fpga_mem_release(a)
    with pytest.raises(BadFree):
        Platform().fpga_mem_release(b)
    with pytest.raises(OutOfFabricMemory):
        platform.fpga_mem_request(1 << 30)


def test_arm_tx_ledger(rng):
    p = Platform(bus_clock_hz=50e6)
    img = rng.integers(0, 256, (240, 320), dtype=np.uint8)
    dst = p.fpga_mem_request(4 * 320 * 240)
    p.arm_tx(img, dst, 320, 240)
    e = p.ledger.entries[-1]
    assert (e.kind, e.payload, e.duration) == (Kind.TX, 307200, Fraction(153600, 50_000_000))
    words = np.frombuffer(p.fabric.memory.read(dst.offset, 16), "<u4")
    assert words.tolist() == img.reshape(-1)[:4].tolist()


def test_arm_tx_small_block(platform, rng):
    small = platform.fpga_mem_request(100)
    with pytest.raises(BusError):
        platform.arm_tx(rng.integers(0, 256, (240, 320)), small, 320, 240)
    assert platform.ledger.entries[-1].kind is Kind.CONFIG


def test_arm_rx_roundtrip(platform, rng):
    img = rng.integers(0, 256, (8, 8), dtype=np.uint8)
    h = platform.fpga_mem_request(256)
    platform.arm_tx(img, h, 8, 8)
    out = platform.arm_rx(None, h, 8, 8)
    assert out.tolist() == img.reshape(-1).tolist()
    e = platform.ledger.entries[-1]
    assert e.kind is Kind.RX and e.payload == 256 and e.duration == Fraction(128) / Fraction(platform.ledger.bus_clock_hz)
    buf = np.zeros(64, "<u4")
    assert platform.arm_rx(buf, h, 64, 1) is buf
    with pytest.raises(BusError):
        platform.arm_rx(None, h, 65, 1)


def test_wait_done_examples(platform, surf_ip):
    with pytest.raises(NotRunning):
        platform.wait_done(surf_ip)
    platform.start(surf_ip)  # zeroed registers: the core reports an error sentinel, still completes
    platform.wait_done(surf_ip)
    assert not platform.poll_done(surf_ip)
    assert surf_ip.core.state is ControlState.IDLE
    platform.start(surf_ip)
    platform.wait_done(surf_ip)
    assert surf_ip.core.executions == 2


def test_reset_via_runtime(platform, surf_ip):
    platform.algorithm_set(surf_ip, "rows", 5)
    platform.start(surf_ip)
    platform.reset(surf_ip)
    assert surf_ip.core.state is ControlState.IDLE
    assert platform.fabric.reg_read(surf_ip.addr("ROWS")) == 0


def test_deferred_matches_inline():
    img = blob_image(64, 64, 3)
    a, b = Platform(), Platform(deferred=True)
    a.config("surf")
    b.config("surf")
    assert surf_detect(a, img) == surf_detect(b, img)
    assert a.ledger.entries == b.ledger.entries


@pytest.mark.parametrize("seed,shape", [(0, (64, 64)), (1, (120, 96)), (2, (240, 320)), (3, (37, 53))])
def test_end_to_end_equals_core(platform, seed, shape):
    img = blob_image(*shape, seed, noise=2.0)
    assert surf_detect(platform, img) == detect_fixed(img)
    assert platform.fabric.memory.live_blocks() == []


def test_end_to_end_ledger(rng):
    p = Platform()
    p.config("surf")
    img = blob_image(96, 128, 9)
    pts = surf_detect(p, img)
    kinds = [e.kind for e in p.ledger.entries]
    assert kinds == [Kind.CONFIG, Kind.TX, Kind.COMPUTE, Kind.RX, Kind.RX]
    rx = [e.payload for e in p.ledger.entries if e.kind is Kind.RX]
    assert rx == [4, 4 + 20 * len(pts)]
    bus = Fraction(p.ledger.bus_clock_hz)
    cycles = surf_cycles(96, 128, 4, len(pts))
    expect = 2 + Fraction(math.ceil(4 * 96 * 128 / 2)) / bus + Fraction(cycles) / Fraction(62_500_000) \
        + sum(Fraction(math.ceil(n / 2)) / bus for n in rx)
    assert p.ledger.total() == expect


def test_surf_detect_empty_image(platform):
    assert surf_detect(platform, np.full((50, 50), 7, np.uint8)) == []
    assert [e.payload for e in platform.ledger.entries if e.kind is Kind.RX] == [4]


def test_surf_detect_needs_config():
    with pytest.raises(NotRunning):
        surf_detect(Platform(), np.zeros((32, 32), np.uint8))


def test_manual_api_sequence(platform, surf_ip):
    img = blob_image(64, 80, 4)
    rows, cols = img.shape
    src = platform.fpga_mem_request(4 * rows * cols)
    dst = platform.fpga_mem_request(4 * 4096)
    platform.arm_tx(img, src, cols, rows)
    for k, v in dict(rows=rows, cols=cols, byte_rdoffset=src.offset, byte_wroffset=dst.offset, MinHessian=10,
                     nOctaves=1, Intervals=2, PyramidalLevel=4).items():
        platform.algorithm_set(surf_ip, k, v)
    platform.start(surf_ip)
    platform.wait_done(surf_ip)
    words = platform.arm_rx(None, dst, 4096, 1)
    assert decode_words(words) == detect_fixed(img)


MISUSE = st.sampled_from(["config", "set", "set_bad", "request", "release", "release_twice", "tx", "rx",
                          "start", "reset", "wait", "poll"])


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.booleans(), st.lists(MISUSE, max_size=25))
def test_random_misuse_never_corrupts(deferred, calls):
    p = Platform(deferred=deferred)
    info = p.config("surf")
    ip = info["SURF_detect"]
    handles, freed = [], []
    img = blob_image(32, 32, 0)
    for call in calls:
        try:
            if call == "config":
                info = p.config("surf")
                ip = info["SURF_detect"]
            elif call == "set":
                p.algorithm_set(ip, "rows", 32)
            elif call == "set_bad":
                p.algorithm_set(ip, "nope", 1)
            elif call == "request":
                handles.append(p.fpga_mem_request(4096))
            elif call == "release":
                h = handles.pop() if handles else (freed[-1] if freed else runtime.MemHandle(0, 1))
                p.fpga_mem_release(h)
                freed.append(h)
            elif call == "release_twice":
                if freed:
                    p.fpga_mem_release(freed[-1])
            elif call == "tx":
                p.arm_tx(img, handles[-1] if handles else runtime.MemHandle(0, 1), 32, 32)
            elif call == "rx":
                p.arm_rx(None, handles[-1] if handles else runtime.MemHandle(0, 1), 32, 32)
            elif call == "start":
                p.start(ip)
            elif call == "reset":
                p.reset(ip)
            elif call == "wait":
                p.wait_done(ip)
            else:
                p.poll_done(ip)
        except SimError:
            pass
        mem = p.fabric.memory
        assert sum(b.length for b in mem.blocks) == mem.size
        assert sorted(h.offset for h in handles) == sorted(o for o, _ in mem.live_blocks())
        assert ip.core.state in set(ControlState)
    for h in handles:
        p.fpga_mem_release(h)
    p.reset(ip)
    assert surf_detect(p, img, SurfParams()) == detect_fixed(img)
