"""Fixed-point behavioral model of the SURF detection IP.

Pipeline: integral image -> box-filter Hessian responses per filter size
(Q16.16, 64-bit intermediates) -> thresholded 3x3x3 non-maximum suppression
-> result records written back to fabric memory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BadImage, BadPyramid, BusError, LayerSkipped
from .ipcore import Register, RegisterSpec

log = logging.getLogger(__name__)

FRAC_BITS = 16
Q_ONE = 1 << FRAC_BITS
# 0.9 ** 2 in Q16.16
DXY_WEIGHT_SQ_Q16 = 53084
MAX_SIDE = 4096
C_LAYER = 10
C_POINT = 30
ERROR_SENTINEL = 0xFFFF_FFFF
RECORD_WORDS = 5


def to_q16(value: float) -> int:
    return int(round(value * Q_ONE))


def from_q16(raw: int) -> float:
    return raw / Q_ONE


def to_s32(word: int) -> int:
    word &= 0xFFFF_FFFF
    return word - (1 << 32) if word & 0x8000_0000 else word


@dataclass(frozen=True)
class SurfParams:
    min_hessian: float = 10.0
    n_octaves: int = 1
    intervals: int = 2
    levels: int = 4

    def validate(self) -> "SurfParams":
        if self.levels < 3:
            raise ValueError("levels must be >= 3 so every interior level has a level above and below")
        if self.intervals != self.levels - 2:
            raise ValueError("intervals must equal levels - 2")
        if self.n_octaves < 1:
            raise ValueError("n_octaves must be >= 1")
        return self

    @property
    def min_hessian_q16(self) -> int:
        return to_q16(self.min_hessian)


def filter_sizes(octave: int, levels: int) -> list[int]:
    """Box filter sizes of one octave; octave 0 gives 9, 15, 21, 27, ..."""
    return [3 * ((2 << octave) * (i + 1) + 1) for i in range(levels)]


@dataclass(frozen=True)
class InterestPoint:
    x: int  # column
    y: int  # row
    filter_size: int
    response: float  # area-normalized units
    laplacian: int

    @property
    def scale(self) -> float:
        return 1.2 * self.filter_size / 9

    @property
    def scale_q16(self) -> int:
        return (self.filter_size * 2 * Q_ONE) // 15

    @property
    def response_q16(self) -> int:
        return to_q16(self.response)


@dataclass
class IntegralImage:
    data: np.ndarray  # uint32, inclusive prefix sums

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def padded(self) -> np.ndarray:
        """int64 copy with a leading zero row and column, P[r, c] = sum of pixels above-left of (r, c)."""
        out = np.zeros((self.rows + 1, self.cols + 1), dtype=np.int64)
        out[1:, 1:] = self.data
        return out


def check_pixels(pixels) -> np.ndarray:
    img = np.asarray(pixels)
    if img.ndim != 2 or img.size == 0:
        raise BadImage(f"expected a non-empty 2-D image, got shape {img.shape}")
    if img.shape[0] > MAX_SIDE or img.shape[1] > MAX_SIDE:
        raise BadImage(f"image {img.shape} exceeds {MAX_SIDE}x{MAX_SIDE}")
    if not np.issubdtype(img.dtype, np.integer):
        raise BadImage(f"pixels must be integers, got {img.dtype}")
    if img.min() < 0 or img.max() > 255:
        raise BadImage("pixels must be 8-bit (0..255)")
    return img


def integral_image(pixels) -> IntegralImage:
    img = check_pixels(pixels).astype(np.uint32)
    return IntegralImage(img.cumsum(axis=0, dtype=np.uint32).cumsum(axis=1, dtype=np.uint32))


def box_sum(ii: IntegralImage, row: int, col: int, height: int, width: int) -> int:
    """Sum over [row, row+height) x [col, col+width), clipped to the image."""
    r0 = min(max(row, 0), ii.rows)
    r1 = min(max(row + height, 0), ii.rows)
    c0 = min(max(col, 0), ii.cols)
    c1 = min(max(col + width, 0), ii.cols)
    if r1 <= r0 or c1 <= c0:
        return 0

    def at(r, c):
        return int(ii.data[r - 1, c - 1]) if r > 0 and c > 0 else 0

    return at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0)


def box_sums(padded: np.ndarray, dr: int, dc: int, height: int, width: int) -> np.ndarray:
    """box_sum(row=r+dr, col=c+dc, height, width) for every pixel (r, c) at once."""
    rows, cols = padded.shape[0] - 1, padded.shape[1] - 1
    r = np.arange(rows)
    c = np.arange(cols)
    r0 = np.clip(r + dr, 0, rows)[:, None]
    r1 = np.maximum(np.clip(r + dr + height, 0, rows)[:, None], r0)
    c0 = np.clip(c + dc, 0, cols)[None, :]
    c1 = np.maximum(np.clip(c + dc + width, 0, cols)[None, :], c0)
    return padded[r1, c1] - padded[r0, c1] - padded[r1, c0] + padded[r0, c0]


def hessian_raw(padded: np.ndarray, filter_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unnormalized box-filter second derivatives (Dxx, Dyy, Dxy), exact int64."""
    lobe = filter_size // 3
    border = (filter_size - 1) // 2
    band = 2 * lobe - 1
    dxx = (box_sums(padded, -lobe + 1, -border, band, filter_size)
           - 3 * box_sums(padded, -lobe + 1, -(lobe // 2), band, lobe))
    dyy = (box_sums(padded, -border, -lobe + 1, filter_size, band)
           - 3 * box_sums(padded, -(lobe // 2), -lobe + 1, lobe, band))
    dxy = (box_sums(padded, -lobe, 1, lobe, lobe)
           + box_sums(padded, 1, -lobe, lobe, lobe)
           - box_sums(padded, -lobe, -lobe, lobe, lobe)
           - box_sums(padded, 1, 1, lobe, lobe))
    return dxx, dyy, dxy


@dataclass
class ResponseLayer:
    filter_size: int
    responses: np.ndarray
    laplacian: np.ndarray  # uint8, 1 where Dxx + Dyy >= 0
    fixed: bool = True  # responses are Q16.16 integers
    skipped: bool = False

    def value(self, r: int, c: int) -> float:
        raw = self.responses[r, c]
        return from_q16(int(raw)) if self.fixed else float(raw)


def empty_layer(shape, filter_size: int, fixed: bool = True) -> ResponseLayer:
    dtype = np.int64 if fixed else np.float64
    return ResponseLayer(filter_size, np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=np.uint8),
                         fixed=fixed, skipped=True)


def hessian_layer(ii: IntegralImage, filter_size: int, padded: np.ndarray | None = None) -> ResponseLayer:
    if filter_size % 6 != 3:
        raise ValueError(f"filter size {filter_size} is not 3 mod 6")
    if filter_size > min(ii.rows, ii.cols):
        raise LayerSkipped(f"filter {filter_size} larger than {ii.rows}x{ii.cols} image")
    if padded is None:
        padded = ii.padded()
    dxx, dyy, dxy = hessian_raw(padded, filter_size)
    area = filter_size * filter_size
    # floor division: rounds toward -inf like the arithmetic shifts below
    dxx = (dxx << FRAC_BITS) // area
    dyy = (dyy << FRAC_BITS) // area
    dxy = (dxy << FRAC_BITS) // area
    responses = ((dxx * dyy) >> FRAC_BITS) - ((DXY_WEIGHT_SQ_Q16 * dxy * dxy) >> (2 * FRAC_BITS))
    laplacian = (dxx + dyy >= 0).astype(np.uint8)
    return ResponseLayer(filter_size, responses, laplacian, fixed=True)


def build_layers(ii: IntegralImage, sizes: Sequence[int], layer_fn=None) -> list[ResponseLayer]:
    """Response layers for `sizes`; filters that do not fit become skipped all-zero layers."""
    padded = ii.padded()
    fixed = layer_fn is None
    layers = []
    for size in sizes:
        try:
            if fixed:
                layers.append(hessian_layer(ii, size, padded))
            else:
                layers.append(layer_fn(ii, size))
        except LayerSkipped as exc:
            log.debug("%s", exc)
            layers.append(empty_layer((ii.rows, ii.cols), size, fixed=fixed))
    return layers


def nms_candidates(volume: np.ndarray, border: Sequence[int], threshold, active: Sequence[bool]):
    """(row, col, layer) of strict 3x3x3 maxima above `threshold`, row-major then by layer.

    `border[k]` is the per-edge exclusion width for layer k; only layers with
    `active[k]` are searched, and only interior layers can ever be active.
    """
    n, rows, cols = volume.shape
    found = []
    for k in range(1, n - 1):
        b = border[k]
        if not active[k] or rows - 2 * b <= 0 or cols - 2 * b <= 0:
            continue
        center = volume[k, b:rows - b, b:cols - b]
        hits = center > threshold
        for dk in (-1, 0, 1):
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dk == dr == dc == 0:
                        continue
                    nb = volume[k + dk, b + dr:rows - b + dr, b + dc:cols - b + dc]
                    hits &= center > nb
        rr, cc = np.nonzero(hits)
        found.extend(zip((rr + b).tolist(), (cc + b).tolist(), [k] * len(rr)))
    found.sort()
    return found


def nms_extract(layers: Sequence[ResponseLayer], min_hessian) -> list[InterestPoint]:
    """Interest points of one octave. `min_hessian` is Q16.16 for fixed layers, float otherwise."""
    if len(layers) < 3:
        raise BadPyramid(f"need at least 3 layers, got {len(layers)}")
    shape = layers[0].responses.shape
    if any(l.responses.shape != shape for l in layers):
        raise BadPyramid("layers differ in size")
    volume = np.stack([l.responses for l in layers])
    border = [0] + [-(-layers[k + 1].filter_size // 2) for k in range(1, len(layers) - 1)] + [0]
    active = [False] + [not (layers[k - 1].skipped or layers[k].skipped or layers[k + 1].skipped)
                        for k in range(1, len(layers) - 1)] + [False]
    points = []
    for r, c, k in nms_candidates(volume, border, min_hessian, active):
        layer = layers[k]
        points.append(InterestPoint(c, r, layer.filter_size, layer.value(r, c), int(layer.laplacian[r, c])))
    return points


def octave_sizes(params: SurfParams) -> list[list[int]]:
    return [filter_sizes(o, params.levels) for o in range(params.n_octaves)]


def detect_fixed(pixels, params: SurfParams = SurfParams()) -> list[InterestPoint]:
    """Direct composition of the detection stages, without the register/memory wrapper."""
    params.validate()
    ii = integral_image(pixels)
    return detect_from_integral(ii, params, params.min_hessian_q16)


def detect_from_integral(ii: IntegralImage, params: SurfParams, min_hessian_q16: int) -> list[InterestPoint]:
    keyed = []
    for octave, sizes in enumerate(octave_sizes(params)):
        layers = build_layers(ii, sizes)
        sizes_index = {l.filter_size: i for i, l in enumerate(layers)}
        for p in nms_extract(layers, min_hessian_q16):
            keyed.append(((p.y, p.x, octave, sizes_index[p.filter_size]), p))
    keyed.sort(key=lambda kp: kp[0])
    return [p for _, p in keyed]


def encode_results(points: Sequence[InterestPoint], memory, byte_wroffset: int) -> None:
    words = [len(points)]
    for p in points:
        words += [p.x, p.y, p.filter_size, p.response_q16 & 0xFFFF_FFFF, p.laplacian]
    payload = np.asarray(words, dtype="<u4").tobytes()
    memory.check_range(byte_wroffset, len(payload))
    memory.write(byte_wroffset, payload)


def decode_words(words) -> list[InterestPoint]:
    """Inverse of encode_results on a word sequence (count word first)."""
    words = [int(w) for w in words]
    if not words:
        raise ValueError("empty result buffer")
    count = words[0]
    if count == ERROR_SENTINEL:
        raise ValueError("IP reported an error (count word 0xFFFFFFFF)")
    if len(words) < 1 + RECORD_WORDS * count:
        raise ValueError(f"result buffer truncated: {count} records need {1 + RECORD_WORDS * count} words")
    points = []
    for i in range(count):
        x, y, f, resp, lap = words[1 + RECORD_WORDS * i: 1 + RECORD_WORDS * (i + 1)]
        points.append(InterestPoint(x, y, f, from_q16(to_s32(resp)), lap))
    return points


def decode_results(memory, byte_wroffset: int) -> list[InterestPoint]:
    count = int(np.frombuffer(memory.read(byte_wroffset, 4), dtype="<u4")[0])
    if count == ERROR_SENTINEL:
        return decode_words([count])
    nbytes = 4 * (1 + RECORD_WORDS * count)
    return decode_words(np.frombuffer(memory.read(byte_wroffset, nbytes), dtype="<u4"))


def result_capacity_words(rows: int, cols: int, params: SurfParams) -> int:
    """Upper bound on result words: strict maxima cannot touch, so at most one per 2x2 cell per level."""
    per_level = ((rows + 1) // 2) * ((cols + 1) // 2)
    return 1 + RECORD_WORDS * per_level * params.intervals * params.n_octaves


def surf_cycles(rows: int, cols: int, levels: int, n_points: int, n_octaves: int = 1) -> int:
    return rows * cols * (1 + n_octaves * levels * C_LAYER) + n_points * C_POINT


SURF_REGISTERS = RegisterSpec([
    Register(0x00, "CTRL"),
    Register(0x10, "BYTE_RDOFFSET"),
    Register(0x18, "BYTE_WROFFSET"),
    Register(0x20, "ROWS"),
    Register(0x28, "COLS"),
    Register(0x30, "MIN_HESSIAN"),
    Register(0x38, "N_OCTAVES"),
    Register(0x40, "INTERVALS"),
    Register(0x48, "LEVELS"),
])

# keeps filter sizes inside the 4096-pixel image cap
MAX_LEVELS = 16
MAX_OCTAVES = 6


class SurfDetect:
    """IpModel binding of the detection pipeline."""

    name = "SURF_detect"
    register_spec = SURF_REGISTERS

    def params_from(self, regs: Mapping[str, int]) -> SurfParams:
        return SurfParams(from_q16(to_s32(regs["MIN_HESSIAN"])), regs["N_OCTAVES"], regs["INTERVALS"], regs["LEVELS"])

    def _registers_ok(self, regs: Mapping[str, int], memory) -> bool:
        rows, cols = regs["ROWS"], regs["COLS"]
        if not (1 <= rows <= MAX_SIDE and 1 <= cols <= MAX_SIDE):
            return False
        if not (3 <= regs["LEVELS"] <= MAX_LEVELS and 1 <= regs["N_OCTAVES"] <= MAX_OCTAVES):
            return False
        if regs["INTERVALS"] != regs["LEVELS"] - 2:
            return False
        return regs["BYTE_RDOFFSET"] + 4 * rows * cols <= memory.size

    def _fail(self, regs: Mapping[str, int], memory) -> int:
        log.warning("SURF_detect: bad register values %s", dict(regs))
        try:
            memory.write(regs["BYTE_WROFFSET"], np.array([ERROR_SENTINEL], dtype="<u4").tobytes())
        except BusError:
            log.warning("SURF_detect: error sentinel offset is outside fabric memory")
        return 0

    def execute(self, regs: Mapping[str, int], memory) -> int:
        if not self._registers_ok(regs, memory):
            return self._fail(regs, memory)
        rows, cols = regs["ROWS"], regs["COLS"]
        words = np.frombuffer(memory.read(regs["BYTE_RDOFFSET"], 4 * rows * cols), dtype="<u4")
        pixels = (words & 0xFF).reshape(rows, cols)
        params = self.params_from(regs)
        points = detect_from_integral(integral_image(pixels), params, to_s32(regs["MIN_HESSIAN"]))
        try:
            encode_results(points, memory, regs["BYTE_WROFFSET"])
        except BusError:
            return self._fail(regs, memory)
        return surf_cycles(rows, cols, params.levels, len(points), params.n_octaves)
