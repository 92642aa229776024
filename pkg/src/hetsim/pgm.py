"""8-bit PGM (P2 ASCII / P5 binary) reader and writer."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import BadImage

_WS = b" \t\r\n\v\f"


def _tokens(data: bytes, count: int, pos: int):
    """Read `count` header tokens starting at `pos`, skipping whitespace and # comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos] in _WS:
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise BadImage("truncated PGM header")
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        out.append(data[start:pos])
    return out, pos


def _int(tok: bytes, what: str) -> int:
    if not tok.isdigit():
        raise BadImage(f"bad PGM {what}: {tok!r}")
    return int(tok)


def parse_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise BadImage(f"not a P2/P5 PGM (magic {magic!r})")
    (w, h, maxval), pos = _tokens(data, 3, 2)
    width, height, maxval = _int(w, "width"), _int(h, "height"), _int(maxval, "maxval")
    if maxval != 255:
        raise BadImage(f"only maxval 255 is supported, got {maxval}")
    if width == 0 or height == 0:
        raise BadImage("empty PGM")
    n = width * height
    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WS:
            raise BadImage("missing whitespace before P5 raster")
        raster = data[pos + 1:pos + 1 + n]
        if len(raster) < n:
            raise BadImage(f"truncated P5 raster: {len(raster)} of {n} bytes")
        return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    body = data[pos:].split()
    if len(body) < n:
        raise BadImage(f"truncated P2 raster: {len(body)} of {n} samples")
    values = np.array([_int(t, "sample") for t in body[:n]], dtype=np.int64)
    if values.max() > 255:
        raise BadImage("P2 sample exceeds maxval")
    return values.astype(np.uint8).reshape(height, width)


def read_pgm(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise BadImage(exc.strerror or str(exc)) from exc
    return parse_pgm(data)


def write_pgm(path, image, binary: bool = True) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("write_pgm expects a 2-D uint8 array")
    h, w = img.shape
    if binary:
        Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())
    else:
        rows = "\n".join(" ".join(str(v) for v in row) for row in img)
        Path(path).write_text(f"P2\n{w} {h}\n255\n{rows}\n", encoding="ascii")
