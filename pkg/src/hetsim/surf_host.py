"""Host-side SURF: double-precision detection and the description stage.

`detect_float` builds its box filters as explicit weight kernels correlated
with the zero-padded image, so it shares no box-geometry code with the
fixed-point core and can serve as its differential oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DescriptorUndefined, OrientationUndefined
from .surf_core import (
    IntegralImage,
    InterestPoint,
    ResponseLayer,
    SurfParams,
    box_sum,
    check_pixels,
    empty_layer,
    filter_sizes,
    integral_image,
    nms_extract,
)

DXY_WEIGHT = 0.9
TWO_PI = 2 * math.pi
ORI_RADIUS = 6
ORI_SIGMA = 2.5
ORI_WINDOW = math.pi / 3
ORI_STEP = 0.15
DESC_SIGMA = 3.3


def hessian_kernels(filter_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense (Dxx, Dyy, Dxy) weight kernels, centered at index (f-1)/2."""
    f = filter_size
    lobe = f // 3
    c = (f - 1) // 2
    kxx = np.zeros((f, f))
    # three lobes of width `lobe` side by side, 2*lobe-1 tall: +1 -2 +1
    rows = slice(c - lobe + 1, c + lobe)
    kxx[rows, :] = 1.0
    mid = c - lobe // 2
    kxx[rows, mid:mid + lobe] = -2.0
    kyy = kxx.T.copy()
    kxy = np.zeros((f, f))
    kxy[c - lobe:c, c + 1:c + 1 + lobe] = 1.0
    kxy[c + 1:c + 1 + lobe, c - lobe:c] = 1.0
    kxy[c - lobe:c, c - lobe:c] = -1.0
    kxy[c + 1:c + 1 + lobe, c + 1:c + 1 + lobe] = -1.0
    return kxx, kyy, kxy


def float_layer(image: np.ndarray, filter_size: int) -> ResponseLayer:
    img = np.asarray(image, dtype=np.float64)
    if filter_size > min(img.shape):
        return empty_layer(img.shape, filter_size, fixed=False)
    inv_area = 1.0 / (filter_size * filter_size)
    dxx, dyy, dxy = (ndimage.correlate(img, k, mode="constant", cval=0.0) * inv_area
                     for k in hessian_kernels(filter_size))
    responses = dxx * dyy - (DXY_WEIGHT * dxy) ** 2
    laplacian = (dxx + dyy >= 0).astype(np.uint8)
    return ResponseLayer(filter_size, responses, laplacian, fixed=False)


def detect_float(image, params: SurfParams = SurfParams()) -> list[InterestPoint]:
    params.validate()
    img = check_pixels(image)
    keyed = []
    for octave in range(params.n_octaves):
        layers = [float_layer(img, f) for f in filter_sizes(octave, params.levels)]
        index = {l.filter_size: i for i, l in enumerate(layers)}
        for p in nms_extract(layers, float(params.min_hessian)):
            keyed.append(((p.y, p.x, octave, index[p.filter_size]), p))
    keyed.sort(key=lambda kp: kp[0])
    return [p for _, p in keyed]


def haar_x(ii: IntegralImage, row: int, col: int, size: int) -> int:
    half = size // 2
    return box_sum(ii, row - half, col, size, half) - box_sum(ii, row - half, col - half, size, half)


def haar_y(ii: IntegralImage, row: int, col: int, size: int) -> int:
    half = size // 2
    return box_sum(ii, row, col - half, half, size) - box_sum(ii, row - half, col - half, half, size)


def int_scale(point: InterestPoint) -> int:
    return max(1, int(math.floor(point.scale + 0.5)))


def _inside(ii: IntegralImage, point: InterestPoint, margin: float) -> bool:
    return (point.x - margin >= 0 and point.y - margin >= 0
            and point.x + margin <= ii.cols - 1 and point.y + margin <= ii.rows - 1)


def orientation_samples(ii: IntegralImage, point: InterestPoint):
    """Gaussian-weighted Haar responses on the s-spaced grid within radius 6s."""
    s = int_scale(point)
    xs, ys = [], []
    for i in range(-ORI_RADIUS, ORI_RADIUS + 1):
        for j in range(-ORI_RADIUS, ORI_RADIUS + 1):
            if i * i + j * j >= ORI_RADIUS * ORI_RADIUS:
                continue
            g = math.exp(-(i * i + j * j) / (2 * ORI_SIGMA * ORI_SIGMA))
            r, c = point.y + j * s, point.x + i * s
            xs.append(g * haar_x(ii, r, c, 4 * s))
            ys.append(g * haar_y(ii, r, c, 4 * s))
    return np.array(xs), np.array(ys)


def window_starts() -> np.ndarray:
    return np.arange(0.0, TWO_PI, ORI_STEP)


def dominant_direction(dx: np.ndarray, dy: np.ndarray) -> float:
    """Angle of the largest summed response over sliding pi/3 windows; 0 if all responses vanish."""
    angles = np.mod(np.arctan2(dy, dx), TWO_PI)
    starts = window_starts()
    rel = np.mod(angles[None, :] - starts[:, None], TWO_PI)
    inside = (rel > 0) & (rel < ORI_WINDOW)
    sx = (inside * dx).sum(axis=1)
    sy = (inside * dy).sum(axis=1)
    length = sx * sx + sy * sy
    best = int(np.argmax(length))
    if length[best] == 0:
        return 0.0
    return float(np.mod(math.atan2(sy[best], sx[best]), TWO_PI))


def assign_orientation(ii: IntegralImage, point: InterestPoint) -> float:
    if not _inside(ii, point, ORI_RADIUS * point.scale):
        raise OrientationUndefined(f"point ({point.x}, {point.y}) too close to the border")
    return dominant_direction(*orientation_samples(ii, point))


@dataclass
class Descriptor:
    values: np.ndarray  # 64 components
    orientation: float


def describe(ii: IntegralImage, point: InterestPoint, orientation: float) -> Descriptor:
    """64-d descriptor over a 20s oriented window: 4x4 subregions of 5x5 samples."""
    if not _inside(ii, point, 10 * math.sqrt(2) * point.scale):
        raise DescriptorUndefined(f"point ({point.x}, {point.y}) too close to the border")
    s = int_scale(point)
    co, si = math.cos(orientation), math.sin(orientation)
    sigma = DESC_SIGMA * s
    values = np.zeros((4, 4, 4))
    for k in range(20):
        u = (k - 9.5) * s
        for l in range(20):
            v = (l - 9.5) * s
            x = point.x + u * co - v * si
            y = point.y + u * si + v * co
            r, c = int(math.floor(y + 0.5)), int(math.floor(x + 0.5))
            g = math.exp(-(u * u + v * v) / (2 * sigma * sigma))
            rx = g * haar_x(ii, r, c, 2 * s)
            ry = g * haar_y(ii, r, c, 2 * s)
            du = rx * co + ry * si
            dv = -rx * si + ry * co
            cell = values[l // 5, k // 5]
            cell += (du, abs(du), dv, abs(dv))
    flat = values.reshape(64)
    norm = math.sqrt(float(np.dot(flat, flat)))
    if norm > 0:
        flat = flat / norm
    return Descriptor(flat, orientation)


def describe_points(image_or_ii, points):
    """(orientation, Descriptor or None) per point; border points get orientation 0 or no descriptor."""
    ii = image_or_ii if isinstance(image_or_ii, IntegralImage) else integral_image(image_or_ii)
    out = []
    for p in points:
        try:
            theta = assign_orientation(ii, p)
        except OrientationUndefined:
            theta = 0.0
        try:
            out.append((theta, describe(ii, p, theta)))
        except DescriptorUndefined:
            out.append((theta, None))
    return out
