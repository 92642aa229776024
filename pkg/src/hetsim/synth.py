"""Seeded synthetic test patterns: a jittered grid of Gaussian-profile blobs."""

from __future__ import annotations

import numpy as np

BACKGROUND = 128
SPACING = 32


def blob_image(rows: int, cols: int, seed: int = 0, spacing: int = SPACING,
               noise: float = 0.0) -> np.ndarray:
    """uint8 image of bright and dark Gaussian blobs, one per `spacing` grid cell.

    Each blob gets a seeded jitter of up to spacing/4, sigma in [1.5, 5] and
    amplitude in +-[30, 90] over a mid-gray background. Identical arguments
    always produce identical pixels.
    """
    rng = np.random.default_rng(seed)
    img = np.full((rows, cols), float(BACKGROUND))
    yy, xx = np.mgrid[0:rows, 0:cols]
    for cy in range(spacing // 2, rows, spacing):
        for cx in range(spacing // 2, cols, spacing):
            jy, jx = rng.uniform(-spacing / 4, spacing / 4, size=2)
            sigma = rng.uniform(1.5, 5.0)
            amp = rng.uniform(30, 90) * rng.choice((-1.0, 1.0))
            y0, x0 = cy + jy, cx + jx
            r = int(np.ceil(4 * sigma))
            ys = slice(max(int(y0) - r, 0), min(int(y0) + r + 1, rows))
            xs = slice(max(int(x0) - r, 0), min(int(x0) + r + 1, cols))
            d2 = (yy[ys, xs] - y0) ** 2 + (xx[ys, xs] - x0) ** 2
            img[ys, xs] += amp * np.exp(-d2 / (2 * sigma * sigma))
    if noise:
        img += rng.normal(0.0, noise, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
