"""Deterministic test imagery.

``random_image`` feeds the timing harness.  ``scene`` renders a
natural-looking picture (soft region boundaries, shading, texture,
sensor noise) together with ground-truth partitions, and ``water_clip``
renders a static-camera sequence of a boat drifting on rippled water.
"""
from __future__ import annotations

import numpy as np

from .image import ImageBuffer, LabelMap

__all__ = ["random_image", "scene", "water_clip", "gaussian_smooth"]


def random_image(rows: int, cols: int, channels: int = 3, seed: int = 42) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    return ImageBuffer(rng.integers(0, 256, size=(rows, cols, channels), dtype=np.uint8))


def gaussian_smooth(a: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur over the first two axes, edge-replicated."""
    if sigma <= 0:
        return a.astype(np.float64)
    radius = max(1, int(3 * sigma + 0.5))
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    out = a.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        p = np.pad(out, pad, mode="edge")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            acc += w * np.take(p, np.arange(i, i + n), axis=axis)
        out = acc
    return out


def _relabel(lab: np.ndarray) -> LabelMap:
    _, dense = np.unique(lab, return_inverse=True)
    dense = dense.reshape(lab.shape) + 1
    return LabelMap(dense, int(dense.max()))


def scene(
    rows: int = 120,
    cols: int = 160,
    regions: int = 12,
    seed: int = 0,
) -> tuple[ImageBuffer, list[LabelMap]]:
    """Render a natural-looking colour scene and two ground truths.

    Regions are warped Voronoi cells.  Colours come from a random walk so
    neighbouring regions are often close in colour; about half of the
    regions are smooth (shading only) and the rest carry strong pixel-scale
    texture, as grass or foliage would.  Edges are softened by a small blur.

    The first truth is the exact region map.  The second merges the two
    adjacent regions with the closest base colours, like an annotator who
    segments more coarsely.
    """
    rng = np.random.default_rng(seed)
    rr, cc = np.mgrid[0:rows, 0:cols].astype(np.float64)
    warp_r = gaussian_smooth(rng.normal(0, 1, (rows, cols)), 8) * 60
    warp_c = gaussian_smooth(rng.normal(0, 1, (rows, cols)), 8) * 60
    seeds = rng.uniform([0, 0], [rows, cols], size=(regions, 2))
    d = (rr[..., None] + warp_r[..., None] - seeds[:, 0]) ** 2 + (
        cc[..., None] + warp_c[..., None] - seeds[:, 1]
    ) ** 2
    truth = np.argmin(d, axis=2)

    base = np.empty((regions, 3))
    base[0] = rng.uniform(60, 200, 3)
    for i in range(1, regions):
        step = rng.normal(0, 1, 3)
        step /= np.linalg.norm(step)
        base[i] = np.clip(base[rng.integers(0, i)] + step * rng.uniform(10, 60), 20, 235)
    img = base[truth]
    slope = rng.normal(0, 0.3, size=(regions, 2))
    img = img + (slope[truth, 0] * (rr - rows / 2) + slope[truth, 1] * (cc - cols / 2))[..., None]

    textured = rng.random(regions) < 0.5
    amp = np.where(textured, rng.uniform(8, 25, regions), rng.uniform(0.5, 3, regions))[truth]
    img = gaussian_smooth(img, 1.0)
    img = img + rng.normal(0, 1, img.shape) * amp[..., None] + rng.normal(0, 1, img.shape)
    image = ImageBuffer(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))

    adj = set()
    for a, b in ((truth[1:, :], truth[:-1, :]), (truth[:, 1:], truth[:, :-1])):
        m = a != b
        adj.update(zip(a[m].tolist(), b[m].tolist()))
    coarse = truth.copy()
    if adj:
        i, j = min(adj, key=lambda p: float(np.linalg.norm(base[p[0]] - base[p[1]])))
        coarse[coarse == j] = i
    return image, [_relabel(truth), _relabel(coarse)]


WATER = (20.0, 70.0, 205.0)
BOAT = (140.0, 65.0, 90.0)
SHORE = (70.0, 110.0, 60.0)


def water_clip(
    frames: int = 4,
    rows: int = 72,
    cols: int = 96,
    seed: int = 0,
    step: int = 1,
) -> list[ImageBuffer]:
    """Static-camera clip: shore band on top, rippled water, a drifting boat."""
    rng = np.random.default_rng(seed)
    rr, cc = np.mgrid[0:rows, 0:cols].astype(np.float64)
    shore_rows = rows // 5
    grain = gaussian_smooth(rng.normal(0, 1, (rows, cols, 3)), 1.0) * 3.0
    out = []
    for k in range(frames):
        t = k * step
        img = np.empty((rows, cols, 3))
        img[:] = WATER
        ripple = 6.0 * np.sin(0.35 * rr + 0.15 * cc + 0.4 * t) * np.sin(0.1 * cc - 0.2 * t)
        img += ripple[..., None] * np.array([0.3, 0.6, 1.0])
        img[:shore_rows] = SHORE
        br, bc = rows * 0.6, cols * 0.3 + 0.5 * t
        boat = ((rr - br) / 5.0) ** 2 + ((cc - bc) / 14.0) ** 2 <= 1.0
        img[boat] = BOAT
        img = gaussian_smooth(img, 0.7) + grain
        img += np.random.default_rng(seed + 1000 + k).normal(0, 1.0, img.shape)
        out.append(ImageBuffer(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)))
    return out
