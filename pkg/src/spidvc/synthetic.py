"""Synthetic multi-view test sequences with known motion and disparity."""

import numpy as np
from scipy import ndimage

PATTERNS = ("static", "translation", "subpel", "stereo", "moving_square", "occlusion", "mixed")


def texture(height, width, rng, smooth=1.5, lo=16, hi=239):
    """Smooth random texture scaled to [lo, hi]."""
    t = ndimage.gaussian_filter(rng.standard_normal((height, width)), smooth)
    t = (t - t.min()) / max(np.ptp(t), 1e-9)
    return np.floor(lo + t * (hi - lo) + 0.5)


def _crop(canvas, y, x, height, width):
    return canvas[y:y + height, x:x + width]


def generate(pattern, width=64, height=64, frames=5, views=1, seed=0, step=4, disparity=8,
             square=32, strip=16):
    """Luma array (views, frames, height, width) uint8.

    static         identical frames in every view
    translation    global integer shift of ``step`` pixels per frame (right);
                   like every pattern below, view k sees the scene ``k * disparity`` px to the left
    subpel         global shift of half a pixel per frame (bilinear resampling)
    stereo         static scene, view k shifted by k * ``disparity`` pixels
    moving_square  static background with a textured square moving ``step`` px per frame
    occlusion      stereo scene with a vertical strip visible only in the last view
    mixed          stereo scene with a fast moving square and an occluded strip
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")
    rng = np.random.default_rng(seed)
    margin = step * frames + disparity * views + 8
    canvas = texture(height + 2 * margin, width + 2 * margin, rng)
    out = np.zeros((views, frames, height, width))
    for v in range(views):
        for t in range(frames):
            if pattern == "static":
                img = _crop(canvas, margin, margin, height, width)
            elif pattern == "translation":
                img = _crop(canvas, margin, margin + disparity * v - step * t, height, width)
            elif pattern == "subpel":
                shifted = ndimage.shift(canvas, (0, 0.5 * t), order=1, mode="nearest")
                img = _crop(shifted, margin, margin + disparity * v, height, width)
            else:
                img = _crop(canvas, margin, margin + disparity * v, height, width)
            out[v, t] = img
    if pattern in ("moving_square", "mixed"):
        obj = texture(square, square, rng, smooth=1.0)
        y0 = (height - square) // 2
        for v in range(views):
            for t in range(frames):
                x0 = (4 + (3 * step if pattern == "mixed" else step) * t) % max(1, width - square)
                xv = max(0, x0 - disparity * v) if pattern == "mixed" else x0
                out[v, t, y0:y0 + square, xv:xv + square] = obj
    if pattern in ("occlusion", "mixed"):
        band = texture(height, strip, rng, smooth=1.0)
        x0 = width // 4
        for t in range(frames):
            out[views - 1, t, :, x0:x0 + strip] = band
    return np.clip(out, 0, 255).astype(np.uint8)


def moving_square_overlap(width, height, x_old, x_new, y0, size, mb=16):
    """Macroblocks touched by a square moving from x_old to x_new (brute-force oracle)."""
    hit = np.zeros((height // mb, width // mb), dtype=bool)
    for x in (x_old, x_new):
        for i in range(height // mb):
            for j in range(width // mb):
                if i * mb < y0 + size and y0 < (i + 1) * mb and j * mb < x + size and x < (j + 1) * mb:
                    hit[i, j] = True
    return hit
