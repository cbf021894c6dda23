"""Checkerboard KEY/WZ splitting, KEY-group packing and temporal interleaving.

All operations here are lossless rearrangements of pixels.
"""

from dataclasses import dataclass

import numpy as np

EVEN, ODD = 0, 1


@dataclass(frozen=True)
class InterleavePattern:
    block_size: int
    parity: int  # block (i, j) is KEY iff (i + j) % 2 == parity
    grid_w: int
    grid_h: int

    @classmethod
    def for_frame(cls, height, width, block_size, parity=EVEN):
        if height % block_size or width % block_size:
            raise ValueError(f"{width}x{height} frame is not divisible by block size {block_size}")
        return cls(block_size, parity, width // block_size, height // block_size)

    @property
    def shape(self):
        return self.grid_h * self.block_size, self.grid_w * self.block_size

    def block_mask(self):
        i, j = np.indices((self.grid_h, self.grid_w))
        return (i + j) % 2 == self.parity

    def key_mask(self):
        """Pixel mask of KEY samples."""
        b = self.block_size
        return np.kron(self.block_mask(), np.ones((b, b), dtype=bool)).astype(bool)

    def key_blocks(self):
        return [(i, j) for i in range(self.grid_h) for j in range(self.grid_w)
                if (i + j) % 2 == self.parity]

    def wz_blocks(self):
        return [(i, j) for i in range(self.grid_h) for j in range(self.grid_w)
                if (i + j) % 2 != self.parity]

    def is_key(self, i, j):
        return (i + j) % 2 == self.parity

    def complement(self):
        return alternate_parity(self)


def alternate_parity(pattern):
    return InterleavePattern(pattern.block_size, 1 - pattern.parity,
                             pattern.grid_w, pattern.grid_h)


def _check(frame, pattern):
    if frame.shape != pattern.shape:
        raise ValueError(f"frame shape {frame.shape} does not match pattern {pattern.shape}")


def split_checkerboard(frame, pattern):
    """Return (key_group, wz_group), each full-size with the other cells zeroed."""
    frame = np.asarray(frame)
    _check(frame, pattern)
    mask = pattern.key_mask()
    key = np.where(mask, frame, 0).astype(frame.dtype)
    wz = np.where(mask, 0, frame).astype(frame.dtype)
    return key, wz


def merge_checkerboard(key_group, wz_group, pattern):
    mask = pattern.key_mask()
    return np.where(mask, key_group, wz_group)


def pack_key_group(key_group, pattern):
    """Shift KEY blocks left so they form a frame of half the width.

    Blocks keep their row; within a block row they are taken left to right.
    """
    key_group = np.asarray(key_group)
    _check(key_group, pattern)
    if pattern.grid_w % 2:
        raise ValueError("packing needs an even number of blocks per row")
    b = pattern.block_size
    out = np.empty((key_group.shape[0], key_group.shape[1] // 2), dtype=key_group.dtype)
    for i in range(pattern.grid_h):
        cols = [j for j in range(pattern.grid_w) if pattern.is_key(i, j)]
        for k, j in enumerate(cols):
            out[i * b:(i + 1) * b, k * b:(k + 1) * b] = key_group[i * b:(i + 1) * b, j * b:(j + 1) * b]
    return out


def unpack_key_group(packed, pattern):
    packed = np.asarray(packed)
    b = pattern.block_size
    h, w = pattern.shape
    if packed.shape != (h, w // 2):
        raise ValueError(f"packed shape {packed.shape} does not match pattern")
    out = np.zeros((h, w), dtype=packed.dtype)
    for i in range(pattern.grid_h):
        cols = [j for j in range(pattern.grid_w) if pattern.is_key(i, j)]
        for k, j in enumerate(cols):
            out[i * b:(i + 1) * b, j * b:(j + 1) * b] = packed[i * b:(i + 1) * b, k * b:(k + 1) * b]
    return out


def temporal_interleave(key_a, pattern_a, key_b, pattern_b):
    """Combine the KEY groups of two frames into one full-size frame.

    Complementary parities tile the checkerboard directly; equal parities are
    packed side by side (first frame on the left).
    """
    key_a = np.asarray(key_a)
    key_b = np.asarray(key_b)
    if key_a.shape != key_b.shape:
        raise ValueError("KEY groups differ in size")
    _check(key_a, pattern_a)
    _check(key_b, pattern_b)
    if pattern_a.parity != pattern_b.parity:
        return np.where(pattern_a.key_mask(), key_a, key_b).astype(key_a.dtype)
    return np.hstack([pack_key_group(key_a, pattern_a), pack_key_group(key_b, pattern_b)])


def temporal_deinterleave(combined, pattern_a, pattern_b):
    combined = np.asarray(combined)
    if pattern_a.parity != pattern_b.parity:
        _check(combined, pattern_a)
        ma = pattern_a.key_mask()
        mb = pattern_b.key_mask()
        return (np.where(ma, combined, 0).astype(combined.dtype),
                np.where(mb, combined, 0).astype(combined.dtype))
    half = combined.shape[1] // 2
    return (unpack_key_group(combined[:, :half], pattern_a),
            unpack_key_group(combined[:, half:], pattern_b))


def b_frame_parity(layout, view, frame):
    """KEY parity of a B frame: alternates inside a GOP when the GOP holds
    more than one B frame, otherwise stays even."""
    if layout.gop_length <= 2:
        return EVEN
    return (frame - layout.past_intra(view, frame) - 1) % 2


def key_pairs(layout, view):
    """Group the B frames of a view into KEY coding units of one or two frames.

    With GOP length 2 consecutive B frames (from neighbouring GOPs) are paired;
    otherwise pairs never cross a GOP boundary and a leftover frame stands alone.
    """
    bframes = layout.b_frames(view)
    units = []
    if layout.gop_length == 2:
        for k in range(0, len(bframes), 2):
            units.append(tuple(bframes[k:k + 2]))
        return units
    by_gop = {}
    for f in bframes:
        by_gop.setdefault(layout.past_intra(view, f), []).append(f)
    for start in sorted(by_gop):
        fs = by_gop[start]
        for k in range(0, len(fs), 2):
            units.append(tuple(fs[k:k + 2]))
    return units
