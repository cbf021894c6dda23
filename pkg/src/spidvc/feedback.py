"""Selective feedback: split WZ data into separately coded units and order
the parity requests so regions with poor side information are served first.

simple  the decoder groups 16x16 blocks by the most significant bitplane at
        which they were clipped over a window of recent frames, and sends the
        group map to the encoder
smart   both sides count parity requests per fixed-size region and code the
        next frame's regions in descending request order, so no map is sent
"""

import math
from collections import deque

import numpy as np

GROUP_BLOCK = 16


def assign_simple_groups(window, bp_max):
    """Group (1..bp_max+1) per 16x16 block from a window of block clipping maps.

    ``window`` is a sequence of (bp_max, gh, gw) boolean arrays, one per frame:
    flag [l-1, i, j] is set when any pixel of block (i, j) was clipped at plane l.
    """
    window = [np.asarray(w, dtype=bool) for w in window]
    if not window:
        raise ValueError("empty clipping window")
    hit = np.logical_or.reduce(window)  # (bp_max, gh, gw)
    groups = np.full(hit.shape[1:], bp_max + 1, dtype=np.int64)
    for plane in range(bp_max, 0, -1):
        groups[hit[plane - 1]] = plane
    return groups


def block_clipping(flags, positions, block, grid_shape):
    """Reduce per-sample clipping flags (planes, n) to (planes, gh, gw) block flags."""
    flags = np.asarray(flags, dtype=bool)
    out = np.zeros((flags.shape[0],) + tuple(grid_shape), dtype=bool)
    bi = positions[:, 0] // block
    bj = positions[:, 1] // block
    for p in range(flags.shape[0]):
        np.logical_or.at(out[p], (bi, bj), flags[p])
    return out


def smart_order(counts):
    """Region coding order: descending request count, ties by raster index."""
    counts = np.asarray(counts).ravel()
    return sorted(range(counts.size), key=lambda k: (-counts[k], k))


def feedback_overhead_bits(mode, bp_max, units):
    """Map bits charged per update: ceil(log2(bp_max + 1)) per 16x16 WZ unit in
    simple mode, nothing otherwise."""
    if mode == "simple":
        return int(math.ceil(math.log2(bp_max + 1))) * int(units)
    if mode in ("off", "smart"):
        return 0
    raise ValueError(f"unknown feedback mode {mode!r}")


def merge_small(units, min_length):
    """Merge units shorter than ``min_length`` into the next one (the last
    leftover joins the previous unit)."""
    out = []
    carry = np.zeros(0, dtype=np.int64)
    for u in units:
        carry = np.concatenate([carry, np.asarray(u, dtype=np.int64)])
        if len(carry) >= min_length:
            out.append(carry)
            carry = np.zeros(0, dtype=np.int64)
    if len(carry):
        if out:
            out[-1] = np.concatenate([out[-1], carry])
        else:
            out.append(carry)
    return out


class SmartCounter:
    """Per-region parity request counts, kept identically by encoder and decoder."""

    def __init__(self, grid_shape):
        self.grid_shape = tuple(grid_shape)
        self.counts = None  # None until the first frame has been coded

    def order(self):
        if self.counts is None:
            return list(range(int(np.prod(self.grid_shape))))
        return smart_order(self.counts)

    def update(self, region_requests):
        self.counts = np.asarray(region_requests, dtype=np.int64).reshape(self.grid_shape).copy()


class SimpleFeedback:
    """Decoder-side clipping window and the group map last sent to the encoder."""

    def __init__(self, grid_shape, bp_max, window=12, update_every=12):
        self.grid_shape = tuple(grid_shape)
        self.bp_max = bp_max
        self.window = deque(maxlen=window)
        self.update_every = max(1, update_every)
        self.groups = np.ones(self.grid_shape, dtype=np.int64)  # before any map: one group
        self.frames = 0

    def push(self, block_flags):
        """Add one decoded frame; returns True when a new map is due (after the
        first frame, then every ``update_every`` frames)."""
        self.window.append(np.asarray(block_flags, dtype=bool))
        self.frames += 1
        if (self.frames - 1) % self.update_every == 0:
            self.groups = assign_simple_groups(self.window, self.bp_max)
            return True
        return False


def units_from_labels(labels, order, min_length):
    """Index arrays of samples per label, in the given label order, merged to a minimum length."""
    labels = np.asarray(labels)
    units = [np.flatnonzero(labels == lab) for lab in order]
    units = [u for u in units if len(u)]
    return merge_small(units, min_length)


def simple_units(positions, groups, min_length, block=GROUP_BLOCK):
    """Coding units for simple mode: group 1 first, then 2, ..."""
    g = groups[positions[:, 0] // block, positions[:, 1] // block]
    return units_from_labels(g, range(1, int(groups.max()) + 1), min_length)


def region_labels(positions, region, grid_w):
    return (positions[:, 0] // region) * grid_w + positions[:, 1] // region


def smart_units(positions, order, region, grid_w, min_length):
    """Coding units for smart mode: one per region, in the counter's order.

    Returns (units, unit_regions) where unit_regions lists the regions folded
    into each unit (needed to spread request counts back over regions)."""
    labels = region_labels(positions, region, grid_w)
    units, members = [], []
    carry, carry_regions = np.zeros(0, dtype=np.int64), []
    for r in order:
        idx = np.flatnonzero(labels == r)
        if not len(idx):
            continue
        carry = np.concatenate([carry, idx])
        carry_regions.append(r)
        if len(carry) >= min_length:
            units.append(carry)
            members.append(carry_regions)
            carry, carry_regions = np.zeros(0, dtype=np.int64), []
    if len(carry):
        if units:
            units[-1] = np.concatenate([units[-1], carry])
            members[-1] = members[-1] + carry_regions
        else:
            units.append(carry)
            members.append(carry_regions)
    return units, members


def region_requests(unit_requests, members, num_regions):
    """Attribute each unit's request count to every region it covers."""
    out = np.zeros(num_regions, dtype=np.int64)
    for count, regs in zip(unit_requests, members):
        for r in regs:
            out[r] += count
    return out
