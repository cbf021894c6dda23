"""WZ-side source coding: 4x4 transform, band grouping, quantization, Gray
mapping and bitplane extraction.

Sample order is fixed on both sides: WZ blocks in raster order, and inside
a block either pixels (pixel domain) or 4x4 sub-blocks (transform domain) in
raster order.
"""

from dataclasses import dataclass

import numpy as np

from .turbo import TurboCode

# orthonormal 4-point DCT-II
_k = np.arange(4)
DCT4 = np.sqrt(np.where(_k[:, None] == 0, 0.25, 0.5)) * np.cos(
    np.pi * (2 * _k[None, :] + 1) * _k[:, None] / 8)
del _k

DC_RANGE = 1024.0  # DC of an orthonormal 4x4 block of 8-bit samples is in [0, 1020]


def pd_quantize(pixels, quant):
    return np.asarray(pixels, dtype=np.int64) // quant.delta_q


def gray_encode(symbols):
    s = np.asarray(symbols, dtype=np.int64)
    return s ^ (s >> 1)


def gray_decode(codes):
    g = np.asarray(codes, dtype=np.int64)
    out = g.copy()
    shift = g >> 1
    while np.any(shift):
        out ^= shift
        shift >>= 1
    return out


def extract_bitplanes(gray_codes, num_planes):
    """Split Gray codes into bitplanes, shape (num_planes, n), most significant first."""
    g = np.asarray(gray_codes, dtype=np.int64)
    return np.stack([(g >> (num_planes - 1 - l)) & 1 for l in range(num_planes)]).astype(np.uint8)


def assemble_bitplanes(planes):
    planes = np.asarray(planes, dtype=np.int64)
    out = np.zeros(planes.shape[1:], dtype=np.int64)
    for p in planes:
        out = (out << 1) | p
    return out


def td_transform(block):
    """Forward orthonormal 4x4 DCT; accepts (..., 4, 4)."""
    return DCT4 @ np.asarray(block, dtype=np.float64) @ DCT4.T


def td_inverse(coeffs):
    return DCT4.T @ np.asarray(coeffs, dtype=np.float64) @ DCT4


def band_group(coeff_blocks):
    """(n, 4, 4) coefficient blocks -> (16, n) band sequences, band index u*4+v."""
    c = np.asarray(coeff_blocks)
    return c.reshape(c.shape[0], 16).T.copy()


def band_ungroup(bands):
    b = np.asarray(bands)
    return b.T.reshape(-1, 4, 4).copy()


# ---------------------------------------------------------------------------
# sample gathering


def wz_sample_positions(wz_blocks, block_size, step=1):
    """Top-left (y, x) of every WZ sample unit (pixels, or 4x4 sub-blocks with step=4)."""
    out = []
    b = block_size
    for (i, j) in wz_blocks:
        for y in range(0, b, step):
            for x in range(0, b, step):
                out.append((i * b + y, j * b + x))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def gather_pixels(frame, positions):
    return np.asarray(frame)[positions[:, 0], positions[:, 1]]


def scatter_pixels(frame, positions, values):
    frame[positions[:, 0], positions[:, 1]] = values


def gather_subblocks(frame, positions):
    frame = np.asarray(frame, dtype=np.float64)
    return np.stack([frame[y:y + 4, x:x + 4] for y, x in positions]) if len(positions) else np.zeros((0, 4, 4))


def scatter_subblocks(frame, positions, blocks):
    for (y, x), blk in zip(positions, blocks):
        frame[y:y + 4, x:x + 4] = blk


# ---------------------------------------------------------------------------
# quantizer bins


@dataclass(frozen=True)
class BinGrid:
    """Uniform scalar quantizer: bin q covers [lo + q*step, lo + (q+1)*step).

    ``open_ends`` marks quantizers that clip, so the outer bins extend to
    infinity for likelihood purposes.  ``lattice`` shifts the likelihood
    edges for integer-valued sources (pixel p then owns [p-0.5, p+0.5)).
    """

    lo: float
    step: float
    levels: int
    open_ends: bool = False
    lattice: float = 0.0
    support: tuple = (-np.inf, np.inf)

    @property
    def num_planes(self):
        return int(self.levels).bit_length() - 1

    def quantize(self, values):
        q = np.floor((np.asarray(values, dtype=np.float64) - self.lo) / self.step)
        return np.clip(q, 0, self.levels - 1).astype(np.int64)

    def lower(self, q):
        return self.lo + np.asarray(q) * self.step

    def upper(self, q):
        return self.lo + (np.asarray(q) + 1) * self.step

    def likelihood_edges(self):
        """Edges (levels + 1,) used when integrating the noise model."""
        e = self.lo + np.arange(self.levels + 1) * self.step + self.lattice
        if self.open_ends:
            e[0], e[-1] = -np.inf, np.inf
        else:
            e[0] = max(e[0], self.support[0])
            e[-1] = min(e[-1], self.support[1])
        return e


def pixel_bins(quant):
    return BinGrid(0.0, float(quant.delta_q), quant.levels, False, -0.5, (-0.5, 255.5))


def dc_bins(levels):
    return BinGrid(0.0, DC_RANGE / levels, levels, True)


def ac_bins(levels, dynamic_range):
    r = float(max(1, int(dynamic_range)))
    return BinGrid(-r, 2 * r / levels, levels, True)


def band_levels_flat(quant):
    return [lv for row in quant.band_levels for lv in row]


def ac_dynamic_range(band_values):
    """Per-band range transmitted in the WZ header: ceil(max |c|), at least 1."""
    if len(band_values) == 0:
        return 1
    return int(max(1, np.ceil(np.max(np.abs(band_values)))))


def band_code_groups(quant):
    """Coded units in the transform domain: DC alone, then AC bands with the
    same level count grouped together (ordered by increasing frequency)."""
    flat = band_levels_flat(quant)
    groups = []
    if flat[0]:
        groups.append([0])
    by_level = {}
    order = sorted(range(1, 16), key=lambda b: (b // 4 + b % 4, b))
    for b in order:
        if flat[b]:
            by_level.setdefault(flat[b], []).append(b)
    for lv in sorted(by_level, reverse=True):
        groups.append(by_level[lv])
    return groups


def stack_bins(grids, counts):
    """One BinGrid with per-sample ``lo``/``step`` arrays from several grids
    that share the level count (used for a group of transform bands)."""
    levels = {g.levels for g in grids}
    if len(levels) != 1:
        raise ValueError("stacked bands must share the level count")
    lo = np.concatenate([np.full(c, g.lo, dtype=np.float64) for g, c in zip(grids, counts)])
    step = np.concatenate([np.full(c, g.step, dtype=np.float64) for g, c in zip(grids, counts)])
    g0 = grids[0]
    return BinGrid(lo, step, g0.levels, g0.open_ends, g0.lattice, g0.support)


# ---------------------------------------------------------------------------
# encoder-side parity source


class ParitySource:
    """Turbo parity of a set of quantized samples split into coding units.

    Parity streams are produced on first request and cached, so an encoder
    only computes what the decoder asks for.
    """

    def __init__(self, symbols, num_planes, units, seed=1, period=32):
        self.planes = extract_bitplanes(gray_encode(symbols), num_planes)
        self.units = [np.asarray(u, dtype=np.int64) for u in units]
        self.seed = seed
        self.period = period
        self._cache = {}

    def stream(self, unit, plane):
        key = (unit, plane)
        if key not in self._cache:
            idx = self.units[unit]
            code = cached_code(len(idx), self.seed, self.period)
            self._cache[key] = code.encode(self.planes[plane - 1][idx])
        return self._cache[key]

    def batch(self, unit, plane, k):
        return self.stream(unit, plane).batch_values(k)


_CODES = {}


def cached_code(n, seed, period):
    key = (n, seed, period)
    if key not in _CODES:
        _CODES[key] = TurboCode(n, seed, period)
    return _CODES[key]
