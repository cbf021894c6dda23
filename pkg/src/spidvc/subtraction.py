"""Frame subtraction: macroblocks that barely change are not coded at all.

Macroblocks are 16x16.  A B frame's macroblock is dynamic when its SAD against
the frame the decoder will copy from exceeds a threshold; the decoder replaces
static macroblocks with the co-located reference pixels.
"""

import numpy as np

MACROBLOCK = 16
EMPTY_FILL = 128


def macroblock_sad(frame, reference, mb=MACROBLOCK):
    a = np.asarray(frame, dtype=np.int64)
    b = np.asarray(reference, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    if h % mb or w % mb:
        raise ValueError(f"{w}x{h} frame is not divisible into {mb}x{mb} macroblocks")
    d = np.abs(a - b).reshape(h // mb, mb, w // mb, mb)
    return d.sum(axis=(1, 3))


def mark_dynamic(frame, previous, threshold=512, mb=MACROBLOCK):
    """Activity map: True where the macroblock SAD exceeds the threshold."""
    return macroblock_sad(frame, previous, mb) > threshold


def expand_map(activity, mb=MACROBLOCK):
    return np.kron(np.asarray(activity, dtype=bool), np.ones((mb, mb), dtype=bool)).astype(bool)


def build_updated_reference(i_frame, b1_frame, b1_map, b1_key_mask, mb=MACROBLOCK):
    """I frame with the first B frame's dynamic KEY blocks laid over it."""
    ref = np.array(i_frame, copy=True)
    sel = expand_map(b1_map, mb) & np.asarray(b1_key_mask, dtype=bool)
    ref[sel] = np.asarray(b1_frame)[sel]
    return ref


def dynamic_mean(key_groups, key_masks, maps, mb=MACROBLOCK):
    """Rounded mean of the dynamic KEY pixels of a frame pair (128 if there are none)."""
    vals = [np.asarray(g)[expand_map(m, mb) & k] for g, k, m in zip(key_groups, key_masks, maps)]
    vals = np.concatenate([v.ravel() for v in vals]) if vals else np.zeros(0)
    if vals.size == 0:
        return EMPTY_FILL
    return int(np.floor(vals.astype(np.float64).mean() + 0.5))


def fill_static_key(key_group, key_mask, activity, value, mb=MACROBLOCK):
    out = np.array(key_group, copy=True)
    out[key_mask & ~expand_map(activity, mb)] = value
    return out


def pack_dynamic(key_groups, key_masks, maps, mb=MACROBLOCK):
    """Fill the static KEY slots of a frame pair with the dynamic mean.

    Returns (filled KEY groups, fill value).  The caller interleaves the
    filled groups into one KEY frame; the WZ side keeps only dynamic blocks
    (see :func:`dynamic_wz_blocks`).
    """
    fill = dynamic_mean(key_groups, key_masks, maps, mb)
    return [fill_static_key(g, k, m, fill, mb) for g, k, m in zip(key_groups, key_masks, maps)], fill


def dynamic_wz_blocks(wz_blocks, activity, block_size, mb=MACROBLOCK):
    """WZ blocks that overlap a dynamic macroblock."""
    act = np.asarray(activity, dtype=bool)
    out = []
    for (i, j) in wz_blocks:
        y, x = i * block_size, j * block_size
        a0, a1 = y // mb, (y + block_size - 1) // mb
        b0, b1 = x // mb, (x + block_size - 1) // mb
        if act[a0:a1 + 1, b0:b1 + 1].any():
            out.append((i, j))
    return out


def copy_static(frame, reference, activity, mb=MACROBLOCK):
    """Replace static macroblocks with the co-located reference pixels."""
    out = np.array(frame, copy=True)
    sel = ~expand_map(activity, mb)
    out[sel] = np.asarray(reference)[sel]
    return out


def pack_map_bits(activity):
    a = np.asarray(activity, dtype=np.uint8).ravel()
    return np.packbits(a).tobytes()


def unpack_map_bits(data, shape):
    n = int(np.prod(shape))
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:n]
    if bits.size != n:
        raise ValueError("activity map payload too short")
    return bits.reshape(shape).astype(bool)
