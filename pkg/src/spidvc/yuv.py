"""Raw planar YUV 4:2:0 files, one file per view."""

import os

import numpy as np

from .model import MultiViewSequence


class YuvError(ValueError):
    pass


def frame_bytes(width, height):
    if width % 2 or height % 2:
        raise YuvError(f"4:2:0 needs even dimensions, got {width}x{height}")
    return width * height * 3 // 2


def read_view(path, width, height, frames=None):
    """Return (luma (F, H, W), chroma list of bytes per frame)."""
    size = frame_bytes(width, height)
    total = os.path.getsize(path)
    if frames is None:
        if total % size:
            raise YuvError(f"{path}: size {total} is not a whole number of {width}x{height} frames")
        frames = total // size
    luma = np.zeros((frames, height, width), dtype=np.uint8)
    chroma = []
    with open(path, "rb") as fh:
        for k in range(frames):
            buf = fh.read(size)
            if len(buf) < size:
                raise YuvError(f"{path}: frame {k + 1} is truncated ({len(buf)} of {size} bytes)")
            luma[k] = np.frombuffer(buf, dtype=np.uint8, count=width * height).reshape(height, width)
            chroma.append(buf[width * height:])
    return luma, chroma


def read_yuv(paths, width, height, frames=None, fps=15.0):
    """Load the luma of every view; chroma is kept untouched for writing back."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    if not paths:
        raise YuvError("no input files")
    views = [read_view(p, width, height, frames) for p in paths]
    counts = {v[0].shape[0] for v in views}
    if len(counts) != 1:
        raise YuvError(f"views hold different frame counts: {sorted(counts)}")
    luma = np.stack([v[0] for v in views])
    return MultiViewSequence(luma, fps, [v[1] for v in views])


def write_yuv(path, luma, chroma=None):
    """Write (F, H, W) luma with the given chroma bytes per frame (neutral grey if absent)."""
    luma = np.asarray(luma, dtype=np.uint8)
    f, h, w = luma.shape
    grey = bytes([128]) * (frame_bytes(w, h) - w * h)
    with open(path, "wb") as fh:
        for k in range(f):
            fh.write(luma[k].tobytes())
            fh.write(chroma[k] if chroma is not None else grey)


def view_paths(prefix, num_views):
    return [f"{prefix}_v{v}.yuv" for v in range(1, num_views + 1)]
