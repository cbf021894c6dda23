"""Core data types and the GOP / decode-order scheduler.

Views and frames are numbered from 1 in every layout function so the intra
placement formulas read the same as they are usually written; array storage
elsewhere in the package is 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

I_FRAME = "I"
B_FRAME = "B"

ORDER_MODES = ("min_distance", "min_delay")
FEEDBACK_MODES = ("off", "simple", "smart")
RECON_MODES = ("paper", "nearest")
FUSION_METHODS = ("sad", "vector_median", "refine_si", "fusion_refine_si")

# KEY qp paired with the WZ quantizer (pixel levels / transform table index).
QP_PAIRINGS = {40: 2, 36: 4, 32: 8, 28: 16}
TD_TABLE_FOR_QP = {40: 1, 36: 2, 32: 3, 28: 4}

# Levels per 4x4 band, row-major (u, v).  0 means the band is not WZ coded and
# the decoder keeps the side information coefficient.
TD_BAND_TABLES = {
    1: ((16, 8, 0, 0), (8, 0, 0, 0), (0, 0, 0, 0), (0, 0, 0, 0)),
    2: ((32, 8, 0, 0), (8, 0, 0, 0), (0, 0, 0, 0), (0, 0, 0, 0)),
    3: ((32, 8, 4, 0), (8, 4, 0, 0), (4, 0, 0, 0), (0, 0, 0, 0)),
    4: ((32, 16, 8, 4), (16, 8, 4, 0), (8, 4, 0, 0), (4, 0, 0, 0)),
}


class LayoutError(ValueError):
    pass


def check_frame(luma, block_size=None):
    """Validate an 8-bit luma grid and return it as a uint8 array."""
    arr = np.asarray(luma)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D luma grid, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("luma samples must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    if block_size is not None:
        h, w = arr.shape
        if h % block_size or w % block_size:
            raise ValueError(f"frame {w}x{h} is not a multiple of block size {block_size}")
    return arr


@dataclass
class MultiViewSequence:
    """Luma of every view, shape (views, frames, height, width), uint8.

    ``chroma`` optionally carries the untouched 4:2:0 chroma bytes per view and
    frame so decoded output can be written back as planar YUV.
    """

    luma: np.ndarray
    fps: float = 15.0
    chroma: list | None = None

    def __post_init__(self):
        self.luma = np.asarray(self.luma, dtype=np.uint8)
        if self.luma.ndim != 4:
            raise ValueError("luma must have shape (views, frames, height, width)")

    @property
    def num_views(self):
        return self.luma.shape[0]

    @property
    def frame_count(self):
        return self.luma.shape[1]

    @property
    def height(self):
        return self.luma.shape[2]

    @property
    def width(self):
        return self.luma.shape[3]

    def frame(self, view, index):
        """1-based access."""
        return self.luma[view - 1, index - 1]


@dataclass(frozen=True)
class QuantSpec:
    domain: str = "pixel"
    levels: int = 4
    band_levels: tuple = ()

    def __post_init__(self):
        if self.domain == "pixel":
            if self.levels not in (2, 4, 8, 16):
                raise ValueError("pixel-domain levels must be one of 2, 4, 8, 16")
        elif self.domain == "transform":
            if len(self.band_levels) != 4 or any(len(r) != 4 for r in self.band_levels):
                raise ValueError("band_levels must be a 4x4 table")
            for row in self.band_levels:
                for lv in row:
                    if lv and (lv & (lv - 1)):
                        raise ValueError("band levels must be powers of two")
        else:
            raise ValueError(f"unknown quantization domain {self.domain!r}")

    @classmethod
    def pixel(cls, levels):
        return cls("pixel", levels)

    @classmethod
    def transform(cls, table=2):
        rows = TD_BAND_TABLES[table] if isinstance(table, int) else table
        return cls("transform", 0, tuple(tuple(int(x) for x in r) for r in rows))

    @property
    def bp_max(self):
        if self.domain == "pixel":
            return int(math.log2(self.levels))
        return max(int(math.log2(lv)) for r in self.band_levels for lv in r if lv)

    @property
    def delta_q(self):
        if self.domain != "pixel":
            raise AttributeError("delta_q is only defined in the pixel domain")
        return 256 // self.levels


@dataclass(frozen=True)
class CodecConfig:
    block_size: int = 16
    gop_length: int = 2
    order_mode: str = "min_distance"
    qp: int = 36
    domain: str = "pixel"
    levels: int = 4
    td_table: int = 2
    puncture_period: int = 32
    max_turbo_iters: int = 18
    ber_threshold: float = 1e-3
    selective_feedback: str = "off"
    feedback_window: int = 12
    feedback_update: int = 12
    smart_block: int = 32
    frame_subtraction: bool = False
    subtraction_threshold: int = 512
    reconstruction_mode: str = "paper"
    fusion: str = "sad"
    hypotheses: int = 3
    search_range: int = 16
    disparity_range_x: int = 32
    disparity_range_y: int = 4
    boundary_width: int = 2
    median_threshold: float = 8.0
    refine_th: float = 5.0
    mode_threshold: float = 3.0
    sec_entropy_threshold: float = 1.0
    llr_clamp: float = 25.0
    min_turbo_length: int = 96
    seed: int = 1
    fps: float = 15.0

    def __post_init__(self):
        if self.block_size not in (4, 8, 16):
            raise ValueError("block_size must be 4, 8 or 16")
        if self.gop_length < 2:
            raise ValueError("gop_length must be at least 2")
        if self.ber_threshold <= 0:
            raise ValueError("ber_threshold must be positive")
        if self.order_mode not in ORDER_MODES:
            raise ValueError(f"order_mode must be one of {ORDER_MODES}")
        if self.selective_feedback not in FEEDBACK_MODES:
            raise ValueError(f"selective_feedback must be one of {FEEDBACK_MODES}")
        if self.reconstruction_mode not in RECON_MODES:
            raise ValueError(f"reconstruction_mode must be one of {RECON_MODES}")
        if self.fusion not in FUSION_METHODS:
            raise ValueError(f"fusion must be one of {FUSION_METHODS}")
        if not 1 <= self.hypotheses <= 3:
            raise ValueError("hypotheses must be 1, 2 or 3")
        if self.puncture_period < 1:
            raise ValueError("puncture_period must be positive")
        self.quant  # validates levels / table

    @property
    def quant(self):
        if self.domain == "transform":
            return QuantSpec.transform(self.td_table)
        return QuantSpec.pixel(self.levels)

    def with_(self, **kw):
        return replace(self, **kw)

    def operating_point(self, qp):
        """Config for one of the paired (qp, WZ quantizer) operating points."""
        if self.domain == "transform":
            return replace(self, qp=qp, td_table=TD_TABLE_FOR_QP[qp])
        return replace(self, qp=qp, levels=QP_PAIRINGS[qp])

    # flat "key = value" text form, used by config files and the container
    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, **overrides):
        return cls.from_mapping(parse_keyed_text(text), **overrides)

    @classmethod
    def from_mapping(cls, mapping, **overrides):
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in {**mapping, **overrides}.items():
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _coerce(kinds[key], raw)
        return cls(**values)


def parse_keyed_text(text):
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(kind, raw):
    if not isinstance(raw, str):
        return raw
    if kind in ("bool", bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    return raw


# --------------------------------------------------------------------------
# GOP layout


@dataclass(frozen=True)
class GopLayout:
    num_views: int
    num_frames: int
    gop_length: int
    order_mode: str
    kinds: tuple  # kinds[v-1][f-1] in {"I", "B"}
    decode_order: tuple  # per view, 1-based B frame indices in decode order
    global_order: tuple = field(default=())  # (view, frame) over all B frames

    def kind(self, view, frame):
        return self.kinds[view - 1][frame - 1]

    def is_intra(self, view, frame):
        return self.kind(view, frame) == I_FRAME

    def intra_frames(self, view):
        return [f for f in range(1, self.num_frames + 1) if self.is_intra(view, f)]

    def b_frames(self, view):
        return [f for f in range(1, self.num_frames + 1) if not self.is_intra(view, f)]

    def distance_to_intra(self, view, frame):
        return min(abs(frame - i) for i in self.intra_frames(view))

    def past_intra(self, view, frame):
        return max(i for i in self.intra_frames(view) if i <= frame)

    def gop_index(self, view, frame):
        """Index of the GOP a frame belongs to (count of intra frames before it)."""
        return sum(1 for i in self.intra_frames(view) if i <= frame)

    def decode_position(self):
        """Map (view, frame) of each B frame to its position in the global order."""
        return {vf: k for k, vf in enumerate(self.global_order)}


def intra_positions(view, num_frames, gop_length):
    """1-based intra frame indices of a (1-based) view."""
    if view % 2 == 1:
        start = 1
    else:
        start = math.ceil((gop_length + 1) / 2)
    pos = {1}
    f = start
    while f <= num_frames:
        pos.add(f)
        f += gop_length
    return sorted(pos)


def build_gop_layout(num_views, num_frames, gop_length, order_mode="min_distance"):
    if gop_length < 2:
        raise LayoutError("gop_length must be at least 2")
    if num_frames < 1 or num_views < 1:
        raise LayoutError("need at least one view and one frame")
    if order_mode not in ORDER_MODES:
        raise LayoutError(f"order_mode must be one of {ORDER_MODES}")

    kinds = []
    keys = []
    for v in range(1, num_views + 1):
        intra = intra_positions(v, num_frames, gop_length)
        row = [I_FRAME if f in intra else B_FRAME for f in range(1, num_frames + 1)]
        kinds.append(tuple(row))
        for f in range(1, num_frames + 1):
            if row[f - 1] == B_FRAME:
                if order_mode == "min_distance":
                    rank = min(abs(f - i) for i in intra)
                else:
                    rank = 0
                keys.append((rank, f, v))
    keys.sort()
    global_order = tuple((v, f) for _, f, v in keys)
    per_view = tuple(
        tuple(f for vv, f in global_order if vv == v) for v in range(1, num_views + 1)
    )
    return GopLayout(num_views, num_frames, gop_length, order_mode,
                     tuple(kinds), per_view, global_order)


class References(NamedTuple):
    temporal: list  # [(view, frame)], past first
    inter_view: list  # [(view, frame)], lower view first

    @property
    def all(self):
        return self.temporal + self.inter_view


def reference_frames(view, frame, layout):
    """Decoded frames a B frame may predict from at the moment it is decoded."""
    if layout.is_intra(view, frame):
        raise LayoutError(f"view {view} frame {frame} is intra coded")
    pos = layout.decode_position()
    me = pos[(view, frame)]

    def available(v, f):
        if layout.is_intra(v, f):
            return True
        return pos[(v, f)] < me

    temporal = []
    past = [f for f in range(frame - 1, 0, -1) if available(view, f)]
    if past:
        temporal.append((view, past[0]))
    future = [f for f in range(frame + 1, layout.num_frames + 1) if available(view, f)]
    if future:
        temporal.append((view, future[0]))
    inter = [(v, frame) for v in (view - 1, view + 1)
             if 1 <= v <= layout.num_views and available(v, frame)]
    return References(temporal, inter)
