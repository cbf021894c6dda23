"""Per-view encoders, the central decoder and the parity channel between them.

Every B frame is split into a KEY group (intra coded, paired with another B
frame's KEY group into one picture) and a WZ group whose quantized samples
are only ever sent as punctured turbo parity, batch by batch, on request.
"""

from dataclasses import dataclass, field

import numpy as np

from . import feedback as fb
from . import subtraction as sub
from .container import (ACTIVITY_MAP, FEEDBACK_MAP, INTRA_FRAME, INTRA_KEY, INTRA_PAYLOAD, PARITY_BATCH,
                        WZ_HEADER, Container, ContainerError, ParityKey, intra_payload, map_payload,
                        parity_payload, parse_intra, parse_map, parse_parity, parse_wz_header,
                        wz_header_payload)
from .interleave import (InterleavePattern, b_frame_parity, key_pairs, pack_key_group,
                         temporal_deinterleave, temporal_interleave, unpack_key_group)
from .intra_codec import IntraBitstream, intra_decode, intra_encode
from .model import CodecConfig, MultiViewSequence, build_gop_layout
from .si_engine import TEC, VEC, build_side_information
from .wz_decoder import (DecodeSettings, build_clipping_maps, decode_wz_unit, noise_model,
                         reconstruct)
from .wz_pipeline import (ParitySource, ac_bins, ac_dynamic_range, band_code_groups, band_group,
                          band_levels_flat, band_ungroup, dc_bins, gather_pixels, gather_subblocks,
                          pixel_bins, scatter_subblocks, stack_bins, td_inverse, td_transform,
                          wz_sample_positions)


class CodecError(ValueError):
    pass


def check_geometry(cfg, height, width):
    b = cfg.block_size
    if height % b or width % b:
        raise CodecError(f"{width}x{height} frames are not a multiple of block size {b}")
    if (width // b) % 2:
        raise CodecError("KEY packing needs an even number of block columns")
    if (cfg.frame_subtraction or cfg.selective_feedback == "simple") and (height % 16 or width % 16):
        raise CodecError("subtraction and simple feedback need 16x16 macroblock alignment")


# ---------------------------------------------------------------------------
# shared layout helpers


def frame_pattern(layout, view, frame, height, width, block_size):
    return InterleavePattern.for_frame(height, width, block_size, b_frame_parity(layout, view, frame))


def key_picture(groups, patterns):
    """Picture handed to the intra codec for a KEY unit of one or two frames."""
    if len(groups) == 2:
        return temporal_interleave(groups[0], patterns[0], groups[1], patterns[1])
    return pack_key_group(groups[0], patterns[0])


def split_key_picture(picture, patterns):
    if len(patterns) == 2:
        return list(temporal_deinterleave(picture, patterns[0], patterns[1]))
    return [unpack_key_group(picture, patterns[0])]


@dataclass
class CodeGroup:
    """One separately coded sample set: the pixels, or a group of bands."""

    bands: list
    band_of: np.ndarray  # band of each sample
    pos_index: np.ndarray  # sample -> index into the unit's position list
    grid: object  # BinGrid (per-sample arrays for stacked bands)
    is_dc: bool = False


@dataclass
class UnitLayout:
    positions: np.ndarray  # (M, 2) pixel or 4x4 sub-block origins
    segment: np.ndarray  # (M,) segment of each position
    seg_slices: list  # per segment slice into positions


def unit_layout(segments, cfg):
    step = 1 if cfg.domain == "pixel" else 4
    pos, seg, slices = [], [], []
    start = 0
    for s, (_, blocks) in enumerate(segments):
        p = wz_sample_positions(blocks, cfg.block_size, step)
        pos.append(p)
        seg.append(np.full(len(p), s, dtype=np.int64))
        slices.append(slice(start, start + len(p)))
        start += len(p)
    if not pos:
        return UnitLayout(np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64), [])
    return UnitLayout(np.concatenate(pos), np.concatenate(seg), slices)


def unit_values(frames, lay, cfg):
    """Samples of the unit: (M,) pixels or (16, M) band coefficients."""
    parts = []
    for s, f in enumerate(frames):
        p = lay.positions[lay.seg_slices[s]]
        if cfg.domain == "pixel":
            parts.append(gather_pixels(f, p).astype(np.float64))
        else:
            parts.append(band_group(td_transform(gather_subblocks(f, p))))
    if cfg.domain == "pixel":
        return np.concatenate(parts) if parts else np.zeros(0)
    return np.concatenate(parts, axis=1) if parts else np.zeros((16, 0))


def code_groups(cfg, m, ranges=None):
    quant = cfg.quant
    if cfg.domain == "pixel":
        return [CodeGroup([0], np.zeros(m, dtype=np.int64), np.arange(m), pixel_bins(quant))]
    levels = band_levels_flat(quant)
    out = []
    for bands in band_code_groups(quant):
        band_of = np.repeat(np.array(bands, dtype=np.int64), m)
        pos_index = np.tile(np.arange(m), len(bands))
        if bands == [0]:
            grid = dc_bins(levels[0])
        else:
            grid = stack_bins([ac_bins(levels[b], ranges[b]) for b in bands], [m] * len(bands))
        out.append(CodeGroup(bands, band_of, pos_index, grid, bands == [0]))
    return out


def group_values(values, group, cfg):
    if cfg.domain == "pixel":
        return values[group.pos_index]
    return values[group.band_of, group.pos_index]


def header_ranges(values, cfg):
    """Per-band AC dynamic range (transform domain); zeros in the pixel domain."""
    ranges = np.zeros(16, dtype=np.int64)
    if cfg.domain == "transform":
        levels = band_levels_flat(cfg.quant)
        for b in range(1, 16):
            if levels[b]:
                ranges[b] = min(ac_dynamic_range(values[b]), 65535)
    return ranges


class FeedbackState:
    """Feedback bookkeeping of one view, kept separately by encoder and decoder."""

    def __init__(self, cfg, height, width):
        self.cfg = cfg
        self.mode = cfg.selective_feedback
        r = cfg.smart_block
        self.region_grid = (-(-height // r), -(-width // r))
        self.smart = fb.SmartCounter(self.region_grid)
        self.groups = np.ones((height // 16, width // 16), dtype=np.int64) if height % 16 == 0 \
            and width % 16 == 0 else None

    def units(self, group, positions):
        """(index arrays in request order, regions folded into each unit)."""
        n = len(positions)
        if self.mode == "off" or group.is_dc:
            return [np.arange(n)], None
        min_len = self.cfg.min_turbo_length
        if self.mode == "simple":
            return fb.simple_units(positions, self.groups, min_len), None
        return fb.smart_units(positions, self.smart.order(), self.cfg.smart_block,
                              self.region_grid[1], min_len)


# ---------------------------------------------------------------------------
# bitstream (everything but the parity, which flows through the channel)


@dataclass
class Bitstream:
    intra: dict = field(default_factory=dict)  # (view, frame) -> bytes
    key: dict = field(default_factory=dict)  # (view, unit) -> bytes
    wz_header: dict = field(default_factory=dict)  # (view, unit) -> ranges
    activity: dict = field(default_factory=dict)  # (view, frame) -> bool map

    def records(self):
        out = []
        for (v, f), data in sorted(self.intra.items()):
            out.append((INTRA_PAYLOAD, intra_payload(v, INTRA_FRAME, f, data)))
        for (v, u), data in sorted(self.key.items()):
            out.append((INTRA_PAYLOAD, intra_payload(v, INTRA_KEY, u, data)))
        for (v, u), ranges in sorted(self.wz_header.items()):
            out.append((WZ_HEADER, wz_header_payload(v, u, ranges)))
        for (v, f), m in sorted(self.activity.items()):
            out.append((ACTIVITY_MAP, map_payload(v, f, m)))
        return out

    @classmethod
    def from_container(cls, c):
        bs = cls()
        for t, p in c.records:
            if t == INTRA_PAYLOAD:
                v, kind, idx, data = parse_intra(p)
                (bs.intra if kind == INTRA_FRAME else bs.key)[(v, idx)] = data
            elif t == WZ_HEADER:
                v, u, ranges = parse_wz_header(p)
                bs.wz_header[(v, u)] = ranges
            elif t == ACTIVITY_MAP:
                v, f, m = parse_map(p)
                bs.activity[(v, f)] = m.astype(bool)
        return bs


# ---------------------------------------------------------------------------
# encoder


@dataclass
class WzUnit:
    view: int
    uid: int  # first frame of the unit
    frames: tuple
    segments: list  # [(frame, coded WZ blocks)]


def plan_units(cfg, layout, view):
    """KEY units (one or two B frames) and the WZ units built on them."""
    pairs = key_pairs(layout, view)
    if cfg.frame_subtraction:
        wz = [tuple(p) for p in pairs]
    else:
        wz = [(f,) for f in layout.b_frames(view)]
    return pairs, wz


def subtraction_reference_frames(layout, view, frames):
    """For each frame of a subtraction unit: (I frame it copies from, overlay partner or None)."""
    out = []
    first_i = layout.past_intra(view, frames[0])
    out.append((first_i, None))
    if len(frames) == 2:
        i2 = layout.past_intra(view, frames[1])
        out.append((i2, frames[0] if i2 == first_i else None))
    return out


class ViewEncoder:
    """Independent encoder of one camera."""

    def __init__(self, cfg, luma, view, layout):
        self.cfg = cfg
        self.luma = np.asarray(luma, dtype=np.uint8)  # (F, H, W)
        self.view = view
        self.layout = layout
        _, self.h, self.w = self.luma.shape
        self.state = FeedbackState(cfg, self.h, self.w)
        self.units = {}
        self._sources = {}
        self._served = {}  # (uid, group, fb unit) -> batches served for the current unit
        self._current = None

    def frame(self, f):
        return self.luma[f - 1]

    def pattern(self, f):
        return frame_pattern(self.layout, self.view, f, self.h, self.w, self.cfg.block_size)

    def encode(self, bs):
        cfg = self.cfg
        v = self.view
        for f in self.layout.intra_frames(v):
            bs.intra[(v, f)] = intra_encode(self.frame(f), cfg.qp).to_bytes()
        pairs, wz_units = plan_units(cfg, self.layout, v)
        maps = {}
        if cfg.frame_subtraction:
            for unit in pairs:
                for f, (i_frame, partner) in zip(unit, subtraction_reference_frames(self.layout, v, unit)):
                    ref = self.frame(i_frame)
                    if partner is not None:
                        ref = sub.build_updated_reference(ref, self.frame(partner), maps[partner],
                                                          self.pattern(partner).key_mask())
                    maps[f] = sub.mark_dynamic(self.frame(f), ref, cfg.subtraction_threshold)
                    bs.activity[(v, f)] = maps[f]
        for unit in pairs:
            pats = [self.pattern(f) for f in unit]
            groups = [np.where(p.key_mask(), self.frame(f), 0).astype(np.uint8) for f, p in zip(unit, pats)]
            if cfg.frame_subtraction:
                groups, _ = sub.pack_dynamic(groups, [p.key_mask() for p in pats], [maps[f] for f in unit])
            bs.key[(v, unit[0])] = intra_encode(key_picture(groups, pats), cfg.qp).to_bytes()
        for frames in wz_units:
            segs = []
            for f in frames:
                blocks = self.pattern(f).wz_blocks()
                if cfg.frame_subtraction:
                    blocks = sub.dynamic_wz_blocks(blocks, maps[f], cfg.block_size)
                segs.append((f, blocks))
            unit = WzUnit(v, frames[0], frames, segs)
            lay = unit_layout(segs, cfg)
            values = unit_values([self.frame(f) for f in frames], lay, cfg)
            ranges = header_ranges(values, cfg)
            if cfg.domain == "transform":
                bs.wz_header[(v, unit.uid)] = ranges
            self.units[unit.uid] = (unit, lay, values, code_groups(cfg, len(lay.positions), ranges))

    # -- feedback side of the encoder --------------------------------------

    def receive_map(self, groups):
        self.state.groups = np.asarray(groups, dtype=np.int64).copy()

    def _fold(self):
        """Fold request counts of the finished unit into the smart counter."""
        if self._current is None or self.state.mode != "smart":
            return
        uid = self._current
        unit, lay, _, groups = self.units[uid]
        total = np.zeros(int(np.prod(self.state.region_grid)), dtype=np.int64)
        for gi, group in enumerate(groups):
            src = self._sources.get((uid, gi))
            if src is None or src[1] is None:
                continue
            counts = [self._served.get((uid, gi, k), 0) for k in range(len(src[1]))]
            total += fb.region_requests(counts, src[1], total.size)
        self.state.smart.update(total)

    def serve(self, key):
        if key.unit != self._current:
            self._fold()
            self._current = key.unit
        unit, lay, values, groups = self.units[key.unit]
        sk = (key.unit, key.group)
        if sk not in self._sources:
            group = groups[key.group]
            units, members = self.state.units(group, lay.positions[group.pos_index])
            symbols = group.grid.quantize(group_values(values, group, self.cfg))
            src = ParitySource(symbols, group.grid.num_planes, units, self.cfg.seed,
                               self.cfg.puncture_period)
            self._sources[sk] = (src, members)
        src = self._sources[sk][0]
        ck = (key.unit, key.group, key.fb_unit)
        self._served[ck] = self._served.get(ck, 0) + 1
        return src.batch(key.fb_unit, key.plane, key.batch)


# ---------------------------------------------------------------------------
# parity channel


class LiveChannel:
    """In-process channel to the encoders; records everything it carries."""

    def __init__(self, encoders):
        self.encoders = encoders
        self.transcript = []

    def request(self, key):
        bits = self.encoders[key.view].serve(key)
        self.transcript.append((PARITY_BATCH, parity_payload(key, bits)))
        return bits

    def send_map(self, view, index, groups):
        self.encoders[view].receive_map(groups)
        self.transcript.append((FEEDBACK_MAP, map_payload(view, index, groups, packed=False)))


class ReplayChannel:
    """Serves parity from a stored transcript, in the order it was requested."""

    def __init__(self, records):
        self.records = [(t, p) for t, p in records if t in (PARITY_BATCH, FEEDBACK_MAP)]
        self.pos = 0

    def _next(self, rtype):
        if self.pos >= len(self.records):
            raise ContainerError("decoder asked for more data than the container holds")
        t, p = self.records[self.pos]
        if t != rtype:
            raise ContainerError(f"record {self.pos}: expected type {rtype}, found {t}")
        self.pos += 1
        return p

    def request(self, key):
        got, bits = parse_parity(self._next(PARITY_BATCH))
        if got != key:
            raise ContainerError(f"parity record {self.pos - 1} is {got}, decoder asked for {key}")
        return bits

    def send_map(self, view, index, groups):
        v, i, stored = parse_map(self._next(FEEDBACK_MAP), packed=False)
        if (v, i) != (view, index) or not np.array_equal(stored, groups):
            raise ContainerError(f"feedback map record {self.pos - 1} does not match the decoder")


# ---------------------------------------------------------------------------
# decoder


@dataclass
class FrameStats:
    bits_key: int = 0
    bits_parity: int = 0
    bits_maps: int = 0
    bits_feedback: int = 0
    parity_requests: int = 0
    residual_flag: bool = False
    si: dict = field(default_factory=dict)  # method -> (prediction, WZ blocks)


class Decoder:
    def __init__(self, cfg, num_views, num_frames, height, width, bitstream, channel):
        check_geometry(cfg, height, width)
        self.cfg = cfg
        self.V, self.F, self.h, self.w = num_views, num_frames, height, width
        self.bs = bitstream
        self.channel = channel
        self.layout = build_gop_layout(num_views, num_frames, cfg.gop_length, cfg.order_mode)
        self.out = np.zeros((num_views, num_frames, height, width), dtype=np.uint8)
        self.decoded = set()
        self.key_pixels = {}
        self.stats = {(v, f): FrameStats() for v in range(1, num_views + 1)
                      for f in range(1, num_frames + 1)}
        self.state = {v: FeedbackState(cfg, height, width) for v in range(1, num_views + 1)}
        self.simple = {v: fb.SimpleFeedback((height // 16, width // 16), cfg.quant.bp_max,
                                            cfg.feedback_window, cfg.feedback_update)
                       for v in range(1, num_views + 1)} if cfg.selective_feedback == "simple" else {}
        self.settings = DecodeSettings.from_config(cfg)

    def pattern(self, v, f):
        return frame_pattern(self.layout, v, f, self.h, self.w, self.cfg.block_size)

    def _stream(self, table, key, what):
        if key not in table:
            raise ContainerError(f"missing {what} for view {key[0]} index {key[1]}")
        return IntraBitstream.from_bytes(table[key])

    # -- intra part ----------------------------------------------------------

    def decode_intra(self):
        for v in range(1, self.V + 1):
            for f in self.layout.intra_frames(v):
                s = self._stream(self.bs.intra, (v, f), "intra frame")
                self.out[v - 1, f - 1] = intra_decode(s)
                self.stats[(v, f)].bits_key = s.num_bits
                self.decoded.add((v, f))
            for unit in key_pairs(self.layout, v):
                s = self._stream(self.bs.key, (v, unit[0]), "KEY unit")
                pats = [self.pattern(v, f) for f in unit]
                groups = split_key_picture(intra_decode(s), pats)
                share = _split(s.num_bits, len(unit))
                for f, g, p, bits in zip(unit, groups, pats, share):
                    self.key_pixels[(v, f)] = (g, p.key_mask())
                    self.stats[(v, f)].bits_key = bits

    # -- WZ part ---------------------------------------------------------------

    def schedule(self):
        """WZ units in decode order: a unit is decoded once all its frames are reached."""
        units = {}
        for v in range(1, self.V + 1):
            for frames in plan_units(self.cfg, self.layout, v)[1]:
                for f in frames:
                    units[(v, f)] = (v, frames)
        reached = set()
        order = []
        for vf in self.layout.global_order:
            reached.add(vf)
            v, frames = units[vf]
            if all((v, f) in reached for f in frames) and (v, frames) not in order:
                order.append((v, frames))
        return order

    def references(self, v, f, exclude=()):
        """Nearest decoded frames before/after in the same view, plus decoded co-located views."""
        avail = self.decoded
        temporal = []
        past = [g for g in range(f - 1, 0, -1) if (v, g) in avail and g not in exclude]
        if past:
            temporal.append((self.out[v - 1, past[0] - 1], f - past[0]))
        future = [g for g in range(f + 1, self.F + 1) if (v, g) in avail and g not in exclude]
        if future:
            temporal.append((self.out[v - 1, future[0] - 1], future[0] - f))
        views = [self.out[u - 1, f - 1] for u in (v - 1, v + 1)
                 if 1 <= u <= self.V and (u, f) in avail]
        return temporal, views

    def run(self):
        self.decode_intra()
        for v, frames in self.schedule():
            self.decode_unit(v, frames)
        return self.out

    def _prepare_frame(self, v, f, frames, maps):
        """Current-frame pixels known before WZ decoding, and the coded WZ blocks."""
        cfg = self.cfg
        key, kmask = self.key_pixels[(v, f)]
        cur = key.astype(np.float64)
        known = kmask.copy()
        blocks = self.pattern(v, f).wz_blocks()
        if cfg.frame_subtraction:
            ref = self._subtraction_reference(v, f, frames, maps)
            static = ~sub.expand_map(maps[f])
            cur[static] = ref[static]
            known |= static
            blocks = sub.dynamic_wz_blocks(blocks, maps[f], cfg.block_size)
        return cur, known, blocks

    def _subtraction_reference(self, v, f, frames, maps):
        refs = dict(zip(frames, subtraction_reference_frames(self.layout, v, frames)))
        i_frame, partner = refs[f]
        ref = self.out[v - 1, i_frame - 1]
        if partner is not None:
            pkey, pmask = self.key_pixels[(v, partner)]
            ref = sub.build_updated_reference(ref, pkey, maps[partner], pmask)
        return ref

    def decode_unit(self, v, frames):
        cfg = self.cfg
        maps = {}
        if cfg.frame_subtraction:
            for f in frames:
                if (v, f) not in self.bs.activity:
                    raise ContainerError(f"missing activity map for view {v} frame {f}")
                maps[f] = self.bs.activity[(v, f)]
                self.stats[(v, f)].bits_maps = maps[f].size
        prepared = [self._prepare_frame(v, f, frames, maps) for f in frames]
        segs = [(f, p[2]) for f, p in zip(frames, prepared)]
        lay = unit_layout(segs, cfg)
        m = len(lay.positions)

        # side information per frame
        hyps_per_seg, noise_per_seg, sides = [], [], []
        for (f, blocks), (cur, known, _) in zip(segs, prepared):
            if not blocks:
                sides.append(None)
                continue
            temporal, views = self.references(v, f, exclude=frames)
            side = build_side_information(cur, known, blocks, temporal, views, cfg)
            sides.append(side)
            self.stats[(v, f)].si = {"fused": (side.fused.prediction, blocks),
                                     "fusion": (side.fusion_prediction, blocks),
                                     TEC: (side.tec.prediction, blocks)}
            if side.vec is not None:
                self.stats[(v, f)].si[VEC] = (side.vec.prediction, blocks)
        live = [s for s in sides if s is not None]
        num_h = min([cfg.hypotheses] + [len(s.ranked) for s in live]) if live else 0

        frames_si, frames_alpha = [], []
        for (f, blocks), (cur, known, _), side in zip(segs, prepared, sides):
            hs, als = [], []
            for h in range(num_h):
                if side is None:
                    hs.append(cur)
                    als.append({})
                    continue
                cand = side.ranked[h]
                which = "fused" if h == 0 else cand.method
                pred = np.where(known, cur, cand.prediction)
                hs.append(pred)
                als.append(noise_model(side, which, cur, known, blocks, cfg.block_size,
                                       cfg.domain == "transform").alpha)
            frames_si.append(hs)
            frames_alpha.append(als)

        ranges = self.bs.wz_header.get((v, frames[0]), np.zeros(16, dtype=np.int64))
        groups = code_groups(cfg, m, ranges)
        recon_values = None
        flag = False
        spent = 0
        requests = 0
        state = self.state[v]
        region_total = np.zeros(int(np.prod(state.region_grid)), dtype=np.int64)
        clip_flags = [np.zeros((cfg.quant.bp_max, self.h // 16 or 1, self.w // 16 or 1), dtype=bool)
                      for _ in frames]
        if m and num_h:
            si_values = np.stack([unit_values([frames_si[s][h] for s in range(len(frames))], lay, cfg)
                                  for h in range(num_h)])
            alpha_pos = self._alpha_positions(lay, frames_alpha, num_h)
            recon_values = si_values[0].copy()
            for gi, group in enumerate(groups):
                gpos = lay.positions[group.pos_index]
                units, members = state.units(group, gpos)
                si_g = np.stack([group_values(si_values[h], group, cfg) for h in range(num_h)])
                if cfg.domain == "pixel":
                    al_g = alpha_pos[:, group.pos_index]
                else:
                    al_g = alpha_pos[:, group.band_of, group.pos_index]

                def request(u, plane, batch, gi=gi):
                    return self.channel.request(ParityKey(v, frames[0], gi, u, plane, batch))

                res = decode_wz_unit(si_g, al_g, group.grid, request, self.settings, units,
                                     selective=cfg.selective_feedback != "off" and not group.is_dc)
                vals = reconstruct(res.symbols, si_g, group.grid, cfg.reconstruction_mode)
                if cfg.domain == "pixel":
                    recon_values[group.pos_index] = vals
                else:
                    recon_values[group.band_of, group.pos_index] = vals
                flag |= res.residual_flag
                spent += res.parity_bits
                requests += res.requests
                if members is not None:
                    region_total += fb.region_requests(res.unit_requests(len(units)), members,
                                                       region_total.size)
                if self.simple:
                    flags = build_clipping_maps(res.symbols, group.grid.quantize(si_g[0]),
                                                group.grid.num_planes)
                    seg_of = lay.segment[group.pos_index]
                    for s in range(len(frames)):
                        sel = seg_of == s
                        bf = fb.block_clipping(flags[:, sel], gpos[sel], 16, clip_flags[s].shape[1:])
                        clip_flags[s][:bf.shape[0]] |= bf

        # write the frames back
        for s, (f, blocks) in enumerate(segs):
            cur, known, _ = prepared[s]
            frame = cur.copy()
            if recon_values is not None and blocks:
                sl = lay.seg_slices[s]
                if cfg.domain == "pixel":
                    p = lay.positions[sl]
                    frame[p[:, 0], p[:, 1]] = recon_values[sl]
                else:
                    scatter_subblocks(frame, lay.positions[sl], td_inverse(band_ungroup(recon_values[:, sl])))
            self.out[v - 1, f - 1] = np.clip(np.floor(frame + 0.5), 0, 255).astype(np.uint8)
            self.decoded.add((v, f))

        for f, bits, reqs in zip(frames, _split(spent, len(frames)), _split(requests, len(frames))):
            st = self.stats[(v, f)]
            st.bits_parity = bits
            st.parity_requests = reqs
            st.residual_flag = flag

        if cfg.selective_feedback == "smart" and m and num_h:
            state.smart.update(region_total)
        elif cfg.selective_feedback == "simple":
            for s, f in enumerate(frames):
                if self.simple[v].push(clip_flags[s]):
                    groups_map = self.simple[v].groups
                    state.groups = groups_map.copy()
                    self.channel.send_map(v, f, groups_map)
                    wz = ~self.pattern(v, f).key_mask()
                    n_wz = int(wz.reshape(self.h // 16, 16, self.w // 16, 16).any(axis=(1, 3)).sum())
                    self.stats[(v, f)].bits_feedback = fb.feedback_overhead_bits(
                        "simple", cfg.quant.bp_max, n_wz)

    def _alpha_positions(self, lay, frames_alpha, num_h):
        """Laplacian parameter of every hypothesis at every unit position (and band)."""
        n = self.cfg.block_size
        td = self.cfg.domain == "transform"
        m = len(lay.positions)
        out = np.empty((num_h, 16, m) if td else (num_h, m))
        bi = lay.positions[:, 0] // n
        bj = lay.positions[:, 1] // n
        for h in range(num_h):
            for k in range(m):
                a = frames_alpha[lay.segment[k]][h].get((bi[k], bj[k]))
                if a is None:
                    a = np.full(16, 1.0) if td else 1.0
                if td:
                    out[h, :, k] = a
                else:
                    out[h, k] = a
        return out


def _split(total, parts):
    base, rem = divmod(int(total), parts)
    return [base + (1 if k < rem else 0) for k in range(parts)]


# ---------------------------------------------------------------------------
# whole-sequence entry points


@dataclass
class CodecRun:
    container: Container
    decoded: np.ndarray  # (V, F, H, W)
    stats: dict  # (view, frame) -> FrameStats
    layout: object


def encode_sequence(cfg, seq):
    """Run every view encoder; returns (bitstream, encoders)."""
    check_geometry(cfg, seq.height, seq.width)
    layout = build_gop_layout(seq.num_views, seq.frame_count, cfg.gop_length, cfg.order_mode)
    bs = Bitstream()
    encoders = {}
    for v in range(1, seq.num_views + 1):
        enc = ViewEncoder(cfg, seq.luma[v - 1], v, layout)
        enc.encode(bs)
        encoders[v] = enc
    return bs, encoders


def run_codec(cfg, seq):
    """Encode, decode through the live parity channel and package the container."""
    bs, encoders = encode_sequence(cfg, seq)
    channel = LiveChannel(encoders)
    dec = Decoder(cfg, seq.num_views, seq.frame_count, seq.height, seq.width, bs, channel)
    decoded = dec.run()
    c = Container(cfg.to_text(), seq.num_views, seq.frame_count, seq.height, seq.width)
    for t, p in bs.records() + channel.transcript:
        c.add(t, p)
    return CodecRun(c, decoded, dec.stats, dec.layout)


def decode_container(container):
    """Decode a stored container without access to any encoder."""
    cfg = CodecConfig.from_text(container.config_text)
    bs = Bitstream.from_container(container)
    dec = Decoder(cfg, container.num_views, container.num_frames, container.height,
                  container.width, bs, ReplayChannel(container.records))
    decoded = dec.run()
    if dec.channel.pos != len(dec.channel.records):
        raise ContainerError("container holds parity the decoder never asked for")
    return CodecRun(container, decoded, dec.stats, dec.layout)


def as_sequence(luma, fps=15.0):
    luma = np.asarray(luma, dtype=np.uint8)
    if luma.ndim == 3:
        luma = luma[None]
    return MultiViewSequence(luma, fps)
