"""Bitstream container: header, configuration text and typed, length-prefixed
records.  All integers are little-endian.

    magic "SPDV" | version u16 | config length u32 | config text (utf-8)
    views u8 | frames u16 | height u16 | width u16
    records: type u8 | length u32 | payload

Readers skip record types they do not know.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SPDV"
VERSION = 1

INTRA_PAYLOAD = 1
WZ_HEADER = 2
PARITY_BATCH = 3
ACTIVITY_MAP = 4
FEEDBACK_MAP = 5
RECORD_NAMES = {INTRA_PAYLOAD: "intra_payload", WZ_HEADER: "wz_header", PARITY_BATCH: "parity_batch",
                ACTIVITY_MAP: "activity_map", FEEDBACK_MAP: "feedback_map"}

_HEAD = struct.Struct("<4sHI")
_SEQ = struct.Struct("<BHHH")
_REC = struct.Struct("<BI")
RECORD_OVERHEAD = _REC.size

# payload prefixes
INTRA_FRAME, INTRA_KEY = 0, 1
_INTRA = struct.Struct("<BBH")  # view, kind, index
_WZH = struct.Struct("<BH")  # view, unit
_PAR = struct.Struct("<BHBHBHI")  # view, unit, group, feedback unit, plane, batch, bit count
_MAP = struct.Struct("<BHHH")  # view, frame / unit, rows, cols


class ContainerError(ValueError):
    pass


@dataclass(frozen=True)
class ParityKey:
    view: int
    unit: int
    group: int
    fb_unit: int
    plane: int
    batch: int


@dataclass
class Container:
    config_text: str
    num_views: int
    num_frames: int
    height: int
    width: int
    records: list = field(default_factory=list)  # [(type, payload bytes)]

    def add(self, rtype, payload):
        self.records.append((int(rtype), bytes(payload)))

    def of_type(self, rtype):
        return [p for t, p in self.records if t == rtype]

    def to_bytes(self):
        cfg = self.config_text.encode("utf-8")
        out = [_HEAD.pack(MAGIC, VERSION, len(cfg)), cfg,
               _SEQ.pack(self.num_views, self.num_frames, self.height, self.width)]
        for t, p in self.records:
            out.append(_REC.pack(t, len(p)))
            out.append(p)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < _HEAD.size:
            raise ContainerError("file too short for container header")
        magic, version, clen = _HEAD.unpack_from(data)
        if magic != MAGIC:
            raise ContainerError(f"bad magic {magic!r}")
        if version != VERSION:
            raise ContainerError(f"unsupported container version {version}")
        pos = _HEAD.size
        if pos + clen + _SEQ.size > len(data):
            raise ContainerError("truncated configuration block")
        text = data[pos:pos + clen].decode("utf-8")
        pos += clen
        views, frames, h, w = _SEQ.unpack_from(data, pos)
        pos += _SEQ.size
        c = cls(text, views, frames, h, w)
        while pos < len(data):
            if pos + _REC.size > len(data):
                raise ContainerError(f"truncated record header at byte {pos}")
            t, n = _REC.unpack_from(data, pos)
            pos += _REC.size
            if pos + n > len(data):
                raise ContainerError(f"truncated record payload at byte {pos}")
            if t in RECORD_NAMES:
                c.records.append((t, data[pos:pos + n]))
            pos += n
        return c

    def write(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# ---------------------------------------------------------------------------
# payload codecs


def intra_payload(view, kind, index, stream_bytes):
    return _INTRA.pack(view, kind, index) + stream_bytes


def parse_intra(payload):
    view, kind, index = _INTRA.unpack_from(payload)
    return view, kind, index, payload[_INTRA.size:]


def wz_header_payload(view, unit, ranges):
    ranges = np.asarray(ranges, dtype="<u2")
    return _WZH.pack(view, unit) + ranges.tobytes()


def parse_wz_header(payload):
    view, unit = _WZH.unpack_from(payload)
    ranges = np.frombuffer(payload[_WZH.size:], dtype="<u2").astype(np.int64)
    return view, unit, ranges


def parity_payload(key, bits):
    bits = np.asarray(bits, dtype=np.uint8)
    return _PAR.pack(key.view, key.unit, key.group, key.fb_unit, key.plane, key.batch,
                     bits.size) + np.packbits(bits).tobytes()


def parse_parity(payload):
    v, u, g, f, p, b, n = _PAR.unpack_from(payload)
    bits = np.unpackbits(np.frombuffer(payload[_PAR.size:], dtype=np.uint8))[:n]
    if bits.size != n:
        raise ContainerError("parity record shorter than its bit count")
    return ParityKey(v, u, g, f, p, b), bits


def map_payload(view, index, values, packed=True):
    values = np.asarray(values)
    rows, cols = values.shape
    head = _MAP.pack(view, index, rows, cols)
    if packed:
        return head + np.packbits(values.astype(np.uint8).ravel()).tobytes()
    return head + values.astype(np.uint8).ravel().tobytes()


def parse_map(payload, packed=True):
    view, index, rows, cols = _MAP.unpack_from(payload)
    body = np.frombuffer(payload[_MAP.size:], dtype=np.uint8)
    n = rows * cols
    vals = np.unpackbits(body)[:n] if packed else body[:n]
    if vals.size != n:
        raise ContainerError("map record shorter than its size")
    return view, index, vals.reshape(rows, cols).astype(np.int64)
