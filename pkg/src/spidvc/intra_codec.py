"""Built-in intra codec for I frames and KEY groups.

4x4 integer core transform (rows orthogonal, normalised per row), uniform
quantization, DC prediction from the left/top blocks and Exp-Golomb coded
(run, level) pairs along the zigzag scan.  The coefficient step is chosen so
the reconstruction error of every pixel stays within half the qp step size.
No deblocking is applied.
"""

import struct
from dataclasses import dataclass

import numpy as np

CORE = np.array([[1, 1, 1, 1],
                 [2, 1, -1, -2],
                 [1, -1, -1, 1],
                 [1, -2, 2, -1]], dtype=np.int64)
ROW_NORM = np.sqrt((CORE ** 2).sum(axis=1).astype(np.float64))
ORTHO = CORE / ROW_NORM[:, None]
NORM2D = np.outer(ROW_NORM, ROW_NORM)
# worst-case gain from coefficient error to pixel error
ERROR_GAIN = float(np.abs(ORTHO).sum(axis=0).max() ** 2)

ZIGZAG = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2),
          (2, 1), (3, 0), (3, 1), (2, 2), (1, 3), (2, 3), (3, 2), (3, 3)]
_ZZ_R = np.array([p[0] for p in ZIGZAG])
_ZZ_C = np.array([p[1] for p in ZIGZAG])

_HEADER = struct.Struct("<HHB")


class IntraDecodeError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


def qp_step(qp):
    """Pixel-domain quantizer step for a qp label (16 at qp 28, 64 at qp 40)."""
    return 2.0 ** ((qp - 4) / 6.0)


def coefficient_step(qp):
    return qp_step(qp) / ERROR_GAIN


@dataclass(frozen=True)
class IntraBitstream:
    qp: int
    width: int
    height: int
    payload: bytes

    def to_bytes(self):
        return _HEADER.pack(self.width, self.height, self.qp) + self.payload

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size:
            raise IntraDecodeError("truncated intra header", len(data))
        w, h, qp = _HEADER.unpack_from(data)
        return cls(qp, w, h, bytes(data[_HEADER.size:]))

    @property
    def num_bits(self):
        return 8 * (len(self.payload) + _HEADER.size)


class BitWriter:
    def __init__(self):
        self._chunks = []

    def ue(self, v):
        v += 1
        n = v.bit_length()
        self._chunks.append("0" * (n - 1) + format(v, "b"))

    def se(self, v):
        self.ue(2 * v - 1 if v > 0 else -2 * v)

    def getvalue(self):
        bits = "".join(self._chunks)
        if not bits:
            return b""
        pad = (-len(bits)) % 8
        bits += "1" + "0" * (pad - 1) if pad else ""
        return int(bits, 2).to_bytes(len(bits) // 8, "big")


class BitReader:
    def __init__(self, data):
        self.bits = "".join(format(b, "08b") for b in data)
        self.pos = 0

    def ue(self):
        start = self.pos
        z = self.bits.find("1", start)
        if z < 0:
            raise IntraDecodeError("ran out of data in Exp-Golomb prefix", start // 8)
        n = z - start
        end = z + n + 1
        if end > len(self.bits):
            raise IntraDecodeError("truncated Exp-Golomb code", start // 8)
        self.pos = end
        return int(self.bits[z:end], 2) - 1

    def se(self):
        k = self.ue()
        return (k + 1) // 2 if k % 2 else -(k // 2)


def _to_blocks(frame):
    h, w = frame.shape
    return frame.reshape(h // 4, 4, w // 4, 4).swapaxes(1, 2)


def _from_blocks(blocks):
    bh, bw = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(bh * 4, bw * 4)


def forward_levels(frame, qp):
    x = _to_blocks(np.asarray(frame, dtype=np.int64))
    w = np.einsum("ik,abkl,jl->abij", CORE, x, CORE)  # exact integers
    return np.rint(w / NORM2D / coefficient_step(qp)).astype(np.int64)


def inverse_levels(levels, qp):
    c = levels.astype(np.float64) * coefficient_step(qp)
    x = np.einsum("ki,abkl,lj->abij", ORTHO, c, ORTHO)
    return np.clip(np.rint(_from_blocks(x)), 0, 255).astype(np.uint8)


def _flat_dc(qp):
    return int(np.rint(4 * 128 / coefficient_step(qp)))


def _dc_prediction(dc, a, b, flat):
    left = dc[a, b - 1] if b > 0 else flat
    top = dc[a - 1, b] if a > 0 else flat
    return (left + top + 1) // 2


def intra_encode(frame, qp):
    frame = np.asarray(frame)
    h, w = frame.shape
    if h % 4 or w % 4:
        raise ValueError("intra coding needs dimensions divisible by 4")
    levels = forward_levels(frame, qp)
    flat = _flat_dc(qp)
    dc = levels[:, :, 0, 0]
    out = BitWriter()
    for a in range(levels.shape[0]):
        for b in range(levels.shape[1]):
            out.se(int(dc[a, b] - _dc_prediction(dc, a, b, flat)))
            ac = levels[a, b][_ZZ_R, _ZZ_C][1:]
            nz = np.flatnonzero(ac)
            out.ue(len(nz))
            prev = -1
            for k in nz:
                out.ue(int(k - prev - 1))
                out.se(int(ac[k]))
                prev = k
    return IntraBitstream(int(qp), w, h, out.getvalue())


def intra_decode(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = IntraBitstream.from_bytes(stream)
    h, w = stream.height, stream.width
    if h % 4 or w % 4 or h == 0 or w == 0:
        raise IntraDecodeError(f"bad dimensions {w}x{h}", 0)
    rd = BitReader(stream.payload)
    bh, bw = h // 4, w // 4
    levels = np.zeros((bh, bw, 4, 4), dtype=np.int64)
    dc = levels[:, :, 0, 0]
    flat = _flat_dc(stream.qp)
    base = _HEADER.size
    try:
        for a in range(bh):
            for b in range(bw):
                dc[a, b] = rd.se() + _dc_prediction(dc, a, b, flat)
                count = rd.ue()
                if count > 15:
                    raise IntraDecodeError("coefficient count out of range", rd.pos // 8)
                k = 0
                for _ in range(count):
                    k += rd.ue()
                    if k >= 15:
                        raise IntraDecodeError("run past end of block", rd.pos // 8)
                    r, c = ZIGZAG[k + 1]
                    levels[a, b, r, c] = rd.se()
                    k += 1
    except IntraDecodeError as exc:
        raise IntraDecodeError(str(exc).rsplit(" at byte", 1)[0], base + exc.offset) from None
    return inverse_levels(levels, stream.qp)
