"""Side information by block concealment of the WZ blocks.

Temporal (TEC) and view (VEC) concealment share one machinery: motion or
disparity vectors are first estimated for every decoded KEY block, then each
missing WZ block picks, among its neighbours' vectors, their median and the
zero vector, the one with the smallest external boundary matching error
(EBME), and is finally smoothed by overlapped block motion compensation.
Spatial concealment (SEC) interpolates from the surrounding KEY pixels.

Vectors are (x, y) in quarter-pel units; a vector v maps the block at
(x0, y0) in the current frame onto (x0 + vx/4, y0 + vy/4) in the reference.
"""

from dataclasses import dataclass, field

import numba
import numpy as np

TEC, VEC, SEC = "TEC", "VEC", "SEC"
SIDES = ("top", "left", "right", "bottom")
_SIDE_OFFSETS = {"top": (-1, 0), "left": (0, -1), "right": (0, 1), "bottom": (1, 0)}

_HALF = [(dx, dy) for dy in (-2, 0, 2) for dx in (-2, 0, 2) if (dx, dy) != (0, 0)]
_QUARTER = [(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dx, dy) != (0, 0)]


# ---------------------------------------------------------------------------
# sampling


def sample(ref, ys, xs):
    """Bilinear samples of ``ref`` at float coordinates, clamped to the frame."""
    h, w = ref.shape
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0, h - 1)
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    top = ref[y0, x0] * (1 - fx) + ref[y0, x1] * fx
    bot = ref[y1, x0] * (1 - fx) + ref[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def mc_block(ref, y0, x0, n, vec):
    ys = y0 + np.arange(n)[:, None] + vec[1] / 4.0
    xs = x0 + np.arange(n)[None, :] + vec[0] / 4.0
    return sample(ref, np.broadcast_to(ys, (n, n)), np.broadcast_to(xs, (n, n)))


def ring_positions(y0, x0, n, m, known):
    """External boundary of width m (no corners), restricted to known pixels."""
    h, w = known.shape
    ys, xs = [], []
    cols = np.arange(x0, x0 + n)
    rows = np.arange(y0, y0 + n)
    for i in range(1, m + 1):
        for y in (y0 - i, y0 + n - 1 + i):
            ys.append(np.full(n, y))
            xs.append(cols)
        for x in (x0 - i, x0 + n - 1 + i):
            ys.append(rows)
            xs.append(np.full(n, x))
    ys = np.concatenate(ys)
    xs = np.concatenate(xs)
    inside = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    ys, xs = ys[inside], xs[inside]
    ok = known[ys, xs]
    return ys[ok], xs[ok]


def ebme(cur, ref, ring, vec):
    """Sum of absolute differences between the boundary ring in the current
    frame and the same ring displaced by ``vec`` in the reference."""
    ys, xs = ring
    if len(ys) == 0:
        return 0.0
    pred = sample(ref, ys + vec[1] / 4.0, xs + vec[0] / 4.0)
    return float(np.abs(cur[ys, xs] - pred).sum())


# ---------------------------------------------------------------------------
# motion / disparity estimation for KEY blocks


@numba.njit(cache=True)
def _block_search(cur, ref, y0, x0, n, ry, rx):
    h, w = ref.shape
    best = np.inf
    bdy = 0
    bdx = 0
    bnorm = 1 << 30
    for dy in range(-ry, ry + 1):
        yy = y0 + dy
        if yy < 0 or yy + n > h:
            continue
        for dx in range(-rx, rx + 1):
            xx = x0 + dx
            if xx < 0 or xx + n > w:
                continue
            s = 0.0
            for i in range(n):
                for j in range(n):
                    s += abs(cur[y0 + i, x0 + j] - ref[yy + i, xx + j])
                if s > best:
                    break
            norm = abs(dy) + abs(dx)
            if s < best or (s == best and norm < bnorm):
                best = s
                bdy = dy
                bdx = dx
                bnorm = norm
    return bdy, bdx, best


def _block_sad(cur_blk, ref, y0, x0, n, vec):
    return float(np.abs(cur_blk - mc_block(ref, y0, x0, n, vec)).sum())


def search_block(cur, ref, y0, x0, n, ry, rx, subpel=True):
    """Best whole-block SAD vector (quarter-pel) for one block."""
    dy, dx, best = _block_search(cur, ref, y0, x0, n, ry, rx)
    vec = (4 * dx, 4 * dy)
    if not subpel or best == 0:
        return vec, float(best)
    blk = cur[y0:y0 + n, x0:x0 + n]
    for steps in (_HALF, _QUARTER):
        centre = vec
        for ox, oy in steps:
            cand = (centre[0] + ox, centre[1] + oy)
            s = _block_sad(blk, ref, y0, x0, n, cand)
            if s < best:
                best, vec = s, cand
    return vec, float(best)


@dataclass
class MotionField:
    """Per-block vectors toward one reference frame (KEY blocks only)."""

    vectors: np.ndarray  # (gh, gw, 2) int, (x, y) quarter-pel
    sad: np.ndarray  # (gh, gw) whole-block SAD, inf where not estimated
    valid: np.ndarray  # (gh, gw) bool
    ref_id: int = 0

    def get(self, i, j):
        return (int(self.vectors[i, j, 0]), int(self.vectors[i, j, 1]))


def bidir_me_key(cur, key_blocks, refs, distances, block_size, base_range=16, subpel=True):
    """Motion fields of the KEY blocks toward every temporal reference.

    The integer search range grows linearly with the temporal distance.
    """
    return [estimate_field(cur, key_blocks, ref, block_size, base_range * d, base_range * d,
                           subpel, ref_id=k)
            for k, (ref, d) in enumerate(zip(refs, distances))]


def estimate_field(cur, blocks, ref, block_size, ry, rx, subpel=True, ref_id=0):
    cur = np.asarray(cur, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    gh, gw = cur.shape[0] // block_size, cur.shape[1] // block_size
    vecs = np.zeros((gh, gw, 2), dtype=np.int64)
    sad = np.full((gh, gw), np.inf)
    valid = np.zeros((gh, gw), dtype=bool)
    for (i, j) in blocks:
        v, s = search_block(cur, ref, i * block_size, j * block_size, block_size, ry, rx, subpel)
        vecs[i, j] = v
        sad[i, j] = s
        valid[i, j] = True
    return MotionField(vecs, sad, valid, ref_id)


# ---------------------------------------------------------------------------
# block concealment (TEC / VEC)


def obmc_weights(n):
    """Raised-cosine weights of the four neighbour compensations, (n, n) each."""
    s = np.minimum(1.0, 2 * (np.arange(n) + 0.5) / n)
    edge = 0.125 * (1 + np.cos(np.pi * s))
    col = edge[:, None] * np.ones((1, n))
    row = np.ones((n, 1)) * edge[None, :]
    return {"top": col, "bottom": col[::-1].copy(), "left": row, "right": row[:, ::-1].copy()}


def neighbours(i, j, gh, gw):
    out = {}
    for side, (di, dj) in _SIDE_OFFSETS.items():
        a, b = i + di, j + dj
        if 0 <= a < gh and 0 <= b < gw:
            out[side] = (a, b)
    return out


def median_vector(vectors):
    v = np.asarray(vectors, dtype=np.float64).reshape(-1, 2)
    med = np.median(v, axis=0)
    return (int(np.floor(med[0] + 0.5)), int(np.floor(med[1] + 0.5)))


@dataclass
class Concealment:
    prediction: np.ndarray
    error: float
    ref_index: int
    vector: tuple


def candidate_vectors(i, j, fields):
    """(ref index, vector) candidates for a WZ block, in tie-break order."""
    out = []
    for r, fld in enumerate(fields):
        gh, gw = fld.valid.shape
        nb = [fld.get(a, b) for a, b in neighbours(i, j, gh, gw).values() if fld.valid[a, b]]
        cands = list(nb)
        if nb:
            cands.append(median_vector(nb))
        cands.append((0, 0))
        seen = set()
        for v in cands:
            if v not in seen:
                seen.add(v)
                out.append((r, v))
    return out


def obmc_blend(refs, fields, i, j, n, ref_index, vector, weights):
    r = refs[ref_index]
    y0, x0 = i * n, j * n
    main = mc_block(r, y0, x0, n, vector)
    fld = fields[ref_index]
    gh, gw = fld.valid.shape
    # blend as corrections to the main prediction so agreeing neighbours leave it bit-exact
    acc = np.zeros((n, n))
    for side, (a, b) in neighbours(i, j, gh, gw).items():
        if not fld.valid[a, b]:
            continue
        v = fld.get(a, b)
        if v != tuple(vector):
            acc += weights[side] * (mc_block(r, y0, x0, n, v) - main)
    return main + acc


def conceal_block(cur, known, refs, fields, i, j, n, m=2, obmc=True, extra=None):
    """Conceal WZ block (i, j) from the references: returns the EBME winner."""
    ring = ring_positions(i * n, j * n, n, m, known)
    cands = candidate_vectors(i, j, fields)
    if extra:
        cands += [c for c in extra if c not in cands]
    best = None
    for r, v in cands:
        e = ebme(cur, refs[r], ring, v)
        if best is None or e < best[0]:
            best = (e, r, v)
    e, r, v = best
    if obmc:
        pred = obmc_blend(refs, fields, i, j, n, r, v, obmc_weights(n))
    else:
        pred = mc_block(refs[r], i * n, j * n, n, v)
    return Concealment(pred, e, r, v)


def tec_conceal(cur, known, refs, fields, i, j, n, m=2):
    return conceal_block(cur, known, refs, fields, i, j, n, m)


def vec_conceal(cur, known, view_refs, disparity_fields, i, j, n, m=2):
    """View concealment; ``None`` when no adjacent view is available."""
    if not view_refs:
        return None
    return conceal_block(cur, known, view_refs, disparity_fields, i, j, n, m)


# ---------------------------------------------------------------------------
# spatial concealment


def _sobel(frame, known):
    f = np.asarray(frame, dtype=np.float64)
    p = np.pad(f, 1, mode="edge")
    gx = (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    kp = np.pad(known, 1, mode="constant", constant_values=False)
    full = np.ones_like(known)
    for dy in range(3):
        for dx in range(3):
            full &= kp[dy:dy + known.shape[0], dx:dx + known.shape[1]]
    return gx, gy, full


def directional_entropy(gx, gy, bins=8, min_magnitude=1e-9):
    """Entropy (nats) of magnitude-weighted edge orientations; also returns the
    dominant edge angle in radians ([0, pi), image coordinates, y down)."""
    gx = np.asarray(gx, dtype=np.float64).ravel()
    gy = np.asarray(gy, dtype=np.float64).ravel()
    mag = np.hypot(gx, gy)
    keep = mag > min_magnitude
    if not np.any(keep):
        return None, None
    edge = (np.arctan2(gy[keep], gx[keep]) + np.pi / 2) % np.pi
    width = np.pi / bins
    idx = np.floor(edge / width + 0.5).astype(np.int64) % bins
    hist = np.bincount(idx, weights=mag[keep], minlength=bins)
    p = hist / hist.sum()
    nz = p[p > 0]
    ent = float(-(nz * np.log(nz)).sum())
    return ent, float(np.argmax(hist) * width)


def _boundary_lines(cur, known, y0, x0, n):
    h, w = cur.shape
    lines = {}
    if y0 - 1 >= 0 and known[y0 - 1, x0:x0 + n].all():
        lines["top"] = cur[y0 - 1, x0:x0 + n]
    if y0 + n < h and known[y0 + n, x0:x0 + n].all():
        lines["bottom"] = cur[y0 + n, x0:x0 + n]
    if x0 - 1 >= 0 and known[y0:y0 + n, x0 - 1].all():
        lines["left"] = cur[y0:y0 + n, x0 - 1]
    if x0 + n < w and known[y0:y0 + n, x0 + n].all():
        lines["right"] = cur[y0:y0 + n, x0 + n]
    return lines


def bilinear_interp(lines, n):
    """Inverse-distance weighting of the boundary pixels on each pixel's row and column."""
    i = np.arange(n)[:, None] * np.ones((1, n))
    j = np.ones((n, 1)) * np.arange(n)[None, :]
    acc = np.zeros((n, n))
    wsum = np.zeros((n, n))
    if "top" in lines:
        w = 1.0 / (i + 1)
        acc += w * lines["top"][None, :]
        wsum += w
    if "bottom" in lines:
        w = 1.0 / (n - i)
        acc += w * lines["bottom"][None, :]
        wsum += w
    if "left" in lines:
        w = 1.0 / (j + 1)
        acc += w * lines["left"][:, None]
        wsum += w
    if "right" in lines:
        w = 1.0 / (n - j)
        acc += w * lines["right"][:, None]
        wsum += w
    if not np.any(wsum):
        return np.full((n, n), 128.0)
    return acc / wsum


def _line_sample(line, t):
    t = min(max(t, 0.0), len(line) - 1.0)
    a = int(np.floor(t))
    b = min(a + 1, len(line) - 1)
    f = t - a
    return line[a] * (1 - f) + line[b] * f


def directional_interp(lines, n, angle):
    """Interpolate each pixel along the edge direction between the two boundary
    points the line through it hits; falls back to BI where no side is hit."""
    d = (np.cos(angle), np.sin(angle))  # (dx, dy)
    out = bilinear_interp(lines, n)
    for i in range(n):
        for j in range(n):
            hits = []
            for sgn in (1.0, -1.0):
                dx, dy = sgn * d[0], sgn * d[1]
                best = None
                # local coords: boundary rows at -1 and n, columns at -1 and n
                if dy < -1e-12:
                    best = _first_hit(best, (-1 - i) / dy, "top", j + dx * (-1 - i) / dy)
                if dy > 1e-12:
                    best = _first_hit(best, (n - i) / dy, "bottom", j + dx * (n - i) / dy)
                if dx < -1e-12:
                    best = _first_hit(best, (-1 - j) / dx, "left", i + dy * (-1 - j) / dx)
                if dx > 1e-12:
                    best = _first_hit(best, (n - j) / dx, "right", i + dy * (n - j) / dx)
                if best is not None and best[1] in lines:
                    hits.append((best[0], _line_sample(lines[best[1]], best[2])))
            if len(hits) == 2:
                (t1, v1), (t2, v2) = hits
                out[i, j] = (v1 * t2 + v2 * t1) / (t1 + t2)
            elif len(hits) == 1:
                out[i, j] = hits[0][1]
    return out


def _first_hit(best, t, side, pos):
    if t <= 0:
        return best
    if best is None or t < best[0]:
        return (t, side, pos)
    return best


@dataclass
class SecResult:
    prediction: np.ndarray
    interpolation: str  # "BI" or "DI"
    entropy: float | None


def sec_conceal(cur, known, i, j, n, entropy_threshold=1.0, band=4, grads=None):
    """Spatial concealment of WZ block (i, j) from the surrounding known pixels."""
    cur = np.asarray(cur, dtype=np.float64)
    y0, x0 = i * n, j * n
    lines = _boundary_lines(cur, known, y0, x0, n)
    gx, gy, ok = grads if grads is not None else _sobel(cur, known)
    h, w = cur.shape
    ys0, ys1 = max(0, y0 - band), min(h, y0 + n + band)
    xs0, xs1 = max(0, x0 - band), min(w, x0 + n + band)
    sel = ok[ys0:ys1, xs0:xs1].copy()
    # only the four side strips, not the corner blocks
    yy = np.arange(ys0, ys1)[:, None]
    xx = np.arange(xs0, xs1)[None, :]
    in_rows = (yy >= y0) & (yy < y0 + n)
    in_cols = (xx >= x0) & (xx < x0 + n)
    sel &= in_rows | in_cols
    ent, angle = directional_entropy(gx[ys0:ys1, xs0:xs1][sel], gy[ys0:ys1, xs0:xs1][sel])
    if ent is not None and ent < entropy_threshold:
        return SecResult(directional_interp(lines, n, angle), "DI", ent)
    return SecResult(bilinear_interp(lines, n), "BI", ent)


# ---------------------------------------------------------------------------
# mode selection and fusion


def activities(cur, known, neighbour_blocks, ref, vector, n):
    """(SA, MDA) over the neighbour KEY blocks of a WZ block."""
    xs, ps = [], []
    for (a, b) in neighbour_blocks:
        blk = cur[a * n:(a + 1) * n, b * n:(b + 1) * n]
        if not known[a * n:(a + 1) * n, b * n:(b + 1) * n].all():
            continue
        xs.append(blk.ravel())
        if ref is not None:
            ps.append(mc_block(ref, a * n, b * n, n, vector).ravel())
    if not xs:
        return 0.0, 0.0
    x = np.concatenate(xs)
    sa = float(np.mean((x - x.mean()) ** 2))
    mda = float(np.mean((x - np.concatenate(ps)) ** 2)) if ps else 0.0
    return sa, mda


def mode_select(sa, mda, threshold=3.0):
    """SEC when spatial activity is below the compensated activity and the
    latter exceeds the threshold; otherwise keep the TEC/VEC concealment."""
    return SEC if (sa < mda and mda > threshold) else "TEC/VEC"


def refinement_weight(e, n_boundary, th=5.0):
    """Trust in the initial SI: 1 - a e^2 / (1 + a e^2) with a = 1 / (n th)^2."""
    a = 1.0 / (n_boundary * th) ** 2
    x = a * float(e) ** 2
    return 1.0 - x / (1.0 + x)


def median_decision(tec_vec, tec_neigh, vec_vec, vec_neigh, threshold):
    """Vector-uniformity fusion for one block: returns TEC or VEC."""
    d_t = float(np.hypot(*(np.asarray(tec_vec) - np.median(
        np.asarray(list(tec_neigh) + [tec_vec], dtype=np.float64), axis=0))))
    if d_t <= threshold or vec_vec is None:
        return TEC
    d_v = float(np.hypot(*(np.asarray(vec_vec) - np.median(
        np.asarray(list(vec_neigh) + [vec_vec], dtype=np.float64), axis=0))))
    return VEC if d_v < d_t else TEC


@dataclass
class CandidateSI:
    """One side-information hypothesis over the WZ blocks of a frame."""

    method: str
    prediction: np.ndarray  # frame-sized, valid on the WZ blocks
    wz_error: dict  # (i, j) -> matching error
    block_size: int = 16
    key_mse: float = np.inf  # prediction MSE over the KEY group
    block_method: dict = field(default_factory=dict)  # (i, j) -> TEC / VEC / SEC
    vectors: dict = field(default_factory=dict)  # (i, j) -> (ref index, vector)

    def block(self, i, j, n):
        return self.prediction[i * n:(i + 1) * n, j * n:(j + 1) * n]


def fuse_sad(tec, vec, blocks=None):
    """Per block, keep the candidate with the smaller matching error (ties: TEC)."""
    if vec is None:
        return CandidateSI("fused", tec.prediction.copy(), dict(tec.wz_error), tec.block_size,
                           tec.key_mse, {b: TEC for b in tec.wz_error}, dict(tec.vectors))
    blocks = list(tec.wz_error) if blocks is None else blocks
    pred = tec.prediction.copy()
    err = {}
    meth = {}
    vecs = {}
    n = tec.block_size
    for (i, j) in blocks:
        if vec.wz_error[(i, j)] < tec.wz_error[(i, j)]:
            pred[i * n:(i + 1) * n, j * n:(j + 1) * n] = vec.block(i, j, n)
            err[(i, j)] = vec.wz_error[(i, j)]
            meth[(i, j)] = VEC
            vecs[(i, j)] = vec.vectors.get((i, j))
        else:
            err[(i, j)] = tec.wz_error[(i, j)]
            meth[(i, j)] = tec.block_method.get((i, j), TEC)
            vecs[(i, j)] = tec.vectors.get((i, j))
    return CandidateSI("fused", pred, err, n, min(tec.key_mse, vec.key_mse), meth, vecs)


def rank_si(fused, tec, vec):
    """[fused, then TEC/VEC by ascending KEY-group MSE (ties: TEC)]."""
    rest = [c for c in (tec, vec) if c is not None]
    rest.sort(key=lambda c: (c.key_mse, 0 if c.method == TEC else 1))
    return [fused] + rest


# ---------------------------------------------------------------------------
# SI refinement with the initial (VEC) side information


@numba.njit(cache=True)
def _ebmc_search(ring_y, ring_x, ring_v, ref, si_blk, y0, x0, n, weight, ry, rx):
    h, w = ref.shape
    best = np.inf
    bdy = 0
    bdx = 0
    bnorm = 1 << 30
    for dy in range(-ry, ry + 1):
        if y0 + dy < 0 or y0 + dy + n > h:
            continue
        for dx in range(-rx, rx + 1):
            if x0 + dx < 0 or x0 + dx + n > w:
                continue
            s = 0.0
            for k in range(ring_y.shape[0]):
                yy = min(max(ring_y[k] + dy, 0), h - 1)
                xx = min(max(ring_x[k] + dx, 0), w - 1)
                s += abs(ring_v[k] - ref[yy, xx])
            if s > best:
                continue
            t = 0.0
            for i in range(n):
                for j in range(n):
                    t += abs(si_blk[i, j] - ref[y0 + dy + i, x0 + dx + j])
            s += weight * t
            norm = abs(dy) + abs(dx)
            if s < best or (s == best and norm < bnorm):
                best = s
                bdy = dy
                bdx = dx
                bnorm = norm
    return bdy, bdx, best


def ebmc_cost(cur, ref, ring, si_blk, y0, x0, n, vec, weight):
    """Boundary matching error plus the weighted SI-to-reference block difference."""
    return ebme(cur, ref, ring, vec) + weight * float(
        np.abs(si_blk - mc_block(ref, y0, x0, n, vec)).sum())


def refine_block(cur, known, refs, fields, distances, si_blk, si_error, i, j, n, m=2,
                 base_range=16, th=5.0):
    """Temporal concealment of one WZ block steered by an initial SI block."""
    y0, x0 = i * n, j * n
    ring = ring_positions(y0, x0, n, m, known)
    weight = refinement_weight(si_error, max(len(ring[0]), 1), th)
    cands = []
    ry_v = cur[ring]
    for r, (ref, d) in enumerate(zip(refs, distances)):
        rng = base_range * d
        dy, dx, _ = _ebmc_search(ring[0], ring[1], ry_v, ref, si_blk, y0, x0, n, weight, rng, rng)
        cands.append((r, (4 * dx, 4 * dy)))
    cands += [c for c in candidate_vectors(i, j, fields) if c not in cands]
    best = None
    for r, v in cands:
        c = ebmc_cost(cur, refs[r], ring, si_blk, y0, x0, n, v, weight)
        if best is None or c < best[0]:
            best = (c, r, v)
    _, r, v = best
    pred = obmc_blend(refs, fields, i, j, n, r, v, obmc_weights(n))
    return Concealment(pred, ebme(cur, refs[r], ring, v), r, v)


def refine_ebmc(initial, cur, known, refs, fields, distances, blocks, n, m=2,
                base_range=16, th=5.0):
    pred = initial.prediction.copy()
    err, meth, vecs = {}, {}, {}
    for (i, j) in blocks:
        c = refine_block(cur, known, refs, fields, distances, initial.block(i, j, n),
                         initial.wz_error[(i, j)], i, j, n, m, base_range, th)
        pred[i * n:(i + 1) * n, j * n:(j + 1) * n] = c.prediction
        err[(i, j)] = c.error
        meth[(i, j)] = TEC
        vecs[(i, j)] = (c.ref_index, c.vector)
    return CandidateSI("refined", pred, err, n, np.inf, meth, vecs)


# ---------------------------------------------------------------------------
# frame level


@dataclass
class SideInfo:
    fused: CandidateSI
    tec: CandidateSI
    vec: CandidateSI | None
    ranked: list
    key_residuals: dict  # method -> {(a, b): residual block}
    activity: dict  # (i, j) -> (SA, MDA)
    sec_blocks: dict = field(default_factory=dict)  # (i, j) -> "BI" / "DI"
    fusion_prediction: np.ndarray | None = None  # fused SI before mode selection


def _key_compensation(cur, blocks, refs, fields, n):
    """Residuals and SADs of every known block against its best match."""
    res, sad = {}, {}
    for (a, b) in blocks:
        blk = cur[a * n:(a + 1) * n, b * n:(b + 1) * n]
        best = None
        for r, fld in enumerate(fields):
            if fld.valid[a, b] and (best is None or fld.sad[a, b] < best[0]):
                best = (fld.sad[a, b], r)
        if best is None:
            continue
        pred = mc_block(refs[best[1]], a * n, b * n, n, fields[best[1]].get(a, b))
        res[(a, b)] = blk - pred
        sad[(a, b)] = best[0]
    return res, sad


def _key_mse(residuals):
    if not residuals:
        return np.inf
    return float(np.mean(np.concatenate([r.ravel() for r in residuals.values()]) ** 2))


def _conceal_all(method, cur, known, refs, fields, blocks, n, m):
    pred = np.zeros_like(cur)
    err, meth, vecs = {}, {}, {}
    for (i, j) in blocks:
        c = conceal_block(cur, known, refs, fields, i, j, n, m)
        pred[i * n:(i + 1) * n, j * n:(j + 1) * n] = c.prediction
        err[(i, j)] = c.error
        meth[(i, j)] = method
        vecs[(i, j)] = (c.ref_index, c.vector)
    return CandidateSI(method, pred, err, n, np.inf, meth, vecs)


def _median_fusion(tec, vec, tec_fields, vec_fields, blocks, n, threshold):
    pred = tec.prediction.copy()
    err, meth, vecs = {}, {}, {}

    def neigh(cand, flds, i, j):
        r, _ = cand.vectors[(i, j)]
        fld = flds[r]
        gh, gw = fld.valid.shape
        out = [fld.get(a, b) for a, b in neighbours(i, j, gh, gw).values() if fld.valid[a, b]]
        for (a, b) in ((i, j - 2), (i - 2, j)):
            other = cand.vectors.get((a, b))
            if other is not None and other[0] == r:
                out.append(other[1])
        return out

    for (i, j) in blocks:
        choice = TEC
        if vec is not None:
            choice = median_decision(tec.vectors[(i, j)][1], neigh(tec, tec_fields, i, j),
                                     vec.vectors[(i, j)][1], neigh(vec, vec_fields, i, j),
                                     threshold)
        src = vec if choice == VEC else tec
        pred[i * n:(i + 1) * n, j * n:(j + 1) * n] = src.block(i, j, n)
        err[(i, j)] = src.wz_error[(i, j)]
        meth[(i, j)] = choice
        vecs[(i, j)] = src.vectors[(i, j)]
    key = min(tec.key_mse, vec.key_mse) if vec is not None else tec.key_mse
    return CandidateSI("fused", pred, err, n, key, meth, vecs)


def build_side_information(cur, known, wz_blocks, temporal_refs, view_refs, cfg):
    """Build TEC, VEC and fused side information for the WZ blocks of a frame.

    ``temporal_refs`` is a list of (decoded frame, temporal distance);
    ``view_refs`` a list of decoded co-located frames from adjacent views.
    ``cur`` holds every decoded pixel of the current frame (``known`` mask).
    """
    n = cfg.block_size
    m = cfg.boundary_width
    cur = np.asarray(cur, dtype=np.float64)
    known = np.asarray(known, dtype=bool)
    gh, gw = cur.shape[0] // n, cur.shape[1] // n
    known_blocks = [(a, b) for a in range(gh) for b in range(gw)
                    if known[a * n:(a + 1) * n, b * n:(b + 1) * n].all()]
    if not temporal_refs:
        raise ValueError("side information needs at least one temporal reference")
    t_refs = [np.asarray(r, dtype=np.float64) for r, _ in temporal_refs]
    t_dist = [max(1, int(d)) for _, d in temporal_refs]
    v_refs = [np.asarray(r, dtype=np.float64) for r in view_refs]

    t_fields = bidir_me_key(cur, known_blocks, t_refs, t_dist, n, cfg.search_range)
    t_res, _ = _key_compensation(cur, known_blocks, t_refs, t_fields, n)
    tec = _conceal_all(TEC, cur, known, t_refs, t_fields, wz_blocks, n, m)
    tec.key_mse = _key_mse(t_res)
    residuals = {TEC: t_res}

    vec = None
    v_fields = []
    if v_refs:
        v_fields = [estimate_field(cur, known_blocks, r, n, cfg.disparity_range_y,
                                   cfg.disparity_range_x, ref_id=k) for k, r in enumerate(v_refs)]
        v_res, _ = _key_compensation(cur, known_blocks, v_refs, v_fields, n)
        vec = _conceal_all(VEC, cur, known, v_refs, v_fields, wz_blocks, n, m)
        vec.key_mse = _key_mse(v_res)
        residuals[VEC] = v_res

    if vec is None or cfg.fusion == "sad":
        fused = fuse_sad(tec, vec, wz_blocks)
    elif cfg.fusion == "vector_median":
        fused = _median_fusion(tec, vec, t_fields, v_fields, wz_blocks, n, cfg.median_threshold)
    else:
        refined = refine_ebmc(vec, cur, known, t_refs, t_fields, t_dist, wz_blocks, n, m,
                              cfg.search_range, cfg.refine_th)
        refined.key_mse = tec.key_mse
        if cfg.fusion == "refine_si":
            fused = refined
            fused.method = "fused"
        else:
            fused = fuse_sad(refined, vec, wz_blocks)

    fusion_prediction = fused.prediction.copy()
    # spatial concealment where compensated activity is high relative to texture
    grads = _sobel(cur, known)
    activity, sec_kind = {}, {}
    for (i, j) in wz_blocks:
        choice = fused.block_method.get((i, j), TEC)
        r, v = fused.vectors.get((i, j), (0, (0, 0)))
        refs = v_refs if choice == VEC else t_refs
        ref = refs[r] if refs else None
        nb = list(neighbours(i, j, gh, gw).values())
        sa, mda = activities(cur, known, nb, ref, v, n)
        activity[(i, j)] = (sa, mda)
        if mode_select(sa, mda, cfg.mode_threshold) == SEC:
            s = sec_conceal(cur, known, i, j, n, cfg.sec_entropy_threshold, grads=grads)
            fused.prediction[i * n:(i + 1) * n, j * n:(j + 1) * n] = s.prediction
            fused.block_method[(i, j)] = SEC
            sec_kind[(i, j)] = s.interpolation

    ranked = rank_si(fused, tec, vec)
    return SideInfo(fused, tec, vec, ranked, residuals, activity, sec_kind, fusion_prediction)
