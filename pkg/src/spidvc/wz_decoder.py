"""WZ decoding: Laplacian correlation-noise model, multi-hypothesis bit LLRs,
the bitplane request loop and reconstruction from the side information.
"""

from dataclasses import dataclass, field

import numpy as np

from .si_engine import SEC, TEC, neighbours
from .turbo import estimate_ber
from .wz_pipeline import assemble_bitplanes, cached_code, gray_decode, gray_encode, td_transform

FALLBACK_SIGMA = 16.0  # no residual evidence at all: assume poor side information
MOTION_RESIDUAL = "motion_residual"
SPATIAL_VARIANCE = "spatial_variance"
SIGMA_FLOOR = 0.5
SEC_ALPHA_CAP = 0.5
_LOG_HALF = np.log(0.5)
_LLR_LIMIT = 1e6  # keeps +inf/-inf hypotheses from producing nan in the mean


# ---------------------------------------------------------------------------
# noise model


def alpha_from_sigma(sigma, source=MOTION_RESIDUAL, floor=SIGMA_FLOOR, cap=SEC_ALPHA_CAP):
    """Laplacian parameter sqrt(2)/sigma with the floor (motion path) or cap (spatial path)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if source == MOTION_RESIDUAL:
        return np.sqrt(2.0) / np.maximum(sigma, floor)
    if source == SPATIAL_VARIANCE:
        with np.errstate(divide="ignore"):
            a = np.sqrt(2.0) / sigma
        return np.minimum(a, cap)
    raise ValueError(f"unknown noise source {source!r}")


def estimate_alpha(samples, source=MOTION_RESIDUAL, floor=SIGMA_FLOOR, cap=SEC_ALPHA_CAP, axis=None):
    """Alpha from compensation residuals (motion path) or from neighbour pixels (spatial path)."""
    sigma = np.std(np.asarray(samples, dtype=np.float64), axis=axis)
    return alpha_from_sigma(sigma, source, floor, cap)


@dataclass
class NoiseModel:
    """Per WZ block Laplacian parameters; values are scalars (pixel domain)
    or 16-vectors indexed by band (transform domain)."""

    alpha: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)


def _band_samples(blocks):
    """(k, n, n) pixel blocks -> (m, 16) coefficients of their 4x4 sub-blocks."""
    b = np.asarray(blocks, dtype=np.float64)
    k, n, _ = b.shape
    sub = b.reshape(k, n // 4, 4, n // 4, 4).swapaxes(2, 3).reshape(-1, 4, 4)
    return td_transform(sub).reshape(-1, 16)


def noise_model(side, hypothesis, cur, known, blocks, n, transform=False):
    """Laplacian parameters of one SI hypothesis over the given WZ blocks.

    ``hypothesis`` is "fused" (each block follows its concealment mode) or a
    single method (TEC / VEC).  Motion/disparity blocks use the compensation
    residuals of the four neighbouring KEY blocks; SEC blocks use the
    variance of the neighbouring KEY pixels.
    """
    gh, gw = cur.shape[0] // n, cur.shape[1] // n
    model = NoiseModel()
    for (i, j) in blocks:
        method = side.fused.block_method.get((i, j), TEC) if hypothesis == "fused" else hypothesis
        nbs = [(a, b) for a, b in neighbours(i, j, gh, gw).values()
               if known[a * n:(a + 1) * n, b * n:(b + 1) * n].all()]
        if method == SEC:
            src = SPATIAL_VARIANCE
            data = [cur[a * n:(a + 1) * n, b * n:(b + 1) * n] for a, b in nbs]
        else:
            src = MOTION_RESIDUAL
            res = side.key_residuals.get(method, {})
            data = [res[nb] for nb in nbs if nb in res] or list(res.values())
        if not data:
            sigma = np.full(16, FALLBACK_SIGMA) if transform else FALLBACK_SIGMA
            alpha = alpha_from_sigma(sigma, src)
        elif transform:
            alpha = estimate_alpha(_band_samples(data), src, axis=0)
        else:
            alpha = estimate_alpha(np.stack(data), src)
        model.alpha[(i, j)] = alpha
        model.source[(i, j)] = src
    return model


# ---------------------------------------------------------------------------
# bit probabilities


def laplace_log_mass(a, b, center, alpha):
    """log of the Laplacian(center, alpha) probability of [a, b], closed form."""
    a, b, center, alpha = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64)
                                                for x in (a, b, center, alpha)))
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        u = (a - center) * alpha
        v = (b - center) * alpha
        left = _LOG_HALF + v + np.log1p(-np.exp(u - v))
        right = _LOG_HALF - u + np.log1p(-np.exp(u - v))
        mid = np.log(1.0 - 0.5 * np.exp(np.minimum(u, 0.0)) - 0.5 * np.exp(-np.maximum(v, 0.0)))
    out = np.where(v <= 0, left, np.where(u >= 0, right, mid))
    out = np.where(b <= a, -np.inf, out)
    return np.nan_to_num(out, nan=-np.inf, posinf=0.0)


def laplace_mass(a, b, center, alpha):
    return np.exp(laplace_log_mass(a, b, center, alpha))


def bin_edge(grid, q):
    """Likelihood edge below bin q (q == levels gives the top edge)."""
    q = np.asarray(q)
    e = grid.lo + q * grid.step + grid.lattice
    if grid.open_ends:
        e = np.where(q <= 0, -np.inf, np.where(q >= grid.levels, np.inf, e))
    else:
        e = np.clip(e, grid.support[0], grid.support[1])
    return e.astype(np.float64)


def admissible_range(prefix, bit, plane, num_planes):
    """Symbol range [lo, hi) whose Gray code starts with the decoded prefix
    followed by ``bit`` at ``plane`` (1-based).  Gray prefixes map to
    contiguous symbol ranges, since gray(q) >> k == gray(q >> k)."""
    g = (np.asarray(prefix, dtype=np.int64) << 1) | bit
    head = gray_decode(g)
    k = num_planes - plane
    return head << k, (head + 1) << k


def bit_log_masses(si, alpha, prefix, plane, grid):
    """log P(bit = 0), log P(bit = 1) per hypothesis, unnormalized, shape (N, n)."""
    si = np.atleast_2d(np.asarray(si, dtype=np.float64))
    alpha = np.broadcast_to(np.atleast_2d(np.asarray(alpha, dtype=np.float64)), si.shape)
    out = []
    for bit in (0, 1):
        lo, hi = admissible_range(prefix, bit, plane, grid.num_planes)
        out.append(laplace_log_mass(bin_edge(grid, lo), bin_edge(grid, hi), si, alpha))
    return out[0], out[1]


def bit_probabilities(si, alpha, prefix, plane, grid):
    """Normalized P(bit = 0), P(bit = 1) per hypothesis (N, n)."""
    l0, l1 = bit_log_masses(si, alpha, prefix, plane, grid)
    top = np.maximum(l0, l1)
    safe = np.where(np.isfinite(top), top, 0.0)
    e0, e1 = np.exp(l0 - safe), np.exp(l1 - safe)
    tot = e0 + e1
    with np.errstate(invalid="ignore"):
        p0 = np.where(tot > 0, e0 / tot, 0.5)
    return p0, 1.0 - p0


def hypothesis_llr(si, alpha, prefix, plane, grid):
    """Per-hypothesis log(P0 / P1), 0 where both masses underflow."""
    l0, l1 = bit_log_masses(si, alpha, prefix, plane, grid)
    both = np.isneginf(l0) & np.isneginf(l1)
    with np.errstate(invalid="ignore"):
        llr = np.where(both, 0.0, l0 - l1)
    return np.clip(llr, -_LLR_LIMIT, _LLR_LIMIT)


def combine_llr(llrs, clamp=25.0):
    """Average the hypotheses' LLRs, then clamp."""
    return np.clip(np.mean(np.atleast_2d(llrs), axis=0), -clamp, clamp)


def bit_llr(si, alpha, prefix, plane, grid, clamp=25.0):
    return combine_llr(hypothesis_llr(si, alpha, prefix, plane, grid), clamp)


# ---------------------------------------------------------------------------
# request loop


@dataclass
class UnitPlaneStats:
    unit: int
    plane: int
    batches: int
    parity_bits: int
    converged: bool
    ber: float


@dataclass
class WzDecodeResult:
    symbols: np.ndarray
    stats: list
    residual_flag: bool = False

    @property
    def parity_bits(self):
        return sum(s.parity_bits for s in self.stats)

    @property
    def requests(self):
        return sum(s.batches for s in self.stats)

    def unit_requests(self, num_units):
        out = np.zeros(num_units, dtype=np.int64)
        for s in self.stats:
            out[s.unit] += s.batches
        return out


@dataclass
class DecodeSettings:
    seed: int = 1
    period: int = 32
    max_iters: int = 18
    ber_threshold: float = 1e-3
    llr_clamp: float = 25.0

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.seed, cfg.puncture_period, cfg.max_turbo_iters, cfg.ber_threshold,
                   cfg.llr_clamp)


def decode_bitplane(sys_llr, fetch, settings):
    """Request parity batches one by one until the turbo decoder converges.

    ``fetch(k)`` returns the bit values of batch k.  Returns (bits, stats
    tuple (batches, parity bits, converged, ber)).
    """
    n = len(sys_llr)
    code = cached_code(n, settings.seed, settings.period)
    received = {}
    warm = None
    res = None
    bits_spent = 0
    for k in range(code.num_batches):
        vals = np.asarray(fetch(k), dtype=np.uint8)
        received[k] = vals
        bits_spent += len(vals)
        soft = code.soft_input(sys_llr, received)
        final = k == code.num_batches - 1
        # a stale warm start can lock onto a wrong codeword; the last attempt starts cold
        res = code.decode(soft, settings.max_iters, settings.ber_threshold,
                          warm=None if final else warm, final=final)
        warm = res.extrinsic
        if res.converged:
            break
    return res.bits.astype(np.uint8), (len(received), bits_spent, bool(res.converged),
                                       float(res.ber_estimate))


def decode_wz_unit(si, alpha, grid, request, settings, units=None, selective=False):
    """Decode the quantized symbols of one WZ coding group.

    si, alpha : (N, n) hypotheses and their Laplacian parameters
    request   : request(unit, plane, batch) -> parity batch bits
    units     : index arrays splitting the samples into separately coded
                turbo blocks, in request order (default: a single block)
    selective : stop requesting once the frame-level estimated BER meets the
                threshold, leaving later units to the side information alone
    """
    si = np.atleast_2d(np.asarray(si, dtype=np.float64))
    n = si.shape[1]
    num_planes = grid.num_planes
    if units is None:
        units = [np.arange(n)]
    units = [np.asarray(u, dtype=np.int64) for u in units]
    prefix = np.zeros(n, dtype=np.int64)
    planes = np.zeros((num_planes, n), dtype=np.uint8)
    stats = []
    flag = False
    for plane in range(1, num_planes + 1):
        llr = bit_llr(si, alpha, prefix, plane, grid, settings.llr_clamp)
        bits = (llr < 0).astype(np.uint8)
        unit_ber = [estimate_ber(llr[u]) for u in units]
        for ui, idx in enumerate(units):
            if len(idx) == 0:
                continue
            if selective and frame_ber_met(units, unit_ber, n, settings.ber_threshold, ui):
                break
            b, (nb, spent, ok, ber) = decode_bitplane(
                llr[idx], lambda k, ui=ui, p=plane: request(ui, p, k), settings)
            bits[idx] = b
            unit_ber[ui] = 0.0 if ok else ber
            flag |= not ok
            stats.append(UnitPlaneStats(ui, plane, nb, spent, ok, ber))
        planes[plane - 1] = bits
        prefix = (prefix << 1) | bits
    symbols = gray_decode(assemble_bitplanes(planes)) if n else np.zeros(0, dtype=np.int64)
    return WzDecodeResult(symbols, stats, flag)


def frame_ber_met(units, unit_ber, n, threshold, position):
    """Frame-level stop test used by selective feedback (never before the first unit)."""
    if position == 0 or n == 0:
        return False
    total = sum(len(u) * b for u, b in zip(units, unit_ber))
    return total / n <= threshold


# ---------------------------------------------------------------------------
# reconstruction


def _integer_valued(grid):
    return grid.lattice != 0


def reconstruct(symbols, si_list, grid, mode="paper"):
    """Clip the best SI into the decoded bin, then let later hypotheses
    replace pixels that are still clipped when they fall inside the bin."""
    q = np.asarray(symbols, dtype=np.int64)
    si_list = np.atleast_2d(np.asarray(si_list, dtype=np.float64))
    lower = np.asarray(grid.lower(q), dtype=np.float64)
    upper = np.asarray(grid.upper(q), dtype=np.float64)
    q_si = grid.quantize(si_list[0])
    if mode == "paper":
        below, above = upper, lower
    elif mode == "nearest":
        below = lower
        above = upper - 1 if _integer_valued(grid) else upper
    else:
        raise ValueError(f"unknown reconstruction mode {mode!r}")
    y = np.where(q_si < q, below, np.where(q_si > q, above, si_list[0]))
    clipped = q_si != q
    for p in range(1, si_list.shape[0]):
        hit = clipped & (grid.quantize(si_list[p]) == q)
        y = np.where(hit, si_list[p], y)
        clipped &= ~hit
    return y


def build_clipping_maps(symbols, si_symbols, num_planes):
    """(num_planes, n) flags: 1 where the SI's Gray prefix disagrees with the decoded one."""
    g = gray_encode(symbols)
    gs = gray_encode(si_symbols)
    return np.stack([((g >> (num_planes - l)) != (gs >> (num_planes - l)))
                     for l in range(1, num_planes + 1)]).astype(np.uint8)
