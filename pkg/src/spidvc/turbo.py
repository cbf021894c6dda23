"""Rate-compatible punctured turbo code.

Two identical recursive systematic convolutional encoders, feedback
1 + D^3 + D^4 and feedforward 1 + D + D^3 + D^4 (16 states), joined by a
seeded random interleaver.  Only parity is ever transmitted; it is released
in batches, one puncturing-period column at a time, alternating between the
two encoders.  Encoder 1 is terminated with 4 tail steps whose parity bits
travel with the first batch; encoder 2 is left open.

Decoding is iterative log-MAP BCJR with the systematic channel supplied by
the side information.  LLRs follow log P(0)/P(1) throughout.
"""

from dataclasses import dataclass, field

import numba
import numpy as np

MEMORY = 4
NUM_STATES = 16
TAIL = MEMORY
PARITY_LLR = 50.0  # reliability of a received parity bit (noiseless channel)
EXTRINSIC_CLIP = 60.0
STALL_WINDOW = 3


def _build_trellis():
    # state bits (r1 r2 r3 r4), r1 = most recent register value
    nxt = np.zeros((NUM_STATES, 2), dtype=np.int64)
    par = np.zeros((NUM_STATES, 2), dtype=np.int64)
    for s in range(NUM_STATES):
        r1, r2, r3, r4 = (s >> 3) & 1, (s >> 2) & 1, (s >> 1) & 1, s & 1
        for u in (0, 1):
            a = u ^ r3 ^ r4
            par[s, u] = a ^ r1 ^ r3 ^ r4
            nxt[s, u] = (a << 3) | (r1 << 2) | (r2 << 1) | r3
    # input that keeps the feedback register at zero (drives toward state 0)
    term = np.array([((s >> 1) & 1) ^ (s & 1) for s in range(NUM_STATES)], dtype=np.int64)
    return nxt, par, term


NEXT_STATE, PARITY_OUT, TERM_INPUT = _build_trellis()


@numba.njit(cache=True)
def _rsc_encode(bits, nxt, par, term, terminate):
    n = bits.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    s = 0
    for k in range(n):
        u = bits[k]
        out[k] = par[s, u]
        s = nxt[s, u]
    tail = np.zeros(4 if terminate else 0, dtype=np.uint8)
    if terminate:
        for k in range(4):
            u = term[s]
            tail[k] = par[s, u]
            s = nxt[s, u]
    return out, tail


def rsc_encode(bits, terminate=False):
    """Parity of one constituent encoder (and its tail parity when terminated)."""
    bits = np.ascontiguousarray(bits, dtype=np.int64)
    return _rsc_encode(bits, NEXT_STATE, PARITY_OUT, TERM_INPUT, terminate)


@numba.njit(cache=True, inline="always")
def _maxstar(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@numba.njit(cache=True)
def _bcjr(sys_llr, par_llr, apriori, tail_llr, terminated, nxt, par, term):
    """Log-MAP a-posteriori LLRs of the information bits."""
    n = sys_llr.shape[0]
    t_len = tail_llr.shape[0] if terminated else 0
    steps = n + t_len
    ninf = -np.inf
    alpha = np.full((steps + 1, 16), ninf)
    alpha[0, 0] = 0.0
    gam = np.zeros((steps, 16, 2))
    for k in range(steps):
        if k < n:
            lu = 0.5 * (sys_llr[k] + apriori[k])
            lp = 0.5 * par_llr[k]
        else:
            lu = 0.0
            lp = 0.5 * tail_llr[k - n]
        for s in range(16):
            for u in range(2):
                if k >= n and u != term[s]:
                    gam[k, s, u] = ninf
                else:
                    gam[k, s, u] = lu * (1 - 2 * u) + lp * (1 - 2 * par[s, u])
    for k in range(steps):
        for s in range(16):
            a = alpha[k, s]
            if a == ninf:
                continue
            for u in range(2):
                g = gam[k, s, u]
                if g == ninf:
                    continue
                t = nxt[s, u]
                alpha[k + 1, t] = _maxstar(alpha[k + 1, t], a + g)
        # normalise
        m = alpha[k + 1, 0]
        for s in range(1, 16):
            if alpha[k + 1, s] > m:
                m = alpha[k + 1, s]
        for s in range(16):
            alpha[k + 1, s] -= m
    beta = np.full(16, ninf)
    if terminated:
        beta[0] = 0.0
    else:
        for s in range(16):
            beta[s] = 0.0
    out = np.zeros(n)
    newb = np.empty(16)
    for k in range(steps - 1, -1, -1):
        if k < n:
            l0 = ninf
            l1 = ninf
            for s in range(16):
                a = alpha[k, s]
                if a == ninf:
                    continue
                for u in range(2):
                    v = a + gam[k, s, u] + beta[nxt[s, u]]
                    if u == 0:
                        l0 = _maxstar(l0, v)
                    else:
                        l1 = _maxstar(l1, v)
            if l0 == ninf and l1 == ninf:
                out[k] = 0.0
            elif l1 == ninf:
                out[k] = 1e3
            elif l0 == ninf:
                out[k] = -1e3
            else:
                out[k] = l0 - l1
        for s in range(16):
            v = ninf
            for u in range(2):
                g = gam[k, s, u]
                if g == ninf:
                    continue
                v = _maxstar(v, g + beta[nxt[s, u]])
            newb[s] = v
        m = newb[0]
        for s in range(1, 16):
            if newb[s] > m:
                m = newb[s]
        for s in range(16):
            beta[s] = newb[s] - m
    return out


def bcjr(sys_llr, par_llr, apriori, tail_llr=None, terminated=False):
    tail = np.zeros(TAIL) if tail_llr is None else np.asarray(tail_llr, dtype=np.float64)
    return _bcjr(np.ascontiguousarray(sys_llr, dtype=np.float64),
                 np.ascontiguousarray(par_llr, dtype=np.float64),
                 np.ascontiguousarray(apriori, dtype=np.float64),
                 tail, terminated, NEXT_STATE, PARITY_OUT, TERM_INPUT)


# ---------------------------------------------------------------------------


@dataclass
class ParityStream:
    parity1: np.ndarray
    parity2: np.ndarray
    tail: np.ndarray
    batches: list  # [(stream, positions)] in release order

    @property
    def num_batches(self):
        return len(self.batches)

    def batch_values(self, k):
        stream, pos = self.batches[k]
        src = self.parity1 if stream == 0 else self.parity2
        vals = src[pos]
        if k == 0:
            vals = np.concatenate([vals, self.tail])
        return vals.astype(np.uint8)

    def batch_size(self, k):
        return len(self.batches[k][1]) + (TAIL if k == 0 else 0)


class TurboCode:
    """Interleaver and puncturing schedule for one block length and seed."""

    def __init__(self, n, seed=1, period=32):
        if n < 1:
            raise ValueError("turbo block must hold at least one bit")
        self.n = n
        self.seed = seed
        self.period = period
        self.perm = np.random.default_rng([seed, n, 0]).permutation(n)
        self.inv = np.argsort(self.perm)
        cols1 = np.random.default_rng([seed, n, 1]).permutation(period)
        cols2 = np.random.default_rng([seed, n, 2]).permutation(period)
        idx = np.arange(n)
        self.batches = []
        for k in range(2 * period):
            stream = k % 2
            col = (cols1 if stream == 0 else cols2)[k // 2]
            pos = idx[idx % period == col]
            if len(pos):
                self.batches.append((stream, pos))

    @property
    def num_batches(self):
        return len(self.batches)

    def full_budget(self):
        return 2 * self.n + TAIL

    def encode(self, bits):
        bits = np.asarray(bits, dtype=np.int64)
        if bits.shape != (self.n,):
            raise ValueError(f"expected {self.n} bits, got {bits.shape}")
        p1, tail = rsc_encode(bits, terminate=True)
        p2, _ = rsc_encode(bits[self.perm], terminate=False)
        return ParityStream(p1, p2, tail, self.batches)

    def soft_input(self, sys_llr, received):
        """Build decoder input from the systematic LLRs and received batches.

        ``received`` maps batch index -> bit values as produced by
        :meth:`ParityStream.batch_values`.
        """
        p1 = np.zeros(self.n)
        p2 = np.zeros(self.n)
        tail = np.zeros(TAIL)
        for k, vals in received.items():
            stream, pos = self.batches[k]
            vals = np.asarray(vals, dtype=np.float64)
            body = vals[:len(pos)]
            llr = PARITY_LLR * (1 - 2 * body)
            (p1 if stream == 0 else p2)[pos] = llr
            if k == 0:
                tail = PARITY_LLR * (1 - 2 * vals[len(pos):])
        return SoftInput(np.asarray(sys_llr, dtype=np.float64), p1, p2, tail)

    def consistent(self, bits, soft):
        """True when re-encoding ``bits`` reproduces every received parity bit."""
        stream = self.encode(bits)
        for got, ref in ((soft.parity1, stream.parity1), (soft.parity2, stream.parity2),
                         (soft.tail, stream.tail)):
            known = got != 0
            if np.any((got[known] < 0) != (ref[known] == 1)):
                return False
        return True

    def decode(self, soft, max_iters=18, ber_threshold=1e-3, check_parity=True, warm=None,
               final=False):
        return turbo_decode(soft, self, max_iters, ber_threshold, check_parity, warm, final)


@dataclass
class SoftInput:
    systematic: np.ndarray
    parity1: np.ndarray
    parity2: np.ndarray
    tail: np.ndarray = field(default_factory=lambda: np.zeros(TAIL))


@dataclass
class TurboResult:
    bits: np.ndarray
    llr: np.ndarray
    iterations: int
    ber_estimate: float
    converged: bool
    extrinsic: np.ndarray = None  # decoder-2 extrinsic, reusable as a warm start


def estimate_ber(llr):
    """Expected bit error probability under the a-posteriori LLRs."""
    a = np.abs(np.asarray(llr, dtype=np.float64))
    if a.size == 0:
        return 0.0
    return float(np.mean(np.exp(-np.logaddexp(0.0, a))))


def turbo_encode(bits, seed=1, period=32):
    bits = np.asarray(bits)
    if bits.size == 0:
        raise ValueError("cannot turbo-encode an empty bitplane")
    return TurboCode(bits.size, seed, period).encode(bits)


def turbo_decode(soft, code, max_iters=18, ber_threshold=1e-3, check_parity=True, warm=None,
                 final=False):
    """Iterate until the estimated BER reaches the threshold (and the hard
    decisions reproduce the received parity) or ``max_iters`` is used up.

    ``warm`` is the extrinsic of a previous attempt on the same block; after a
    new parity batch arrives it saves re-running the early iterations.
    ``final`` marks the last batch: no more parity can arrive, so the stall
    stop is disabled and every iteration is used.
    """
    n = code.n
    sys = soft.systematic
    sys_i = sys[code.perm]
    p1, p2 = soft.parity1, soft.parity2
    ext21 = np.zeros(n) if warm is None else np.asarray(warm, dtype=np.float64).copy()
    any_parity = bool(np.any(p1) or np.any(p2) or np.any(soft.tail))
    app = sys.copy()
    ber = estimate_ber(app)
    it = 0
    ok = False
    history = []
    for it in range(1, max_iters + 1):
        app1 = bcjr(sys, p1, ext21, soft.tail, terminated=True)
        ext12 = np.clip(app1 - sys - ext21, -EXTRINSIC_CLIP, EXTRINSIC_CLIP)
        a_i = ext12[code.perm]
        app2 = bcjr(sys_i, p2, a_i, None, terminated=False)
        ext21 = np.clip((app2 - sys_i - a_i)[code.inv], -EXTRINSIC_CLIP, EXTRINSIC_CLIP)
        app = app2[code.inv]
        ber = estimate_ber(app)
        history.append(ber)
        if ber <= ber_threshold:
            bits = (app < 0).astype(np.uint8)
            if not check_parity or not any_parity or code.consistent(bits, soft):
                ok = True
                break
        if not any_parity:
            break
        # stalled far above the target: wait for more parity instead
        if not final and it >= STALL_WINDOW + 1 and ber > 10 * ber_threshold and \
                ber > 0.5 * history[-1 - STALL_WINDOW]:
            break
    bits = (app < 0).astype(np.uint8)
    return TurboResult(bits, app, it, ber, ok, ext21)
