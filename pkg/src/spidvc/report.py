"""Experiment harness: per-frame statistics, RD sweeps, SI-quality analysis,
CSV output and figures."""

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .codec import run_codec  # noqa: E402
from .model import QP_PAIRINGS, TD_TABLE_FOR_QP  # noqa: E402
from .si_engine import TEC, VEC  # noqa: E402

# "fused" is the final first-ranked SI (after mode selection); "fusion" is the
# TEC/VEC fusion output before spatial concealment replaces any block.
SI_METHODS = ("fused", "fusion", TEC, VEC)


def psnr(a, b, peak=255.0):
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def block_mse(pred, orig, blocks, n):
    if not blocks:
        return math.nan
    err = [np.mean((pred[i * n:(i + 1) * n, j * n:(j + 1) * n]
                    - orig[i * n:(i + 1) * n, j * n:(j + 1) * n].astype(np.float64)) ** 2)
           for i, j in blocks]
    return float(np.mean(err))


def _mse_to_psnr(mse):
    if math.isnan(mse):
        return math.nan
    return math.inf if mse == 0 else 10.0 * math.log10(255.0 ** 2 / mse)


@dataclass
class StatsRow:
    view: int
    frame: int
    kind: str
    bits_key: int
    bits_parity: int
    bits_maps: int
    bits_feedback: int
    psnr_db: float
    si_psnr_fused: float
    si_psnr_tec: float
    si_psnr_vec: float
    parity_requests: int
    residual_ber_flag: int

    @property
    def total_bits(self):
        return self.bits_key + self.bits_parity + self.bits_maps + self.bits_feedback


def stats_rows(run, seq, block_size):
    rows = []
    for (v, f), st in sorted(run.stats.items()):
        orig = seq.frame(v, f)
        si = {m: math.nan for m in SI_METHODS}
        for m, (pred, blocks) in st.si.items():
            si[m] = _mse_to_psnr(block_mse(pred, orig, blocks, block_size))
        rows.append(StatsRow(v, f, run.layout.kind(v, f), st.bits_key, st.bits_parity, st.bits_maps,
                             st.bits_feedback, psnr(run.decoded[v - 1, f - 1], orig),
                             si["fused"], si[TEC], si[VEC], st.parity_requests,
                             int(st.residual_flag)))
    return rows


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf"
        return f"{x:.4f}"
    return str(x)


def rows_to_csv(rows, columns=None):
    """CSV text with a header row; floats use a fixed format for reproducibility."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not rows:
        w.writerow(columns or [])
        return buf.getvalue()
    columns = columns or [f.name for f in fields(rows[0])]
    w.writerow(columns)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in columns])
    return buf.getvalue()


def simulate(cfg, seq):
    """Encode and decode in-process: (container, decoded luma, stats rows)."""
    run = run_codec(cfg, seq)
    return run.container, run.decoded, stats_rows(run, seq, cfg.block_size)


# ---------------------------------------------------------------------------
# rate-distortion sweep


@dataclass
class RdPoint:
    qp: int
    quantizer: str
    total_bits: int
    kbps: float
    psnr_db: float
    bits_key: int
    bits_parity: int
    bits_maps: int
    bits_feedback: int


def aggregate(rows, fps, num_frames, qp, quantizer):
    total = sum(r.total_bits for r in rows)
    seconds = num_frames / fps if fps > 0 else 1.0
    finite = [r.psnr_db for r in rows if math.isfinite(r.psnr_db)]
    mean_psnr = float(np.mean(finite)) if finite else math.inf
    return RdPoint(qp, quantizer, total, total / seconds / 1000.0, mean_psnr,
                   sum(r.bits_key for r in rows), sum(r.bits_parity for r in rows),
                   sum(r.bits_maps for r in rows), sum(r.bits_feedback for r in rows))


def rd_sweep(cfg, seq, qps=None):
    """One aggregate row per paired (qp, WZ quantizer) operating point."""
    qps = list(qps) if qps is not None else sorted(QP_PAIRINGS, reverse=True)
    points = []
    for qp in qps:
        c = cfg.operating_point(qp)
        _, _, rows = simulate(c, seq)
        label = f"levels={c.levels}" if c.domain == "pixel" else f"table={TD_TABLE_FOR_QP[qp]}"
        points.append(aggregate(rows, c.fps, seq.frame_count, qp, label))
    return points


def gnuplot_script(csv_name, png_name="rd.png"):
    return "\n".join([
        "set datafile separator ','",
        "set terminal pngcairo size 640,480",
        f"set output '{png_name}'",
        "set xlabel 'rate (kbps)'",
        "set ylabel 'PSNR (dB)'",
        "set grid",
        "set key bottom right",
        f"plot '{csv_name}' using 4:5 skip 1 with linespoints title 'codec'",
        "",
    ])


def plot_rd(points, path, label="codec"):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot([p.kbps for p in points], [p.psnr_db for p in points], "o-", label=label)
    ax.set_xlabel("rate (kbps)")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


# ---------------------------------------------------------------------------
# side-information quality


@dataclass
class SiRow:
    view: int
    frame: int
    method: str
    mse: float
    psnr_db: float


def si_quality(cfg, seq):
    """Per-frame MSE and PSNR of each SI candidate over the WZ blocks."""
    run = run_codec(cfg, seq)
    rows = []
    for (v, f), st in sorted(run.stats.items()):
        for m in SI_METHODS:
            if m in st.si:
                pred, blocks = st.si[m]
                mse = block_mse(pred, seq.frame(v, f), blocks, cfg.block_size)
                rows.append(SiRow(v, f, m, mse, _mse_to_psnr(mse)))
    return rows


def plot_si(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for m in SI_METHODS:
        pts = [(r.view, r.frame, r.psnr_db) for r in rows if r.method == m]
        if not pts:
            continue
        ax.plot(range(len(pts)), [p[2] for p in pts], "o-", label=m, markersize=3)
    ax.set_xlabel("B frame (decode listing order)")
    ax.set_ylabel("SI PSNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_frames(rows, path):
    """Per-frame stacked rate and PSNR."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    x = np.arange(len(rows))
    bottom = np.zeros(len(rows))
    for name in ("bits_key", "bits_parity", "bits_maps", "bits_feedback"):
        vals = np.array([getattr(r, name) for r in rows], dtype=float)
        ax1.bar(x, vals, bottom=bottom, label=name[5:])
        bottom += vals
    ax1.set_ylabel("bits")
    ax1.legend(fontsize=7)
    ax2.plot(x, [r.psnr_db for r in rows], "o-", markersize=3)
    ax2.set_ylabel("PSNR (dB)")
    ax2.set_xticks(x)
    ax2.set_xticklabels([f"{r.view}:{r.frame}{r.kind}" for r in rows], rotation=90, fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
