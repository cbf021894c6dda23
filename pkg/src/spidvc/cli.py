"""Command line entry point.

    spidvc gen PATTERN --out PREFIX           synthetic sequence, one YUV file per view
    spidvc encode  INPUT... -o file.spdv      encode (drives the decoder for parity requests)
    spidvc decode  file.spdv -o PREFIX        decode a stored container to YUV
    spidvc simulate INPUT... --csv stats.csv  per-frame statistics (+ PNG)
    spidvc sigen   INPUT... --csv si.csv      side-information quality per method (+ PNG)
    spidvc rd      INPUT... --csv rd.csv      rate-distortion sweep (+ PNG, gnuplot script)

INPUT is either raw 4:2:0 files (one per view, needs --width/--height) or
``synth:PATTERN`` for an in-memory synthetic sequence.
"""

import argparse
import os
import sys

import numpy as np

from . import report, synthetic
from .codec import as_sequence, decode_container, run_codec
from .container import Container
from .model import CodecConfig, parse_keyed_text
from .yuv import read_yuv, view_paths, write_yuv


def load_config(path, overrides):
    mapping = {}
    if path:
        with open(path) as fh:
            mapping = parse_keyed_text(fh.read())
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    return CodecConfig.from_mapping(mapping)


def load_sequence(args, cfg):
    inputs = args.inputs
    if len(inputs) == 1 and inputs[0].startswith("synth:"):
        luma = synthetic.generate(inputs[0][6:], args.width or 64, args.height or 64,
                                  args.frames or 5, args.views, args.seed)
        return as_sequence(luma, cfg.fps)
    if not args.width or not args.height:
        raise ValueError("raw YUV input needs --width and --height")
    return read_yuv(inputs, args.width, args.height, args.frames, cfg.fps)


def _sidecar(csv_path, suffix):
    return os.path.splitext(csv_path)[0] + suffix


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def cmd_gen(args):
    luma = synthetic.generate(args.pattern, args.width, args.height, args.frames, args.views,
                              args.seed)
    paths = view_paths(args.out, args.views)
    for v, p in enumerate(paths):
        write_yuv(p, luma[v])
    print("\n".join(paths))


def cmd_encode(args):
    cfg = load_config(args.config, args.set)
    seq = load_sequence(args, cfg)
    run = run_codec(cfg, seq)
    run.container.write(args.output)
    print(f"{args.output}: {os.path.getsize(args.output)} bytes")


def cmd_decode(args):
    run = decode_container(Container.read(args.input))
    paths = view_paths(args.output, run.decoded.shape[0])
    for v, p in enumerate(paths):
        write_yuv(p, run.decoded[v])
    print("\n".join(paths))


def cmd_simulate(args):
    cfg = load_config(args.config, args.set)
    seq = load_sequence(args, cfg)
    container, decoded, rows = report.simulate(cfg, seq)
    _write(args.csv, report.rows_to_csv(rows))
    report.plot_frames(rows, _sidecar(args.csv, ".png"))
    if args.bitstream:
        container.write(args.bitstream)
    if args.decoded:
        for v, p in enumerate(view_paths(args.decoded, seq.num_views)):
            write_yuv(p, decoded[v], seq.chroma[v] if seq.chroma else None)
    total = sum(r.total_bits for r in rows)
    print(f"{len(rows)} frames, {total} bits, mean PSNR "
          f"{np.mean([r.psnr_db for r in rows]):.2f} dB")


def cmd_sigen(args):
    cfg = load_config(args.config, args.set)
    seq = load_sequence(args, cfg)
    rows = report.si_quality(cfg, seq)
    _write(args.csv, report.rows_to_csv(rows))
    report.plot_si(rows, _sidecar(args.csv, ".png"))
    print(f"{len(rows)} rows")


def cmd_rd(args):
    cfg = load_config(args.config, args.set)
    seq = load_sequence(args, cfg)
    qps = [int(q) for q in args.qps.split(",")] if args.qps else None
    points = report.rd_sweep(cfg, seq, qps)
    _write(args.csv, report.rows_to_csv(points))
    png = _sidecar(args.csv, ".png")
    report.plot_rd(points, png)
    _write(_sidecar(args.csv, ".gp"),
           report.gnuplot_script(os.path.basename(args.csv),
                                 os.path.basename(_sidecar(args.csv, "_gnuplot.png"))))
    for p in points:
        print(f"qp={p.qp} {p.quantizer}: {p.kbps:.2f} kbps, {p.psnr_db:.2f} dB")


def _input_args(p):
    p.add_argument("inputs", nargs="+", help="YUV files (one per view) or synth:PATTERN")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--frames", type=int, help="frames to read (default: whole file)")
    p.add_argument("--views", type=int, default=1, help="views for synth: input")
    p.add_argument("--seed", type=int, default=0, help="seed for synth: input")
    p.add_argument("--config", help="flat 'key = value' configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a configuration key (repeatable)")


def build_parser():
    ap = argparse.ArgumentParser(prog="spidvc", description="Multi-view interleaved DVC codec")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic sequence as YUV files")
    p.add_argument("pattern", choices=synthetic.PATTERNS)
    p.add_argument("--out", required=True, help="output prefix; files are PREFIX_vN.yuv")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--views", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("encode", help="encode to a container file")
    _input_args(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a container file to YUV")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="output prefix")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="encode and decode in-process, write per-frame CSV")
    _input_args(p)
    p.add_argument("--csv", required=True)
    p.add_argument("--bitstream", help="also write the container here")
    p.add_argument("--decoded", help="also write decoded YUV with this prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sigen", help="side-information quality per method")
    _input_args(p)
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_sigen)

    p = sub.add_parser("rd", help="rate-distortion sweep over the paired operating points")
    _input_args(p)
    p.add_argument("--csv", required=True)
    p.add_argument("--qps", help="comma separated qp list (default 40,36,32,28)")
    p.set_defaults(func=cmd_rd)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # one machine-parseable line, nonzero exit
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
