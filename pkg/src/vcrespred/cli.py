"""Command line entry point: ``vcrespred <subcommand> ...``.

Exit status is 0 on success, 2 for invalid input, 3 for a corrupt or
mismatched stream.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, InvalidInputError, StreamError

log = logging.getLogger("vcrespred")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_STREAM = 3


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"expected a comma-separated integer list, got {text!r}") from None


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InvalidInputError("config file must hold a JSON object")
    return cfg


class Context:
    """Global options shared by every subcommand."""

    def __init__(self, args):
        self.config = _load_config(args.config)
        self.seed = args.seed
        self.threads = args.threads
        self.out_dir = Path(args.out_dir) if args.out_dir else None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    def out(self, path) -> Path:
        """Output paths are placed under --out-dir when they are relative."""
        p = Path(path)
        if self.out_dir and not p.is_absolute():
            return self.out_dir / p
        return p

    def image_descent(self):
        from .imagecodec import default_image_descent
        from .tvcore import DescentConfig

        over = self.config.get("image_descent")
        if not over:
            return default_image_descent()
        base = default_image_descent()
        fields = {k: getattr(base, k) for k in base.__dataclass_fields__}
        fields.update(over)
        return DescentConfig(**fields)

    def video_config(self):
        from .videocodec import VideoCodecConfig

        try:
            return VideoCodecConfig(**self.config.get("descent", {}))
        except TypeError as exc:
            raise InvalidInputError(f"bad descent override: {exc}") from None

    def mask_table(self):
        from .videocodec import ModeMaskTable

        return ModeMaskTable.load(self.config.get("mask_table"))

    def mask(self, arg):
        return arg if arg is not None else self.config.get("mask", "c10,c01")


# --------------------------------------------------------------------------
# Image mode


def cmd_image_encode(args, ctx):
    from .blocks import read_pgm
    from .imagecodec import ImageCodecConfig, encode_image
    from .metrics import format_psnr

    plane = read_pgm(args.input)
    cfg = ImageCodecConfig.make(args.q, ctx.mask(args.mask), descent=ctx.image_descent())
    stream, rep = encode_image(plane, cfg)
    ctx.out(args.out).write_bytes(stream)
    print(f"bits={rep.bits} bpp={rep.rate_bpp:.4f} psnr={format_psnr(rep.psnr)}")


def cmd_image_decode(args, ctx):
    from .blocks import write_pgm
    from .entropy import CODEC_IMAGE, StreamHeader
    from .imagecodec import ImageCodecConfig, decode_image

    stream = Path(args.input).read_bytes()
    header = StreamHeader.unpack(stream)
    if header.codec_id != CODEC_IMAGE:
        raise StreamError("not an image stream", position=1)
    cfg = ImageCodecConfig.make(header.quant_value, ctx.mask(args.mask), descent=ctx.image_descent())
    final, stages = decode_image(stream, cfg, stages=True)
    write_pgm(ctx.out(args.out), final)
    if args.stages_dir:
        d = ctx.out(args.stages_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, plane in stages.items():
            write_pgm(d / f"{name}.pgm", plane)


def cmd_position_study(args, ctx):
    from .corpus import load_corpus
    from .imagecodec import position_study

    corpus = load_corpus(args.corpus)
    if not corpus:
        raise InvalidInputError(f"no PGM files in {args.corpus}")
    rows = position_study(corpus, qualities=_ints(args.q), cfg=ctx.image_descent(),
                          csv_path=ctx.out(args.csv))
    best = max(rows, key=lambda r: r["entropy_reduction"])
    print(f"rows={len(rows)} best=c{best['i']}{best['j']} at Q{best['quality']}")


def cmd_restore(args, ctx):
    from .blocks import read_pgm
    from .imagecodec import random_cancellation_experiment

    plane = read_pgm(args.input)
    before, after = random_cancellation_experiment(plane, args.pct, cfg=ctx.image_descent(), seed=ctx.seed)
    print(f"psnr_zeroed={before:.4f} psnr_restored={after:.4f} gain={after - before:.4f}")


def cmd_optimal_reconstruct(args, ctx):
    from .blocks import (PixelPlane, QuantSpec, plane_dct, plane_idct, quant_table, read_pgm,
                         round_half_away, write_pgm)
    from .metrics import psnr
    from .tvcore import optimal_reconstruct

    plane = read_pgm(args.input)
    q = QuantSpec.jpeg(args.q, 8)
    plane.check_tiling(8)
    table = quant_table(q.kind, q.value, 8)
    levels = round_half_away(plane_dct(plane.samples, 8) / table)
    plain = PixelPlane(np.clip(round_half_away(plane_idct(levels * table)), 0, 255))
    tv = PixelPlane(np.clip(round_half_away(optimal_reconstruct(levels, table)), 0, 255))
    if args.out:
        write_pgm(ctx.out(args.out), tv)
    print(f"psnr_dequant={psnr(plane, plain):.4f} psnr_optimal={psnr(plane, tv):.4f}")


# --------------------------------------------------------------------------
# Video mode


def cmd_intra_encode(args, ctx):
    from .harness import costmap_render, stream_bitrate
    from .metrics import psnr
    from .videocodec import SymbolCostMap, encode_sequence, read_y4m

    info, frames = read_y4m(args.input, max_frames=args.frames)
    if not frames:
        raise InvalidInputError(f"{args.input} holds no frames")
    flags = 3 if args.vcrespred == "on" else 0
    stream, rep = encode_sequence(frames, args.qp, flags, table=ctx.mask_table(), cfg=ctx.video_config(),
                                  costmap=bool(args.costmap), block_size=args.block_size)
    ctx.out(args.out).write_bytes(stream)
    if args.costmap:
        coded = sum(f.costmap.coded for f in rep.frames)
        base = sum(f.costmap.baseline for f in rep.frames)
        cm = SymbolCostMap(coded, base)
        target = ctx.out(args.costmap)
        if target.suffix.lower() == ".csv":
            cm.to_csv(target)
        else:
            costmap_render(cm, target)
    quality = np.mean([psnr(f, r.recon) for f, r in zip(frames, rep.frames)])
    kbps = stream_bitrate(rep.bits, info.fps, len(frames))
    print(f"frames={len(frames)} bits={rep.bits} kbps={kbps:.2f} psnr={quality:.4f}")


def cmd_intra_decode(args, ctx):
    from .videocodec import decode_sequence, write_y4m

    planes = decode_sequence(Path(args.input).read_bytes(), table=ctx.mask_table(), cfg=ctx.video_config())
    write_y4m(ctx.out(args.out), planes, fps=args.fps)
    print(f"frames={len(planes)}")


# --------------------------------------------------------------------------
# Reports


def cmd_rd_sweep(args, ctx):
    from .harness import RunManifest, rd_sweep

    if args.manifest:
        try:
            manifest = RunManifest.from_json(Path(args.manifest).read_text())
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise InvalidInputError(f"cannot read manifest: {exc}") from None
    else:
        if not args.inputs:
            raise InvalidInputError("give --manifest or --inputs")
        manifest = RunManifest(
            kind=args.kind, inputs=args.inputs, points=_ints(args.points), frames=args.frames,
            out_dir=str(ctx.out_dir or "sweep"), mask=ctx.mask(None), mask_table=ctx.config.get("mask_table"),
            seed=ctx.seed, threads=ctx.threads,
            descent=ctx.config.get("descent" if args.kind == "video" else "image_descent", {}),
        )
    res = rd_sweep(manifest)
    for label in sorted(res.bd):
        v = res.bd[label]
        print(f"{label}: BD-rate {'n/a' if v is None else f'{v:+.3f}%'}")


def _read_curve(path, label):
    from .harness import RDCurve

    try:
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        pts = [(float(r.get("bitrate", r.get("rate"))), float(r["psnr"])) for r in rows]
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: expected columns bitrate,psnr ({exc})") from None
    return RDCurve(label, pts)


def cmd_bd_rate(args, ctx):
    from .harness import bd_rate

    value = bd_rate(_read_curve(args.anchor, "anchor"), _read_curve(args.test, "test"))
    print(f"{value:.6f}")


def cmd_costmap(args, ctx):
    from .harness import costmap_render
    from .videocodec import SymbolCostMap

    try:
        cm = SymbolCostMap.from_csv(args.input)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read cost map {args.input}: {exc}") from None
    costmap_render(cm, ctx.out(args.out), scale=args.scale)


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vcrespred", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="JSON overrides: mask, mask_table, descent, image_descent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", help="directory for relative output paths")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("image-encode", help="JPEG-mode encode of a PGM")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--q", type=int, default=50)
    s.add_argument("--mask", help="predicted coefficients, e.g. c10,c01 (or none)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_image_encode)

    s = sub.add_parser("image-decode", help="decode a JPEG-mode stream to PGM")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--mask")
    s.add_argument("--out", required=True)
    s.add_argument("--stages-dir", help="also write the intermediate stage planes here")
    s.set_defaults(func=cmd_image_decode)

    s = sub.add_parser("position-study", help="per-coefficient restoration study over a corpus")
    s.add_argument("--corpus", help="directory of PGM files (default: bundled images)")
    s.add_argument("--q", default="25,50,75")
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_position_study)

    s = sub.add_parser("restore", help="random coefficient cancellation experiment")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--pct", type=float, default=10.0)
    s.set_defaults(func=cmd_restore)

    s = sub.add_parser("optimal-reconstruct", help="TV reconstruction inside quantization bins")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--q", type=int, default=25)
    s.add_argument("--out")
    s.set_defaults(func=cmd_optimal_reconstruct)

    s = sub.add_parser("intra-encode", help="intra-only video encode of a Y4M file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--qp", type=int, default=27)
    s.add_argument("--frames", type=int)
    s.add_argument("--vcrespred", choices=("on", "off"), default="on")
    s.add_argument("--block-size", type=int, choices=(4, 8))
    s.add_argument("--out", required=True)
    s.add_argument("--costmap", help="per-block bin map (.pgm, .svg or .csv)")
    s.set_defaults(func=cmd_intra_encode)

    s = sub.add_parser("intra-decode", help="decode an intra video stream to Y4M")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--fps", type=float, default=30.0)
    s.set_defaults(func=cmd_intra_decode)

    s = sub.add_parser("rd-sweep", help="baseline vs prediction over QPs/qualities, with BD-rate")
    s.add_argument("--manifest", help="RunManifest JSON")
    s.add_argument("--kind", choices=("video", "image"), default="video")
    s.add_argument("--inputs", nargs="*", help="Y4M/PGM paths or synthetic:<name>")
    s.add_argument("--points", default="22,27,32,37", help="QPs or JPEG qualities")
    s.add_argument("--frames", type=int, default=49)
    s.set_defaults(func=cmd_rd_sweep)

    s = sub.add_parser("bd-rate", help="BD-rate between two CSV curves (bitrate,psnr)")
    s.add_argument("--anchor", required=True)
    s.add_argument("--test", required=True)
    s.set_defaults(func=cmd_bd_rate)

    s = sub.add_parser("costmap", help="render a cost map CSV to PGM or SVG")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--scale", type=int, default=8)
    s.set_defaults(func=cmd_costmap)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Context(args)
        args.func(args, ctx)
    except StreamError as exc:
        print(f"stream error: {exc}", file=sys.stderr)
        return EXIT_STREAM
    except (InvalidInputError, DomainError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
