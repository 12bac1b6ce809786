"""JPEG-like still-image coder with TV restoration of a static coefficient set.

Each 8x8 block's positions are split into a support set I_O, coded as usual,
and a predicted set I_DCT.  The decoder first rebuilds the image from I_O
alone (stage 1), then restores I_DCT by TV descent over the whole plane
(stage 2), and finally adds the decoded prediction errors (stage 3).  The
mask is part of the static configuration; nothing about it is transmitted.

Stream layout after the container header: one arithmetic payload holding
the I_O levels of every block in raster order (DC as a DPCM difference,
remaining positions in zigzag order), followed by the I_DCT prediction
errors of every block in mask order, under a separate context set.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np

from .blocks import (
    PixelPlane,
    QuantKind,
    QuantSpec,
    ScanKind,
    make_scan,
    plane_dct,
    plane_idct,
    round_half_away,
)
from .entropy import (
    CODEC_IMAGE,
    FLAG_VCRESPRED,
    RangeDecoder,
    RangeEncoder,
    StreamHeader,
    decode_levels,
    encode_levels,
    entropy_estimate,
    new_contexts,
    pack_stream,
    unpack_stream,
)
from .errors import InvalidInputError, StreamError
from .metrics import psnr
from .tvcore import DescentConfig, GammaSchedule, restore_plane


def _zigzag_rank(n: int) -> dict:
    return {pos: r for r, pos in enumerate(make_scan(ScanKind.ZIGZAG, n).positions)}


@dataclass(frozen=True)
class CoeffMask:
    """Static partition of block positions into I_DCT (predicted) and I_O (support)."""

    size: int
    i_dct: tuple = ()
    allow_dc: bool = False

    def __post_init__(self):
        n = self.size
        if n not in (4, 8):
            raise InvalidInputError(f"unsupported block size {n}")
        pos = tuple((int(i), int(j)) for i, j in self.i_dct)
        if len(set(pos)) != len(pos):
            raise InvalidInputError("duplicate position in mask")
        for i, j in pos:
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidInputError(f"position ({i},{j}) outside a {n}x{n} block")
        if (0, 0) in pos and not self.allow_dc:
            raise InvalidInputError("DC cannot be predicted in image mode")
        rank = _zigzag_rank(n)
        object.__setattr__(self, "i_dct", tuple(sorted(pos, key=rank.__getitem__)))

    @property
    def order(self) -> tuple:
        """Prediction sequence over I_DCT, low to high frequency."""
        return self.i_dct

    @property
    def i_o(self) -> tuple:
        s = set(self.i_dct)
        return tuple(p for p in make_scan(ScanKind.ZIGZAG, self.size).positions if p not in s)

    def array(self) -> np.ndarray:
        m = np.zeros((self.size, self.size), dtype=bool)
        for p in self.i_dct:
            m[p] = True
        return m

    def __len__(self):
        return len(self.i_dct)

    @classmethod
    def parse(cls, text: str, size: int = 8) -> "CoeffMask":
        """``"c10,c01"`` -> {(1,0), (0,1)}; empty or ``"none"`` -> empty mask."""
        text = (text or "").strip().lower()
        if text in ("", "none"):
            return cls(size)
        pos = []
        for tok in text.split(","):
            m = re.fullmatch(r"c(\d)(\d)", tok.strip())
            if not m:
                raise InvalidInputError(f"bad coefficient name {tok!r}; expected e.g. c10")
            pos.append((int(m.group(1)), int(m.group(2))))
        return cls(size, tuple(pos))

    def label(self) -> str:
        return ",".join(f"c{i}{j}" for i, j in self.i_dct) or "none"


def default_image_descent() -> DescentConfig:
    return DescentConfig(gamma0=4.0, gamma_schedule=GammaSchedule.HARMONIC, max_iters=100)


@dataclass(frozen=True)
class ImageCodecConfig:
    quant: QuantSpec
    mask: CoeffMask
    descent: DescentConfig = field(default_factory=default_image_descent)
    restore_enabled: bool = True

    def __post_init__(self):
        if self.quant.kind != QuantKind.JPEG_QUALITY:
            raise InvalidInputError("the image codec uses JPEG quality tables")
        if self.mask.size != self.quant.size:
            raise InvalidInputError("mask and quantizer block sizes differ")

    @classmethod
    def make(cls, quality: int, mask="c10,c01", **kw) -> "ImageCodecConfig":
        if isinstance(mask, str):
            mask = CoeffMask.parse(mask, 8)
        return cls(QuantSpec.jpeg(quality, 8), mask, **kw)


@dataclass
class EncodeReport:
    bits: int
    rate_bpp: float
    position_entropy: np.ndarray  # order-0 entropy (bits/block) of the coded symbol at each position
    psnr: float
    reconstruction: PixelPlane


def _to_pixels(samples: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(samples), 0, 255)


def _stages(coeffs_io, cfg: ImageCodecConfig):
    """I_O-only coefficients -> (restored prediction over I_DCT, mask array)."""
    m = cfg.mask.array()
    if not cfg.restore_enabled or not m.any():
        return np.zeros_like(coeffs_io), m
    restored, _ = restore_plane(coeffs_io, m, cfg.descent)
    return np.where(m, restored, 0.0), m


def _block_order(shape):
    rows, cols = shape[:2]
    return [(r, c) for r in range(rows) for c in range(cols)]


def encode_image(plane, cfg: ImageCodecConfig):
    """Encode a luma plane.  Returns (stream bytes, EncodeReport)."""
    if not isinstance(plane, PixelPlane):
        plane = PixelPlane(np.asarray(plane, dtype=np.float64))
    n = cfg.quant.size
    plane.check_tiling(n)
    table = cfg.quant.table
    coeffs = plane_dct(plane.samples, n)
    levels = round_half_away(coeffs / table).astype(np.int64)
    m = cfg.mask.array()
    levels_io = np.where(m, 0, levels)
    coeffs_io = levels_io * table
    pred, _ = _stages(coeffs_io, cfg)
    err = np.where(m, round_half_away((coeffs - pred) / table), 0).astype(np.int64)
    rec_coeffs = coeffs_io + np.where(m, pred + err * table, 0.0)

    enc = RangeEncoder()
    io_seq = _write_payload(enc, levels_io, err, cfg.mask)
    payload = enc.finish()
    header = StreamHeader(CODEC_IMAGE, plane.width, plane.height, n, int(QuantKind.JPEG_QUALITY),
                          cfg.quant.value, FLAG_VCRESPRED if cfg.restore_enabled and len(cfg.mask) else 0)
    stream = pack_stream(header, payload)

    symbols = io_seq.reshape(-1, n, n) + err.reshape(-1, n, n)
    pos_entropy = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            pos_entropy[i, j] = entropy_estimate(symbols[:, i, j])
    rec = PixelPlane(_to_pixels(plane_idct(rec_coeffs)))
    bits = 8 * len(stream)
    report = EncodeReport(bits, bits / (plane.width * plane.height), pos_entropy,
                          psnr(plane, rec), rec)
    return stream, report


def _write_payload(enc, levels_io, err, mask: CoeffMask) -> np.ndarray:
    """Code both passes; returns the I_O symbols actually written (DC as DPCM)."""
    io_pos = mask.i_o
    io_idx = tuple(np.array(io_pos).T)
    written = np.zeros_like(levels_io)
    ctx = new_contexts()
    prev_dc = 0
    for r, c in _block_order(levels_io.shape):
        seq = levels_io[r, c][io_idx].tolist()
        dc = seq[0]
        seq[0] = dc - prev_dc
        prev_dc = dc
        written[r, c, 0, 0] = seq[0]
        written[r, c][io_idx[0][1:], io_idx[1][1:]] = seq[1:]
        encode_levels(enc, ctx, seq)
    if len(mask):
        e_idx = tuple(np.array(mask.order).T)
        ctx = new_contexts()
        for r, c in _block_order(levels_io.shape):
            encode_levels(enc, ctx, err[r, c][e_idx].tolist())
    return written


def decode_image(stream: bytes, cfg: ImageCodecConfig, stages: bool = False):
    """Decode a stream produced by :func:`encode_image` with the same config.

    Returns the reconstructed PixelPlane, or (plane, {stage name: plane})
    when ``stages`` is set.  Stage names: ``support`` (I_O only),
    ``restored`` (I_DCT predicted), ``final``.
    """
    header, payload = unpack_stream(stream)
    n = cfg.quant.size
    if header.codec_id != CODEC_IMAGE:
        raise StreamError("not an image stream", position=1)
    if header.block_size != n or header.quant_value != cfg.quant.value:
        raise StreamError("stream header does not match the decoder configuration")
    if header.width % n or header.height % n or not header.width or not header.height:
        raise StreamError("stream dimensions are not block aligned")
    rows, cols = header.height // n, header.width // n
    table = cfg.quant.table
    mask = cfg.mask
    io_pos = mask.i_o
    io_idx = tuple(np.array(io_pos).T)
    levels_io = np.zeros((rows, cols, n, n), dtype=np.int64)
    err = np.zeros_like(levels_io)

    dec = RangeDecoder(payload) if payload else None
    if dec is None:
        raise StreamError("empty payload", position=len(stream))
    ctx = new_contexts()
    prev_dc = 0
    r = c = 0
    try:
        for r, c in _block_order(levels_io.shape):
            seq = decode_levels(dec, ctx, len(io_pos))
            seq[0] += prev_dc
            prev_dc = seq[0]
            levels_io[r, c][io_idx] = seq
        if len(mask):
            e_idx = tuple(np.array(mask.order).T)
            ctx = new_contexts()
            for r, c in _block_order(levels_io.shape):
                err[r, c][e_idx] = decode_levels(dec, ctx, len(mask))
    except StreamError as exc:
        raise StreamError(f"{exc} while decoding block (row {r}, col {c})",
                          position=(r * n, c * n)) from None

    coeffs_io = levels_io * table
    pred, m = _stages(coeffs_io, cfg)
    rec_coeffs = coeffs_io + np.where(m, pred + err * table, 0.0)
    final = PixelPlane(_to_pixels(plane_idct(rec_coeffs)))
    if not stages:
        return final
    snaps = {
        "support": PixelPlane(_to_pixels(plane_idct(coeffs_io))),
        "restored": PixelPlane(_to_pixels(plane_idct(coeffs_io + pred))),
        "final": final,
    }
    return final, snaps


# --------------------------------------------------------------------------
# Experiments


def random_cancellation_experiment(plane, pct: float, cfg: DescentConfig | None = None,
                                   seed: int = 0, n: int = 8):
    """Cancel ``pct`` percent of AC coefficients at random and restore them.

    Returns (PSNR with the cancelled coefficients left at zero,
    PSNR after TV restoration), both against the original plane.
    """
    if not 0 < pct < 100:
        raise InvalidInputError("pct must lie in (0, 100)")
    samples = np.asarray(getattr(plane, "samples", plane), dtype=np.float64)
    cfg = cfg or default_image_descent()
    coeffs = plane_dct(samples, n)
    rng = np.random.default_rng(seed)
    mask = rng.random(coeffs.shape) < pct / 100.0
    mask[..., 0, 0] = False
    zeroed = np.where(mask, 0.0, coeffs)
    restored, _ = restore_plane(zeroed, mask, cfg)
    before = psnr(samples, np.clip(plane_idct(zeroed), 0, 255))
    after = psnr(samples, np.clip(plane_idct(restored), 0, 255))
    return before, after


def position_study(corpus: dict, qualities=(25, 50, 75), cfg: DescentConfig | None = None,
                   positions=None, csv_path=None, n: int = 8):
    """Per-position cost/benefit of deleting one coefficient image-wide.

    For each quality and AC position, every image's levels at that position
    are removed and restored.  The entropy reduction is the order-0 entropy
    of the removed levels (bits per block); the PSNR reduction is the drop
    from the plain dequantized decode to the restored one.  Rows are
    averaged over the corpus.
    """
    cfg = cfg or default_image_descent()
    if positions is None:
        positions = [p for p in make_scan(ScanKind.ZIGZAG, n).positions if p != (0, 0)]
    positions = [tuple(p) for p in positions]
    if (0, 0) in positions:
        raise InvalidInputError("DC is not part of the position study")
    rows = []
    for q in qualities:
        table = QuantSpec.jpeg(q, n).table
        prepared = []
        for name, plane in corpus.items():
            samples = plane.samples
            levels = round_half_away(plane_dct(samples, n) / table)
            deq = levels * table
            prepared.append((samples, levels, deq, psnr(samples, _to_pixels(plane_idct(deq)))))
        for i, j in positions:
            ent, drop = [], []
            m = np.zeros((n, n), dtype=bool)
            m[i, j] = True
            for samples, levels, deq, base_psnr in prepared:
                col = levels[..., i, j]
                if not col.any():
                    ent.append(0.0)
                    drop.append(0.0)
                    continue
                ent.append(entropy_estimate(col.ravel()))
                restored, _ = restore_plane(np.where(m, 0.0, deq), m, cfg)
                drop.append(base_psnr - psnr(samples, _to_pixels(plane_idct(restored))))
            rows.append({"quality": q, "i": i, "j": j,
                         "entropy_reduction": float(np.mean(ent)),
                         "psnr_reduction": float(np.mean(drop))})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["quality", "i", "j", "entropy_reduction", "psnr_reduction"])
            w.writeheader()
            for row in rows:
                w.writerow({**row, "entropy_reduction": f"{row['entropy_reduction']:.6f}",
                            "psnr_reduction": f"{row['psnr_reduction']:.6f}"})
    return rows
