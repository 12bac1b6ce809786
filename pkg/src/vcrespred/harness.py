"""Rate-distortion bookkeeping: BD-rate, corpus sweeps, CSV/SVG reports, cost maps."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .blocks import PixelPlane, read_pgm, write_pgm
from .errors import DomainError, InvalidInputError
from .metrics import LOSSLESS, mse, psnr  # noqa: F401  (re-exported)

SYNTHETIC_PREFIX = "synthetic:"


# --------------------------------------------------------------------------
# RD curves and the Bjontegaard metric


@dataclass(frozen=True)
class RDPoint:
    bitrate: float  # kbps for video, bpp for images
    psnr: float

    def __post_init__(self):
        if not self.bitrate > 0:
            raise InvalidInputError(f"bitrate must be positive, got {self.bitrate}")
        if not math.isfinite(self.psnr):
            raise InvalidInputError("PSNR must be finite")


@dataclass(frozen=True)
class RDCurve:
    label: str
    points: tuple

    def __post_init__(self):
        pts = tuple(sorted((p if isinstance(p, RDPoint) else RDPoint(*p) for p in self.points),
                           key=lambda p: p.bitrate))
        if len(pts) < 4:
            raise InvalidInputError(f"curve {self.label!r} needs at least 4 points, got {len(pts)}")
        if any(a.bitrate >= b.bitrate for a, b in zip(pts, pts[1:])):
            raise InvalidInputError(f"curve {self.label!r} has repeated bitrates")
        object.__setattr__(self, "points", pts)

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.bitrate for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])


def bd_rate(anchor: RDCurve, test: RDCurve) -> float:
    """Average rate difference of ``test`` against ``anchor`` in percent (negative saves rate).

    Cubic fit of log10(rate) over PSNR per curve, integrated over the shared PSNR range.
    """
    pa, pt = anchor.psnrs, test.psnrs
    lo = max(pa.min(), pt.min())
    hi = min(pa.max(), pt.max())
    if not hi > lo:
        raise DomainError(f"PSNR ranges of {anchor.label!r} and {test.label!r} do not overlap")
    fa = np.polyint(np.polyfit(pa, np.log10(anchor.rates), 3))
    ft = np.polyint(np.polyfit(pt, np.log10(test.rates), 3))
    diff = ((np.polyval(ft, hi) - np.polyval(ft, lo)) - (np.polyval(fa, hi) - np.polyval(fa, lo))) / (hi - lo)
    return (10.0 ** diff - 1.0) * 100.0


def stream_bitrate(bits: int, fps: float, frames: int) -> float:
    """Intra stream bitrate in kbps."""
    if frames <= 0 or fps <= 0:
        raise InvalidInputError("frames and fps must be positive")
    return bits * fps / frames / 1000.0


def rate_gain(base_bits: float, test_bits: float) -> float:
    """Percent of bits saved at one operating point."""
    return (1.0 - test_bits / base_bits) * 100.0


# --------------------------------------------------------------------------
# Manifests


@dataclass
class RunManifest:
    """Everything that determines a sweep.  ``inputs`` are file paths or ``synthetic:<name>``."""

    kind: str  # "video" or "image"
    inputs: list
    points: list  # QPs (video) or JPEG qualities (image)
    out_dir: str = "sweep"
    frames: int = 49
    mask: str = "c10,c01"  # image mode
    mask_table: str | None = None  # video mode, JSON path; None = packaged default
    seed: int = 0
    threads: int = 1
    descent: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("video", "image"):
            raise InvalidInputError(f"unknown sweep kind {self.kind!r}")
        if not self.points:
            raise InvalidInputError("empty QP/quality list")
        if not self.inputs:
            raise InvalidInputError("no inputs in manifest")
        self.points = sorted(int(p) for p in self.points)
        if len(set(self.points)) != len(self.points):
            raise InvalidInputError("repeated QP/quality")
        if self.frames <= 0:
            raise InvalidInputError("frames must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def fingerprint(self) -> str:
        d = asdict(self)
        d.pop("threads")  # parallelism never changes the results
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]

    def missing_inputs(self) -> list:
        return [p for p in self.inputs if not p.startswith(SYNTHETIC_PREFIX) and not Path(p).is_file()]


def _input_label(item: str) -> str:
    if item.startswith(SYNTHETIC_PREFIX):
        return item[len(SYNTHETIC_PREFIX):]
    return Path(item).stem


def _load_video(item: str, frames: int):
    from .corpus import SEQUENCE_NAMES, synthetic_sequence
    from .videocodec import read_y4m

    if item.startswith(SYNTHETIC_PREFIX):
        name = item[len(SYNTHETIC_PREFIX):]
        if name not in SEQUENCE_NAMES:
            raise InvalidInputError(f"unknown synthetic sequence {name!r}")
        return 30.0, list(synthetic_sequence(name, frames=frames))
    info, planes = read_y4m(item, max_frames=frames)
    return info.fps, planes


def _load_image(item: str) -> PixelPlane:
    from .corpus import IMAGE_NAMES, load_image

    if item.startswith(SYNTHETIC_PREFIX):
        name = item[len(SYNTHETIC_PREFIX):]
        if name not in IMAGE_NAMES:
            raise InvalidInputError(f"unknown bundled image {name!r}")
        return load_image(name)
    return read_pgm(item)


# --------------------------------------------------------------------------
# Sweep jobs (module level so they pickle into worker processes)


def _video_job(args):
    item, qp, vcrespred, manifest = args
    from .videocodec import ModeMaskTable, VideoCodecConfig, encode_sequence

    fps, frames = _load_video(item, manifest.frames)
    table = ModeMaskTable.load(manifest.mask_table)
    cfg = VideoCodecConfig(**manifest.descent)
    stream, rep = encode_sequence(frames, qp, 3 if vcrespred else 0, table=table, cfg=cfg)
    values = [psnr(f, r.recon) for f, r in zip(frames, rep.frames)]
    finite = [v for v in values if v != LOSSLESS]
    quality = float(np.mean(finite)) if finite else 99.0
    return {
        "input": _input_label(item), "point": qp, "variant": "vcrespred" if vcrespred else "baseline",
        "bits": rep.bits, "rate": stream_bitrate(rep.bits, fps, len(frames)), "psnr": quality,
        "frames": len(frames),
    }


def _image_job(args):
    item, quality, with_mask, manifest = args
    from .imagecodec import ImageCodecConfig, encode_image

    plane = _load_image(item)
    cfg = ImageCodecConfig.make(quality, manifest.mask if with_mask else "", **_image_kw(manifest))
    _, rep = encode_image(plane, cfg)
    value = rep.psnr if rep.psnr != LOSSLESS else 99.0
    return {
        "input": _input_label(item), "point": quality, "variant": "vcrespred" if with_mask else "baseline",
        "bits": rep.bits, "rate": rep.rate_bpp, "psnr": value, "frames": 1,
    }


def _image_kw(manifest) -> dict:
    if not manifest.descent:
        return {}
    from .imagecodec import default_image_descent
    from .tvcore import DescentConfig

    base = asdict(default_image_descent())
    base.update(manifest.descent)
    return {"descent": DescentConfig(**base)}


# --------------------------------------------------------------------------
# Sweep


@dataclass
class SweepResult:
    rows: list  # one dict per (input, point, variant)
    curves: dict  # (input, variant) -> RDCurve, only where >= 4 points exist
    bd: dict  # input -> BD-rate percent (or None if not computable)
    gains: list  # (input, point, percent bits saved)


def rd_sweep(manifest: RunManifest, write: bool = True) -> SweepResult:
    """Run baseline and prediction at every point of every input; emit CSV/SVG reports."""
    missing = manifest.missing_inputs()
    if missing:
        raise InvalidInputError("missing input files: " + ", ".join(missing))
    job = _video_job if manifest.kind == "video" else _image_job
    jobs = [(item, p, v, manifest) for item in manifest.inputs for p in manifest.points for v in (False, True)]
    if manifest.threads > 1:
        with ProcessPoolExecutor(max_workers=manifest.threads) as pool:
            rows = list(pool.map(job, jobs))
    else:
        rows = [job(j) for j in jobs]
    rows.sort(key=lambda r: (r["input"], r["point"], r["variant"]))
    fp = manifest.fingerprint()
    for r in rows:
        r["provenance"] = f"{fp}:{r['input']}:{r['point']}:{r['variant']}"

    curves, bd, gains = {}, {}, []
    labels = sorted({r["input"] for r in rows})
    for label in labels:
        sub = {(r["point"], r["variant"]): r for r in rows if r["input"] == label}
        for p in manifest.points:
            gains.append((label, p, rate_gain(sub[(p, "baseline")]["bits"], sub[(p, "vcrespred")]["bits"])))
        bd[label] = None
        if len(manifest.points) >= 4:
            for v in ("baseline", "vcrespred"):
                curves[(label, v)] = RDCurve(f"{label}/{v}", tuple(
                    RDPoint(sub[(p, v)]["rate"], sub[(p, v)]["psnr"]) for p in manifest.points))
            try:
                bd[label] = bd_rate(curves[(label, "baseline")], curves[(label, "vcrespred")])
            except (DomainError, InvalidInputError):
                bd[label] = None
    result = SweepResult(rows, curves, bd, gains)
    if write:
        write_reports(result, manifest)
    return result


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_reports(result: SweepResult, manifest: RunManifest) -> dict:
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = manifest.fingerprint()
    paths = {
        "manifest": out / "manifest.json",
        "rd": out / "rd_points.csv",
        "bd": out / "bd_rate.csv",
        "gain": out / "gain_per_point.csv",
        "plot": out / "gain_vs_rate.svg",
    }
    paths["manifest"].write_text(manifest.to_json() + "\n")
    fields = ["input", "point", "variant", "frames", "bits", "rate", "psnr", "provenance"]
    with open(paths["rd"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in result.rows:
            w.writerow([_fmt(r[k]) for k in fields])
    with open(paths["bd"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["input", "bd_rate_percent", "provenance"])
        for label in sorted(result.bd):
            w.writerow([label, _fmt(result.bd[label]), f"{fp}:{label}"])
        values = [v for v in result.bd.values() if v is not None]
        w.writerow(["AVERAGE", _fmt(float(np.mean(values)) if values else None), f"{fp}:*"])
    with open(paths["gain"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["input", "point", "rate_gain_percent", "provenance"])
        for label, p, g in result.gains:
            w.writerow([label, p, _fmt(g), f"{fp}:{label}:{p}"])
    paths["plot"].write_text(gain_plot_svg(result))
    return paths


def gain_plot_svg(result: SweepResult, width: int = 480, height: int = 320) -> str:
    """Percent bits saved against baseline bitrate, one polyline per input."""
    series = {}
    for r in result.rows:
        if r["variant"] == "baseline":
            series.setdefault(r["input"], {})[r["point"]] = r["rate"]
    pts = {label: [(rates[p], g) for (l2, p, g) in result.gains if l2 == label]
           for label, rates in series.items()}
    xs = [x for v in pts.values() for x, _ in v] or [0.0, 1.0]
    ys = [y for v in pts.values() for _, y in v] + [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    m = 40
    sx = lambda x: m + (x - x0) / (x1 - x0) * (width - 2 * m)
    sy = lambda y: height - m - (y - y0) / (y1 - y0) * (height - 2 * m)
    palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]
    buf = io.StringIO()
    buf.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n')
    buf.write(f'<rect width="{width}" height="{height}" fill="white"/>\n')
    buf.write(f'<line x1="{m}" y1="{sy(0):.1f}" x2="{width - m}" y2="{sy(0):.1f}" stroke="#999"/>\n')
    buf.write(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-size="12">bitrate</text>\n')
    buf.write(f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 {height / 2:.0f})">'
              'rate gain (%)</text>\n')
    for i, label in enumerate(sorted(pts)):
        color = palette[i % len(palette)]
        line = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in sorted(pts[label]))
        buf.write(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{line}"/>\n')
        buf.write(f'<text x="{width - m}" y="{m + 14 * i}" text-anchor="end" font-size="11" fill="{color}">'
                  f'{label}</text>\n')
    buf.write("</svg>\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# Cost map rendering

NEUTRAL_GRAY = 128
_GAIN_RGB = (0, 160, 0)
_LOSS_RGB = (200, 0, 0)


def costmap_image(costmap, scale: int = 8) -> np.ndarray:
    """Gray-level rendering: neutral blocks mid-gray, savings brighter, losses darker.

    Intensity grows with the magnitude of the bin difference (saturating at 8 bins).
    """
    if scale < 1:
        raise InvalidInputError("scale must be >= 1")
    d = np.asarray(costmap.delta, dtype=np.float64)
    mag = np.minimum(np.abs(d), 8.0) / 8.0
    img = NEUTRAL_GRAY - np.sign(d) * (40 + 87 * mag) * (d != 0)
    img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return np.kron(img, np.ones((scale, scale), dtype=np.uint8))


def costmap_svg(costmap, cell: int = 8) -> str:
    d = np.asarray(costmap.delta)
    rows, cols = d.shape
    buf = io.StringIO()
    buf.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{cols * cell}" height="{rows * cell}">\n')
    buf.write(f'<rect width="{cols * cell}" height="{rows * cell}" fill="rgb(128,128,128)"/>\n')
    for r in range(rows):
        for c in range(cols):
            v = int(d[r, c])
            if v == 0:
                continue
            base = _GAIN_RGB if v < 0 else _LOSS_RGB
            a = 0.4 + 0.6 * min(abs(v), 8) / 8.0
            buf.write(f'<rect x="{c * cell}" y="{r * cell}" width="{cell}" height="{cell}" '
                      f'fill="rgb{base}" fill-opacity="{a:.3f}"/>\n')
    buf.write("</svg>\n")
    return buf.getvalue()


def costmap_render(costmap, path, scale: int = 8) -> Path:
    """Write a PGM (or SVG, by suffix) heat map of per-block bin savings."""
    path = Path(path)
    if path.suffix.lower() == ".svg":
        path.write_text(costmap_svg(costmap, scale))
    else:
        write_pgm(path, PixelPlane(costmap_image(costmap, scale).astype(np.float64)))
    return path
