"""Pixel planes, orthonormal block DCT, quantizers and scan orders.

Array convention: every block and coefficient array is indexed ``[row, col]``.
The first frequency index ``i`` pairs with the row coordinate and the second
index ``j`` with the column coordinate, so ``(1, 0)`` is the lowest vertical
frequency and ``(0, 1)`` the lowest horizontal one.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidInputError

BLOCK_SIZES = (4, 8)

# ITU-T T.81 Annex K, table K.1 (luminance).
JPEG_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def _check_size(n: int) -> None:
    if n not in BLOCK_SIZES:
        raise InvalidInputError(f"block size must be one of {BLOCK_SIZES}, got {n}")


# --------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class PixelPlane:
    """8-bit luma plane held as reals; clamping happens only on export."""

    samples: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] == 0 or s.shape[1] == 0:
            raise InvalidInputError(f"plane must be a non-empty 2-D array, got shape {s.shape}")
        if self.bit_depth != 8:
            raise InvalidInputError("only 8-bit planes are supported")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    def check_tiling(self, n: int) -> None:
        if self.width % n or self.height % n:
            raise InvalidInputError(
                f"plane {self.width}x{self.height} is not divisible by block size {n}"
            )

    def to_uint8(self) -> np.ndarray:
        return np.clip(round_half_away(self.samples), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class Block:
    """An N x N pixel block; ``origin`` is its (row, col) offset in the plane."""

    samples: np.ndarray
    origin: tuple = (0, 0)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InvalidInputError(f"block must be square, got shape {s.shape}")
        _check_size(s.shape[0])
        if self.origin[0] % s.shape[0] or self.origin[1] % s.shape[0]:
            raise InvalidInputError(f"origin {self.origin} not aligned to {s.shape[0]}")
        object.__setattr__(self, "samples", s)

    @property
    def size(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class CoeffBlock:
    """N x N transform coefficients indexed by frequency pair (i, j)."""

    coeffs: np.ndarray
    quantized: bool = False
    qstep_used: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InvalidInputError(f"coefficient block must be square, got {c.shape}")
        _check_size(c.shape[0])
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]


class QuantKind(enum.IntEnum):
    JPEG_QUALITY = 0
    QP_UNIFORM = 1


@dataclass(frozen=True)
class QuantSpec:
    kind: QuantKind
    value: int
    size: int = 8
    table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_size(self.size)
        if self.kind == QuantKind.JPEG_QUALITY and not 1 <= self.value <= 100:
            raise InvalidInputError(f"JPEG quality must be in 1..100, got {self.value}")
        if self.kind == QuantKind.QP_UNIFORM and not 0 <= self.value <= 51:
            raise InvalidInputError(f"QP must be in 0..51, got {self.value}")
        table = quant_table(self.kind, self.value, self.size)
        object.__setattr__(self, "table", table)

    @classmethod
    def jpeg(cls, quality: int, size: int = 8) -> "QuantSpec":
        return cls(QuantKind.JPEG_QUALITY, quality, size)

    @classmethod
    def qp(cls, qp: int, size: int = 4) -> "QuantSpec":
        return cls(QuantKind.QP_UNIFORM, qp, size)


class ScanKind(enum.Enum):
    ZIGZAG = "zigzag"
    ROW_FIRST = "row_first"
    COLUMN_FIRST = "column_first"
    DIAG_DOWNLEFT = "diag_downleft"


@dataclass(frozen=True)
class ScanOrder:
    kind: ScanKind
    positions: tuple

    @property
    def size(self) -> int:
        return int(round(len(self.positions) ** 0.5))

    def flat_indices(self) -> np.ndarray:
        n = self.size
        return np.array([i * n + j for i, j in self.positions], dtype=np.intp)


# --------------------------------------------------------------------------
# Transform


@functools.lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix, ``C[i, x] = c(i) cos((2x+1) i pi / 2n)``."""
    _check_size(n)
    x = np.arange(n)
    c = np.cos((2 * x[None, :] + 1) * x[:, None] * np.pi / (2 * n))
    c *= np.sqrt(2.0 / n)
    c[0] = np.sqrt(1.0 / n)
    c.setflags(write=False)
    return c


@functools.lru_cache(maxsize=None)
def basis_functions(n: int) -> np.ndarray:
    """All N^2 basis images, shape (n, n, n, n) indexed [i, j, row, col]."""
    c = dct_matrix(n)
    phi = np.einsum("ix,jy->ijxy", c, c)
    phi.setflags(write=False)
    return phi


def dct2(samples: np.ndarray) -> np.ndarray:
    c = dct_matrix(samples.shape[-1])
    return c @ samples @ c.T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    c = dct_matrix(coeffs.shape[-1])
    return c.T @ coeffs @ c


def forward_bdct(block: Block) -> CoeffBlock:
    if not np.all(np.isfinite(block.samples)):
        raise InvalidInputError("block contains non-finite samples")
    return CoeffBlock(dct2(block.samples))


def inverse_bdct(coeffs: CoeffBlock, origin=(0, 0)) -> Block:
    return Block(idct2(coeffs.coeffs), origin)


def to_blocks(samples: np.ndarray, n: int) -> np.ndarray:
    """View an (H, W) array as (H/n, W/n, n, n) blocks (copy)."""
    h, w = samples.shape
    return samples.reshape(h // n, n, w // n, n).swapaxes(1, 2).copy()


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    bh, bw, n, _ = blocks.shape
    return blocks.swapaxes(1, 2).reshape(bh * n, bw * n)


def plane_dct(samples: np.ndarray, n: int) -> np.ndarray:
    """Blockwise DCT of a whole plane, returned as (H/n, W/n, n, n)."""
    c = dct_matrix(n)
    return np.einsum("ix,abxy,jy->abij", c, to_blocks(samples, n), c, optimize=True)


def plane_idct(coeffs: np.ndarray) -> np.ndarray:
    c = dct_matrix(coeffs.shape[-1])
    return from_blocks(np.einsum("ix,abij,jy->abxy", c, coeffs, c, optimize=True))


# --------------------------------------------------------------------------
# Quantization


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def qp_step(qp: int) -> float:
    return 0.625 * 2.0 ** (qp / 6.0)


def jpeg_scale(quality: int) -> int:
    return 5000 // quality if quality < 50 else 200 - 2 * quality


def quant_table(kind: QuantKind, value: int, n: int) -> np.ndarray:
    if kind == QuantKind.JPEG_QUALITY:
        scale = jpeg_scale(value)
        t = np.clip(round_half_away(JPEG_LUMA_TABLE * scale / 100.0), 1, 255)
        t = t[:n, :n].copy()
    elif kind == QuantKind.QP_UNIFORM:
        t = np.full((n, n), max(1.0, qp_step(value)))
    else:
        raise InvalidInputError(f"unknown quantizer kind {kind!r}")
    t.setflags(write=False)
    return t


def quantize(coeffs: CoeffBlock, q: QuantSpec) -> np.ndarray:
    """Integer levels ``round(c / step)`` with half-away-from-zero rounding."""
    if coeffs.quantized:
        raise InvalidInputError("coefficients are already quantized")
    if coeffs.size != q.size:
        raise InvalidInputError(f"block size {coeffs.size} does not match quantizer {q.size}")
    return round_half_away(coeffs.coeffs / q.table).astype(np.int64)


def dequantize(levels: np.ndarray, q: QuantSpec) -> CoeffBlock:
    return CoeffBlock(np.asarray(levels) * q.table, quantized=True, qstep_used=q.table)


# --------------------------------------------------------------------------
# Scans


def _scan_key(kind: ScanKind):
    if kind == ScanKind.ZIGZAG:
        return lambda p: (p[0] + p[1], p[0] if (p[0] + p[1]) % 2 else -p[0])
    if kind == ScanKind.ROW_FIRST:
        return lambda p: (p[0], p[1])
    if kind == ScanKind.COLUMN_FIRST:
        return lambda p: (p[1], p[0])
    if kind == ScanKind.DIAG_DOWNLEFT:
        return lambda p: (p[0] + p[1], p[0])
    raise InvalidInputError(f"unknown scan kind {kind!r}")


@functools.lru_cache(maxsize=None)
def make_scan(kind, n: int) -> ScanOrder:
    try:
        kind = ScanKind(kind)
    except ValueError:
        raise InvalidInputError(f"unknown scan kind {kind!r}") from None
    _check_size(n)
    cells = [(i, j) for i in range(n) for j in range(n)]
    return ScanOrder(kind, tuple(sorted(cells, key=_scan_key(kind))))


# --------------------------------------------------------------------------
# PGM I/O

_PGM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def read_pgm(path) -> PixelPlane:
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise InvalidInputError(f"{path}: malformed PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise InvalidInputError(f"{path}: only binary P5 PGM is supported")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval > 255:
        raise InvalidInputError(f"{path}: only 8-bit PGM is supported")
    pos += 1  # single whitespace byte after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return PixelPlane(pixels.reshape(height, width).astype(np.float64))


def write_pgm(path, plane) -> None:
    if isinstance(plane, PixelPlane):
        pixels = plane.to_uint8()
    else:
        pixels = np.clip(round_half_away(np.asarray(plane, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(pixels.tobytes())
