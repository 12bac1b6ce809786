"""Freely redistributable test content.

The classic USC/Waterloo stills and the CIF test sequences cannot be shipped,
so the default corpus is built from the natural images bundled with
scikit-image.  Sequences are synthesized as slow camera pans across a larger
still; every frame is distinct content for an intra coder.
"""

from __future__ import annotations

import functools
from pathlib import Path

import numpy as np

from .blocks import PixelPlane, read_pgm

IMAGE_NAMES = (
    "camera", "astronaut", "coffee", "chelsea", "coins", "moon", "rocket", "motorcycle",
)
SEQUENCE_NAMES = ("pan_rocket", "pan_motorcycle", "pan_astronaut", "pan_coffee")
CIF = (288, 352)


def _luma(rgb: np.ndarray) -> np.ndarray:
    if rgb.ndim == 2:
        return rgb.astype(np.float64)
    r, g, b = (rgb[..., k].astype(np.float64) for k in range(3))
    return np.clip(np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5), 0, 255)


@functools.lru_cache(maxsize=None)
def _raw(name: str) -> np.ndarray:
    from skimage import data

    if name == "motorcycle":
        img = data.stereo_motorcycle()[0]
    else:
        img = getattr(data, name)()
    return _luma(img)


def load_image(name: str, multiple: int = 16, max_side: int = 512) -> PixelPlane:
    """Center crop of a bundled image, sized to a multiple of ``multiple``."""
    y = _raw(name)
    h = min(y.shape[0], max_side) // multiple * multiple
    w = min(y.shape[1], max_side) // multiple * multiple
    r0 = (y.shape[0] - h) // 2
    c0 = (y.shape[1] - w) // 2
    return PixelPlane(y[r0:r0 + h, c0:c0 + w])


def load_corpus(directory=None, names=IMAGE_NAMES) -> dict:
    """Name -> PixelPlane.  A directory of PGM files replaces the bundled set."""
    if directory is not None:
        paths = sorted(Path(directory).glob("*.pgm"))
        return {p.stem: read_pgm(p) for p in paths}
    return {name: load_image(name) for name in names}


_PAN_SOURCES = {
    "pan_rocket": ("rocket", (2, 1)),
    "pan_motorcycle": ("motorcycle", (2, 1)),
    "pan_astronaut": ("astronaut", (3, 2)),
    "pan_coffee": ("coffee", (4, 2)),
}


def synthetic_sequence(name: str, frames: int = 49, size=CIF):
    """Yield ``frames`` luma planes panning across a bundled still."""
    src, (dx, dy) = _PAN_SOURCES[name]
    y = _raw(src)
    h, w = size
    max_c = y.shape[1] - w
    max_r = y.shape[0] - h
    for f in range(frames):
        c = min(f * dx, max_c)
        r = min(f * dy, max_r)
        yield PixelPlane(y[r:r + h, c:c + w])
