"""Distortion metrics."""

import math

import numpy as np

from .errors import InvalidInputError

LOSSLESS = math.inf


def _samples(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def mse(a, b) -> float:
    a, b = _samples(a), _samples(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"plane shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical planes give LOSSLESS (+inf)."""
    m = mse(a, b)
    if m == 0.0:
        return LOSSLESS
    return 10.0 * math.log10(peak * peak / m)


def format_psnr(value: float) -> str:
    return "lossless" if value == LOSSLESS else f"{value:.4f}"
