"""Discrete total variation, curvature, and DCT-domain TV descent.

A block is regularized inside a :class:`Patch`: its N x N core plus a one
pixel ring of neighbour samples.  Forward differences define the gradient and
backward differences the divergence, which makes :func:`curvature` the exact
negative gradient of :func:`discrete_tv` with respect to the core samples.

TV terms anchored on the top ring row and the left ring column are included
when those sides hold decoded samples, so the top/left neighbours shape the
restoration.  Unavailable sides are filled by replicating the nearest core
samples; their forward differences are then identically zero and they never
contribute.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .blocks import (
    basis_functions,
    dct2,
    idct2,
    plane_dct,
    plane_idct,
)
from .errors import InvalidInputError

TOP, LEFT, BOTTOM, RIGHT, TOP_RIGHT, BOTTOM_LEFT = 1, 2, 4, 8, 16, 32
ALL_SIDES = TOP | LEFT | BOTTOM | RIGHT | TOP_RIGHT | BOTTOM_LEFT
CAUSAL = TOP | LEFT | TOP_RIGHT

DEFAULT_EPS = 1e-3


class GammaSchedule(enum.Enum):
    FIXED = "fixed"
    HARMONIC = "harmonic"


@dataclass(frozen=True)
class DescentConfig:
    gamma0: float = 1.0
    gamma_schedule: GammaSchedule = GammaSchedule.FIXED
    max_iters: int = 100
    stationarity_eps: Optional[float] = None  # None -> 1e-4 * N
    curv_eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise InvalidInputError("gamma0 must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if self.stationarity_eps is not None and self.stationarity_eps < 0:
            raise InvalidInputError("stationarity_eps must be >= 0")
        if not self.curv_eps > 0:
            raise InvalidInputError("curv_eps must be positive")
        object.__setattr__(self, "gamma_schedule", GammaSchedule(self.gamma_schedule))

    @classmethod
    def for_quant_table(cls, table, fraction: float = 0.05, **kw) -> "DescentConfig":
        """FIXED step scaled to the mean quantization step of the block."""
        return cls(gamma0=fraction * float(np.mean(table)), **kw)

    def delta(self, n: int) -> float:
        return 1e-4 * n if self.stationarity_eps is None else self.stationarity_eps

    def gammas(self) -> np.ndarray:
        it = np.arange(self.max_iters, dtype=np.float64)
        if self.gamma_schedule == GammaSchedule.HARMONIC:
            return self.gamma0 / (1.0 + it / 20.0)
        return np.full(self.max_iters, self.gamma0)


@dataclass(frozen=True)
class Patch:
    """Core block plus a one-pixel ring; ``padded`` has shape (N+2, N+2)."""

    padded: np.ndarray
    available: int = 0

    def __post_init__(self):
        p = np.array(self.padded, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] - 2 not in (4, 8):
            raise InvalidInputError(f"padded patch must be (N+2)x(N+2), got {p.shape}")
        _refresh_ring(p, p.shape[0] - 2, self.available)
        p.setflags(write=False)
        object.__setattr__(self, "padded", p)

    @property
    def size(self) -> int:
        return self.padded.shape[0] - 2

    @property
    def core(self) -> np.ndarray:
        return self.padded[1:-1, 1:-1]

    @classmethod
    def replicated(cls, core) -> "Patch":
        core = np.asarray(core, dtype=np.float64)
        return cls(np.pad(core, 1, mode="edge"), 0)

    @classmethod
    def from_plane(cls, samples, row: int, col: int, n: int, available: int = ALL_SIDES,
                   core=None) -> "Patch":
        """Cut the patch of block (row, col) out of ``samples``.

        Ring sides outside the plane are dropped from ``available``.  ``core``
        overrides the block interior (e.g. a candidate reconstruction).
        """
        h, w = samples.shape
        if row == 0:
            available &= ~(TOP | TOP_RIGHT)
        if col == 0:
            available &= ~(LEFT | BOTTOM_LEFT)
        if row + n >= h:
            available &= ~(BOTTOM | BOTTOM_LEFT)
        if col + n >= w:
            available &= ~(RIGHT | TOP_RIGHT)
        p = np.zeros((n + 2, n + 2))
        p[1:-1, 1:-1] = samples[row:row + n, col:col + n] if core is None else core
        if available & TOP:
            p[0, 1:-1] = samples[row - 1, col:col + n]
        if available & LEFT:
            p[1:-1, 0] = samples[row:row + n, col - 1]
        if available & BOTTOM:
            p[-1, 1:-1] = samples[row + n, col:col + n]
        if available & RIGHT:
            p[1:-1, -1] = samples[row:row + n, col + n]
        if available & TOP_RIGHT:
            p[0, -1] = samples[row - 1, col + n]
        if available & BOTTOM_LEFT:
            p[-1, 0] = samples[row + n, col - 1]
        return cls(p, available)

    def with_core(self, core) -> "Patch":
        p = self.padded.copy()
        p[1:-1, 1:-1] = core
        return Patch(p, self.available)


@dataclass(frozen=True)
class RestoreResult:
    coeffs: np.ndarray
    iters_run: int
    tv_trace: np.ndarray
    converged: bool
    tv_initial: float = field(default=float("nan"))


# --------------------------------------------------------------------------
# Kernels


@njit(cache=True)
def _refresh_ring(p, n, avail):
    if not avail & TOP:
        for c in range(1, n + 1):
            p[0, c] = p[1, c]
    if not avail & LEFT:
        for r in range(1, n + 1):
            p[r, 0] = p[r, 1]
    if not avail & BOTTOM:
        for c in range(1, n + 1):
            p[n + 1, c] = p[n, c]
    if not avail & RIGHT:
        for r in range(1, n + 1):
            p[r, n + 1] = p[r, n]
    if not avail & TOP_RIGHT:
        p[0, n + 1] = p[0, n]
    if not avail & BOTTOM_LEFT:
        p[n + 1, 0] = p[n, 0]
    p[0, 0] = p[0, 1]
    p[n + 1, n + 1] = p[n, n + 1]


@njit(cache=True)
def _tv_fields(p, n, eps, avail, fx, fy):
    """TV of the patch; fills the normalized gradient field (fx: col, fy: row)."""
    e2 = eps * eps
    top = (avail & TOP) != 0
    left = (avail & LEFT) != 0
    total = 0.0
    for r in range(n + 1):
        for c in range(n + 1):
            if r >= 1 and c >= 1:
                inc = True
            elif r == 0 and c >= 1:
                inc = top
            elif c == 0 and r >= 1:
                inc = left
            else:
                inc = False
            if not inc:
                fx[r, c] = 0.0
                fy[r, c] = 0.0
                continue
            dx = p[r, c + 1] - p[r, c]
            dy = p[r + 1, c] - p[r, c]
            m = math.sqrt(dx * dx + dy * dy + e2)
            total += m
            fx[r, c] = dx / m
            fy[r, c] = dy / m
    return total


@njit(cache=True)
def _curv_from_fields(fx, fy, n, out):
    for r in range(1, n + 1):
        for c in range(1, n + 1):
            out[r - 1, c - 1] = fx[r, c] - fx[r, c - 1] + fy[r, c] - fy[r - 1, c]


@njit(cache=True)
def _descend(p, n, avail, resid, kidx, phi, gammas, eps, delta, trace):
    """Gradient descent on TV over the coefficients listed in ``kidx``.

    ``p`` holds the current reconstruction in its core and is updated in
    place, as is ``resid``.  Returns (iters_run, converged, initial_tv).
    """
    fx = np.zeros((n + 1, n + 1))
    fy = np.zeros((n + 1, n + 1))
    curv = np.zeros((n, n))
    nk = kidx.shape[0]
    step = np.zeros(nk)
    tv0 = _tv_fields(p, n, eps, avail, fx, fy)
    iters = 0
    converged = nk == 0
    if nk == 0:
        return 0, True, tv0
    for it in range(gammas.shape[0]):
        _curv_from_fields(fx, fy, n, curv)
        g = gammas[it]
        e2 = 0.0
        for q in range(nk):
            i = kidx[q, 0]
            j = kidx[q, 1]
            s = 0.0
            for x in range(n):
                for y in range(n):
                    s += curv[x, y] * phi[i, j, x, y]
            step[q] = g * s
            e2 += step[q] * step[q]
        for q in range(nk):
            i = kidx[q, 0]
            j = kidx[q, 1]
            resid[i, j] += step[q]
            for x in range(n):
                for y in range(n):
                    p[x + 1, y + 1] += step[q] * phi[i, j, x, y]
        _refresh_ring(p, n, avail)
        trace[it] = _tv_fields(p, n, eps, avail, fx, fy)
        iters = it + 1
        if math.sqrt(e2) <= delta:
            converged = True
            break
    return iters, converged, tv0


# --------------------------------------------------------------------------
# Public operations


def discrete_tv(patch: Patch, eps: float = DEFAULT_EPS) -> float:
    n = patch.size
    fx = np.zeros((n + 1, n + 1))
    fy = np.zeros((n + 1, n + 1))
    return _tv_fields(patch.padded, n, eps, patch.available, fx, fy)


def curvature(patch: Patch, eps: float = DEFAULT_EPS) -> np.ndarray:
    """div(grad u / sqrt(|grad u|^2 + eps^2)) on the core, equal to -dTV/du."""
    n = patch.size
    fx = np.zeros((n + 1, n + 1))
    fy = np.zeros((n + 1, n + 1))
    _tv_fields(patch.padded, n, eps, patch.available, fx, fy)
    out = np.zeros((n, n))
    _curv_from_fields(fx, fy, n, out)
    return out


def reconstruct_patch(patch: Patch, predictor, residual) -> Patch:
    """Patch whose core is ``predictor + IDCT(residual)``."""
    return patch.with_core(np.asarray(predictor) + idct2(np.asarray(residual, dtype=np.float64)))


def tv_gradient_dct(patch: Patch, predictor, residual, k=None, eps: float = DEFAULT_EPS):
    """dTV/dr_k for the reconstruction ``predictor + IDCT(residual)``.

    Returns the full N x N gradient when ``k`` is None.
    """
    u = reconstruct_patch(patch, predictor, residual)
    g = dct2(-curvature(u, eps))
    return g if k is None else float(g[k[0], k[1]])


def _mask_indices(mask, n) -> np.ndarray:
    if mask is None:
        return np.zeros((0, 2), dtype=np.int64)
    if hasattr(mask, "i_dct"):
        mask = mask.i_dct
    m = np.asarray(mask)
    if m.dtype == bool:
        if m.shape != (n, n):
            raise InvalidInputError(f"mask shape {m.shape} does not match block size {n}")
        return np.argwhere(m).astype(np.int64)
    return np.asarray(list(mask), dtype=np.int64).reshape(-1, 2)


def restore_block(patch: Patch, predictor, residual, mask, cfg: DescentConfig) -> RestoreResult:
    """Descend TV over the masked coefficients of ``residual``.

    ``patch`` supplies the ring; its core is replaced by
    ``predictor + IDCT(residual)``.  Coefficients outside the mask are
    returned untouched.
    """
    resid = np.array(residual, dtype=np.float64)
    n = resid.shape[0]
    if predictor is None:
        predictor = np.zeros((n, n))
    kidx = _mask_indices(mask, n)
    p = np.array(reconstruct_patch(patch, predictor, resid).padded)
    gammas = cfg.gammas()
    trace = np.zeros(len(gammas))
    iters, converged, tv0 = _descend(p, n, patch.available, resid, kidx, basis_functions(n),
                                     gammas, cfg.curv_eps, cfg.delta(n), trace)
    return RestoreResult(resid, int(iters), trace[:iters].copy(), bool(converged), float(tv0))


# --------------------------------------------------------------------------
# Whole-plane descent (all blocks at once, replicate boundary at the frame edge)


def plane_tv(u, eps: float = DEFAULT_EPS) -> float:
    dx = np.zeros_like(u)
    dy = np.zeros_like(u)
    dx[:, :-1] = u[:, 1:] - u[:, :-1]
    dy[:-1, :] = u[1:, :] - u[:-1, :]
    return float(np.sqrt(dx * dx + dy * dy + eps * eps).sum())


def plane_curvature(u, eps: float = DEFAULT_EPS) -> np.ndarray:
    dx = np.zeros_like(u)
    dy = np.zeros_like(u)
    dx[:, :-1] = u[:, 1:] - u[:, :-1]
    dy[:-1, :] = u[1:, :] - u[:-1, :]
    m = np.sqrt(dx * dx + dy * dy + eps * eps)
    fx = dx / m
    fy = dy / m
    out = fx + fy
    out[:, 1:] -= fx[:, :-1]
    out[1:, :] -= fy[:-1, :]
    return out


@njit(cache=True)
def _plane_fields(u, eps, fx, fy):
    """Whole-plane TV with zero differences past the last row/column."""
    h, w = u.shape
    e2 = eps * eps
    total = 0.0
    for r in range(h):
        for c in range(w):
            dx = u[r, c + 1] - u[r, c] if c + 1 < w else 0.0
            dy = u[r + 1, c] - u[r, c] if r + 1 < h else 0.0
            m = math.sqrt(dx * dx + dy * dy + e2)
            total += m
            fx[r, c] = dx / m
            fy[r, c] = dy / m
    return total


@njit(cache=True)
def _plane_descend(u, r, mask, lower, upper, boxed, phi, gammas, eps, delta, trace):
    """Jacobi-style TV descent over every masked coefficient of every block.

    ``u`` must equal predictor + IDCT(r); both are updated in place.
    Returns the number of iterations run.
    """
    h, w = u.shape
    n = phi.shape[0]
    fx = np.empty((h, w))
    fy = np.empty((h, w))
    curv = np.empty((h, w))
    steps = np.zeros(r.shape)
    iters = 0
    tv = _plane_fields(u, eps, fx, fy)
    for it in range(gammas.shape[0]):
        for y in range(h):
            for x in range(w):
                v = fx[y, x] + fy[y, x]
                if x > 0:
                    v -= fx[y, x - 1]
                if y > 0:
                    v -= fy[y - 1, x]
                curv[y, x] = v
        g = gammas[it]
        change = 0.0
        for a in range(r.shape[0]):
            for b in range(r.shape[1]):
                for i in range(n):
                    for j in range(n):
                        steps[a, b, i, j] = 0.0
                        if not mask[a, b, i, j]:
                            continue
                        s = 0.0
                        for x in range(n):
                            for y in range(n):
                                s += curv[a * n + x, b * n + y] * phi[i, j, x, y]
                        new = r[a, b, i, j] + g * s
                        if boxed:
                            new = min(max(new, lower[a, b, i, j]), upper[a, b, i, j])
                        d = new - r[a, b, i, j]
                        steps[a, b, i, j] = d
                        r[a, b, i, j] = new
                        change += d * d
                for i in range(n):
                    for j in range(n):
                        d = steps[a, b, i, j]
                        if d == 0.0:
                            continue
                        for x in range(n):
                            for y in range(n):
                                u[a * n + x, b * n + y] += d * phi[i, j, x, y]
        tv = _plane_fields(u, eps, fx, fy)
        trace[it] = tv
        iters = it + 1
        if math.sqrt(change) <= delta:
            break
    return iters


def restore_plane(coeffs, mask, cfg: DescentConfig, lower=None, upper=None, predictor=None):
    """Joint TV descent over masked coefficients of every block of a plane.

    ``coeffs`` has shape (H/N, W/N, N, N); ``mask`` broadcasts against it.
    Optional ``lower``/``upper`` bounds project each coefficient back into
    its box after every step.  Returns (coeffs, tv_trace).
    """
    r = np.array(coeffs, dtype=np.float64)
    n = r.shape[-1]
    mask = np.ascontiguousarray(np.broadcast_to(np.asarray(mask, dtype=bool), r.shape))
    if not mask.any():
        return r, np.zeros(0)
    u = plane_idct(r)
    if predictor is not None:
        u = u + np.asarray(predictor, dtype=np.float64)
    u = np.ascontiguousarray(u)
    boxed = lower is not None
    if boxed:
        lower = np.ascontiguousarray(np.broadcast_to(lower, r.shape), dtype=np.float64)
        upper = np.ascontiguousarray(np.broadcast_to(upper, r.shape), dtype=np.float64)
        r = np.clip(r, lower, upper)
        u = np.ascontiguousarray(plane_idct(r) + (0.0 if predictor is None else predictor))
    else:
        lower = upper = np.zeros((1, 1, 1, 1))
    gammas = cfg.gammas()
    trace = np.zeros(len(gammas))
    delta = cfg.delta(n) * math.sqrt(r.shape[0] * r.shape[1])
    iters = _plane_descend(u, r, mask, lower, upper, boxed, basis_functions(n), gammas,
                           cfg.curv_eps, delta, trace)
    return r, trace[:iters].copy()


def optimal_descent() -> DescentConfig:
    """Short fixed-step flow; running TV to convergence inside wide bins over-smooths texture."""
    return DescentConfig(gamma0=0.25, max_iters=10, stationarity_eps=0.0)


def optimal_reconstruct(levels, table, cfg: Optional[DescentConfig] = None) -> np.ndarray:
    """Decoder-side TV descent over all AC coefficients, kept inside their quantization bins.

    ``levels`` are integer quantization levels shaped (H/N, W/N, N, N) and
    ``table`` the N x N step table.  Returns the restored pixel array.
    """
    cfg = cfg or optimal_descent()
    levels = np.asarray(levels)
    table = np.asarray(table, dtype=np.float64)
    r0 = levels * table
    n = levels.shape[-1]
    mask = np.ones((n, n), dtype=bool)
    mask[0, 0] = False
    lower = r0 - table / 2
    upper = r0 + table / 2
    r, _ = restore_plane(r0, mask, cfg, lower, upper)
    return plane_idct(r)
