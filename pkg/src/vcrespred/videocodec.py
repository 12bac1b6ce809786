"""Intra-only block video coder with DCT-residual prediction.

Blocks are coded in raster order.  Each block is predicted spatially by one
of the nine H.264-style directional modes; the DCT of the residual is
quantized with a uniform QP step.  With VCResPred enabled, a per-mode set of
residual coefficients is predicted one at a time by TV descent over a
causal patch (top, left and top-right neighbours decoded), lowest frequency
first.  Only the quantized prediction error is coded, and each reconstructed
coefficient joins the support for the next one.  Mode signalling and the
stream header are the same with or without the extra stage.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit

from .blocks import (
    PixelPlane,
    QuantKind,
    ScanKind,
    basis_functions,
    dct2,
    idct2,
    make_scan,
    qp_step,
    round_half_away,
)
from .entropy import (
    CODEC_INTRA_VIDEO,
    FLAG_PER_MODE_MASKS,
    FLAG_VCRESPRED,
    BinCounter,
    RangeDecoder,
    RangeEncoder,
    StreamHeader,
    decode_levels,
    decode_mode,
    encode_levels,
    encode_mode,
    most_probable_mode,
    new_contexts,
    pack_stream,
    unpack_stream,
)
from .errors import InvalidInputError, StreamError
from .tvcore import CAUSAL, LEFT, TOP, TOP_RIGHT, DescentConfig, _refresh_ring

N_MODES = 9
MODE_NAMES = (
    "vertical", "horizontal", "dc", "diag_down_left", "diag_down_right",
    "vertical_right", "horizontal_down", "vertical_left", "horizontal_up",
)
_NEEDS_TOP = (0, 3, 4, 5, 6, 7)
_NEEDS_LEFT = (1, 4, 5, 6, 8)


def block_size_for(width: int) -> int:
    return 8 if width >= 832 else 4


# --------------------------------------------------------------------------
# Spatial prediction


@njit(cache=True)
def _px(top, left, corner, x, y):
    """Neighbour sample at (x, y) in H.264 notation: y == -1 is the top row."""
    if y < 0:
        return corner if x < 0 else top[x]
    return left[y]


@njit(cache=True)
def _predict(mode, top, left, corner, n, has_top, has_left, out):
    for y in range(n):
        for x in range(n):
            if mode == 0:
                v = top[x]
            elif mode == 1:
                v = left[y]
            elif mode == 2:
                s = 0
                if has_top and has_left:
                    for k in range(n):
                        s += top[k] + left[k]
                    v = (s + n) // (2 * n)
                elif has_top:
                    for k in range(n):
                        s += top[k]
                    v = (s + n // 2) // n
                elif has_left:
                    for k in range(n):
                        s += left[k]
                    v = (s + n // 2) // n
                else:
                    v = 128
            elif mode == 3:
                if x == n - 1 and y == n - 1:
                    v = (top[2 * n - 2] + 3 * top[2 * n - 1] + 2) >> 2
                else:
                    v = (top[x + y] + 2 * top[x + y + 1] + top[x + y + 2] + 2) >> 2
            elif mode == 4:
                if x > y:
                    v = (_px(top, left, corner, x - y - 2, -1) + 2 * _px(top, left, corner, x - y - 1, -1)
                         + _px(top, left, corner, x - y, -1) + 2) >> 2
                elif x < y:
                    v = (_px(top, left, corner, -1, y - x - 2) + 2 * _px(top, left, corner, -1, y - x - 1)
                         + _px(top, left, corner, -1, y - x) + 2) >> 2
                else:
                    v = (top[0] + 2 * corner + left[0] + 2) >> 2
            elif mode == 5:
                z = 2 * x - y
                if z >= 0 and z % 2 == 0:
                    a = x - (y >> 1)
                    v = (_px(top, left, corner, a - 1, -1) + _px(top, left, corner, a, -1) + 1) >> 1
                elif z > 0:
                    a = x - (y >> 1)
                    v = (_px(top, left, corner, a - 2, -1) + 2 * _px(top, left, corner, a - 1, -1)
                         + _px(top, left, corner, a, -1) + 2) >> 2
                elif z == -1:
                    v = (left[0] + 2 * corner + top[0] + 2) >> 2
                else:
                    b = y - 2 * x
                    v = (_px(top, left, corner, -1, b - 1) + 2 * _px(top, left, corner, -1, b - 2)
                         + _px(top, left, corner, -1, b - 3) + 2) >> 2
            elif mode == 6:
                z = 2 * y - x
                if z >= 0 and z % 2 == 0:
                    a = y - (x >> 1)
                    v = (_px(top, left, corner, -1, a - 1) + _px(top, left, corner, -1, a) + 1) >> 1
                elif z > 0:
                    a = y - (x >> 1)
                    v = (_px(top, left, corner, -1, a - 2) + 2 * _px(top, left, corner, -1, a - 1)
                         + _px(top, left, corner, -1, a) + 2) >> 2
                elif z == -1:
                    v = (left[0] + 2 * corner + top[0] + 2) >> 2
                else:
                    b = x - 2 * y
                    v = (_px(top, left, corner, b - 1, -1) + 2 * _px(top, left, corner, b - 2, -1)
                         + _px(top, left, corner, b - 3, -1) + 2) >> 2
            elif mode == 7:
                a = x + (y >> 1)
                if y % 2 == 0:
                    v = (top[a] + top[a + 1] + 1) >> 1
                else:
                    v = (top[a] + 2 * top[a + 1] + top[a + 2] + 2) >> 2
            else:
                z = x + 2 * y
                if z > 2 * n - 3:
                    v = left[n - 1]
                elif z == 2 * n - 3:
                    v = (left[n - 2] + 3 * left[n - 1] + 2) >> 2
                else:
                    a = y + (x >> 1)
                    if z % 2 == 0:
                        v = (left[a] + left[a + 1] + 1) >> 1
                    else:
                        v = (left[a] + 2 * left[a + 1] + left[a + 2] + 2) >> 2
            out[y, x] = v


@njit(cache=True)
def _mode_allowed(mode, has_top, has_left):
    if mode in (0, 3, 7):
        return has_top
    if mode in (1, 8):
        return has_left
    if mode in (4, 5, 6):
        return has_top and has_left
    return True


@njit(cache=True)
def _choose(block, top, left, corner, n, has_top, has_left):
    pred = np.empty((n, n), dtype=np.int64)
    best = -1
    best_sad = 0
    for mode in range(9):
        if not _mode_allowed(mode, has_top, has_left):
            continue
        _predict(mode, top, left, corner, n, has_top, has_left, pred)
        sad = 0
        for y in range(n):
            for x in range(n):
                sad += abs(block[y, x] - pred[y, x])
        if best < 0 or sad < best_sad:
            best = mode
            best_sad = sad
    return best


@dataclass(frozen=True)
class Neighbors:
    """Samples A..H (``top``, 2N long), I..L (``left``) and M (``corner``)."""

    top: np.ndarray
    left: np.ndarray
    corner: int
    has_top: bool
    has_left: bool
    has_top_right: bool

    @property
    def size(self) -> int:
        return len(self.left)

    @classmethod
    def from_plane(cls, samples, row: int, col: int, n: int, top_right_ok: bool = True) -> "Neighbors":
        """Gather and substitute neighbours of the block at pixel (row, col)."""
        h, w = samples.shape
        has_top = row > 0
        has_left = col > 0
        has_tr = has_top and col + n < w and top_right_ok
        top = np.full(2 * n, 128, dtype=np.int64)
        left = np.full(n, 128, dtype=np.int64)
        corner = 128
        if has_top:
            top[:n] = samples[row - 1, col:col + n]
            top[n:] = samples[row - 1, col + n:col + 2 * n] if has_tr else top[n - 1]
        if has_left:
            left[:] = samples[row:row + n, col - 1]
        if has_top and has_left:
            corner = int(samples[row - 1, col - 1])
        return cls(top, left, corner, has_top, has_left, has_tr)

    @classmethod
    def make(cls, top=None, left=None, corner=None, n: int = 4) -> "Neighbors":
        """Explicit neighbours; missing parts are substituted with 128."""
        has_top = top is not None
        has_left = left is not None
        t = np.full(2 * n, 128, dtype=np.int64)
        has_tr = False
        if has_top:
            top = np.asarray(top, dtype=np.int64)
            t[:len(top)] = top
            has_tr = len(top) >= 2 * n
            if not has_tr:
                t[n:] = t[n - 1]
        l = np.full(n, 128, dtype=np.int64) if left is None else np.asarray(left, dtype=np.int64)
        m = 128 if corner is None or not (has_top and has_left) else int(corner)
        return cls(t, l, m, has_top, has_left, has_tr)


def available_modes(nb: Neighbors) -> list:
    return [m for m in range(N_MODES) if _mode_allowed(m, nb.has_top, nb.has_left)]


def intra_predict(mode: int, nb: Neighbors) -> np.ndarray:
    """Directional prediction of an N x N block from its neighbours."""
    if not 0 <= int(mode) < N_MODES:
        raise InvalidInputError(f"intra mode {mode} out of range")
    n = nb.size
    out = np.empty((n, n), dtype=np.int64)
    _predict(int(mode), nb.top, nb.left, nb.corner, n, nb.has_top, nb.has_left, out)
    return out


def choose_mode(block, nb: Neighbors) -> int:
    """Minimum-SAD mode among those whose neighbours exist; ties go to the smaller id."""
    b = np.asarray(block, dtype=np.int64)
    return int(_choose(b, nb.top, nb.left, nb.corner, nb.size, nb.has_top, nb.has_left))


# --------------------------------------------------------------------------
# Mode -> predicted coefficient set


@dataclass(frozen=True)
class ModeEntry:
    mask: tuple  # predicted positions, in prediction order
    scan: ScanKind

    @property
    def order(self) -> tuple:
        return self.mask


@dataclass(frozen=True)
class ModeMaskTable:
    """Per (block size, mode) predicted coefficients and scan; plus a static entry per size."""

    entries: dict = field(repr=False)

    def __post_init__(self):
        clean = {}
        for key, (mask, scan) in self.entries.items():
            n = key[0]
            scan = ScanKind(scan)
            rank = {p: r for r, p in enumerate(make_scan(scan, n).positions)}
            pos = [tuple(int(v) for v in p) for p in mask]
            if len(set(pos)) != len(pos):
                raise InvalidInputError(f"duplicate position in mask for {key}")
            for p in pos:
                if p not in rank:
                    raise InvalidInputError(f"position {p} outside a {n}x{n} block")
            # predicted low frequency first along the mode's scan
            clean[key] = ModeEntry(tuple(sorted(pos, key=rank.__getitem__)), scan)
        object.__setattr__(self, "entries", clean)

    def entry(self, n: int, mode) -> ModeEntry:
        try:
            return self.entries[(n, mode)]
        except KeyError:
            raise InvalidInputError(f"no mask table entry for size {n}, mode {mode}") from None

    @classmethod
    def from_dict(cls, data: dict) -> "ModeMaskTable":
        entries = {}
        for size, modes in data.items():
            n = int(size)
            for mode, spec in modes.items():
                key = "static" if mode == "static" else int(mode)
                entries[(n, key)] = (spec["mask"], spec["scan"])
        return cls(entries)

    def to_dict(self) -> dict:
        out = {}
        for (n, mode), e in sorted(self.entries.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
            out.setdefault(str(n), {})[str(mode)] = {"mask": [list(p) for p in e.mask], "scan": e.scan.value}
        return out

    @classmethod
    def load(cls, path=None) -> "ModeMaskTable":
        if path is None:
            text = resources.files("vcrespred").joinpath("data/mode_masks.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# Coefficient prediction kernel (shared by encoder and decoder)


@njit(cache=True)
def _rha(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@njit(cache=True)
def _descend_one(p, n, avail, beta, i, j, phi, gammas, eps, delta, fx, fy):
    """Descent on a single coefficient; same arithmetic as tvcore._descend, without the TV trace."""
    e2 = eps * eps
    top = (avail & TOP) != 0
    left = (avail & LEFT) != 0
    for it in range(gammas.shape[0] + 1):
        # normalized gradient field of the current patch
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
                fx[r, c] = dx / m
                fy[r, c] = dy / m
        if it == gammas.shape[0]:
            break
        s = 0.0
        for x in range(n):
            for y in range(n):
                cv = fx[x + 1, y + 1] - fx[x + 1, y] + fy[x + 1, y + 1] - fy[x, y + 1]
                s += cv * phi[i, j, x, y]
        st = gammas[it] * s
        beta[i, j] += st
        for x in range(n):
            for y in range(n):
                p[x + 1, y + 1] += st * phi[i, j, x, y]
        _refresh_ring(p, n, avail)
        if abs(st) <= delta:
            break


@njit(cache=True)
def _hier_predict(p, n, avail, beta, order, err, step, encode, r_true, phi, gammas, eps, delta,
                  support):
    """Predict the coefficients of ``order`` one by one.

    ``p`` is the padded patch whose core holds predictor + IDCT(beta);
    ``beta`` holds decoded residual coefficients on the support and 0 on the
    positions still to predict.  Encoding fills ``err`` with quantized
    prediction errors; decoding reads them.  On return ``beta`` is the
    decoded residual.  ``support[q]`` counts support positions seen by the
    q-th prediction (instrumentation).
    """
    _refresh_ring(p, n, avail)
    fx = np.zeros((n + 1, n + 1))
    fy = np.zeros((n + 1, n + 1))
    n_support = n * n - order.shape[0]
    for q in range(order.shape[0]):
        i = order[q, 0]
        j = order[q, 1]
        support[q] = n_support
        _descend_one(p, n, avail, beta, i, j, phi, gammas, eps, delta, fx, fy)
        b = beta[i, j]
        if encode:
            err[q] = np.int64(_rha((r_true[i, j] - b) / step))
        new = b + err[q] * step
        d = new - b
        beta[i, j] = new
        for x in range(n):
            for y in range(n):
                p[x + 1, y + 1] += d * phi[i, j, x, y]
        n_support += 1


# --------------------------------------------------------------------------
# Block coding


@dataclass(frozen=True)
class VideoCodecConfig:
    """Inner descent for each predicted coefficient (K = ``max_iters``).

    The step is absolute, not tied to the quantizer: a decaying step of a
    few tenths keeps the coefficient near the TV minimizer without the
    oscillation a large fixed step produces around the kink.
    """

    gamma0: float = 0.2
    gamma_schedule: str = "harmonic"
    max_iters: int = 100
    curv_eps: float = 1e-3
    stationarity_eps: float | None = None

    def descent(self, step: float = 1.0) -> DescentConfig:
        return DescentConfig(gamma0=self.gamma0, gamma_schedule=self.gamma_schedule,
                             max_iters=self.max_iters, curv_eps=self.curv_eps,
                             stationarity_eps=self.stationarity_eps)


@dataclass
class FrameCodingState:
    """Decoded-so-far plane, chosen modes and per-block bin counts."""

    recon: np.ndarray
    n: int
    modes: np.ndarray = None
    coded_bins: np.ndarray = None
    baseline_bins: np.ndarray = None

    def __post_init__(self):
        rows, cols = self.recon.shape[0] // self.n, self.recon.shape[1] // self.n
        if self.modes is None:
            self.modes = np.full((rows, cols), -1, dtype=np.int64)
        if self.coded_bins is None:
            self.coded_bins = np.zeros((rows, cols), dtype=np.int64)
        if self.baseline_bins is None:
            self.baseline_bins = np.full((rows, cols), -1, dtype=np.int64)

    @classmethod
    def empty(cls, height: int, width: int, n: int) -> "FrameCodingState":
        return cls(np.zeros((height, width)), n)

    def neighbors(self, br: int, bc: int) -> Neighbors:
        return Neighbors.from_plane(self.recon, br * self.n, bc * self.n, self.n)

    def patch(self, br: int, bc: int, pred) -> tuple:
        """Padded causal patch (core = pred) and its availability mask."""
        n = self.n
        r0, c0 = br * n, bc * n
        h, w = self.recon.shape
        p = np.zeros((n + 2, n + 2))
        p[1:-1, 1:-1] = pred
        avail = 0
        if r0 > 0:
            avail |= TOP
            p[0, 1:-1] = self.recon[r0 - 1, c0:c0 + n]
            if c0 + n < w:
                avail |= TOP_RIGHT
                p[0, -1] = self.recon[r0 - 1, c0 + n]
        if c0 > 0:
            avail |= LEFT
            p[1:-1, 0] = self.recon[r0:r0 + n, c0 - 1]
        return p, avail & CAUSAL


@dataclass
class BlockCoding:
    levels: np.ndarray  # N x N; prediction errors at predicted positions
    residual: np.ndarray  # decoded residual coefficients
    recon: np.ndarray
    proof: str
    support_sizes: tuple = ()


def sync_proof(recon: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(recon, dtype=np.float64).tobytes()).hexdigest()[:16]


def _finish_block(pred, resid):
    return np.clip(round_half_away(pred + idct2(resid)), 0, 255)


def _run_prediction(state, br, bc, pred, beta, entry, err, step, encode, r_true, cfg):
    n = state.n
    order = np.array(entry.order, dtype=np.int64).reshape(-1, 2)
    p, avail = state.patch(br, bc, pred + idct2(beta))
    d = cfg.descent(step)
    support = np.zeros(len(order), dtype=np.int64)
    _hier_predict(p, n, avail, beta, order, err, step, encode, r_true, basis_functions(n),
                  d.gammas(), d.curv_eps, d.delta(n), support)
    return tuple(support.tolist())


def vcrespred_encode_block(block, mode: int, state: FrameCodingState, br: int, bc: int,
                           step: float, entry: ModeEntry | None, cfg: VideoCodecConfig) -> BlockCoding:
    """Code one block.  ``entry`` None (or an empty mask) is the baseline path."""
    n = state.n
    nb = state.neighbors(br, bc)
    pred = intra_predict(mode, nb).astype(np.float64)
    r = dct2(np.asarray(block, dtype=np.float64) - pred)
    levels = round_half_away(r / step).astype(np.int64)
    support = ()
    if entry is None or not entry.mask:
        resid = levels * step
    else:
        predicted = np.zeros((n, n), dtype=bool)
        for pos in entry.mask:
            predicted[pos] = True
        beta = np.where(predicted, 0.0, levels * step)
        err = np.zeros(len(entry.mask), dtype=np.int64)
        support = _run_prediction(state, br, bc, pred, beta, entry, err, step, True, r, cfg)
        for q, pos in enumerate(entry.mask):
            levels[pos] = err[q]
        resid = beta
    recon = _finish_block(pred, resid)
    return BlockCoding(levels, resid, recon, sync_proof(recon), support)


def vcrespred_decode_block(levels, mode: int, state: FrameCodingState, br: int, bc: int,
                           step: float, entry: ModeEntry | None, cfg: VideoCodecConfig) -> BlockCoding:
    n = state.n
    levels = np.asarray(levels, dtype=np.int64)
    pred = intra_predict(mode, state.neighbors(br, bc)).astype(np.float64)
    support = ()
    if entry is None or not entry.mask:
        resid = levels * step
    else:
        predicted = np.zeros((n, n), dtype=bool)
        for pos in entry.mask:
            predicted[pos] = True
        beta = np.where(predicted, 0.0, levels * step)
        err = np.array([levels[pos] for pos in entry.mask], dtype=np.int64)
        support = _run_prediction(state, br, bc, pred, beta, entry, err, step, False, beta, cfg)
        resid = beta
    recon = _finish_block(pred, resid)
    return BlockCoding(levels, resid, recon, sync_proof(recon), support)


# --------------------------------------------------------------------------
# Frames and streams


@dataclass
class SymbolCostMap:
    """Per-block context-coded residual bins: with the prediction stage and without it."""

    coded: np.ndarray
    baseline: np.ndarray

    @property
    def delta(self) -> np.ndarray:
        return self.coded - self.baseline

    def state(self) -> np.ndarray:
        """-1 where prediction saves bins, 0 where neutral, +1 where it costs more."""
        return np.sign(self.delta)

    def to_csv(self, path) -> None:
        rows, cols = self.coded.shape
        with open(path, "w") as fh:
            fh.write("row,col,coded,baseline\n")
            for r in range(rows):
                for c in range(cols):
                    fh.write(f"{r},{c},{self.coded[r, c]},{self.baseline[r, c]}\n")

    @classmethod
    def from_csv(cls, path) -> "SymbolCostMap":
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        rows, cols = data[:, 0].max() + 1, data[:, 1].max() + 1
        coded = np.zeros((rows, cols), dtype=np.int64)
        base = np.zeros((rows, cols), dtype=np.int64)
        coded[data[:, 0], data[:, 1]] = data[:, 2]
        base[data[:, 0], data[:, 1]] = data[:, 3]
        return cls(coded, base)


@dataclass
class FrameReport:
    recon: PixelPlane
    modes: np.ndarray
    costmap: SymbolCostMap | None
    mode_bins: int
    residual_bins: int


def _entry_for(flags: int, table: ModeMaskTable, n: int, mode: int):
    if not flags & FLAG_VCRESPRED:
        return None
    return table.entry(n, mode if flags & FLAG_PER_MODE_MASKS else "static")


def _scan_for(entry) -> np.ndarray:
    return entry.scan if entry is not None else ScanKind.ZIGZAG


_SCAN_CACHE = {}


def _scan_index(kind: ScanKind, n: int):
    key = (kind, n)
    if key not in _SCAN_CACHE:
        pos = make_scan(kind, n).positions
        _SCAN_CACHE[key] = (np.array([p[0] for p in pos]), np.array([p[1] for p in pos]))
    return _SCAN_CACHE[key]


def _mode_context(modes, br, bc):
    left = int(modes[br, bc - 1]) if bc > 0 else None
    top = int(modes[br - 1, bc]) if br > 0 else None
    return most_probable_mode(left, top)


def _encode_frame_into(enc, samples, n, qp, flags, table, cfg, costmap: bool):
    h, w = samples.shape
    step = qp_step(qp)
    state = FrameCodingState.empty(h, w, n)
    ctx = new_contexts()
    zz = _scan_index(ScanKind.ZIGZAG, n)
    mode_bins = 0
    residual_bins = 0
    src = samples.astype(np.int64)
    for br in range(h // n):
        for bc in range(w // n):
            r0, c0 = br * n, bc * n
            block = samples[r0:r0 + n, c0:c0 + n]
            # open-loop decision on source neighbours keeps mode bins independent of the residual stage
            mode = choose_mode(src[r0:r0 + n, c0:c0 + n], Neighbors.from_plane(src, r0, c0, n))
            entry = _entry_for(flags, table, n, mode)
            coding = vcrespred_encode_block(block, mode, state, br, bc, step, entry, cfg)
            before = enc.context_bins
            encode_mode(enc, ctx, mode, _mode_context(state.modes, br, bc))
            mid = enc.context_bins
            si = _scan_index(_scan_for(entry), n)
            encode_levels(enc, ctx, coding.levels[si].tolist())
            mode_bins += mid - before
            residual_bins += enc.context_bins - mid
            state.coded_bins[br, bc] = enc.context_bins - mid
            if costmap:
                if entry is None:
                    state.baseline_bins[br, bc] = state.coded_bins[br, bc]
                else:
                    shadow = BinCounter()
                    nb = state.neighbors(br, bc)
                    r = dct2(block - intra_predict(mode, nb))
                    encode_levels(shadow, new_contexts(), round_half_away(r / step).astype(np.int64)[zz].tolist())
                    state.baseline_bins[br, bc] = shadow.context_bins
            state.modes[br, bc] = mode
            state.recon[r0:r0 + n, c0:c0 + n] = coding.recon
    cm = SymbolCostMap(state.coded_bins.copy(), state.baseline_bins.copy()) if costmap else None
    return FrameReport(PixelPlane(state.recon.copy()), state.modes.copy(), cm, mode_bins, residual_bins)


def _decode_frame_from(dec, h, w, n, qp, flags, table, cfg, frame_index=0):
    step = qp_step(qp)
    state = FrameCodingState.empty(h, w, n)
    ctx = new_contexts()
    br = bc = 0
    try:
        for br in range(h // n):
            for bc in range(w // n):
                mode = decode_mode(dec, ctx, _mode_context(state.modes, br, bc))
                entry = _entry_for(flags, table, n, mode)
                flat = decode_levels(dec, ctx, n * n)
                levels = np.zeros((n, n), dtype=np.int64)
                levels[_scan_index(_scan_for(entry), n)] = flat
                coding = vcrespred_decode_block(levels, mode, state, br, bc, step, entry, cfg)
                state.modes[br, bc] = mode
                state.recon[br * n:(br + 1) * n, bc * n:(bc + 1) * n] = coding.recon
    except StreamError as exc:
        raise StreamError(f"{exc} in frame {frame_index}, block (row {br}, col {bc})",
                          position=(frame_index, br * n, bc * n)) from None
    return PixelPlane(state.recon), state.modes


def _validate(samples, n):
    h, w = samples.shape
    if h % n or w % n or h == 0 or w == 0:
        raise InvalidInputError(f"frame {w}x{h} is not a multiple of the block size {n}")
    if h > 0xFFFF or w > 0xFFFF:
        raise InvalidInputError("frame too large for the container")


def _flags(vcrespred: bool, per_mode: bool = True) -> int:
    return (FLAG_VCRESPRED if vcrespred else 0) | (FLAG_PER_MODE_MASKS if vcrespred and per_mode else 0)


@dataclass
class SequenceReport:
    bits: int
    frames: list  # FrameReport per frame

    @property
    def mode_bins(self) -> int:
        return sum(f.mode_bins for f in self.frames)


def encode_sequence(frames, qp: int, flags: int, table: ModeMaskTable | None = None,
                    cfg: VideoCodecConfig | None = None, costmap: bool = False, block_size=None):
    """Encode luma planes as one intra-only stream.  Returns (stream, SequenceReport)."""
    if not 0 <= qp <= 51:
        raise InvalidInputError(f"QP {qp} outside 0..51")
    table = table or ModeMaskTable.load()
    cfg = cfg or VideoCodecConfig()
    planes = [np.asarray(getattr(f, "samples", f), dtype=np.float64) for f in frames]
    if not planes:
        raise InvalidInputError("no frames to encode")
    h, w = planes[0].shape
    n = block_size or block_size_for(w)
    enc = RangeEncoder()
    reports = []
    for s in planes:
        if s.shape != (h, w):
            raise InvalidInputError("all frames must share one size")
        _validate(s, n)
        reports.append(_encode_frame_into(enc, s, n, qp, flags, table, cfg, costmap))
    header = StreamHeader(CODEC_INTRA_VIDEO, w, h, n, int(QuantKind.QP_UNIFORM), qp, flags, len(planes))
    stream = pack_stream(header, enc.finish())
    return stream, SequenceReport(8 * len(stream), reports)


def decode_sequence(stream: bytes, table: ModeMaskTable | None = None,
                    cfg: VideoCodecConfig | None = None) -> list:
    header, payload = unpack_stream(stream)
    if header.codec_id != CODEC_INTRA_VIDEO:
        raise StreamError("not an intra video stream", position=1)
    n = header.block_size
    if n not in (4, 8) or header.width % n or header.height % n or not header.width or not header.height:
        raise StreamError("invalid frame geometry in header", position=10)
    if header.quant_value > 51:
        raise StreamError("QP out of range in header", position=12)
    table = table or ModeMaskTable.load()
    cfg = cfg or VideoCodecConfig()
    dec = RangeDecoder(payload)
    out = []
    for f in range(header.frame_count):
        plane, _ = _decode_frame_from(dec, header.height, header.width, n, header.quant_value,
                                      header.flags, table, cfg, f)
        out.append(plane)
    return out


def encode_frame(plane, qp: int, flags: int, table=None, cfg=None, costmap: bool = True):
    """Single-frame stream plus its per-block SymbolCostMap."""
    stream, rep = encode_sequence([plane], qp, flags, table, cfg, costmap)
    return stream, rep.frames[0].costmap, rep


def decode_frame(stream: bytes, table=None, cfg=None) -> PixelPlane:
    frames = decode_sequence(stream, table, cfg)
    if len(frames) != 1:
        raise StreamError(f"expected one frame, found {len(frames)}")
    return frames[0]


# --------------------------------------------------------------------------
# Y4M


@dataclass
class Y4MInfo:
    width: int
    height: int
    fps: float
    chroma: str


def _chroma_size(tag: str, w: int, h: int) -> int:
    cw, ch = (w + 1) // 2, (h + 1) // 2
    if tag.startswith("420"):
        return 2 * cw * ch
    if tag.startswith("422"):
        return 2 * cw * h
    if tag.startswith("444"):
        return 2 * w * h
    if tag.startswith("mono"):
        return 0
    raise InvalidInputError(f"unsupported Y4M colour space C{tag}")


def read_y4m(path, max_frames: int | None = None):
    """Return (Y4MInfo, list of luma PixelPlanes); chroma is discarded."""
    data = Path(path).read_bytes()
    end = data.find(b"\n")
    if not data.startswith(b"YUV4MPEG2") or end < 0:
        raise InvalidInputError(f"{path}: not a YUV4MPEG2 file")
    w = h = None
    fps = 25.0
    chroma = "420jpeg"
    for tok in data[:end].decode("ascii").split()[1:]:
        key, val = tok[0], tok[1:]
        if key == "W":
            w = int(val)
        elif key == "H":
            h = int(val)
        elif key == "F":
            num, den = val.split(":")
            fps = int(num) / int(den)
        elif key == "C":
            chroma = val
    if not w or not h:
        raise InvalidInputError(f"{path}: missing frame size")
    csize = _chroma_size(chroma, w, h)
    frames = []
    pos = end + 1
    while pos < len(data) and (max_frames is None or len(frames) < max_frames):
        eol = data.find(b"\n", pos)
        if eol < 0 or not data.startswith(b"FRAME", pos):
            raise InvalidInputError(f"{path}: bad frame marker at byte {pos}")
        pos = eol + 1
        if pos + w * h + csize > len(data):
            raise InvalidInputError(f"{path}: truncated frame {len(frames)}")
        y = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)
        frames.append(PixelPlane(y.astype(np.float64)))
        pos += w * h + csize
    return Y4MInfo(w, h, fps, chroma), frames


def write_y4m(path, planes, fps: float = 25.0) -> None:
    """Write luma planes with neutral 4:2:0 chroma."""
    planes = list(planes)
    if not planes:
        raise InvalidInputError("no frames to write")
    h, w = planes[0].samples.shape
    num, den = (int(round(fps * 1000)), 1000) if fps != int(fps) else (int(fps), 1)
    chroma = bytes([128]) * _chroma_size("420jpeg", w, h)
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{w} H{h} F{num}:{den} Ip A1:1 C420jpeg\n".encode())
        for p in planes:
            fh.write(b"FRAME\n")
            fh.write(p.to_uint8().tobytes())
            fh.write(chroma)
