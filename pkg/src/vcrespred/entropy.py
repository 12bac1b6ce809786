"""Binary range coder, residual/mode syntax, and the VCRP container format.

The arithmetic coder is a carry-propagating range coder over 32-bit
registers with 12-bit adaptive probabilities (shift update).  It is not
CABAC-compatible; it only needs to be a good, exactly invertible adaptive
binary coder shared by every codec path.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import InvalidInputError, StreamError

PROB_BITS = 12
PROB_ONE = 1 << PROB_BITS
PROB_INIT = PROB_ONE // 2
ADAPT_SHIFT = 5
TOP = 1 << 24
MASK32 = 0xFFFFFFFF

MAX_LEVEL = 1 << 15
UNARY_CUTOFF = 14


class BitstreamWriter:
    """MSB-first bit packer for fixed-width header fields."""

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0

    def write_bits(self, value: int, nbits: int) -> None:
        if value < 0 or value >= 1 << nbits:
            raise InvalidInputError(f"{value} does not fit in {nbits} bits")
        for shift in range(nbits - 1, -1, -1):
            self._acc = (self._acc << 1) | ((value >> shift) & 1)
            self._nbits += 1
            if self._nbits == 8:
                self._buf.append(self._acc)
                self._acc = 0
                self._nbits = 0

    def write_bytes(self, data: bytes) -> None:
        for b in data:
            self.write_bits(b, 8)

    def getvalue(self) -> bytes:
        if self._nbits:
            return bytes(self._buf) + bytes([self._acc << (8 - self._nbits)])
        return bytes(self._buf)


class BitstreamReader:
    def __init__(self, data: bytes, offset: int = 0):
        self._data = data
        self._pos = offset * 8

    @property
    def byte_position(self) -> int:
        return (self._pos + 7) // 8

    def read_bits(self, nbits: int) -> int:
        if self._pos + nbits > len(self._data) * 8:
            raise StreamError("bitstream truncated", position=self._pos // 8)
        value = 0
        for _ in range(nbits):
            byte = self._data[self._pos >> 3]
            value = (value << 1) | ((byte >> (7 - (self._pos & 7))) & 1)
            self._pos += 1
        return value

    def read_bytes(self, n: int) -> bytes:
        return bytes(self.read_bits(8) for _ in range(n))


# --------------------------------------------------------------------------
# Range coder


class RangeEncoder:
    """Adaptive binary range encoder.

    ``probs`` arguments are mutable lists of 12-bit probabilities of a zero
    bin; each context-coded bin updates its slot in place.
    """

    def __init__(self):
        self.low = 0
        self.range = MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self.context_bins = 0
        self.bypass_bins = 0

    @property
    def bins(self) -> int:
        return self.context_bins + self.bypass_bins

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = self._cache
            while True:
                self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if not self._cache_size:
                    break
            self._cache = (low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (low << 8) & MASK32

    def encode(self, bit: int, probs: list, idx: int) -> None:
        p = probs[idx]
        bound = (self.range >> PROB_BITS) * p
        if bit:
            self.low += bound
            self.range -= bound
            probs[idx] = p - (p >> ADAPT_SHIFT)
        else:
            self.range = bound
            probs[idx] = p + ((PROB_ONE - p) >> ADAPT_SHIFT)
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self._shift_low()
        self.context_bins += 1

    def encode_bypass(self, bit: int) -> None:
        self.range >>= 1
        if bit:
            self.low += self.range
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self._shift_low()
        self.bypass_bins += 1

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self.range = MASK32
        self.code = 0
        self.context_bins = 0
        self.bypass_bins = 0
        for _ in range(5):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise StreamError("arithmetic payload truncated", position=self._pos)
        b = self._data[self._pos]
        self._pos += 1
        return b

    @property
    def bins(self) -> int:
        return self.context_bins + self.bypass_bins

    def decode(self, probs: list, idx: int) -> int:
        p = probs[idx]
        bound = (self.range >> PROB_BITS) * p
        if self.code < bound:
            self.range = bound
            probs[idx] = p + ((PROB_ONE - p) >> ADAPT_SHIFT)
            bit = 0
        else:
            self.code -= bound
            self.range -= bound
            probs[idx] = p - (p >> ADAPT_SHIFT)
            bit = 1
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self.code = ((self.code << 8) | self._next_byte()) & MASK32
        self.context_bins += 1
        return bit

    def decode_bypass(self) -> int:
        self.range >>= 1
        if self.code >= self.range:
            self.code -= self.range
            bit = 1
        else:
            bit = 0
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self.code = ((self.code << 8) | self._next_byte()) & MASK32
        self.bypass_bins += 1
        return bit


class BinCounter:
    """Encoder stand-in that only counts bins (for shadow cost measurements)."""

    def __init__(self):
        self.context_bins = 0
        self.bypass_bins = 0

    @property
    def bins(self) -> int:
        return self.context_bins + self.bypass_bins

    def encode(self, bit, probs, idx):
        self.context_bins += 1

    def encode_bypass(self, bit):
        self.bypass_bins += 1


# --------------------------------------------------------------------------
# Residual syntax

N_CLASSES = 4
_CBF = 0
_SIG = 1
_LAST = _SIG + N_CLASSES
_GT1 = _LAST + N_CLASSES
_REST = _GT1 + N_CLASSES
_MPM = _REST + N_CLASSES
_REM_MODE = _MPM + 1
N_CONTEXTS = _REM_MODE + 1


def new_contexts() -> list:
    return [PROB_INIT] * N_CONTEXTS


def _pos_class(i: int, n: int) -> int:
    return (N_CLASSES * i) // n


def _encode_eg0(enc, value: int) -> None:
    k = 0
    while value >= 1 << k:
        enc.encode_bypass(1)
        value -= 1 << k
        k += 1
    enc.encode_bypass(0)
    for shift in range(k - 1, -1, -1):
        enc.encode_bypass((value >> shift) & 1)


def _decode_eg0(dec) -> int:
    k = 0
    value = 0
    while dec.decode_bypass():
        value += 1 << k
        k += 1
        if k > 20:
            raise StreamError("Exp-Golomb prefix too long")
    for shift in range(k - 1, -1, -1):
        value += dec.decode_bypass() << shift
    return value


def encode_levels(enc, ctx: list, levels) -> None:
    """Code one block's levels, given in scan order.

    coded_block_flag, then significance/last flags up to the last nonzero
    level, then magnitudes (reverse order) as a greater-than-one flag, a
    truncated-unary remainder and an Exp-Golomb escape, each followed by a
    bypass sign.
    """
    levels = [int(v) for v in levels]
    n = len(levels)
    last = -1
    for i, v in enumerate(levels):
        if abs(v) >= MAX_LEVEL:
            raise InvalidInputError(f"level {v} exceeds the coder range")
        if v:
            last = i
    if last < 0:
        enc.encode(0, ctx, _CBF)
        return
    enc.encode(1, ctx, _CBF)
    for i in range(last + 1):
        if i == n - 1:
            break
        sig = 1 if levels[i] else 0
        c = _pos_class(i, n)
        enc.encode(sig, ctx, _SIG + c)
        if sig:
            enc.encode(1 if i == last else 0, ctx, _LAST + c)
    for i in range(last, -1, -1):
        v = levels[i]
        if not v:
            continue
        a = abs(v)
        c = _pos_class(i, n)
        enc.encode(1 if a > 1 else 0, ctx, _GT1 + c)
        if a > 1:
            rem = a - 2
            for _ in range(min(rem, UNARY_CUTOFF)):
                enc.encode(1, ctx, _REST + c)
            if rem < UNARY_CUTOFF:
                enc.encode(0, ctx, _REST + c)
            else:
                _encode_eg0(enc, rem - UNARY_CUTOFF)
        enc.encode_bypass(1 if v < 0 else 0)


def decode_levels(dec, ctx: list, n: int) -> list:
    levels = [0] * n
    if not dec.decode(ctx, _CBF):
        return levels
    sig_pos = []
    for i in range(n):
        if i == n - 1:
            sig_pos.append(i)
            break
        c = _pos_class(i, n)
        if dec.decode(ctx, _SIG + c):
            sig_pos.append(i)
            if dec.decode(ctx, _LAST + c):
                break
    for i in reversed(sig_pos):
        c = _pos_class(i, n)
        a = 1
        if dec.decode(ctx, _GT1 + c):
            rem = 0
            while rem < UNARY_CUTOFF and dec.decode(ctx, _REST + c):
                rem += 1
            if rem == UNARY_CUTOFF:
                rem += _decode_eg0(dec)
            a = rem + 2
        levels[i] = -a if dec.decode_bypass() else a
    return levels


def most_probable_mode(left_mode, top_mode, default: int = 2) -> int:
    """min(left, top), with DC standing in for an unavailable neighbour."""
    left_mode = default if left_mode is None else left_mode
    top_mode = default if top_mode is None else top_mode
    return min(left_mode, top_mode)


def encode_mode(enc, ctx: list, mode: int, mpm: int) -> None:
    if not 0 <= mode <= 8:
        raise InvalidInputError(f"intra mode {mode} out of range")
    if mode == mpm:
        enc.encode(1, ctx, _MPM)
        return
    enc.encode(0, ctx, _MPM)
    rem = mode if mode < mpm else mode - 1
    for shift in (2, 1, 0):
        enc.encode((rem >> shift) & 1, ctx, _REM_MODE)


def decode_mode(dec, ctx: list, mpm: int) -> int:
    if dec.decode(ctx, _MPM):
        return mpm
    rem = 0
    for _ in range(3):
        rem = (rem << 1) | dec.decode(ctx, _REM_MODE)
    return rem if rem < mpm else rem + 1


def entropy_estimate(symbols) -> float:
    """Order-0 Shannon entropy in bits per symbol."""
    counts = Counter(int(s) for s in symbols)
    total = sum(counts.values())
    if total == 0:
        raise InvalidInputError("entropy of an empty sequence")
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h + 0.0


# --------------------------------------------------------------------------
# Container

MAGIC = b"VCRP"
VERSION = 1
CODEC_IMAGE = 0
CODEC_INTRA_VIDEO = 1
FLAG_VCRESPRED = 1
FLAG_PER_MODE_MASKS = 2
HEADER_SIZE = 16


@dataclass(frozen=True)
class StreamHeader:
    codec_id: int
    width: int
    height: int
    block_size: int
    quant_kind: int
    quant_value: int
    flags: int
    frame_count: int = 1
    version: int = VERSION

    def pack(self) -> bytes:
        w = BitstreamWriter()
        w.write_bytes(MAGIC)
        for value, nbits in ((self.version, 8), (self.codec_id, 8), (self.width, 16),
                             (self.height, 16), (self.block_size, 8), (self.quant_kind, 8),
                             (self.quant_value, 8), (self.flags, 8), (self.frame_count, 16)):
            w.write_bits(value, nbits)
        return w.getvalue()

    @classmethod
    def unpack(cls, data: bytes) -> "StreamHeader":
        r = BitstreamReader(data)
        if r.read_bytes(4) != MAGIC:
            raise StreamError("not a VCRP stream (bad magic)", position=0)
        fields = [r.read_bits(n) for n in (8, 8, 16, 16, 8, 8, 8, 8, 16)]
        version, codec_id, width, height, bsize, qkind, qval, flags, frames = fields
        if version != VERSION:
            raise StreamError(f"unsupported stream version {version}", position=4)
        return cls(codec_id, width, height, bsize, qkind, qval, flags, frames, version)


def pack_stream(header: StreamHeader, payload: bytes) -> bytes:
    """Header followed by the arithmetic payload; frames are decoder-delimited."""
    return header.pack() + bytes(payload)


def unpack_stream(data: bytes):
    if len(data) < HEADER_SIZE:
        raise StreamError("stream shorter than its header", position=len(data))
    return StreamHeader.unpack(data), bytes(data[HEADER_SIZE:])
