import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vcrespred.blocks import (
    Block,
    CoeffBlock,
    PixelPlane,
    QuantSpec,
    ScanKind,
    dequantize,
    forward_bdct,
    inverse_bdct,
    make_scan,
    quantize,
    read_pgm,
    write_pgm,
)
from vcrespred.errors import InvalidInputError


def kernel_sum_dct(u):
    """Direct evaluation of sum_x sum_y u(x,y) phi(x,y,i,j)."""
    n = u.shape[0]
    c = lambda k: math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for x in range(n):
                for y in range(n):
                    acc += (u[x, y] * c(i) * c(j)
                            * math.cos((2 * x + 1) * i * math.pi / (2 * n))
                            * math.cos((2 * y + 1) * j * math.pi / (2 * n)))
            out[i, j] = acc
    return out


def kernel_sum_idct(a):
    n = a.shape[0]
    c = lambda k: math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
    out = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            acc = 0.0
            for i in range(n):
                for j in range(n):
                    acc += (a[i, j] * c(i) * c(j)
                            * math.cos((2 * x + 1) * i * math.pi / (2 * n))
                            * math.cos((2 * y + 1) * j * math.pi / (2 * n)))
            out[x, y] = acc
    return out


def test_constant_block_has_only_dc():
    cb = forward_bdct(Block(np.full((4, 4), 8.0)))
    assert cb.coeffs[0, 0] == pytest.approx(32.0, abs=1e-12)
    ac = cb.coeffs.copy()
    ac[0, 0] = 0
    assert np.abs(ac).max() < 1e-12


@pytest.mark.parametrize("n", [4, 8])
def test_forward_matches_kernel_sum(n):
    rng = np.random.default_rng(11 + n)
    u = rng.uniform(0, 255, (n, n))
    np.testing.assert_allclose(forward_bdct(Block(u)).coeffs, kernel_sum_dct(u), atol=1e-9)


@pytest.mark.parametrize("n", [4, 8])
def test_inverse_matches_kernel_sum(n):
    rng = np.random.default_rng(3 * n)
    a = rng.normal(0, 50, (n, n))
    np.testing.assert_allclose(inverse_bdct(CoeffBlock(a)).samples, kernel_sum_idct(a), atol=1e-9)


def test_zero_coeffs_give_zero_block():
    assert not inverse_bdct(CoeffBlock(np.zeros((8, 8)))).samples.any()


def test_unit_coefficient_is_basis_function():
    a = np.zeros((4, 4))
    a[0, 1] = 1.0
    b = inverse_bdct(CoeffBlock(a)).samples
    expected = kernel_sum_idct(a)
    np.testing.assert_allclose(b, expected, atol=1e-12)
    assert np.linalg.norm(b) == pytest.approx(1.0, abs=1e-12)
    # (0, 1) varies along columns only
    assert np.allclose(b, b[0:1, :])


def test_nonfinite_block_rejected():
    u = np.zeros((4, 4))
    u[1, 1] = np.nan
    with pytest.raises(InvalidInputError):
        forward_bdct(Block(u))


def test_bad_size_rejected():
    with pytest.raises(InvalidInputError):
        Block(np.zeros((5, 5)))
    with pytest.raises(InvalidInputError):
        CoeffBlock(np.zeros((8, 4)))


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([4, 8]), st.integers(0, 2**32 - 1))
def test_round_trip_and_parseval(n, seed):
    u = np.random.default_rng(seed).uniform(-300, 300, (n, n))
    a = forward_bdct(Block(u)).coeffs
    assert np.abs(inverse_bdct(CoeffBlock(a)).samples - u).max() < 1e-9
    assert abs(np.linalg.norm(a) - np.linalg.norm(u)) <= 1e-9 * np.linalg.norm(u)


# ---------------------------------------------------------------- quantizer

def test_quantize_arithmetic():
    q = QuantSpec.qp(0, size=4)
    # force a known step via a JPEG spec whose table entry we control
    q8 = QuantSpec.jpeg(50)
    a = np.zeros((8, 8))
    a[0, 2] = 10.0  # table entry (0,2) at Q50 is 10 -> level 1
    a[0, 0] = 10.0  # step 16 -> level 1 (0.625 rounds away)
    lv = quantize(CoeffBlock(a), q8)
    assert lv[0, 2] == 1 and lv[0, 0] == 1
    assert q.table[0, 0] == 1.0  # 0.625 clamped to the table floor


def test_level_three_for_ten_over_four():
    # QP whose step is exactly 4 does not exist; use a JPEG quality whose
    # (0,0) entry is 4: 16*scale/100 = 4 -> scale 25 -> quality 88
    q = QuantSpec.jpeg(88)
    assert q.table[0, 0] == 4
    a = np.zeros((8, 8))
    a[0, 0] = 10.0
    lv = quantize(CoeffBlock(a), q)
    assert lv[0, 0] == 3
    assert dequantize(lv, q).coeffs[0, 0] == 12.0


def test_half_away_from_zero():
    q = QuantSpec.jpeg(100)  # all-ones table
    assert np.all(q.table == 1)
    a = np.array([[0.5, -0.5, 1.5, -1.5], [2.5, -2.5, 0.49, -0.49]] + [[0] * 4] * 2, dtype=float)
    a8 = np.zeros((8, 8))
    a8[:4, :4] = a
    lv = quantize(CoeffBlock(a8), q)[:2, :4]
    assert lv.tolist() == [[1, -1, 2, -2], [3, -3, 0, 0]]


def test_unit_step_rounds():
    q = QuantSpec.jpeg(100)
    x = np.random.default_rng(0).normal(0, 20, (8, 8))
    rec = dequantize(quantize(CoeffBlock(x), q), q).coeffs
    np.testing.assert_array_equal(rec, np.sign(x) * np.floor(np.abs(x) + 0.5))


def test_jpeg_q50_is_annex_k():
    annex_k = [
        16, 11, 10, 16, 24, 40, 51, 61,
        12, 12, 14, 19, 26, 58, 60, 55,
        14, 13, 16, 24, 40, 57, 69, 56,
        14, 17, 22, 29, 51, 87, 80, 62,
        18, 22, 37, 56, 68, 109, 103, 77,
        24, 35, 55, 64, 81, 104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101,
        72, 92, 95, 98, 112, 100, 103, 99,
    ]
    assert QuantSpec.jpeg(50).table.ravel().tolist() == annex_k


def test_jpeg_quality_scaling():
    t25 = QuantSpec.jpeg(25).table
    assert t25[0, 0] == 32 and t25[7, 7] == 198
    t75 = QuantSpec.jpeg(75).table
    assert t75[0, 0] == 8 and t75[0, 1] == 6  # 11*50/100 = 5.5 -> 6
    assert QuantSpec.jpeg(1).table.max() == 255
    assert QuantSpec.jpeg(25, size=4).table.tolist() == t25[:4, :4].tolist()


def test_qp_step_doubles_every_six():
    s22 = QuantSpec.qp(22).table[0, 0]
    s28 = QuantSpec.qp(28).table[0, 0]
    assert s28 == pytest.approx(2 * s22)
    assert QuantSpec.qp(4).table[0, 0] == 1.0
    assert QuantSpec.qp(27).table[0, 0] == pytest.approx(0.625 * 2 ** 4.5)


def test_quantspec_validation():
    with pytest.raises(InvalidInputError):
        QuantSpec.jpeg(0)
    with pytest.raises(InvalidInputError):
        QuantSpec.qp(52)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([10, 25, 50, 90]))
def test_quantizer_idempotent(seed, quality):
    q = QuantSpec.jpeg(quality)
    x = np.random.default_rng(seed).normal(0, 200, (8, 8))
    lv = quantize(CoeffBlock(x), q)
    rec = CoeffBlock(dequantize(lv, q).coeffs)
    np.testing.assert_array_equal(quantize(rec, q), lv)


# --------------------------------------------------------------------- scans

ZIGZAG_4 = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2),
            (2, 1), (3, 0), (3, 1), (2, 2), (1, 3), (2, 3), (3, 2), (3, 3)]


def test_zigzag_4x4_hand_enumerated():
    assert list(make_scan(ScanKind.ZIGZAG, 4).positions) == ZIGZAG_4


def test_zigzag_8x8_matches_jpeg_natural_order():
    # T.81 figure A.6 gives, for each natural (row-major) index, its zigzag rank
    rank = [
        0, 1, 5, 6, 14, 15, 27, 28,
        2, 4, 7, 13, 16, 26, 29, 42,
        3, 8, 12, 17, 25, 30, 41, 43,
        9, 11, 18, 24, 31, 40, 44, 53,
        10, 19, 23, 32, 39, 45, 52, 54,
        20, 22, 33, 38, 46, 51, 55, 60,
        21, 34, 37, 47, 50, 56, 59, 61,
        35, 36, 48, 49, 57, 58, 62, 63,
    ]
    scan = make_scan(ScanKind.ZIGZAG, 8)
    for r, (i, j) in enumerate(scan.positions):
        assert rank[i * 8 + j] == r


def test_row_and_column_first():
    assert make_scan(ScanKind.ROW_FIRST, 4).positions[:4] == ((0, 0), (0, 1), (0, 2), (0, 3))
    assert make_scan(ScanKind.COLUMN_FIRST, 4).positions[:4] == ((0, 0), (1, 0), (2, 0), (3, 0))
    assert make_scan(ScanKind.DIAG_DOWNLEFT, 4).positions[:6] == (
        (0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0))


@pytest.mark.parametrize("kind", list(ScanKind))
@pytest.mark.parametrize("n", [4, 8])
def test_scan_bijection(kind, n):
    scan = make_scan(kind, n)
    assert sorted(scan.positions) == [(i, j) for i in range(n) for j in range(n)]
    assert sorted(scan.flat_indices().tolist()) == list(range(n * n))


def test_unknown_scan_kind():
    with pytest.raises(InvalidInputError):
        make_scan("spiral", 4)
    with pytest.raises(InvalidInputError):
        make_scan(ScanKind.ZIGZAG, 16)


# ----------------------------------------------------------------------- PGM

def test_pgm_round_trip(tmp_path):
    pixels = np.random.default_rng(5).integers(0, 256, (24, 40)).astype(float)
    path = tmp_path / "x.pgm"
    write_pgm(path, PixelPlane(pixels))
    back = read_pgm(path)
    assert back.width == 40 and back.height == 24
    np.testing.assert_array_equal(back.samples, pixels)


def test_pgm_with_comment(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 2\n255\n" + bytes([0, 10, 20, 255]))
    assert read_pgm(path).samples.tolist() == [[0, 10], [20, 255]]


def test_plane_export_clamps():
    p = PixelPlane(np.array([[-3.0, 300.0], [127.5, 12.4]]))
    assert p.to_uint8().tolist() == [[0, 255], [128, 12]]


def test_plane_tiling_check():
    with pytest.raises(InvalidInputError):
        PixelPlane(np.zeros((12, 16))).check_tiling(8)
