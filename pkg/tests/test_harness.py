import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vcrespred.errors import DomainError, InvalidInputError
from vcrespred.harness import (
    NEUTRAL_GRAY,
    LOSSLESS,
    RDCurve,
    RDPoint,
    RunManifest,
    bd_rate,
    costmap_image,
    costmap_render,
    psnr,
    rd_sweep,
    stream_bitrate,
)
from vcrespred.blocks import read_pgm
from vcrespred.videocodec import SymbolCostMap

ANCHOR = RDCurve("a", [(100, 30.0), (180, 33.0), (320, 36.0), (600, 39.5)])


def scaled(curve, factor):
    return RDCurve("t", [(p.bitrate * factor, p.psnr) for p in curve.points])


# --------------------------------------------------------------------- psnr

def test_psnr_examples():
    a = np.random.default_rng(0).integers(0, 255, (16, 16)).astype(float)
    assert psnr(a, a) == LOSSLESS
    assert psnr(a, a + 1) == pytest.approx(48.1308036, abs=1e-6)
    b = np.random.default_rng(1).integers(0, 255, (16, 16)).astype(float)
    # two-pass oracle: sum of squares, then divide
    sq = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        sq += (x - y) ** 2
    assert psnr(a, b) == pytest.approx(10 * math.log10(255 ** 2 / (sq / a.size)), abs=1e-9)
    with pytest.raises(InvalidInputError):
        psnr(a, a[:8])


# ------------------------------------------------------------------ bd-rate

def test_bd_identity_and_halving():
    assert bd_rate(ANCHOR, ANCHOR) == pytest.approx(0.0, abs=1e-9)
    assert bd_rate(ANCHOR, scaled(ANCHOR, 0.5)) == pytest.approx(-50.0, abs=1e-6)


def test_bd_closed_form_log_offset():
    # affine log10-rate offset of 0.1 at equal PSNR
    assert bd_rate(ANCHOR, scaled(ANCHOR, 10 ** 0.1)) == pytest.approx((10 ** 0.1 - 1) * 100, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 5.0))
def test_bd_inverse_consistency(factor):
    ab = bd_rate(ANCHOR, scaled(ANCHOR, factor)) / 100
    ba = bd_rate(scaled(ANCHOR, factor), ANCHOR) / 100
    assert ab == pytest.approx(-ba / (1 + ba), abs=1e-9)


def test_bd_non_overlapping():
    far = RDCurve("f", [(100, 50.0), (200, 51.0), (300, 52.0), (400, 53.0)])
    with pytest.raises(DomainError):
        bd_rate(ANCHOR, far)


def test_curve_validation():
    with pytest.raises(InvalidInputError):
        RDCurve("x", [(1, 30), (2, 31), (3, 32)])
    with pytest.raises(InvalidInputError):
        RDCurve("x", [(1, 30), (1, 31), (3, 32), (4, 33)])
    with pytest.raises(InvalidInputError):
        RDPoint(0, 30)
    with pytest.raises(InvalidInputError):
        RDPoint(10, math.inf)
    c = RDCurve("x", [(4, 33), (1, 30), (3, 32), (2, 31)])
    assert c.rates.tolist() == [1, 2, 3, 4]


def test_bitrate():
    assert stream_bitrate(49000, 30.0, 49) == pytest.approx(30.0)
    with pytest.raises(InvalidInputError):
        stream_bitrate(10, 30.0, 0)


# -------------------------------------------------------------------- sweeps

def test_empty_point_list_rejected():
    with pytest.raises(InvalidInputError):
        RunManifest("video", ["synthetic:pan_rocket"], [])


def test_missing_files_listed_before_encoding(tmp_path):
    m = RunManifest("video", [str(tmp_path / "a.y4m"), "synthetic:pan_rocket", str(tmp_path / "b.y4m")],
                    [22, 27], out_dir=str(tmp_path / "out"))
    with pytest.raises(InvalidInputError, match="a.y4m.*b.y4m"):
        rd_sweep(m)
    assert not (tmp_path / "out").exists()


def _small_manifest(tmp_path, name, **kw):
    return RunManifest("image", ["synthetic:moon", "synthetic:coins"], [20, 40, 60, 80],
                       out_dir=str(tmp_path / name), **kw)


def test_image_sweep_is_deterministic_and_traceable(tmp_path):
    r1 = rd_sweep(_small_manifest(tmp_path, "one"))
    rd_sweep(_small_manifest(tmp_path, "two", threads=2))
    for f in ("rd_points.csv", "bd_rate.csv", "gain_per_point.csv", "gain_vs_rate.svg"):
        assert (tmp_path / "one" / f).read_bytes() == (tmp_path / "two" / f).read_bytes()
    fp = _small_manifest(tmp_path, "x").fingerprint()
    with open(tmp_path / "one" / "rd_points.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 4 * 2
    assert all(r["provenance"].startswith(fp + ":") for r in rows)
    assert set(r1.bd) == {"moon", "coins"} and all(v is not None for v in r1.bd.values())
    back = RunManifest.from_json((tmp_path / "one" / "manifest.json").read_text())
    assert back.fingerprint() == fp


def test_video_sweep_small(tmp_path, monkeypatch):
    from vcrespred import harness
    from vcrespred.blocks import PixelPlane
    from vcrespred.corpus import synthetic_sequence

    # shrink the synthetic sequence to keep the test fast
    def small(item, frames):
        return 30.0, [PixelPlane(f.samples[:32, :48]) for f in synthetic_sequence("pan_rocket", frames=frames)]
    monkeypatch.setattr(harness, "_load_video", small)
    m = RunManifest("video", ["synthetic:pan_rocket"], [22, 27, 32, 37], frames=1, out_dir=str(tmp_path))
    res = rd_sweep(m)
    assert len(res.rows) == 8 and len(res.gains) == 4
    base = [r for r in res.rows if r["variant"] == "baseline"]
    assert all(r["rate"] == pytest.approx(r["bits"] * 30 / 1000) for r in base)


# ------------------------------------------------------------------ costmaps

def test_costmap_neutral_is_mid_gray(tmp_path):
    z = np.full((3, 4), 5)
    cm = SymbolCostMap(z, z.copy())
    img = costmap_image(cm, scale=2)
    assert img.shape == (6, 8) and (img == NEUTRAL_GRAY).all()
    costmap_render(cm, tmp_path / "m.pgm", scale=2)
    assert (read_pgm(tmp_path / "m.pgm").samples == NEUTRAL_GRAY).all()


def test_costmap_single_gain_cell(tmp_path):
    coded = np.full((3, 3), 6)
    coded[1, 2] = 2
    cm = SymbolCostMap(coded, np.full((3, 3), 6))
    img = costmap_image(cm, scale=1)
    assert (img != NEUTRAL_GRAY).sum() == 1 and img[1, 2] > NEUTRAL_GRAY
    coded[1, 2] = 9
    assert costmap_image(SymbolCostMap(coded, np.full((3, 3), 6)), 1)[1, 2] < NEUTRAL_GRAY
    svg = costmap_render(cm, tmp_path / "m.svg").read_text()
    assert svg.count("<rect") == 2
