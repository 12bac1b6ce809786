import csv

import numpy as np
import pytest

from vcrespred.blocks import PixelPlane, QuantSpec
from vcrespred.corpus import IMAGE_NAMES, load_image
from vcrespred.errors import InvalidInputError, StreamError
from vcrespred.imagecodec import (
    CoeffMask,
    ImageCodecConfig,
    decode_image,
    encode_image,
    position_study,
    random_cancellation_experiment,
)
from vcrespred.metrics import psnr


def crop(name, size=128):
    s = load_image(name).samples
    r0 = (s.shape[0] - size) // 2
    c0 = (s.shape[1] - size) // 2
    return PixelPlane(s[r0:r0 + size, c0:c0 + size])


# ------------------------------------------------------------------ masks

def test_mask_parse_and_complement():
    m = CoeffMask.parse("c01, c10")
    assert m.i_dct == ((0, 1), (1, 0))  # zigzag (low->high) order
    assert set(m.i_dct).isdisjoint(m.i_o)
    assert len(m.i_o) + len(m.i_dct) == 64
    assert m.i_o[0] == (0, 0)
    assert m.label() == "c01,c10"
    assert len(CoeffMask.parse("none")) == 0


def test_mask_validation():
    with pytest.raises(InvalidInputError):
        CoeffMask.parse("c00")
    with pytest.raises(InvalidInputError):
        CoeffMask.parse("c10,c10")
    with pytest.raises(InvalidInputError):
        CoeffMask.parse("x10")
    with pytest.raises(InvalidInputError):
        CoeffMask(4, ((4, 0),))
    assert CoeffMask(4, ((0, 0),), allow_dc=True).i_dct == ((0, 0),)


# ------------------------------------------------------------------ codec

def test_empty_mask_is_baseline():
    p = crop("camera")
    a, ra = encode_image(p, ImageCodecConfig.make(50, ""))
    b, rb = encode_image(p, ImageCodecConfig.make(50, "", restore_enabled=False))
    assert a == b
    assert ra.psnr == rb.psnr
    assert decode_image(a, ImageCodecConfig.make(50, "")).samples.tobytes() == ra.reconstruction.samples.tobytes()


@pytest.mark.parametrize("name", ["camera", "coins", "moon"])
@pytest.mark.parametrize("quality", [25, 75])
@pytest.mark.parametrize("mask", ["", "c10", "c10,c01", "c01,c11,c20"])
def test_encoder_decoder_sync(name, quality, mask):
    p = crop(name, 64)
    cfg = ImageCodecConfig.make(quality, mask)
    stream, rep = encode_image(p, cfg)
    out = decode_image(stream, cfg)
    assert out.samples.tobytes() == rep.reconstruction.samples.tobytes()


def test_streams_differ_by_mask_but_each_decodes():
    p = crop("chelsea", 64)
    c1 = ImageCodecConfig.make(50, "c10")
    c2 = ImageCodecConfig.make(50, "c10,c01")
    s1, r1 = encode_image(p, c1)
    s2, r2 = encode_image(p, c2)
    assert s1 != s2
    assert decode_image(s1, c1).samples.tobytes() == r1.reconstruction.samples.tobytes()
    assert decode_image(s2, c2).samples.tobytes() == r2.reconstruction.samples.tobytes()


def test_stage_psnr_increases():
    p = crop("camera", 256)
    cfg = ImageCodecConfig.make(25, "c10,c01")
    stream, _ = encode_image(p, cfg)
    _, st = decode_image(stream, cfg, stages=True)
    values = [psnr(p, st[k]) for k in ("support", "restored", "final")]
    assert values[0] < values[1] < values[2]


def test_gray_input_stages_identical():
    p = PixelPlane(np.full((32, 48), 128.0))
    cfg = ImageCodecConfig.make(50, "c10,c01")
    stream, rep = encode_image(p, cfg)
    final, st = decode_image(stream, cfg, stages=True)
    assert st["support"].samples.tobytes() == st["restored"].samples.tobytes() == final.samples.tobytes()
    assert np.all(final.samples == 128)


def test_restoration_saves_rate_on_natural_crop():
    p = crop("chelsea", 256)
    base = encode_image(p, ImageCodecConfig.make(25, ""))[1]
    pred = encode_image(p, ImageCodecConfig.make(25, "c10,c01"))[1]
    assert pred.bits < base.bits
    assert abs(pred.psnr - base.psnr) < 0.1
    assert pred.position_entropy.shape == (8, 8)


def test_misaligned_input_rejected():
    with pytest.raises(InvalidInputError):
        encode_image(PixelPlane(np.zeros((20, 16))), ImageCodecConfig.make(50))


def test_truncated_stream_reports_block():
    p = crop("coins", 64)
    cfg = ImageCodecConfig.make(75)
    stream, _ = encode_image(p, cfg)
    with pytest.raises(StreamError, match="block"):
        decode_image(stream[: len(stream) // 2], cfg)
    with pytest.raises(StreamError):
        decode_image(stream[:10], cfg)


def test_corrupted_stream_never_silently_matches():
    p = crop("astronaut", 64)
    cfg = ImageCodecConfig.make(50, "c10,c01")
    stream, rep = encode_image(p, cfg)
    rng = np.random.default_rng(0)
    ref = rep.reconstruction.samples.tobytes()
    for _ in range(30):
        bad = bytearray(stream)
        pos = int(rng.integers(16 + 5, len(bad)))
        bad[pos] ^= 1 << int(rng.integers(0, 8))
        try:
            out = decode_image(bytes(bad), cfg)
        except StreamError:
            continue
        assert out.samples.tobytes() != ref


def test_config_mismatch_rejected():
    p = crop("moon", 32)
    stream, _ = encode_image(p, ImageCodecConfig.make(50))
    with pytest.raises(StreamError):
        decode_image(stream, ImageCodecConfig.make(75))


def test_config_validation():
    with pytest.raises(InvalidInputError):
        ImageCodecConfig(QuantSpec.qp(27, 8), CoeffMask(8))
    with pytest.raises(InvalidInputError):
        ImageCodecConfig(QuantSpec.jpeg(50, 8), CoeffMask(4))


# ------------------------------------------------------------- experiments

def test_random_cancellation():
    p = crop("moon", 256)
    before, after = random_cancellation_experiment(p, 10, seed=3)
    assert after - before > 0.5
    assert random_cancellation_experiment(p, 10, seed=3) == (before, after)
    tiny_b, tiny_a = random_cancellation_experiment(p, 0.01, seed=3)
    # both near-lossless: compare in MSE, where dB differences are meaningless
    mse = lambda db: 255.0 ** 2 / 10 ** (db / 10)
    assert min(tiny_a, tiny_b) > 60 and abs(mse(tiny_a) - mse(tiny_b)) < 0.01
    with pytest.raises(InvalidInputError):
        random_cancellation_experiment(p, 0)


def test_position_study(tmp_path):
    corpus = {name: crop(name) for name in IMAGE_NAMES}
    out = tmp_path / "study.csv"
    rows = position_study(corpus, qualities=(25, 50), csv_path=out)
    assert len(rows) == 2 * 63
    for q in (25, 50):
        sub = sorted((r for r in rows if r["quality"] == q), key=lambda r: -r["entropy_reduction"])
        assert {(sub[0]["i"], sub[0]["j"]), (sub[1]["i"], sub[1]["j"])} == {(1, 0), (0, 1)}
    # the highest frequencies are zero everywhere at Q25 -> nothing saved, nothing lost
    last = next(r for r in rows if r["quality"] == 25 and (r["i"], r["j"]) == (7, 7))
    assert last["entropy_reduction"] == 0.0 and last["psnr_reduction"] == 0.0
    with open(out) as fh:
        assert len(list(csv.DictReader(fh))) == len(rows)
    with pytest.raises(InvalidInputError):
        position_study(corpus, qualities=(25,), positions=[(0, 0)])
