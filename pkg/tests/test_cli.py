import json

import numpy as np
import pytest

from vcrespred.blocks import PixelPlane, read_pgm, write_pgm
from vcrespred.cli import main
from vcrespred.corpus import load_image, synthetic_sequence
from vcrespred.videocodec import read_y4m, write_y4m


@pytest.fixture
def pgm(tmp_path):
    s = load_image("camera").samples[:64, :64]
    path = tmp_path / "x.pgm"
    write_pgm(path, PixelPlane(s))
    return path


@pytest.fixture
def y4m(tmp_path):
    frames = [PixelPlane(f.samples[:32, :48]) for f in synthetic_sequence("pan_coffee", frames=2)]
    path = tmp_path / "s.y4m"
    write_y4m(path, frames, fps=25)
    return path


def test_image_round_trip(tmp_path, pgm, capsys):
    assert main(["image-encode", "--in", str(pgm), "--q", "25", "--mask", "c10,c01",
                 "--out", str(tmp_path / "x.vcrp")]) == 0
    assert "bpp=" in capsys.readouterr().out
    assert main(["--out-dir", str(tmp_path / "o"), "image-decode", "--in", str(tmp_path / "x.vcrp"),
                 "--mask", "c10,c01", "--out", "rec.pgm", "--stages-dir", "st"]) == 0
    assert read_pgm(tmp_path / "o" / "rec.pgm").samples.shape == (64, 64)
    assert sorted(p.name for p in (tmp_path / "o" / "st").iterdir()) == ["final.pgm", "restored.pgm", "support.pgm"]


def test_image_decode_wrong_mask_is_not_silent(tmp_path, pgm):
    main(["image-encode", "--in", str(pgm), "--q", "50", "--mask", "c10", "--out", str(tmp_path / "a.vcrp")])
    main(["image-decode", "--in", str(tmp_path / "a.vcrp"), "--mask", "c10", "--out", str(tmp_path / "a.pgm")])
    code = main(["image-decode", "--in", str(tmp_path / "a.vcrp"), "--mask", "c01",
                 "--out", str(tmp_path / "b.pgm")])
    if code == 0:
        assert read_pgm(tmp_path / "a.pgm").samples.tobytes() != read_pgm(tmp_path / "b.pgm").samples.tobytes()
    else:
        assert code == 3


def test_restore_and_optimal(pgm, capsys):
    assert main(["--seed", "2", "restore", "--in", str(pgm), "--pct", "10"]) == 0
    assert "psnr_restored" in capsys.readouterr().out
    assert main(["optimal-reconstruct", "--in", str(pgm), "--q", "25"]) == 0
    assert "psnr_optimal" in capsys.readouterr().out


def test_position_study(tmp_path, pgm):
    assert main(["position-study", "--corpus", str(tmp_path), "--q", "50", "--csv", str(tmp_path / "p.csv")]) == 0
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 64


def test_intra_round_trip(tmp_path, y4m, capsys):
    out = tmp_path / "s.vcrp"
    assert main(["intra-encode", "--in", str(y4m), "--qp", "27", "--frames", "2", "--vcrespred", "on",
                 "--out", str(out), "--costmap", str(tmp_path / "m.csv")]) == 0
    assert "kbps=" in capsys.readouterr().out
    assert main(["intra-decode", "--in", str(out), "--out", str(tmp_path / "r.y4m")]) == 0
    info, frames = read_y4m(tmp_path / "r.y4m")
    assert len(frames) == 2 and (info.width, info.height) == (48, 32)
    assert main(["costmap", "--in", str(tmp_path / "m.csv"), "--out", str(tmp_path / "m.pgm"), "--scale", "2"]) == 0
    assert read_pgm(tmp_path / "m.pgm").samples.shape == (16, 24)


def test_exit_codes(tmp_path, y4m):
    out = tmp_path / "s.vcrp"
    main(["intra-encode", "--in", str(y4m), "--qp", "32", "--frames", "1", "--out", str(out)])
    data = out.read_bytes()
    (tmp_path / "cut.vcrp").write_bytes(data[: len(data) // 2])
    assert main(["intra-decode", "--in", str(tmp_path / "cut.vcrp"), "--out", str(tmp_path / "r.y4m")]) == 3
    (tmp_path / "bad.vcrp").write_bytes(b"XXXX" + data[4:])
    assert main(["intra-decode", "--in", str(tmp_path / "bad.vcrp"), "--out", str(tmp_path / "r.y4m")]) == 3
    assert main(["intra-encode", "--in", str(tmp_path / "nope.y4m"), "--out", str(out)]) == 2
    assert main(["intra-encode", "--in", str(y4m), "--qp", "99", "--out", str(out)]) == 2
    assert main(["image-encode", "--in", str(y4m), "--out", str(out)]) == 2
    assert main(["rd-sweep", "--inputs", "synthetic:pan_rocket", "--points", ""]) == 2
    with pytest.raises(SystemExit) as e:
        main(["intra-encode"])
    assert e.value.code == 2


def test_bd_rate_command(tmp_path, capsys):
    rows = [(100, 30.0), (180, 33.0), (320, 36.0), (600, 39.5)]
    for name, f in (("a", 1.0), ("b", 0.5)):
        (tmp_path / f"{name}.csv").write_text("bitrate,psnr\n" + "".join(f"{r * f},{p}\n" for r, p in rows))
    assert main(["bd-rate", "--anchor", str(tmp_path / "a.csv"), "--test", str(tmp_path / "b.csv")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(-50.0, abs=1e-6)
    far = "bitrate,psnr\n" + "".join(f"{r},{p + 30}\n" for r, p in rows)
    (tmp_path / "c.csv").write_text(far)
    assert main(["bd-rate", "--anchor", str(tmp_path / "a.csv"), "--test", str(tmp_path / "c.csv")]) == 2


def test_config_overrides(tmp_path, y4m):
    table = {"4": {str(m): {"mask": [], "scan": "zigzag"} for m in range(9)}}
    table["4"]["static"] = {"mask": [], "scan": "zigzag"}
    table["8"] = table["4"]
    (tmp_path / "t.json").write_text(json.dumps(table))
    (tmp_path / "c.json").write_text(json.dumps({"mask_table": str(tmp_path / "t.json")}))
    a, b = tmp_path / "a.vcrp", tmp_path / "b.vcrp"
    main(["--config", str(tmp_path / "c.json"), "intra-encode", "--in", str(y4m), "--vcrespred", "on", "--out", str(a)])
    main(["intra-encode", "--in", str(y4m), "--vcrespred", "off", "--out", str(b)])
    # empty masks: identical payload, only the flag byte differs
    assert len(a.read_bytes()) == len(b.read_bytes())
    assert a.read_bytes()[16:] == b.read_bytes()[16:]
    (tmp_path / "bad.json").write_text("[1]")
    assert main(["--config", str(tmp_path / "bad.json"), "restore", "--in", "x"]) == 2
