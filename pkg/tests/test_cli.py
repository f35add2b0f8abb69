import subprocess
import sys

import numpy as np
import pytest

from sphinpaint.cli import main
from sphinpaint.image import GrayImage, read_pgm, write_pgm
from sphinpaint.mask import read_mask

from conftest import smooth_image


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip()
    return code, out


def parse(line):
    return dict(kv.split("=") for kv in line.split())


@pytest.fixture
def image(tmp_path):
    p = tmp_path / "f.pgm"
    write_pgm(GrayImage(np.round(smooth_image(32, 32, 5).data)), p)
    return p


def test_mse_identical(capsys, image):
    code, out = run(capsys, "mse", "--a", image, "--b", image)
    assert code == 0
    assert out.startswith("mse=0.000000 ")


def test_usage_errors(capsys, tmp_path, image):
    assert run(capsys, "inpaint", "--out", tmp_path / "u.pgm")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys)[0] == 1
    run(capsys, "mask", "--image", image, "--kind", "random", "--density", "0.1", "--out", tmp_path / "m.pgm")
    assert run(capsys, "inpaint", "--mask", tmp_path / "m.pgm", "--out", tmp_path / "u.pgm",
               "--order", "mixed")[0] == 1
    assert run(capsys, "inpaint", "--mask", tmp_path / "m.pgm", "--out", tmp_path / "u.pgm",
               "--kernel", "nope")[0] == 1
    assert run(capsys, "densify", "--image", image, "--density", "1.5", "--out-mask", tmp_path / "d.pgm")[0] == 1
    assert run(capsys, "aniso", "--mask", tmp_path / "m.pgm", "--out-mask", tmp_path / "a.pgm",
               "--window", "24")[0] == 1


def test_data_errors(capsys, tmp_path, image):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n\x00")
    assert run(capsys, "mse", "--a", bad, "--b", image)[0] == 2
    assert run(capsys, "mse", "--a", tmp_path / "missing.pgm", "--b", image)[0] == 2
    other = tmp_path / "o.pgm"
    write_pgm(GrayImage.constant(3, 3, 0), other)
    assert run(capsys, "mse", "--a", other, "--b", image)[0] == 2


def test_exit_codes_from_process(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sphinpaint", "inpaint"], capture_output=True, text=True)
    assert r.returncode == 1 and "usage" in r.stderr


def test_inpaint_tonal_workflow(capsys, tmp_path, image):
    m, u, r = tmp_path / "m.pgm", tmp_path / "u.pgm", tmp_path / "r.npz"
    code, out = run(capsys, "mask", "--image", image, "--kind", "random", "--density", "0.08", "--seed", "3",
                    "--out", m)
    assert code == 0 and parse(out)["points"] == "81"
    code, out = run(capsys, "inpaint", "--mask", m, "--truth", image, "--order", "mixed", "--out", u,
                    "--replay", r)
    assert code == 0
    before = float(parse(out)["mse"])
    code, out = run(capsys, "tonal", "--image", image, "--mask", m, "--replay", r, "--out-mask", tmp_path / "t.pgm",
                    "--out", tmp_path / "ut.pgm")
    assert code == 0
    s = parse(out)
    assert float(s["mse_before"]) == pytest.approx(before, abs=1e-6)
    assert float(s["mse"]) <= before + 1e-6
    assert read_mask(tmp_path / "t.pgm").dims == (32, 32)
    # replay recorded with another kernel is a data error
    assert run(capsys, "tonal", "--image", image, "--mask", m, "--replay", r, "--kernel", "lucy",
               "--out-mask", tmp_path / "x.pgm")[0] == 2


@pytest.mark.parametrize("order", ["0", "1", "harmonic", "biharmonic"])
def test_inpaint_orders(capsys, tmp_path, image, order):
    m = tmp_path / "m.pgm"
    run(capsys, "mask", "--image", image, "--kind", "regular", "--step", "4", "--out", m)
    code, out = run(capsys, "inpaint", "--mask", m, "--truth", image, "--order", order, "--out", tmp_path / "u.pgm")
    assert code == 0 and float(parse(out)["mse"]) > 0


def test_scratch_mask_from_image(capsys, tmp_path, image):
    mask_img = np.full((32, 32), 255.0)
    mask_img[10:12, :] = 0
    mp = tmp_path / "scratch.pgm"
    write_pgm(GrayImage(mask_img), mp)
    code, out = run(capsys, "inpaint", "--mask", mp, "--image", image, "--truth", image, "--out", tmp_path / "u.pgm")
    assert code == 0 and parse(out)["points"] == str(32 * 30)


def test_summary_is_deterministic(capsys, tmp_path, image):
    args = ["densify", "--image", image, "--density", "0.03", "--seed", "2", "--out-mask", tmp_path / "d.pgm",
            "--history", tmp_path / "h.csv"]
    a = parse(run(capsys, *args)[1])
    b = parse(run(capsys, *args)[1])
    a.pop("wall_ms"), b.pop("wall_ms")
    assert a == b and a["points"] == "30"
    assert (tmp_path / "h.csv").read_text().startswith("iteration,points,mse\n")


def test_pipeline_resumes(capsys, tmp_path, image):
    args = ["pipeline", "--image", image, "--density", "0.05", "--aniso", "--min-points", "5",
            "--workdir", tmp_path / "work", "--out", tmp_path / "u.pgm"]
    code, out = run(capsys, *args)
    assert code == 0
    first = parse(out)
    assert float(first["mse"]) <= float(first["mse_inpainted"]) + 1e-6
    for name in ("densified.pgm", "aniso.pgm", "replay.npz", "tonal.pgm", "pipeline.json", "history.csv"):
        assert (tmp_path / "work" / name).exists()
    code, out = run(capsys, *args)
    again = parse(out)
    first.pop("wall_ms"), again.pop("wall_ms")
    assert again == first
    u = read_pgm(tmp_path / "u.pgm")
    assert u.dims == (32, 32)


def test_threads_flag_and_env(capsys, monkeypatch, image):
    assert run(capsys, "mse", "--a", image, "--b", image, "--threads", "1")[0] == 0
    assert run(capsys, "mse", "--a", image, "--b", image, "--threads", "0")[0] == 1
    monkeypatch.setenv("SPH_INPAINT_THREADS", "1")
    assert run(capsys, "mse", "--a", image, "--b", image)[0] == 0
    monkeypatch.setenv("SPH_INPAINT_THREADS", "many")
    assert run(capsys, "mse", "--a", image, "--b", image)[0] == 1
