import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from pdemask.bench import synthetic_image
from pdemask.cli import main
from pdemask.grid import laplacian
from pdemask.io import load_image, load_mask, save_image, save_mask
from pdemask.preprocess import add_salt_pepper
from pdemask.selection import criterion, mask_hard_threshold


@pytest.fixture
def img(tmp_path):
    p = tmp_path / "in.pgm"
    save_image(synthetic_image(64), p)
    return p


def test_mask_l2h_budget(tmp_path, img):
    out = tmp_path / "m.pbm"
    assert main(["mask", str(img), str(out), "--method", "l2h", "--budget", "0.10"]) == 0
    m = load_mask(out)
    assert abs(m.sum() - 0.1 * m.size) <= 0.001 * m.size + 1
    meta = json.loads((tmp_path / "m.pbm.json").read_text())
    assert meta["method"] == "L2-H" and meta["mask_count"] == m.sum()


def test_mask_sharpen_default_beta(tmp_path, img):
    out = tmp_path / "m.png"
    assert main(["mask", str(img), str(out), "--method", "l2t", "--variant", "sharpen"]) == 0
    f = load_image(img)
    c = np.abs(laplacian(f - 0.18 * laplacian(f)))
    assert np.array_equal(load_mask(out), mask_hard_threshold(c, 0.1))
    assert np.allclose(c, criterion(f, "sharpen", 0.18))
    assert json.loads((tmp_path / "m.png.json").read_text())["beta"] == 0.18


def test_mask_rand_deterministic(tmp_path, img):
    a, b = tmp_path / "a.pbm", tmp_path / "b.pbm"
    for p in (a, b):
        assert main(["mask", str(img), str(p), "--method", "rand", "--seed", "7"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_mask_btree_and_ring(tmp_path, img):
    out = tmp_path / "m.pbm"
    assert main(["mask", str(img), str(out), "--method", "btree", "--threshold", "20", "--boundary-ring"]) == 0
    m = load_mask(out)
    assert m[0].all() and m[:, -1].all()
    assert json.loads((tmp_path / "m.pbm.json").read_text())["threshold"] == 20.0


def test_inpaint_full_mask_exact(tmp_path, img):
    mask = tmp_path / "full.pbm"
    save_mask(np.ones((64, 64), bool), mask)
    out = tmp_path / "u.pgm"
    assert main(["inpaint", str(img), str(mask), str(out)]) == 0
    assert out.read_bytes()[-64 * 64:] == img.read_bytes()[-64 * 64:]


def test_inpaint_diffusion_equals_elliptic(tmp_path, img):
    mask = tmp_path / "m.pbm"
    main(["mask", str(img), str(mask), "--method", "rand", "--budget", "0.2"])
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    assert main(["inpaint", str(img), str(mask), str(a), "--decoder", "diffusion", "--steps", "1", "--dt", "1.0"]) == 0
    assert main(["inpaint", str(img), str(mask), str(b), "--decoder", "elliptic", "--alpha", "1.0"]) == 0
    assert np.max(np.abs(load_image(a) - load_image(b))) <= 1 / 255


def test_inpaint_l1_on_salt_pepper(tmp_path, img):
    clean = load_image(img)
    noisy = tmp_path / "noisy.png"
    save_image(add_salt_pepper(clean, 0.01, 0.01, 3), noisy)
    mask = tmp_path / "m.pbm"
    main(["mask", str(noisy), str(mask), "--method", "l2h"])
    errs = {}
    for dec in ("elliptic", "l1"):
        out = tmp_path / f"{dec}.png"
        assert main(["inpaint", str(noisy), str(mask), str(out), "--decoder", dec, "--alpha", "10",
                     "--reference", str(img)]) == 0
        errs[dec] = json.loads((tmp_path / f"{dec}.png.json").read_text())["error_rms255"]
    assert errs["l1"] < errs["elliptic"]


def test_inpaint_harmonic_flag(tmp_path, img):
    mask = tmp_path / "m.pbm"
    main(["mask", str(img), str(mask)])
    out = tmp_path / "u.png"
    assert main(["inpaint", str(img), str(mask), str(out), "--alpha", "inf"]) == 0
    assert json.loads((tmp_path / "u.png.json").read_text())["alpha"] == "inf"


def test_noise(tmp_path, capsys):
    gray = tmp_path / "g.png"
    save_image(np.full((256, 256), 128 / 255), gray)
    out = tmp_path / "n.png"
    assert main(["noise", str(gray), str(out), "--gaussian", "0"]) == 0
    assert np.array_equal(load_image(out), load_image(gray))
    assert main(["noise", str(gray), str(out), "--gaussian", "0.03", "--seed", "1"]) == 0
    reported = float(capsys.readouterr().out.strip().split()[-1])
    assert abs(reported - 7.65) < 0.15
    out2 = tmp_path / "n2.png"
    main(["noise", str(gray), str(out2), "--gaussian", "0.03", "--seed", "1"])
    assert out.read_bytes() == out2.read_bytes()
    assert main(["noise", str(gray), str(out), "--saltpepper", "0.01", "0.02"]) == 0


def test_bench_single_row(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"images": ["synthetic:32"], "methods": ["L2-H"], "sigmas": [0.0],
                                "budgets": [0.1], "seeds": [0]}))
    assert main(["bench", str(conf), str(tmp_path / "out")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "results.csv")))
    assert len(rows) == 1


def test_theory_topo_zero(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["theory", "--experiment", "topo", "--g", "0", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert rows and all(float(r["j_diff"]) == 0 for r in rows)


def test_theory_theta_decreasing(tmp_path):
    out = tmp_path / "th.csv"
    assert main(["theory", "--experiment", "theta", "--m", "0.1,0.2,0.3", "--k", "2",
                 "--grid-n", "96", "--out", str(out)]) == 0
    vals = [float(r["theta_hat"]) for r in csv.DictReader(open(out))]
    assert vals[0] > vals[1] > vals[2]


@pytest.mark.parametrize(
    "argv,code",
    [
        (["mask", "IN", "OUT", "--budget", "1.5"], 2),
        (["mask", "IN", "OUT", "--method", "foo"], 2),
        (["inpaint", "IN", "M", "OUT", "--alpha", "-1"], 2),
        (["noise", "IN", "OUT", "--gaussian", "-0.1"], 2),
        (["theory", "--experiment", "topo", "--eps", "1e-6", "--out", "OUT"], 2),
    ],
)
def test_exit_code_usage(tmp_path, img, argv, code):
    argv = [str(img) if a == "IN" else str(tmp_path / "o.pbm") if a in ("OUT", "M") else a for a in argv]
    if code == 2 and any(a.startswith("--") and a in ("--budget", "--method", "--alpha", "--gaussian") for a in argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    else:
        assert main(argv) == code


def test_exit_code_io(tmp_path):
    assert main(["mask", str(tmp_path / "missing.pgm"), str(tmp_path / "m.pbm")]) == 3
    assert main(["bench", str(tmp_path / "missing.json"), str(tmp_path / "o")]) == 3


def test_exit_code_numerical(tmp_path, img):
    mask = tmp_path / "m.pbm"
    main(["mask", str(img), str(mask)])
    assert main(["inpaint", str(img), str(mask), str(tmp_path / "u.png"), "--max-iter", "1"]) == 4


def test_mask_shape_mismatch_is_usage_error(tmp_path, img):
    mask = tmp_path / "m.pbm"
    save_mask(np.ones((10, 10), bool), mask)
    assert main(["inpaint", str(img), str(mask), str(tmp_path / "u.png")]) == 2


def test_help_lists_defaults():
    out = subprocess.run([sys.executable, "-m", "pdemask.cli", "mask", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "default: 0.1" in out.stdout and "0.18" in out.stdout and "1.2" in out.stdout
    out = subprocess.run([sys.executable, "-m", "pdemask.cli", "inpaint", "--help"], capture_output=True, text=True)
    assert "default: 1.0" in out.stdout and "1e-08" in out.stdout
