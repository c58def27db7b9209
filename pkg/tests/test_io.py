import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from pdemask.grid import InvalidInputError
from pdemask.io import ImageIOError, load_image, load_mask, save_image, save_mask, write_sidecar


@pytest.mark.parametrize("suffix", [".pgm", ".png"])
def test_gray_roundtrip_bytes(tmp_path, rng, suffix):
    b = rng.integers(0, 256, (13, 17)).astype(np.uint8)
    p = tmp_path / f"a{suffix}"
    save_image(b / 255.0, p)
    img = load_image(p)
    assert img.shape == (13, 17)
    assert np.array_equal(np.rint(img * 255).astype(np.uint8), b)


@pytest.mark.parametrize("suffix", [".ppm", ".png"])
def test_rgb_roundtrip(tmp_path, rng, suffix):
    b = rng.integers(0, 256, (6, 5, 3)).astype(np.uint8)
    p = tmp_path / f"a{suffix}"
    save_image(b / 255.0, p)
    assert np.array_equal(load_image(p), b / 255.0)


def test_save_clamps(tmp_path):
    p = tmp_path / "c.png"
    save_image(np.array([[-0.5, 0.5, 1.5]] * 3), p)
    assert np.array_equal(np.asarray(Image.open(p))[0], [0, 128, 255])


@pytest.mark.parametrize("suffix", [".pbm", ".png"])
def test_mask_roundtrip(tmp_path, rng, suffix):
    m = rng.random((11, 9)) < 0.3
    p = tmp_path / f"m{suffix}"
    save_mask(m, p)
    assert np.array_equal(load_mask(p, m.shape), m)


def test_pbm_set_bit_means_stored(tmp_path):
    m = np.zeros((4, 8), dtype=bool)
    m[0, 0] = True
    p = tmp_path / "m.pbm"
    save_mask(m, p)
    raw = p.read_bytes()
    # P4 header, then one byte per row; the first pixel is the high bit
    assert raw.startswith(b"P4")
    assert raw[-4:] == bytes([0x80, 0, 0, 0])


def test_mask_shape_mismatch(tmp_path):
    p = tmp_path / "m.png"
    save_mask(np.ones((4, 4), dtype=bool), p)
    with pytest.raises(InvalidInputError):
        load_mask(p, (4, 5))


def test_mask_png_rejects_gray_levels(tmp_path):
    p = tmp_path / "m.png"
    Image.fromarray(np.full((4, 4), 7, np.uint8)).save(p)
    with pytest.raises(ImageIOError):
        load_mask(p)


def test_io_errors(tmp_path):
    with pytest.raises(ImageIOError):
        load_image(tmp_path / "missing.png")
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(ImageIOError):
        load_image(bad)
    with pytest.raises(ImageIOError):
        save_image(np.zeros((3, 3)), tmp_path / "x.jpg")
    with pytest.raises(ImageIOError):
        save_image(np.full((3, 3), np.nan), tmp_path / "x.png")
    la = tmp_path / "alpha.png"
    Image.new("LA", (3, 3)).save(la)
    with pytest.raises(ImageIOError):
        load_image(la)


def test_sidecar(tmp_path):
    side = write_sidecar(tmp_path / "x.pbm", {"b": 1, "a": [1, 2]})
    assert side.name == "x.pbm.json"
    assert json.loads(side.read_text()) == {"a": [1, 2], "b": 1}


@settings(max_examples=25, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_quantised_roundtrip_property(tmp_path_factory, b):
    p = tmp_path_factory.mktemp("h") / "a.pgm"
    save_image(b / 255.0, p)
    assert np.array_equal(load_image(p), b / 255.0)


@settings(max_examples=25, deadline=None)
@given(arrays(np.bool_, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_mask_roundtrip_property(tmp_path_factory, m):
    p = tmp_path_factory.mktemp("h") / "m.pbm"
    save_mask(m, p)
    assert np.array_equal(load_mask(p), m)
