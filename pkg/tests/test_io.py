import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photoninhibit import io
from photoninhibit.model import PhotonCube


@pytest.mark.parametrize("maxval", [255, 65535, 1023])
def test_pgm_roundtrip(tmp_path, maxval):
    img = np.random.default_rng(0).integers(0, maxval + 1, (7, 11))
    path = tmp_path / "x.pgm"
    io.write_pgm(path, img, maxval)
    back, mv = io.read_pgm(path)
    assert mv == maxval
    np.testing.assert_array_equal(back, img)


def test_pgm_header_with_comment(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    img, mv = io.read_pgm(path)
    assert img.tolist() == [[0, 255]] and mv == 255


@pytest.mark.parametrize("data", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n2", b"P5\n0 1\n255\n"])
def test_pgm_errors(tmp_path, data):
    path = tmp_path / "bad.pgm"
    path.write_bytes(data)
    with pytest.raises(io.FormatError):
        io.read_pgm(path)


def test_load_intensity_gamma(tmp_path):
    path = tmp_path / "g.pgm"
    io.write_pgm(path, np.array([[0, 128, 255]]), 255)
    lin = io.load_intensity(path)
    dec = io.load_intensity(path, gamma_decompress=True)
    assert lin[0, 2] == 1.0 and dec[0, 2] == 1.0
    assert dec[0, 1] == pytest.approx((128 / 255) ** 2.2)


def test_rate_image_gamma(tmp_path):
    path = tmp_path / "r.pgm"
    io.write_rate_image(path, np.array([[0.0, 0.25, 1.0]]))
    img, mv = io.read_pgm(path)
    assert mv == 65535
    assert img[0, 1] == round(0.25**0.4 * 65535)


def test_heatmap_constant_and_log(tmp_path):
    path = tmp_path / "h.pgm"
    io.write_heatmap(path, np.full((2, 2), 3.0))
    assert not io.read_pgm(path)[0].any()
    io.write_heatmap(path, np.array([[1.0, 10.0, 100.0]]), log_scale=True, bits=8)
    assert io.read_pgm(path)[0].tolist() == [[0, 128, 255]]


@settings(max_examples=25)
@given(st.integers(1, 5), st.integers(1, 9), st.integers(1, 13), st.integers(0, 2**32 - 1))
def test_cube_roundtrip(tmp_path_factory, n, h, w, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((n, h, w)) < 0.7
    frames = (rng.random((n, h, w)) < 0.5) & mask
    path = tmp_path_factory.mktemp("cube") / "c.pcub"
    io.write_cube(path, PhotonCube(frames, mask))
    back = io.read_cube(path)
    np.testing.assert_array_equal(back.frames, frames)
    np.testing.assert_array_equal(back.mask, mask)


def test_cube_errors(tmp_path):
    path = tmp_path / "c.pcub"
    cube = PhotonCube.unmasked(np.ones((2, 3, 3), bool))
    io.write_cube(path, cube)
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(io.FormatError):
        io.read_cube(path)
    path.write_bytes(raw[:-1])
    with pytest.raises(io.FormatError):
        io.read_cube(path)
    path.write_bytes(raw[:5])
    with pytest.raises(io.FormatError):
        io.read_cube(path)
    # swapping the streams trips the flag check
    io.write_cube(path, cube)
    m = io.mask_path(path)
    a, b = path.read_bytes(), open(m, "rb").read()
    path.write_bytes(b)
    open(m, "wb").write(a)
    with pytest.raises(io.FormatError):
        io.read_cube(path)
    with pytest.raises(OSError):
        io.read_cube(tmp_path / "missing.pcub")


def test_hot_pixel_empty_mask_identity():
    frames = np.random.default_rng(1).random((3, 4, 4)) < 0.5
    np.testing.assert_array_equal(io.hot_pixel_filter(frames, np.zeros((4, 4), bool)), frames)


def test_hot_pixel_surrounded_by_zeros():
    frames = np.zeros((1, 5, 5), bool)
    frames[0, 2, 2] = True
    hot = np.zeros((5, 5), bool)
    hot[2, 2] = True
    assert not io.hot_pixel_filter(frames, hot).any()


def test_hot_pixel_next_to_ones():
    frames = np.zeros((1, 5, 5), bool)
    frames[0, :, :2] = True
    hot = np.zeros((5, 5), bool)
    hot[2, 2] = True
    out = io.hot_pixel_filter(frames, hot)
    # first ring neighbor in row-major order is (1, 1), which is in the ones region
    assert out[0, 2, 2]
    assert io.hot_pixel_sources(hot)[2, 2] == 1 * 5 + 1
    np.testing.assert_array_equal(out[0][~hot], frames[0][~hot])


def test_hot_pixel_cluster_uses_nearest_clean():
    hot = np.zeros((5, 5), bool)
    hot[1:4, 1:4] = True
    src = io.hot_pixel_sources(hot)
    # centre is two rings from the nearest clean pixel, corner (0, 0) first in scan order
    assert src[2, 2] == 0
    assert src[1, 1] == 0


def test_hot_pixel_errors():
    with pytest.raises(ValueError):
        io.hot_pixel_sources(np.ones((3, 3), bool))
    with pytest.raises(ValueError):
        io.hot_pixel_filter(np.zeros((2, 3, 3), bool), np.zeros((4, 4), bool))
