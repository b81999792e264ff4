import numpy as np
import pytest

from defocuskit.errors import InputError
from defocuskit.image import (Image, load_image, load_map, save_image,
                              save_map, to_grayscale, value_channel)


def test_value_channel_is_per_pixel_max():
    img = Image(np.dstack([np.full((2, 2), 1.0), np.zeros((2, 2)), np.zeros((2, 2))]))
    assert np.all(value_channel(img).data == 1.0)


def test_value_channel_on_gray_pixels_is_identity():
    v = np.linspace(0, 1, 16).reshape(4, 4)
    img = Image(np.dstack([v, v, v]))
    assert np.allclose(value_channel(img).data, v)


def test_value_channel_matches_scalar_max_oracle():
    rng = np.random.default_rng(11)
    data = rng.random((4, 4, 3))
    out = value_channel(Image(data)).data
    for y in range(4):
        for x in range(4):
            assert out[y, x] == max(data[y, x, 0], data[y, x, 1], data[y, x, 2])


def test_value_channel_idempotent_on_replication():
    rng = np.random.default_rng(21)
    v = value_channel(Image(rng.random((6, 6, 3))))
    again = value_channel(v.to_rgb())
    assert np.array_equal(again.data, v.data)


def test_value_channel_invariant_under_channel_permutation():
    rng = np.random.default_rng(5)
    data = rng.random((3, 5, 3))
    base = value_channel(Image(data)).data
    permuted = value_channel(Image(data[:, :, [2, 0, 1]])).data
    assert np.array_equal(base, permuted)


def test_grayscale_differs_under_channel_permutation():
    rng = np.random.default_rng(6)
    data = rng.random((3, 5, 3))
    a = to_grayscale(Image(data)).data
    b = to_grayscale(Image(data[:, :, [2, 0, 1]])).data
    assert not np.allclose(a, b)


def test_grayscale_weights():
    assert to_grayscale(Image(np.ones((1, 1, 3)))).data[0, 0] == pytest.approx(1.0)
    assert to_grayscale(Image(np.zeros((1, 1, 3)))).data[0, 0] == 0.0
    red = np.zeros((1, 1, 3))
    red[0, 0, 0] = 1.0
    assert to_grayscale(Image(red)).data[0, 0] == pytest.approx(0.299)


def test_channel_checks_raise():
    gray = Image(np.zeros((2, 2)))
    with pytest.raises(InputError):
        value_channel(gray)
    with pytest.raises(InputError):
        to_grayscale(gray)


def test_image_rejects_bad_shapes_and_nan():
    with pytest.raises(InputError):
        Image(np.zeros((2, 2, 2)))
    with pytest.raises(InputError):
        Image(np.array([[np.nan, 0.0]]))


def test_image_clamps_and_freezes():
    img = Image(np.array([[1.5, -0.25]]))
    assert img.data[0, 0] == 1.0 and img.data[0, 1] == 0.0
    with pytest.raises(ValueError):
        img.data[0, 0] = 0.5


@pytest.mark.parametrize("ext", [".ppm", ".png"])
def test_rgb_round_trip_is_exact_after_quantization(tmp_path, ext):
    rng = np.random.default_rng(0)
    img = Image(rng.random((5, 7, 3)))
    path = tmp_path / f"img{ext}"
    save_image(img, str(path))
    once = load_image(str(path))
    save_image(once, str(path))
    again = load_image(str(path))
    assert np.array_equal(once.data, again.data)


def test_ppm_double_save_identical_bytes(tmp_path):
    img = Image(np.array([[[0.1, 0.5, 0.9], [0.0, 1.0, 0.25]],
                          [[0.3, 0.6, 0.2], [0.8, 0.4, 0.7]]]))
    p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
    save_image(img, str(p1))
    save_image(load_image(str(p1)), str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_16bit_pgm_full_scale(tmp_path):
    img = Image(np.array([[1.0, 0.0], [0.5, 1.0]]))
    path = tmp_path / "img.pgm"
    save_image(img, str(path), maxval=65535)
    back = load_image(str(path))
    assert back.data[0, 0] == 1.0
    assert back.data[0, 1] == 0.0


def test_8bit_scaling_definition(tmp_path):
    img = Image(np.array([[128.0 / 255.0]]))
    path = tmp_path / "img.pgm"
    save_image(img, str(path))
    assert load_image(str(path)).data[0, 0] == 128.0 / 255.0


def test_load_rejects_unknown_and_truncated(tmp_path):
    bad = tmp_path / "x.pgm"
    bad.write_bytes(b"NOTPNM")
    with pytest.raises(InputError):
        load_image(str(bad))
    trunc = tmp_path / "y.pgm"
    trunc.write_bytes(b"P5\n4 4\n255\nab")
    with pytest.raises(InputError):
        load_image(str(trunc))
    with pytest.raises(InputError):
        load_image(str(tmp_path / "missing.png"))


def test_float_map_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    values = rng.random((6, 4)) * 2.0
    path = tmp_path / "m.dfkmap"
    save_map(values, str(path))
    back = load_map(str(path))
    assert back.shape == (6, 4)
    assert np.array_equal(back, values.astype(np.float32).astype(np.float64))
    save_map(back, str(path))
    assert np.array_equal(load_map(str(path)), back)


def test_float_map_header(tmp_path):
    path = tmp_path / "m.dfkmap"
    save_map(np.zeros((2, 3)), str(path))
    payload = path.read_bytes()
    assert payload[:8] == b"DFKMAP01"
    assert len(payload) == 16 + 4 * 6
    with pytest.raises(InputError):
        load_map(__file__)
