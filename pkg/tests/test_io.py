import numpy as np
import pytest
from PIL import Image

from hiresfill.io import (
    ImageReadError,
    read_labels,
    read_mask,
    read_pfm,
    read_png_raw,
    read_rgb,
    read_scalar_map,
    write_mask,
    write_pfm,
    write_png,
    write_png16,
)


def test_png_roundtrip_exact(tmp_path):
    a = np.random.default_rng(0).integers(0, 256, (7, 9, 3)).astype(np.uint8)
    write_png(tmp_path / "a.png", a.astype(np.float32) / 255)
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "a.png")), a)
    np.testing.assert_allclose(read_rgb(tmp_path / "a.png") * 255, a, atol=1e-4)


def test_rgba_alpha_dropped_and_gray_expanded(tmp_path):
    Image.fromarray(np.full((3, 4, 4), 200, np.uint8)).save(tmp_path / "rgba.png")
    Image.fromarray(np.full((3, 4), 100, np.uint8)).save(tmp_path / "gray.png")
    assert read_rgb(tmp_path / "rgba.png").shape == (3, 4, 3)
    g = read_rgb(tmp_path / "gray.png")
    assert g.shape == (3, 4, 3) and np.allclose(g, 100 / 255)


def test_mask_any_nonzero_is_hole(tmp_path):
    arr = np.zeros((4, 4, 3), np.uint8)
    arr[1, 2, 1] = 1
    Image.fromarray(arr).save(tmp_path / "m.png")
    m = read_mask(tmp_path / "m.png")
    assert m.sum() == 1 and m[1, 2]
    write_mask(tmp_path / "m2.png", m)
    assert np.asarray(Image.open(tmp_path / "m2.png"))[1, 2] == 255
    with pytest.raises(ValueError):
        read_mask(tmp_path / "m.png", (5, 5))


def test_png16_roundtrip(tmp_path):
    a = np.random.default_rng(1).integers(0, 65536, (5, 6)).astype(np.uint16)
    write_png16(tmp_path / "d.png", a)
    np.testing.assert_array_equal(read_png_raw(tmp_path / "d.png"), a)
    np.testing.assert_array_equal(read_scalar_map(tmp_path / "d.png"), a.astype(np.float32))
    np.testing.assert_array_equal(read_labels(tmp_path / "d.png"), a.astype(np.float32))


@pytest.mark.parametrize("shape", [(5, 7), (4, 3, 3)])
def test_pfm_roundtrip(tmp_path, shape):
    a = np.random.default_rng(2).standard_normal(shape).astype(np.float32)
    write_pfm(tmp_path / "a.pfm", a)
    np.testing.assert_array_equal(read_pfm(tmp_path / "a.pfm"), a)


def test_pfm_big_endian_bottom_up(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    with open(tmp_path / "be.pfm", "wb") as f:
        f.write(b"Pf\n3 2\n1.0\n")
        f.write(np.flipud(a).astype(">f4").tobytes())
    np.testing.assert_array_equal(read_pfm(tmp_path / "be.pfm"), a)


def test_unreadable_files(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"not a png")
    with pytest.raises(ImageReadError):
        read_rgb(tmp_path / "bad.png")
    with pytest.raises(OSError):
        read_rgb(tmp_path / "missing.png")
    (tmp_path / "bad.pfm").write_bytes(b"P7\n1 1\n-1\n")
    with pytest.raises(ImageReadError):
        read_pfm(tmp_path / "bad.pfm")


def test_labels_from_red_channel(tmp_path):
    arr = np.zeros((2, 2, 3), np.uint8)
    arr[..., 0] = [[1, 2], [3, 4]]
    arr[..., 1] = 77
    Image.fromarray(arr).save(tmp_path / "s.png")
    np.testing.assert_array_equal(read_labels(tmp_path / "s.png"), [[1, 2], [3, 4]])
