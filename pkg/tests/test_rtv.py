import numpy as np
import pytest

from hiresfill.rtv import RTVSolveError, rtv_structure


def test_constant_image_is_fixed_point():
    img = np.full((16, 20, 3), 0.37)
    np.testing.assert_array_equal(rtv_structure(img), img.astype(np.float32))


def test_step_edge_preserved_under_noise():
    rng = np.random.default_rng(0)
    clean = np.zeros((48, 48, 3))
    clean[:, 24:] = 0.8
    clean += 0.1
    noisy = np.clip(clean + rng.uniform(-0.05 * np.sqrt(3), 0.05 * np.sqrt(3), clean.shape), 0, 1)
    out = rtv_structure(noisy)
    away = np.ones(48, bool)
    away[22:26] = False
    assert np.abs(out[:, away] - clean[:, away]).max() <= 0.05


def test_checkerboard_texture_removed():
    yy, xx = np.mgrid[0:48, 0:48]
    board = 0.5 + 0.2 * (((yy + xx) % 2) * 2 - 1)
    img = np.repeat(board[..., None], 3, axis=2)
    out = rtv_structure(img)
    assert np.abs(out - 0.5).max() <= 0.05


def test_output_range_and_shape():
    img = np.random.default_rng(1).random((20, 30, 3))
    out = rtv_structure(img)
    assert out.shape == img.shape and out.dtype == np.float32
    assert out.min() >= 0 and out.max() <= 1


def test_idempotent_on_scene():
    from scenes import make_scene

    img = make_scene(96, 128, seed=3).image
    once = rtv_structure(img)
    twice = rtv_structure(once)
    assert np.abs(twice - once).mean() < 0.01


def test_deterministic():
    img = np.random.default_rng(2).random((24, 24, 3))
    np.testing.assert_array_equal(rtv_structure(img), rtv_structure(img))


def test_bad_arguments_and_nonconvergence():
    img = np.random.default_rng(3).random((24, 24, 3))
    with pytest.raises(ValueError):
        rtv_structure(img[..., 0])
    with pytest.raises(ValueError):
        rtv_structure(img, smoothness=0)
    with pytest.raises(ValueError):
        rtv_structure(img, iterations=0)
    with pytest.raises(RTVSolveError, match="residual"):
        rtv_structure(img, max_cg_iter=1)
