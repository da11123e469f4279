import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hiresfill import patchmatch as pm
from hiresfill.patchmatch import PatchMatchError, PatchParams
from oracles import distance_oracle, exhaustive_nn, gain_bias_oracle, vote_oracle

RGB = np.full(3, 1 / 3)


def noise(seed, h=32, w=32, c=3):
    return np.random.default_rng(seed).random((h, w, c)).astype(np.float32)


def square_hole(h, w, y, x, s):
    m = np.zeros((h, w), bool)
    m[y:y + s, x:x + s] = True
    return m


def test_params_validation():
    with pytest.raises(ValueError):
        PatchParams(patch_size=6)
    with pytest.raises(ValueError):
        PatchParams(patch_size=1)
    with pytest.raises(ValueError):
        PatchParams(search_radius_decay=1.0)
    with pytest.raises(ValueError):
        PatchParams(gain_min=1.2)


def test_identical_patches_zero_distance():
    img = noise(0)
    d, g, b = pm.weighted_patch_distance(img, RGB, (10, 10), (10, 10))
    assert d == 0 and np.all(g == 1) and np.all(b == 0)


def test_gain_compensation_exact():
    img = noise(1) * 0.5 + 0.25
    img[3:10, 20:27] = img[3:10, 3:10] * 0.9  # source = 0.9 * target
    d, g, b = pm.weighted_patch_distance(img, RGB, (6, 6), (23, 6), PatchParams(gain_min=0.8, gain_max=1.2),
                                         gainbias=True)
    assert d < 1e-6
    np.testing.assert_allclose(g, 1 / 0.9, rtol=1e-5)
    np.testing.assert_allclose(b, 0, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_distance_matches_double_loop_with_depth(seed):
    rng = np.random.default_rng(seed)
    stack = rng.random((20, 20, 4)).astype(np.float32)
    w = np.array([0.2, 0.2, 0.2, 0.4])
    t, s = tuple(rng.integers(3, 17, 2)), tuple(rng.integers(3, 17, 2))
    d, _, _ = pm.weighted_patch_distance(stack, w, t, s)
    ref, _, _ = distance_oracle(stack, w, t, s, 3)
    assert abs(d - ref) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_distance_with_labels_and_gainbias(seed):
    rng = np.random.default_rng(seed)
    stack = rng.random((20, 20, 5)).astype(np.float32)
    stack[..., 4] = rng.integers(0, 3, (20, 20))
    w = np.array([0.1, 0.1, 0.1, 0.35, 0.35])
    lab = np.array([False] * 4 + [True])
    t, s = tuple(rng.integers(3, 17, 2)), tuple(rng.integers(3, 17, 2))
    params = PatchParams(mismatch_cost=1.5)
    d, g, b = pm.weighted_patch_distance(stack, w, t, s, params, gainbias=True, is_label=lab)
    ref, rg, rb = distance_oracle(stack, w, t, s, 3, True, lab, 1.5)
    assert abs(d - ref) <= 1e-6
    np.testing.assert_allclose(g, rg, atol=1e-6)
    np.testing.assert_allclose(b, rb, atol=1e-6)


def test_label_mismatch_counts_disagreeing_pixels():
    stack = np.zeros((16, 16, 4), np.float32)
    stack[:, 8:, 3] = 1
    stack[8:, :, 3] = 2
    w = np.array([0.2, 0.2, 0.2, 0.4])
    lab = np.array([False, False, False, True])
    T = stack[4 - 3:4 + 4, 6 - 3:6 + 4, 3]
    S = stack[9 - 3:9 + 4, 9 - 3:9 + 4, 3]
    d, _, _ = pm.weighted_patch_distance(stack, w, (6, 4), (9, 9), is_label=lab)
    assert d == pytest.approx(0.4 * np.count_nonzero(T != S))
    single = stack.copy()
    single[..., 3] = 5
    assert pm.weighted_patch_distance(single, w, (6, 4), (9, 9), is_label=lab)[0] == 0


@given(st.integers(0, 10**6))
def test_gain_bias_fit_matches_bounded_lsq(seed):
    rng = np.random.default_rng(seed)
    s = rng.random(49)
    t = rng.uniform(0.5, 1.5) * s + rng.uniform(-0.2, 0.2) + 0.05 * rng.standard_normal(49)
    bounds = (0.9, 1.1, -0.05, 0.05)
    g, b, e = pm.fit_gain_bias(s.sum(), t.sum(), (s * s).sum(), (s * t).sum(), (t * t).sum(), 49.0, *bounds)
    rg, rb, re = gain_bias_oracle(s, t, bounds)
    assert 0.9 <= g <= 1.1 and -0.05 <= b <= 0.05
    assert e <= re + 1e-9
    assert abs(e - re) <= 1e-8 * max(1.0, re)


def test_distance_errors():
    img = noise(2)
    with pytest.raises(PatchMatchError):
        pm.weighted_patch_distance(img, RGB, (1, 10), (10, 10))
    hole = square_hole(32, 32, 10, 10, 4)
    with pytest.raises(PatchMatchError):
        pm.weighted_patch_distance(img, RGB, (20, 20), (12, 12), hole=hole)


def test_no_valid_source():
    img = noise(3, 12, 12)
    with pytest.raises(PatchMatchError):
        pm.init_nnf(img, square_hole(12, 12, 2, 2, 8), RGB)


def test_single_valid_source_forces_mapping():
    h, w = 16, 7
    img = noise(4, h, w)
    hole = np.zeros((h, w), bool)
    hole[7:, :] = True  # the only hole-free, in-bounds centre is (3, 3)
    valid = pm.valid_source_map(hole, 3)
    assert valid.sum() == 1
    nnf = pm.init_nnf(img, hole, RGB)
    _, _, sy, sx = nnf.source_centers()
    assert set(zip(sy.tolist(), sx.tolist())) == {(3, 3)}


def test_init_is_seeded():
    img, hole = noise(5), square_hole(32, 32, 12, 12, 8)
    a = pm.init_nnf(img, hole, RGB, PatchParams(rng_seed=9))
    b = pm.init_nnf(img, hole, RGB, PatchParams(rng_seed=9))
    np.testing.assert_array_equal(a.dx, b.dx)
    np.testing.assert_array_equal(a.dist, b.dist)


def test_prior_upsampled_when_valid():
    img, hole = noise(6, 64, 64), square_hole(64, 64, 24, 24, 16)
    coarse_img = img[::2, ::2].copy()
    coarse_hole = hole[::2, ::2].copy()
    prior = pm.patchmatch(coarse_img, coarse_hole, RGB)
    fine = pm.init_nnf(img, hole, RGB, prior=prior)
    _, dx, dy, have, _ = pm.upsample_prior(prior, hole, 3)
    assert have.any()
    t = fine.targets & have
    np.testing.assert_array_equal(fine.dx[t], dx[t])
    jj, ii = np.nonzero(t)
    cj = (jj + fine.y0) // 2 - prior.y0
    ci = (ii + fine.x0) // 2 - prior.x0
    np.testing.assert_array_equal(fine.dx[jj, ii], 2 * prior.dx[cj, ci])
    np.testing.assert_array_equal(fine.dy[jj, ii], 2 * prior.dy[cj, ci])


def test_sweeps_monotone_and_valid():
    img, hole = noise(7), square_hole(32, 32, 12, 12, 8)
    nnf = pm.init_nnf(img, hole, RGB)
    prev = nnf.dist.copy()
    for it in range(6):
        pm.pm_iterate(nnf, img, hole, RGB, iteration=it)
        assert np.all(nnf.dist[nnf.targets] <= prev[nnf.targets])
        assert pm.field_violations(nnf, hole, 3) == 0
        prev = nnf.dist.copy()


def test_optimal_field_is_fixed_point():
    img, hole = noise(8), square_hole(32, 32, 12, 12, 8)
    nnf = pm.patchmatch(img, hole, RGB, PatchParams(pm_iterations=30))
    before = nnf.dist.copy()
    pm.pm_iterate(nnf, img, hole, RGB, iteration=3)
    assert np.all(nnf.dist[nnf.targets] <= before[nnf.targets])


def test_adversarial_field_strictly_improves():
    img, hole = noise(9), square_hole(32, 32, 12, 12, 8)
    nnf = pm.init_nnf(img, hole, RGB)
    # point every target at the source patch that is worst for its own centre
    valid = pm.valid_source_map(hole, 3)
    vy, vx = np.nonzero(valid)
    ys, xs, _, _ = nnf.source_centers()
    jj, ii = ys - nnf.y0, xs - nnf.x0
    nnf.dx[jj, ii] = vx[-1] - xs
    nnf.dy[jj, ii] = vy[-1] - ys
    pm.refresh_distances(nnf, img, RGB, PatchParams(), False)
    before = nnf.total_distance()
    pm.pm_iterate(nnf, img, hole, RGB)
    assert nnf.total_distance() < before


@pytest.mark.parametrize("seed", range(10))
def test_converges_near_exhaustive_optimum(seed):
    rng = np.random.default_rng(100 + seed)
    img = rng.random((32, 32, 3)).astype(np.float32)
    y, x = rng.integers(0, 25, 2)
    hole = square_hole(32, 32, y, x, 8)
    nnf = pm.patchmatch(img, hole, RGB, PatchParams(rng_seed=seed))
    opt = exhaustive_nn(img, hole, 3, pm.valid_source_map(hole, 3), nnf_targets_full(nnf))
    assert nnf.mean_distance() <= 1.1 * opt.mean()


def nnf_targets_full(nnf):
    full = np.zeros((nnf.height, nnf.width), bool)
    bh, bw = nnf.targets.shape
    full[nnf.y0:nnf.y0 + bh, nnf.x0:nnf.x0 + bw] = nnf.targets
    return full


@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 12))
def test_validity_and_cache_coherence(seed, hh, hw):
    rng = np.random.default_rng(seed)
    img = rng.random((28, 30, 3)).astype(np.float32)
    hole = np.zeros((28, 30), bool)
    y, x = rng.integers(0, 28 - hh + 1), rng.integers(0, 30 - hw + 1)
    hole[y:y + hh, x:x + hw] = True
    hole |= rng.random((28, 30)) < 0.01
    if not pm.valid_source_map(hole, 3).any():
        return
    gb = bool(seed % 2)
    nnf = pm.patchmatch(img, hole, RGB, PatchParams(rng_seed=seed, pm_iterations=2), gainbias=gb)
    assert pm.field_violations(nnf, hole, 3) == 0
    g, b = nnf.gain[nnf.targets], nnf.bias[nnf.targets]
    assert np.all((g >= 0.9) & (g <= 1.1)) and np.all((b >= -0.05) & (b <= 0.05))
    ys, xs, sy, sx = nnf.source_centers()
    for k in range(0, len(ys), max(1, len(ys) // 15)):
        d, _, _ = pm.weighted_patch_distance(img, RGB, (xs[k], ys[k]), (sx[k], sy[k]), gainbias=gb)
        assert d == pytest.approx(nnf.dist[ys[k] - nnf.y0, xs[k] - nnf.x0], rel=1e-9, abs=1e-12)


def test_targets_cover_hole_band():
    hole = square_hole(20, 20, 8, 8, 3)
    t = pm.target_map(hole, 3)
    assert t[5:14, 5:14].all() and t.sum() == 81


@pytest.mark.parametrize("gainbias", [False, True])
def test_vote_matches_accumulation_oracle(gainbias):
    img, hole = noise(10, 24, 24), square_hole(24, 24, 8, 9, 6)
    nnf = pm.patchmatch(img, hole, RGB, gainbias=gainbias)
    expected = vote_oracle(img, hole, nnf, 3, gainbias)
    out = img.copy()
    pm.vote(nnf, out, hole, PatchParams(), gainbias)
    np.testing.assert_allclose(out, expected, atol=1e-6)
    np.testing.assert_array_equal(out[~hole], img[~hole])


def test_vote_of_agreeing_patches_is_that_value():
    img = np.full((24, 24, 3), 0.25, np.float32)
    hole = square_hole(24, 24, 9, 9, 5)
    img[hole] = 0.9
    nnf = pm.init_nnf(img, hole, RGB)
    pm.vote(nnf, img, hole, PatchParams(), False)
    np.testing.assert_allclose(img[hole], 0.25)


def test_weighted_vote_keeps_outside_and_stays_in_source_hull():
    img, hole = noise(11, 24, 24), square_hole(24, 24, 8, 8, 6)
    nnf = pm.patchmatch(img, hole, RGB)
    out = img.copy()
    pm.vote(nnf, out, hole, PatchParams(), False, weighted=True)
    np.testing.assert_array_equal(out[~hole], img[~hole])
    src = img[~hole]
    assert np.all(out[hole] >= src.min(axis=0) - 1e-6) and np.all(out[hole] <= src.max(axis=0) + 1e-6)


def test_dump_roundtrip(tmp_path):
    img, hole = noise(12, 20, 22), square_hole(20, 22, 7, 8, 5)
    nnf = pm.patchmatch(img, hole, RGB)
    nnf.dump(tmp_path / "f.nnf")
    raw = (tmp_path / "f.nnf").read_bytes()
    assert len(raw) == 8 + 20 * 22 * 12
    assert np.frombuffer(raw[:8], "<i4").tolist() == [22, 20]
    dx, dy, d = pm.load_nnf_dump(tmp_path / "f.nnf")
    full = nnf_targets_full(nnf)
    assert np.all(d[~full] == -1.0)
    ys, xs, sy, sx = nnf.source_centers()
    np.testing.assert_array_equal(dx[ys, xs], sx - xs)
    np.testing.assert_array_equal(dy[ys, xs], sy - ys)
    np.testing.assert_allclose(d[ys, xs], nnf.dist[ys - nnf.y0, xs - nnf.x0].astype(np.float32))
